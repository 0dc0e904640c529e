"""Problem description files.

The format is a flat key-value tree::

    # comments start with '#'
    order = first
    dirichlet = 0.963212, 0.728172

    [network]
    rays = 2
    length = 1.0

    [hamiltonian]          # default for every ray
    family = eikonal
    parameters = 1, 1
    source = 1

    [hamiltonian.2]        # optional override for ray 2
    ...

    [kirchhoff]
    family = linear
    parameters = 1, 1, 0, 0    # gamma_1..gamma_I, beta, c0

    [solver]
    nodes = 100
    tolerance = 1e-10
    max_sweeps = 1000000

Keys before the first section header are top-level. Arrays are
comma-separated. Errors carry the 1-based line and column.
"""
from __future__ import annotations

import re
from dataclasses import dataclass, replace

from .errors import DomainError
from .expr import Expr, ExprSyntaxError, parse_expr
from .hamiltonian import FAMILY_ARITY, HamiltonianSet, linear_kirchhoff, make_hamiltonian
from .network import StarNetwork
from .solver import STENCILS, Grid, Problem, SolverConfig

KIRCHHOFF_FAMILIES = ("linear",)

_KEYS = {
    "": {"order", "dirichlet", "seed"},
    "network": {"rays", "length"},
    "hamiltonian": {"family", "parameters", "source"},
    "kirchhoff": {"family", "parameters"},
    "solver": {"nodes", "tolerance", "max_sweeps", "stencil"},
}
_SECTION = re.compile(r"\[\s*([A-Za-z_]+)(?:\.(\d+))?\s*\]$")
_KEY = re.compile(r"[A-Za-z_]\w*$")


class ConfigError(ValueError):
    """Parse or validation error, located at ``line``/``column`` when known."""

    def __init__(self, message, line=None, column=None):
        where = f"line {line}, column {column}: " if line is not None else ""
        super().__init__(where + message)
        self.line = line
        self.column = column


@dataclass(frozen=True)
class _Value:
    text: str
    line: int
    column: int


@dataclass(frozen=True)
class RaySpec:
    family: str
    parameters: tuple
    source: Expr


@dataclass(frozen=True)
class ProblemConfig:
    rays: int
    length: float
    hamiltonians: tuple  # one RaySpec per ray
    kirchhoff_family: str
    kirchhoff_parameters: tuple
    dirichlet: tuple
    order: str
    nodes: int = 100
    tolerance: float = 1e-10
    max_sweeps: int = 1_000_000
    stencil: str = "auto"
    seed: int = 0

    def network(self):
        return StarNetwork(self.rays, self.length)

    def problem(self) -> Problem:
        H = HamiltonianSet.from_builtins(
            [make_hamiltonian(r.family, r.parameters, r.source) for r in self.hamiltonians],
            self.length,
        )
        g = self.kirchhoff_parameters
        F = linear_kirchhoff(g[:self.rays], g[self.rays], g[self.rays + 1])
        return Problem(self.network(), H, F, self.dirichlet, self.order)

    def grid(self, nodes=None) -> Grid:
        return Grid.on(self.network(), nodes or self.nodes, self.stencil)

    def solver_config(self, **overrides) -> SolverConfig:
        return SolverConfig(tolerance=self.tolerance, max_sweeps=self.max_sweeps, **overrides)

    def with_overrides(self, seed=None, tolerance=None):
        cfg = self
        if seed is not None:
            cfg = replace(cfg, seed=int(seed))
        if tolerance is not None:
            if not tolerance > 0:
                raise ConfigError("tolerance must be positive")
            cfg = replace(cfg, tolerance=float(tolerance))
        return cfg


def _numbers(v: _Value, kind=float):
    items = [s for s in v.text.split(",")]
    out, col = [], v.column
    for s in items:
        stripped = s.strip()
        at = col + len(s) - len(s.lstrip())
        try:
            if kind is int:
                x = int(stripped)
            else:
                x = float(stripped)
        except ValueError:
            raise ConfigError(f"expected {'an integer' if kind is int else 'a number'}, "
                              f"found {stripped!r}", v.line, at) from None
        out.append(x)
        col += len(s) + 1
    return out


def _scalar(v, kind=float):
    vals = _numbers(v, kind)
    if len(vals) != 1:
        raise ConfigError("expected a single value", v.line, v.column)
    return vals[0]


def _tree(text):
    """Raw ``{section: {key: _Value}}``; per-ray sections are keyed ``hamiltonian.i``."""
    tree = {"": {}}
    section = ""
    for n, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].rstrip()
        if not line.strip():
            continue
        indent = len(line) - len(line.lstrip())
        body = line.strip()
        if body.startswith("["):
            m = _SECTION.match(body)
            if not m:
                raise ConfigError(f"malformed section header {body!r}", n, indent + 1)
            name, ray = m.group(1), m.group(2)
            if name not in _KEYS or name == "" or (ray is not None and name != "hamiltonian"):
                raise ConfigError(f"unknown section [{body[1:-1].strip()}]", n, indent + 1)
            section = name if ray is None else f"{name}.{int(ray)}"
            if section in tree:
                raise ConfigError(f"duplicate section [{section}]", n, indent + 1)
            tree[section] = {}
            continue
        if "=" not in body:
            raise ConfigError("expected 'key = value' or a [section] header", n, indent + 1)
        key_part, value_part = line.split("=", 1)
        key = key_part.strip()
        if not _KEY.match(key):
            raise ConfigError(f"invalid key {key!r}", n, indent + 1)
        allowed = _KEYS[section.split(".")[0]]
        if key not in allowed:
            label = f"[{section}]" if section else "top level"
            raise ConfigError(f"unknown key {key!r} in {label}", n, indent + 1)
        if key in tree[section]:
            raise ConfigError(f"duplicate key {key!r}", n, indent + 1)
        value = value_part.strip()
        column = len(key_part) + 2 + len(value_part) - len(value_part.lstrip())
        if not value:
            raise ConfigError(f"empty value for {key!r}", n, column)
        tree[section][key] = _Value(value, n, column)
    return tree


def _require(tree, section, key):
    try:
        return tree[section][key]
    except KeyError:
        where = f"section [{section}]" if section else "the top level"
        raise ConfigError(f"missing key {key!r} in {where}") from None


def _ray_spec(entries, ray, default):
    family_v = entries.get("family") or default.get("family")
    if family_v is None:
        raise ConfigError(f"missing key 'family' for the Hamiltonian of ray {ray}")
    family = family_v.text
    if family not in FAMILY_ARITY:
        raise ConfigError(f"unknown Hamiltonian family {family!r}", family_v.line, family_v.column)
    params_v = entries.get("parameters") or default.get("parameters")
    if params_v is None:
        raise ConfigError(f"missing key 'parameters' for the Hamiltonian of ray {ray}")
    params = _numbers(params_v)
    if len(params) != FAMILY_ARITY[family]:
        raise ConfigError(f"family {family!r} takes {FAMILY_ARITY[family]} parameters, "
                          f"got {len(params)}", params_v.line, params_v.column)
    source_v = entries.get("source") or default.get("source")
    if source_v is None:
        source = parse_expr("0")
    else:
        try:
            source = parse_expr(source_v.text)
        except ExprSyntaxError as e:
            raise ConfigError(f"in source expression: {e}", source_v.line,
                              source_v.column + e.position) from None
    try:
        make_hamiltonian(family, params, source)
    except DomainError as e:
        raise ConfigError(str(e), params_v.line, params_v.column) from None
    return RaySpec(family, tuple(params), source)


def parse_config(text: str) -> ProblemConfig:
    """Parse and validate a problem description."""
    tree = _tree(text)
    rays_v = _require(tree, "network", "rays")
    rays = _scalar(rays_v, int)
    if rays < 2:
        raise ConfigError(f"a star network needs at least 2 rays, got {rays}",
                          rays_v.line, rays_v.column)
    length_v = _require(tree, "network", "length")
    length = _scalar(length_v)
    if not length > 0:
        raise ConfigError("ray length must be positive", length_v.line, length_v.column)

    for section in tree:
        if section.startswith("hamiltonian."):
            ray = int(section.split(".")[1])
            if not 1 <= ray <= rays:
                raise ConfigError(f"section [{section}] names a ray outside 1..{rays}")
    default = tree.get("hamiltonian", {})
    specs = tuple(_ray_spec(tree.get(f"hamiltonian.{i}", {}), i, default)
                  for i in range(1, rays + 1))

    fam_v = _require(tree, "kirchhoff", "family")
    if fam_v.text not in KIRCHHOFF_FAMILIES:
        raise ConfigError(f"unknown Kirchhoff family {fam_v.text!r}", fam_v.line, fam_v.column)
    kp_v = _require(tree, "kirchhoff", "parameters")
    kparams = _numbers(kp_v)
    if len(kparams) != rays + 2:
        raise ConfigError(f"Kirchhoff family 'linear' takes {rays + 2} parameters "
                          f"(gamma_1..gamma_{rays}, beta, c0), got {len(kparams)}",
                          kp_v.line, kp_v.column)
    if min(kparams[:rays]) <= 0 or kparams[rays] < 0:
        raise ConfigError("linear Kirchhoff needs every gamma_i > 0 and beta >= 0",
                          kp_v.line, kp_v.column)

    dir_v = _require(tree, "", "dirichlet")
    dirichlet = _numbers(dir_v)
    if len(dirichlet) != rays:
        raise ConfigError(f"need {rays} Dirichlet values, got {len(dirichlet)}",
                          dir_v.line, dir_v.column)

    first = all(FAMILY_ARITY[s.family] == 2 for s in specs)
    order_v = tree[""].get("order")
    order = order_v.text if order_v else ("first" if first else "second")
    if order not in ("first", "second"):
        raise ConfigError(f"order must be 'first' or 'second', got {order!r}",
                          order_v.line, order_v.column)
    if order == "first" and not first:
        raise ConfigError("order = first but a ray has a second-order Hamiltonian",
                          order_v.line, order_v.column)

    solver = tree.get("solver", {})
    kwargs = {}
    if "nodes" in solver:
        kwargs["nodes"] = _scalar(solver["nodes"], int)
        if kwargs["nodes"] < 2:
            v = solver["nodes"]
            raise ConfigError("need at least 2 nodes per ray", v.line, v.column)
    if "tolerance" in solver:
        kwargs["tolerance"] = _scalar(solver["tolerance"])
        if not kwargs["tolerance"] > 0:
            v = solver["tolerance"]
            raise ConfigError("tolerance must be positive", v.line, v.column)
    if "max_sweeps" in solver:
        kwargs["max_sweeps"] = _scalar(solver["max_sweeps"], int)
    if "stencil" in solver:
        v = solver["stencil"]
        if v.text not in STENCILS:
            raise ConfigError(f"stencil must be one of {STENCILS}", v.line, v.column)
        kwargs["stencil"] = v.text
    if "seed" in tree[""]:
        kwargs["seed"] = _scalar(tree[""]["seed"], int)
    return ProblemConfig(rays, length, specs, fam_v.text, tuple(kparams), tuple(dirichlet),
                         order, **kwargs)


def _join(values):
    return ", ".join(repr(float(v)) for v in values)


def serialize_config(cfg: ProblemConfig) -> str:
    """Text that :func:`parse_config` reads back to an equal config."""
    out = [
        f"order = {cfg.order}",
        f"dirichlet = {_join(cfg.dirichlet)}",
        f"seed = {cfg.seed}",
        "",
        "[network]",
        f"rays = {cfg.rays}",
        f"length = {float(cfg.length)!r}",
    ]
    for i, r in enumerate(cfg.hamiltonians, start=1):
        out += ["", f"[hamiltonian.{i}]", f"family = {r.family}",
                f"parameters = {_join(r.parameters)}", f"source = {r.source}"]
    out += [
        "", "[kirchhoff]", f"family = {cfg.kirchhoff_family}",
        f"parameters = {_join(cfg.kirchhoff_parameters)}",
        "", "[solver]", f"nodes = {cfg.nodes}", f"tolerance = {float(cfg.tolerance)!r}",
        f"max_sweeps = {cfg.max_sweeps}", f"stencil = {cfg.stencil}",
    ]
    return "\n".join(out) + "\n"
