"""Ray Hamiltonians ``Q_i(x, u, p, X)`` and the Kirchhoff term ``F(u, p)``.

Three builtin Hamiltonian families cover the first-order, degenerate and
uniformly elliptic regimes:

* ``advection``  Q = lam*u + b*p - f(x)
* ``eikonal``    Q = lam*u + c*|p| - f(x),          c > 0
* ``viscous``    Q = lam*u + c*|p| - nu*X - f(x),   nu >= 0

and one Kirchhoff family, ``linear``: F = sum(gamma_i p_i) - beta*u + c0.

Builtins are certified analytically against the structural assumptions
(properness in ``u``, degenerate ellipticity in ``X``, linear growth in ``p``,
monotonicity of ``F``). Anything else is checked by randomized sampling with
a recorded seed; a failed check carries a counterexample that re-evaluates to
a violation.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Mapping, Sequence

import numpy as np

from .errors import DomainError
from .expr import Expr, Number, parse_expr

CERTIFIED = "certified-analytic"
PASSED = "passed-sampled"
FAILED = "failed"
DECLARED = "declared"

MONOTONE_TOL = 1e-12
DEFAULT_P = 10.0


def _as_source(source) -> Expr:
    if isinstance(source, Expr):
        return source
    if isinstance(source, str):
        return parse_expr(source)
    return Number(float(source))


def _source_bounds(f: Expr, R: float, n: int = 10001):
    xs = np.linspace(0.0, R, n)
    vals = np.asarray(f(xs), dtype=float)
    if not np.all(np.isfinite(vals)):
        raise DomainError(f"source term {f} is not finite on [0, {R}]")
    sup = float(np.max(np.abs(vals)))
    lip = float(np.max(np.abs(np.diff(vals))) / (xs[1] - xs[0])) if n > 1 else 0.0
    # grid estimates of sup and slope, padded since only upper bounds matter
    return 1.01 * sup, 1.1 * lip


# ----------------------------------------------------------------------------
# Hamiltonian families


class RayHamiltonian:
    """Interface for one ``Q_i``. Subclasses broadcast over numpy arrays."""

    family: str | None = None
    first_order = True

    def __call__(self, x, u, p, X=0.0):
        raise NotImplementedError

    @property
    def parameters(self) -> tuple:
        return ()


@dataclass(frozen=True)
class Advection(RayHamiltonian):
    lam: float
    b: float
    source: Expr = field(default_factory=lambda: Number(0.0))

    family = "advection"
    first_order = True
    p_slope = property(lambda self: abs(self.b))
    diffusion = 0.0

    def __post_init__(self):
        object.__setattr__(self, "source", _as_source(self.source))
        if self.lam <= 0:
            raise DomainError("advection needs lam > 0")

    def __call__(self, x, u, p, X=0.0):
        return self.lam * np.asarray(u) + self.b * np.asarray(p) - self.source(x)

    @property
    def parameters(self):
        return (self.lam, self.b)


@dataclass(frozen=True)
class Eikonal(RayHamiltonian):
    lam: float
    c: float
    source: Expr = field(default_factory=lambda: Number(0.0))

    family = "eikonal"
    first_order = True
    p_slope = property(lambda self: self.c)
    diffusion = 0.0

    def __post_init__(self):
        object.__setattr__(self, "source", _as_source(self.source))
        if self.lam <= 0 or self.c <= 0:
            raise DomainError("eikonal needs lam > 0 and c > 0")

    def __call__(self, x, u, p, X=0.0):
        return self.lam * np.asarray(u) + self.c * np.abs(p) - self.source(x)

    @property
    def parameters(self):
        return (self.lam, self.c)


@dataclass(frozen=True)
class Viscous(RayHamiltonian):
    lam: float
    c: float
    nu: float
    source: Expr = field(default_factory=lambda: Number(0.0))

    family = "viscous"
    first_order = False
    p_slope = property(lambda self: self.c)
    diffusion = property(lambda self: self.nu)

    def __post_init__(self):
        object.__setattr__(self, "source", _as_source(self.source))
        if self.lam <= 0 or self.c < 0 or self.nu < 0:
            raise DomainError("viscous needs lam > 0, c >= 0, nu >= 0")

    def __call__(self, x, u, p, X=0.0):
        return (
            self.lam * np.asarray(u)
            + self.c * np.abs(p)
            - self.nu * np.asarray(X)
            - self.source(x)
        )

    @property
    def parameters(self):
        return (self.lam, self.c, self.nu)


@dataclass(frozen=True)
class CustomHamiltonian(RayHamiltonian):
    """User-supplied ``fn(x, u, p, X)``; must broadcast over arrays."""

    fn: Callable
    first_order: bool = False
    name: str = "custom"

    def __call__(self, x, u, p, X=0.0):
        return self.fn(x, u, p, X)


FAMILIES = {"advection": Advection, "eikonal": Eikonal, "viscous": Viscous}
FAMILY_ARITY = {"advection": 2, "eikonal": 2, "viscous": 3}


def make_hamiltonian(family: str, parameters: Sequence[float], source="0"):
    if family not in FAMILIES:
        raise DomainError(f"unknown Hamiltonian family {family!r}")
    if len(parameters) != FAMILY_ARITY[family]:
        raise DomainError(
            f"family {family!r} takes {FAMILY_ARITY[family]} parameters, got {len(parameters)}"
        )
    return FAMILIES[family](*map(float, parameters), source=source)


def _is_builtin(q) -> bool:
    return isinstance(q, (Advection, Eikonal, Viscous))


@dataclass(frozen=True)
class HamiltonianSet:
    """The family ``(Q_1, ..., Q_I)`` with its declared constants.

    ``growth_constants`` maps ``(M, K)`` to a declared ``C_{M,K}``;
    ``x_lipschitz`` maps ``M`` to ``C_M`` for the first-order x-Lipschitz
    refinement. Builtins do not need either: their constants are computed.
    """

    evaluators: tuple
    lam: float
    ray_length: float = 1.0
    growth_constants: Mapping = field(default_factory=dict)
    x_lipschitz: Mapping = field(default_factory=dict)
    modulus_declared: bool = False

    def __post_init__(self):
        object.__setattr__(self, "evaluators", tuple(self.evaluators))
        if not self.lam > 0:
            raise DomainError(f"lam must be positive, got {self.lam}")
        if self.ray_length <= 0:
            raise DomainError("ray_length must be positive")

    @classmethod
    def from_builtins(cls, evaluators, ray_length=1.0):
        evaluators = tuple(evaluators)
        lam = min(q.lam for q in evaluators)
        return cls(evaluators, lam, ray_length)

    @property
    def ray_count(self) -> int:
        return len(self.evaluators)

    @property
    def first_order(self) -> bool:
        return all(q.first_order for q in self.evaluators)

    @property
    def all_builtin(self) -> bool:
        return all(_is_builtin(q) for q in self.evaluators)

    def __getitem__(self, i):
        return self.evaluators[i - 1]

    def growth_constant(self, M, K):
        """Declared ``C_{M,K}``, or the analytic one when every ray is builtin."""
        if (M, K) in self.growth_constants:
            return float(self.growth_constants[(M, K)])
        if not self.all_builtin:
            return None
        consts = []
        for q in self.evaluators:
            fsup, _ = _source_bounds(q.source, self.ray_length)
            consts.append(max(q.lam * M + q.diffusion * K + fsup, q.p_slope))
        return max(consts)

    def x_lipschitz_constant(self, M):
        if M in self.x_lipschitz:
            return float(self.x_lipschitz[M])
        if not self.all_builtin:
            return None
        return max(_source_bounds(q.source, self.ray_length)[1] for q in self.evaluators)


def eval_hamiltonian(H: HamiltonianSet, i: int, x, u, p, X=0.0) -> float:
    if not 1 <= i <= H.ray_count:
        raise DomainError(f"ray {i} not in 1..{H.ray_count}")
    args = np.array([x, u, p, X], dtype=float)
    if not np.all(np.isfinite(args)):
        raise DomainError(f"non-finite argument in {(x, u, p, X)}")
    if not 0.0 <= x <= H.ray_length:
        raise DomainError(f"x = {x} outside [0, {H.ray_length}]")
    return float(H[i](x, u, p, X))


# ----------------------------------------------------------------------------
# Kirchhoff term


@dataclass(frozen=True)
class KirchhoffCondition:
    """``F(u, p)`` with ``p`` a length-``I`` vector (or array with last axis ``I``)."""

    evaluator: Callable
    alpha: float
    family: str | None = None
    parameters: tuple = ()

    def __post_init__(self):
        if not self.alpha > 0:
            raise DomainError(f"alpha must be positive, got {self.alpha}")

    def __call__(self, u, p):
        return self.evaluator(u, np.asarray(p, dtype=float))


def linear_kirchhoff(gamma: Sequence[float], beta: float = 0.0, c0: float = 0.0, alpha=None):
    """F = sum(gamma_i p_i) - beta*u + c0."""
    gamma = np.asarray(gamma, dtype=float)
    if alpha is None:
        alpha = float(gamma.min())
    if beta < 0:
        raise DomainError("linear Kirchhoff needs beta >= 0")

    def F(u, p):
        return np.asarray(p) @ gamma - beta * np.asarray(u) + c0

    return KirchhoffCondition(F, alpha, "linear", (*gamma.tolist(), float(beta), float(c0)))


# ----------------------------------------------------------------------------
# Assumption checks


@dataclass
class AssumptionReport:
    assumption: str
    status: str
    samples_used: int = 0
    seed: int | None = None
    counterexample: dict | None = None
    justification: str = ""
    empirical_constant: float | None = None
    declared_constant: float | None = None

    @property
    def ok(self) -> bool:
        return self.status != FAILED

    def lines(self):
        out = [f"{self.assumption}: {self.status}"]
        if self.justification:
            out.append(f"  justification: {self.justification}")
        if self.samples_used:
            out.append(f"  samples: {self.samples_used} (seed {self.seed})")
        if self.declared_constant is not None:
            out.append(f"  declared constant: {self.declared_constant:.6g}")
        if self.empirical_constant is not None:
            out.append(f"  empirical constant: {self.empirical_constant:.6g}")
        if self.counterexample:
            cx = ", ".join(f"{k}={v!r}" for k, v in self.counterexample.items())
            out.append(f"  counterexample: {cx}")
        return out


def _draw(rng, n, bound):
    """Uniform draws on [-bound, bound], half of them at a random smaller scale.

    The rescaled half probes behaviour near zero, where e.g. a vanishing
    derivative hides from plain uniform sampling.
    """
    bound = float(bound)
    out = rng.uniform(-bound, bound, n)
    half = n // 2
    out[:half] *= 10.0 ** rng.uniform(-4.0, 0.0, half)
    return out


def _report_first_violation(name, viol, sample, n, seed, extra=None):
    k = int(np.argmax(viol))
    cx = {key: float(np.asarray(val)[k]) if np.ndim(val) else val for key, val in sample.items()}
    if extra:
        cx.update(extra(k))
    return AssumptionReport(name, FAILED, n, seed, cx)


def check_properness(H: HamiltonianSet, sample_budget: int = 10_000, seed: int = 0,
                     M: float = 10.0, P: float = DEFAULT_P, K: float = 10.0):
    """Q_i(x,u,p,X) - Q_i(x,v,p,X) >= lam*(u - v) whenever v <= u."""
    name = "properness"
    if sample_budget < 1:
        raise DomainError("sample_budget must be >= 1")
    if H.all_builtin:
        bad = [i for i, q in enumerate(H.evaluators, 1) if q.lam < H.lam]
        if not bad:
            return AssumptionReport(
                name, CERTIFIED,
                justification="Q_i(u) - Q_i(v) = lam_i (u - v) with lam_i >= lam",
            )
        i = bad[0]
        q = H[i]
        return AssumptionReport(
            name, FAILED,
            counterexample=dict(ray=i, x=0.0, u=1.0, v=0.0, p=0.0, X=0.0,
                                difference=q.lam, bound=H.lam),
            justification=f"ray {i} has lam_i = {q.lam} < lam = {H.lam}",
        )
    rng = np.random.default_rng(seed)
    n = sample_budget
    for i in range(1, H.ray_count + 1):
        q = H[i]
        # deterministic probe first so the obvious counterexample is reported
        x = np.concatenate([[0.0], rng.uniform(0.0, H.ray_length, n - 1)])[:n]
        a = np.concatenate([[1.0], _draw(rng, n - 1, M)])[:n]
        b = np.concatenate([[0.0], _draw(rng, n - 1, M)])[:n]
        u, v = np.maximum(a, b), np.minimum(a, b)
        p = np.concatenate([[0.0], _draw(rng, n - 1, P)])[:n]
        X = np.concatenate([[0.0], _draw(rng, n - 1, K)])[:n]
        diff = q(x, u, p, X) - q(x, v, p, X)
        viol = H.lam * (u - v) - MONOTONE_TOL - diff
        if np.any(viol > 0):
            rep = _report_first_violation(
                name, viol > 0, dict(ray=i, x=x, u=u, v=v, p=p, X=X), n, seed,
                lambda k: dict(difference=float(diff[k]), bound=float(H.lam * (u[k] - v[k]))),
            )
            return rep
    return AssumptionReport(name, PASSED, n * H.ray_count, seed)


def check_ellipticity(H: HamiltonianSet, sample_budget: int = 10_000, seed: int = 0,
                      M: float = 10.0, P: float = DEFAULT_P, K: float = 10.0):
    """Q_i(x,u,p,Y) >= Q_i(x,u,p,X) whenever X >= Y."""
    name = "ellipticity"
    if sample_budget < 1:
        raise DomainError("sample_budget must be >= 1")
    if H.first_order:
        return AssumptionReport(name, CERTIFIED, justification="Q_i does not depend on X")
    if H.all_builtin:
        return AssumptionReport(
            name, CERTIFIED, justification="Q_i = ... - nu_i X with nu_i >= 0",
        )
    rng = np.random.default_rng(seed)
    n = sample_budget
    for i in range(1, H.ray_count + 1):
        q = H[i]
        x = np.concatenate([[0.0], rng.uniform(0.0, H.ray_length, n - 1)])[:n]
        u = np.concatenate([[0.0], _draw(rng, n - 1, M)])[:n]
        p = np.concatenate([[0.0], _draw(rng, n - 1, P)])[:n]
        a = np.concatenate([[2.0], _draw(rng, n - 1, K)])[:n]
        b = np.concatenate([[0.0], _draw(rng, n - 1, K)])[:n]
        X, Y = np.maximum(a, b), np.minimum(a, b)
        qX, qY = q(x, u, p, X), q(x, u, p, Y)
        viol = qX - qY - MONOTONE_TOL
        if np.any(viol > 0):
            return _report_first_violation(
                name, viol > 0, dict(ray=i, x=x, u=u, p=p, X=X, Y=Y), n, seed,
                lambda k: dict(Q_at_X=float(qX[k]), Q_at_Y=float(qY[k])),
            )
    return AssumptionReport(name, PASSED, n * H.ray_count, seed)


def _growth_exponent(q, R, M, K):
    """Slope of log|Q| against log(1+|p|) over the last decades of |p|."""
    ps = 10.0 ** np.arange(0, 9)
    worst = []
    for sign in (1.0, -1.0):
        for u in (-M, 0.0, M):
            for X in (-K, 0.0, K):
                vals = np.abs(q(R / 2, u, sign * ps, X))
                worst.append(vals)
    vals = np.max(worst, axis=0)
    logs = np.log(np.maximum(vals, 1e-300))
    slope = (logs[-1] - logs[-3]) / (np.log1p(ps[-1]) - np.log1p(ps[-3]))
    return float(slope), ps, vals


def check_gradient_growth(H: HamiltonianSet, M: float, K: float, sample_budget: int = 10_000,
                          seed: int = 0, P: float = DEFAULT_P, declared: float | None = None):
    """|Q_i(x,u,p,X)| <= C_{M,K} (1 + |p|) for |u| <= M, |X| <= K.

    The smallest constant seen on the samples is reported next to the declared
    one. A growth exponent above 1 along |p| -> infinity fails regardless.
    """
    name = "gradient-growth"
    if sample_budget < 1:
        raise DomainError("sample_budget must be >= 1")
    C = declared if declared is not None else H.growth_constant(M, K)
    rng = np.random.default_rng(seed)
    n = sample_budget
    empirical = 0.0
    for i in range(1, H.ray_count + 1):
        q = H[i]
        x = rng.uniform(0.0, H.ray_length, n)
        u = _draw(rng, n, M)
        p = _draw(rng, n, P)
        X = _draw(rng, n, K)
        ratio = np.abs(q(x, u, p, X)) / (1.0 + np.abs(p))
        empirical = max(empirical, float(ratio.max()))
        if C is not None and np.any(ratio > C * (1 + 1e-12)):
            rep = _report_first_violation(
                name, ratio > C, dict(ray=i, x=x, u=u, p=p, X=X), n, seed,
                lambda k: dict(ratio=float(ratio[k])),
            )
            rep.declared_constant, rep.empirical_constant = C, empirical
            return rep
        if not _is_builtin(q):
            exponent, ps, vals = _growth_exponent(q, H.ray_length, M, K)
            if exponent > 1.05:
                rep = AssumptionReport(
                    name, FAILED, n * i, seed,
                    dict(ray=i, x=H.ray_length / 2, p=float(ps[-1]), abs_Q=float(vals[-1]),
                         growth_exponent=exponent),
                    justification=f"|Q| grows like |p|^{exponent:.3g}",
                    empirical_constant=empirical, declared_constant=C,
                )
                return rep
    if H.all_builtin and declared is None:
        return AssumptionReport(
            name, CERTIFIED, n * H.ray_count, seed,
            justification="|Q_i| <= lam_i M + nu_i K + sup|f_i| + c_i |p|",
            empirical_constant=empirical, declared_constant=C,
        )
    return AssumptionReport(
        name, PASSED, n * H.ray_count, seed, empirical_constant=empirical,
        declared_constant=C if C is not None else empirical,
    )


def check_x_lipschitz(H: HamiltonianSet, M: float, sample_budget: int = 10_000, seed: int = 0,
                      P: float = DEFAULT_P, declared: float | None = None):
    """First-order x-regularity: |Q(x,u,p) - Q(y,u,p)| <= C_M (1+|p|) |x - y|."""
    name = "x-lipschitz"
    C = declared if declared is not None else H.x_lipschitz_constant(M)
    if H.all_builtin and declared is None:
        return AssumptionReport(
            name, CERTIFIED, justification="x enters only through the source term f_i",
            declared_constant=C,
        )
    rng = np.random.default_rng(seed)
    n = sample_budget
    empirical = 0.0
    for i in range(1, H.ray_count + 1):
        q = H[i]
        x = rng.uniform(0.0, H.ray_length, n)
        y = rng.uniform(0.0, H.ray_length, n)
        u = _draw(rng, n, M)
        p = _draw(rng, n, P)
        dx = np.abs(x - y)
        keep = dx > 0
        ratio = np.zeros(n)
        ratio[keep] = np.abs(q(x, u, p, 0.0) - q(y, u, p, 0.0))[keep] / ((1 + np.abs(p)) * dx)[keep]
        empirical = max(empirical, float(ratio.max()))
        if C is not None and np.any(ratio > C * (1 + 1e-12) + 1e-12):
            rep = _report_first_violation(
                name, ratio > C, dict(ray=i, x=x, y=y, u=u, p=p), n, seed,
                lambda k: dict(ratio=float(ratio[k])),
            )
            rep.declared_constant, rep.empirical_constant = C, empirical
            return rep
    return AssumptionReport(name, PASSED, n * H.ray_count, seed,
                            empirical_constant=empirical, declared_constant=C)


def check_modulus(H: HamiltonianSet):
    """Second-order x-regularity; verified only for builtins, else recorded."""
    name = "modulus"
    if H.all_builtin:
        return AssumptionReport(
            name, CERTIFIED,
            justification="X <= Y under the matrix bound, so -nu (Y - X) <= 0; "
                          "omega(r) = Lip(f) r",
        )
    if H.first_order:
        return AssumptionReport(name, DECLARED, justification="replaced by the x-Lipschitz check")
    if H.modulus_declared:
        return AssumptionReport(name, DECLARED, justification="declared by the user, not verified")
    return AssumptionReport(name, FAILED, justification="no modulus declared")


def check_kirchhoff(F: KirchhoffCondition, ray_count: int, sample_budget: int = 10_000,
                    seed: int = 0, M: float = 10.0, P: float = DEFAULT_P):
    """F non-increasing in u, and F(u,p) - F(u,q) >= alpha*sum(p - q) for p >= q."""
    name = "kirchhoff"
    if sample_budget < 1:
        raise DomainError("sample_budget must be >= 1")
    if F.family == "linear":
        gamma = np.asarray(F.parameters[:-2])
        beta = F.parameters[-2]
        if gamma.size == ray_count and gamma.min() >= F.alpha and beta >= 0:
            return AssumptionReport(
                name, CERTIFIED,
                justification="F linear with gamma_i >= alpha and beta >= 0",
            )
    rng = np.random.default_rng(seed)
    n = sample_budget
    I = ray_count
    a, b = _draw(rng, n, M), _draw(rng, n, M)
    u, v = np.maximum(a, b), np.minimum(a, b)
    p = _draw(rng, n * I, P).reshape(n, I)
    Fu, Fv = F(u, p), F(v, p)
    viol = Fu - Fv - MONOTONE_TOL
    if np.any(viol > 0):
        k = int(np.argmax(viol > 0))
        return AssumptionReport(
            name, FAILED, n, seed,
            dict(part="u-monotone", u=float(u[k]), v=float(v[k]), p=p[k].tolist(),
                 F_u=float(Fu[k]), F_v=float(Fv[k])),
        )
    # gradient monotonicity, led by a small-increment probe at the origin
    w = _draw(rng, n, M)
    w[0] = 0.0
    q = _draw(rng, n * I, P).reshape(n, I)
    q[0] = 0.0
    step = np.abs(_draw(rng, n * I, P)).reshape(n, I)
    step[0] = 1e-2
    pp = q + step
    lhs = F(w, pp) - F(w, q)
    rhs = F.alpha * step.sum(axis=1)
    viol = rhs - MONOTONE_TOL - lhs
    if np.any(viol > 0):
        k = int(np.argmax(viol > 0))
        return AssumptionReport(
            name, FAILED, 2 * n, seed,
            dict(part="gradient-monotone", u=float(w[k]), p=pp[k].tolist(), q=q[k].tolist(),
                 difference=float(lhs[k]), bound=float(rhs[k])),
        )
    return AssumptionReport(name, PASSED, 2 * n, seed)


def check_all(H: HamiltonianSet, F: KirchhoffCondition, M=10.0, K=10.0,
              sample_budget=10_000, seed=0):
    reports = [
        check_properness(H, sample_budget, seed),
        check_ellipticity(H, sample_budget, seed),
        check_gradient_growth(H, M, K, sample_budget, seed),
        check_kirchhoff(F, H.ray_count, sample_budget, seed),
    ]
    reports.append(check_x_lipschitz(H, M, sample_budget, seed) if H.first_order
                   else check_modulus(H))
    return reports
