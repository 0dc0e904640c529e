"""Executable checks of the well-posedness results.

Each ``run_*`` function returns an :class:`ExperimentReport` that can be
recomputed from its name, parameters and seed.
"""
from __future__ import annotations

import csv
import io
import time
from dataclasses import dataclass, field

import numpy as np

from .hamiltonian import (
    Advection, Eikonal, HamiltonianSet, Viscous, linear_kirchhoff,
)
from .network import StarNetwork
from .solver import Grid, Problem, SolverConfig, _vertex_gradients, scheme_coefficients, solve
from .testfn import (
    build_sub_test_function, build_super_test_function, sub_vertex_gradient,
    super_vertex_gradient,
)


@dataclass
class ExperimentReport:
    name: str
    parameters: dict
    passed: bool
    measured: dict = field(default_factory=dict)
    seed: int | None = None
    failures: list = field(default_factory=list)
    elapsed: float | None = None  # wall-clock seconds; kept out of the serialized forms

    def to_text(self):
        lines = [f"experiment: {self.name}", f"result: {'PASS' if self.passed else 'FAIL'}"]
        if self.seed is not None:
            lines.append(f"seed: {self.seed}")
        for k, v in self.parameters.items():
            lines.append(f"param.{k}: {v}")
        for k, v in self.measured.items():
            lines.append(f"{k}: {v}")
        for f in self.failures[:1]:
            lines.append(f"first_failure: {f}")
        return "\n".join(lines) + "\n"

    def to_csv(self):
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["experiment", "quantity", "value"])
        w.writerow([self.name, "passed", self.passed])
        for k, v in self.measured.items():
            w.writerow([self.name, k, v])
        return buf.getvalue()


# ----------------------------------------------------------------------------
# problems with known solutions


def cosh_problem():
    """u - u'' = 0 on two unit rays, u'(0) flux balance, u = cosh(x)."""
    net = StarNetwork(2, 1.0)
    H = HamiltonianSet.from_builtins([Viscous(1.0, 0.0, 1.0)] * 2, 1.0)
    F = linear_kirchhoff([1.0, 1.0])
    return Problem(net, H, F, (np.cosh(1.0),) * 2, "second",
                   exact=lambda i, x: np.cosh(x))


def exponential_problem():
    """u + |u'| - 1 = 0 with u_1 = 1 - 0.1 e^{-x}, u_2 = 1 - 0.1 e^{x}."""
    net = StarNetwork(2, 1.0)
    H = HamiltonianSet.from_builtins([Eikonal(1.0, 1.0, 1.0)] * 2, 1.0)
    F = linear_kirchhoff([1.0, 1.0])

    def exact(i, x):
        return 1.0 - 0.1 * np.exp(-x if i == 1 else x)

    return Problem(net, H, F, (exact(1, 1.0), exact(2, 1.0)), "first", exact=exact)


def constant_problem(c=0.5, lam=1.0, rays=2, R=1.0):
    """lam (u - c) = 0 with sum of fluxes zero; u = c everywhere."""
    net = StarNetwork(rays, R)
    H = HamiltonianSet.from_builtins([Advection(lam, 0.0, lam * c)] * rays, R)
    F = linear_kirchhoff([1.0] * rays)
    return Problem(net, H, F, (c,) * rays, "first", exact=lambda i, x: c + 0.0 * np.asarray(x))


def random_problem(rng: np.random.Generator) -> Problem:
    """A random problem built from certified builtin families."""
    I = int(rng.integers(2, 5))
    R = float(rng.uniform(0.5, 2.0))
    second = bool(rng.random() < 0.5)
    rays = []
    for _ in range(I):
        lam = float(rng.uniform(0.5, 2.0))
        src = f"{rng.uniform(-1, 1):.3f} + {rng.uniform(-1, 1):.3f}*sin({rng.uniform(0.5, 3):.3f}*x)"
        kind = rng.choice(["advection", "eikonal", "viscous"] if second else ["advection", "eikonal"])
        if kind == "advection":
            rays.append(Advection(lam, float(rng.uniform(-2, 2)), src))
        elif kind == "eikonal":
            rays.append(Eikonal(lam, float(rng.uniform(0.2, 2)), src))
        else:
            rays.append(Viscous(lam, float(rng.uniform(0, 2)), float(rng.uniform(0.05, 1)), src))
    H = HamiltonianSet.from_builtins(rays, R)
    F = linear_kirchhoff(rng.uniform(0.5, 2.0, I), float(rng.uniform(0, 1)),
                         float(rng.uniform(-1, 1)))
    a = rng.uniform(-1, 1, I)
    order = "first" if H.first_order else "second"
    return Problem(StarNetwork(I, R), H, F, tuple(a), order)


# ----------------------------------------------------------------------------
# experiments


def run_comparison_experiment(problem: Problem, delta: float, grid: Grid,
                              config: SolverConfig | None = None, tol=1e-9):
    """Raise every Dirichlet value by ``delta`` and check no node goes down."""
    if delta < 0:
        raise ValueError("delta must be non-negative")
    base = solve(problem, grid, config)
    raised = solve(problem.with_dirichlet(np.add(problem.dirichlet, delta)), grid, config)
    gap = raised.values - base.values
    min_gap = float(gap.min())
    passed = min_gap >= -tol
    failures = []
    if not passed:
        i, j = np.unravel_index(np.argmin(gap), gap.shape)
        failures.append(dict(ray=int(i) + 1, node=int(j), gap=min_gap))
    return ExperimentReport(
        "comparison", dict(delta=delta, nodes=grid.nodes), passed,
        dict(min_gap=min_gap, max_gap=float(gap.max())), failures=failures,
    )


def vertex_hamiltonians(problem: Problem, values, grid: Grid):
    """Q_i at the vertex with one-sided gradients and second differences."""
    h = grid.spacing
    V = np.asarray(values)
    D = _vertex_gradients(V, h, scheme_coefficients(problem, grid).second)
    X = (V[:, 0] - 2 * V[:, 1] + V[:, 2]) / h**2
    return np.array([float(q(0.0, V[0, 0], D[i], X[i]))
                     for i, q in enumerate(problem.hamiltonians.evaluators)])


def run_weak_strong_check(problem: Problem, grid: Grid, config: SolverConfig | None = None):
    """At the discrete solution the Kirchhoff equation itself holds at the vertex.

    The generalized condition only asks that either the Kirchhoff term or one
    of the ray Hamiltonians carry the inequality; here both min/max forms are
    evaluated and the strong residual |F| must vanish to solver tolerance.
    """
    config = config or SolverConfig()
    sol = solve(problem, grid, config)
    F = float(problem.kirchhoff(sol.vertex, sol.vertex_gradients()))
    Q0 = vertex_hamiltonians(problem, sol.values, grid)
    generalized_super = max(Q0.max(), -F)
    generalized_sub = min(Q0.min(), -F)
    passed = abs(F) <= 10 * config.tolerance
    return ExperimentReport(
        "weakstrong", dict(nodes=grid.nodes, tolerance=config.tolerance), passed,
        dict(kirchhoff_residual=abs(F), vertex_value=sol.vertex,
             generalized_super=float(generalized_super),
             generalized_sub=float(generalized_sub),
             vertex_hamiltonians=Q0.tolist()),
        failures=[] if passed else [dict(F=F)],
    )


def _draw_bundle_params(rng, M=2.0):
    I = int(rng.integers(2, 7))
    u0 = float(rng.uniform(-0.5, 0.5))
    gaps = rng.uniform(-1.0, 1.0, I)
    eps = rng.uniform(0.01, 0.2, I)
    theta = float(10 ** rng.uniform(-4, -2))
    lam = float(rng.uniform(0.5, 5.0))
    C = float(rng.uniform(0.5, 5.0))
    return dict(u0=u0, u_eps=u0 + gaps, eps=eps, theta=theta, lam=lam, C=C, M=M)


def check_trichotomy(g_u, g_v, k, eps):
    """Super gradient at gap g_u strictly above sub gradient at g_v < g_u."""
    return super_vertex_gradient(g_u, k, eps) > sub_vertex_gradient(g_v, k, eps)


def run_testfn_suite(seed: int = 1, trials: int = 1000, order: str = "first",
                     n_samples: int = 101, params=None):
    """Random super/sub bundles checked against every bundle invariant.

    ``params`` replaces the random draws by a fixed list of parameter dicts.
    """
    if trials < 1:
        raise ValueError("trials must be >= 1")
    rng = np.random.default_rng(seed)
    draws = params if params is not None else [_draw_bundle_params(rng) for _ in range(trials)]
    failures = []
    worst = dict(residual=0.0, vertex_spread=0.0, min_eta=np.inf, secant=-np.inf)
    t0 = time.perf_counter()
    for n, d in enumerate(draws):
        args = (d["u0"], d["u_eps"], d["eps"], d["theta"], d["lam"], d["C"], d["M"])
        for build in (build_super_test_function, build_sub_test_function):
            b = build(*args, order=order)
            for bad in b.check(n_samples):
                failures.append(dict(trial=n, kind=b.kind, **bad, draw=_plain(d)))
            worst["vertex_spread"] = max(worst["vertex_spread"], float(np.ptp(b.vertex_values())))
            worst["min_eta"] = min(worst["min_eta"], float(b.eta.min()))
            for i in range(1, b.ray_count + 1):
                r = np.max(np.abs(b.residual(i, b.samples(i, n_samples))))
                worst["residual"] = max(worst["residual"], float(r))
                slope = (b.phi(i, b.eps[i - 1]) - b.phi(i, 0.0)) / b.eps[i - 1]
                excess = slope - b.dphi(i, 0.0) if b.kind == "super" else b.dphi(i, 0.0) - slope
                worst["secant"] = max(worst["secant"], float(excess))
        # trichotomy on a fresh gap pair sharing this draw's k and eps
        g = np.sort(rng.uniform(-1, 1, 2))
        k, eps = d["lam"] / d["C"], float(np.asarray(d["eps"]).flat[0])
        if g[1] > g[0] and not check_trichotomy(g[1], g[0], k, eps):
            failures.append(dict(trial=n, check="trichotomy", g_u=g[1], g_v=g[0], k=k, eps=eps))
    return ExperimentReport(
        "testfn", dict(trials=len(draws), order=order, samples=n_samples), not failures,
        dict(max_ode_residual=worst["residual"], max_vertex_spread=worst["vertex_spread"],
             min_eta=worst["min_eta"], max_secant_excess=worst["secant"]),
        seed=seed, failures=failures, elapsed=time.perf_counter() - t0,
    )


def _plain(d):
    return {k: (np.asarray(v).tolist() if isinstance(v, np.ndarray) else v) for k, v in d.items()}


def convergence_order(hs, errors):
    """Least-squares slope of log(error) against log(h)."""
    hs, errors = np.asarray(hs, float), np.asarray(errors, float)
    slope, _ = np.polyfit(np.log(hs), np.log(errors), 1)
    return float(slope)


def run_convergence_study(problem: Problem, N_list=(50, 100, 200, 400), min_order=None,
                          config: SolverConfig | None = None, vertex_stencil="auto"):
    """L-infinity errors and the fitted order.

    Errors are taken against ``problem.exact`` when it is known, otherwise
    against a solution on twice the finest grid, sampled at the coarse nodes
    (every N must then divide the finest one).
    """
    N_list = [int(N) for N in N_list]
    reference = None
    if problem.exact is None:
        N_ref = 2 * max(N_list)
        if any(N_ref % N for N in N_list):
            raise ValueError("without an exact solution every N must divide the finest N")
        reference = solve(problem, Grid.on(problem.network, N_ref, vertex_stencil), config).values
    errors, hs = [], []
    for N in N_list:
        grid = Grid.on(problem.network, N, vertex_stencil)
        sol = solve(problem, grid, config)
        if reference is None:
            exact = np.array([problem.exact(i, grid.x) for i in problem.network.rays])
        else:
            exact = reference[:, ::(reference.shape[1] - 1) // N]
        errors.append(float(np.max(np.abs(sol.values - exact))))
        hs.append(grid.spacing)
    if max(errors) <= 1e-12:
        order, passed = float("inf"), True
    else:
        order = convergence_order(hs, errors)
        passed = min_order is None or order >= min_order
    return ExperimentReport(
        "convergence", dict(N=list(N_list), min_order=min_order, stencil=vertex_stencil,
                            reference="exact" if reference is None else "refined"),
        passed, dict(errors=errors, order=order),
    )
