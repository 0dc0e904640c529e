"""Monotone finite differences for the HJB system on a star network.

Each ray carries nodes ``x_j = j h``, ``j = 0..N``. Node 0 is the shared
vertex and node N holds the Dirichlet value. Interior nodes use the
Lax-Friedrichs numerical Hamiltonian with central second differences; the
vertex carries the Kirchhoff equation with one-sided ray gradients.

The discrete system is solved by pseudo-time continuation: linearly
implicit steps ``(1/dtau + J) du = -r``. A step that fails to lower the
residual is retried with a ten times shorter pseudo-time step, down to the
explicit stability limit, and accepted steps lengthen it again, so the
iteration behaves as Newton's method near the solution and as damped
relaxation far from it. After each step the vertex value is recomputed
exactly from its neighbours by bisection. Fine grids start from the
interpolated solution on the grid with half as many cells.
"""
from __future__ import annotations

import io
import logging
from dataclasses import dataclass, field
from typing import Callable

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .errors import ConvergenceError, DomainError, NoRootError, PreconditionError
from .hamiltonian import FAILED, HamiltonianSet, KirchhoffCondition, check_ellipticity
from .network import StarNetwork
from .testfn import BarrierPair, build_barriers

log = logging.getLogger(__name__)

STENCILS = ("auto", "first", "second")


@dataclass(frozen=True)
class Problem:
    network: StarNetwork
    hamiltonians: HamiltonianSet
    kirchhoff: KirchhoffCondition
    dirichlet: tuple
    order: str = "second"
    exact: Callable | None = None  # exact(ray, x), when known

    def __post_init__(self):
        object.__setattr__(self, "dirichlet", tuple(float(a) for a in self.dirichlet))
        I = self.network.ray_count
        if len(self.dirichlet) != I:
            raise DomainError(f"need {I} Dirichlet values, got {len(self.dirichlet)}")
        if self.hamiltonians.ray_count != I:
            raise DomainError(f"need {I} Hamiltonians, got {self.hamiltonians.ray_count}")
        if self.hamiltonians.ray_length != self.network.ray_length:
            raise DomainError("Hamiltonian set and network disagree on the ray length")
        if self.order not in ("first", "second"):
            raise DomainError(f"order must be 'first' or 'second', got {self.order!r}")
        if self.order == "first" and not self.hamiltonians.first_order:
            raise DomainError("a first-order problem cannot have X-dependent Hamiltonians")

    def with_dirichlet(self, dirichlet):
        return Problem(self.network, self.hamiltonians, self.kirchhoff, tuple(dirichlet),
                       self.order, None)


@dataclass(frozen=True)
class Grid:
    nodes: int
    spacing: float
    vertex_stencil: str = "auto"  # "auto" picks second order per ray where it stays monotone

    def __post_init__(self):
        if self.nodes < 2:
            raise DomainError("need at least 2 cells per ray")
        if self.vertex_stencil not in STENCILS:
            raise DomainError(f"vertex stencil must be one of {STENCILS}")

    @classmethod
    def on(cls, network: StarNetwork, nodes: int, vertex_stencil: str = "auto"):
        return cls(int(nodes), network.ray_length / int(nodes), vertex_stencil)

    @property
    def x(self):
        return self.spacing * np.arange(self.nodes + 1)


@dataclass(frozen=True)
class SolverConfig:
    tolerance: float = 1e-10
    max_sweeps: int = 1_000_000
    initial: object = "zero"  # "zero", "upper", "lower" or an (I, N+1) array
    sigma_safety: float = 1.1
    dtau_max: float = 1e15
    stall_sweeps: int = 200
    memory: int = 10
    coarse_start: int = 100  # even N >= this starts from the interpolated N/2 solution

    def __post_init__(self):
        if not self.tolerance > 0:
            raise DomainError("tolerance must be positive")


@dataclass
class DiscreteSolution:
    values: np.ndarray  # shape (I, N+1); column 0 is the shared vertex
    iterations: int
    interior_residual: float
    vertex_residual: float
    coefficients: SchemeCoefficients
    grid: Grid
    history: list = field(default_factory=list)
    rounding_floor: float = 0.0

    @property
    def sigma(self):
        return self.coefficients.sigma

    @property
    def stencils(self):
        return ["second" if s else "first" for s in self.coefficients.second]

    @property
    def vertex(self) -> float:
        return float(self.values[0, 0])

    def vertex_gradients(self):
        return _vertex_gradients(self.values, self.grid.spacing, self.coefficients.second)

    def to_csv(self):
        buf = io.StringIO()
        buf.write("ray,x,u\n")
        x = self.grid.x
        buf.write(f"0,{float(x[0])!r},{float(self.values[0, 0])!r}\n")
        for i, row in enumerate(self.values, start=1):
            for xj, uj in zip(x[1:], row[1:]):
                buf.write(f"{i},{float(xj)!r},{float(uj)!r}\n")
        return buf.getvalue()

    def report(self):
        lines = [
            f"nodes: {self.grid.nodes}",
            "vertex_stencil: " + ", ".join(self.stencils),
            f"iterations: {self.iterations}",
            f"interior_residual: {self.interior_residual:.6e}",
            f"vertex_residual: {self.vertex_residual:.6e}",
            f"vertex_value: {self.vertex!r}",
            f"rounding_floor: {self.rounding_floor:.6e}",
            "sigma: " + ", ".join(f"{s:.6g}" for s in self.sigma),
        ]
        return "\n".join(lines) + "\n"


def read_solution_csv(text: str, ray_count: int):
    """Inverse of ``DiscreteSolution.to_csv``: returns ``(x, values)``."""
    lines = text.strip().splitlines()
    if lines[0].strip() != "ray,x,u":
        raise DomainError("expected header 'ray,x,u'")
    rows = [line.split(",") for line in lines[1:]]
    vertex = [r for r in rows if int(r[0]) == 0]
    if len(vertex) != 1:
        raise DomainError("expected exactly one vertex row")
    u0 = float(vertex[0][2])
    per_ray = {i: [] for i in range(1, ray_count + 1)}
    for r in rows:
        if int(r[0]) != 0:
            per_ray[int(r[0])].append((float(r[1]), float(r[2])))
    x = np.array([0.0] + [p[0] for p in per_ray[1]])
    values = np.array([[u0] + [p[1] for p in per_ray[i]] for i in per_ray])
    return x, values


# ----------------------------------------------------------------------------
# local operators


def numerical_hamiltonian(H: HamiltonianSet, i, x, u, p_minus, p_plus, X, sigma):
    """Lax-Friedrichs flux: Q_i at the averaged gradient minus ``sigma`` times the jump."""
    if np.any(np.asarray(sigma) < 0):
        raise DomainError("sigma must be non-negative")
    p_minus = np.asarray(p_minus, dtype=float)
    p_plus = np.asarray(p_plus, dtype=float)
    return H[i](x, u, 0.5 * (p_minus + p_plus), X) - sigma * 0.5 * (p_plus - p_minus)


def _one_sided(u0, u1, u2, h, second):
    """One-sided ray gradients at the vertex; ``second`` selects the stencil per ray."""
    first = (u1 - u0) / h
    if u2 is None:
        return first
    return np.where(second, (4.0 * u1 - u2 - 3.0 * u0) / (2.0 * h), first)


def vertex_update(u_neighbors, h: float, F: KirchhoffCondition, u_second=None,
                  second=None) -> float:
    """Vertex value solving the Kirchhoff equation for fixed ray neighbours.

    With ``u_second`` (the values two nodes out) the gradients on the rays
    flagged in ``second`` (default: all) use the second-order one-sided
    stencil. Either way the equation is strictly decreasing in the vertex
    value, so the root is unique and bisection applies.
    """
    if not h > 0:
        raise DomainError("h must be positive")
    u1 = np.asarray(u_neighbors, dtype=float)
    u2 = None if u_second is None else np.asarray(u_second, dtype=float)
    mask = np.ones(u1.shape, bool) if second is None else np.asarray(second, bool)

    def g(u0):
        return float(F(u0, _one_sided(u0, u1, u2, h, mask)))

    # g is strictly decreasing: grow a bracket from the neighbour mean
    mid = float(np.mean(u1))
    step = max(1.0, abs(mid))
    g_mid = g(mid)
    if g_mid == 0.0:
        return mid
    lo = hi = mid
    for _ in range(60):
        if g_mid > 0:
            lo, hi = hi, hi + step
            if g(hi) <= 0:
                break
        else:
            lo, hi = lo - step, lo
            if g(lo) >= 0:
                break
        step *= 2.0
    else:
        raise NoRootError("no sign change of the Kirchhoff equation after 60 doublings")
    g_lo, g_hi = g(lo), g(hi)
    # bisect down to adjacent doubles, which is finer than 1e-13
    while True:
        m = 0.5 * (lo + hi)
        if m <= lo or m >= hi:
            break
        gm = g(m)
        if gm == 0.0:
            return m
        if gm > 0:
            lo, g_lo = m, gm
        else:
            hi, g_hi = m, gm
    return lo if abs(g_lo) <= abs(g_hi) else hi


def _vertex_gradients(V, h, second):
    return _one_sided(V[:, 0], V[:, 1], V[:, 2], h, second)


# ----------------------------------------------------------------------------
# scheme coefficients


@dataclass(frozen=True)
class SchemeCoefficients:
    """A priori bounds of the local partials of each ``Q_i``, plus derived choices.

    ``sigma`` is the Lax-Friedrichs coefficient, ``second`` flags the rays
    whose vertex gradient uses the second-order stencil.
    """

    sigma: np.ndarray
    slope: np.ndarray  # sup |dQ/dp|
    nu_min: np.ndarray  # inf of -dQ/dX
    nu_max: np.ndarray  # sup of -dQ/dX
    qu_max: np.ndarray  # sup of dQ/du
    second: np.ndarray

    @property
    def nu(self):
        return float(self.nu_max.max())


def _partials(q, x, u, p, X):
    du = 1e-6 * (1.0 + np.abs(u))
    dp = 1e-6 * (1.0 + np.abs(p))
    qu = (q(x, u + du, p, X) - q(x, u - du, p, X)) / (2 * du)
    qp = (q(x, u, p + dp, X) - q(x, u, p - dp, X)) / (2 * dp)
    if q.first_order:
        return qu, qp, np.zeros_like(qp)
    dX = 1e-6 * (1.0 + np.abs(X))
    qX = (q(x, u, p, X + dX) - q(x, u, p, X - dX)) / (2 * dX)
    return qu, qp, qX


def _newton_slope(f, z, step):
    """Derivative of ``f`` at ``z`` for the Newton matrix, elementwise.

    Builtin Hamiltonians are piecewise linear in ``p`` (the kink of ``|p|``),
    and the solution often sits within a finite-difference step of a kink.
    One-sided quotients are taken at two scales; a side whose quotient does
    not change with the scale contains no kink, so its slope is the exact
    slope of the active piece. With both sides clean the central quotient is
    used; with neither, the kink is at ``z`` itself and the central quotient
    is an element of the generalized derivative.
    """
    fz = f(z)
    small = step * 1e-3
    fwd, fwd_s = (f(z + step) - fz) / step, (f(z + small) - fz) / small
    bwd, bwd_s = (fz - f(z - step)) / step, (fz - f(z - small)) / small
    tol = 1e-5 * (1.0 + np.abs(fwd) + np.abs(bwd) + np.abs(fz))
    clean_f = np.abs(fwd - fwd_s) <= tol
    clean_b = np.abs(bwd - bwd_s) <= tol
    central = 0.5 * (fwd + bwd)
    return np.where(clean_f & ~clean_b, fwd, np.where(clean_b & ~clean_f, bwd, central))


def _newton_partials(q, x, u, p, X):
    qu = _newton_slope(lambda v: q(x, v, p, X), u, 1e-6 * (1.0 + np.abs(u)))
    qp = _newton_slope(lambda v: q(x, u, v, X), p, 1e-6 * (1.0 + np.abs(p)))
    if q.first_order:
        return qu, qp, np.zeros_like(qp)
    qX = _newton_slope(lambda v: q(x, u, p, v), X, 1e-6 * (1.0 + np.abs(X)))
    return qu, qp, qX


def _second_order_safe(F, h, c):
    """Rays on which the second-order vertex stencil keeps the scheme monotone.

    The stencil couples the vertex to the node two out with the wrong sign.
    Adding a fixed multiple of the first interior equation on that ray
    cancels the coupling without touching the solution set, and the combined
    row stays monotone exactly when the largest diagonal entry of that
    equation is at most four times its smallest (absolute) right coupling.
    This needs ``F`` linear in the gradients, so other ``F`` get first order.
    """
    I = len(c.sigma)
    if F.family != "linear":
        return np.zeros(I, bool)
    gamma = np.asarray(F.parameters[:I])
    diag = c.qu_max + 2 * c.nu_max / h**2 + c.sigma / h
    right = (c.sigma - c.slope) / (2 * h) + c.nu_min / h**2
    return diag * gamma.max() <= 4 * right * gamma.min()


def scheme_coefficients(problem: Problem, grid: Grid, barriers: BarrierPair | None = None,
                        safety: float = 1.1, P: float = 10.0) -> SchemeCoefficients:
    """Sampled bounds of the partials of every ``Q_i`` and the per-ray choices.

    Sampling ranges come from the barriers: every solution lies between them,
    which bounds values, one-sided gradients and second differences a priori,
    so the result does not depend on the iterate.
    """
    if barriers is None:
        barriers = build_barriers(problem.hamiltonians, problem.kirchhoff,
                                  dirichlet=problem.dirichlet)
    h = grid.spacing
    bound = barriers.A + barriers.B
    p_max = max(P, 2 * bound / h)
    X_max = max(P, 4 * bound / h**2)
    xs = np.linspace(0.0, problem.network.ray_length, min(grid.nodes + 1, 51))
    us = np.linspace(-bound, bound, 5)
    ps = np.concatenate([np.linspace(-p_max, p_max, 81), np.linspace(-P, P, 41)])
    Xs = np.array([-X_max, -1.0, 0.0, 1.0, X_max])
    x, u, p, X = (a.ravel() for a in np.meshgrid(xs, us, ps, Xs, indexing="ij"))
    rows = []
    for q in problem.hamiltonians.evaluators:
        qu, qp, qX = _partials(q, x, u, p, X)
        rows.append((np.max(np.abs(qp)), max(0.0, np.min(-qX)), max(0.0, np.max(-qX)),
                     np.max(qu)))
    slope, nu_min, nu_max, qu_max = (np.array(col, dtype=float) for col in zip(*rows))
    c = SchemeCoefficients(safety * slope, slope, nu_min, nu_max, qu_max,
                           np.zeros(len(rows), bool))
    if grid.vertex_stencil == "auto":
        second = _second_order_safe(problem.kirchhoff, h, c)
    else:
        second = np.full(len(rows), grid.vertex_stencil == "second")
    return SchemeCoefficients(c.sigma, slope, nu_min, nu_max, qu_max, second)


def estimate_dissipation(problem: Problem, grid: Grid, barriers: BarrierPair | None = None,
                         safety: float = 1.1, P: float = 10.0):
    """Per-ray LF coefficients ``sigma_i`` and the largest diffusion ``nu``."""
    c = scheme_coefficients(problem, grid, barriers, safety, P)
    return c.sigma, c.nu


# ----------------------------------------------------------------------------
# residual and Jacobian


def _interior(problem, grid, V, sigma):
    """Scheme value at interior nodes, shape (I, N-1)."""
    h = grid.spacing
    x = grid.x[1:-1]
    um, uc, up = V[:, :-2], V[:, 1:-1], V[:, 2:]
    pm = (uc - um) / h
    pp = (up - uc) / h
    X = (pp - pm) / h
    out = np.empty_like(uc)
    for i in range(V.shape[0]):
        out[i] = numerical_hamiltonian(problem.hamiltonians, i + 1, x, uc[i], pm[i], pp[i],
                                       X[i], sigma[i])
    return out


def residual(problem: Problem, grid: Grid, values, coefficients: SchemeCoefficients | None = None):
    """``(interior, vertex)`` max-norm residuals of nodal ``values``."""
    V = np.asarray(values, dtype=float)
    I, N = problem.network.ray_count, grid.nodes
    if V.shape != (I, N + 1):
        raise DomainError(f"values have shape {V.shape}, expected {(I, N + 1)}")
    c = coefficients or scheme_coefficients(problem, grid)
    interior = float(np.max(np.abs(_interior(problem, grid, V, c.sigma)))) if N > 1 else 0.0
    D = _vertex_gradients(V, grid.spacing, c.second)
    vertex = abs(float(problem.kirchhoff(V[0, 0], D)))
    return interior, vertex


def _jacobian(problem, grid, V, c):
    """Sparse Jacobian of the stacked residual (-F, interior Q-hat)."""
    h = grid.spacing
    I, N = V.shape[0], grid.nodes
    n_int = N - 1
    size = 1 + I * n_int
    x = grid.x[1:-1]
    um, uc, up = V[:, :-2], V[:, 1:-1], V[:, 2:]
    pc = (up - um) / (2 * h)
    X = (up - 2 * uc + um) / h**2
    rows, cols, vals = [], [], []

    def idx(i, j):  # ray i (0-based), interior node j in 1..N-1
        return 1 + i * n_int + (j - 1)

    for i, q in enumerate(problem.hamiltonians.evaluators):
        Qu, Qp, QX = _newton_partials(q, x, uc[i], pc[i], X[i])
        s = c.sigma[i]
        diag = Qu - 2 * QX / h**2 + s / h
        right = Qp / (2 * h) + QX / h**2 - s / (2 * h)
        left = -Qp / (2 * h) + QX / h**2 - s / (2 * h)
        j = np.arange(1, N)
        r = idx(i, j)
        rows.append(r); cols.append(r); vals.append(diag)
        rows.append(r); cols.append(np.where(j == 1, 0, r - 1)); vals.append(left)
        rows.append(r[:-1]); cols.append(r[:-1] + 1); vals.append(right[:-1])

    # vertex row: r0 = -F(u0, D u)
    F = problem.kirchhoff
    u0 = V[0, 0]
    D = _vertex_gradients(V, h, c.second)
    Fu = float(_newton_slope(lambda v: F(v, D), u0, 1e-6 * (1 + abs(u0))))
    Fp = np.empty(I)
    for i in range(I):
        e = np.eye(I)[i]
        Fp[i] = _newton_slope(lambda t: F(u0, D + t * e), 0.0, 1e-6 * (1 + abs(D[i])))
    c0 = np.where(c.second, -1.5 / h, -1 / h)
    c1 = np.where(c.second, 2 / h, 1 / h)
    c2 = np.where(c.second, -0.5 / h, 0.0)
    v_rows, v_cols, v_vals = [0], [0], [-(Fu + (c0 * Fp).sum())]
    for i in range(I):
        v_rows.append(0); v_cols.append(idx(i, 1)); v_vals.append(-Fp[i] * c1[i])
        if c2[i] and N - 1 >= 2:
            v_rows.append(0); v_cols.append(idx(i, 2)); v_vals.append(-Fp[i] * c2[i])
    rows.append(np.array(v_rows)); cols.append(np.array(v_cols)); vals.append(np.array(v_vals))
    rows, cols, vals = (np.concatenate(a) for a in (rows, cols, vals))
    return sp.csr_matrix((vals, (rows, cols)), shape=(size, size))


def _pack(V):
    return np.concatenate([[V[0, 0]], V[:, 1:-1].ravel()])


def _unpack(z, V):
    W = V.copy()
    W[:, 0] = z[0]
    W[:, 1:-1] = z[1:].reshape(V.shape[0], -1)
    return W


def _stacked_residual(problem, grid, V, c):
    r_int = _interior(problem, grid, V, c.sigma)
    r0 = -float(problem.kirchhoff(V[0, 0], _vertex_gradients(V, grid.spacing, c.second)))
    return np.concatenate([[r0], r_int.ravel()])


def _project_vertex(problem, grid, V, c):
    W = V.copy()
    W[:, 0] = vertex_update(V[:, 1], grid.spacing, problem.kirchhoff, V[:, 2], c.second)
    return W


def rounding_floor(V, h, c: SchemeCoefficients) -> float:
    """Interior residual that rounding of the nodal values alone can produce.

    Below this level the residual is noise, so iterating further is pointless.
    """
    gain = c.qu_max.max() + 4 * c.nu / h**2 + 2 * c.sigma.max() / h
    return float(np.finfo(float).eps * max(1.0, np.max(np.abs(V))) * gain)


def initial_values(problem: Problem, grid: Grid, how, barriers: BarrierPair):
    I, N = problem.network.ray_count, grid.nodes
    if isinstance(how, str):
        level = {"zero": 0.0, "upper": barriers.A + barriers.B,
                 "lower": -(barriers.A + barriers.B)}.get(how)
        if level is None:
            raise DomainError(f"unknown initialisation {how!r}")
        V = np.full((I, N + 1), level)
    else:
        V = np.array(how, dtype=float)
        if V.shape != (I, N + 1):
            raise DomainError(f"initial values have shape {V.shape}, expected {(I, N + 1)}")
        V[:, 0] = V[0, 0]
    V[:, -1] = problem.dirichlet
    return V


def solve(problem: Problem, grid: Grid, config: SolverConfig | None = None) -> DiscreteSolution:
    config = config or SolverConfig()
    H, F = problem.hamiltonians, problem.kirchhoff
    if check_ellipticity(H, 2000).status == FAILED:
        raise PreconditionError("Hamiltonians are not degenerate elliptic")
    # also checks properness and the Kirchhoff term
    barriers = build_barriers(H, F, dirichlet=problem.dirichlet)
    c = scheme_coefficients(problem, grid, barriers, config.sigma_safety)
    h = grid.spacing
    # explicit stability limit; the implicit step never needs to go below it
    dtau_min = 0.5 / (c.qu_max.max() + 2 * c.nu / h**2 + c.sigma.max() / h)
    dtau = config.dtau_max

    if isinstance(config.initial, str) and grid.nodes % 2 == 0 \
            and grid.nodes >= config.coarse_start:
        # nested iteration: Newton from a nearby start needs few steps on any grid
        coarse = solve(problem, Grid(grid.nodes // 2, 2 * h, grid.vertex_stencil), config)
        start = np.array([np.interp(grid.x, coarse.grid.x, row) for row in coarse.values])
    else:
        start = config.initial
    V = initial_values(problem, grid, start, barriers)
    V = _project_vertex(problem, grid, V, c)
    r = _stacked_residual(problem, grid, V, c)
    norm = float(np.max(np.abs(r)))
    history = [norm]
    accepted = [norm]
    best, stall = norm, 0
    sweeps = 0
    floor = rounding_floor(V, h, c)
    while norm > max(config.tolerance, floor):
        if sweeps >= config.max_sweeps:
            raise ConvergenceError(
                f"no convergence after {sweeps} sweeps (residual {norm:.3e})", history
            )
        sweeps += 1
        J = _jacobian(problem, grid, V, c)
        A = J + sp.identity(J.shape[0], format="csr") / dtau
        dz = spla.spsolve(A.tocsc(), -r)
        W = _project_vertex(problem, grid, _unpack(_pack(V) + dz, V), c)
        r_new = _stacked_residual(problem, grid, W, c)
        new = float(np.max(np.abs(r_new)))
        # non-monotone acceptance: beat the worst of the recent accepted residuals;
        # the first step from the initial guess is always taken
        reference = max(accepted[-config.memory:])
        if np.isfinite(new) and (sweeps == 1 or new < reference):
            dtau = min(dtau * 10.0, config.dtau_max)
            V, r, norm = W, r_new, new
            floor = rounding_floor(V, h, c)
            accepted.append(norm)
            if norm < 0.5 * best:
                best, stall = norm, 0
            else:
                stall += 1
        else:
            # rejected: retreat towards relaxation with a shorter pseudo-time step
            dtau = max(dtau / 10.0, dtau_min)
            stall += 1
        history.append(norm)
        if stall >= config.stall_sweeps:
            raise ConvergenceError(
                f"residual stalled at {norm:.3e} after {sweeps} sweeps "
                f"(tolerance {config.tolerance:.1e})", history
            )
    interior, vertex = residual(problem, grid, V, c)
    if norm > config.tolerance:
        log.warning("stopped at the rounding floor %.3e above the tolerance %.1e", floor,
                    config.tolerance)
    log.debug("converged in %d sweeps, residual %.3e", sweeps, norm)
    return DiscreteSolution(V, sweeps, interior, vertex, c, grid, history, floor)
