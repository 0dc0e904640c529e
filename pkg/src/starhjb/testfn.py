"""Explicit test functions at the vertex and the existence barriers.

On each ray the super test function solves the Eikonal-type ODE

    lam*phi(x) - lam*M + C*(1 + |phi'(x)|) = -eta_i       on (0, eps_i)
    phi(eps_i) - phi(0) = g_i

and the sub test function the mirrored one

    lam*phi(x) + lam*M - C*(1 + |phi'(x)|) = +eta_i.

Both have closed forms ``phi_i(x) = G_i exp(s_i k x) + shift_i`` with
``k = lam/C``. The branch (sign ``s_i``) is picked from the sign of the gap
``g_i`` so that ``phi'`` keeps a constant sign, and the constants ``eta_i``
are tuned so all rays share one vertex value.
"""
from __future__ import annotations

import csv
import io
from dataclasses import dataclass

import numpy as np

from .errors import ConsistencyError, DomainError, PreconditionError
from .hamiltonian import FAILED, HamiltonianSet, KirchhoffCondition, check_kirchhoff, check_properness

ETA_FLOOR = 1e-3
VERTEX_TOL = 1e-10


def _branch(kind, g):
    """Exponent sign per ray; ``g == 0`` goes with the ``g >= 0`` branch."""
    up = np.asarray(g) >= 0
    if kind == "super":
        return np.where(up, -1.0, 1.0)
    return np.where(up, 1.0, -1.0)


def _offsets(g, k, eps, sign):
    # phi(eps) - phi(0) = G (exp(s k eps) - 1) = g
    return g / np.expm1(sign * k * eps)


def super_vertex_gradient(g, k, eps):
    """phi'(0) of the super test function for gap ``g``."""
    g = np.asarray(g, dtype=float)
    kb = k * np.asarray(eps, dtype=float)
    return np.where(g >= 0, k * g / -np.expm1(-kb), k * g / np.expm1(kb))


def sub_vertex_gradient(g, k, eps):
    """phi'(0) of the sub test function for gap ``g``."""
    g = np.asarray(g, dtype=float)
    kb = k * np.asarray(eps, dtype=float)
    return np.where(g >= 0, k * g / np.expm1(kb), k * g / -np.expm1(-kb))


def match_eta(G, lam: float, eta_floor: float = ETA_FLOOR) -> np.ndarray:
    """Per-ray constants making ``G_j - eta_j/lam`` equal across rays.

    ``eta_1`` is raised just enough that every ``eta_j`` stays above the
    floor; the smallest entry equals ``eta_floor``.
    """
    if not eta_floor > 0:
        raise DomainError("eta_floor must be positive")
    G = np.asarray(G, dtype=float)
    # eta_1 = floor + max(0, max_j lam (G_1 - G_j)) and eta_j = eta_1 + lam (G_j - G_1)
    # reduce to this form, which never dips below the floor through cancellation
    return eta_floor + lam * (G - G.min())


@dataclass(frozen=True)
class TestFunctionBundle:
    kind: str
    gap: np.ndarray
    eps: np.ndarray
    eta: np.ndarray
    sign: np.ndarray
    offset: np.ndarray
    theta: float
    lam: float
    C: float
    M: float

    __test__ = False  # keep pytest from collecting this class

    @property
    def ray_count(self):
        return len(self.gap)

    @property
    def k(self):
        return self.lam / self.C

    @property
    def shift(self):
        s = (self.C + self.eta) / self.lam - self.M
        return -s if self.kind == "super" else s

    def _e(self, i, x):
        return np.exp(self.sign[i - 1] * self.k * np.asarray(x, dtype=float))

    def phi(self, i, x):
        return self.offset[i - 1] * self._e(i, x) + self.shift[i - 1]

    def dphi(self, i, x):
        return self.sign[i - 1] * self.k * self.offset[i - 1] * self._e(i, x)

    def d2phi(self, i, x):
        return self.k**2 * self.offset[i - 1] * self._e(i, x)

    def residual(self, i, x):
        """ODE residual on ray ``i``; zero up to rounding."""
        lam, C, M, eta = self.lam, self.C, self.M, self.eta[i - 1]
        phi, dphi = self.phi(i, x), self.dphi(i, x)
        if self.kind == "super":
            return lam * phi - lam * M + C * (1 + np.abs(dphi)) + eta
        return lam * phi + lam * M - C * (1 + np.abs(dphi)) - eta

    def vertex_values(self):
        return self.offset + self.shift

    def samples(self, i, n=101):
        return np.linspace(0.0, self.eps[i - 1], n)

    def check(self, n=101, residual_tol=VERTEX_TOL, vertex_tol=VERTEX_TOL, gap_tol=1e-12):
        """List of violated invariants, each a dict naming ray and quantity.

        Tolerances are relative to the magnitudes involved, and never below a
        few units of rounding in those magnitudes: the second-order mode can
        make ``|phi|`` large, and then cancellation alone exceeds ``1e-12``.
        """
        bad = []
        ulp = 8 * np.finfo(float).eps
        if np.any(self.eta <= 0):
            bad.append(dict(check="eta-positive", eta=self.eta.tolist()))
        v = self.vertex_values()
        if np.ptp(v) > vertex_tol:
            bad.append(dict(check="vertex-continuity", spread=float(np.ptp(v))))
        for i in range(1, self.ray_count + 1):
            xs = self.samples(i, n)
            r = np.max(np.abs(self.residual(i, xs)))
            scale = self.lam * np.abs(self.phi(i, xs)).max() + self.C * np.abs(self.dphi(i, xs)).max()
            if r > max(residual_tol, ulp * scale):
                bad.append(dict(check="ode-residual", ray=i, residual=float(r)))
            jump = self.phi(i, self.eps[i - 1]) - self.phi(i, 0.0)
            size = abs(self.phi(i, self.eps[i - 1])) + abs(self.phi(i, 0.0))
            if abs(jump - self.gap[i - 1]) > max(gap_tol * max(1.0, abs(self.gap[i - 1])), ulp * size):
                bad.append(dict(check="boundary-gap", ray=i, error=float(jump - self.gap[i - 1])))
            d = np.diff(self.dphi(i, xs))
            mono = d.max() if self.kind == "super" else -d.min()
            if mono > max(1e-12, ulp) * max(1.0, np.abs(self.dphi(i, xs)).max()):
                bad.append(dict(check="gradient-monotone", ray=i, excess=float(mono)))
            slope = jump / self.eps[i - 1]
            g0 = self.dphi(i, 0.0)
            excess = slope - g0 if self.kind == "super" else g0 - slope
            if excess > max(1e-12 * max(1.0, abs(g0)), ulp * size / self.eps[i - 1]):
                bad.append(dict(check="secant-bound", ray=i, excess=float(excess)))
        return bad

    def to_csv(self, n=101):
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["ray", "x", "phi", "dphi", "d2phi", "residual"])
        for i in range(1, self.ray_count + 1):
            xs = self.samples(i, n)
            for row in zip(xs, self.phi(i, xs), self.dphi(i, xs), self.d2phi(i, xs),
                           self.residual(i, xs)):
                w.writerow([i, *(repr(float(v)) for v in row)])
        return buf.getvalue()


def second_order_constant(C, M, theta, lam, eps):
    """Inflated C keeping |phi''| <= 1 on every ray."""
    eps = np.asarray(eps, dtype=float)
    return float(max(C, np.max(2 * (M + theta) * lam * np.exp(lam * eps / C) / eps)))


def _build(kind, base, at_eps, eps, theta, lam, C, M, eta, eta_floor, order):
    at_eps = np.atleast_1d(np.asarray(at_eps, dtype=float))
    eps = np.broadcast_to(np.asarray(eps, dtype=float), at_eps.shape).copy()
    if not theta > 0 or not lam > 0 or not C > 0:
        raise DomainError("theta, lam and C must be positive")
    if np.any(eps <= 0):
        raise DomainError("every eps_i must be positive")
    if at_eps.size < 2:
        raise DomainError("a star network needs at least 2 rays")
    gap = at_eps - base - theta if kind == "super" else at_eps - base + theta
    if order == "second":
        if np.any(np.abs(gap) > 2 * (M + theta)):
            raise DomainError("|gap| exceeds 2(M + theta): M does not bound the solution")
        C = second_order_constant(C, M, theta, lam, eps)
    elif order != "first":
        raise DomainError(f"order must be 'first' or 'second', got {order!r}")
    k = lam / C
    sign = _branch(kind, gap)
    offset = _offsets(gap, k, eps, sign)
    if eta is None:
        eta = match_eta(offset if kind == "super" else -offset, lam, eta_floor)
    else:
        eta = np.asarray(eta, dtype=float)
        if eta.shape != gap.shape or np.any(eta <= 0):
            raise DomainError("eta must be one positive value per ray")
    bundle = TestFunctionBundle(kind, gap, eps, eta, sign, offset, float(theta), float(lam),
                                float(C), float(M))
    v = bundle.vertex_values()
    if np.ptp(v) > VERTEX_TOL:
        i, j = int(np.argmin(v)) + 1, int(np.argmax(v)) + 1
        raise ConsistencyError(
            f"rays {i} and {j} disagree at the vertex by {np.ptp(v):.6g}"
        )
    return bundle


def build_super_test_function(u0, u_eps, eps, theta, lam, C, M, *, eta=None,
                              eta_floor=ETA_FLOOR, order="first"):
    """Test function touching a super solution ``u`` from below at the vertex.

    ``u0`` is u(0), ``u_eps[i]`` is u_i(eps_i), and ``M`` a strict upper bound
    of u. Pass ``eta`` to fix the per-ray constants instead of matching them;
    they must then already give a continuous vertex value.
    """
    return _build("super", u0, u_eps, eps, theta, lam, C, M, eta, eta_floor, order)


def build_sub_test_function(v0, v_eps, eps, theta, lam, C, M, *, eta=None,
                            eta_floor=ETA_FLOOR, order="first"):
    """Test function touching a sub solution ``v`` from above at the vertex (``v > -M``)."""
    return _build("sub", v0, v_eps, eps, theta, lam, C, M, eta, eta_floor, order)


def grad_at_vertex(b: TestFunctionBundle, i: int) -> float:
    if not 1 <= i <= b.ray_count:
        raise DomainError(f"ray {i} not in 1..{b.ray_count}")
    fn = super_vertex_gradient if b.kind == "super" else sub_vertex_gradient
    return float(fn(b.gap[i - 1], b.k, b.eps[i - 1]))


# ----------------------------------------------------------------------------
# barriers


@dataclass(frozen=True)
class BarrierPair:
    """Super barrier ``A + B exp(-x)`` and sub barrier ``-A - B exp(-x)``."""

    A: float
    B: float

    def upper(self, x):
        return self.A + self.B * np.exp(-np.asarray(x, dtype=float))

    def lower(self, x):
        return -self.upper(x)

    def check(self, H: HamiltonianSet, F: KirchhoffCondition, n=1001, tol=1e-12):
        """Residuals of the barrier inequalities; all must be >= -tol."""
        I = H.ray_count
        A, B = self.A, self.B
        xs = np.linspace(0.0, H.ray_length, n)
        e = self.B * np.exp(-xs)
        out = {
            "F_super": -float(F(A + B, np.full(I, -B))),
            "F_sub": float(F(-A - B, np.full(I, B))),
        }
        qs, qb = [], []
        for q in H.evaluators:
            qs.append(np.min(q(xs, A + e, -e, 0.0 if q.first_order else e)))
            qb.append(-np.max(q(xs, -A - e, e, 0.0 if q.first_order else -e)))
        out["Q_super"] = float(min(qs))
        out["Q_sub"] = float(min(qb))
        out["ok"] = all(v >= -tol for v in out.values())
        return out


def build_barriers(H: HamiltonianSet, F: KirchhoffCondition, I: int | None = None,
                   R: float | None = None, n=1001, inflate=1.1, dirichlet=None) -> BarrierPair:
    """Constants ``A, B`` of the barrier pair.

    ``B = |F(0, 0)| / (I alpha)`` makes the Kirchhoff inequalities hold at the
    vertex, and ``A`` is ``inflate / lam`` times the largest ``|Q_i|`` met by
    the barriers with zero value part, sampled on ``n`` points per ray. With
    ``dirichlet`` data, ``A`` is raised if needed so the barriers also enclose
    the boundary values at ``x = R``.
    """
    I = H.ray_count if I is None else I
    R = H.ray_length if R is None else R
    if I != H.ray_count:
        raise DomainError(f"I = {I} but the Hamiltonian set has {H.ray_count} rays")
    for rep in (check_properness(H, 2000), check_kirchhoff(F, I, 2000)):
        if rep.status == FAILED:
            raise PreconditionError(f"{rep.assumption} check failed: {rep.counterexample}")
    B = abs(float(F(0.0, np.zeros(I)))) / (I * F.alpha)
    xs = np.linspace(0.0, R, n)
    e = B * np.exp(-xs)
    worst = 0.0
    for q in H.evaluators:
        for p, X in ((-e, 0.0), (e, 0.0), (-e, e), (e, -e)):
            worst = max(worst, float(np.max(np.abs(q(xs, 0.0, p, X)))))
    A = inflate * worst / H.lam
    if dirichlet is not None:
        A = max(A, float(np.max(np.abs(dirichlet))) - B * np.exp(-R))
    return BarrierPair(A, B)
