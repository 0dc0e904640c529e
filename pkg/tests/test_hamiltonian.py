import numpy as np
import pytest

from starhjb.errors import DomainError
from starhjb.hamiltonian import (
    CERTIFIED, DECLARED, FAILED, PASSED, Advection, CustomHamiltonian, Eikonal, HamiltonianSet,
    KirchhoffCondition, Viscous, check_all, check_ellipticity, check_gradient_growth,
    check_kirchhoff, check_modulus, check_properness, check_x_lipschitz, eval_hamiltonian,
    linear_kirchhoff, make_hamiltonian,
)


def custom(fn, lam=1.0, first_order=False, **kw):
    return HamiltonianSet([CustomHamiltonian(fn, first_order)] * 2, lam, **kw)


def builtin(*qs, R=1.0):
    return HamiltonianSet.from_builtins(qs, R)


# -- evaluation ---------------------------------------------------------------


@pytest.mark.parametrize("q, args, expected", [
    (Eikonal(1, 1, 1), (0.5, 1, 0, 0), 0.0),
    (Viscous(1, 1, 1, 1), (0.0, 0, 2, 1), 0.0),
    (Advection(2, -1), (0.3, 1, 1, 7), 1.0),
])
def test_eval_examples(q, args, expected):
    H = builtin(q, q)
    assert eval_hamiltonian(H, 1, *args) == expected
    assert eval_hamiltonian(H, 2, *args) == expected


def test_eval_domain_errors():
    H = builtin(Eikonal(1, 1), Eikonal(1, 1))
    with pytest.raises(DomainError):
        eval_hamiltonian(H, 3, 0.5, 0, 0)
    with pytest.raises(DomainError):
        eval_hamiltonian(H, 1, 1.5, 0, 0)
    with pytest.raises(DomainError):
        eval_hamiltonian(H, 1, 0.5, np.nan, 0)
    with pytest.raises(DomainError):
        eval_hamiltonian(H, 1, 0.5, 0, np.inf)


def test_source_expression():
    q = Eikonal(1, 1, "exp(-x)")
    assert q(1.0, 0, 0) == pytest.approx(-np.exp(-1))


def test_make_hamiltonian_arity_and_family():
    assert make_hamiltonian("viscous", [1, 2, 3]).nu == 3
    with pytest.raises(DomainError):
        make_hamiltonian("viscous", [1, 2])
    with pytest.raises(DomainError):
        make_hamiltonian("hamiltonian", [1, 2])
    with pytest.raises(DomainError):
        make_hamiltonian("eikonal", [1, 0])  # c > 0 required


def test_set_basics():
    H = builtin(Eikonal(2, 1), Viscous(0.5, 1, 1))
    assert H.lam == 0.5 and H.ray_count == 2
    assert not H.first_order
    with pytest.raises(DomainError):
        HamiltonianSet([Eikonal(1, 1)] * 2, 0.0)


# -- properness ----------------------------------------------------------------


def test_properness_builtin_certified():
    assert check_properness(builtin(Eikonal(1, 1, 1), Eikonal(1, 1, 1))).status == CERTIFIED


def test_properness_reversed_fails_with_counterexample():
    H = custom(lambda x, u, p, X: -u + np.abs(p))
    rep = check_properness(H, 100)
    assert rep.status == FAILED
    cx = rep.counterexample
    assert (cx["u"], cx["v"], cx["difference"]) == (1.0, 0.0, -1.0)
    # the counterexample re-evaluates to a violation
    q = H[cx["ray"]]
    assert q(cx["x"], cx["u"], cx["p"], cx["X"]) - q(cx["x"], cx["v"], cx["p"], cx["X"]) \
        < H.lam * (cx["u"] - cx["v"])


def test_properness_sampled_pass():
    rep = check_properness(custom(lambda x, u, p, X: 2 * u + np.sin(p), lam=2.0), 10_000)
    assert rep.status == PASSED and rep.samples_used == 20_000


def test_properness_builtin_below_lam():
    H = HamiltonianSet([Eikonal(0.5, 1), Eikonal(1, 1)], 1.0)
    assert check_properness(H).status == FAILED


def test_checks_reproducible_with_seed():
    H = custom(lambda x, u, p, X: u + 0.5 * np.sin(3 * u) * (p > 3))
    a, b = check_properness(H, 5000, seed=3), check_properness(H, 5000, seed=3)
    assert a == b and a.status == FAILED


# -- ellipticity ---------------------------------------------------------------


def test_ellipticity_examples():
    assert check_ellipticity(builtin(Viscous(1, 1, 1), Viscous(1, 1, 1))).status == CERTIFIED
    assert check_ellipticity(builtin(Eikonal(1, 1), Eikonal(1, 1))).status == CERTIFIED
    ok = custom(lambda x, u, p, X: u + np.abs(p) - X)
    assert check_ellipticity(ok, 1000).status == PASSED
    bad = check_ellipticity(custom(lambda x, u, p, X: u + X**2), 1000)
    assert bad.status == FAILED
    assert (bad.counterexample["X"], bad.counterexample["Y"]) == (2.0, 0.0)
    assert bad.counterexample["Q_at_X"] > bad.counterexample["Q_at_Y"]


# -- growth --------------------------------------------------------------------


def test_growth_eikonal_declared_two():
    H = custom(lambda x, u, p, X: u + np.abs(p) - 1, first_order=True)
    rep = check_gradient_growth(H, M=1, K=0, declared=2.0)
    assert rep.status == PASSED
    assert rep.empirical_constant <= 2.0


def test_growth_superlinear_fails():
    H = custom(lambda x, u, p, X: u + p**2)
    for C in (10.0, 1e9):
        rep = check_gradient_growth(H, M=1, K=1, declared=C)
        assert rep.status == FAILED


def test_growth_viscous_declared_three():
    H = custom(lambda x, u, p, X: u + np.abs(p) - X)
    rep = check_gradient_growth(H, M=1, K=1, declared=3.0)
    assert rep.status == PASSED
    # the true supremum of |Q|/(1+|p|) is 2 at p = 0, |u| = |X| = 1
    assert 1.5 < rep.empirical_constant <= 2.0


def test_growth_builtin_certified():
    rep = check_gradient_growth(builtin(Eikonal(1, 1, 1), Viscous(1, 2, 1)), M=1, K=1)
    assert rep.status == CERTIFIED
    assert rep.empirical_constant <= rep.declared_constant


# -- x-regularity --------------------------------------------------------------


def test_x_lipschitz():
    H = builtin(Eikonal(1, 1, "sin(x)"), Eikonal(1, 1))
    assert check_x_lipschitz(H, 1.0).status == CERTIFIED
    Hc = custom(lambda x, u, p, X: u + (1 + x) * np.abs(p), first_order=True)
    assert check_x_lipschitz(Hc, 1.0, declared=1.0).status == PASSED
    assert check_x_lipschitz(Hc, 1.0, declared=0.5).status == FAILED


def test_modulus_declaration():
    assert check_modulus(builtin(Viscous(1, 1, 1), Viscous(1, 1, 1))).status == CERTIFIED
    fn = lambda x, u, p, X: u - X  # noqa: E731
    assert check_modulus(custom(fn)).status == FAILED
    assert check_modulus(custom(fn, modulus_declared=True)).status == DECLARED


# -- Kirchhoff -----------------------------------------------------------------


def test_kirchhoff_examples():
    assert check_kirchhoff(linear_kirchhoff([1, 1]), 2).status == CERTIFIED
    assert check_kirchhoff(linear_kirchhoff([1, 1], beta=1), 2).status == CERTIFIED
    cubic = KirchhoffCondition(lambda u, p: np.sum(np.asarray(p) ** 3, axis=-1), 1.0)
    rep = check_kirchhoff(cubic, 2, 1000)
    assert rep.status == FAILED
    cx = rep.counterexample
    assert cx["difference"] < cx["bound"]


def test_kirchhoff_sampled_pass_and_u_violation():
    F = KirchhoffCondition(lambda u, p: np.sum(p, axis=-1) + np.tanh(np.sum(p, axis=-1)) - u, 1.0)
    assert check_kirchhoff(F, 3, 2000).status == PASSED
    G = KirchhoffCondition(lambda u, p: np.sum(p, axis=-1) + u, 1.0)
    rep = check_kirchhoff(G, 2, 100)
    assert rep.status == FAILED and rep.counterexample["part"] == "u-monotone"


def test_kirchhoff_alpha_positive():
    with pytest.raises(DomainError):
        KirchhoffCondition(lambda u, p: 0.0, 0.0)
    with pytest.raises(DomainError):
        linear_kirchhoff([1, 1], beta=-1)


def test_sampled_checker_agrees_with_analytic_verdict():
    # wrapping builtins hides them from the analytic path; the sampler must agree
    qs = [Advection(1.5, -2, "sin(3*x)"), Eikonal(1, 0.5, "x^2"), Viscous(2, 1, 0.3, "1")]
    H = HamiltonianSet([CustomHamiltonian(q.__call__) for q in qs], 1.0, modulus_declared=True)
    assert check_properness(H, 5000).status == PASSED
    assert check_ellipticity(H, 5000).status == PASSED
    Hb = builtin(*qs)
    C = Hb.growth_constant(2.0, 3.0)
    assert check_gradient_growth(H, 2.0, 3.0, 5000, declared=C).status == PASSED
    F = linear_kirchhoff([1, 2, 3], beta=0.5, c0=1)
    Fw = KirchhoffCondition(F.evaluator, F.alpha)
    assert check_kirchhoff(Fw, 3, 5000).status == PASSED


def test_check_all_lines():
    H = builtin(Eikonal(1, 1, 1), Eikonal(1, 1, 1))
    reports = check_all(H, linear_kirchhoff([1, 1]))
    assert [r.assumption for r in reports] == [
        "properness", "ellipticity", "gradient-growth", "kirchhoff", "x-lipschitz"]
    assert all(r.ok for r in reports)
    assert reports[0].lines()[0] == "properness: certified-analytic"
