import csv
import io

import numpy as np
import pytest

from starhjb.hamiltonian import Eikonal, HamiltonianSet, linear_kirchhoff
from starhjb.network import StarNetwork
from starhjb.solver import Grid, Problem, SolverConfig
from starhjb.verify import (
    check_trichotomy, constant_problem, convergence_order, cosh_problem, exponential_problem,
    random_problem, run_comparison_experiment, run_convergence_study, run_testfn_suite,
    run_weak_strong_check, vertex_hamiltonians,
)


def grid(P, N=50):
    return Grid.on(P.network, N)


# -- comparison ----------------------------------------------------------------


def test_comparison_constant_problem():
    P = constant_problem(0.3)
    rep = run_comparison_experiment(P, 0.1, grid(P))
    assert rep.passed
    assert 0 <= rep.measured["min_gap"] <= rep.measured["max_gap"] <= 0.1 + 1e-12


def test_comparison_zero_delta():
    P = exponential_problem()
    rep = run_comparison_experiment(P, 0.0, grid(P))
    assert rep.passed and rep.measured["min_gap"] == 0.0 == rep.measured["max_gap"]


def test_comparison_first_order_closed_form():
    P = exponential_problem()
    assert run_comparison_experiment(P, 0.05, grid(P)).passed
    with pytest.raises(ValueError):
        run_comparison_experiment(P, -0.1, grid(P))


# -- weak vs strong ------------------------------------------------------------


def test_weak_strong_closed_forms():
    for P in (exponential_problem(), cosh_problem()):
        rep = run_weak_strong_check(P, grid(P, 100))
        assert rep.passed
        assert rep.measured["kirchhoff_residual"] <= 1e-9
        # the generalized super condition: max(Q at the vertex, -F) >= 0 up to tolerance
        assert rep.measured["generalized_super"] >= -1e-9


def test_weak_strong_with_kirchhoff_constant():
    net = StarNetwork(3, 1.0)
    H = HamiltonianSet.from_builtins([Eikonal(1, 1, 1), Eikonal(1, 2, 0), Eikonal(2, 1, "x")], 1.0)
    P = Problem(net, H, linear_kirchhoff([1, 1, 1], c0=2.0), (0.5, 0.0, -0.5), "first")
    rep = run_weak_strong_check(P, grid(P))
    assert rep.passed and rep.measured["kirchhoff_residual"] <= 1e-9


def test_vertex_hamiltonians_match_ray_count():
    P = exponential_problem()
    from starhjb.solver import solve
    sol = solve(P, grid(P))
    assert vertex_hamiltonians(P, sol.values, sol.grid).shape == (2,)


# -- test-function suite -------------------------------------------------------


def test_testfn_suite_passes_and_reproduces():
    a = run_testfn_suite(seed=1, trials=200)
    b = run_testfn_suite(seed=1, trials=200)
    assert a.passed
    assert a.to_text() == b.to_text() and a.to_csv() == b.to_csv()
    assert a.measured["max_ode_residual"] <= 1e-10
    assert a.measured["max_secant_excess"] <= 1e-12
    assert a.elapsed is not None and "elapsed" not in a.to_text()


def _draw(gaps, **kw):
    d = dict(u0=0.0, eps=np.full(len(gaps), 0.1), theta=1e-3, lam=1.0, C=1.0, M=2.0)
    d.update(kw)
    d["u_eps"] = d["u0"] + np.asarray(gaps) + d["theta"]  # super gap equals `gaps`
    return d


def test_testfn_suite_degenerate_and_adversarial_draws():
    rep = run_testfn_suite(params=[_draw([0.0, 0.0, 0.0]), _draw([1.0, -1.0])])
    assert rep.passed
    from starhjb.testfn import build_super_test_function
    d = _draw([1.0, -1.0])
    b = build_super_test_function(d["u0"], d["u_eps"], d["eps"], d["theta"], 1.0, 1.0, 2.0)
    assert b.dphi(1, 0.0) > 0 > b.dphi(2, 0.0)


def test_testfn_suite_second_order_mode():
    rep = run_testfn_suite(seed=2, trials=100, order="second")
    assert rep.passed, rep.failures[:1]


def test_testfn_suite_rejects_no_trials():
    with pytest.raises(ValueError):
        run_testfn_suite(trials=0)


def test_trichotomy_helper():
    assert check_trichotomy(0.5, -0.5, 1.0, 0.1)
    assert check_trichotomy(0.5, 0.2, 1.0, 0.1)
    assert check_trichotomy(-0.2, -0.5, 1.0, 0.1)


# -- convergence ---------------------------------------------------------------


def test_convergence_order_fit():
    hs = np.array([0.1, 0.05, 0.025])
    assert convergence_order(hs, 3 * hs**2) == pytest.approx(2.0)


def test_convergence_constant_problem_exact():
    rep = run_convergence_study(constant_problem(), (10, 20, 40))
    assert rep.passed and rep.measured["order"] == float("inf")


def test_convergence_closed_forms():
    rep = run_convergence_study(cosh_problem(), min_order=1.8)
    assert rep.passed and rep.measured["errors"][1] <= 5e-4
    rep = run_convergence_study(exponential_problem(), min_order=0.9)
    assert rep.passed


def test_convergence_against_refined_solution():
    P = exponential_problem()
    P = P.with_dirichlet(P.dirichlet)  # drops the exact solution
    rep = run_convergence_study(P, (25, 50, 100), min_order=0.9)
    assert rep.parameters["reference"] == "refined" and rep.passed
    with pytest.raises(ValueError):
        run_convergence_study(P, (30, 50))


# -- reports -------------------------------------------------------------------


def test_report_serialization():
    P = constant_problem()
    rep = run_comparison_experiment(P, 0.1, grid(P, 10))
    text = rep.to_text()
    assert text.startswith("experiment: comparison\nresult: PASS\n")
    rows = list(csv.reader(io.StringIO(rep.to_csv())))
    assert rows[0] == ["experiment", "quantity", "value"]
    assert ["comparison", "passed", "True"] in rows


def test_random_problems_are_reproducible():
    a = random_problem(np.random.default_rng(3))
    b = random_problem(np.random.default_rng(3))
    assert a.dirichlet == b.dirichlet
    assert a.hamiltonians.evaluators == b.hamiltonians.evaluators
