import numpy as np
import pytest

from groupcf.domain import CostParams, FeatureSpec, FeasibleSet, InstanceGroup
from groupcf.formulation import build_colce_lr, extract_solution
from groupcf.miqp import MiqpBuilder
from groupcf.scorers import LinearModel
from groupcf.solver import (SolverOptions, brute_force_oracle, solve_miqp,
                            solve_relaxation)

from helpers import build_linear, random_ensemble_case, random_linear_case


def knapsack_qp():
    # min (x0-0.9)^2 + (x1-0.9)^2 with at most one of the two binaries on
    b = MiqpBuilder()
    v0 = b.add_var(("a", 0), 0, 1, integer=True, q=1.0, c=-1.8)
    v1 = b.add_var(("a", 1), 0, 1, integer=True, q=1.0, c=-1.8)
    b.add_const(2 * 0.81)
    b.add_row({v0: 1.0, v1: 1.0}, "<=", 1.0)
    return b.build()


def test_solver_options_validation():
    with pytest.raises(ValueError):
        SolverOptions(gap_tol=0.0)
    with pytest.raises(ValueError):
        SolverOptions(node_limit=0)
    with pytest.raises(ValueError):
        SolverOptions(time_limit=-1.0)
    with pytest.raises(ValueError):
        SolverOptions(branching="random")


def test_solve_relaxation_and_fixings():
    p = knapsack_qp()
    rel = solve_relaxation(p)
    # relaxation splits the budget: x0 = x1 = 0.5
    assert rel.feasible
    assert rel.value == pytest.approx(2 * 0.16, abs=1e-6)
    fixed = solve_relaxation(p, fixings={0: 1.0})
    assert fixed.value == pytest.approx(0.01 + 0.81, abs=1e-6)
    with pytest.raises(ValueError):
        solve_relaxation(p, fixings={0: 2.0})


def test_solve_miqp_simple_binary():
    res = solve_miqp(knapsack_qp())
    assert res.status == "optimal"
    # pick one of the binaries: cost 0.01 + 0.81
    assert res.objective == pytest.approx(0.82, abs=1e-6)
    assert res.assignment.sum() == pytest.approx(1.0)


def test_solve_miqp_proves_infeasibility():
    b = MiqpBuilder()
    v = b.add_var(("a", 0), 0, 1, integer=True)
    b.add_row({v: 1.0}, ">=", 2.0)
    res = solve_miqp(b.build())
    assert res.status == "infeasible"
    assert res.assignment is None


def test_solve_miqp_node_limit_status():
    rng = np.random.default_rng(5)
    case = random_linear_case(rng, max_instances=3, max_features=3)
    res = solve_miqp(build_linear(case), SolverOptions(node_limit=1))
    assert res.status in ("optimal", "node_limit", "infeasible")
    if res.status == "node_limit":
        assert res.node_count <= 1


def test_determinism_same_inputs_same_output():
    rng = np.random.default_rng(11)
    case = random_linear_case(rng)
    p1 = build_linear(case)
    p2 = build_linear(case)
    r1 = solve_miqp(p1)
    r2 = solve_miqp(p2)
    assert r1.status == r2.status
    assert r1.node_count == r2.node_count
    if r1.status == "optimal":
        assert r1.objective == r2.objective
        assert np.array_equal(r1.assignment, r2.assignment)


def test_branching_rules_agree_on_objective():
    rng = np.random.default_rng(21)
    for _ in range(5):
        p = build_linear(random_linear_case(rng))
        a = solve_miqp(p, SolverOptions(branching="priority"))
        b = solve_miqp(p, SolverOptions(branching="most_fractional"))
        assert a.status == b.status
        if a.status == "optimal":
            assert a.objective == pytest.approx(b.objective, abs=1e-6)


def test_oracle_matches_bnb_linear():
    rng = np.random.default_rng(7)
    for _ in range(15):
        p = build_linear(random_linear_case(rng))
        got = solve_miqp(p)
        want = brute_force_oracle(p)
        assert got.status == want.status
        if got.status == "optimal":
            assert got.objective == pytest.approx(want.objective,
                                                  abs=1e-6 * max(1, abs(want.objective)))


def test_oracle_matches_bnb_ensemble():
    rng = np.random.default_rng(13)
    for _ in range(6):
        p = random_ensemble_case(rng)[5]
        got = solve_miqp(p)
        want = brute_force_oracle(p)
        assert got.status == want.status
        if got.status == "optimal":
            assert got.objective == pytest.approx(want.objective,
                                                  abs=1e-6 * max(1, abs(want.objective)))


def test_oracle_refuses_oversized_problems():
    group = InstanceGroup.from_matrix(np.full((5, 5), 0.2))
    fs = FeasibleSet(features=tuple(
        FeatureSpec(name=f"f{j}", lower=0.0, upper=1.0) for j in range(5)))
    model = LinearModel(weights=np.ones(5), nu=2.0)
    p = build_colce_lr(group, model, fs, CostParams(), 3)
    with pytest.raises(ValueError, match="oracle limit"):
        brute_force_oracle(p)


def test_solution_respects_budget_row():
    group = InstanceGroup.from_matrix([[0.1, 0.1, 0.1]])
    fs = FeasibleSet(features=tuple(
        FeatureSpec(name=f"f{j}", lower=0.0, upper=2.0) for j in range(3)))
    model = LinearModel(weights=np.ones(3), nu=1.5)
    p = build_colce_lr(group, model, fs, CostParams(), 1, f_max=1)
    res = solve_miqp(p)
    assert res.status == "optimal"
    dec = extract_solution(p, res.assignment)
    assert dec["xi_star"].sum() <= 1
    # single feature must carry the whole move: 0.1 -> 1.3
    assert res.objective == pytest.approx(1.2 ** 2, abs=1e-6)
