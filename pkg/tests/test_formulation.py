import numpy as np
import pytest

from groupcf.domain import (CostParams, FeatureSpec, FeasibleSet,
                            InstanceGroup, LinearRow, with_immutable,
                            default_bounds)
from groupcf.formulation import (big_m_feature, big_m_score, big_m_split,
                                 build_cesep, build_colce_atm, build_colce_lr,
                                 extract_solution)
from groupcf.scorers import LinearModel, Tree, TreeEnsemble, TreeNode, assign_leaf_ids

from helpers import (audit_indicator_rows, random_ensemble_case,
                     random_linear_case, build_linear)


def unit_fs(n):
    return FeasibleSet(features=tuple(
        FeatureSpec(name=f"f{j}", lower=0.0, upper=1.0) for j in range(n)))


def test_big_m_feature_is_tight_bound():
    # largest possible move below / above x0 inside [lb, ub]
    assert big_m_feature(0.5, -1.0, 2.0) == pytest.approx((1.5, 1.5))
    assert big_m_feature(-3.0, 0.0, 1.0) == pytest.approx((0.0, 4.0))
    with pytest.raises(ValueError):
        big_m_feature(0.0, -np.inf, 1.0)


def test_big_m_score_dominates_box():
    m = LinearModel(weights=np.array([1.0, -2.0]), intercept=0.5)
    lb, ub = np.array([-1.0, 0.0]), np.array([1.0, 2.0])
    bound = big_m_score(m, lb, ub)
    rng = np.random.default_rng(0)
    for _ in range(200):
        x = rng.uniform(lb, ub)
        assert abs(m.score(x)) <= bound + 1e-12


def test_big_m_split_safety_floor():
    # threshold close to the upper bound: the raw magnitude bound alone would
    # miss the strictness margin, the floor must cover it
    eps = 1e-5
    m1, m2 = big_m_split(0.0, 1.0, 1.0 - eps / 2, eps)
    assert m1 >= 1.0 - (1.0 - eps / 2) + eps - 1e-18  # ub - c + eps
    m1b, m2b = big_m_split(0.0, 1.0, eps / 2, eps)
    assert m2b >= eps / 2 + eps - 0.0 - 1e-18  # c + eps - lb
    # and both stay at least the paper magnitudes when those are larger
    m1c, m2c = big_m_split(-2.0, 2.0, 0.0, eps)
    assert m1c >= 2.0 and m2c >= 2.0 + eps


def test_colce_lr_shapes_and_meta():
    group = InstanceGroup.from_matrix([[0.2, 0.8], [0.4, 0.1]])
    fs = unit_fs(2)
    model = LinearModel(weights=np.array([1.0, 1.0]), intercept=0.0, nu=1.5)
    cp = CostParams(lambda_ind=0.1, lambda_glob=0.2)
    p = build_colce_lr(group, model, fs, cp, i_star=1)
    # per instance: 2 x, 2 xi, 1 y, 1 u; plus 2 global flags
    assert p.n_vars == 2 * (2 + 2 + 1 + 1) + 2
    assert p.meta["i_star"] == 1 and p.meta["scorer_kind"] == "linear"
    assert p.meta["f_max"] is None
    audit_indicator_rows(p)


def test_colce_lr_argument_validation():
    group = InstanceGroup.from_matrix([[0.2, 0.8]])
    fs = unit_fs(2)
    model = LinearModel(weights=np.array([1.0, 1.0]))
    with pytest.raises(ValueError, match="i_star"):
        build_colce_lr(group, model, fs, CostParams(), i_star=5)
    with pytest.raises(ValueError, match="mutually exclusive"):
        build_colce_lr(group, model, fs, CostParams(lambda_glob=1.0), 1, f_max=1)
    with pytest.raises(ValueError, match="f_max"):
        build_colce_lr(group, model, fs, CostParams(), 1, f_max=9)
    with pytest.raises(ValueError, match="dimension"):
        build_colce_lr(group, LinearModel(weights=np.array([1.0])), fs,
                       CostParams(), 1)


def test_budget_row_counts_unpinned_global_flags():
    group = InstanceGroup.from_matrix([[0.2, 0.8, 0.5]])
    fs = with_immutable(default_bounds(group, feature_names=["a", "b", "c"]), ["c"])
    model = LinearModel(weights=np.array([1.0, 1.0, 1.0]))
    p = build_colce_lr(group, model, fs, CostParams(), 1, f_max=2)
    budget_rows = [r for r in range(p.n_rows)
                   if p.senses[r] == "<=" and p.rhs[r] == 2.0
                   and p.A[r].nnz == 2]
    assert budget_rows, "budget row missing"


def test_immutable_features_are_pinned():
    group = InstanceGroup.from_matrix([[0.25, 0.75]])
    fs = with_immutable(unit_fs(2), ["f1"])
    model = LinearModel(weights=np.array([1.0, 1.0]))
    p = build_colce_lr(group, model, fs, CostParams(), 1)
    xj = p.tags[("x", 0, 1)]
    assert p.lb[xj] == p.ub[xj] == 0.75
    assert p.ub[p.tags[("xi", 0, 1)]] == 0.0
    assert p.ub[p.tags[("xistar", 1)]] == 0.0


def test_one_hot_rows_emitted():
    feats = (FeatureSpec(name="a", kind="binary", one_hot_group="g"),
             FeatureSpec(name="b", kind="binary", one_hot_group="g"))
    fs = FeasibleSet(features=feats)
    group = InstanceGroup.from_matrix([[1.0, 0.0]])
    model = LinearModel(weights=np.array([1.0, -1.0]))
    p = build_colce_lr(group, model, fs, CostParams(), 1)
    eq_rows = [r for r in range(p.n_rows) if p.senses[r] == "="
               and p.rhs[r] == 1.0 and p.A[r].nnz == 2]
    assert eq_rows, "one-hot sum row missing"
    # binary features become integer x variables
    assert p.is_integer[p.tags[("x", 0, 0)]]


def test_linking_rows_pass_through():
    fs = FeasibleSet(features=unit_fs(2).features,
                     linking_rows=(LinearRow(coeffs=((0, 0, 1.0), (1, 0, -1.0)),
                                             sense="=", rhs=0.0),))
    group = InstanceGroup.from_matrix([[0.2, 0.2], [0.4, 0.4]])
    model = LinearModel(weights=np.array([1.0, 1.0]))
    p = build_colce_lr(group, model, fs, CostParams(), 2)
    match = [r for r in range(p.n_rows) if p.senses[r] == "=" and p.rhs[r] == 0.0
             and sorted(p.A[r].indices.tolist()) ==
             sorted([p.tags[("x", 0, 0)], p.tags[("x", 1, 0)]])]
    assert match, "linking row missing"


def test_cesep_fixes_selection():
    fs = unit_fs(2)
    model = LinearModel(weights=np.array([1.0, 1.0]), nu=1.5)
    p = build_cesep(np.array([0.2, 0.2]), model, fs, lambda_ind=0.1)
    y = p.tags[("y", 0)]
    assert p.lb[y] == p.ub[y] == 1.0
    assert ("xistar", 0) not in p.tags
    with pytest.raises(ValueError):
        build_cesep(np.array([0.2, 0.2]), model, fs, lambda_ind=-1.0)


def stump_tree(threshold=0.5):
    return Tree(root=assign_leaf_ids(TreeNode(
        split_feature=0, threshold=threshold,
        left=TreeNode(leaf_id=0, output=-1),
        right=TreeNode(leaf_id=0, output=1))), weight=1.0)


def test_colce_atm_structure():
    group = InstanceGroup.from_matrix([[0.3]])
    fs = unit_fs(1)
    ens = TreeEnsemble(trees=(stump_tree(),), nu=0.5)
    p = build_colce_atm(group, ens, fs, CostParams(), 1)
    assert ("z", 0, 0, 0) in p.tags and ("z", 0, 0, 1) in p.tags
    assert ("uatm", 0, 0, 1) in p.tags  # only the positive leaf
    assert ("uatm", 0, 0, 0) not in p.tags
    audit_indicator_rows(p)


def test_colce_atm_rejects_unknown_split_feature():
    group = InstanceGroup.from_matrix([[0.3]])
    fs = unit_fs(1)
    bad = Tree(root=assign_leaf_ids(TreeNode(
        split_feature=3, threshold=0.5,
        left=TreeNode(leaf_id=0, output=-1),
        right=TreeNode(leaf_id=0, output=1))), weight=1.0)
    with pytest.raises(ValueError, match="unknown feature"):
        build_colce_atm(group, TreeEnsemble(trees=(bad,), nu=0.5), fs,
                        CostParams(), 1)


def test_extract_solution_recomputes_flags():
    group = InstanceGroup.from_matrix([[0.0, 0.0]])
    fs = unit_fs(2)
    model = LinearModel(weights=np.array([1.0, 1.0]), nu=1.0)
    p = build_colce_lr(group, model, fs, CostParams(lambda_ind=0.1), 1)
    v = np.zeros(p.n_vars)
    v[p.tags[("x", 0, 0)]] = 1.0
    v[p.tags[("y", 0)]] = 1.0
    v[p.tags[("u", 0)]] = 1.0
    # leave the xi variables at zero: extraction must not trust them
    dec = extract_solution(p, v)
    assert dec["xi"].tolist() == [[1, 0]]
    assert dec["xi_star"].tolist() == [1, 0]
    assert dec["objective"]["total"] == pytest.approx(1.0 + 0.1)
    with pytest.raises(ValueError):
        extract_solution(p, v[:-1])


def test_indicator_audit_on_random_corpus():
    rng = np.random.default_rng(42)
    for _ in range(25):
        audit_indicator_rows(build_linear(random_linear_case(rng)))
    for _ in range(10):
        audit_indicator_rows(random_ensemble_case(rng)[5])
