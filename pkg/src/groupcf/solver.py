"""Exact MIQP solving: best-first branch-and-bound plus an enumeration oracle.

Each node relaxes the unfixed integer variables into their boxes and solves the
resulting convex QP; branching is on fractional integers. Incumbents come from
integral relaxation points and from fix-and-resolve heuristics (rounding at
0.5, a support pattern derived from the relaxed counterfactuals, and a greedy
budget-opening pattern in feature-budget mode); a node whose heuristic matches
its own bound is pruned without branching.
The brute-force oracle enumerates integer assignments and is meant as an
independent check of the search, not as a production path.
"""

from __future__ import annotations

import heapq
import itertools
import math
import time
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .miqp import MiqpProblem
from .qp import ContinuousResult, propagate_bounds, solve_continuous

_BRANCH_PRIORITY = {"xistar": 0, "z": 1, "x": 2, "y": 3, "xi": 4, "uatm": 5}


@dataclass(frozen=True)
class SolverOptions:
    int_tol: float = 1e-6
    gap_tol: float = 1e-6
    kkt_tol: float = 1e-8
    node_limit: Optional[int] = None
    time_limit: Optional[float] = None
    branching: str = "priority"  # or "most_fractional"
    seed: int = 0

    def __post_init__(self):
        if min(self.int_tol, self.gap_tol, self.kkt_tol) <= 0:
            raise ValueError("tolerances must be positive")
        if self.node_limit is not None and self.node_limit <= 0:
            raise ValueError("node limit must be positive")
        if self.time_limit is not None and self.time_limit <= 0:
            raise ValueError("time limit must be positive")
        if self.branching not in ("most_fractional", "priority"):
            raise ValueError(f"unknown branching rule {self.branching!r}")


@dataclass
class SolveResult:
    status: str  # optimal | infeasible | node_limit | time_limit
    assignment: Optional[np.ndarray]
    objective: Optional[float]
    best_bound: float
    node_count: int
    wall_time: float


@dataclass
class RelaxationResult:
    feasible: bool
    value: float
    point: Optional[np.ndarray]


def solve_relaxation(problem: MiqpProblem, fixings: Optional[dict] = None,
                     options: SolverOptions = SolverOptions()) -> RelaxationResult:
    """Convex relaxation with the given integer fixings (index -> value)."""
    lb, ub = problem.lb.copy(), problem.ub.copy()
    if fixings:
        for idx, val in fixings.items():
            if val < lb[idx] - 1e-9 or val > ub[idx] + 1e-9:
                raise ValueError(f"fixing of variable {idx} outside its domain")
            lb[idx] = ub[idx] = float(val)
    tightened = propagate_bounds(problem, lb, ub)
    if tightened is None:
        return RelaxationResult(False, float("inf"), None)
    res = _solve_node(problem, *tightened, options)
    if res.status == "infeasible":
        return RelaxationResult(False, float("inf"), None)
    return RelaxationResult(True, res.value, res.point)


def _solve_node(problem, lb, ub, options) -> ContinuousResult:
    res = solve_continuous(problem, lb, ub, kkt_tol=options.kkt_tol)
    if res.status == "numerical":
        # retry with a looser tolerance, then with a tiny regularizer whose
        # bound correction is handled inside solve_continuous
        res = solve_continuous(problem, lb, ub, kkt_tol=options.kkt_tol * 100)
    if res.status == "numerical":
        res = solve_continuous(problem, lb, ub, kkt_tol=options.kkt_tol * 100,
                               reg=1e-8)
    if res.status == "numerical":
        raise RuntimeError("node QP failed to converge after retry")
    return res


def _fractional(problem, point, int_tol):
    ints = problem.integer_indices()
    vals = point[ints]
    frac = np.abs(vals - np.round(vals))
    return ints[frac > int_tol], frac[frac > int_tol]


def _pick_branch_var(problem, cand, frac, rule):
    # most fractional; ties broken by semantic class (global flags and leaf
    # choices shape the problem most), then by index
    def key(k):
        tag = problem.var_tag[cand[k]]
        prio = _BRANCH_PRIORITY.get(tag[0], 9)
        if rule == "priority":
            return (prio, -frac[k], cand[k])
        return (-round(frac[k], 9), prio, cand[k])

    return cand[min(range(len(cand)), key=key)]


def _try_fixed_pattern(problem, lb0, ub0, values, ints, options):
    """Fix every integer variable to the given values and re-solve."""
    lb, ub = lb0.copy(), ub0.copy()
    vals = np.clip(np.floor(np.asarray(values) + 0.5), lb[ints], ub[ints])
    lb[ints] = vals
    ub[ints] = vals
    tightened = propagate_bounds(problem, lb, ub)
    if tightened is None:
        return None
    res = _solve_node(problem, *tightened, options)
    if res.status != "optimal":
        return None
    point = res.point.copy()
    point[ints] = vals
    if problem.row_violation(point) > 1e-6:
        return None
    return problem.objective_value(point), point


def _round_selection_and_leaves(problem, point, pattern):
    """Round the selection flags (largest relaxed values win, respecting the
    cardinality row) and pick one leaf per tree at the relaxed argmax; product
    flags follow as y*z. Mutates and returns the pattern vector."""
    meta = problem.meta
    I = meta["n_instances"]
    if ("y", 0) in problem.tags:
        yvals = np.array([point[problem.tags[("y", i)]] for i in range(I)])
        order = np.lexsort((np.arange(I), -yvals))
        chosen = set(order[: int(round(meta["i_star"]))])
        for i in range(I):
            pattern[problem.tags[("y", i)]] = 1.0 if i in chosen else 0.0
    groups = {}
    for tag, idx in problem.tags.items():
        if tag[0] == "z":
            groups.setdefault((tag[1], tag[2]), []).append((tag[3], idx))
    for (i, t), leaves in groups.items():
        leaves.sort()
        best = max(leaves, key=lambda p: (point[p[1]], -p[0]))
        for lid, idx in leaves:
            pattern[idx] = 1.0 if lid == best[0] else 0.0
    for tag, idx in problem.tags.items():
        if tag[0] == "uatm":
            _, i, t, l = tag
            pattern[idx] = min(pattern[problem.tags[("y", i)]],
                               pattern[problem.tags[("z", i, t, l)]])
    return pattern


def _support_pattern(problem, point, move_tol=None):
    """Integer pattern implied by the relaxed counterfactual matrix: change
    flags from actual coordinate moves (trimmed to the feature budget when one
    is set), selection flags from the largest relaxed values, one leaf per
    tree at the relaxed argmax."""
    meta = problem.meta
    if "x0" not in meta:
        return None
    if move_tol is None:
        move_tol = meta["change_tol"]
    I, J = meta["n_instances"], meta["n_features"]
    x0 = meta["x0"]
    pattern = point.copy()
    moves = np.zeros((I, J))
    for i in range(I):
        for j in range(J):
            moves[i, j] = abs(point[problem.tags[("x", i, j)]] - x0[i, j])
    xi = (moves > move_tol).astype(float)
    f_max = meta.get("f_max")
    if f_max is not None and int(xi.max(axis=0).sum()) > f_max:
        # keep the features with the largest total relaxed movement
        order = np.lexsort((np.arange(J), -moves.sum(axis=0)))
        xi[:, order[f_max:]] = 0.0
    for i in range(I):
        for j in range(J):
            if ("xi", i, j) in problem.tags:
                pattern[problem.tags[("xi", i, j)]] = xi[i, j]
    for j in range(J):
        if ("xistar", j) in problem.tags:
            pattern[problem.tags[("xistar", j)]] = xi[:, j].max()
    return _round_selection_and_leaves(problem, point, pattern)


def _budget_pattern(problem, point, lb, ub):
    """Budget-mode pattern: open the feature budget greedily.

    Features whose global flag is already fixed on at this node stay on; the
    remaining budget goes to the free features with the largest relaxed global
    flags. Individual flags open fully on the selected features, which is
    optimal whenever their objective weight is zero (the usual budget setup).
    """
    meta = problem.meta
    f_max = meta.get("f_max")
    if f_max is None or "x0" not in meta:
        return None
    J = meta["n_features"]
    stars = [(j, problem.tags[("xistar", j)]) for j in range(J)
             if ("xistar", j) in problem.tags]
    if not stars:
        return None
    forced = [j for j, idx in stars if lb[idx] > 0.5]
    free = [(j, idx) for j, idx in stars if lb[idx] <= 0.5 <= ub[idx]]
    budget = int(f_max) - len(forced)
    if budget < 0:
        return None
    free.sort(key=lambda p: (-point[p[1]], p[0]))
    allowed = set(forced) | {j for j, _ in free[:budget]}
    pattern = point.copy()
    for j, idx in stars:
        pattern[idx] = 1.0 if j in allowed else 0.0
    for tag, idx in problem.tags.items():
        if tag[0] == "xi":
            pattern[idx] = 1.0 if tag[2] in allowed else 0.0
    return _round_selection_and_leaves(problem, point, pattern)


def solve_miqp(problem: MiqpProblem, options: SolverOptions = SolverOptions(),
               warm: Optional[dict] = None) -> SolveResult:
    """Best-first branch and bound. Deterministic for fixed inputs/options.

    warm optionally maps integer variable indices to 0/1 values; the pattern
    is tried once up front and, when feasible, seeds the incumbent. It never
    affects the proven bound or the returned status semantics.
    """
    start = time.perf_counter()
    ints = problem.integer_indices()
    incumbent = None
    incumbent_val = float("inf")
    if warm:
        values = np.array([warm.get(i, 0.0) for i in ints])
        try:
            got = _try_fixed_pattern(problem, problem.lb, problem.ub, values,
                                     ints, options)
        except RuntimeError:
            got = None
        if got is not None:
            incumbent_val, incumbent = got
    node_count = 0
    seq = 0
    # heap entries: (bound, seq, lb, ub, retried)
    heap = [(-float("inf"), seq, problem.lb.copy(), problem.ub.copy(), False)]
    best_bound = -float("inf")

    def gap_ok(val, bound):
        return val - bound <= options.gap_tol * max(1.0, abs(val))

    status = None
    while heap:
        bound, _, lb, ub, retried = heapq.heappop(heap)
        best_bound = bound
        if incumbent is not None and gap_ok(incumbent_val, bound):
            best_bound = incumbent_val
            break
        if options.node_limit is not None and node_count >= options.node_limit:
            status = "node_limit"
            break
        if options.time_limit is not None and time.perf_counter() - start > options.time_limit:
            status = "time_limit"
            break
        tightened = propagate_bounds(problem, lb, ub)
        if tightened is None:
            continue
        lb, ub = tightened
        node_count += 1
        try:
            res = _solve_node(problem, lb, ub, options)
        except RuntimeError:
            if retried:
                raise
            seq += 1
            heapq.heappush(heap, (bound, seq, lb, ub, True))
            continue
        if res.status == "infeasible":
            continue
        node_val = max(res.value, bound)
        if incumbent is not None and gap_ok(incumbent_val, node_val):
            continue
        cand, frac = _fractional(problem, res.point, options.int_tol)
        if len(cand) == 0:
            if node_val < incumbent_val:
                incumbent, incumbent_val = res.point.copy(), node_val
            continue
        # incumbent heuristics; a node whose heuristic value already matches
        # its relaxation bound is solved and needs no branching
        node_heur = float("inf")
        extras = node_count == 1 or node_count % 5 == 0
        for values in _heuristic_patterns(problem, res.point, ints, lb, ub, extras):
            got = _try_fixed_pattern(problem, lb, ub, values, ints, options)
            if got is not None:
                node_heur = min(node_heur, got[0])
                if got[0] < incumbent_val:
                    incumbent_val, incumbent = got
        if math.isfinite(node_heur) and gap_ok(node_heur, node_val):
            continue
        var = _pick_branch_var(problem, cand, frac, options.branching)
        val = res.point[var]
        for lo, hi in ((lb[var], math.floor(val + options.int_tol)),
                       (math.ceil(val - options.int_tol), ub[var])):
            clb, cub = lb.copy(), ub.copy()
            clb[var] = max(clb[var], lo)
            cub[var] = min(cub[var], hi)
            if clb[var] > cub[var]:
                continue
            seq += 1
            heapq.heappush(heap, (node_val, seq, clb, cub, False))
    else:
        best_bound = incumbent_val if incumbent is not None else float("inf")

    if incumbent is not None:
        polished = _polish_incumbent(problem, incumbent, ints, options)
        if polished is not None and \
                polished[0] <= incumbent_val + 1e-7 * max(1.0, abs(incumbent_val)):
            incumbent_val, incumbent = polished
            best_bound = min(best_bound, incumbent_val)

    wall = time.perf_counter() - start
    if status is None:
        status = "optimal" if incumbent is not None else "infeasible"
    if status in ("node_limit", "time_limit") and incumbent is None:
        return SolveResult(status, None, None, best_bound, node_count, wall)
    if status == "infeasible":
        return SolveResult(status, None, None, float("inf"), node_count, wall)
    return SolveResult(status, incumbent, incumbent_val, best_bound, node_count, wall)


def _polish_incumbent(problem, incumbent, ints, options):
    """Exactness cleanup of the final incumbent.

    Interior-point points can drift ~1e-5 along flat directions, leaving
    nominally unchanged coordinates slightly off their originals. Re-deriving
    the change flags from the incumbent's moves at a coarse threshold and
    fixing the pattern pins those coordinates exactly (bound propagation
    collapses their boxes), without ever worsening the objective: the caller
    only accepts the polished point when its value does not increase.
    """
    pattern = _support_pattern(problem, incumbent, move_tol=1e-4)
    if pattern is None:
        return None
    try:
        return _try_fixed_pattern(problem, problem.lb, problem.ub,
                                  pattern[ints], ints, options)
    except RuntimeError:
        return None


def _heuristic_patterns(problem, point, ints, lb, ub, extras):
    """Patterns to fix-and-resolve at a node. The pattern matching the node's
    structure (budget opening in budget mode, the move support otherwise) runs
    at every node; the others are periodic extras."""
    budget = _budget_pattern(problem, point, lb, ub)
    if budget is not None:
        yield budget[ints]
    else:
        support = _support_pattern(problem, point)
        if support is not None:
            yield support[ints]
    if extras:
        yield point[ints]  # rounding at 0.5 happens inside the fixer
        if budget is not None:
            support = _support_pattern(problem, point)
            if support is not None:
                yield support[ints]


def brute_force_oracle(problem: MiqpProblem, max_binaries: int = 20,
                       options: SolverOptions = SolverOptions()) -> SolveResult:
    """Exact enumeration over integer assignments; the test oracle.

    Structured variables cut the enumeration without losing exactness: one-leaf
    equalities restrict leaf flags to unit patterns, selection flags respect
    their cardinality row, product flags are forced to y*z by their rows, and
    global change flags are set to the componentwise maximum of the individual
    flags (any larger value is never better since their objective weight is
    nonnegative and they only appear in lower-bounding rows and the budget row).
    """
    start = time.perf_counter()
    ints = problem.integer_indices()
    free = [i for i in ints if problem.lb[i] < problem.ub[i] - 1e-12]
    if len(free) > max_binaries:
        raise ValueError(f"{len(free)} free integer variables exceed the "
                         f"oracle limit of {max_binaries}")
    by_kind = {}
    for idx in free:
        by_kind.setdefault(problem.var_tag[idx][0], []).append(idx)
    y_vars = sorted(by_kind.get("y", []), key=lambda i: problem.var_tag[i])
    xi_vars = sorted(by_kind.get("xi", []), key=lambda i: problem.var_tag[i])
    star_vars = sorted(by_kind.get("xistar", []), key=lambda i: problem.var_tag[i])
    z_groups = {}
    for idx in sorted(by_kind.get("z", []), key=lambda i: problem.var_tag[i]):
        _, i, t, l = problem.var_tag[idx]
        z_groups.setdefault((i, t), []).append((l, idx))
    other = [i for i in free
             if problem.var_tag[i][0] not in ("y", "xi", "xistar", "z", "uatm")]

    i_star = problem.meta.get("i_star")
    n_y = len(y_vars)
    fixed_y_ones = sum(1 for i in ints if problem.var_tag[i][0] == "y"
                       and problem.lb[i] > 0.5)
    if i_star is not None:
        need = int(i_star) - fixed_y_ones
        y_patterns = [set(c) for c in itertools.combinations(range(n_y), need)] \
            if 0 <= need <= n_y else []
    else:
        y_patterns = [set(c) for r in range(n_y + 1)
                      for c in itertools.combinations(range(n_y), r)]

    def other_ranges(idx):
        return range(int(math.ceil(problem.lb[idx] - 1e-9)),
                     int(math.floor(problem.ub[idx] + 1e-9)) + 1)

    best_val = float("inf")
    best_point = None
    node_count = 0
    z_choices = [z_groups[k] for k in sorted(z_groups)]
    for y_on in y_patterns:
        fix = {}
        for k, idx in enumerate(y_vars):
            fix[idx] = 1.0 if k in y_on else 0.0
        for z_pick in itertools.product(*[range(len(g)) for g in z_choices]) \
                if z_choices else [()]:
            for g, pick in zip(z_choices, z_pick):
                for k, (_, idx) in enumerate(g):
                    fix[idx] = 1.0 if k == pick else 0.0
            # product flags forced by their rows
            for tag, idx in problem.tags.items():
                if tag[0] == "uatm" and problem.lb[idx] < problem.ub[idx] - 1e-12:
                    _, i, t, l = tag
                    yv = fix.get(problem.tags[("y", i)],
                                 problem.lb[problem.tags[("y", i)]])
                    zv = fix.get(problem.tags[("z", i, t, l)],
                                 problem.lb[problem.tags[("z", i, t, l)]])
                    fix[idx] = min(yv, zv)
            for xi_bits in itertools.product((0.0, 1.0), repeat=len(xi_vars)):
                for idx, bit in zip(xi_vars, xi_bits):
                    fix[idx] = bit
                for idx in star_vars:
                    j = problem.var_tag[idx][1]
                    peers = [problem.tags[("xi", i2, j)] for i2 in
                             range(problem.meta["n_instances"])
                             if ("xi", i2, j) in problem.tags]
                    fix[idx] = max((fix.get(p, problem.lb[p]) for p in peers),
                                   default=0.0)
                for combo in itertools.product(*[other_ranges(i) for i in other]) \
                        if other else [()]:
                    for idx, val in zip(other, combo):
                        fix[idx] = float(val)
                    lb, ub = problem.lb.copy(), problem.ub.copy()
                    kidx = np.fromiter(fix.keys(), dtype=np.int64, count=len(fix))
                    kval = np.fromiter(fix.values(), dtype=float, count=len(fix))
                    if np.any(kval < lb[kidx] - 1e-9) or np.any(kval > ub[kidx] + 1e-9):
                        continue
                    lb[kidx] = kval
                    ub[kidx] = kval
                    tightened = propagate_bounds(problem, lb, ub)
                    if tightened is None:
                        continue
                    node_count += 1
                    res = _solve_node(problem, *tightened, options)
                    if res.status == "optimal" and res.value < best_val:
                        best_val = res.value
                        best_point = res.point.copy()
                        best_point[kidx] = kval
    wall = time.perf_counter() - start
    if best_point is None:
        return SolveResult("infeasible", None, None, float("inf"), node_count, wall)
    return SolveResult("optimal", best_point, best_val, best_val, node_count, wall)
