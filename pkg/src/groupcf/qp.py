"""Continuous convex-QP kernel used by the branch-and-bound nodes.

The relaxation at a node is: minimize the diagonal convex quadratic over the
problem's linear rows and the node's (possibly tightened) variable boxes, with
unfixed integer variables relaxed into their boxes. Solved with the Clarabel
interior-point solver, which returns high-accuracy primal-dual solutions and
infeasibility certificates deterministically.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import clarabel
import numpy as np
from scipy import sparse
from scipy.optimize import linprog

from .miqp import MiqpProblem


@dataclass
class ContinuousResult:
    status: str  # optimal | infeasible | numerical
    value: float
    point: Optional[np.ndarray]


def solve_continuous(problem: MiqpProblem, lb: np.ndarray, ub: np.ndarray,
                     kkt_tol: float = 1e-8, reg: float = 0.0) -> ContinuousResult:
    """Minimize the problem objective over its rows and the given boxes.

    With reg > 0 a diagonal regularizer reg * ||x||^2 is added to escape
    degenerate iterates; the reported value is then shifted down by
    reg * max ||x||^2 over the box so it remains a valid lower bound.
    """
    n = problem.n_vars
    eq_mask = problem.senses == "="
    A_eq = problem.A[eq_mask]
    A_le = problem.A[~eq_mask]
    b_eq = problem.rhs[eq_mask]
    b_le = problem.rhs[~eq_mask]

    fixed = lb >= ub - 1e-15
    eye = sparse.identity(n, format="csr")
    A_fix = eye[fixed]
    A_box = sparse.vstack([eye[~fixed], -eye[~fixed]], format="csr")
    b_fix = lb[fixed]
    b_box = np.concatenate([ub[~fixed], -lb[~fixed]])

    A = sparse.vstack([A_eq, A_fix, A_le, A_box], format="csc")
    b = np.concatenate([b_eq, b_fix, b_le, b_box])
    n_eq = A_eq.shape[0] + A_fix.shape[0]
    n_le = A_le.shape[0] + A_box.shape[0]
    cones = []
    if n_eq:
        cones.append(clarabel.ZeroConeT(n_eq))
    if n_le:
        cones.append(clarabel.NonnegativeConeT(n_le))

    P = sparse.diags(2.0 * (problem.obj_q + reg), format="csc")
    settings = clarabel.DefaultSettings()
    settings.verbose = False
    settings.tol_feas = kkt_tol
    settings.tol_gap_abs = kkt_tol
    settings.tol_gap_rel = kkt_tol
    solver = clarabel.DefaultSolver(P, problem.obj_c, A, b, cones, settings)
    sol = solver.solve()
    status = str(sol.status)
    if status in ("Solved", "AlmostSolved"):
        point = np.asarray(sol.x, dtype=float)
        # clamp interior-point roundoff back into the boxes
        point = np.minimum(np.maximum(point, lb), ub)
        value = problem.objective_value(point)
        if reg:
            value -= reg * float(np.sum(np.maximum(lb * lb, ub * ub)))
        return ContinuousResult("optimal", value, point)
    if status in ("PrimalInfeasible", "AlmostPrimalInfeasible"):
        return ContinuousResult("infeasible", float("inf"), None)
    # clarabel occasionally stalls on degenerate nodes without producing an
    # infeasibility certificate; ask an LP for a definitive feasibility answer
    eq_any = bool(eq_mask.any())
    lp = linprog(np.zeros(n), A_ub=A_le, b_ub=b_le,
                 A_eq=A_eq if eq_any else None, b_eq=b_eq if eq_any else None,
                 bounds=np.column_stack([lb, ub]), method="highs")
    if lp.status == 2:
        return ContinuousResult("infeasible", float("inf"), None)
    return ContinuousResult("numerical", float("nan"), None)


def _prop_cache(problem: MiqpProblem) -> dict:
    cache = getattr(problem, "_prop_arrays", None)
    if cache is None:
        coo = problem.A.tocoo()
        keep = coo.data != 0.0
        pos = sparse.csr_matrix(problem.A.maximum(0))
        neg = sparse.csr_matrix(problem.A.minimum(0))
        eq_rows = problem.senses == "="
        cache = {
            "rows": coo.row[keep], "cols": coo.col[keep], "vals": coo.data[keep],
            "pos": pos, "neg": neg, "eq_rows": eq_rows,
            "nz_pos": coo.data[keep] > 0,
            "nz_eq": eq_rows[coo.row[keep]],
        }
        problem._prop_arrays = cache
    return cache


def propagate_bounds(problem: MiqpProblem, lb: np.ndarray, ub: np.ndarray,
                     max_passes: int = 6):
    """Interval bound propagation over all rows.

    Tightens variable boxes (integer boxes are rounded inward), returning
    (lb, ub) copies or None when some row is proven infeasible. This is the
    only presolve: it is what pins coordinates whose change flag is fixed off.
    """
    lb = lb.copy()
    ub = ub.copy()
    if np.any(lb > ub + 1e-9):
        return None
    if problem.n_rows == 0:
        return lb, ub
    cache = _prop_cache(problem)
    rows, cols, vals = cache["rows"], cache["cols"], cache["vals"]
    pos_m, neg_m = cache["pos"], cache["neg"]
    eq_rows, nz_pos, nz_eq = cache["eq_rows"], cache["nz_pos"], cache["nz_eq"]
    rhs = problem.rhs
    feas_tol = 1e-9
    for _ in range(max_passes):
        lo_act = pos_m @ lb + neg_m @ ub  # row minimum activity
        if np.any(lo_act > rhs + feas_tol):
            return None
        hi_act = pos_m @ ub + neg_m @ lb
        if np.any(eq_rows & (hi_act < rhs - feas_tol)):
            return None
        prev_lb, prev_ub = lb.copy(), ub.copy()
        # upper side of each term: c*x <= rhs - (lo_act - own minimum term)
        own_lo = np.where(nz_pos, vals * prev_lb[cols], vals * prev_ub[cols])
        cand = (rhs[rows] - lo_act[rows] + own_lo) / vals
        up = nz_pos
        np.minimum.at(ub, cols[up], cand[up])
        np.maximum.at(lb, cols[~up], cand[~up])
        # lower side, equality rows only: c*x >= rhs - (hi_act - own max term)
        if nz_eq.any():
            own_hi = np.where(nz_pos, vals * prev_ub[cols], vals * prev_lb[cols])
            cand_eq = (rhs[rows] - hi_act[rows] + own_hi) / vals
            lo_sel = nz_eq & nz_pos
            hi_sel = nz_eq & ~nz_pos
            np.maximum.at(lb, cols[lo_sel], cand_eq[lo_sel])
            np.minimum.at(ub, cols[hi_sel], cand_eq[hi_sel])
        # keep roundoff from crossing boxes that are essentially points
        crossed = lb > ub
        if np.any(crossed & (lb - ub > feas_tol)):
            return None
        mid = 0.5 * (lb[crossed] + ub[crossed])
        lb[crossed] = mid
        ub[crossed] = mid
        ints = problem.is_integer
        lb_i = np.ceil(lb[ints] - 1e-9)
        ub_i = np.floor(ub[ints] + 1e-9)
        if np.any(lb_i > ub_i):
            return None
        lb[ints] = lb_i
        ub[ints] = ub_i
        if np.allclose(lb, prev_lb, atol=1e-12) and np.allclose(ub, prev_ub, atol=1e-12):
            break
    return lb, ub
