import numpy as np
import pytest

from groupcf.miqp import MiqpBuilder
from groupcf.qp import propagate_bounds, solve_continuous


def projection_problem():
    # min (x-2)^2 + (y+1)^2 subject to x + y <= 1
    b = MiqpBuilder()
    x = b.add_var(("x",), -5, 5, q=1.0, c=-4.0)
    y = b.add_var(("y",), -5, 5, q=1.0, c=2.0)
    b.add_const(5.0)
    b.add_row({x: 1.0, y: 1.0}, "<=", 1.0)
    return b.build()


def test_solve_continuous_projection():
    p = projection_problem()
    res = solve_continuous(p, p.lb, p.ub)
    assert res.status == "optimal"
    assert res.point == pytest.approx([2.0, -1.0], abs=1e-4)
    assert res.value == pytest.approx(0.0, abs=1e-7)


def test_solve_continuous_active_constraint():
    p = projection_problem()
    lb, ub = p.lb.copy(), p.ub.copy()
    lb[1] = 0.5  # y >= 0.5 forces x <= 0.5 on the row
    res = solve_continuous(p, lb, ub)
    assert res.status == "optimal"
    assert res.point[0] + res.point[1] <= 1.0 + 1e-8
    assert res.point[1] >= 0.5 - 1e-9
    # optimum at y = 0.5, x = 0.5
    assert res.value == pytest.approx((0.5 - 2) ** 2 + (0.5 + 1) ** 2, abs=1e-6)


def test_solve_continuous_infeasible_box():
    b = MiqpBuilder()
    x = b.add_var(("x",), 0, 1, q=1.0)
    b.add_row({x: 1.0}, ">=", 2.0)
    p = b.build()
    res = solve_continuous(p, p.lb, p.ub)
    assert res.status == "infeasible"


def test_propagate_tightens_from_rows():
    b = MiqpBuilder()
    x = b.add_var(("x",), 0, 10)
    y = b.add_var(("y",), 0, 10)
    b.add_row({x: 1.0, y: 1.0}, "<=", 3.0)
    p = b.build()
    lb, ub = propagate_bounds(p, p.lb.copy(), p.ub.copy())
    assert ub[0] <= 3.0 and ub[1] <= 3.0


def test_propagate_equality_both_sides():
    b = MiqpBuilder()
    x = b.add_var(("x",), 0, 10)
    y = b.add_var(("y",), 2, 2)
    b.add_row({x: 1.0, y: -1.0}, "=", 1.0)
    p = b.build()
    lb, ub = propagate_bounds(p, p.lb.copy(), p.ub.copy())
    assert lb[0] == pytest.approx(3.0)
    assert ub[0] == pytest.approx(3.0)


def test_propagate_detects_infeasible_row():
    b = MiqpBuilder()
    x = b.add_var(("x",), 2, 3)
    b.add_row({x: 1.0}, "<=", 1.0)
    p = b.build()
    assert propagate_bounds(p, p.lb.copy(), p.ub.copy()) is None


def test_propagate_rounds_integer_boxes():
    b = MiqpBuilder()
    x = b.add_var(("x",), 0, 10, integer=True)
    b.add_row({x: 1.0}, "<=", 4.4)
    b.add_row({x: 1.0}, ">=", 3.7)
    p = b.build()
    lb, ub = propagate_bounds(p, p.lb.copy(), p.ub.copy())
    assert lb[0] == 4.0 and ub[0] == 4.0


def test_propagate_integer_gap_is_infeasible():
    b = MiqpBuilder()
    x = b.add_var(("x",), 0, 10, integer=True)
    b.add_row({x: 1.0}, "<=", 4.4)
    b.add_row({x: 1.0}, ">=", 4.2)
    p = b.build()
    assert propagate_bounds(p, p.lb.copy(), p.ub.copy()) is None


def test_propagate_fixing_cascades():
    # s = 0 forces x back to 1.5 through the two switch rows
    b = MiqpBuilder()
    x = b.add_var(("x",), 0, 2)
    s = b.add_var(("s",), 0, 1, integer=True)
    b.add_row({x: 1.0, s: -3.0}, "<=", 1.5)
    b.add_row({x: -1.0, s: -3.0}, "<=", -1.5)
    p = b.build()
    lb, ub = p.lb.copy(), p.ub.copy()
    ub[1] = 0.0
    lb2, ub2 = propagate_bounds(p, lb, ub)
    assert lb2[0] == pytest.approx(1.5)
    assert ub2[0] == pytest.approx(1.5)
