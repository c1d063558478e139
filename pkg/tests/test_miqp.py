import numpy as np
import pytest

from groupcf.miqp import MiqpBuilder, export_lp


def small_problem():
    b = MiqpBuilder()
    x = b.add_var(("x", 0), -1.0, 2.0, q=1.0, c=-2.0)
    s = b.add_var(("s", 0), 0.0, 1.0, integer=True, c=0.5)
    b.add_row({x: 1.0, s: -3.0}, "<=", 0.0, indicator=(s, 1))
    b.add_row({x: 1.0, s: 1.0}, ">=", -1.0)
    b.add_row({s: 1.0}, "=", 1.0)
    b.add_const(1.0)
    return b.build()


def test_builder_normalizes_ge_rows():
    p = small_problem()
    assert set(p.senses) == {"<=", "="}
    # the >= row was negated: -x - s <= 1
    assert p.rhs[1] == pytest.approx(1.0)
    assert p.A[1].toarray().tolist() == [[-1.0, -1.0]]


def test_builder_rejects_duplicates_and_bad_rows():
    b = MiqpBuilder()
    b.add_var(("x",), 0, 1)
    with pytest.raises(ValueError):
        b.add_var(("x",), 0, 1)
    with pytest.raises(ValueError):
        b.add_row({5: 1.0}, "<=", 0.0)
    with pytest.raises(ValueError):
        b.add_row({0: 1.0}, "<", 0.0)
    with pytest.raises(ValueError):
        b.add_var(("y",), 0, 1, q=-1.0)


def test_builder_drops_explicit_zero_coefficients():
    b = MiqpBuilder()
    x = b.add_var(("x",), 0, 1)
    y = b.add_var(("y",), 0, 1)
    b.add_row({x: 0.0, y: 1.0}, "<=", 1.0)
    p = b.build()
    assert p.A.nnz == 1


def test_objective_value_and_violation():
    p = small_problem()
    v = np.array([1.0, 1.0])
    # x^2 - 2x + 0.5 s + 1 at (1, 1)
    assert p.objective_value(v) == pytest.approx(1.0 - 2.0 + 0.5 + 1.0)
    assert p.row_violation(v) == 0.0
    assert p.row_violation(np.array([4.0, 1.0])) > 0  # x above its box and row


def test_indicator_rows_recorded():
    p = small_problem()
    assert p.indicator_rows == [(0, 1, 1)]


def test_binary_and_integer_indices():
    b = MiqpBuilder()
    b.add_var(("a",), 0, 1, integer=True)
    b.add_var(("b",), 0, 5, integer=True)
    b.add_var(("c",), 0, 1)
    p = b.build()
    assert p.binary_indices().tolist() == [0]
    assert p.integer_indices().tolist() == [0, 1]


def test_export_lp_structure():
    text = export_lp(small_problem())
    assert text.startswith("\\ groupcf MIQP export")
    for section in ("Minimize", "Subject To", "Bounds", "Generals", "End"):
        assert section in text
    assert "x_0 ^ 2" in text
    assert "r0:" in text
    # numbers use 17 significant digits, so values survive a text round-trip
    assert float("2") == 2.0 and "2 x_0" in text
