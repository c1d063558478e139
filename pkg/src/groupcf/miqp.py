"""Internal mixed-integer convex-quadratic problem representation.

A problem holds a variable space (boxes, integrality marks, semantic tags),
sparse linear rows with senses, and a diagonal convex quadratic objective
q.v^2 + c.v + constant. Builders in :mod:`groupcf.formulation` produce these;
the branch-and-bound solver consumes them. An LP-style text export is provided
for cross-checking against external solvers.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional

import numpy as np
from scipy import sparse

SENSES = ("<=", ">=", "=")


@dataclass
class MiqpProblem:
    """Immutable compiled problem. Do not mutate after construction."""

    lb: np.ndarray
    ub: np.ndarray
    is_integer: np.ndarray  # bool; binaries are integers with box [0, 1]
    names: list
    tags: dict  # tag tuple -> variable index
    var_tag: list  # variable index -> tag tuple
    A: sparse.csr_matrix  # all rows normalized to '<=' and '='
    senses: np.ndarray  # '<' (meaning <=) or '=' per row
    rhs: np.ndarray
    obj_q: np.ndarray  # diagonal quadratic coefficients, >= 0
    obj_c: np.ndarray
    obj_const: float
    indicator_rows: list  # (row index, binary var index, relax value) triples
    meta: dict = field(default_factory=dict)

    @property
    def n_vars(self) -> int:
        return self.lb.shape[0]

    @property
    def n_rows(self) -> int:
        return self.rhs.shape[0]

    def binary_indices(self) -> np.ndarray:
        binish = self.is_integer & (self.lb >= -1e-12) & (self.ub <= 1 + 1e-12)
        return np.flatnonzero(binish)

    def integer_indices(self) -> np.ndarray:
        return np.flatnonzero(self.is_integer)

    def objective_value(self, v: np.ndarray) -> float:
        v = np.asarray(v, dtype=float)
        return float(self.obj_q @ (v * v) + self.obj_c @ v + self.obj_const)

    def row_violation(self, v: np.ndarray) -> float:
        """Largest constraint violation at v (0 when feasible)."""
        act = self.A @ v
        viol = np.where(self.senses == "=", np.abs(act - self.rhs), act - self.rhs)
        box = np.maximum(self.lb - v, v - self.ub)
        return float(max(viol.max(initial=0.0), box.max(initial=0.0), 0.0))


class MiqpBuilder:
    """Incremental construction of a MiqpProblem."""

    def __init__(self):
        self._lb = []
        self._ub = []
        self._int = []
        self._names = []
        self._tags = {}
        self._var_tag = []
        self._rows = []  # (coeff dict, sense, rhs)
        self._q = []
        self._c = []
        self._const = 0.0
        self._indicator = []  # (row idx, var idx, relax value)
        self.meta = {}

    @property
    def n_vars(self) -> int:
        return len(self._lb)

    def add_var(self, tag, lb, ub, integer=False, name=None, q=0.0, c=0.0) -> int:
        if tag in self._tags:
            raise ValueError(f"duplicate variable tag {tag!r}")
        if q < 0:
            raise ValueError("quadratic coefficients must be nonnegative (convexity)")
        idx = len(self._lb)
        self._lb.append(float(lb))
        self._ub.append(float(ub))
        self._int.append(bool(integer))
        self._names.append(name or "_".join(str(t) for t in tag))
        self._tags[tag] = idx
        self._var_tag.append(tag)
        self._q.append(float(q))
        self._c.append(float(c))
        return idx

    def var(self, tag) -> int:
        return self._tags[tag]

    def add_const(self, value: float) -> None:
        self._const += float(value)

    def add_linear(self, idx: int, c: float) -> None:
        self._c[idx] += float(c)

    def add_row(self, coeffs: dict, sense: str, rhs: float,
                indicator: Optional[tuple] = None) -> int:
        """Add a row; coeffs maps variable index -> coefficient.

        '>=' rows are normalized to '<=' by negation. indicator, when given, is
        (binary index, relax value): setting the binary to the relax value must
        make the row hold for every in-box assignment (big-M validity).
        """
        if sense not in SENSES:
            raise ValueError(f"unknown sense {sense!r}")
        for idx in coeffs:
            if not 0 <= idx < len(self._lb):
                raise ValueError(f"row references undeclared variable {idx}")
        if sense == ">=":
            coeffs = {k: -v for k, v in coeffs.items()}
            rhs = -rhs
            sense = "<="
        row_idx = len(self._rows)
        self._rows.append((dict(coeffs), sense, float(rhs)))
        if indicator is not None:
            self._indicator.append((row_idx, indicator[0], indicator[1]))
        return row_idx

    def build(self) -> MiqpProblem:
        n = len(self._lb)
        m = len(self._rows)
        data, indices, indptr = [], [], [0]
        senses = np.empty(m, dtype=object)
        rhs = np.empty(m)
        for r, (coeffs, sense, b) in enumerate(self._rows):
            for idx in sorted(coeffs):
                if coeffs[idx] == 0.0:
                    continue
                indices.append(idx)
                data.append(coeffs[idx])
            indptr.append(len(indices))
            senses[r] = sense
            rhs[r] = b
        A = sparse.csr_matrix((np.array(data, dtype=float),
                               np.array(indices, dtype=np.int64),
                               np.array(indptr, dtype=np.int64)), shape=(m, n))
        return MiqpProblem(
            lb=np.array(self._lb), ub=np.array(self._ub),
            is_integer=np.array(self._int, dtype=bool),
            names=list(self._names), tags=dict(self._tags), var_tag=list(self._var_tag),
            A=A, senses=senses, rhs=rhs,
            obj_q=np.array(self._q), obj_c=np.array(self._c), obj_const=self._const,
            indicator_rows=list(self._indicator), meta=dict(self.meta),
        )


def _num(v: float) -> str:
    return format(v, ".17g")


def export_lp(problem: MiqpProblem) -> str:
    """LP-format text of the problem (CPLEX LP dialect, quadratic objective).

    Variable names carry the semantic tags so rows can be matched when
    cross-checking with an external solver.
    """
    lines = ["\\ groupcf MIQP export", "Minimize", " obj:"]
    terms = []
    for idx in range(problem.n_vars):
        c = problem.obj_c[idx]
        if c != 0.0:
            terms.append(f" {'+' if c >= 0 else '-'} {_num(abs(c))} {problem.names[idx]}")
    quad = [f" {'+' if q >= 0 else '-'} {_num(abs(2 * q))} {problem.names[idx]} ^ 2"
            for idx, q in enumerate(problem.obj_q) if q != 0.0]
    body = "".join(terms)
    if quad:
        body += " + [" + "".join(quad) + " ] / 2"
    if problem.obj_const:
        body += f" + {_num(problem.obj_const)}"
    lines.append(body if body else " 0")
    lines.append("Subject To")
    A = problem.A
    for r in range(problem.n_rows):
        start, end = A.indptr[r], A.indptr[r + 1]
        row_terms = []
        for k in range(start, end):
            c = A.data[k]
            row_terms.append(f" {'+' if c >= 0 else '-'} {_num(abs(c))} {problem.names[A.indices[k]]}")
        op = "=" if problem.senses[r] == "=" else "<="
        lines.append(f" r{r}:{''.join(row_terms)} {op} {_num(problem.rhs[r])}")
    lines.append("Bounds")
    for idx in range(problem.n_vars):
        lines.append(f" {_num(problem.lb[idx])} <= {problem.names[idx]} <= {_num(problem.ub[idx])}")
    ints = [problem.names[i] for i in problem.integer_indices()]
    if ints:
        lines.append("Generals")
        lines.append(" " + " ".join(ints))
    lines.append("End")
    return "\n".join(lines) + "\n"
