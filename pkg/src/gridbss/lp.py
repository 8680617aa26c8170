"""Sparse linear-program container shared by the builder, solver, and writer.

The canonical form is

    minimize c.x  subject to  a x {<=, =, >=} rhs,  lb <= x <= ub

with senses encoded as the characters 'L', 'E', 'G'.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp

SENSES = ("L", "E", "G")


@dataclass
class LpInstance:
    c: np.ndarray
    a: sp.csr_matrix
    senses: np.ndarray          # (m,) unicode chars from SENSES
    rhs: np.ndarray
    lb: np.ndarray
    ub: np.ndarray
    row_names: list[str] = field(default_factory=list)

    @property
    def num_rows(self) -> int:
        return self.a.shape[0]

    @property
    def num_cols(self) -> int:
        return self.a.shape[1]

    def check(self) -> list[str]:
        """Structural problems; an empty list means the instance is usable."""
        problems = []
        m, n = self.a.shape
        if self.c.shape != (n,):
            problems.append(f"c has shape {self.c.shape}, expected ({n},)")
        if self.rhs.shape != (m,) or self.senses.shape != (m,):
            problems.append("rhs/senses do not match the row count")
        if self.lb.shape != (n,) or self.ub.shape != (n,):
            problems.append("bounds do not match the column count")
        if problems:
            return problems
        if not np.all(np.isfinite(self.c)):
            problems.append("non-finite objective coefficient")
        if self.a.nnz and not np.all(np.isfinite(self.a.data)):
            problems.append("non-finite constraint coefficient")
        if not np.all(np.isfinite(self.rhs)):
            problems.append("non-finite rhs")
        if np.any(np.isnan(self.lb)) or np.any(np.isnan(self.ub)):
            problems.append("NaN bound")
        bad = ~np.isin(self.senses, SENSES)
        if np.any(bad):
            problems.append(f"invalid senses at rows {np.flatnonzero(bad)[:5].tolist()}")
        infeas = self.lb > self.ub
        if np.any(infeas):
            problems.append(
                f"lb > ub at columns {np.flatnonzero(infeas)[:5].tolist()}")
        if self.row_names and len(self.row_names) != m:
            problems.append("row_names length does not match row count")
        return problems


class LpBuilder:
    """Incremental row/column accumulator producing an LpInstance."""

    def __init__(self):
        self._lb: list[float] = []
        self._ub: list[float] = []
        self._c: list[float] = []
        self._rows_cols: list[list[int]] = []
        self._rows_vals: list[list[float]] = []
        self._senses: list[str] = []
        self._rhs: list[float] = []
        self._row_names: list[str] = []

    @property
    def num_cols(self) -> int:
        return len(self._c)

    @property
    def num_rows(self) -> int:
        return len(self._rhs)

    def add_col(self, lb: float, ub: float, cost: float = 0.0) -> int:
        self._lb.append(lb)
        self._ub.append(ub)
        self._c.append(cost)
        return len(self._c) - 1

    def add_cost(self, col: int, cost: float) -> None:
        self._c[col] += cost

    def add_row(self, cols: list[int], vals: list[float], sense: str,
                rhs: float, name: str) -> int:
        if sense not in SENSES:
            raise ValueError(f"bad sense {sense!r}")
        self._rows_cols.append(list(cols))
        self._rows_vals.append([float(v) for v in vals])
        self._senses.append(sense)
        self._rhs.append(float(rhs))
        self._row_names.append(name)
        return len(self._rhs) - 1

    def build(self) -> LpInstance:
        m, n = len(self._rhs), len(self._c)
        indptr = np.zeros(m + 1, dtype=np.int64)
        for i, cols in enumerate(self._rows_cols):
            indptr[i + 1] = indptr[i] + len(cols)
        indices = np.empty(indptr[-1], dtype=np.int64)
        data = np.empty(indptr[-1], dtype=np.float64)
        for i, (cols, vals) in enumerate(zip(self._rows_cols, self._rows_vals)):
            indices[indptr[i]:indptr[i + 1]] = cols
            data[indptr[i]:indptr[i + 1]] = vals
        a = sp.csr_matrix((data, indices, indptr), shape=(m, n))
        a.sum_duplicates()
        return LpInstance(
            c=np.asarray(self._c, dtype=np.float64),
            a=a,
            senses=np.asarray(self._senses, dtype="U1"),
            rhs=np.asarray(self._rhs, dtype=np.float64),
            lb=np.asarray(self._lb, dtype=np.float64),
            ub=np.asarray(self._ub, dtype=np.float64),
            row_names=list(self._row_names),
        )
