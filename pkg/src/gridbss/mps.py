"""MPS export of an assembled program for use with external solvers.

Writes the classic section layout (NAME, ROWS, COLUMNS, RHS, RANGES,
BOUNDS, ENDATA) with semantic row and column names taken from the builder.
Names are deterministic, whitespace-free, and at most 61 characters, so the
files load in fixed- and free-format readers alike.
"""

from __future__ import annotations

from pathlib import Path

import numpy as np

from .lp import LpInstance
from .program import VariableIndex

_OBJ = "OBJ"
_RHS = "RHS1"
_BND = "BND1"


def _num(v: float) -> str:
    return format(v, ".12g")


def export_mps(lp: LpInstance, index: VariableIndex | None,
               path: str | Path, name: str = "GRIDBSS") -> Path:
    """Write ``lp`` to ``path``; returns the path written."""
    path = Path(path)
    m, n = lp.num_rows, lp.num_cols

    if index is not None and len(index) == n:
        col_names = list(index.names)
    else:
        col_names = [f"X{j:07d}" for j in range(n)]
    if lp.row_names and len(lp.row_names) == m:
        row_names = list(lp.row_names)
    else:
        row_names = [f"R{i:07d}" for i in range(m)]

    for label, names in (("column", col_names), ("row", row_names)):
        if len(set(names)) != len(names):
            raise ValueError(f"duplicate {label} names in MPS export")
        too_long = [x for x in names if len(x) > 61 or not x]
        if too_long:
            raise ValueError(f"bad {label} name: {too_long[0]!r}")

    a = lp.a.tocsc()
    lines: list[str] = []
    lines.append(f"NAME          {name}")
    lines.append("ROWS")
    lines.append(f" N  {_OBJ}")
    for i in range(m):
        lines.append(f" {lp.senses[i]}  {row_names[i]}")

    lines.append("COLUMNS")
    for j in range(n):
        cname = col_names[j]
        if lp.c[j] != 0.0:
            lines.append(f"    {cname:<24}  {_OBJ:<24}  {_num(lp.c[j])}")
        start, end = a.indptr[j], a.indptr[j + 1]
        for k in range(start, end):
            lines.append(
                f"    {cname:<24}  {row_names[a.indices[k]]:<24}  {_num(a.data[k])}")

    lines.append("RHS")
    for i in range(m):
        if lp.rhs[i] != 0.0:
            lines.append(f"    {_RHS:<24}  {row_names[i]:<24}  {_num(lp.rhs[i])}")

    lines.append("RANGES")

    lines.append("BOUNDS")
    for j in range(n):
        lo, hi = lp.lb[j], lp.ub[j]
        cname = col_names[j]
        if lo == hi:
            lines.append(f" FX {_BND:<21}  {cname:<24}  {_num(lo)}")
            continue
        lo_inf = not np.isfinite(lo)
        hi_inf = not np.isfinite(hi)
        if lo_inf and hi_inf:
            lines.append(f" FR {_BND:<21}  {cname}")
            continue
        if lo_inf:
            lines.append(f" MI {_BND:<21}  {cname}")
        elif lo != 0.0 or (np.isfinite(hi) and hi < 0.0):
            lines.append(f" LO {_BND:<21}  {cname:<24}  {_num(lo)}")
        if not hi_inf:
            lines.append(f" UP {_BND:<21}  {cname:<24}  {_num(hi)}")

    lines.append("ENDATA")
    path.write_text("\n".join(lines) + "\n")
    return path
