"""Bounded-variable revised simplex over sparse instances.

Implementation notes:

* Standard form adds one slack column per inequality row and, where the
  triangular crash cannot cover an equality row, an artificial column fixed
  at zero.  Initial out-of-bound basics are driven in by a composite
  phase-1 objective (unit cost on each violated bound), so a single pivot
  loop serves both phases.
* The basis factorization is a SuperLU decomposition refreshed every few
  dozen pivots with product-form eta updates in between.
* Dantzig pricing with a Harris-style tie-break on the ratio test; Bland's
  rule takes over whenever a long run of degenerate pivots is detected.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .lp import LpInstance

_PIVOT_TOL = 1e-9
_SMALL_PIVOT = 1e-8


class Status(enum.Enum):
    OPTIMAL = "optimal"
    INFEASIBLE = "infeasible"
    UNBOUNDED = "unbounded"
    ITERATION_LIMIT = "iteration_limit"


@dataclass
class SolverConfig:
    feas_tol: float = 1e-7
    opt_tol: float = 1e-7
    max_iterations: int = 0      # 0 means scale with the instance size
    scaling: bool = True
    refactor_every: int = 100
    bland_trigger: int = 800     # degenerate pivots before Bland's rule
    crash_upper: bool = False    # start two-sided nonbasics at their upper bound

    def __post_init__(self):
        if self.feas_tol <= 0 or self.opt_tol <= 0:
            raise ValueError("tolerances must be positive")


@dataclass
class SolveResult:
    status: Status
    x: np.ndarray | None
    objective: float | None
    max_infeasibility: float
    iterations: int


def solve(lp: LpInstance, cfg: SolverConfig | None = None) -> SolveResult:
    """Solve an LpInstance to proven optimality (at desk scale)."""
    cfg = cfg or SolverConfig()
    problems = lp.check()
    if problems:
        raise ValueError("malformed instance: " + "; ".join(problems))

    red = _presolve(lp, cfg.feas_tol)
    if red.status is not None:
        return _finish(lp, red, None, cfg, red.status, 0)

    core = _Core(red, cfg)
    status, iterations = core.run()
    x_red = core.structural_solution() if status is Status.OPTIMAL else None
    return _finish(lp, red, x_red, cfg, status, iterations)


# ---------------------------------------------------------------------------
# presolve
# ---------------------------------------------------------------------------

class _Reduced:
    """Instance after removing fixed columns, empty rows, empty columns."""

    def __init__(self):
        self.status: Status | None = None
        self.unbounded_if_feasible = False
        self.a: sp.csc_matrix | None = None
        self.c = None
        self.rhs = None
        self.senses = None
        self.lb = None
        self.ub = None
        self.keep_cols = None       # original indices of surviving columns
        self.fixed_value = None     # per original column, NaN when free
        self.col_scale = None
        self.row_scale = None


def _presolve(lp: LpInstance, ftol: float) -> _Reduced:
    red = _Reduced()
    n = lp.num_cols
    a = lp.a.tocsc(copy=True)
    rhs = lp.rhs.astype(np.float64, copy=True)
    fixed_value = np.full(n, np.nan)

    fixed = lp.lb == lp.ub
    if np.any(fixed):
        fixed_value[fixed] = lp.lb[fixed]
        vals = np.where(fixed, lp.lb, 0.0)
        rhs -= a @ vals

    keep_cols = np.flatnonzero(~fixed)
    a = a[:, keep_cols]
    c = lp.c[keep_cols].copy()
    lb = lp.lb[keep_cols].copy()
    ub = lp.ub[keep_cols].copy()

    # Empty rows are pure feasibility checks on their rhs.
    row_nnz = np.diff(a.tocsr().indptr)
    empty_rows = np.flatnonzero(row_nnz == 0)
    for i in empty_rows:
        s, b = lp.senses[i], rhs[i]
        bad = ((s == "E" and abs(b) > ftol)
               or (s == "L" and b < -ftol)
               or (s == "G" and b > ftol))
        if bad:
            red.status = Status.INFEASIBLE
            red.fixed_value = fixed_value
            red.keep_cols = keep_cols
            return red
    keep_rows = np.flatnonzero(row_nnz > 0)
    a = a[keep_rows, :].tocsc()
    rhs = rhs[keep_rows]
    senses = lp.senses[keep_rows]

    # Columns that touch no surviving row sit at their cheapest bound.
    col_nnz = np.diff(a.indptr)
    empty_cols = np.flatnonzero(col_nnz == 0)
    drop = np.zeros(len(keep_cols), dtype=bool)
    for j in empty_cols:
        if c[j] > 0:
            target = lb[j]
        elif c[j] < 0:
            target = ub[j]
        else:
            target = lb[j] if np.isfinite(lb[j]) else (ub[j] if np.isfinite(ub[j]) else 0.0)
        if not np.isfinite(target):
            red.unbounded_if_feasible = True
            target = 0.0
        fixed_value[keep_cols[j]] = target
        drop[j] = True
    if np.any(drop):
        keep_cols = keep_cols[~drop]
        a = a[:, np.flatnonzero(~drop)]
        c = c[~drop]
        lb = lb[~drop]
        ub = ub[~drop]

    red.a, red.c, red.rhs, red.senses = a.tocsc(), c, rhs, senses
    red.lb, red.ub = lb, ub
    red.keep_cols = keep_cols
    red.fixed_value = fixed_value

    if a.shape[0] == 0 or a.shape[1] == 0:
        # Nothing left to optimize; bounds placement already decided above.
        if a.shape[1] == 0 and a.shape[0] > 0:
            for i in range(a.shape[0]):
                s, b = senses[i], rhs[i]
                bad = ((s == "E" and abs(b) > ftol)
                       or (s == "L" and b < -ftol)
                       or (s == "G" and b > ftol))
                if bad:
                    red.status = Status.INFEASIBLE
                    return red
        red.status = (Status.UNBOUNDED if red.unbounded_if_feasible
                      else Status.OPTIMAL)
    return red


def _finish(lp: LpInstance, red: _Reduced, x_red, cfg: SolverConfig,
            status: Status, iterations: int) -> SolveResult:
    if status is Status.OPTIMAL and red.unbounded_if_feasible:
        status = Status.UNBOUNDED
    if status is not Status.OPTIMAL:
        return SolveResult(status=status, x=None, objective=None,
                           max_infeasibility=math.inf, iterations=iterations)

    x = np.where(np.isnan(red.fixed_value), 0.0, red.fixed_value)
    if x_red is not None and len(red.keep_cols):
        x[red.keep_cols] = x_red
    objective = float(lp.c @ x)
    infeas = _max_infeasibility(lp, x)
    return SolveResult(status=Status.OPTIMAL, x=x, objective=objective,
                       max_infeasibility=infeas, iterations=iterations)


def _max_infeasibility(lp: LpInstance, x: np.ndarray) -> float:
    worst = 0.0
    lo_ok = np.where(np.isfinite(lp.lb), lp.lb - x, -np.inf)
    hi_ok = np.where(np.isfinite(lp.ub), x - lp.ub, -np.inf)
    if len(x):
        worst = max(worst, float(np.max(lo_ok)), float(np.max(hi_ok)))
    if lp.num_rows:
        ax = lp.a @ x
        resid = ax - lp.rhs
        viol = np.zeros_like(resid)
        viol[lp.senses == "E"] = np.abs(resid[lp.senses == "E"])
        viol[lp.senses == "L"] = np.maximum(resid[lp.senses == "L"], 0.0)
        viol[lp.senses == "G"] = np.maximum(-resid[lp.senses == "G"], 0.0)
        worst = max(worst, float(np.max(viol)))
    return worst


# ---------------------------------------------------------------------------
# scaling
# ---------------------------------------------------------------------------

def _pow2_scaling(a: sp.csc_matrix) -> tuple[np.ndarray, np.ndarray]:
    """Equilibrate rows and columns with powers of two (exact to unscale)."""
    m, n = a.shape
    row_scale = np.ones(m)
    col_scale = np.ones(n)
    work = a.copy()
    for _ in range(2):
        absolute = abs(work)
        rmax = absolute.max(axis=1).toarray().ravel()
        rs = np.ones(m)
        nz = rmax > 0
        rs[nz] = np.exp2(-np.round(np.log2(rmax[nz])))
        work = sp.diags(rs) @ work
        row_scale *= rs
        absolute = abs(work)
        cmax = absolute.max(axis=0).toarray().ravel()
        cs = np.ones(n)
        nz = cmax > 0
        cs[nz] = np.exp2(-np.round(np.log2(cmax[nz])))
        work = work @ sp.diags(cs)
        col_scale *= cs
    return row_scale, col_scale


# ---------------------------------------------------------------------------
# simplex core
# ---------------------------------------------------------------------------

class _Core:
    def __init__(self, red: _Reduced, cfg: SolverConfig):
        self.cfg = cfg
        self.ftol = cfg.feas_tol
        a = red.a
        self.m, self.n_struct = a.shape

        if cfg.scaling:
            self.row_scale, self.col_scale = _pow2_scaling(a)
        else:
            self.row_scale = np.ones(self.m)
            self.col_scale = np.ones(self.n_struct)
        a = sp.diags(self.row_scale) @ a @ sp.diags(self.col_scale)
        self.b = red.rhs * self.row_scale
        with np.errstate(invalid="ignore"):
            lb = red.lb / self.col_scale
            ub = red.ub / self.col_scale
        self.c_struct = red.c * self.col_scale
        self.senses = red.senses

        cols = [a.tocsc()]
        slack_lb, slack_ub = [], []
        self.slack_of_row = np.full(self.m, -1, dtype=np.int64)
        slack_rows = []
        for i, s in enumerate(self.senses):
            if s == "E":
                continue
            slack_rows.append(i)
            if s == "L":
                slack_lb.append(0.0)
                slack_ub.append(np.inf)
            else:  # G
                slack_lb.append(-np.inf)
                slack_ub.append(0.0)
        n_slack = len(slack_rows)
        if n_slack:
            sl = sp.csc_matrix(
                (np.ones(n_slack), (slack_rows, np.arange(n_slack))),
                shape=(self.m, n_slack))
            cols.append(sl)
            self.slack_of_row[slack_rows] = self.n_struct + np.arange(n_slack)

        self.lb = np.concatenate([lb, slack_lb])
        self.ub = np.concatenate([ub, slack_ub])
        self.c = np.concatenate([self.c_struct, np.zeros(n_slack)])
        self.a = sp.hstack(cols, format="csc") if len(cols) > 1 else cols[0]
        self._crash()

    # -- crash -------------------------------------------------------------

    def _start_value(self, j: int) -> float:
        lo, hi = self.lb[j], self.ub[j]
        if np.isfinite(lo) and np.isfinite(hi):
            return hi if self.cfg.crash_upper else lo
        if np.isfinite(lo):
            return lo
        if np.isfinite(hi):
            return hi
        return 0.0

    def _crash(self) -> None:
        """Choose an initial basis: slacks, then a column-singleton cascade
        over the equality rows, artificials for whatever remains."""
        m = self.m
        basis = np.full(m, -1, dtype=np.int64)
        assigned_col = np.zeros(self.a.shape[1], dtype=bool)
        for i in range(m):
            j = self.slack_of_row[i]
            if j >= 0:
                basis[i] = j
                assigned_col[j] = True

        open_rows = np.flatnonzero(basis < 0)
        if len(open_rows):
            a_csr = self.a.tocsr()
            a_csc = self.a
            row_open = np.zeros(m, dtype=bool)
            row_open[open_rows] = True
            # per-column count of nonzeros in still-open rows
            counts = np.zeros(self.a.shape[1], dtype=np.int64)
            for j in range(self.n_struct):
                rows = a_csc.indices[a_csc.indptr[j]:a_csc.indptr[j + 1]]
                counts[j] = int(np.sum(row_open[rows]))
            from collections import deque
            queue = deque(int(j) for j in np.flatnonzero(counts == 1))
            while queue:
                j = queue.popleft()
                if assigned_col[j] or counts[j] != 1:
                    continue
                start, end = a_csc.indptr[j], a_csc.indptr[j + 1]
                rows = a_csc.indices[start:end]
                vals = a_csc.data[start:end]
                hit = [k for k, r in enumerate(rows) if row_open[r]]
                if not hit or abs(vals[hit[0]]) < _SMALL_PIVOT:
                    continue
                r = int(rows[hit[0]])
                basis[r] = j
                assigned_col[j] = True
                row_open[r] = False
                rs, re = a_csr.indptr[r], a_csr.indptr[r + 1]
                for k in a_csr.indices[rs:re]:
                    if k < self.n_struct and not assigned_col[k]:
                        counts[k] -= 1
                        if counts[k] == 1:
                            queue.append(int(k))

        # nonbasic start values
        x = np.empty(self.a.shape[1])
        for j in range(self.a.shape[1]):
            x[j] = self._start_value(j)

        # artificials for rows the cascade could not cover, fixed at zero so
        # the composite phase 1 drives their start value out
        missing = np.flatnonzero(basis < 0)
        if len(missing):
            xmask = x.copy()
            covered = basis[basis >= 0]
            xmask[covered] = 0.0
            resid = self.b - self.a @ xmask
            sign = np.where(resid[missing] >= 0, 1.0, -1.0)
            art = sp.csc_matrix((sign, (missing, np.arange(len(missing)))),
                                shape=(self.m, len(missing)))
            base_n = self.a.shape[1]
            self.a = sp.hstack([self.a, art], format="csc")
            self.lb = np.concatenate([self.lb, np.zeros(len(missing))])
            self.ub = np.concatenate([self.ub, np.zeros(len(missing))])
            self.c = np.concatenate([self.c, np.zeros(len(missing))])
            x = np.concatenate([x, np.zeros(len(missing))])
            basis[missing] = base_n + np.arange(len(missing))

        self.n_total = self.a.shape[1]
        self.at = self.a.T.tocsr()
        self.basis = basis
        self.in_basis = np.zeros(self.n_total, dtype=bool)
        self.in_basis[basis] = True
        self.x = x
        self._etas: list[tuple[int, np.ndarray]] = []
        self._lu = None
        self._refactor(recompute=True)

    # -- factorization -----------------------------------------------------

    def _refactor(self, recompute: bool = False) -> None:
        bmat = self.a[:, self.basis].tocsc()
        self._lu = spla.splu(bmat, permc_spec="COLAMD",
                             options={"SymmetricMode": False})
        self._etas = []
        if recompute:
            xmask = self.x.copy()
            xmask[self.basis] = 0.0
            w = self.b - self.a @ xmask
            self.x[self.basis] = self._ftran(w)

    def _ftran(self, v: np.ndarray) -> np.ndarray:
        y = self._lu.solve(v)
        for r, alpha in self._etas:
            yr = y[r] / alpha[r]
            y -= alpha * yr
            y[r] = yr
        return y

    def _btran(self, v: np.ndarray) -> np.ndarray:
        z = v.copy()
        for r, alpha in reversed(self._etas):
            zr = (z[r] - (alpha @ z) + alpha[r] * z[r]) / alpha[r]
            z[r] = zr
        return self._lu.solve(z, trans="T")

    def _column(self, j: int) -> np.ndarray:
        out = np.zeros(self.m)
        start, end = self.a.indptr[j], self.a.indptr[j + 1]
        out[self.a.indices[start:end]] = self.a.data[start:end]
        return out

    # -- main loop ----------------------------------------------------------

    def run(self) -> tuple[Status, int]:
        cfg = self.cfg
        max_iter = cfg.max_iterations or max(20000, 12 * (self.m + self.n_total))
        iterations = 0
        degenerate_run = 0
        bland = False
        pivots_since_refactor = 0

        while True:
            if iterations >= max_iter:
                return Status.ITERATION_LIMIT, iterations
            iterations += 1

            xb = self.x[self.basis]
            lo_b = self.lb[self.basis]
            hi_b = self.ub[self.basis]
            over = xb - hi_b
            under = lo_b - xb
            max_infeas = 0.0
            if self.m:
                max_infeas = max(float(np.max(over, initial=-np.inf)),
                                 float(np.max(under, initial=-np.inf)), 0.0)
            phase1 = max_infeas > self.ftol

            if phase1:
                cb = np.where(over > self.ftol, 1.0, 0.0) \
                    - np.where(under > self.ftol, 1.0, 0.0)
                c_work = None  # nonbasic phase-1 costs are zero
            else:
                cb = self.c[self.basis]
                c_work = self.c

            y = self._btran(cb)
            z = self.at @ y
            if c_work is None:
                d = -z
                dtol = np.full(self.n_total, cfg.opt_tol)
            else:
                d = c_work - z
                dtol = cfg.opt_tol * (1.0 + np.abs(c_work))

            j, direction = self._price(d, dtol, bland)
            if j < 0:
                if phase1:
                    return Status.INFEASIBLE, iterations
                return Status.OPTIMAL, iterations

            alpha = self._ftran(self._column(j))
            delta = direction * alpha

            r, t, target = self._ratio_test(delta, xb, lo_b, hi_b, bland)
            t_flip = (self.ub[j] - self.x[j]) if direction > 0 else (self.x[j] - self.lb[j])
            if not np.isfinite(t_flip):
                t_flip = np.inf

            if r < 0 and not np.isfinite(t_flip):
                if phase1:
                    # a bounded piecewise-linear objective cannot be unbounded;
                    # treat as numerical breakdown
                    return Status.ITERATION_LIMIT, iterations
                return Status.UNBOUNDED, iterations

            if t_flip < (t if r >= 0 else np.inf):
                # entering variable runs to its opposite bound, no pivot
                self.x[self.basis] = xb - t_flip * delta
                self.x[j] = self.ub[j] if direction > 0 else self.lb[j]
                step = t_flip
            else:
                if abs(alpha[r]) < _SMALL_PIVOT and self._etas:
                    # refresh the factorization and retry with exact data
                    self._refactor(recompute=True)
                    pivots_since_refactor = 0
                    continue
                leaving = self.basis[r]
                self.x[self.basis] = xb - t * delta
                self.x[j] = self.x[j] + direction * t
                self.x[leaving] = target
                self.basis[r] = j
                self.in_basis[leaving] = False
                self.in_basis[j] = True
                self._etas.append((r, alpha))
                pivots_since_refactor += 1
                step = t

            if step > 1e-10:
                degenerate_run = 0
                bland = False
            else:
                degenerate_run += 1
                if degenerate_run > cfg.bland_trigger:
                    bland = True

            if pivots_since_refactor >= cfg.refactor_every:
                self._refactor(recompute=True)
                pivots_since_refactor = 0

    def _price(self, d: np.ndarray, dtol: np.ndarray, bland: bool
               ) -> tuple[int, float]:
        """Pick the entering column and its movement direction."""
        x, lb, ub = self.x, self.lb, self.ub
        nb = ~self.in_basis
        movable = nb & (lb != ub)
        # nonbasics sit exactly on a bound (or at 0 when free)
        at_lb = movable & np.isfinite(lb) & (x == lb)
        at_ub = movable & ~at_lb & np.isfinite(ub) & (x == ub)
        free = movable & ~at_lb & ~at_ub

        down_ok = (at_lb | free) & (d < -dtol)
        up_ok = (at_ub | free) & (d > dtol)
        eligible = down_ok | up_ok
        if not np.any(eligible):
            return -1, 0.0
        if bland:
            j = int(np.flatnonzero(eligible)[0])
        else:
            score = np.where(eligible, np.abs(d), -np.inf)
            j = int(np.argmax(score))
        direction = 1.0 if d[j] < 0 else -1.0
        return j, direction

    def _ratio_test(self, delta: np.ndarray, xb: np.ndarray, lo_b: np.ndarray,
                    hi_b: np.ndarray, bland: bool
                    ) -> tuple[int, float, float]:
        """Largest step before a basic variable hits a blocking bound.

        Returns (row, step, snapped bound value); row -1 when nothing blocks.
        Basic variables currently outside a bound block at that bound, which
        realizes the composite phase 1.
        """
        ftol = self.ftol
        t = np.full(self.m, np.inf)
        target = np.empty(self.m)
        pos = delta > _PIVOT_TOL
        if np.any(pos):
            # decreasing: block at ub when above it, else at lb; a basic
            # already below lb is moving away and must not block here
            tgt = np.where(xb > hi_b + ftol, hi_b,
                           np.where(xb >= lo_b - ftol, lo_b, -np.inf))
            ok = pos & np.isfinite(tgt)
            t[ok] = (xb[ok] - tgt[ok]) / delta[ok]
            target[ok] = tgt[ok]
        neg = delta < -_PIVOT_TOL
        if np.any(neg):
            tgt = np.where(xb < lo_b - ftol, lo_b,
                           np.where(xb <= hi_b + ftol, hi_b, np.inf))
            ok = neg & np.isfinite(tgt)
            t[ok] = (xb[ok] - tgt[ok]) / delta[ok]
            target[ok] = tgt[ok]
        np.maximum(t, 0.0, out=t)

        tmin = float(np.min(t, initial=np.inf))
        if not np.isfinite(tmin):
            return -1, np.inf, np.nan
        band = tmin + 1e-9 * (1.0 + tmin)
        cands = np.flatnonzero(t <= band)
        if bland:
            r = int(cands[np.argmin(self.basis[cands])])
        else:
            r = int(cands[np.argmax(np.abs(delta[cands]))])
        return r, float(t[r]), float(target[r])

    def structural_solution(self) -> np.ndarray:
        self._refactor(recompute=True)
        return self.x[:self.n_struct] * self.col_scale
