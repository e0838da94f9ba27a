"""Dense two-phase tableau simplex with Bland's rule.

Small problems only (up to a couple hundred rows/columns); the point is a
deterministic vertex answer, not speed.
"""
from __future__ import annotations

import enum
from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np

from .errors import UsageError

PIVOT_TOL = 1e-10
FEAS_TOL = 1e-9
MAX_SIZE = 200


class Status(enum.Enum):
    OPTIMAL = "Optimal"
    INFEASIBLE = "Infeasible"
    UNBOUNDED = "Unbounded"


@dataclass(frozen=True)
class LPResult:
    status: Status
    x: Optional[np.ndarray] = None
    objective: Optional[float] = None


def _pivot(T, row, col):
    T[row] /= T[row, col]
    for i in range(T.shape[0]):
        if i != row and T[i, col] != 0.0:
            T[i] -= T[i, col] * T[row]


def _simplex(T, basis, ncols, allowed):
    """Minimize the objective stored in the last row of ``T``; Bland's rule."""
    m = T.shape[0] - 1
    while True:
        cost = T[-1, :ncols]
        entering = None
        for j in range(ncols):
            if allowed[j] and cost[j] < -PIVOT_TOL:
                entering = j
                break
        if entering is None:
            return True
        col = T[:m, entering]
        rhs = T[:m, -1]
        leave = None
        best = None
        for i in range(m):
            if col[i] > PIVOT_TOL:
                ratio = rhs[i] / col[i]
                if (best is None or ratio < best - 1e-12
                        or (abs(ratio - best) <= 1e-12 and basis[i] < basis[leave])):
                    best, leave = ratio, i
        if leave is None:
            return False
        _pivot(T, leave, entering)
        basis[leave] = entering


def lp_solve(A, b, c, senses: Optional[Sequence[str]] = None, bounds=None,
             maximize: bool = False) -> LPResult:
    """Optimize ``c @ x`` subject to ``A[i] @ x (<=|>=|=) b[i]`` and per-variable bounds.

    Parameters
    ----------
    A : array_like, shape (rows, cols)
    b : array_like, shape (rows,)
    c : array_like, shape (cols,)
    senses : sequence of {"<=", ">=", "="}, optional
        One per row; default all ``"<="``.
    bounds : sequence of (lo, hi), optional
        ``None`` or infinite entries mean unbounded on that side.  Default
        ``(0, inf)`` for every variable.
    maximize : bool
        Maximize instead of minimize.

    Returns
    -------
    LPResult
        ``x`` and ``objective`` are set only for ``Status.OPTIMAL``.
    """
    A = np.atleast_2d(np.asarray(A, dtype=float))
    b = np.asarray(b, dtype=float).ravel()
    c = np.asarray(c, dtype=float).ravel()
    if A.size == 0:
        A = A.reshape(len(b), len(c))
    rows, cols = A.shape
    if b.shape != (rows,) or c.shape != (cols,):
        raise UsageError(f"LP dimension mismatch: A {A.shape}, b {b.shape}, c {c.shape}")
    if rows > MAX_SIZE or cols > MAX_SIZE:
        raise UsageError(f"LP too large for the dense solver: {A.shape}")
    senses = list(senses) if senses is not None else ["<="] * rows
    if len(senses) != rows or any(s not in ("<=", ">=", "=") for s in senses):
        raise UsageError("senses must give one of '<=', '>=', '=' per row")
    if bounds is None:
        bounds = [(0.0, None)] * cols
    if len(bounds) != cols:
        raise UsageError("bounds must give one (lo, hi) pair per variable")

    # map x to nonnegative variables: x = shift + T_map @ y
    sign_cols = []  # list of (orig var, coefficient) per new column
    shift = np.zeros(cols)
    extra_rows, extra_b = [], []
    for j, (lo, hi) in enumerate(bounds):
        lo = -np.inf if lo is None else float(lo)
        hi = np.inf if hi is None else float(hi)
        if lo > hi:
            return LPResult(Status.INFEASIBLE)
        if np.isfinite(lo):
            shift[j] = lo
            sign_cols.append([(j, 1.0)])
            if np.isfinite(hi):
                extra_rows.append((len(sign_cols) - 1, hi - lo))
        elif np.isfinite(hi):
            shift[j] = hi
            sign_cols.append([(j, -1.0)])
        else:
            sign_cols.append([(j, 1.0)])
            sign_cols.append([(j, -1.0)])
    ny = len(sign_cols)
    Tm = np.zeros((cols, ny))
    for k, entries in enumerate(sign_cols):
        for j, s in entries:
            Tm[j, k] = s

    Ay = A @ Tm
    by = b - A @ shift
    cy = c @ Tm
    c0 = float(c @ shift)
    if maximize:
        cy = -cy
    row_list = list(Ay)
    rhs_list = list(by)
    sense_list = list(senses)
    for k, ub in extra_rows:
        e = np.zeros(ny)
        e[k] = 1.0
        row_list.append(e)
        rhs_list.append(ub)
        sense_list.append("<=")
    M = np.array(row_list).reshape(len(row_list), ny)
    rhs = np.array(rhs_list, dtype=float)
    for i in range(len(rhs)):
        if rhs[i] < 0:
            M[i] = -M[i]
            rhs[i] = -rhs[i]
            sense_list[i] = {"<=": ">=", ">=": "<=", "=": "="}[sense_list[i]]
    nr = len(rhs)

    n_slack = sum(1 for s in sense_list if s != "=")
    n_art = sum(1 for s in sense_list if s != "<=")
    width = ny + n_slack + n_art
    T = np.zeros((nr + 1, width + 1))
    T[:nr, :ny] = M
    T[:nr, -1] = rhs
    basis = [0] * nr
    art_cols = []
    s_idx, a_idx = ny, ny + n_slack
    for i, s in enumerate(sense_list):
        if s == "<=":
            T[i, s_idx] = 1.0
            basis[i] = s_idx
            s_idx += 1
        elif s == ">=":
            T[i, s_idx] = -1.0
            s_idx += 1
            T[i, a_idx] = 1.0
            basis[i] = a_idx
            art_cols.append(a_idx)
            a_idx += 1
        else:
            T[i, a_idx] = 1.0
            basis[i] = a_idx
            art_cols.append(a_idx)
            a_idx += 1

    # phase 1
    allowed = np.ones(width, dtype=bool)
    if art_cols:
        T[-1, :] = 0.0
        for i in range(nr):
            if basis[i] in art_cols:
                T[-1, :] -= T[i, :]
        for a in art_cols:
            T[-1, a] = 0.0
        _simplex(T, basis, width, allowed)
        if -T[-1, -1] > FEAS_TOL * max(1.0, float(np.max(np.abs(rhs), initial=0.0))):
            return LPResult(Status.INFEASIBLE)
        # drive artificials out of the basis; drop redundant rows
        keep = []
        for i in range(nr):
            if basis[i] in art_cols:
                row = T[i, :ny + n_slack]
                cand = np.nonzero(np.abs(row) > PIVOT_TOL)[0]
                if len(cand):
                    _pivot(T, i, int(cand[0]))
                    basis[i] = int(cand[0])
                    keep.append(i)
            else:
                keep.append(i)
        T = np.vstack([T[keep], T[-1:]])
        basis = [basis[i] for i in keep]
        nr = len(keep)
        allowed[art_cols] = False

    # phase 2
    T[-1, :] = 0.0
    T[-1, :ny] = cy
    for i in range(nr):
        if T[-1, basis[i]] != 0.0:
            T[-1, :] -= T[-1, basis[i]] * T[i, :]
    if not _simplex(T, basis, width, allowed):
        return LPResult(Status.UNBOUNDED)

    y = np.zeros(width)
    for i in range(nr):
        y[basis[i]] = T[i, -1]
    # recompute basic values from the original rows to shed accumulated error
    B_cols = [j for j in basis]
    full = np.hstack([M, _slack_art_block(sense_list, n_slack, n_art)])
    try:
        yb = np.linalg.solve(full[:, B_cols][: nr], rhs[:nr]) if nr == len(rhs) else None
    except np.linalg.LinAlgError:
        yb = None
    if yb is not None and np.all(yb >= -FEAS_TOL):
        y[:] = 0.0
        y[B_cols] = np.maximum(yb, 0.0)
    x = shift + Tm @ y[:ny]
    return LPResult(Status.OPTIMAL, x, float(c @ x))


def _slack_art_block(senses, n_slack, n_art):
    nr = len(senses)
    S = np.zeros((nr, n_slack + n_art))
    s_idx, a_idx = 0, n_slack
    for i, s in enumerate(senses):
        if s == "<=":
            S[i, s_idx] = 1.0
            s_idx += 1
        elif s == ">=":
            S[i, s_idx] = -1.0
            S[i, a_idx] = 1.0
            s_idx += 1
            a_idx += 1
        else:
            S[i, a_idx] = 1.0
            a_idx += 1
    return S


def primal_residual(A, b, senses, x) -> float:
    """Largest violation of the row constraints at ``x``."""
    A = np.atleast_2d(np.asarray(A, dtype=float))
    r = A @ np.asarray(x, dtype=float) - np.asarray(b, dtype=float)
    worst = 0.0
    for ri, s in zip(r, senses):
        if s == "<=":
            worst = max(worst, ri)
        elif s == ">=":
            worst = max(worst, -ri)
        else:
            worst = max(worst, abs(ri))
    return float(worst)
