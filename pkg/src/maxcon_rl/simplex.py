"""Dense two-phase tableau simplex with Bland's anti-cycling rule.

Solves ``min c^T x  s.t.  A_ub x <= b_ub,  A_eq x = b_eq,  x >= 0``.
Sized for small dense problems (a few hundred rows, tens of columns).
"""

from dataclasses import dataclass

import numpy as np

from .errors import SolverError

PIVOT_TOL = 1e-11
COST_TOL = 1e-11


@dataclass
class LpResult:
    x: np.ndarray
    fun: float
    pivots: int


class LpWorkspace:
    """Reusable tableau storage; holds no state between solves."""

    def __init__(self):
        self._buf = np.empty(0)

    def tableau(self, rows, cols):
        if self._buf.size < rows * cols:
            self._buf = np.empty(max(rows * cols, 2 * self._buf.size))
        T = self._buf[:rows * cols].reshape(rows, cols)
        T.fill(0.0)
        return T


def _pivot(T, r, j):
    T[r] /= T[r, j]
    col = T[:, j].copy()
    col[r] = 0.0
    # rank-one update on every row except the pivot row
    T -= np.outer(col, T[r])


def _run(T, basis, ncols, max_pivots, pivots):
    """Bland-rule simplex on tableau T (last row = reduced costs, last col = rhs)."""
    m = T.shape[0] - 1
    while True:
        costs = T[m, :ncols]
        neg = np.flatnonzero(costs < -COST_TOL)
        if neg.size == 0:
            return pivots
        j = neg[0]
        col = T[:m, j]
        rows = np.flatnonzero(col > PIVOT_TOL)
        if rows.size == 0:
            raise SolverError("LP is unbounded")
        ratios = T[rows, -1] / col[rows]
        best = ratios.min()
        tied = rows[ratios <= best + 1e-12 * max(1.0, abs(best))]
        # Bland: among tied rows, leave the lowest-indexed basic variable
        r = tied[np.argmin(basis[tied])]
        _pivot(T, r, j)
        basis[r] = j
        pivots += 1
        if pivots > max_pivots:
            raise SolverError(f"simplex exceeded {max_pivots} pivots")


def linprog_simplex(c, A_ub=None, b_ub=None, A_eq=None, b_eq=None, workspace=None,
                    max_pivots=None):
    """Minimise ``c @ x`` over the nonnegative orthant; raises SolverError on failure."""
    c = np.asarray(c, dtype=float)
    n = c.shape[0]
    A_ub = np.zeros((0, n)) if A_ub is None else np.asarray(A_ub, dtype=float)
    b_ub = np.zeros(0) if b_ub is None else np.asarray(b_ub, dtype=float)
    A_eq = np.zeros((0, n)) if A_eq is None else np.asarray(A_eq, dtype=float)
    b_eq = np.zeros(0) if b_eq is None else np.asarray(b_eq, dtype=float)
    m_ub, m_eq = A_ub.shape[0], A_eq.shape[0]
    m = m_ub + m_eq

    flip_ub = b_ub < 0
    flip_eq = b_eq < 0
    # artificials for flipped inequalities (now >=) and for every equality
    art_rows = np.concatenate([np.flatnonzero(flip_ub), m_ub + np.arange(m_eq)])
    n_art = art_rows.size
    ncols = n + m_ub + n_art
    ws = workspace if workspace is not None else LpWorkspace()
    T = ws.tableau(m + 1, ncols + 1)

    sign_ub = np.where(flip_ub, -1.0, 1.0)
    T[:m_ub, :n] = A_ub * sign_ub[:, None]
    T[np.arange(m_ub), n + np.arange(m_ub)] = sign_ub
    T[:m_ub, -1] = b_ub * sign_ub
    sign_eq = np.where(flip_eq, -1.0, 1.0)
    T[m_ub:m, :n] = A_eq * sign_eq[:, None]
    T[m_ub:m, -1] = b_eq * sign_eq

    basis = np.empty(m, dtype=int)
    basis[:m_ub] = n + np.arange(m_ub)
    art_cols = n + m_ub + np.arange(n_art)
    T[art_rows, art_cols] = 1.0
    basis[art_rows] = art_cols

    if max_pivots is None:
        max_pivots = 50 * (m + ncols) + 1000
    pivots = 0

    if n_art:
        # phase 1: minimise the sum of artificials
        T[m, :] = -T[art_rows].sum(axis=0)
        T[m, art_cols] = 0.0
        pivots = _run(T, basis, ncols, max_pivots, pivots)
        scale = max(1.0, np.abs(T[:m, -1]).max(initial=0.0))
        if -T[m, -1] > 1e-9 * scale:
            raise SolverError("LP is infeasible")
        # drive remaining artificials out of the basis
        keep = np.ones(m, dtype=bool)
        for r in range(m):
            if basis[r] >= n + m_ub:
                cand = np.flatnonzero(np.abs(T[r, :n + m_ub]) > 1e-9)
                if cand.size:
                    _pivot(T, r, cand[0])
                    basis[r] = cand[0]
                    pivots += 1
                else:
                    keep[r] = False
        if not keep.all():
            rows = np.concatenate([np.flatnonzero(keep), [m]])
            T = T[rows]
            basis = basis[keep]
            m = basis.size
        T[:, n + m_ub:ncols] = 0.0
        ncols_phase2 = n + m_ub
    else:
        ncols_phase2 = ncols

    # phase 2: reduced costs of the true objective
    cost = np.zeros(T.shape[1])
    cost[:n] = c
    cB = cost[basis]
    T[m, :] = cost - cB @ T[:m, :]
    T[m, -1] = -(cB @ T[:m, -1])
    pivots = _run(T, basis, ncols_phase2, max_pivots, pivots)

    x = np.zeros(ncols)
    x[basis] = T[:m, -1]
    x = x[:n]
    return LpResult(x=x, fun=float(c @ x), pivots=pivots)
