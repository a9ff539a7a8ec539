"""Chebyshev (L-infinity) fitting of linear residuals and basis extraction."""

from dataclasses import dataclass

import numpy as np

from .errors import ContractError, SolverError
from .simplex import LpWorkspace, linprog_simplex

BASIS_TOL = 1e-7


@dataclass(frozen=True, eq=False)
class MinimaxFit:
    """Optimal minimax fit of a subset.

    ``basis`` and ``residuals`` index into the fitted subset (0..len(subset)-1);
    ``subset`` keeps the original dataset indices in the same order.
    """

    theta: np.ndarray
    gamma: float
    basis: np.ndarray
    residuals: np.ndarray
    subset: np.ndarray

    @property
    def basis_global(self):
        return self.subset[self.basis]

    @property
    def oversized(self):
        """True when the tie set is larger than the generic d+1 bound."""
        return self.basis.size > self.theta.size + 1


def _solve_chebyshev(A, b, workspace):
    n, d = A.shape
    # column scaling keeps the tableau well conditioned for pixel-scale data
    col_scale = np.abs(A).max(axis=0)
    col_scale[col_scale == 0] = 1.0
    b_scale = max(np.abs(b).max(), 1e-300)
    As = A / col_scale
    bs = b / b_scale
    # gamma = M - delta with M = max|b| (theta = 0 attains it), so delta >= 0 and
    # the all-slack basis is feasible from the start
    M = np.abs(bs).max()
    ones = np.ones((n, 1))
    A_ub = np.block([[As, -As, ones], [-As, As, ones]])
    b_ub = np.concatenate([bs + M, M - bs])
    c = np.zeros(2 * d + 1)
    c[-1] = -1.0
    res = linprog_simplex(c, A_ub, b_ub, workspace=workspace)
    theta_s = res.x[:d] - res.x[d:2 * d]
    with np.errstate(over="ignore"):
        theta = theta_s * b_scale / col_scale
    if not np.all(np.isfinite(theta)):
        raise SolverError("minimax parameters overflow (near-zero regressor column)")
    return theta


def minimax_fit(dataset, subset=None, basis_tol=BASIS_TOL, workspace=None):
    """Solve min_theta max_{i in subset} |a_i^T theta - b_i| exactly."""
    if subset is None:
        idx = np.arange(dataset.N)
    else:
        idx = np.asarray(sorted(set(int(i) for i in subset)), dtype=int)
    if idx.size == 0:
        raise ContractError("minimax fit of an empty subset")
    A = dataset.A[idx]
    b = dataset.b[idx]
    if not np.any(b):
        theta = np.zeros(dataset.d)
    else:
        theta = _solve_chebyshev(A, b, workspace or LpWorkspace())
    r = np.abs(A @ theta - b)
    gamma = float(r.max())
    basis = extract_basis_from(r, gamma, basis_tol)
    return MinimaxFit(theta=theta, gamma=gamma, basis=basis, residuals=r, subset=idx)


def extract_basis_from(residuals, gamma, basis_tol=BASIS_TOL):
    return np.flatnonzero(residuals >= gamma - basis_tol * max(1.0, gamma))


def extract_basis(fit, basis_tol=BASIS_TOL):
    """Indices (into the fitted subset) whose residual attains gamma."""
    return extract_basis_from(fit.residuals, fit.gamma, basis_tol)


def min_max_residual(dataset, subset=None, workspace=None):
    return minimax_fit(dataset, subset, workspace=workspace).gamma
