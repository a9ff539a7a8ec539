"""Greedy re-insertion of removed points while the minimax value stays feasible."""

import numpy as np

from .errors import ContractError
from .minimax import min_max_residual
from .simplex import LpWorkspace


def local_tree_refinement(dataset, s0):
    """Grow ``s0`` by single-point additions until no addition stays within epsilon.

    Each sweep visits the current complement in ascending index order and
    the sweep is repeated until it adds nothing.  Returns a sorted index array.
    """
    ws = LpWorkspace()
    eps = dataset.epsilon
    current = set(int(i) for i in s0)
    if not current or min_max_residual(dataset, sorted(current), ws) > eps:
        raise ContractError("refinement needs an epsilon-feasible starting set")
    improved = True
    while improved:
        improved = False
        complement = [j for j in range(dataset.N) if j not in current]
        for j in complement:
            if min_max_residual(dataset, sorted(current | {j}), ws) <= eps:
                current.add(j)
                improved = True
    return np.array(sorted(current), dtype=int)
