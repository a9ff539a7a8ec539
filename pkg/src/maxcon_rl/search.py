"""Outlier-removal search over subsets: states, actions, exact search, random rollouts."""

import time
from collections import deque
from dataclasses import dataclass, field

import numpy as np

from .errors import BudgetExhausted, ContractError
from .minimax import minimax_fit
from .simplex import LpWorkspace


@dataclass(frozen=True, eq=False)
class SearchState:
    """A surviving subset, identified by the bitmask of removed points."""

    removed: int
    fit: object
    N: int

    @property
    def depth(self):
        return self.removed.bit_count()

    @property
    def removed_indices(self):
        return [i for i in range(self.N) if self.removed >> i & 1]

    @property
    def removed_mask(self):
        return np.array([bool(self.removed >> i & 1) for i in range(self.N)])

    @property
    def surviving(self):
        return self.fit.subset

    @property
    def gamma(self):
        return self.fit.gamma


@dataclass
class SearchResult:
    consensus_indices: np.ndarray
    removals: int
    theta: np.ndarray
    nodes_expanded: int
    wall_time: float
    gamma: float = 0.0
    removal_order: list = field(default_factory=list)

    @property
    def consensus(self):
        return int(len(self.consensus_indices))


def _mask_of(indices):
    m = 0
    for i in indices:
        m |= 1 << int(i)
    return m


def state_for(dataset, removed, workspace=None):
    """Build the state whose removed set is ``removed`` (bitmask or iterable)."""
    if not isinstance(removed, int):
        removed = _mask_of(removed)
    keep = [i for i in range(dataset.N) if not removed >> i & 1]
    return SearchState(removed, minimax_fit(dataset, keep, workspace=workspace), dataset.N)


def initial_state(dataset, workspace=None):
    return state_for(dataset, 0, workspace)


def actions(state):
    """Global indices of the basis points; removing any of them lowers gamma."""
    return [int(i) for i in state.fit.basis_global]


def apply_action(dataset, state, j, workspace=None):
    if j not in actions(state):
        raise ContractError(f"point {j} is not in the basis {actions(state)}")
    return state_for(dataset, state.removed | 1 << int(j), workspace)


def is_goal(state, epsilon):
    return state.fit.gamma <= epsilon


def _result(state, nodes, t0, order=()):
    return SearchResult(
        consensus_indices=np.array(state.surviving, dtype=int),
        removals=state.depth,
        theta=state.fit.theta.copy(),
        nodes_expanded=nodes,
        wall_time=time.perf_counter() - t0,
        gamma=state.fit.gamma,
        removal_order=list(order),
    )


def optimal_search(dataset, node_budget=200_000):
    """Breadth-first (uniform unit cost) search for the fewest removals.

    Removal orders reaching the same subset are merged.  ``nodes_expanded``
    counts minimax solves, i.e. distinct states evaluated.
    """
    t0 = time.perf_counter()
    ws = LpWorkspace()
    eps = dataset.epsilon
    root = initial_state(dataset, ws)
    solves = 1
    seen = {root.removed}
    queue = deque([(root, ())])
    best = root
    while queue:
        state, order = queue.popleft()
        if is_goal(state, eps):
            return _result(state, solves, t0, order)
        for j in sorted(actions(state)):
            child_mask = state.removed | 1 << j
            if child_mask in seen:
                continue
            if solves >= node_budget:
                raise BudgetExhausted(
                    f"optimal search exceeded {node_budget} nodes",
                    best=_result(best, solves, t0))
            seen.add(child_mask)
            child = state_for(dataset, child_mask, ws)
            solves += 1
            if child.gamma < best.gamma:
                best = child
            queue.append((child, order + (j,)))
    raise ContractError("search space exhausted without a goal state")  # unreachable: singletons fit exactly


def rollout(dataset, choose, workspace=None, on_step=None):
    """Follow ``choose(state) -> index`` from the initial state until the goal.

    Returns (SearchResult, list of visited states).
    """
    t0 = time.perf_counter()
    ws = workspace or LpWorkspace()
    state = initial_state(dataset, ws)
    states = [state]
    order = []
    # generic data reaches the goal within N - d removals; a single point always fits
    max_steps = dataset.N - 1
    while not is_goal(state, dataset.epsilon):
        if len(order) >= max_steps:
            raise ContractError("rollout failed to reach a goal state")
        j = choose(state)
        nxt = apply_action(dataset, state, j, ws)
        if on_step is not None:
            on_step(state, j, nxt)
        order.append(j)
        state = nxt
        states.append(state)
    return _result(state, len(states), t0, order), states


def random_rollout(dataset, rng_seed=None):
    """Remove a uniformly random basis point until the goal is reached."""
    rng = np.random.default_rng(rng_seed)

    def choose(state):
        acts = actions(state)
        return acts[int(rng.integers(len(acts)))]

    return rollout(dataset, choose)[0]
