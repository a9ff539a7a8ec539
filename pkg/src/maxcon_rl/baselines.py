"""RANSAC and LO-RANSAC with iteration or wall-clock budgets."""

import time
import warnings
from dataclasses import dataclass

import numpy as np

from .errors import ContractError
from .model import consensus
from .search import SearchResult

COND_LIMIT = 1e10


@dataclass
class RansacConfig:
    """Exactly one of ``iterations`` / ``seconds`` bounds the run."""

    iterations: int | None = 1000
    seconds: float | None = None
    seed: int = 0
    lo_enabled: bool = False
    lo_inner_iterations: int = 10

    def __post_init__(self):
        if (self.iterations is None) == (self.seconds is None):
            raise ContractError("give exactly one of iterations or seconds")
        if self.iterations is not None and self.iterations <= 0:
            raise ContractError("iteration budget must be positive")
        if self.seconds is not None and not self.seconds > 0:
            raise ContractError("time budget must be positive")
        if self.lo_inner_iterations < 0:
            raise ContractError("lo_inner_iterations must be >= 0")


def _local_optimize(dataset, count, mask, theta, n_iter):
    """Iterated least-squares refits on the inlier set, keeping improvements."""
    for _ in range(n_iter):
        if mask.sum() < dataset.d:
            break
        cand, *_ = np.linalg.lstsq(dataset.A[mask], dataset.b[mask], rcond=None)
        c_count, c_mask = consensus(dataset, cand)
        if c_count <= count:
            break
        count, mask, theta = c_count, c_mask, cand
    return count, mask, theta


def ransac(dataset, config):
    """Minimal-sample hypothesise-and-verify; LO step when ``config.lo_enabled``."""
    N, d = dataset.N, dataset.d
    if N < d:
        raise ContractError("RANSAC needs at least d points")
    rng = np.random.default_rng(config.seed)
    t0 = time.perf_counter()
    best_count, best_mask, best_theta = -1, np.zeros(N, dtype=bool), np.zeros(d)
    it = 0
    while True:
        if config.iterations is not None:
            if it >= config.iterations:
                break
        elif time.perf_counter() - t0 >= config.seconds:
            break
        it += 1
        sample = rng.choice(N, size=d, replace=False)
        As = dataset.A[sample]
        if np.linalg.cond(As) > COND_LIMIT:
            continue
        theta = np.linalg.solve(As, dataset.b[sample])
        count, mask = consensus(dataset, theta)
        if count > best_count:
            best_count, best_mask, best_theta = count, mask, theta
            if config.lo_enabled and config.lo_inner_iterations:
                best_count, best_mask, best_theta = _local_optimize(
                    dataset, best_count, best_mask, best_theta, config.lo_inner_iterations)
    if best_count < 0:
        warnings.warn("RANSAC produced no valid hypothesis within its budget", RuntimeWarning)
        best_count = 0
    inliers = np.flatnonzero(best_mask)
    return SearchResult(
        consensus_indices=inliers,
        removals=N - inliers.size,
        theta=np.asarray(best_theta, dtype=float),
        nodes_expanded=it,
        wall_time=time.perf_counter() - t0,
        gamma=float(np.abs(dataset.A[inliers] @ best_theta - dataset.b[inliers]).max(initial=0.0)),
    )


def lo_ransac(dataset, config):
    cfg = RansacConfig(iterations=config.iterations, seconds=config.seconds, seed=config.seed,
                       lo_enabled=True, lo_inner_iterations=config.lo_inner_iterations)
    return ransac(dataset, cfg)
