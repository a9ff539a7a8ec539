"""Synthetic instances: noisy lines, planes and two-view correspondences."""

from dataclasses import dataclass

import numpy as np
from scipy.spatial.transform import Rotation

from .errors import ContractError
from .model import MODEL_DIMS, Dataset, Planted, linearize_correspondence

INLIER_NOISE = 0.1
OUTLIER_MAX = 5.0
# shrink the sampled bands by a hair so float rounding in b cannot push a
# planted inlier above epsilon or an outlier onto it
_GUARD = 1e-9


@dataclass(frozen=True)
class GenSpec:
    model_kind: str = "line2d"
    N: int = 100
    outlier_rate: float = 0.2
    seed: int = 0
    epsilon: float = 0.1
    # half-width of the uniform inlier noise band (lines and planes); 0 gives exact inliers
    inlier_noise: float = INLIER_NOISE
    # two-view synthesis only
    focal1: float = 500.0
    focal2: float = 600.0
    baseline: float = 1.0
    max_rotation: float = 0.1
    # the linearised residual only depends on where the pixel origin sits
    # relative to the principal point; this offset keeps epsilon=0.1 selective
    principal_point: tuple = (160.0, 120.0)
    pixel_noise: float = 0.0

    @property
    def n_outliers(self):
        return int(round(self.outlier_rate * self.N))

    def validate(self):
        if self.model_kind not in MODEL_DIMS:
            raise ContractError(f"unknown model kind {self.model_kind!r}")
        if not 0.0 <= self.outlier_rate < 1.0:
            raise ContractError(f"outlier rate {self.outlier_rate} outside [0, 1)")
        if not 0.0 <= self.inlier_noise <= INLIER_NOISE:
            raise ContractError(f"inlier noise {self.inlier_noise} outside [0, {INLIER_NOISE}]")
        d = MODEL_DIMS[self.model_kind]
        if self.N - self.n_outliers <= d:
            raise ContractError(
                f"N={self.N} with {self.n_outliers} outliers leaves too few inliers for d={d}")


def _noisy_linear(spec, A, rng):
    N = spec.N
    theta = rng.uniform(-1.0, 1.0, size=A.shape[1])
    out_idx = np.sort(rng.choice(N, size=spec.n_outliers, replace=False))
    noise = rng.uniform(-1.0, 1.0, size=N) * spec.inlier_noise * (1 - _GUARD)
    lo, hi = INLIER_NOISE * (1 + _GUARD), OUTLIER_MAX * (1 - _GUARD)
    mags = hi - rng.uniform(0.0, hi - lo, size=out_idx.size)   # in (lo, hi]
    signs = np.where(rng.random(out_idx.size) < 0.5, -1.0, 1.0)
    noise[out_idx] = signs * mags
    b = A @ theta + noise
    planted = Planted(theta_hat=theta, outlier_indices=tuple(int(i) for i in out_idx))
    return Dataset(A, b, spec.epsilon, spec.model_kind, planted=planted)


def gen_line2d(spec):
    spec.validate()
    rng = np.random.default_rng(spec.seed)
    a = rng.uniform(-1.0, 1.0, size=spec.N)
    return _noisy_linear(spec, np.column_stack([a, np.ones(spec.N)]), rng)


def gen_plane3d(spec):
    spec.validate()
    rng = np.random.default_rng(spec.seed)
    xy = rng.uniform(-1.0, 1.0, size=(spec.N, 2))
    return _noisy_linear(spec, np.column_stack([xy, np.ones(spec.N)]), rng)


def _skew(t):
    return np.array([[0, -t[2], t[1]], [t[2], 0, -t[0]], [-t[1], t[0], 0]])


def two_view_geometry(spec, rng):
    """Random cameras; returns (K1, K2, R, t, F) with F normalised to F[2, 2] = 1."""
    cx, cy = spec.principal_point
    K1 = np.array([[spec.focal1, 0, cx], [0, spec.focal1, cy], [0, 0, 1]])
    K2 = np.array([[spec.focal2, 0, cx], [0, spec.focal2, cy], [0, 0, 1]])
    while True:
        R = Rotation.from_rotvec(rng.uniform(-spec.max_rotation, spec.max_rotation, 3)).as_matrix()
        direction = np.array([1.0, *rng.uniform(-0.2, 0.2, 2)])
        t = spec.baseline * direction / np.linalg.norm(direction)
        F = np.linalg.inv(K2).T @ _skew(t) @ R @ np.linalg.inv(K1)
        if abs(F[2, 2]) > 1e-6 * np.abs(F).max():
            return K1, K2, R, t, F / F[2, 2]


def gen_fundamental(spec):
    """Two-view correspondences of random 3D points; outliers are mismatches."""
    spec.validate()
    rng = np.random.default_rng(spec.seed)
    N = spec.N
    K1, K2, R, t, F = two_view_geometry(spec, rng)
    X = np.column_stack([rng.uniform(-1.5, 1.5, (N, 2)), rng.uniform(4.0, 8.0, N)])
    p1 = (K1 @ X.T).T
    u = p1[:, :2] / p1[:, 2:]
    p2 = (K2 @ (R @ X.T + t[:, None])).T
    v = p2[:, :2] / p2[:, 2:]
    if spec.pixel_noise > 0:
        u = u + rng.normal(0, spec.pixel_noise, u.shape)
        v = v + rng.normal(0, spec.pixel_noise, v.shape)
    out_idx = np.sort(rng.choice(N, size=spec.n_outliers, replace=False))
    if out_idx.size >= 2:
        # cyclic shift over a shuffled order: every outlier gets another point's v
        order = rng.permutation(out_idx)
        v[order] = v[np.roll(order, 1)]
    elif out_idx.size == 1:
        lo, hi = v.min(axis=0), v.max(axis=0)
        v[out_idx[0]] = rng.uniform(lo, hi)
    pts = [linearize_correspondence(u[i], v[i]) for i in range(N)]
    planted = Planted(theta_hat=F.reshape(-1)[:8].copy(),
                      outlier_indices=tuple(int(i) for i in out_idx))
    return Dataset.from_points(pts, spec.epsilon, "fundamental_linearized", planted=planted)


GENERATORS = {
    "line2d": gen_line2d,
    "plane3d": gen_plane3d,
    "fundamental_linearized": gen_fundamental,
}


def generate(spec):
    if spec.model_kind not in GENERATORS:
        raise ContractError(f"unknown model kind {spec.model_kind!r}")
    return GENERATORS[spec.model_kind](spec)
