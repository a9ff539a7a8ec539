"""Measurements, linear residual models and per-point feature maps."""

from dataclasses import dataclass, field

import numpy as np

from .errors import ContractError

MODEL_KINDS = ("line2d", "plane3d", "fundamental_linearized")

MODEL_DIMS = {"line2d": 2, "plane3d": 3, "fundamental_linearized": 8}


@dataclass(frozen=True)
class DataPoint:
    a: np.ndarray
    b: float
    raw: np.ndarray | None = None

    def __post_init__(self):
        a = np.asarray(self.a, dtype=float).reshape(-1)
        object.__setattr__(self, "a", a)
        object.__setattr__(self, "b", float(self.b))
        if self.raw is not None:
            object.__setattr__(self, "raw", np.asarray(self.raw, dtype=float).reshape(-1))
        if not (np.all(np.isfinite(a)) and np.isfinite(self.b)):
            raise ContractError("data point has non-finite entries")


@dataclass(frozen=True)
class Planted:
    """Ground truth of a synthetic instance."""

    theta_hat: np.ndarray
    outlier_indices: tuple


@dataclass(frozen=True, eq=False)
class Dataset:
    """A measurement set with its inlier threshold.

    Rows of ``A`` are the regressors a_i (constant column included), ``b``
    holds the responses.  ``raw`` keeps original observations when the
    regressor is derived from them (image correspondences).
    """

    A: np.ndarray
    b: np.ndarray
    epsilon: float
    model_kind: str
    raw: np.ndarray | None = None
    planted: Planted | None = None
    _features: np.ndarray = field(init=False, repr=False)

    def __post_init__(self):
        A = np.ascontiguousarray(self.A, dtype=float)
        b = np.ascontiguousarray(self.b, dtype=float).reshape(-1)
        if A.ndim != 2 or A.shape[0] != b.shape[0]:
            raise ContractError(f"A has shape {A.shape} but b has {b.shape[0]} entries")
        if self.model_kind not in MODEL_KINDS:
            raise ContractError(f"unknown model kind {self.model_kind!r}")
        if A.shape[1] != MODEL_DIMS[self.model_kind]:
            raise ContractError(
                f"{self.model_kind} expects d={MODEL_DIMS[self.model_kind]}, got {A.shape[1]}")
        if not self.epsilon > 0:
            raise ContractError("epsilon must be positive")
        if A.shape[0] < A.shape[1]:
            raise ContractError(f"need at least d={A.shape[1]} points, got {A.shape[0]}")
        if not (np.all(np.isfinite(A)) and np.all(np.isfinite(b))):
            raise ContractError("dataset has non-finite entries")
        raw = None
        if self.raw is not None:
            raw = np.ascontiguousarray(self.raw, dtype=float)
            if raw.shape[0] != A.shape[0]:
                raise ContractError("raw observations must have one row per point")
        A.setflags(write=False)
        b.setflags(write=False)
        object.__setattr__(self, "A", A)
        object.__setattr__(self, "b", b)
        object.__setattr__(self, "raw", raw)
        object.__setattr__(self, "epsilon", float(self.epsilon))
        feats = feature_matrix(A, b, raw, self.model_kind)
        feats.setflags(write=False)
        object.__setattr__(self, "_features", feats)

    @classmethod
    def from_points(cls, points, epsilon, model_kind, planted=None):
        A = np.array([p.a for p in points], dtype=float)
        b = np.array([p.b for p in points], dtype=float)
        raws = [p.raw for p in points]
        raw = None if any(r is None for r in raws) else np.array(raws, dtype=float)
        return cls(A, b, epsilon, model_kind, raw=raw, planted=planted)

    @property
    def N(self):
        return self.A.shape[0]

    @property
    def d(self):
        return self.A.shape[1]

    @property
    def points(self):
        raw = self.raw
        return [DataPoint(self.A[i], self.b[i], None if raw is None else raw[i])
                for i in range(self.N)]

    @property
    def features(self):
        """The N x m matrix whose rows are ``feature_map`` of each point."""
        return self._features

    def with_epsilon(self, epsilon):
        return Dataset(self.A, self.b, epsilon, self.model_kind, raw=self.raw,
                       planted=self.planted)


def residual(point, theta):
    """Absolute linear residual |a^T theta - b|."""
    theta = np.asarray(theta, dtype=float).reshape(-1)
    if point.a.shape[0] != theta.shape[0]:
        raise ContractError(f"point has d={point.a.shape[0]}, theta has {theta.shape[0]}")
    return abs(float(point.a @ theta) - point.b)


def residuals(dataset, theta, subset=None):
    theta = np.asarray(theta, dtype=float).reshape(-1)
    if theta.shape[0] != dataset.d:
        raise ContractError(f"dataset has d={dataset.d}, theta has {theta.shape[0]}")
    if subset is None:
        return np.abs(dataset.A @ theta - dataset.b)
    idx = np.asarray(subset, dtype=int)
    return np.abs(dataset.A[idx] @ theta - dataset.b[idx])


def consensus(dataset, theta):
    """Return (inlier count, inlier mask) of ``theta`` at the dataset threshold."""
    mask = residuals(dataset, theta) <= dataset.epsilon
    return int(mask.sum()), mask


def feature_map(point, model_kind):
    if model_kind in ("line2d", "plane3d"):
        return np.append(point.a, point.b)
    if model_kind == "fundamental_linearized":
        if point.raw is None:
            raise ContractError("fundamental features need raw (u, v) coordinates")
        return np.array(point.raw[:4], dtype=float)
    raise ContractError(f"unknown model kind {model_kind!r}")


def feature_matrix(A, b, raw, model_kind):
    if model_kind == "fundamental_linearized":
        if raw is None:
            raise ContractError("fundamental features need raw (u, v) coordinates")
        return np.array(raw[:, :4], dtype=float)
    return np.column_stack([A, b])


def linearize_correspondence(u, v):
    """Epipolar constraint v^T F u = 0 as a linear residual with F[2, 2] = 1.

    theta holds the first eight entries of F in row-major order, so
    a^T theta - b equals [v 1] F [u 1]^T.
    """
    u1, u2 = (float(x) for x in u)
    v1, v2 = (float(x) for x in v)
    a = np.array([v1 * u1, v1 * u2, v1, v2 * u1, v2 * u2, v2, u1, u2])
    return DataPoint(a, -1.0, np.array([u1, u2, v1, v2]))
