import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from maxcon_rl.datagen import GenSpec, generate, two_view_geometry
from maxcon_rl.errors import ContractError
from maxcon_rl.model import residuals
from maxcon_rl.search import optimal_search


@pytest.mark.parametrize("kind", ["line2d", "plane3d"])
def test_planted_bands(kind):
    ds = generate(GenSpec(kind, 100, 0.2, seed=5))
    out = list(ds.planted.outlier_indices)
    assert len(out) == 20
    r = residuals(ds, ds.planted.theta_hat)
    inl = np.setdiff1d(np.arange(100), out)
    assert np.all(r[inl] <= 0.1)
    assert np.all((r[out] > 0.1) & (r[out] <= 5))
    assert ds.epsilon == 0.1


@pytest.mark.parametrize("kind", ["line2d", "plane3d", "fundamental_linearized"])
def test_rate_zero_and_determinism(kind):
    a = generate(GenSpec(kind, 40, 0.0, seed=2))
    assert a.planted.outlier_indices == ()
    assert np.all(residuals(a, a.planted.theta_hat) <= a.epsilon)
    b = generate(GenSpec(kind, 40, 0.0, seed=2))
    assert np.array_equal(a.A, b.A) and np.array_equal(a.b, b.b)


def test_exact_inliers_option():
    ds = generate(GenSpec("line2d", 30, 0.2, seed=1, inlier_noise=0.0))
    inl = np.setdiff1d(np.arange(30), ds.planted.outlier_indices)
    assert np.allclose(residuals(ds, ds.planted.theta_hat)[inl], 0, atol=1e-12)


def test_fundamental_epipolar_exact():
    ds = generate(GenSpec("fundamental_linearized", 100, 0.0, seed=0))
    r = residuals(ds, ds.planted.theta_hat)
    assert r.max() < 1e-9


@pytest.mark.parametrize("rate", [0.1, 0.3, 0.5])
def test_fundamental_outliers_are_mismatches(rate):
    spec = GenSpec("fundamental_linearized", 100, rate, seed=3)
    ds = generate(spec)
    clean = generate(GenSpec("fundamental_linearized", 100, 0.0, seed=3))
    out = list(ds.planted.outlier_indices)
    assert len(out) == round(100 * rate)
    # same geometry stream: u is unchanged, v differs exactly at the outliers
    assert np.allclose(ds.raw[:, :2], clean.raw[:, :2])
    moved = np.flatnonzero(np.any(ds.raw[:, 2:] != clean.raw[:, 2:], axis=1))
    assert moved.tolist() == out
    r = residuals(ds, ds.planted.theta_hat)
    inl = np.setdiff1d(np.arange(100), out)
    assert r[inl].max() < 1e-9
    assert np.mean(r[out] > ds.epsilon) > 0.8


def test_fundamental_geometry():
    spec = GenSpec("fundamental_linearized", 10, 0.0, seed=0)
    K1, K2, R, t, F = two_view_geometry(spec, np.random.default_rng(0))
    assert F[2, 2] == 1 and K1[0, 0] != K2[0, 0]
    assert np.allclose(R @ R.T, np.eye(3))
    assert abs(np.linalg.det(F)) < 1e-9 * np.abs(F).max() ** 3


def test_invalid_specs():
    with pytest.raises(ContractError):
        generate(GenSpec("line2d", 10, 1.0))
    with pytest.raises(ContractError):
        generate(GenSpec("line2d", 3, 0.5))
    with pytest.raises(ContractError):
        generate(GenSpec("cubic", 10, 0.1))


@settings(max_examples=15, deadline=None)
@given(st.integers(6, 10), st.floats(0.0, 0.35), st.integers(0, 2**32 - 1))
def test_planted_lower_bound(n, rate, seed):
    spec = GenSpec("line2d", n, rate, seed=seed)
    ds = generate(spec)
    assert optimal_search(ds).consensus >= n - spec.n_outliers
