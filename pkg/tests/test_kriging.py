"""Gaussian-process regression of reduced coordinates (POD-Krig baseline)."""
import math

import numpy as np
import pytest
import scipy.linalg as sla
from hypothesis import given, settings
from hypothesis import strategies as st

from liftrom.kriging import (
    correlation,
    fit,
    fit_surrogate,
    load_surrogate,
    pod_krig_coords,
    pod_krig_predict,
    predict,
    save_surrogate,
    se_kernel,
)
from liftrom.romdb import predict_full


def smooth_data(rng, M=12, d=2):
    X = rng.uniform(size=(M, d))
    return X, np.sin(3 * X[:, 0]) + X[:, -1] ** 2


# -- kernel --------------------------------------------------------------------------------------

def test_kernel_examples():
    assert se_kernel([0.3, -1.0], [0.3, -1.0], 0.7) == 1.0
    ell = 0.4
    b = np.array([ell * math.sqrt(2.0), 0.0])
    assert se_kernel([0.0, 0.0], b, ell) == pytest.approx(math.exp(-1.0), rel=1e-14)
    assert se_kernel(0.0, 0.4 * math.sqrt(2.0), 0.4) == pytest.approx(0.3679, abs=5e-5)
    vals = [se_kernel([0.0], [1.0], ell) for ell in np.geomspace(0.1, 1e4, 40)]
    assert np.all(np.diff(vals) > 0) and vals[-1] == pytest.approx(1.0, abs=1e-8)
    with pytest.raises(ValueError):
        se_kernel(0.0, 1.0, 0.0)


def test_correlation_matches_kernel(rng):
    A, B = rng.standard_normal((5, 3)), rng.standard_normal((4, 3))
    R = correlation(A, B, 0.8)
    oracle = np.array([[se_kernel(a, b, 0.8) for b in B] for a in A])
    np.testing.assert_allclose(R, oracle, rtol=1e-13)


# -- fit -------------------------------------------------------------------------------------------

def test_zero_values():
    X = np.linspace(0, 1, 6)[:, None]
    m = fit(X, np.zeros(6))
    assert m.sigma2 == 0.0
    mean, var = predict(m, [0.37])
    assert mean == 0.0 and var == 0.0


def test_length_scale_recovered_from_gp_draw():
    # 2-D like the design space; in 1-D, 40 points are so dense that
    # R(0.3) is numerically singular
    rng = np.random.default_rng(3)
    theta = rng.uniform(size=(40, 2))
    # draw on the standardized inputs the model works in
    X = (theta - theta.mean(0)) / theta.std(0)
    R = correlation(X, X, 0.3) + 1e-10 * np.eye(40)
    y = np.linalg.cholesky(R) @ rng.standard_normal(40)
    m = fit(theta, y)
    assert 0.15 <= m.ell <= 0.6


def test_likelihood_maximized(rng):
    X, y = smooth_data(rng)
    m = fit(X, y)

    def loglik(ell):
        L = np.linalg.cholesky(correlation(m.X, m.X, ell) + m.nugget * np.eye(len(y)))
        a = sla.cho_solve((L, True), y)
        s2 = y @ a / len(y)
        return -0.5 * len(y) * math.log(s2) - np.log(np.diag(L)).sum()

    best = loglik(m.ell)
    for f in (0.9, 1.1, 0.5, 2.0):
        assert loglik(m.ell * f) <= best + 1e-9
    np.testing.assert_allclose(m.sigma2, y @ sla.cho_solve((m.L, True), y) / len(y), rtol=1e-12)


def test_preconditions():
    with pytest.raises(ValueError, match="duplicate"):
        fit(np.array([[0.0], [1.0], [0.0]]), [1.0, 2.0, 1.0])
    with pytest.raises(ValueError, match="at least 3"):
        fit(np.array([[0.0], [1.0]]), [1.0, 2.0])


# -- prediction ----------------------------------------------------------------------------

def test_interpolates_training_points(rng):
    X, y = smooth_data(rng)
    m = fit(X, y)
    mean, var = predict(m, X)
    np.testing.assert_allclose(mean, y, atol=1e-8)
    assert np.all(var <= 1e-8 * m.sigma2)


def test_reverts_to_prior_far_away(rng):
    X, y = smooth_data(rng)
    m = fit(X, y)
    mean, var = predict(m, [1e3, -1e3])
    assert abs(mean) <= 1e-12
    assert var == pytest.approx(m.sigma2, rel=1e-12)


def test_dense_grid_against_explicit_solve():
    # rough data keeps the fitted length-scale short and R well conditioned,
    # so the plain dense solve is itself accurate to roundoff
    X = np.linspace(0.0, 1.0, 10)[:, None]
    y = np.random.default_rng(0).standard_normal(10)
    m = fit(X, y)
    grid = np.linspace(-0.1, 1.1, 500)[:, None]
    Xs, Gs = m.standardize(X), m.standardize(grid)
    K = np.array([[se_kernel(a, b, m.ell) for b in Xs] for a in Xs])
    assert 10 < np.linalg.cond(K) < 1e4
    r = np.array([[se_kernel(g, b, m.ell) for b in Xs] for g in Gs])
    oracle = r @ np.linalg.solve(K, y)
    mean, _ = predict(m, grid)
    assert np.abs(mean - oracle).max() <= 1e-10


@settings(max_examples=40, deadline=None)
@given(st.integers(0, 1 << 30), st.floats(-50, 50))
def test_shift_invariance(seed, c):
    rng = np.random.default_rng(seed)
    X, y = smooth_data(rng, M=8)
    q = rng.uniform(size=(5, 2))
    a, b = fit(X, y), fit(X + c, y)
    assert b.ell == pytest.approx(a.ell, rel=1e-6)
    np.testing.assert_allclose(predict(b, q + c)[0], predict(a, q)[0], atol=1e-7)


@settings(max_examples=40, deadline=None)
@given(st.integers(0, 1 << 30), st.floats(-5, 5), st.floats(-5, 5))
def test_mean_linear_in_values(seed, s, t):
    rng = np.random.default_rng(seed)
    X, y1 = smooth_data(rng, M=8)
    y2 = rng.standard_normal(8)
    q = rng.uniform(size=(6, 2))
    fixed = (0.5, 0.5 * (1 + 1e-12))  # pins the length-scale

    def mean_with(y):
        return predict(fit(X, y, ell_bounds=fixed), q)[0]

    np.testing.assert_allclose(mean_with(s * y1 + t * y2), s * mean_with(y1) + t * mean_with(y2), atol=1e-8)


@settings(max_examples=40, deadline=None)
@given(st.integers(0, 1 << 30))
def test_variance_nonnegative(seed):
    rng = np.random.default_rng(seed)
    X, y = smooth_data(rng, M=int(rng.integers(3, 15)))
    _, var = predict(fit(X, y), rng.uniform(-1, 2, size=(50, 2)))
    assert np.all(var >= 0.0)


# -- surrogate -----------------------------------------------------------------------------------

def test_surrogate_count_and_round_trip(tmp_path, small_db):
    sur = fit_surrogate(small_db.thetas, small_db.coords, small_db.basis)
    assert sur.count == small_db.basis.k == sum(small_db.basis.ks)
    save_surrogate(sur, tmp_path / "gp.bin")
    head = (tmp_path / "gp.bin").read_bytes().split(b"\n", 1)[0].decode()
    assert head == f"liftrom-gp v1 {sur.count} {small_db.M} {small_db.d}"
    back = load_surrogate(tmp_path / "gp.bin", small_db.basis)
    q = small_db.thetas.mean(0) + 1e-4
    np.testing.assert_array_equal(pod_krig_coords(back, q), pod_krig_coords(sur, q))
    raw = (tmp_path / "gp.bin").read_bytes()
    (tmp_path / "cut.bin").write_bytes(raw[:-8])
    with pytest.raises(ValueError):
        load_surrogate(tmp_path / "cut.bin")


def test_surrogate_reproduces_training_reconstruction(small_db):
    sur = fit_surrogate(small_db.thetas, small_db.coords, small_db.basis)
    for i in (0, 4, 9):
        th = small_db.thetas[i]
        out = pod_krig_predict(sur, small_db, th)
        ref = predict_full(small_db, small_db.coords[i], th)
        a, b = out["observables"].data, ref["observables"].data
        err = np.linalg.norm(a - b) / np.linalg.norm(b)
        assert err <= 1e-6
