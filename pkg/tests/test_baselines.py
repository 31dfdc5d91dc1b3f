"""Tests for the graph-Laplacian kernel baseline.

The unit circle is the analytic oracle: its Laplacian eigenvalues are
k^2 with multiplicity two and the eigenfunctions are sin/cos of arc
length, which equally spaced points recover through the circulant
structure of the affinity matrix.
"""
import math

import numpy as np
import pytest
from scipy.linalg import subspace_angles

from heatgeom.baselines import (
    GlConfig,
    default_epsilon,
    gl_affinity,
    gl_kernel,
    gl_spectrum,
)


def circle_points(n=200):
    theta = 2.0 * np.pi * np.arange(n) / n
    return np.stack([np.cos(theta), np.sin(theta)], axis=1), theta


def test_config_validation():
    GlConfig(0.5, 3, 1.0, 2)
    with pytest.raises(ValueError):
        GlConfig(0.0, 3, 1.0, 2)
    with pytest.raises(ValueError):
        GlConfig(0.5, 0, 1.0, 2)
    with pytest.raises(ValueError):
        GlConfig(0.5, 3, -1.0, 2)
    with pytest.raises(ValueError):
        GlConfig(0.5, 3, 1.0, 0)


def test_default_epsilon_rule():
    pts = np.array([[0.0, 0.0], [3.0, 0.0], [0.0, 4.0]])
    # pairwise distances 3, 4, 5; median 4
    assert default_epsilon(pts) == pytest.approx(4.0 / 3.0)


def test_affinity_identical_points():
    # zero distance: raw kernel 1 everywhere, q = 2 per point, W = 1/4
    pts = np.array([[1.0, 2.0], [1.0, 2.0]])
    w, d = gl_affinity(pts, 0.7)
    np.testing.assert_allclose(w, 0.25)
    np.testing.assert_allclose(d, 0.5)


def test_affinity_symmetry():
    rng = np.random.default_rng(0)
    pts = rng.normal(size=(40, 3))
    w, d = gl_affinity(pts, 0.8)
    assert np.max(np.abs(w - w.T)) < 1e-12
    np.testing.assert_allclose(d, w.sum(axis=1))


def test_affinity_collinear_monotone():
    pts = np.array([[0.0], [1.0], [2.0]])
    w, _ = gl_affinity(pts, 1.0)
    assert w[0, 1] > w[0, 2]
    assert w[1, 0] > w[2, 0]


def test_affinity_validation():
    with pytest.raises(ValueError):
        gl_affinity(np.zeros((1, 2)), 0.5)
    with pytest.raises(ValueError):
        gl_affinity(np.zeros((3, 2)), 0.0)


def test_spectrum_leading_eigenvalue_zero():
    pts, _ = circle_points(50)
    eps = 0.3
    w, d = gl_affinity(pts, eps)
    mu, _ = gl_spectrum(w, d, 5, pts, eps, 1)
    assert abs(mu[0]) < 1e-8
    assert np.all(mu >= -1e-8)
    assert np.all(np.diff(mu) >= -1e-10)  # descending alpha = ascending mu


def test_spectrum_k_bound():
    pts, _ = circle_points(10)
    w, d = gl_affinity(pts, 0.3)
    with pytest.raises(ValueError):
        gl_spectrum(w, d, 11, pts, 0.3, 1)


def test_circle_spectrum_oracle():
    # unit circle: first nonzero rate has multiplicity 2 near 1 = 1^2, and
    # the eigenvector pair spans sin/cos of arc length within 5 degrees
    pts, theta = circle_points(200)
    eps = 0.15
    w, d = gl_affinity(pts, eps)
    mu, v = gl_spectrum(w, d, 5, pts, eps, 1)
    assert abs(mu[1] - mu[2]) < 1e-6
    assert abs(mu[1] - 1.0) < 0.05
    assert mu[3] > 3.0
    analytic = np.stack([np.cos(theta), np.sin(theta)], axis=1)
    angles = subspace_angles(v[:, 1:3], analytic)
    assert np.degrees(angles).max() < 5.0


def test_kernel_rank_one_for_single_eigenpair():
    pts, _ = circle_points(30)
    h = gl_kernel(pts, GlConfig(0.3, 1, 1.0, 1))
    lam = np.linalg.eigvalsh(h)
    assert lam[-1] > 0
    assert np.all(np.abs(lam[:-1]) < 1e-10 * lam[-1])


def test_kernel_time_zero_limit_is_projector_sum():
    pts, _ = circle_points(30)
    eps = 0.3
    h = gl_kernel(pts, GlConfig(eps, 4, 1e-14, 1))
    w, d = gl_affinity(pts, eps)
    _, v = gl_spectrum(w, d, 4, pts, eps, 1)
    np.testing.assert_allclose(h, v @ v.T, rtol=1e-10, atol=1e-12)


def test_kernel_symmetric_psd():
    rng = np.random.default_rng(1)
    pts = rng.normal(size=(35, 3))
    h = gl_kernel(pts, GlConfig(default_epsilon(pts), 6, 0.5, 2))
    assert np.array_equal(h, h.T)
    assert np.linalg.eigvalsh(h).min() >= -1e-8


def test_kernel_diagonal_grows_with_k():
    pts, _ = circle_points(40)
    prev = None
    for k in (1, 3, 5, 8):
        h = gl_kernel(pts, GlConfig(0.3, k, 0.7, 1))
        diag = np.diag(h).copy()
        if prev is not None:
            assert np.all(diag >= prev - 1e-15)
        prev = diag
