"""Graph-Laplacian GP kernel over a point cloud.

The heat kernel of an unknown manifold is approximated by a truncated
spectral sum of a kernel-normalized graph Laplacian:

    H = sum_{i<K} exp(-mu_i t) v_i v_i^T

with mu_i = (1 - alpha_i) / epsilon^2 from the top eigenvalues alpha_i of
A~ = D^{-1/2} W D^{-1/2}, and eigenvectors mapped back through D^{-1/2}
then rescaled by an ambient ball-count l2 rule.  This is the graph-based
comparison baseline; it needs no latent model and no path simulation.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np


@dataclass(frozen=True)
class GlConfig:
    """Bandwidth epsilon, retained eigenpairs K, diffusion time t, and the
    assumed intrinsic dimension d used by the eigenvector normalization."""

    epsilon: float
    K: int
    t: float
    d: int

    def __post_init__(self):
        if not self.epsilon > 0:
            raise ValueError("epsilon must be positive")
        if int(self.K) != self.K or self.K < 1:
            raise ValueError("K must be a positive integer")
        if not self.t > 0:
            raise ValueError("t must be positive")
        if int(self.d) != self.d or self.d < 1:
            raise ValueError("d must be a positive integer")


def _pairwise_sq(points: np.ndarray) -> np.ndarray:
    s = np.sum(points**2, axis=1)
    d2 = s[:, None] + s[None, :] - 2.0 * points @ points.T
    return np.clip(d2, 0.0, None)


def default_epsilon(points: np.ndarray) -> float:
    """Median pairwise ambient distance divided by 3."""
    points = np.atleast_2d(np.asarray(points, dtype=float))
    d2 = _pairwise_sq(points)
    iu = np.triu_indices(points.shape[0], k=1)
    return float(np.median(np.sqrt(d2[iu]))) / 3.0


def gl_affinity(points: np.ndarray, epsilon: float):
    """Density-normalized affinity W and its row sums D.

    k(x, x') = exp(-|x - x'|^2 / (4 epsilon^2)); with q(x) = sum_i k(x, x_i)
    over all points, W_ij = k(x_i, x_j) / (q(x_i) q(x_j)) and D_ii = sum_j W_ij.
    """
    points = np.atleast_2d(np.asarray(points, dtype=float))
    if points.shape[0] < 2:
        raise ValueError("need at least two points")
    if not epsilon > 0:
        raise ValueError("epsilon must be positive")
    k = np.exp(-_pairwise_sq(points) / (4.0 * epsilon**2))
    q = k.sum(axis=1)
    w = k / np.outer(q, q)
    return w, w.sum(axis=1)


def gl_spectrum(w: np.ndarray, d_vec: np.ndarray, K: int, points: np.ndarray,
                epsilon: float, d: int):
    """Top-K eigenpairs of A~ = D^{-1/2} W D^{-1/2}, returned as rates and
    normalized eigenvectors.

    mu_i = (1 - alpha_i) / epsilon^2 for eigenvalues alpha_i in descending
    order; eigenvectors are D^{-1/2} U_i, rescaled so that the l2 norm
    sqrt(|S^{d-1}| epsilon^d / d * sum_i v(i)^2 / N(i)) is one, where N(i)
    counts points inside the ambient epsilon ball at point i.
    """
    w = np.asarray(w, dtype=float)
    d_vec = np.asarray(d_vec, dtype=float)
    n = w.shape[0]
    if K > n:
        raise ValueError("K cannot exceed the number of points")
    points = np.atleast_2d(np.asarray(points, dtype=float))
    d_isqrt = 1.0 / np.sqrt(d_vec)
    a_tilde = (d_isqrt[:, None] * w) * d_isqrt[None, :]
    alpha, u = np.linalg.eigh(0.5 * (a_tilde + a_tilde.T))
    order = np.argsort(alpha)[::-1][:K]
    alpha = alpha[order]
    vecs = d_isqrt[:, None] * u[:, order]

    counts = np.count_nonzero(_pairwise_sq(points) <= epsilon**2, axis=1)
    sphere_area = 2.0 * math.pi ** (d / 2.0) / math.gamma(d / 2.0)
    factor = sphere_area * epsilon**d / d
    norms = np.sqrt(factor * np.sum(vecs**2 / counts[:, None], axis=0))
    vecs = vecs / norms[None, :]

    mu = (1.0 - alpha) / epsilon**2
    return mu, vecs


def gl_kernel(points: np.ndarray, cfg: GlConfig) -> np.ndarray:
    """Truncated heat-kernel approximation H = sum_i e^{-mu_i t} v_i v_i^T."""
    points = np.atleast_2d(np.asarray(points, dtype=float))
    w, d_vec = gl_affinity(points, cfg.epsilon)
    mu, vecs = gl_spectrum(w, d_vec, cfg.K, points, cfg.epsilon, cfg.d)
    n = points.shape[0]
    h = np.zeros((n, n))
    # outer products keep H exactly symmetric entry for entry
    for i in range(cfg.K):
        h += math.exp(-mu[i] * cfg.t) * np.outer(vecs[:, i], vecs[:, i])
    return h
