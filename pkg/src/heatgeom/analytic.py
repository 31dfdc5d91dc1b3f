"""Closed-form manifolds used as ground-truth oracles.

Euclidean space (identity metric, Gaussian heat kernel), the Swiss roll
(chart (r, z) -> (r cos r, r sin r, z) with metric diag(1 + r^2, 1)), and the
diagonal chart rescaling used to exercise coordinate independence.

Metric-gradient arrays follow the convention dG[l, i, j] = d g_ij / d x^l
(first axis is the derivative direction); batched variants prepend a batch axis.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, Optional, Tuple

import numpy as np


@dataclass(frozen=True)
class AnalyticManifold:
    """A chart with closed-form embedding, metric, and metric gradient.

    embed maps (B, q) chart points to (B, p) ambient points; metric returns
    (B, q, q); metric_grad returns (B, q, q, q).  domain, when present, is a
    (lo, hi) box in chart coordinates bounding the manifold.
    """

    kind: str
    q: int
    p: int
    embed: Callable[[np.ndarray], np.ndarray]
    metric: Callable[[np.ndarray], np.ndarray]
    metric_grad: Callable[[np.ndarray], np.ndarray]
    domain: Optional[Tuple[np.ndarray, np.ndarray]] = None

    def inside(self, x: np.ndarray) -> np.ndarray:
        x = np.atleast_2d(np.asarray(x, dtype=float))
        if self.domain is None:
            return np.ones(x.shape[0], dtype=bool)
        lo, hi = self.domain
        return np.all((x >= lo) & (x <= hi), axis=1)


def euclidean(q: int, domain: Optional[Tuple] = None) -> AnalyticManifold:
    """Flat R^q: identity embedding and metric, zero metric gradient."""

    def embed(x):
        return np.atleast_2d(np.asarray(x, dtype=float)).copy()

    def metric(x):
        b = np.atleast_2d(np.asarray(x, dtype=float)).shape[0]
        return np.broadcast_to(np.eye(q), (b, q, q)).copy()

    def metric_grad(x):
        b = np.atleast_2d(np.asarray(x, dtype=float)).shape[0]
        return np.zeros((b, q, q, q))

    dom = None
    if domain is not None:
        dom = (np.asarray(domain[0], dtype=float), np.asarray(domain[1], dtype=float))
    return AnalyticManifold("euclidean", q, q, embed, metric, metric_grad, dom)


SWISS_ROLL_DOMAIN = (np.array([2.0, 0.0]), np.array([12.5, 8.0]))


def swiss_roll_embed(r: float, z: float) -> np.ndarray:
    """Map chart point (r, z) to (r cos r, r sin r, z) in R^3."""
    if not r > 0:
        raise ValueError("radius must be positive")
    return np.array([r * math.cos(r), r * math.sin(r), float(z)])


def swiss_roll_arclength(r):
    """Arc length along the roll direction from radius 0 to r.

    Integral of sqrt(1 + t^2): u(r) = (r sqrt(1+r^2) + asinh r)/2.
    """
    r = np.asarray(r, dtype=float)
    return 0.5 * (r * np.sqrt(1.0 + r * r) + np.arcsinh(r))


def swiss_roll_metric(r: float):
    """Return (g, g_inv, dg_dr) of the Swiss roll chart at radius r.

    g = diag(1 + r^2, 1), so det g = 1 + r^2 and dg/dr = diag(2r, 0).
    """
    if not r > 0:
        raise ValueError("radius must be positive")
    g = np.diag([1.0 + r * r, 1.0])
    g_inv = np.diag([1.0 / (1.0 + r * r), 1.0])
    dg_dr = np.diag([2.0 * r, 0.0])
    return g, g_inv, dg_dr


def swiss_roll(domain: Optional[Tuple] = SWISS_ROLL_DOMAIN) -> AnalyticManifold:
    def embed(x):
        x = np.atleast_2d(np.asarray(x, dtype=float))
        r, z = x[:, 0], x[:, 1]
        return np.stack([r * np.cos(r), r * np.sin(r), z], axis=1)

    def metric(x):
        x = np.atleast_2d(np.asarray(x, dtype=float))
        b = x.shape[0]
        g = np.zeros((b, 2, 2))
        g[:, 0, 0] = 1.0 + x[:, 0] ** 2
        g[:, 1, 1] = 1.0
        return g

    def metric_grad(x):
        x = np.atleast_2d(np.asarray(x, dtype=float))
        b = x.shape[0]
        dg = np.zeros((b, 2, 2, 2))
        dg[:, 0, 0, 0] = 2.0 * x[:, 0]
        return dg

    dom = None
    if domain is not None:
        dom = (np.asarray(domain[0], dtype=float), np.asarray(domain[1], dtype=float))
    return AnalyticManifold("swiss_roll", 2, 3, embed, metric, metric_grad, dom)


def euclidean_heat_kernel(q: int, s0, s, t: float) -> float:
    """Heat kernel of R^q for the generator (1/2) Laplacian:

        K(s0, s, t) = (2 pi t)^(-q/2) exp(-||s0 - s||^2 / (2 t))
    """
    if not t > 0:
        raise ValueError("diffusion time must be positive")
    s0 = np.asarray(s0, dtype=float)
    s = np.asarray(s, dtype=float)
    d2 = float(np.sum((s0 - s) ** 2))
    return (2.0 * math.pi * t) ** (-q / 2.0) * math.exp(-d2 / (2.0 * t))


def rescaled_chart(manifold: AnalyticManifold, scale) -> AnalyticManifold:
    """Reparameterize by x_bar = diag(c) x, pulling the metric back so that all
    intrinsic quantities are preserved: g_bar = diag(c)^-1 g diag(c)^-1.
    """
    c = np.asarray(scale, dtype=float).reshape(manifold.q)
    if np.any(c == 0):
        raise ValueError("scale factors must be nonzero")

    def embed(xb):
        xb = np.atleast_2d(np.asarray(xb, dtype=float))
        return manifold.embed(xb / c)

    def metric(xb):
        xb = np.atleast_2d(np.asarray(xb, dtype=float))
        g = manifold.metric(xb / c)
        return g / (c[None, :, None] * c[None, None, :])

    def metric_grad(xb):
        xb = np.atleast_2d(np.asarray(xb, dtype=float))
        dg = manifold.metric_grad(xb / c)
        return dg / (c[None, :, None, None] * c[None, None, :, None] * c[None, None, None, :])

    dom = None
    if manifold.domain is not None:
        lo, hi = manifold.domain
        lo2, hi2 = np.minimum(c * lo, c * hi), np.maximum(c * lo, c * hi)
        dom = (lo2, hi2)
    return AnalyticManifold(
        manifold.kind + "_rescaled", manifold.q, manifold.p, embed, metric, metric_grad, dom
    )
