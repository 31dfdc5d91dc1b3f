"""Latent-variable manifold models.

Two trainers share one ARD RBF kernel: a MAP GPLVM over point estimates of
the latent coordinates, and a variational Bayesian GPLVM with inducing points
whose evidence lower bound is built from the closed-form kernel expectations
in kernels.psi_statistics.  A trained model exposes the posterior Jacobian at
any latent point, the expected Riemannian metric with its spatial gradient
and magnification factor, the mapping variance, and the variance-threshold
boundary used to confine Brownian motion to the data manifold.

All objectives come with hand-derived gradients (finite-difference checked in
the test-suite) and are maximized with L-BFGS-B in log-parameter space.
"""
from __future__ import annotations

import hashlib
import json
import math
import weakref
from dataclasses import dataclass, field
from typing import Optional, Tuple

import numpy as np
from scipy.linalg import cho_solve
from scipy.optimize import minimize

from .bm import MetricSource
from .kernels import (
    RbfParams,
    VariationalGaussian,
    kernel_matrix,
    kernel_vjp,
    psi_statistics,
    psi_vjp,
)
from .linalg import chol_with_jitter, sym

JITTER0 = 1e-8  # relative jitter folded into every Gram matrix the objectives see
LOG2PI = math.log(2.0 * math.pi)


@dataclass(frozen=True)
class InitSpec:
    """Initialization controls: latents from PCA (default) or given directly;
    seed drives the inducing-subset draw; init_variance seeds q(X) spread."""

    method: str = "pca"
    latents: Optional[np.ndarray] = None
    seed: int = 0
    init_variance: float = 0.1


@dataclass(frozen=True)
class OptimizerSpec:
    maxiter: int = 2000
    tol: float = 1e-5
    seed: int = 0


@dataclass(frozen=True, eq=False)
class LatentModel:
    """A trained latent chart of the point cloud `data` (N x p).

    kind is "gplvm" (latent variances all zero) or "bgplvm" (variational
    posterior plus inducing inputs Xu with q(u) moments qu_mean/qu_cov).
    kernel holds the mapping kernel; beta is the observation noise variance.
    """

    kind: str
    latent: VariationalGaussian
    Xu: Optional[np.ndarray]
    qu_mean: Optional[np.ndarray]
    qu_cov: Optional[np.ndarray]
    kernel: RbfParams
    beta: float
    data: np.ndarray
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.kind not in ("gplvm", "bgplvm"):
            raise ValueError(f"unknown model kind {self.kind!r}")
        n, q = self.latent.means.shape
        if self.data.shape[0] != n:
            raise ValueError("latent count does not match the point cloud")
        p = self.data.shape[1]
        if not q < p:
            raise ValueError("latent dimension must be smaller than ambient dimension")
        if not self.beta > 0:
            raise ValueError("noise variance must be positive")
        if self.kind == "bgplvm":
            m = self.Xu.shape[0]
            if self.Xu.shape != (m, q) or self.qu_mean.shape != (m, p):
                raise ValueError("inducing shapes are inconsistent")
            if self.qu_cov.shape != (m, m):
                raise ValueError("inducing posterior covariance must be m x m")
            if not np.allclose(self.qu_cov, self.qu_cov.T, atol=1e-8):
                raise ValueError("inducing posterior covariance must be symmetric")

    @property
    def n(self) -> int:
        return self.data.shape[0]

    @property
    def p(self) -> int:
        return self.data.shape[1]

    @property
    def q(self) -> int:
        return self.latent.means.shape[1]


@dataclass(frozen=True)
class JacobianPosterior:
    """Gaussian posterior of the chart-to-ambient Jacobian at one point:
    mean is E[J^T] (q x p, column j for output j), cov the shared q x q
    covariance of each column."""

    mean: np.ndarray
    cov: np.ndarray


@dataclass(frozen=True)
class MetricEval:
    """Expected metric G, its gradient dG[l] = dG/dx^l, the magnification
    factor sqrt(det G), and the mapping variance at the evaluation point."""

    G: np.ndarray
    dG: np.ndarray
    mf: float
    var_map: float


@dataclass(frozen=True)
class BoundarySpec:
    """Variance threshold alpha calibrated from perturbation radius delta."""

    alpha: float
    delta: float


# ---------------------------------------------------------------------------
# initialization


def _check_data(s: np.ndarray) -> np.ndarray:
    s = np.asarray(s, dtype=float)
    if s.ndim != 2 or s.shape[0] < 2:
        raise ValueError("point cloud must be a 2-d array with at least two rows")
    if not np.all(np.isfinite(s)):
        raise ValueError("point cloud contains non-finite values")
    return s


def pca_latents(s: np.ndarray, q: int) -> np.ndarray:
    """Classical PCA scores of the centered cloud, rescaled to unit variance
    per latent column."""
    y = s - s.mean(axis=0)
    u, sv, _ = np.linalg.svd(y, full_matrices=False)
    x = u[:, :q] * sv[:q]
    std = x.std(axis=0)
    std[std == 0] = 1.0
    return x / std


def _init_latents(s: np.ndarray, q: int, init: InitSpec) -> np.ndarray:
    if init.method == "given":
        x0 = np.asarray(init.latents, dtype=float)
        if x0.shape != (s.shape[0], q):
            raise ValueError("given latents have the wrong shape")
        return x0.copy()
    if init.method != "pca":
        raise ValueError(f"unknown init method {init.method!r}")
    return pca_latents(s, q)


def _init_hyper(s: np.ndarray, x0: np.ndarray) -> Tuple[RbfParams, float]:
    vs = float(np.var(s - s.mean(axis=0)))
    vs = max(vs, 1e-12)
    q = x0.shape[1]
    rho = np.empty(q)
    for d in range(q):
        d2 = (x0[:, d, None] - x0[None, :, d]) ** 2
        med = float(np.median(d2[d2 > 0])) if np.any(d2 > 0) else 1.0
        rho[d] = 1.0 / max(med, 1e-6)
    # start at high signal-to-noise: a generous noise floor lets the optimizer
    # park most of the variance in beta and settle for a slack near-linear map
    return RbfParams(gamma=vs, rho=rho), 0.01 * vs


# ---------------------------------------------------------------------------
# MAP GPLVM


def _gram(params: RbfParams, x: np.ndarray) -> np.ndarray:
    k = kernel_matrix(params, x, x)
    return k + (JITTER0 * params.gamma) * np.eye(x.shape[0])


def gplvm_log_objective(y: np.ndarray, x: np.ndarray, params: RbfParams, beta: float):
    """MAP objective of the GPLVM: log N(y_:j | 0, K + beta I) summed over
    output columns, plus a standard-normal log prior on the latents.

    Returns (value, dX, dlog_gamma, dlog_rho, dlog_beta); y must be centered.
    """
    n, p = y.shape
    k_plain = kernel_matrix(params, x, x)
    c = k_plain + (JITTER0 * params.gamma + beta) * np.eye(n)
    try:
        low = np.linalg.cholesky(c)
    except np.linalg.LinAlgError:
        return -np.inf, None, None, None, None
    alpha = cho_solve((low, True), y)
    logdet = 2.0 * np.sum(np.log(np.diag(low)))
    quad = float(np.sum(alpha * y))
    value = (
        -0.5 * p * logdet
        - 0.5 * quad
        - 0.5 * n * p * LOG2PI
        - 0.5 * float(np.sum(x * x))
        - 0.5 * n * x.shape[1] * LOG2PI
    )
    c_inv = cho_solve((low, True), np.eye(n))
    w = 0.5 * (alpha @ alpha.T - p * c_inv)
    da, db, dlg, dlr = kernel_vjp(params, x, x, w)
    dx = da + db - x
    dlg = dlg + JITTER0 * params.gamma * np.trace(w)
    dlb = beta * float(np.trace(w))
    return value, dx, dlg, dlr, dlb


def _run_lbfgs(fun, theta0, opt: OptimizerSpec, bounds=None):
    trace = []
    neg_cache = [np.inf]

    def cb(_):
        trace.append(-neg_cache[0])

    def wrapped(theta):
        v, g = fun(theta)
        neg_cache[0] = -v
        return -v, -g

    res = minimize(
        wrapped,
        theta0,
        jac=True,
        method="L-BFGS-B",
        callback=cb,
        bounds=bounds,
        options={"maxiter": opt.maxiter, "gtol": opt.tol, "ftol": 1e-12},
    )
    value, grad = fun(res.x)
    converged = bool(np.max(np.abs(grad)) < opt.tol) or bool(res.success)
    return res.x, value, grad, trace, converged


def _hyper_bounds(vs: float, q: int):
    """Bounds for (log gamma, log rho x q, log beta) keeping the optimizer in
    a numerically safe range; vs is the data variance scale."""
    return (
        [(np.log(1e-8 * vs), np.log(1e4 * vs))]
        + [(np.log(1e-6), np.log(1e6))] * q
        + [(np.log(1e-10 * vs), np.log(1e6 * vs))]
    )


def train_gplvm(
    s: np.ndarray, q: int, init: InitSpec = InitSpec(), opt: OptimizerSpec = OptimizerSpec()
) -> LatentModel:
    """Fit the MAP GPLVM: jointly maximize the log likelihood plus latent
    prior over latents and hyperparameters."""
    s = _check_data(s)
    n, p = s.shape
    if not 1 <= q < p:
        raise ValueError("need 1 <= q < p")
    mean = s.mean(axis=0)
    y = s - mean
    x0 = _init_latents(s, q, init)
    params0, beta0 = _init_hyper(s, x0)

    def unpack(theta):
        x = theta[: n * q].reshape(n, q)
        lg = theta[n * q]
        lr = theta[n * q + 1 : n * q + 1 + q]
        lb = theta[n * q + 1 + q]
        return x, RbfParams(np.exp(lg), np.exp(lr)), np.exp(lb)

    def fun(theta):
        x, params, beta = unpack(theta)
        v, dx, dlg, dlr, dlb = gplvm_log_objective(y, x, params, beta)
        if not np.isfinite(v):
            return -np.inf, np.zeros_like(theta)
        return v, np.concatenate([dx.ravel(), [dlg], dlr, [dlb]])

    theta0 = np.concatenate(
        [x0.ravel(), [np.log(params0.gamma)], np.log(params0.rho), [np.log(beta0)]]
    )
    vs = max(float(np.var(y)), 1e-12)
    bounds = [(None, None)] * (n * q) + _hyper_bounds(vs, q)
    theta, value, grad, trace, converged = _run_lbfgs(fun, theta0, opt, bounds)
    x, params, beta = unpack(theta)
    meta = {
        "objective": value,
        "trace": trace,
        "converged": converged,
        "grad_norm": float(np.max(np.abs(grad))),
        "data_mean": mean,
    }
    return LatentModel(
        "gplvm", VariationalGaussian.delta(x), None, None, None, params, beta, s, meta
    )


# ---------------------------------------------------------------------------
# Bayesian GPLVM


def bound_parts(y: np.ndarray, q_x: VariationalGaussian, xu: np.ndarray,
                params: RbfParams, beta: float):
    """Evidence-lower-bound pieces for centered outputs y: returns
    (fhat, kl) where the training objective is fhat - kl."""
    vals = _bound_with_grads(y, q_x, xu, params, beta, want_grads=False)
    return vals[0], vals[1]


def _bound_with_grads(y, q_x, xu, params, beta, want_grads=True):
    n, p = y.shape
    m = xu.shape[0]
    b = 1.0 / beta
    k_plain = kernel_matrix(params, xu, xu)
    k_mm = k_plain + (JITTER0 * params.gamma) * np.eye(m)
    psi0, psi1, psi2 = psi_statistics(params, q_x, xu)
    a = k_mm + b * psi2
    try:
        low_k = np.linalg.cholesky(k_mm)
        low_a = np.linalg.cholesky(a)
    except np.linalg.LinAlgError:
        return (-np.inf, 0.0) + ((None,) * 6 if want_grads else ())
    logdet_k = 2.0 * np.sum(np.log(np.diag(low_k)))
    logdet_a = 2.0 * np.sum(np.log(np.diag(low_a)))
    kinv_psi2 = cho_solve((low_k, True), psi2)
    p1y = psi1.T @ y
    c = cho_solve((low_a, True), p1y)
    g_quad = float(np.sum(p1y * c))
    ss_y = float(np.sum(y * y))
    fhat = (
        p * (0.5 * n * (np.log(b) - LOG2PI) + 0.5 * logdet_k - 0.5 * logdet_a
             - 0.5 * b * psi0 + 0.5 * b * np.trace(kinv_psi2))
        - 0.5 * b * ss_y
        + 0.5 * b * b * g_quad
    )
    s2 = q_x.variances
    mu = q_x.means
    kl = 0.5 * float(np.sum(s2 + mu * mu - 1.0 - np.log(s2))) if np.all(s2 > 0) else np.inf
    if not want_grads:
        return fhat, kl
    a_inv = cho_solve((low_a, True), np.eye(m))
    k_inv = cho_solve((low_k, True), np.eye(m))
    w_a = -0.5 * p * a_inv - 0.5 * b * b * (c @ c.T)
    d_kmm = 0.5 * p * k_inv + w_a - 0.5 * p * b * (k_inv @ psi2 @ k_inv)
    d_psi2 = b * w_a + 0.5 * p * b * k_inv
    d_psi1 = b * b * (y @ c.T)
    d_psi0 = -0.5 * p * b
    d_kmm = sym(d_kmm)
    d_psi2 = sym(d_psi2)
    dfdb = (
        0.5 * p * n / b
        - 0.5 * p * psi0
        + 0.5 * p * np.trace(kinv_psi2)
        - 0.5 * ss_y
        + b * g_quad
        + float(np.sum(w_a * psi2))
    )
    da, db_, dlg_k, dlr_k = kernel_vjp(params, xu, xu, d_kmm)
    dxu = da + db_
    dlg_k += JITTER0 * params.gamma * np.trace(d_kmm)
    vjp = psi_vjp(params, q_x, xu, d_psi1, d_psi2)
    dmu = vjp["dmu"]
    ds2 = vjp["ds2"]
    dxu = dxu + vjp["dxu"]
    dlg = dlg_k + vjp["dlog_gamma"] + d_psi0 * psi0  # psi0 = n gamma scales with gamma
    dlr = dlr_k + vjp["dlog_rho"]
    dlog_beta = -b * dfdb
    return fhat, kl, dmu, ds2, dxu, dlg, dlr, dlog_beta


def refresh_qu(y: np.ndarray, q_x: VariationalGaussian, xu: np.ndarray,
               params: RbfParams, beta: float):
    """Closed-form optimum of q(u) at the current variational parameters:
    mean K (beta K + psi2)^-1 psi1^T y, cov beta K (beta K + psi2)^-1 K."""
    m = xu.shape[0]
    k_mm = kernel_matrix(params, xu, xu) + (JITTER0 * params.gamma) * np.eye(m)
    _, psi1, psi2 = psi_statistics(params, q_x, xu)
    a_b = beta * k_mm + psi2
    low, _ = chol_with_jitter(a_b)
    qu_mean = k_mm @ cho_solve((low, True), psi1.T @ y)
    qu_cov = beta * (k_mm @ cho_solve((low, True), k_mm))
    return qu_mean, sym(qu_cov)


def train_bgplvm(
    s: np.ndarray, q: int, m: int, init: InitSpec = InitSpec(),
    opt: OptimizerSpec = OptimizerSpec()
) -> LatentModel:
    """Fit the Bayesian GPLVM: maximize the evidence lower bound fhat - KL
    jointly over variational means/variances, inducing inputs, and
    hyperparameters; q(u) is refreshed in closed form afterwards."""
    s = _check_data(s)
    n, p = s.shape
    if not 1 <= q < p:
        raise ValueError("need 1 <= q < p")
    if not 1 <= m <= n:
        raise ValueError("inducing count must satisfy 1 <= m <= N")
    mean = s.mean(axis=0)
    y = s - mean
    x0 = _init_latents(s, q, init)
    params0, beta0 = _init_hyper(s, x0)
    rng = np.random.default_rng(init.seed)
    subset = rng.choice(n, size=m, replace=False)
    xu0 = x0[subset].copy()
    ls20 = np.full((n, q), np.log(init.init_variance))

    sizes = [n * q, n * q, m * q, 1, q, 1]
    offsets = np.cumsum([0] + sizes)

    def unpack(theta):
        mu = theta[offsets[0] : offsets[1]].reshape(n, q)
        ls2 = theta[offsets[1] : offsets[2]].reshape(n, q)
        xu = theta[offsets[2] : offsets[3]].reshape(m, q)
        lg = theta[offsets[3]]
        lr = theta[offsets[4] : offsets[5]]
        lb = theta[offsets[5]]
        return mu, ls2, xu, RbfParams(np.exp(lg), np.exp(lr)), np.exp(lb)

    def fun(theta):
        mu, ls2, xu, params, beta = unpack(theta)
        s2 = np.exp(ls2)
        out = _bound_with_grads(y, VariationalGaussian(mu, s2), xu, params, beta)
        fhat, kl = out[0], out[1]
        if not np.isfinite(fhat):
            return -np.inf, np.zeros_like(theta)
        _, _, dmu, ds2, dxu, dlg, dlr, dlb = out
        g_mu = dmu - mu
        g_ls2 = s2 * ds2 - 0.5 * (s2 - 1.0)
        grad = np.concatenate([g_mu.ravel(), g_ls2.ravel(), dxu.ravel(), [dlg], dlr, [dlb]])
        return fhat - kl, grad

    theta0 = np.concatenate(
        [x0.ravel(), ls20.ravel(), xu0.ravel(),
         [np.log(params0.gamma)], np.log(params0.rho), [np.log(beta0)]]
    )
    vs = max(float(np.var(y)), 1e-12)
    bounds = (
        [(None, None)] * (n * q)
        + [(np.log(1e-9), np.log(1e3))] * (n * q)
        + [(None, None)] * (m * q)
        + _hyper_bounds(vs, q)
    )
    theta, value, grad, trace, converged = _run_lbfgs(fun, theta0, opt, bounds)
    mu, ls2, xu, params, beta = unpack(theta)
    q_x = VariationalGaussian(mu, np.exp(ls2))
    qu_mean, qu_cov = refresh_qu(y, q_x, xu, params, beta)
    meta = {
        "objective": value,
        "trace": trace,
        "converged": converged,
        "grad_norm": float(np.max(np.abs(grad))),
        "data_mean": mean,
    }
    return LatentModel("bgplvm", q_x, xu, qu_mean, qu_cov, params, beta, s, meta)


# ---------------------------------------------------------------------------
# relevances


def ard_relevances(model: LatentModel):
    """Per-latent-dimension relevances (the ARD rates), sorted descending;
    returns (values, original_indices)."""
    rho = np.asarray(model.kernel.rho)
    if rho.size != model.q:
        raise ValueError("model kernel is isotropic; no per-dimension relevances")
    order = np.argsort(-rho, kind="stable")
    return rho[order], order


# ---------------------------------------------------------------------------
# evaluators (Jacobian, metric, variance)

_EVAL_CACHE: "weakref.WeakKeyDictionary[LatentModel, _Evaluator]" = weakref.WeakKeyDictionary()


class _Evaluator:
    """Cached factorizations for the read-only posterior evaluators.

    For the MAP model the reference set is the training latents with
    weight matrix K^-1; for the variational model it is the inducing inputs
    with weight Lambda = K^-1 - K^-1 Sigma_qu K^-1.  Both kinds then share
    every formula below.
    """

    def __init__(self, model: LatentModel):
        self.model = model
        params = model.kernel
        mean = model.meta.get("data_mean")
        if mean is None:
            mean = model.data.mean(axis=0)
        self.data_mean = np.asarray(mean, dtype=float)
        y = model.data - self.data_mean
        if model.kind == "gplvm":
            self.ref = model.latent.means
            k = _gram(params, self.ref)
            self.low, _ = chol_with_jitter(k)
            self.coef = cho_solve((self.low, True), y)  # ref-count x p
            self.weight = cho_solve((self.low, True), np.eye(self.ref.shape[0]))
        else:
            self.ref = model.Xu
            k = _gram(params, self.ref)
            self.low, _ = chol_with_jitter(k)
            k_inv = cho_solve((self.low, True), np.eye(self.ref.shape[0]))
            self.coef = cho_solve((self.low, True), model.qu_mean)
            self.weight = sym(k_inv - k_inv @ model.qu_cov @ k_inv)
        self.hess = np.diag(2.0 * params.rho * params.gamma)

    def _cross(self, x_star: np.ndarray):
        params = self.model.kernel
        diff = self.ref[None, :, :] - x_star[:, None, :]
        k = kernel_matrix(params, x_star, self.ref)
        dk = 2.0 * params.rho * diff * k[:, :, None]
        return k, diff, dk

    def jacobians(self, x_star: np.ndarray):
        """Batched Jacobian posterior: means (B, q, p) and covs (B, q, q)."""
        k, _, dk = self._cross(x_star)
        means = np.tensordot(dk, self.coef, axes=([1], [0]))
        # t[b, n, l] = sum_m weight[n, m] dk[b, m, l], via BLAS
        t = np.tensordot(dk, self.weight, axes=([1], [1])).transpose(0, 2, 1)
        covs = self.hess[None] - np.matmul(dk.transpose(0, 2, 1), t)
        return means, 0.5 * (covs + covs.transpose(0, 2, 1))

    def metric(self, x_star: np.ndarray):
        """Batched expected metric with gradient: (G, Ginv, dG, mf, var)."""
        params = self.model.kernel
        p = self.model.p
        q = self.model.q
        k, diff, dk = self._cross(x_star)
        rho = params.rho
        core = 4.0 * rho[None, None, :, None] * rho[None, None, None, :] * \
            diff[:, :, :, None] * diff[:, :, None, :]
        core[:, :, np.arange(q), np.arange(q)] -= 2.0 * rho
        ddk = core * k[:, :, None, None]  # (B, n_ref, l, r): d dk[:, l] / dx_star^r
        means = np.tensordot(dk, self.coef, axes=([1], [0]))
        t = np.tensordot(dk, self.weight, axes=([1], [1])).transpose(0, 2, 1)
        covs = self.hess[None] - np.matmul(dk.transpose(0, 2, 1), t)
        g = np.matmul(means, means.transpose(0, 2, 1)) + p * covs
        g = 0.5 * (g + g.transpose(0, 2, 1))
        d_means = np.tensordot(ddk, self.coef, axes=([1], [0])).transpose(0, 2, 1, 3)
        dc1 = np.matmul(ddk.transpose(0, 3, 2, 1), t[:, None])
        d_cov = -(dc1 + dc1.transpose(0, 1, 3, 2))
        u1 = np.matmul(d_means, means.transpose(0, 2, 1)[:, None])
        dg = u1 + u1.transpose(0, 1, 3, 2) + p * d_cov
        dg = 0.5 * (dg + dg.transpose(0, 1, 3, 2))
        # enforce the positive-definite floor before inverting
        w, v = np.linalg.eigh(g)
        lift = np.clip(1e-10 - w[:, 0], 0.0, None)
        g = g + lift[:, None, None] * np.eye(q)
        w = w + lift[:, None]
        g_inv = np.matmul(v / w[:, None, :], v.transpose(0, 2, 1))
        mf = np.sqrt(np.prod(w, axis=1))
        var = params.gamma - np.sum((k @ self.weight) * k, axis=1)
        return g, g_inv, dg, mf, np.maximum(var, 0.0)

    def var_map(self, x_star: np.ndarray) -> np.ndarray:
        k = kernel_matrix(self.model.kernel, x_star, self.ref)
        var = self.model.kernel.gamma - np.sum((k @ self.weight) * k, axis=1)
        return np.maximum(var, 0.0)

    def predict_mean(self, x_star: np.ndarray) -> np.ndarray:
        k = kernel_matrix(self.model.kernel, x_star, self.ref)
        return k @ self.coef + self.data_mean


def _evaluator(model: LatentModel) -> _Evaluator:
    ev = _EVAL_CACHE.get(model)
    if ev is None:
        ev = _Evaluator(model)
        _EVAL_CACHE[model] = ev
    return ev


def jacobian_posterior(model: LatentModel, x_star: np.ndarray) -> JacobianPosterior:
    """Posterior of the mapping Jacobian at a single latent point."""
    x = np.asarray(x_star, dtype=float).reshape(1, model.q)
    means, covs = _evaluator(model).jacobians(x)
    return JacobianPosterior(means[0], covs[0])


def metric_eval(model: LatentModel, x_star: np.ndarray) -> MetricEval:
    """Expected metric, gradient, magnification factor, and mapping variance
    at a single latent point."""
    x = np.asarray(x_star, dtype=float).reshape(1, model.q)
    g, _, dg, mf, var = _evaluator(model).metric(x)
    return MetricEval(g[0], dg[0], float(mf[0]), float(var[0]))


def mapping_variance(model: LatentModel, x_star: np.ndarray) -> float:
    x = np.asarray(x_star, dtype=float).reshape(1, model.q)
    return float(_evaluator(model).var_map(x)[0])


def predict_mapping(model: LatentModel, x_star: np.ndarray) -> np.ndarray:
    """Posterior mean of the chart-to-ambient mapping at latent points."""
    x = np.atleast_2d(np.asarray(x_star, dtype=float))
    return _evaluator(model).predict_mean(x)


# ---------------------------------------------------------------------------
# boundary


def calibrate_boundary(
    model: LatentModel, delta: Optional[float] = None, n_dirs: int = 10,
    rng: int = 0
) -> BoundarySpec:
    """Set the variance threshold alpha as the maximum mapping variance over
    every training latent shifted by delta along n_dirs random unit
    directions.  delta defaults to the maximum nearest-neighbor distance
    among the training latents."""
    x = model.latent.means
    n, q = x.shape
    if delta is None:
        d2 = np.sum((x[:, None, :] - x[None, :, :]) ** 2, axis=2)
        np.fill_diagonal(d2, np.inf)
        delta = float(np.sqrt(d2.min(axis=1).max()))
    if not delta > 0:
        raise ValueError("delta must be positive")
    gen = np.random.default_rng(rng)
    dirs = gen.standard_normal((n, n_dirs, q))
    dirs /= np.linalg.norm(dirs, axis=2, keepdims=True)
    shifted = (x[:, None, :] + delta * dirs).reshape(n * n_dirs, q)
    ev = _evaluator(model)
    alpha = float(ev.var_map(shifted).max())
    at_data = ev.var_map(x)
    if not alpha > float(at_data.max()):
        raise RuntimeError("calibration failed: threshold does not clear the training latents")
    return BoundarySpec(alpha=alpha, delta=delta)


def inside_boundary(model: LatentModel, spec: BoundarySpec, x: np.ndarray) -> bool:
    """True iff the mapping variance at x does not exceed the threshold."""
    return bool(mapping_variance(model, x) <= spec.alpha)


def metric_source(model: LatentModel, spec: BoundarySpec) -> MetricSource:
    """Adapt a trained model plus calibrated boundary for the BM simulator."""
    ev = _evaluator(model)

    def eval_batch(x):
        g, g_inv, dg, _, _ = ev.metric(np.atleast_2d(x))
        return g, g_inv, dg

    def inside_batch(x):
        return ev.var_map(np.atleast_2d(x)) <= spec.alpha

    return MetricSource(model.q, eval_batch, inside_batch)


# ---------------------------------------------------------------------------
# inverse mapping


def latent_lookup(model: LatentModel, targets: np.ndarray, n_steps: int = 50) -> np.ndarray:
    """Latent preimages of ambient targets under the posterior mean mapping,
    by damped Gauss-Newton started from the nearest training latent."""
    targets = np.atleast_2d(np.asarray(targets, dtype=float))
    ev = _evaluator(model)
    fitted = ev.predict_mean(model.latent.means)
    out = np.empty((targets.shape[0], model.q))
    for i, s in enumerate(targets):
        j0 = int(np.argmin(np.sum((fitted - s) ** 2, axis=1)))
        x = model.latent.means[j0].copy()
        lam = 1e-6
        err = float(np.sum((ev.predict_mean(x[None])[0] - s) ** 2))
        for _ in range(n_steps):
            jac = ev.jacobians(x[None])[0][0]  # q x p
            r = ev.predict_mean(x[None])[0] - s
            g = jac @ r
            h = jac @ jac.T + lam * np.eye(model.q)
            step = np.linalg.solve(h, g)
            new_x = x - step
            new_err = float(np.sum((ev.predict_mean(new_x[None])[0] - s) ** 2))
            if new_err < err:
                x, err = new_x, new_err
                lam = max(lam * 0.3, 1e-9)
            else:
                lam *= 10.0
                if lam > 1e6:
                    break
        out[i] = x
    return out


# ---------------------------------------------------------------------------
# serialization


def data_hash(s: np.ndarray) -> str:
    s = np.ascontiguousarray(np.asarray(s, dtype=float))
    h = hashlib.sha256()
    h.update(str(s.shape).encode())
    h.update(s.tobytes())
    return h.hexdigest()


def save_model(model: LatentModel, path: str) -> None:
    """Write the model as a single JSON file; the training data itself is not
    stored, only its hash, and must be supplied again at load time."""
    doc = {
        "kind": model.kind,
        "latent_means": model.latent.means.tolist(),
        "latent_variances": model.latent.variances.tolist(),
        "kernel_gamma": model.kernel.gamma,
        "kernel_rho": np.asarray(model.kernel.rho).tolist(),
        "beta": model.beta,
        "data_hash": data_hash(model.data),
        "data_shape": list(model.data.shape),
        "data_mean": np.asarray(
            model.meta.get("data_mean", model.data.mean(axis=0))
        ).tolist(),
    }
    if model.kind == "bgplvm":
        doc["Xu"] = model.Xu.tolist()
        doc["qu_mean"] = model.qu_mean.tolist()
        doc["qu_cov"] = model.qu_cov.tolist()
    with open(path, "w") as fh:
        json.dump(doc, fh)


def load_model(path: str, s: np.ndarray) -> LatentModel:
    """Load a model saved by save_model, validating the data hash and shapes."""
    with open(path) as fh:
        doc = json.load(fh)
    s = np.asarray(s, dtype=float)
    if list(s.shape) != doc["data_shape"]:
        raise ValueError("training data shape does not match the saved model")
    if data_hash(s) != doc["data_hash"]:
        raise ValueError("training data hash does not match the saved model")
    latent = VariationalGaussian(
        np.asarray(doc["latent_means"]), np.asarray(doc["latent_variances"])
    )
    params = RbfParams(doc["kernel_gamma"], np.asarray(doc["kernel_rho"]))
    meta = {"data_mean": np.asarray(doc["data_mean"])}
    if doc["kind"] == "bgplvm":
        return LatentModel(
            "bgplvm", latent, np.asarray(doc["Xu"]), np.asarray(doc["qu_mean"]),
            np.asarray(doc["qu_cov"]), params, doc["beta"], s, meta
        )
    return LatentModel("gplvm", latent, None, None, None, params, doc["beta"], s, meta)
