"""Gaussian-process regression on heat-kernel and Euclidean covariances.

Exact inference throughout: the log marginal likelihood

    log p(y) = -1/2 y^T C^-1 y - 1/2 log|C| - n/2 log 2pi,  C = Sigma + sigma_noise^2 I

is evaluated with a Cholesky factor, never an explicit inverse.  For the
heat-kernel stack, hyperparameter selection is a grid search over the time
slices with a continuous quasi-Newton fit of (sigma_h^2, sigma_noise^2) per
slice (ties broken toward smaller t); the Euclidean baseline optimizes the
ARD RBF hyperparameters with analytic gradients.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Optional, Sequence, Tuple, Union

import numpy as np
from scipy.linalg import cho_solve, solve_triangular
from scipy.optimize import minimize

from .kernels import RbfParams, kernel_matrix, kernel_vjp
from .linalg import chol_with_jitter
from .heat import HeatKernelStack

LOG2PI = math.log(2.0 * math.pi)
JITTER_LADDER = tuple(1e-8 * 10.0**j for j in range(7))  # 1e-8 .. 1e-2

# module-wide counter of negative predictive variances clamped to zero
_VAR_CLAMPS = [0]


def variance_clamp_count() -> int:
    return _VAR_CLAMPS[0]


def reset_variance_clamp_count() -> None:
    _VAR_CLAMPS[0] = 0


@dataclass(frozen=True)
class HeatStackKernel:
    """Selected heat-kernel covariance: time slice (1-based index into the
    stack grid) scaled by signal variance sigma_h2."""

    t_index: int
    t: float
    sigma_h2: float


@dataclass(frozen=True)
class EuclideanRbf:
    """RBF kernel over an explicit input space tag such as "R3" or "R2"."""

    params: RbfParams
    space: str


@dataclass(frozen=True, eq=False)
class GpFit:
    """Immutable fitted regressor: the kernel source, noise variance, and the
    cached Cholesky factor and weight vector of the training system."""

    kernel_source: Union[HeatStackKernel, EuclideanRbf]
    sigma_noise2: float
    alpha_vec: np.ndarray
    chol: np.ndarray
    train_refs: np.ndarray
    y_train: np.ndarray
    log_evidence: float
    meta: dict = field(default_factory=dict)


def _as_vector(y) -> np.ndarray:
    y = np.asarray(y, dtype=float)
    if y.ndim != 1:
        raise ValueError("responses must be a 1-d vector")
    return y


def log_marginal(cov: np.ndarray, y, sigma_noise2: float) -> float:
    """Gaussian log marginal likelihood of y under N(0, cov + sigma_noise2 I)."""
    y = _as_vector(y)
    n = y.size
    cov = np.asarray(cov, dtype=float)
    if cov.shape != (n, n):
        raise ValueError("covariance shape does not match the responses")
    if sigma_noise2 < 0:
        raise ValueError("noise variance must be nonnegative")
    c = cov + sigma_noise2 * np.eye(n)
    low, _ = chol_with_jitter(c)
    alpha = cho_solve((low, True), y)
    logdet = 2.0 * np.sum(np.log(np.diag(low)))
    return float(-0.5 * (y @ alpha) - 0.5 * logdet - 0.5 * n * LOG2PI)


def predict(fit: GpFit, cross_cov: np.ndarray, prior_var: np.ndarray):
    """Posterior mean and variance at test points given their cross
    covariance with the training set and their prior variances."""
    cross_cov = np.atleast_2d(np.asarray(cross_cov, dtype=float))
    prior_var = np.atleast_1d(np.asarray(prior_var, dtype=float))
    n = fit.alpha_vec.size
    if cross_cov.shape[1] != n or prior_var.size != cross_cov.shape[0]:
        raise ValueError("cross covariance or prior variance shape mismatch")
    mean = cross_cov @ fit.alpha_vec
    v = solve_triangular(fit.chol, cross_cov.T, lower=True)
    var = prior_var - np.sum(v * v, axis=0)
    neg = var < 0
    if np.any(neg):
        _VAR_CLAMPS[0] += int(np.count_nonzero(neg))
        var = np.where(neg, 0.0, var)
    return mean, var


# ---------------------------------------------------------------------------
# heat-kernel stack fit


def _slice_eigen(cov: np.ndarray):
    """Eigendecompose a symmetrized Monte Carlo covariance slice, repairing
    indefiniteness by a jitter shift first and eigenvalue clipping last."""
    lam, u = np.linalg.eigh(0.5 * (cov + cov.T))
    warn = {}
    lam_min = float(lam[0])
    if lam_min < 0:
        scale = max(float(np.mean(np.diag(cov))), 0.0)
        fixed = False
        if scale > 0:
            for j in JITTER_LADDER:
                if lam_min + j * scale > 0:
                    lam = lam + j * scale
                    warn["jitter"] = j * scale
                    fixed = True
                    break
        if not fixed:
            warn["clipped_eigenvalues"] = int(np.count_nonzero(lam < 0))
            lam = np.clip(lam, 0.0, None)
    return lam, u, warn


def slice_negloglik(theta: np.ndarray, lam: np.ndarray, y_rot: np.ndarray):
    """Negative log marginal of one eigendecomposed slice at theta =
    (log sigma_h2, log sigma_n2), with its gradient."""
    sh, sn = np.exp(theta)
    d = sh * lam + sn
    n = y_rot.size
    val = 0.5 * np.sum(y_rot**2 / d) + 0.5 * np.sum(np.log(d)) + 0.5 * n * LOG2PI
    inner = 1.0 / d - y_rot**2 / d**2
    g_sh = 0.5 * float(np.sum(lam * inner)) * sh
    g_sn = 0.5 * float(np.sum(inner)) * sn
    return val, np.array([g_sh, g_sn])


def _fit_slice(lam: np.ndarray, y_rot: np.ndarray, vy: float, opt) -> Tuple[float, float, float]:
    """Maximize the log marginal over (sigma_h2, sigma_n2) for one slice whose
    eigenvalues are lam, with y already rotated into the eigenbasis."""
    s_lam = max(float(np.mean(lam)), 1e-300)
    lh0 = math.log(max(vy, 1e-12) / s_lam)
    ln0 = math.log(0.1 * max(vy, 1e-12))

    def negloglik(theta):
        return slice_negloglik(theta, lam, y_rot)

    # noise floor 1e-9 vy keeps rank-deficient slices from collapsing sn to
    # the point where the cached Cholesky overflows downstream
    bounds = [(lh0 - 30.0, lh0 + 30.0), (math.log(1e-9 * max(vy, 1e-12)), ln0 + 30.0)]
    res = minimize(
        negloglik, np.array([lh0, ln0]), jac=True, method="L-BFGS-B",
        bounds=bounds, options={"maxiter": opt.maxiter, "gtol": opt.tol, "ftol": 1e-14},
    )
    cand = [(negloglik(np.array([lh0, ln0]))[0], (lh0, ln0)), (res.fun, tuple(res.x))]
    best = min(cand, key=lambda c: c[0])
    sh, sn = np.exp(best[1])
    return float(sh), float(sn), float(-best[0])


def fit_heat_gp(stack: HeatKernelStack, labeled, opt=None) -> GpFit:
    """Select the diffusion time by grid search over every stack slice, with a
    continuous inner optimization of (sigma_h2, sigma_noise2) per slice.

    labeled is (indices, responses) referring to rows of the stack; ties in
    likelihood are broken toward smaller t.
    """
    if opt is None:
        from .lvm import OptimizerSpec
        opt = OptimizerSpec()
    idx, y = labeled
    idx = np.asarray(idx, dtype=int)
    y = _as_vector(y)
    if idx.size != y.size:
        raise ValueError("labeled indices and responses differ in length")
    if idx.size and (idx.min() < 0 or idx.max() >= stack.n_points):
        raise ValueError("labeled indices fall outside the stack dimension")
    vy = float(np.var(y)) if y.size > 1 else float(y[0] ** 2) + 1.0
    results = []
    warnings = {}
    for k in range(stack.n_times):
        sub = stack.slice_sym(k)[np.ix_(idx, idx)]
        try:
            lam, u, warn = _slice_eigen(sub)
            if warn:
                warnings[int(k)] = warn
            y_rot = u.T @ y
            sh, sn, ll = _fit_slice(lam, y_rot, vy, opt)
        except (np.linalg.LinAlgError, FloatingPointError):
            results.append(None)
            continue
        results.append((ll, sh, sn))
    if all(r is None for r in results):
        raise np.linalg.LinAlgError("every stack slice failed to factorize")
    best_k, best = None, None
    for k, r in enumerate(results):
        if r is None:
            continue
        # strict improvement required, so the earliest (smallest t) wins ties
        if best is None or r[0] > best[0] + 1e-9 * (1.0 + abs(best[0])):
            best_k, best = k, r
    ll, sh, sn = best
    # rebuild the PSD-repaired covariance the selection actually scored
    lam, u, _ = _slice_eigen(stack.slice_sym(best_k)[np.ix_(idx, idx)])
    cov = sh * ((u * lam) @ u.T)
    low, jit = chol_with_jitter(cov + sn * np.eye(idx.size))
    alpha = cho_solve((low, True), y)
    meta = {
        "grid_loglik": [None if r is None else r[0] for r in results],
        "grid_params": [None if r is None else (r[1], r[2]) for r in results],
        "slice_warnings": warnings,
        "final_jitter": jit,
        "times": [float(t) for t in stack.times],
    }
    source = HeatStackKernel(t_index=best_k + 1, t=float(stack.times[best_k]), sigma_h2=sh)
    return GpFit(source, sn, alpha, low, idx, y.copy(), ll, meta)


def rebuild_heat_fit(
    stack: HeatKernelStack, labeled, t_index: int, sigma_h2: float, sigma_noise2: float
) -> GpFit:
    """Reassemble a heat-kernel GpFit from persisted hyperparameters.

    Follows the same PSD-repair and factorization path as fit_heat_gp, so a
    reloaded fit reproduces its predictions bit for bit.
    """
    idx, y = labeled
    idx = np.asarray(idx, dtype=int)
    y = _as_vector(y)
    if not 1 <= t_index <= stack.n_times:
        raise ValueError("t_index outside the stack grid")
    lam, u, _ = _slice_eigen(stack.slice_sym(t_index - 1)[np.ix_(idx, idx)])
    cov = sigma_h2 * ((u * lam) @ u.T)
    low, jit = chol_with_jitter(cov + sigma_noise2 * np.eye(idx.size))
    alpha = cho_solve((low, True), y)
    ll = float(
        -0.5 * (y @ alpha) - np.sum(np.log(np.diag(low))) - 0.5 * y.size * LOG2PI
    )
    source = HeatStackKernel(int(t_index), float(stack.times[t_index - 1]), sigma_h2)
    meta = {"final_jitter": jit, "times": [float(t) for t in stack.times]}
    return GpFit(source, sigma_noise2, alpha, low, idx, y.copy(), ll, meta)


def heat_cross(fit: GpFit, stack: HeatKernelStack, test_indices) -> Tuple[np.ndarray, np.ndarray]:
    """Cross covariance and prior variance of stack points against the
    training set of a heat-kernel fit."""
    if not isinstance(fit.kernel_source, HeatStackKernel):
        raise TypeError("fit does not use a heat-kernel source")
    test_indices = np.asarray(test_indices, dtype=int)
    k = fit.kernel_source.t_index - 1
    sh = fit.kernel_source.sigma_h2
    sym = stack.slice_sym(k)
    cross = sh * sym[np.ix_(test_indices, fit.train_refs)]
    prior = sh * sym[test_indices, test_indices]
    return cross, prior


# ---------------------------------------------------------------------------
# Euclidean baseline


def euclidean_loglik(x: np.ndarray, y: np.ndarray, params: RbfParams, sigma_noise2: float):
    """Log marginal likelihood of the ARD RBF GP and its analytic gradient
    with respect to (log gamma, log rho, log sigma_noise2).

    Returns (value, dlog_gamma, dlog_rho, dlog_noise); value is -inf when the
    covariance fails to factorize.
    """
    n = y.size
    k = kernel_matrix(params, x, x)
    c = k + sigma_noise2 * np.eye(n)
    try:
        low = np.linalg.cholesky(c)
    except np.linalg.LinAlgError:
        return -np.inf, 0.0, np.zeros(params.q), 0.0
    alpha = cho_solve((low, True), y)
    ll = -0.5 * float(y @ alpha) - float(np.sum(np.log(np.diag(low)))) - 0.5 * n * LOG2PI
    c_inv = cho_solve((low, True), np.eye(n))
    w = 0.5 * (np.outer(alpha, alpha) - c_inv)
    _, _, dlg, dlr = kernel_vjp(params, x, x, w)
    dln = sigma_noise2 * float(np.trace(w))
    return ll, dlg, dlr, dln


def fit_euclidean_gp(x: np.ndarray, y, opt=None) -> GpFit:
    """Maximize the log marginal likelihood of an isotropic RBF GP over
    (gamma, rho, sigma_noise2), with analytic gradients.

    rho is a single shared inverse-squared lengthscale: the kernel depends on
    the inputs only through their Euclidean distance."""
    if opt is None:
        from .lvm import OptimizerSpec
        opt = OptimizerSpec()
    x = np.atleast_2d(np.asarray(x, dtype=float))
    y = _as_vector(y)
    n, d = x.shape
    if y.size != n:
        raise ValueError("inputs and responses differ in length")
    vy = float(np.var(y)) if n > 1 else float(y[0] ** 2) + 1.0
    vy = max(vy, 1e-12)
    d2 = np.sum((x[:, None, :] - x[None, :, :]) ** 2, axis=2)
    med = float(np.median(d2[d2 > 0])) if np.any(d2 > 0) else 1.0
    rho0 = 1.0 / max(med, 1e-12)
    theta0 = np.array([math.log(vy), math.log(rho0), math.log(0.1 * vy)])

    def unpack(theta):
        return RbfParams(np.exp(theta[0]), np.full(d, np.exp(theta[1]))), float(np.exp(theta[-1]))

    def fun(theta):
        params, sn = unpack(theta)
        ll, dlg, dlr, dln = euclidean_loglik(x, y, params, sn)
        if not np.isfinite(ll):
            return np.inf, np.zeros_like(theta)
        return -ll, -np.array([dlg, float(np.sum(dlr)), dln])

    bounds = [
        (math.log(1e-6 * vy), math.log(1e6 * vy)),
        (math.log(rho0) - 25.0, math.log(rho0) + 25.0),
        (math.log(1e-9 * vy), math.log(1e4 * vy)),
    ]
    res = minimize(
        fun, theta0, jac=True, method="L-BFGS-B", bounds=bounds,
        options={"maxiter": opt.maxiter, "gtol": opt.tol, "ftol": 1e-14},
    )
    theta = res.x if fun(res.x)[0] <= fun(theta0)[0] else theta0
    params, sn = unpack(theta)
    k = kernel_matrix(params, x, x)
    low, jit = chol_with_jitter(k + sn * np.eye(n))
    alpha = cho_solve((low, True), y)
    ll = float(-0.5 * (y @ alpha) - np.sum(np.log(np.diag(low))) - 0.5 * n * LOG2PI)
    meta = {"x_train": x.copy(), "final_jitter": jit, "init_loglik": -float(fun(theta0)[0])}
    source = EuclideanRbf(params, f"R{d}")
    return GpFit(source, sn, alpha, low, np.arange(n), y.copy(), ll, meta)


def euclidean_cross(fit: GpFit, x_test: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
    """Cross covariance and prior variance of new inputs against the training
    inputs of a Euclidean fit."""
    if not isinstance(fit.kernel_source, EuclideanRbf):
        raise TypeError("fit does not use a Euclidean kernel source")
    x_test = np.atleast_2d(np.asarray(x_test, dtype=float))
    params = fit.kernel_source.params
    cross = kernel_matrix(params, x_test, fit.meta["x_train"])
    prior = np.full(x_test.shape[0], params.gamma)
    return cross, prior


def fit_summary(fit: GpFit) -> dict:
    """JSON-ready description of a fit: selected kernel, noise, likelihood,
    and for heat fits the full per-slice likelihood curve and warnings."""
    out = {
        "sigma_noise2": float(fit.sigma_noise2),
        "log_evidence": float(fit.log_evidence),
        "n_train": int(fit.alpha_vec.size),
    }
    src = fit.kernel_source
    if isinstance(src, HeatStackKernel):
        out["kernel"] = "heat"
        out["t"] = src.t
        out["t_index"] = src.t_index
        out["sigma_h2"] = src.sigma_h2
        out["grid_loglik"] = fit.meta.get("grid_loglik")
        out["times"] = fit.meta.get("times")
        out["slice_warnings"] = {
            str(k): v for k, v in fit.meta.get("slice_warnings", {}).items()
        }
    else:
        out["kernel"] = "euclidean_rbf"
        out["space"] = src.space
        out["gamma"] = float(src.params.gamma)
        out["rho"] = np.asarray(src.params.rho).tolist()
    return out
