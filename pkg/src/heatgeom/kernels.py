"""RBF covariance kernel with per-dimension (ARD) inverse squared lengthscales,
its first and second cross-derivatives, and the psi statistics (expectations of
kernel matrices under a diagonal Gaussian over the inputs).

Conventions:
    k(x, x') = gamma * exp(-sum_d rho_d (x_d - x'_d)^2)
    d k(x_i, x_*) / d x_*^l = 2 rho_l (x_i^l - x_*^l) k(x_i, x_*)
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np


@dataclass(frozen=True)
class RbfParams:
    """Kernel hyperparameters: signal variance gamma and ARD vector rho.

    rho holds one inverse-squared-lengthscale per latent dimension; an
    isotropic kernel is the special case of all entries equal.
    """

    gamma: float
    rho: np.ndarray

    def __post_init__(self):
        rho = np.atleast_1d(np.asarray(self.rho, dtype=float))
        object.__setattr__(self, "gamma", float(self.gamma))
        object.__setattr__(self, "rho", rho)
        if not (self.gamma > 0):
            raise ValueError("gamma must be positive")
        if rho.ndim != 1 or not np.all(rho > 0):
            raise ValueError("rho must be a vector of positive values")

    @property
    def q(self) -> int:
        return self.rho.shape[0]

    @classmethod
    def isotropic(cls, gamma: float, rho: float, q: int) -> "RbfParams":
        return cls(gamma=gamma, rho=np.full(q, float(rho)))


@dataclass(frozen=True)
class VariationalGaussian:
    """Diagonal Gaussian over N latent points: means and per-dimension variances."""

    means: np.ndarray
    variances: np.ndarray

    def __post_init__(self):
        means = np.atleast_2d(np.asarray(self.means, dtype=float))
        variances = np.atleast_2d(np.asarray(self.variances, dtype=float))
        object.__setattr__(self, "means", means)
        object.__setattr__(self, "variances", variances)
        if means.shape != variances.shape:
            raise ValueError("means and variances must have identical shape")

    @classmethod
    def delta(cls, means: np.ndarray) -> "VariationalGaussian":
        means = np.atleast_2d(np.asarray(means, dtype=float))
        return cls(means=means, variances=np.zeros_like(means))


def _check_points(x, q: int) -> np.ndarray:
    x = np.atleast_2d(np.asarray(x, dtype=float))
    if x.shape[-1] != q:
        raise ValueError(f"points have dimension {x.shape[-1]}, expected {q}")
    return x


def kernel_matrix(params: RbfParams, a, b) -> np.ndarray:
    """Kernel matrix K[i, j] = k(a_i, b_j)."""
    a = _check_points(a, params.q)
    b = _check_points(b, params.q)
    sa = a * np.sqrt(params.rho)
    sb = b * np.sqrt(params.rho)
    d2 = (
        np.sum(sa**2, axis=1)[:, None]
        + np.sum(sb**2, axis=1)[None, :]
        - 2.0 * sa @ sb.T
    )
    np.clip(d2, 0.0, None, out=d2)
    return params.gamma * np.exp(-d2)


def kernel_diag(params: RbfParams, a) -> np.ndarray:
    a = _check_points(a, params.q)
    return np.full(a.shape[0], params.gamma)


def kernel_grad_cross(params: RbfParams, x, x_star) -> np.ndarray:
    """Matrix of first derivatives D[i, l] = d k(x_i, x_*) / d x_*^l."""
    x = _check_points(x, params.q)
    x_star = np.asarray(x_star, dtype=float).reshape(params.q)
    diff = x - x_star[None, :]
    k = params.gamma * np.exp(-np.sum(params.rho * diff**2, axis=1))
    return 2.0 * params.rho[None, :] * diff * k[:, None]


def kernel_hess_at_star(params: RbfParams) -> np.ndarray:
    """(d^2 K_{*,*})^{r,l} = 2 rho_r gamma on the diagonal, zero elsewhere."""
    return np.diag(2.0 * params.rho * params.gamma)


def _second_cross_core(params: RbfParams, x, x_star) -> np.ndarray:
    """Tensor T[i, l, r] = d^2 k(x_i, x_*) / d x_*^l d x_*^r.

    Closed form k * (4 rho_l rho_r d_l d_r - 2 rho_l delta_{lr}) with
    d = x_i - x_*; symmetric in (l, r).
    """
    x = _check_points(x, params.q)
    x_star = np.asarray(x_star, dtype=float).reshape(params.q)
    diff = x - x_star[None, :]
    k = params.gamma * np.exp(-np.sum(params.rho * diff**2, axis=1))
    rd = params.rho[None, :] * diff
    outer = 4.0 * rd[:, :, None] * rd[:, None, :]
    outer -= np.diag(2.0 * params.rho)[None, :, :]
    return outer * k[:, None, None]


def kernel_grad_cross_dstar(params: RbfParams, x, x_star) -> np.ndarray:
    """Tensor [i, l, r] = d(kernel_grad_cross[i, l]) / d x_*^r."""
    return _second_cross_core(params, x, x_star)


def kernel_grad_grad_cross(params: RbfParams, x, x_star) -> np.ndarray:
    """Tensor [i, r, l] = d^2 k(x_i, x_*) / d x_i^r d x_*^l.

    Equals -4 rho_r rho_l (x_i^r - x_*^r)(x_i^l - x_*^l) k off the diagonal and
    2 rho_r (1 - 2 rho_r (x_i^r - x_*^r)^2) k on it.
    """
    return -_second_cross_core(params, x, x_star)


def psi_statistics(params: RbfParams, q_x: VariationalGaussian, xu):
    """Expectations of kernel matrices under the diagonal Gaussian q(X).

    psi0 = E[tr K_XX] = N * gamma
    psi1[n, i] = E[k(x_n, z_i)]
    psi2[i, j] = E[(K_ZX K_XZ)_{ij}] = sum_n E[k(x_n, z_i) k(x_n, z_j)]
    """
    xu = _check_points(xu, params.q)
    mu, s2 = _check_psi_inputs(params, q_x)
    psi0 = mu.shape[0] * params.gamma
    psi1 = _psi1(params, mu, s2, xu)
    psi2 = _psi2_tensor(params, mu, s2, xu).sum(axis=0) * params.gamma**2
    psi2 = 0.5 * (psi2 + psi2.T)
    return psi0, psi1, psi2


def _check_psi_inputs(params: RbfParams, q_x: VariationalGaussian):
    mu = _check_points(q_x.means, params.q)
    s2 = np.asarray(q_x.variances, dtype=float)
    if np.any(s2 < 0):
        raise ValueError("variational variances must be nonnegative")
    return mu, s2


def _psi1(params: RbfParams, mu, s2, xu) -> np.ndarray:
    den = 1.0 + 2.0 * params.rho[None, :] * s2  # (N, q)
    diff = mu[:, None, :] - xu[None, :, :]  # (N, m, q)
    expo = -np.sum(params.rho[None, None, :] * diff**2 / den[:, None, :], axis=2)
    coef = np.prod(den, axis=1) ** -0.5  # (N,)
    return params.gamma * coef[:, None] * np.exp(expo)


def _psi2_tensor(params: RbfParams, mu, s2, xu) -> np.ndarray:
    """T[n, i, j] with psi2 = gamma^2 * sum_n T[n]; product over dimensions of
    (1+4 rho s2)^{-1/2} exp(-rho D_ij^2/2 - 2 rho (mu_n - zbar_ij)^2/(1+4 rho s2)).
    """
    rho = params.rho
    den = 1.0 + 4.0 * rho[None, :] * s2  # (N, q)
    dz = xu[:, None, :] - xu[None, :, :]  # (m, m, q)
    zbar = 0.5 * (xu[:, None, :] + xu[None, :, :])  # (m, m, q)
    dbar = mu[:, None, None, :] - zbar[None, :, :, :]  # (N, m, m, q)
    expo = -0.5 * np.sum(rho[None, None, :] * dz**2, axis=2)[None, :, :]
    expo = expo - 2.0 * np.einsum(
        "d,nijd,nd->nij", rho, dbar**2, 1.0 / den, optimize=True
    )
    coef = np.prod(den, axis=1) ** -0.5  # (N,)
    return coef[:, None, None] * np.exp(expo)


def kernel_vjp(params: RbfParams, a, b, w):
    """Backpropagate a weight matrix through kernel_matrix(a, b).

    Given w with w[i, j] = dL/dK[i, j], returns (da, db, dlog_gamma, dlog_rho)
    for the scalar L, with gamma and rho differentiated in log space.
    """
    a = _check_points(a, params.q)
    b = _check_points(b, params.q)
    w = np.asarray(w, dtype=float)
    k = kernel_matrix(params, a, b)
    wk = w * k
    diff_sq_sum = np.zeros(params.q)
    da = np.empty_like(a)
    db = np.empty_like(b)
    for d in range(params.q):
        diff = a[:, d][:, None] - b[:, d][None, :]
        da[:, d] = -2.0 * params.rho[d] * np.sum(wk * diff, axis=1)
        db[:, d] = 2.0 * params.rho[d] * np.sum(wk * diff, axis=0)
        diff_sq_sum[d] = np.sum(wk * diff**2)
    dlog_gamma = float(np.sum(wk))
    dlog_rho = -params.rho * diff_sq_sum
    return da, db, dlog_gamma, dlog_rho


def psi_vjp(params: RbfParams, q_x: VariationalGaussian, xu, w1, w2):
    """Backpropagate weights through the psi statistics.

    For L = sum(w1 * psi1) + sum(w2 * psi2), returns a dict with the gradients
    of L w.r.t. the variational means/variances, the inducing inputs, and
    log gamma / log rho.  psi0's contribution (N * gamma) is left to the caller
    since it only touches gamma.
    """
    xu = _check_points(xu, params.q)
    mu, s2 = _check_psi_inputs(params, q_x)
    rho = params.rho
    w1 = np.asarray(w1, dtype=float)
    w2 = np.asarray(w2, dtype=float)

    out_mu = np.zeros_like(mu)
    out_s2 = np.zeros_like(s2)
    out_xu = np.zeros_like(xu)
    dlog_rho = np.zeros(params.q)

    # psi1 part
    den1 = 1.0 + 2.0 * rho[None, :] * s2  # (N, q)
    diff = mu[:, None, :] - xu[None, :, :]  # (N, m, q)
    psi1 = _psi1(params, mu, s2, xu)
    wp1 = w1 * psi1  # (N, m)
    ratio1 = diff / den1[:, None, :]  # (N, m, q)
    out_mu += -2.0 * rho[None, :] * np.einsum("nm,nmd->nd", wp1, ratio1)
    out_xu += 2.0 * rho[None, :] * np.einsum("nm,nmd->md", wp1, ratio1)
    ds2_coef = (
        -rho[None, None, :] / den1[:, None, :]
        + 2.0 * (rho[None, None, :] * ratio1) ** 2
    )
    out_s2 += np.einsum("nm,nmd->nd", wp1, ds2_coef)
    dlrho1 = -np.einsum("nm,nmd->d", wp1, s2[:, None, :] / den1[:, None, :]) - np.einsum(
        "nm,nmd->d", wp1, diff**2 / den1[:, None, :] ** 2
    )
    dlog_gamma = float(np.sum(wp1))
    dlog_rho += rho * dlrho1

    # psi2 part
    den2 = 1.0 + 4.0 * rho[None, :] * s2  # (N, q)
    t = _psi2_tensor(params, mu, s2, xu)  # (N, m, m)
    wt = params.gamma**2 * t * w2[None, :, :]  # (N, m, m)
    dz = xu[:, None, :] - xu[None, :, :]  # (m, m, q)
    zbar = 0.5 * (xu[:, None, :] + xu[None, :, :])
    dbar = mu[:, None, None, :] - zbar[None, :, :, :]  # (N, m, m, q)
    rbar = dbar / den2[:, None, None, :]
    out_mu += -4.0 * rho[None, :] * np.einsum("nij,nijd->nd", wt, rbar)
    ds2_coef2 = -2.0 * rho[None, None, None, :] / den2[:, None, None, :] + 8.0 * (
        rho[None, None, None, :] * rbar
    ) ** 2
    out_s2 += np.einsum("nij,nijd->nd", wt, ds2_coef2)
    # z_k enters via -rho D_ij^2/2 (rows i=k minus columns j=k) and via zbar
    dxu_dz = -np.einsum("nkj,kjd->kd", wt, dz) - np.einsum("nik,ikd->kd", wt, -dz)
    out_xu += rho[None, :] * dxu_dz
    dxu_bar = 2.0 * rho[None, :] * (
        np.einsum("nkj,nkjd->kd", wt, rbar) + np.einsum("nik,nikd->kd", wt, rbar)
    )
    out_xu += dxu_bar
    dlrho2 = (
        -2.0 * np.einsum("nij,nd->d", wt, s2 / den2)
        - 0.5 * np.einsum("nij,ijd->d", wt, dz**2)
        - 2.0 * np.einsum("nij,nijd->d", wt, dbar * rbar / den2[:, None, None, :])
    )
    dlog_gamma += 2.0 * float(np.sum(wt))
    dlog_rho += rho * dlrho2

    return {
        "dmu": out_mu,
        "ds2": out_s2,
        "dxu": out_xu,
        "dlog_gamma": dlog_gamma,
        "dlog_rho": dlog_rho,
    }
