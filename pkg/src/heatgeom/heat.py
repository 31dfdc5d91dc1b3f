"""Heat-kernel estimation from Brownian-motion transition counts.

The heat kernel at diffusion time t is approximated by the fraction of BM
sample paths that reach a small latent-coordinate ball around the target,
divided by the Riemannian volume of that ball:

    K_hat^t(s0, s) = (1 / V(A_s)) * N_{A_s} / N_BM
    V(A_s) = V_q * omega^q * sqrt(det G(s))   (riemannian mode)

where V_q is the unit-ball volume of R^q.  The euclidean volume mode drops
the metric determinant and exists for ablation.  build_stack assembles the
full n x n covariance array over every discrete diffusion time by launching
one ensemble per row; rows are independent, and each uses a seed derived
from the stack seed and the row index so results are bitwise reproducible.
"""
from __future__ import annotations

import json
import math
import os
from dataclasses import dataclass, replace
from typing import Tuple

import numpy as np

from .bm import MetricSource, SimConfig, TrajectoryEnsemble, simulate
from .rng import derive_seed

VOLUME_MODES = ("riemannian", "euclidean")


@dataclass(frozen=True)
class NeighborhoodSpec:
    """Counting ball: radius omega in latent coordinates plus the volume
    convention used to turn counts into densities."""

    omega: float
    volume_mode: str = "riemannian"

    def __post_init__(self):
        if not self.omega > 0:
            raise ValueError("omega must be positive")
        if self.volume_mode not in VOLUME_MODES:
            raise ValueError(f"volume_mode must be one of {VOLUME_MODES}")


@dataclass(frozen=True)
class HeatKernelStack:
    """Raw density estimates sigma[k, i, j] = K_hat^times[k](s_i, s_j).

    Rows are Monte Carlo generated, so sigma is not exactly symmetric;
    consumers symmetrize as (K + K^T) / 2.  meta records n_bm, omega, seed,
    dt, and the volume mode.
    """

    times: np.ndarray
    sigma: np.ndarray
    meta: dict

    @property
    def n_times(self) -> int:
        return self.sigma.shape[0]

    @property
    def n_points(self) -> int:
        return self.sigma.shape[1]

    def slice_sym(self, k: int) -> np.ndarray:
        """Symmetrized covariance matrix for time index k (0-based array index)."""
        s = self.sigma[k]
        return 0.5 * (s + s.T)

    def time_to_index(self, t: float) -> int:
        k = int(np.argmin(np.abs(self.times - t)))
        if abs(self.times[k] - t) > 1e-9 * max(1.0, abs(t)):
            raise ValueError(f"time {t} is not on the stack grid")
        return k


def unit_ball_volume(q: int) -> float:
    """Volume of the unit ball in R^q: pi^(q/2) / Gamma(q/2 + 1)."""
    return math.pi ** (q / 2.0) / math.gamma(q / 2.0 + 1.0)


def _ball_volume(spec: NeighborhoodSpec, metric: MetricSource, target: np.ndarray) -> float:
    q = target.size
    vol = unit_ball_volume(q) * spec.omega**q
    if spec.volume_mode == "euclidean":
        return vol
    g, _, _ = metric.eval(target)
    det = float(np.linalg.det(g))
    if not det > 0:
        raise np.linalg.LinAlgError("metric determinant is not positive at the target")
    return vol * math.sqrt(det)


def transition_probability(
    ens: TrajectoryEnsemble, target: np.ndarray, omega: float, t_index: int
) -> float:
    """Fraction of paths within latent distance omega of target after
    t_index completed steps."""
    target = np.asarray(target, dtype=float).reshape(ens.q)
    pos = ens.positions(t_index)
    d2 = np.sum((pos - target) ** 2, axis=1)
    return float(np.count_nonzero(d2 <= omega * omega)) / ens.n_paths


def density_estimate(
    ens: TrajectoryEnsemble, target: np.ndarray, spec: NeighborhoodSpec,
    t_index: int, metric: MetricSource
) -> float:
    """Heat-kernel estimate at the target: ball-count fraction over ball volume."""
    target = np.asarray(target, dtype=float).reshape(ens.q)
    p = transition_probability(ens, target, spec.omega, t_index)
    return p / _ball_volume(spec, metric, target)


def density_standard_error(
    ens: TrajectoryEnsemble, target: np.ndarray, spec: NeighborhoodSpec,
    t_index: int, metric: MetricSource
) -> float:
    """Binomial Monte Carlo standard error of density_estimate."""
    target = np.asarray(target, dtype=float).reshape(ens.q)
    p = transition_probability(ens, target, spec.omega, t_index)
    se_p = math.sqrt(p * (1.0 - p) / ens.n_paths)
    return se_p / _ball_volume(spec, metric, target)


def default_omega(latents: np.ndarray, factor: float = 0.3) -> float:
    """factor times the median nearest-neighbor distance among the latents."""
    x = np.atleast_2d(np.asarray(latents, dtype=float))
    d2 = np.sum((x[:, None, :] - x[None, :, :]) ** 2, axis=2)
    np.fill_diagonal(d2, np.inf)
    return factor * float(np.median(np.sqrt(d2.min(axis=1))))


def _volumes(spec: NeighborhoodSpec, metric: MetricSource, targets: np.ndarray) -> np.ndarray:
    q = targets.shape[1]
    base = unit_ball_volume(q) * spec.omega**q
    if spec.volume_mode == "euclidean":
        return np.full(targets.shape[0], base)
    g, _, _ = metric.eval_batch(targets)
    det = np.linalg.det(g)
    if not np.all(det > 0):
        raise np.linalg.LinAlgError("metric determinant is not positive at a target")
    return base * np.sqrt(det)


def _count_matrix(pos: np.ndarray, targets: np.ndarray, omega: float) -> np.ndarray:
    # squared distances via the gram expansion; one row of counts per target
    d2 = (
        np.sum(pos**2, axis=1)[:, None]
        + np.sum(targets**2, axis=1)[None, :]
        - 2.0 * pos @ targets.T
    )
    return np.count_nonzero(d2 <= omega * omega, axis=0)


def build_stack(
    metric: MetricSource, latents: np.ndarray, cfg: SimConfig, spec: NeighborhoodSpec
) -> HeatKernelStack:
    """Estimate the full covariance stack: row i comes from one ensemble
    started at latents[i], counted against every latent at every time."""
    latents = np.atleast_2d(np.asarray(latents, dtype=float))
    n = latents.shape[0]
    if not np.all(metric.inside_batch(latents)):
        raise ValueError("all stack points must lie inside the boundary")
    vols = _volumes(spec, metric, latents)
    sigma = np.empty((cfg.n_steps, n, n))
    for i in range(n):
        row_cfg = replace(cfg, seed=derive_seed(cfg.seed, f"row:{i}"))
        ens = simulate(metric, latents[i], row_cfg)
        for k in range(cfg.n_steps):
            counts = _count_matrix(ens.paths[:, k], latents, spec.omega)
            # same operation order as density_estimate, so n=1 stacks
            # reproduce it bit for bit
            sigma[k, i, :] = (counts / cfg.n_paths) / vols
        del ens
    times = cfg.dt * np.arange(1, cfg.n_steps + 1)
    meta = {
        "n_bm": cfg.n_paths,
        "omega": spec.omega,
        "seed": cfg.seed,
        "dt": cfg.dt,
        "volume_mode": spec.volume_mode,
    }
    return HeatKernelStack(times, sigma, meta)


def heat_kernel_profile(
    metric: MetricSource, start: np.ndarray, targets: np.ndarray, t: float,
    cfg: SimConfig, spec: NeighborhoodSpec
) -> np.ndarray:
    """Density estimates at each target for a single diffusion time t."""
    dens, _ = heat_kernel_profile_with_errors(metric, start, targets, t, cfg, spec)
    return dens


def heat_kernel_profile_with_errors(
    metric: MetricSource, start: np.ndarray, targets: np.ndarray, t: float,
    cfg: SimConfig, spec: NeighborhoodSpec
) -> Tuple[np.ndarray, np.ndarray]:
    """Profile plus its per-target binomial Monte Carlo standard errors."""
    targets = np.atleast_2d(np.asarray(targets, dtype=float))
    ens = simulate(metric, np.asarray(start, dtype=float), cfg)
    k = ens.time_index(t)
    pos = ens.positions(k)
    counts = _count_matrix(pos, targets, spec.omega)
    vols = _volumes(spec, metric, targets)
    p = counts / cfg.n_paths
    dens = p / vols
    se = np.sqrt(p * (1.0 - p) / cfg.n_paths) / vols
    return dens, se


# ---------------------------------------------------------------------------
# serialization


def save_stack(stack: HeatKernelStack, directory: str) -> None:
    """Write meta.json plus one n x n CSV per time index (1-based file names);
    floats carry 17 significant digits so reloads are bit-exact."""
    os.makedirs(directory, exist_ok=True)
    meta = dict(stack.meta)
    meta["times"] = [float(t) for t in stack.times]
    meta["n_points"] = stack.n_points
    with open(os.path.join(directory, "meta.json"), "w") as fh:
        json.dump(meta, fh, indent=1)
    for k in range(stack.n_times):
        path = os.path.join(directory, f"sigma_{k + 1:04d}.csv")
        with open(path, "w") as fh:
            for row in stack.sigma[k]:
                fh.write(",".join(f"{v:.17g}" for v in row) + "\n")


def load_stack(directory: str) -> HeatKernelStack:
    with open(os.path.join(directory, "meta.json")) as fh:
        meta = json.load(fh)
    times = np.asarray(meta.pop("times"), dtype=float)
    n = meta.pop("n_points")
    sigma = np.empty((times.size, n, n))
    for k in range(times.size):
        path = os.path.join(directory, f"sigma_{k + 1:04d}.csv")
        sigma[k] = np.loadtxt(path, delimiter=",", ndmin=2)
    return HeatKernelStack(times, sigma, meta)
