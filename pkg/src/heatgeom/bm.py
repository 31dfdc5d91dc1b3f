"""Discrete-time Brownian motion on a Riemannian manifold.

One Euler step of the metric-adapted SDE draws

    x_{k+1} ~ N(x_k + mu(x_k) dt, dt * Ginv(x_k))

with the drift assembled from the metric and its gradient:

    mu_i = (1/2) sum_j (-Ginv dG_j Ginv)_{ij}
         + (1/4) sum_j Ginv_{ij} tr(Ginv dG_j)

Proposals falling outside the manifold boundary are rejected and redrawn up to
max_rejects times, after which the path stays in place for that step.  Noise
comes from counter-based streams keyed by (seed, path, step, round), so results
are bitwise reproducible and independent of batch scheduling.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Optional

import numpy as np

from .rng import counter_normals


@dataclass(frozen=True)
class MetricSource:
    """Batched metric field over a q-dimensional chart.

    eval_batch maps (B, q) points to (G, Ginv, dG) with shapes (B, q, q),
    (B, q, q), (B, q, q, q); dG[b, l] is the derivative of G along x^l.
    inside_batch maps (B, q) points to a boolean mask of boundary membership.
    """

    q: int
    eval_batch: Callable
    inside_batch: Callable

    def eval(self, x: np.ndarray):
        g, g_inv, dg = self.eval_batch(np.asarray(x, dtype=float)[None, :])
        return g[0], g_inv[0], dg[0]

    def inside(self, x: np.ndarray) -> bool:
        return bool(self.inside_batch(np.asarray(x, dtype=float)[None, :])[0])


def analytic_source(manifold) -> MetricSource:
    """Wrap an AnalyticManifold as a MetricSource."""

    def eval_batch(x):
        g = manifold.metric(x)
        dg = manifold.metric_grad(x)
        return g, np.linalg.inv(g), dg

    return MetricSource(manifold.q, eval_batch, manifold.inside)


@dataclass(frozen=True)
class SimConfig:
    """Simulation controls: step size, horizon, ensemble size, seed, and the
    rejection budget per step before the stay-in-place fallback."""

    dt: float
    n_steps: int
    n_paths: int
    seed: int
    max_rejects: int = 100

    def __post_init__(self):
        if not self.dt > 0:
            raise ValueError("dt must be positive")
        if self.n_steps < 1 or self.n_paths < 1:
            raise ValueError("n_steps and n_paths must be at least 1")
        if self.max_rejects < 1:
            raise ValueError("max_rejects must be at least 1")


@dataclass(frozen=True)
class TrajectoryEnsemble:
    """Ensemble of sample paths: paths[i, k] is path i after step k+1, so the
    stored positions sit at times dt * (1 .. n_steps)."""

    start: np.ndarray
    paths: np.ndarray
    dt: float
    seed: int
    n_rejections: int = 0
    n_stays: int = 0

    @property
    def n_paths(self) -> int:
        return self.paths.shape[0]

    @property
    def n_steps(self) -> int:
        return self.paths.shape[1]

    @property
    def q(self) -> int:
        return self.paths.shape[2]

    @property
    def times(self) -> np.ndarray:
        return self.dt * np.arange(1, self.n_steps + 1)

    def positions(self, t_index: int) -> np.ndarray:
        """Positions of all paths after t_index completed steps (1-based)."""
        if not 1 <= t_index <= self.n_steps:
            raise ValueError(f"t_index must lie in 1..{self.n_steps}")
        return self.paths[:, t_index - 1]

    def time_index(self, t: float) -> int:
        """Number of completed steps k with k * dt = t; errors off the grid."""
        k = int(round(t / self.dt))
        if k < 1 or k > self.n_steps or abs(k * self.dt - t) > 1e-9 * max(1.0, abs(t)):
            raise ValueError(f"time {t} is not on the simulation grid")
        return k


def _drift_from_parts(g_inv: np.ndarray, dg: np.ndarray) -> np.ndarray:
    # m[b, j] = Ginv dG_j Ginv, then pick entry (i, j) of the j-th matrix
    m = np.einsum("bik,bjkl,blm->bjim", g_inv, dg, g_inv)
    term1 = -0.5 * np.einsum("bjij->bi", m)
    tr = np.einsum("bkl,bjlk->bj", g_inv, dg)
    term2 = 0.25 * np.einsum("bij,bj->bi", g_inv, tr)
    return term1 + term2


def drift(metric: MetricSource, x: np.ndarray) -> np.ndarray:
    """Drift vector of the discrete Brownian-motion step at a single point."""
    _, g_inv, dg = metric.eval(x)
    return _drift_from_parts(g_inv[None], dg[None])[0]


def _sqrt_psd_batch(a: np.ndarray) -> np.ndarray:
    w, v = np.linalg.eigh(a)
    if np.any(w <= 0):
        raise np.linalg.LinAlgError("inverse metric is not positive definite")
    return np.einsum("bik,bk,bjk->bij", v, np.sqrt(w), v)


def propose_step(
    metric: MetricSource, x: np.ndarray, dt: float, rng: np.random.Generator
) -> np.ndarray:
    """Draw one proposal from N(x + mu dt, dt * Ginv); no boundary handling."""
    x = np.asarray(x, dtype=float)
    _, g_inv, dg = metric.eval(x)
    mu = _drift_from_parts(g_inv[None], dg[None])[0]
    root = _sqrt_psd_batch(g_inv[None])[0]
    z = rng.standard_normal(metric.q)
    return x + mu * dt + np.sqrt(dt) * (root @ z)


def simulate(metric: MetricSource, start: np.ndarray, cfg: SimConfig) -> TrajectoryEnsemble:
    """Run the full ensemble from a common start point.

    All paths advance together; each rejection round redraws only the paths
    still outside the boundary, using that path's own counter stream so the
    result does not depend on which other paths are active.
    """
    start = np.asarray(start, dtype=float).reshape(metric.q)
    if not metric.inside(start):
        raise ValueError("start point lies outside the manifold boundary")
    n, q = cfg.n_paths, metric.q
    x = np.tile(start, (n, 1))
    paths = np.empty((n, cfg.n_steps, q))
    sqrt_dt = np.sqrt(cfg.dt)
    all_ids = np.arange(n, dtype=np.uint64)
    n_rejections = 0
    n_stays = 0
    for step in range(cfg.n_steps):
        g, g_inv, dg = metric.eval_batch(x)
        mean = x + _drift_from_parts(g_inv, dg) * cfg.dt
        root = sqrt_dt * _sqrt_psd_batch(g_inv)
        new_x = np.empty_like(x)
        active = all_ids
        for round_idx in range(cfg.max_rejects):
            idx = active.astype(np.intp)
            z = counter_normals(cfg.seed, active, step, round_idx, q)
            prop = mean[idx] + np.einsum("bij,bj->bi", root[idx], z)
            ok = metric.inside_batch(prop)
            new_x[idx[ok]] = prop[ok]
            n_rejections += int(np.sum(~ok))
            active = active[~ok]
            if active.size == 0:
                break
        if active.size:
            idx = active.astype(np.intp)
            new_x[idx] = x[idx]
            n_stays += active.size
        x = new_x
        paths[:, step] = x
    return TrajectoryEnsemble(start, paths, cfg.dt, cfg.seed, n_rejections, int(n_stays))


def save_trajectories(ens: TrajectoryEnsemble, path: str) -> None:
    """Write an ensemble as CSV: a two-line header naming (q, n_paths, n_steps,
    dt, seed), then path/step rows; step 0 rows carry the start point.  Floats
    are printed with 17 significant digits so round-trips are bit-exact."""
    q = ens.q
    cols = ",".join(f"x{d + 1}" for d in range(q))
    with open(path, "w") as fh:
        fh.write("q,n_paths,n_steps,dt,seed\n")
        fh.write(f"{q},{ens.n_paths},{ens.n_steps},{ens.dt:.17g},{ens.seed}\n")
        fh.write(f"path,step,{cols}\n")
        for i in range(ens.n_paths):
            vals = ",".join(f"{v:.17g}" for v in ens.start)
            fh.write(f"{i},0,{vals}\n")
            for k in range(ens.n_steps):
                vals = ",".join(f"{v:.17g}" for v in ens.paths[i, k])
                fh.write(f"{i},{k + 1},{vals}\n")


def load_trajectories(path: str) -> TrajectoryEnsemble:
    with open(path) as fh:
        names = fh.readline().strip().split(",")
        values = fh.readline().strip().split(",")
        header = dict(zip(names, values))
        fh.readline()
        body = np.loadtxt(fh, delimiter=",", ndmin=2)
    q = int(header["q"])
    n_paths = int(header["n_paths"])
    n_steps = int(header["n_steps"])
    order = np.lexsort((body[:, 1], body[:, 0]))
    body = body[order]
    start = body[0, 2 : 2 + q].copy()
    grid = body[:, 2 : 2 + q].reshape(n_paths, n_steps + 1, q)
    return TrajectoryEnsemble(
        start, grid[:, 1:].copy(), float(header["dt"]), int(header["seed"])
    )
