"""Reflected Brownian motion under an analytic metric.

Two quick experiments:
  1. On the flat unit square, endpoints at t = 5 should be uniform; we report
     the worst cell occupancy error of a 10 x 10 histogram.
  2. On the Swiss roll, the metric slows radial motion by 1/sqrt(1 + r^2),
     visible in the endpoint spread along r versus z.
"""
import numpy as np

from heatgeom.analytic import euclidean, swiss_roll
from heatgeom.bm import SimConfig, analytic_source, simulate

# flat square: rejection resampling at the walls plays the role of Neumann
# boundary conditions, so the uniform density is stationary
square = analytic_source(euclidean(2, (np.zeros(2), np.ones(2))))
cfg = SimConfig(dt=0.05, n_steps=100, n_paths=20_000, seed=3)
ens = simulate(square, np.full(2, 0.5), cfg)
pos = ens.positions(cfg.n_steps)
hist, _, _ = np.histogram2d(pos[:, 0], pos[:, 1], bins=10, range=[[0, 1], [0, 1]])
dev = np.abs(hist / cfg.n_paths - 0.01).max()
print(f"unit square, t=5: worst cell deviation from uniform = {dev:.4f}")
print(f"  boundary rejections: {ens.n_rejections}, forced stays: {ens.n_stays}")

roll = analytic_source(swiss_roll())
cfg = SimConfig(dt=0.05, n_steps=40, n_paths=20_000, seed=4)
start = np.array([7.25, 4.0])
ens = simulate(roll, start, cfg)
end = ens.positions(cfg.n_steps)
spread = end.std(axis=0)
print(f"\nswiss roll from {start}, t=2:")
print(f"  chart spread (r, z) = ({spread[0]:.3f}, {spread[1]:.3f})")
print(f"  z spread ~ sqrt(2) = {np.sqrt(2):.3f}; r is slowed by the metric")
