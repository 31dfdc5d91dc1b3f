"""Manifold geometry from point clouds.

Learns a latent chart and Riemannian metric with Gaussian-process latent
variable models, simulates Brownian motion under the learned (or an analytic)
metric, estimates heat kernels from transition counts, and uses them as
covariance functions for regression on the manifold.
"""
__version__ = "0.1.0"
