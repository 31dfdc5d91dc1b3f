"""Tests for the heat-kernel estimator built on diffusion path counts.

Statistical checks run with fixed seeds and 3-standard-error windows, so
they are deterministic reruns of a calibrated experiment, not flaky
samplers.
"""
import math

import numpy as np
import pytest

from heatgeom.analytic import (
    euclidean,
    euclidean_heat_kernel,
    rescaled_chart,
    swiss_roll,
)
from heatgeom.bm import MetricSource, SimConfig, TrajectoryEnsemble, analytic_source, simulate
from heatgeom.heat import (
    HeatKernelStack,
    NeighborhoodSpec,
    build_stack,
    default_omega,
    density_estimate,
    density_standard_error,
    heat_kernel_profile,
    heat_kernel_profile_with_errors,
    load_stack,
    save_stack,
    transition_probability,
    unit_ball_volume,
)
from heatgeom.rng import derive_seed

FLAT = analytic_source(euclidean(2, (np.full(2, -100.0), np.full(2, 100.0))))


def hand_ensemble(positions, dt=0.5, seed=0):
    """Ensemble with a single step whose endpoint positions are given."""
    paths = np.asarray(positions, dtype=float)[:, None, :]
    return TrajectoryEnsemble(np.zeros(paths.shape[2]), paths, dt, seed)


def test_neighborhood_spec_validation():
    NeighborhoodSpec(0.5)
    NeighborhoodSpec(0.5, "euclidean")
    with pytest.raises(ValueError):
        NeighborhoodSpec(0.0)
    with pytest.raises(ValueError):
        NeighborhoodSpec(-1.0)
    with pytest.raises(ValueError):
        NeighborhoodSpec(0.5, "spherical")


def test_unit_ball_volume():
    assert unit_ball_volume(1) == pytest.approx(2.0)
    assert unit_ball_volume(2) == pytest.approx(math.pi)
    assert unit_ball_volume(3) == pytest.approx(4.0 * math.pi / 3.0)


def test_transition_probability_one_third():
    # 3 paths, exactly one ends inside the target ball
    ens = hand_ensemble([[0.1, 0.0], [5.0, 5.0], [-9.0, 2.0]])
    p = transition_probability(ens, np.zeros(2), 1.0, 1)
    assert p == pytest.approx(1.0 / 3.0)


def test_transition_probability_omega_limits():
    rng = np.random.default_rng(3)
    ens = hand_ensemble(rng.normal(size=(50, 2)))
    assert transition_probability(ens, np.zeros(2), 1e9, 1) == 1.0
    assert transition_probability(ens, np.array([0.37, -0.21]), 1e-12, 1) == 0.0


def test_density_zero_count_is_zero():
    ens = hand_ensemble([[5.0, 5.0], [6.0, 6.0]])
    spec = NeighborhoodSpec(0.5)
    assert density_estimate(ens, np.zeros(2), spec, 1, FLAT) == 0.0


def test_density_mode_ratio_is_root_det():
    # riemannian and euclidean volumes differ exactly by sqrt(det G(target))
    metric = analytic_source(swiss_roll())
    target = np.array([6.0, 4.0])
    ens = hand_ensemble([[6.1, 4.0], [6.0, 4.2], [9.0, 1.0]])
    d_r = density_estimate(ens, target, NeighborhoodSpec(0.5, "riemannian"), 1, metric)
    d_e = density_estimate(ens, target, NeighborhoodSpec(0.5, "euclidean"), 1, metric)
    g, _, _ = metric.eval(target)
    assert d_e / d_r == pytest.approx(math.sqrt(np.linalg.det(g)), rel=1e-12)


def test_density_flat_matches_gaussian():
    # flat metric, start = target, t = 1: estimate within 3 MC standard
    # errors of the Gaussian transition density 1/(2 pi t)
    start = np.zeros(2)
    cfg = SimConfig(dt=0.05, n_steps=20, n_paths=20000, seed=11)
    ens = simulate(FLAT, start, cfg)
    spec = NeighborhoodSpec(0.1)
    k = ens.time_index(1.0)
    est = density_estimate(ens, start, spec, k, FLAT)
    se = density_standard_error(ens, start, spec, k, FLAT)
    truth = euclidean_heat_kernel(2, start, start, 1.0)
    assert truth == pytest.approx(1.0 / (2.0 * math.pi))
    assert abs(est - truth) < 3.0 * se


def test_density_singular_metric_error():
    def eval_batch(x):
        b = x.shape[0]
        g = np.zeros((b, 2, 2))
        return g, g, np.zeros((b, 2, 2, 2))

    degenerate = MetricSource(2, eval_batch, lambda x: np.ones(x.shape[0], dtype=bool))
    ens = hand_ensemble([[0.0, 0.0]])
    with pytest.raises(np.linalg.LinAlgError):
        density_estimate(ens, np.zeros(2), NeighborhoodSpec(0.5), 1, degenerate)


def test_default_omega_unit_grid():
    pts = np.array([[0.0, 0.0], [1.0, 0.0], [2.0, 0.0], [3.0, 0.0]])
    assert default_omega(pts) == pytest.approx(0.3)
    assert default_omega(pts, factor=0.5) == pytest.approx(0.5)


def test_build_stack_single_point_matches_density():
    cfg = SimConfig(dt=0.25, n_steps=4, n_paths=600, seed=7)
    spec = NeighborhoodSpec(0.4)
    x0 = np.array([0.5, -0.5])
    stack = build_stack(FLAT, x0[None, :], cfg, spec)
    assert stack.sigma.shape == (4, 1, 1)
    np.testing.assert_allclose(stack.times, cfg.dt * np.arange(1, 5))
    row_cfg = SimConfig(cfg.dt, cfg.n_steps, cfg.n_paths, derive_seed(cfg.seed, "row:0"))
    ens = simulate(FLAT, x0, row_cfg)
    for k in range(4):
        assert stack.sigma[k, 0, 0] == density_estimate(ens, x0, spec, k + 1, FLAT)


@pytest.fixture(scope="module")
def collinear_stack():
    pts = np.array([[0.0, 0.0], [1.0, 0.0], [2.0, 0.0]])
    cfg = SimConfig(dt=0.25, n_steps=4, n_paths=4000, seed=5)
    spec = NeighborhoodSpec(0.25)
    return build_stack(FLAT, pts, cfg, spec), cfg, spec


def test_build_stack_entries_finite_nonneg(collinear_stack):
    stack, _, _ = collinear_stack
    assert np.all(np.isfinite(stack.sigma))
    assert np.all(stack.sigma >= 0.0)


def test_build_stack_diagonal_largest_at_first_time(collinear_stack):
    stack, _, _ = collinear_stack
    s = stack.sigma[0]
    for i in range(3):
        assert s[i, i] == max(s[i])


def test_build_stack_collinear_monotone(collinear_stack):
    # density decreases with |i - j| spacing; Monte Carlo ties at zero counts
    # are allowed, the t = 1 row is checked strictly
    stack, _, _ = collinear_stack
    for k in range(stack.n_times):
        s = stack.sigma[k]
        for i in range(3):
            dist = np.abs(np.arange(3) - i)
            for d1 in np.unique(dist):
                for d2 in np.unique(dist):
                    if d1 < d2:
                        assert s[i, dist == d1].min() >= s[i, dist == d2].max() - 1e-12
    s1 = stack.sigma[stack.time_to_index(1.0)]
    assert s1[0, 0] > s1[0, 1] > s1[0, 2]


def test_build_stack_deterministic():
    pts = np.array([[0.0, 0.0], [1.5, 0.5]])
    cfg = SimConfig(dt=0.2, n_steps=3, n_paths=500, seed=21)
    spec = NeighborhoodSpec(0.3)
    a = build_stack(FLAT, pts, cfg, spec)
    b = build_stack(FLAT, pts, cfg, spec)
    assert np.array_equal(a.sigma, b.sigma)
    assert np.array_equal(a.times, b.times)


def test_build_stack_boundary_error():
    tight = analytic_source(euclidean(2, (np.zeros(2), np.ones(2))))
    pts = np.array([[0.5, 0.5], [2.0, 0.5]])
    cfg = SimConfig(dt=0.1, n_steps=2, n_paths=10, seed=0)
    with pytest.raises(ValueError):
        build_stack(tight, pts, cfg, NeighborhoodSpec(0.1))


def test_monotone_in_t_for_distant_pair():
    # far pair: covariance rises with t over the first half of the grid
    pts = np.array([[0.0, 0.0], [2.0, 0.0]])
    cfg = SimConfig(dt=0.25, n_steps=8, n_paths=20000, seed=13)
    spec = NeighborhoodSpec(0.25)
    stack = build_stack(FLAT, pts, cfg, spec)
    vol = unit_ball_volume(2) * spec.omega**2
    half = stack.n_times // 2
    dens = 0.5 * (stack.sigma[:half, 0, 1] + stack.sigma[:half, 1, 0])
    p = dens * vol
    se = np.sqrt(np.clip(p * (1.0 - p), 0.0, None) / cfg.n_paths) / vol
    assert dens[-1] > dens[0]
    for k in range(half - 1):
        assert dens[k + 1] >= dens[k] - 3.0 * (se[k] + se[k + 1])


def test_profile_peaks_at_start():
    start = np.zeros(2)
    targets = np.array([[0.0, 0.0], [1.0, 0.0], [0.0, -1.5], [2.0, 2.0]])
    cfg = SimConfig(dt=0.1, n_steps=2, n_paths=3000, seed=2)
    prof = heat_kernel_profile(FLAT, start, targets, 0.2, cfg, NeighborhoodSpec(0.2))
    assert prof.shape == (4,)
    assert np.argmax(prof) == 0


def test_profile_off_grid_time_error():
    cfg = SimConfig(dt=0.25, n_steps=4, n_paths=50, seed=0)
    with pytest.raises(ValueError):
        heat_kernel_profile(FLAT, np.zeros(2), np.zeros((1, 2)), 0.33, cfg, NeighborhoodSpec(0.2))


def test_profile_two_seeds_agree_within_pooled_se():
    start = np.zeros(2)
    targets = np.array([[0.0, 0.0], [1.0, 0.0], [0.0, 1.0], [-0.7, 0.7]])
    spec = NeighborhoodSpec(0.2)
    cfg_a = SimConfig(dt=0.1, n_steps=5, n_paths=8000, seed=101)
    cfg_b = SimConfig(dt=0.1, n_steps=5, n_paths=8000, seed=202)
    da, ea = heat_kernel_profile_with_errors(FLAT, start, targets, 0.5, cfg_a, spec)
    db, eb = heat_kernel_profile_with_errors(FLAT, start, targets, 0.5, cfg_b, spec)
    pooled = np.sqrt(ea**2 + eb**2)
    assert np.all(np.abs(da - db) <= 3.0 * pooled + 1e-12)


def test_profile_coordinate_independence():
    # the same intrinsic estimate from the native chart and a rescaled one,
    # within 3 pooled MC standard errors (riemannian volume mode)
    # diffusion time long enough that the counting ball is small next to the
    # path spread in every direction; otherwise ball-averaging bias differs
    # between charts and swamps the Monte Carlo error
    scale = np.array([0.8, 2.0])
    native = swiss_roll()
    rescaled = rescaled_chart(native, scale)
    start = np.array([6.0, 4.0])
    targets = np.array([[6.0, 4.0], [6.2, 4.3], [5.8, 4.5], [6.0, 5.2]])
    spec = NeighborhoodSpec(0.12)
    cfg = SimConfig(dt=0.1, n_steps=40, n_paths=8000, seed=31)
    da, ea = heat_kernel_profile_with_errors(
        analytic_source(native), start, targets, 4.0, cfg, spec
    )
    db, eb = heat_kernel_profile_with_errors(
        analytic_source(rescaled), start * scale, targets * scale, 4.0, cfg, spec
    )
    pooled = np.sqrt(ea**2 + eb**2)
    assert np.all(np.abs(da - db) <= 3.0 * pooled + 1e-12)


def test_stack_time_to_index():
    stack = HeatKernelStack(np.array([0.25, 0.5, 0.75]), np.zeros((3, 2, 2)), {})
    assert stack.time_to_index(0.5) == 1
    assert stack.time_to_index(0.75) == 2
    with pytest.raises(ValueError):
        stack.time_to_index(0.6)


def test_slice_sym_is_symmetric():
    sigma = np.arange(8.0).reshape(2, 2, 2)
    stack = HeatKernelStack(np.array([0.1, 0.2]), sigma, {})
    s = stack.slice_sym(0)
    assert np.array_equal(s, s.T)
    assert s[0, 1] == pytest.approx(0.5 * (sigma[0, 0, 1] + sigma[0, 1, 0]))


def test_save_load_roundtrip(tmp_path, collinear_stack):
    stack, cfg, spec = collinear_stack
    d = str(tmp_path / "stack")
    save_stack(stack, d)
    back = load_stack(d)
    assert np.array_equal(back.sigma, stack.sigma)
    assert np.array_equal(back.times, stack.times)
    assert back.meta["n_bm"] == cfg.n_paths
    assert back.meta["omega"] == spec.omega
    assert back.meta["seed"] == cfg.seed
    assert back.meta["volume_mode"] == spec.volume_mode
