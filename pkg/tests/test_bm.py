"""Brownian-motion stepper: drift against the divergence-form expression
evaluated by finite differences, proposal moments, and bitwise determinism
and schedule independence of the ensemble simulation."""
import numpy as np
import pytest
from scipy import stats

from heatgeom.analytic import AnalyticManifold, euclidean, swiss_roll
from heatgeom.bm import (
    MetricSource,
    SimConfig,
    TrajectoryEnsemble,
    analytic_source,
    drift,
    load_trajectories,
    propose_step,
    save_trajectories,
    simulate,
)


def curved_test_manifold():
    """Non-diagonal closed-form metric g = [[2 + x^2, xy], [xy, 1 + y^2]]."""

    def metric(x):
        x = np.atleast_2d(x)
        b = x.shape[0]
        g = np.empty((b, 2, 2))
        g[:, 0, 0] = 2.0 + x[:, 0] ** 2
        g[:, 0, 1] = g[:, 1, 0] = x[:, 0] * x[:, 1]
        g[:, 1, 1] = 1.0 + x[:, 1] ** 2
        return g

    def metric_grad(x):
        x = np.atleast_2d(x)
        b = x.shape[0]
        dg = np.zeros((b, 2, 2, 2))
        dg[:, 0, 0, 0] = 2.0 * x[:, 0]
        dg[:, 0, 0, 1] = dg[:, 0, 1, 0] = x[:, 1]
        dg[:, 1, 0, 1] = dg[:, 1, 1, 0] = x[:, 0]
        dg[:, 1, 1, 1] = 2.0 * x[:, 1]
        return dg

    def embed(x):
        return np.atleast_2d(x).copy()

    return AnalyticManifold("curved", 2, 2, embed, metric, metric_grad, None)


def divergence_form_drift(manifold, x, h=1e-6):
    # b_i = (1/2) det^-1/2 sum_j d/dx_j (Ginv_ij det^1/2), centered differences
    q = manifold.q

    def ginv_sqrtdet(pt):
        g = manifold.metric(pt[None])[0]
        return np.linalg.inv(g) * np.sqrt(np.linalg.det(g))

    out = np.zeros(q)
    for j in range(q):
        e = np.zeros(q)
        e[j] = h
        diff = (ginv_sqrtdet(x + e) - ginv_sqrtdet(x - e)) / (2 * h)
        out += diff[:, j]
    g = manifold.metric(x[None])[0]
    return 0.5 * out / np.sqrt(np.linalg.det(g))


def test_swiss_roll_drift_closed_form():
    src = analytic_source(swiss_roll())
    for r in (2.5, 5.0, 9.0, 12.0):
        mu = drift(src, np.array([r, 3.0]))
        assert mu[0] == pytest.approx(-0.5 * r / (1.0 + r * r) ** 2, abs=1e-12)
        assert mu[1] == pytest.approx(0.0, abs=1e-12)


def test_drift_matches_divergence_form():
    rng = np.random.default_rng(0)
    for man in (swiss_roll(), curved_test_manifold()):
        src = analytic_source(man)
        for _ in range(5):
            if man.kind == "swiss_roll":
                x = np.array([rng.uniform(2.5, 12.0), rng.uniform(0.5, 7.5)])
            else:
                x = rng.uniform(-1.5, 1.5, size=2)
            assert np.allclose(drift(src, x), divergence_form_drift(man, x), atol=1e-8)


def test_flat_drift_is_zero():
    src = analytic_source(euclidean(2))
    assert np.allclose(drift(src, np.array([0.3, -1.0])), 0.0)


def test_propose_step_moments():
    src = analytic_source(swiss_roll(domain=None))
    x = np.array([4.0, 2.0])
    dt = 0.25
    rng = np.random.default_rng(1)
    draws = np.array([propose_step(src, x, dt, rng) for _ in range(40000)])
    g, g_inv, _ = src.eval(x)
    mean_ref = x + drift(src, x) * dt
    se = np.sqrt(np.diag(dt * g_inv) / draws.shape[0])
    assert np.all(np.abs(draws.mean(axis=0) - mean_ref) < 4 * se)
    cov = np.cov(draws.T)
    assert np.allclose(cov, dt * g_inv, rtol=0.05, atol=1e-3)


def test_simulate_deterministic_and_schedule_independent():
    src = analytic_source(swiss_roll())
    start = np.array([6.0, 4.0])
    cfg = SimConfig(dt=0.05, n_steps=20, n_paths=10, seed=123)
    a = simulate(src, start, cfg)
    b = simulate(src, start, cfg)
    assert np.array_equal(a.paths, b.paths)
    # the first paths of a larger ensemble are bitwise the same paths
    big = simulate(src, start, SimConfig(dt=0.05, n_steps=20, n_paths=25, seed=123))
    assert np.array_equal(big.paths[:10], a.paths)
    # a different seed moves every path
    c = simulate(src, start, SimConfig(dt=0.05, n_steps=20, n_paths=10, seed=124))
    assert not np.array_equal(a.paths, c.paths)


def test_simulate_respects_boundary():
    src = analytic_source(swiss_roll())
    start = np.array([2.2, 0.3])  # near the corner, rejections are common
    cfg = SimConfig(dt=0.1, n_steps=50, n_paths=64, seed=7)
    ens = simulate(src, start, cfg)
    lo, hi = np.array([2.0, 0.0]), np.array([12.5, 8.0])
    assert np.all(ens.paths >= lo) and np.all(ens.paths <= hi)
    assert ens.n_rejections > 0


def test_simulate_stay_in_place_fallback():
    # an impossible boundary forces the fallback: every step keeps the path put
    def never_inside(x):
        return np.zeros(np.atleast_2d(x).shape[0], dtype=bool)

    base = analytic_source(euclidean(2))
    src = MetricSource(2, base.eval_batch, never_inside)
    start = np.array([0.0, 0.0])
    with pytest.raises(ValueError):
        simulate(src, start, SimConfig(dt=0.1, n_steps=2, n_paths=2, seed=0))

    def only_start(x):
        x = np.atleast_2d(x)
        return np.all(np.abs(x) < 1e-12, axis=1)

    src2 = MetricSource(2, base.eval_batch, only_start)
    cfg = SimConfig(dt=0.1, n_steps=3, n_paths=4, seed=0, max_rejects=5)
    ens = simulate(src2, start, cfg)
    assert np.array_equal(ens.paths, np.zeros((4, 3, 2)))
    assert ens.n_stays == 12
    assert ens.n_rejections == 12 * 5


def test_flat_marginals_are_gaussian():
    src = analytic_source(euclidean(2))
    cfg = SimConfig(dt=0.05, n_steps=40, n_paths=4000, seed=5)
    ens = simulate(src, np.zeros(2), cfg)
    end = ens.positions(ens.time_index(2.0))
    # each coordinate ~ N(0, t) with t = 2.0
    for d in range(2):
        stat, pval = stats.kstest(end[:, d] / np.sqrt(2.0), "norm")
        assert pval > 1e-4


def test_ensemble_time_indexing():
    ens = TrajectoryEnsemble(np.zeros(2), np.zeros((3, 10, 2)), 0.5, 0)
    assert np.allclose(ens.times, 0.5 * np.arange(1, 11))
    assert ens.time_index(5.0) == 10
    assert ens.time_index(0.5) == 1
    with pytest.raises(ValueError):
        ens.time_index(0.3)
    with pytest.raises(ValueError):
        ens.time_index(5.5)
    with pytest.raises(ValueError):
        ens.positions(0)
    with pytest.raises(ValueError):
        ens.positions(11)


def test_trajectory_csv_roundtrip(tmp_path):
    src = analytic_source(swiss_roll())
    ens = simulate(src, np.array([6.0, 4.0]), SimConfig(dt=0.1, n_steps=5, n_paths=3, seed=9))
    path = tmp_path / "traj.csv"
    save_trajectories(ens, str(path))
    back = load_trajectories(str(path))
    assert np.array_equal(back.paths, ens.paths)
    assert np.array_equal(back.start, ens.start)
    assert back.dt == ens.dt and back.seed == ens.seed


def test_sim_config_validation():
    with pytest.raises(ValueError):
        SimConfig(dt=0.0, n_steps=1, n_paths=1, seed=0)
    with pytest.raises(ValueError):
        SimConfig(dt=0.1, n_steps=0, n_paths=1, seed=0)
    with pytest.raises(ValueError):
        SimConfig(dt=0.1, n_steps=1, n_paths=1, seed=0, max_rejects=0)
