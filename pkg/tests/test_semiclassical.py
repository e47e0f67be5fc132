"""Stochastic trajectories: sampling, step, ensembles, correlations and spectra."""
import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from dicke_dtc import semiclassical as sc
from dicke_dtc.errors import ConfigurationError, IntegrationError
from dicke_dtc.model import ModelParams
from dicke_dtc.numerics import rng_stream


def _params(**kw):
    base = dict(delta_c=1.0, kappa=1.0, delta=0.1, g0=0.0, g1=0.0, omega=0.0, n_atoms=100)
    base.update(kw)
    return ModelParams(**base)


# sampling --------------------------------------------------------------------------

@pytest.mark.parametrize("n", [10, 1000])
def test_sample_initial_statistics(n):
    p = _params(n_atoms=n)
    y = sc.sample_initial(p, np.random.default_rng(3), size=100_000)
    assert abs(y[sc.SX].mean()) < 3 * np.sqrt(n / 1e5)
    assert abs(np.mean(y[sc.SX] ** 2) / n - 1) < 0.05
    assert abs(np.mean(y[sc.SY] ** 2) / n - 1) < 0.05
    assert abs(np.mean(y[sc.AX] ** 2) - 1) < 0.05
    assert abs(np.mean(y[sc.AP] ** 2) - 1) < 0.05
    assert np.all(y[sc.SZ] == -n)


def test_sample_initial_single_shape():
    assert sc.sample_initial(_params(), np.random.default_rng(0)).shape == (5,)


# step ------------------------------------------------------------------------------

def test_free_rotations_conserve_amplitudes():
    p = _params(kappa=1e-12)
    y = np.array([[1.0], [0.0], [3.0], [0.0], [-5.0]])
    dt, n = 1e-3, 5000
    zero = np.zeros((2, 1))
    for i in range(n):
        y = sc.step(y, p, i * dt, dt, zero)
    t = n * dt
    # a_x' = delta_c a_p, a_p' = -delta_c a_x; X' = -Delta Y, Y' = Delta X
    assert y[sc.AX, 0] == pytest.approx(np.cos(t), abs=1e-6)
    assert y[sc.AP, 0] == pytest.approx(-np.sin(t), abs=1e-6)
    assert y[sc.SX, 0] == pytest.approx(3 * np.cos(0.1 * t), abs=1e-6)
    assert y[sc.SY, 0] == pytest.approx(3 * np.sin(0.1 * t), abs=1e-6)
    assert np.hypot(y[sc.AX, 0], y[sc.AP, 0]) == pytest.approx(1.0, abs=1e-6)


@pytest.mark.parametrize("scheme", ["heun", "euler"])
def test_vacuum_calibration(scheme):
    # g = 0: the cavity quadratures are Ornstein-Uhlenbeck processes with unit stationary variance
    p = _params(n_atoms=10)
    cfg = sc.EnsembleConfig(n_traj=4000, dt=0.01, seed=5, t_end=20.0, record_stride=100, scheme=scheme)
    res = sc.run_ensemble(p, cfg)
    late = res.photon_proxy[0, res.t >= 10.0]
    # each record is the mean of a_x^2 + a_p^2 over 4000 trajectories; its std is about 2/sqrt(4000)
    sigma = 2.0 / np.sqrt(cfg.n_traj)
    assert abs(late.mean() - 2.0) < 3 * sigma


def test_vacuum_relaxes_from_excited_start():
    p = _params(n_atoms=10)
    rng = np.random.default_rng(1)
    y = np.zeros((5, 4000))
    y[sc.AX] = 4.0
    dt = 0.01
    for i in range(2000):
        y = sc.step(y, p, i * dt, dt, rng.standard_normal((2, 4000)))
    var = np.mean(y[sc.AX] ** 2)
    assert abs(var - 1.0) < 0.1


@settings(max_examples=40, deadline=None)
@given(st.lists(st.floats(-50, 50), min_size=5, max_size=5), st.floats(-1, 1))
def test_spin_drift_tangent_to_sphere(vals, g):
    p = _params(n_atoms=50)
    y = np.array(vals, dtype=float)
    d = sc.drift(y, g, p)
    radial = y[sc.SX] * d[sc.SX] + y[sc.SY] * d[sc.SY] + y[sc.SZ] * d[sc.SZ]
    scale = 1.0 + np.abs(y).max() ** 2 * (1 + abs(g))
    assert abs(radial) <= 1e-12 * scale


def test_drift_broadcasts_over_groups():
    p = _params(n_atoms=50)
    y = np.random.default_rng(0).standard_normal((5, 3, 4))
    g = np.array([[0.1], [0.2], [0.3]])
    d = sc.drift(y, g, p)
    assert d.shape == (5, 3, 4)
    np.testing.assert_allclose(d[:, 1, 2], sc.drift(y[:, 1, 2], 0.2, p))


# configuration ---------------------------------------------------------------------

@pytest.mark.parametrize("kw", [dict(n_traj=0), dict(dt=0.5), dict(dt=0.0), dict(t_end=-1.0),
                                dict(scheme="rk4"), dict(record_stride=0)])
def test_config_rejects_invalid(kw):
    cfg = sc.EnsembleConfig(**{**dict(n_traj=2, dt=0.01, t_end=1.0, record_stride=1), **kw})
    with pytest.raises(ConfigurationError):
        cfg.validate(_params())


def test_config_bound_uses_drive_period():
    p = _params(omega=20.0)
    with pytest.raises(ConfigurationError):
        sc.EnsembleConfig(dt=0.01).validate(p)
    sc.EnsembleConfig(dt=0.005).validate(p)


# ensembles -------------------------------------------------------------------------

def _small_cfg(**kw):
    base = dict(n_traj=64, dt=0.02, seed=11, t_end=40.0, record_stride=10)
    base.update(kw)
    return sc.EnsembleConfig(**base)


def test_seed_determinism():
    p = ModelParams.from_ratios(n_atoms=100, g1_over_g0=0.2)
    a = sc.run_ensemble(p, _small_cfg())
    b = sc.run_ensemble(p, _small_cfg())
    np.testing.assert_array_equal(a.x2, b.x2)
    c = sc.run_ensemble(p, _small_cfg(seed=12))
    assert not np.array_equal(a.x2, c.x2)


def test_trajectory_independent_of_ensemble_size():
    p = ModelParams.from_ratios(n_atoms=100, g1_over_g0=0.2)
    one = sc.run_ensemble(p, _small_cfg(n_traj=1))
    many = sc.run_ensemble(p, _small_cfg(n_traj=5))
    # trajectory 0 is the same path in both runs
    assert one.x_final[0, 0] == many.x_final[0, 0]


def test_streams_are_distinct():
    a = rng_stream(1, 0, 0).standard_normal(8)
    b = rng_stream(1, 0, 1).standard_normal(8)
    c = rng_stream(1, 1, 0).standard_normal(8)
    assert not np.allclose(a, b) and not np.allclose(a, c)


def test_scan_groups_match_single_runs():
    p = ModelParams.from_ratios(n_atoms=100, g1_over_g0=0.2)
    w = 2 * p.omega_res
    scan = sc.run_omega_scan(p, [w, 0.9 * w], _small_cfg(n_traj=8))
    single = sc.run_ensemble(p.with_(omega=w), _small_cfg(n_traj=8))
    np.testing.assert_allclose(scan.x2[0], single.x2[0], rtol=1e-12)


def test_below_threshold_stays_order_n():
    p = ModelParams.from_ratios(n_atoms=10000, g1_over_g0=0.0)
    res = sc.run_ensemble(p, sc.EnsembleConfig(n_traj=200, dt=0.02, seed=2, t_end=600.0, record_stride=50))
    assert res.x2.max() < 50 * p.n_atoms


def test_divergent_trajectories_fail():
    p = ModelParams.from_ratios(n_atoms=100, g1_over_g0=0.2)
    cfg = _small_cfg(n_traj=4)
    # an absurd coupling makes every trajectory blow up
    with pytest.raises(IntegrationError):
        sc.run_ensemble(p.with_(g0=1e100), cfg)


# correlations and spectra ----------------------------------------------------------

def test_correlation_at_zero_lag_is_second_moment():
    p = ModelParams.from_ratios(n_atoms=100, g1_over_g0=0.2)
    res = sc.two_time_correlation(p, _small_cfg(t_end=10.0), t0=20.0, t_max=10.0)
    i0 = int(np.argmin(np.abs(res.t - 20.0)))
    assert res.c1[0, 0] == pytest.approx(res.x2[0, i0], rel=1e-12)
    assert res.c1_t[-1] == pytest.approx(10.0)


def test_correlation_free_precession():
    # g = 0: X(t + t0) = X(t0) cos(Delta t) - Y(t0) sin(Delta t); <XY> = 0, <X^2> = N
    p = _params(n_atoms=100)
    cfg = sc.EnsembleConfig(n_traj=20000, dt=0.02, seed=4, t_end=5.0, record_stride=10)
    res = sc.two_time_correlation(p, cfg, t0=5.0, t_max=60.0)
    expect = p.n_atoms * np.cos(p.delta * res.c1_t)
    err = 4 * p.n_atoms * np.sqrt(2.0 / cfg.n_traj)
    assert np.max(np.abs(res.c1[0] - expect)) < err


def test_correlation_window_validation():
    p = _params()
    with pytest.raises(ConfigurationError):
        sc.two_time_correlation(p, _small_cfg(), t0=-1.0, t_max=1.0)


@pytest.mark.parametrize("nu0", [0.3, 1.1])
def test_spectrum_of_pure_cosine(nu0):
    t = np.linspace(0, 400, 4001)
    spec = sc.spectrum_s1(t, np.cos(nu0 * t), np.linspace(0.05, 2.0, 1951))
    assert spec.peak == pytest.approx(nu0, abs=2e-3)
    assert sc.dominant_frequency(spec, nu_min=0.1) == pytest.approx(nu0, abs=2e-3)
    # first sinc sidelobe is well below the main peak
    assert spec.abs_s1.max() == pytest.approx(200.0, rel=0.01)


def test_spectrum_is_trapezoid_without_window():
    t = np.linspace(0, 3, 4)
    c = np.array([1.0, 2.0, 3.0, 4.0])
    spec = sc.spectrum_s1(t, c, [0.0])
    assert spec.s1[0] == pytest.approx(0.5 * 1 + 2 + 3 + 0.5 * 4)


def test_spectrum_rejects_nonuniform_grid():
    with pytest.raises(ConfigurationError):
        sc.spectrum_s1(np.array([0.0, 1.0, 3.0]), np.ones(3), [1.0])


# weak convergence ------------------------------------------------------------------

@pytest.mark.slow
def test_dt_halving_changes_plateau_little():
    p = ModelParams.from_ratios(n_atoms=10000, g1_over_g0=0.2)
    period = p.period
    per = int(np.ceil(period / 0.5))
    plateaus = []
    for dt_target in (0.02, 0.01):
        stride = int(np.ceil(period / per / dt_target))
        cfg = sc.EnsembleConfig(n_traj=200, dt=period / per / stride, seed=9, t_end=3000.0, record_stride=stride)
        res = sc.run_ensemble(p, cfg)
        late = res.t >= res.t[-1] - 10 * period
        plateaus.append(np.nanmean(res.x2_tav[0, late]))
    assert abs(plateaus[1] / plateaus[0] - 1) < 0.02
