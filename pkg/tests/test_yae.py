import dataclasses
import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from scipy import signal

from kitenav.geometry import (
    E_Z,
    quat_exp,
    quat_identity,
    rotation_from_wind_angles,
)
from kitenav.sensors import ImuErrorModel, ImuSample, decimate_20, synthesize_imu_200hz
from kitenav.yae import (
    BIAS_CLAMP,
    InvalidCutoff,
    NearZeroAccel,
    NotInitialized,
    YaeConfig,
    biquad_preload,
    biquad_step,
    butterworth2_design,
    estimate_gravity_direction,
    yae_init,
    yae_step,
)

G = np.array([0.0, 0.0, -9.81])
CFG = YaeConfig()


def run_filter(f, x):
    z = biquad_preload(f, np.zeros(1))
    y = np.empty(len(x))
    for k, v in enumerate(x):
        z, out = biquad_step(f, z, np.array([v]))
        y[k] = out[0]
    return y


def measured_gain_db(f, freq, fs=10.0, cycles=30):
    t = np.arange(int(cycles * fs / freq)) / fs
    y = run_filter(f, np.sin(2 * np.pi * freq * t))
    tail = t >= t[-1] - 10 / freq
    # least-squares amplitude over the last ten cycles
    A = np.column_stack([np.sin(2 * np.pi * freq * t[tail]), np.cos(2 * np.pi * freq * t[tail])])
    c, *_ = np.linalg.lstsq(A, y[tail], rcond=None)
    return -20 * np.log10(np.hypot(*c))


def analog_attenuation_db(freq, fc):
    return 10 * np.log10(1 + (freq / fc) ** 4)


# --- filter ----------------------------------------------------------------


def test_butterworth_matches_scipy_design():
    f = butterworth2_design(0.01, 10.0)
    b, a = signal.butter(2, 0.01, fs=10.0)
    np.testing.assert_allclose([f.b0, f.b1, f.b2], b, rtol=1e-9)
    np.testing.assert_allclose([1.0, f.a1, f.a2], a, rtol=1e-9)


@pytest.mark.parametrize("fc, fs", [(0.01, 10.0), (1.0, 10.0), (3.0, 200.0)])
def test_butterworth_dc_gain(fc, fs):
    f = butterworth2_design(fc, fs)
    assert f.dc_gain == pytest.approx(1.0, abs=1e-14)
    y = run_filter(f, np.ones(int(40 * fs / fc)))
    assert abs(y[-1] - 1.0) < 1e-9


@pytest.mark.parametrize("ratio, expected, tol", [(1.0, 3.0, 0.3), (10.0, 40.0, 1.0)])
def test_butterworth_attenuation(ratio, expected, tol):
    f = butterworth2_design(0.01, 10.0)
    att = measured_gain_db(f, 0.01 * ratio)
    assert att == pytest.approx(expected, abs=tol)
    assert att == pytest.approx(analog_attenuation_db(0.01 * ratio, 0.01), abs=0.1)


def test_preload_is_exact_fixed_point():
    f = butterworth2_design(0.01, 10.0)
    x = np.array([1.5, -2.0, 9.81])
    z = biquad_preload(f, x)
    for _ in range(1000):
        z2, y = biquad_step(f, z, x)
        np.testing.assert_array_equal(y, x)
        np.testing.assert_array_equal(z2, z)


@pytest.mark.parametrize("fc", [0.0, -1.0, 5.0, 7.0])
def test_invalid_cutoff(fc):
    with pytest.raises(InvalidCutoff):
        butterworth2_design(fc, 10.0)


def test_config_validation():
    with pytest.raises(InvalidCutoff):
        YaeConfig(cutoff_hz=6.0)
    with pytest.raises(ValueError):
        YaeConfig(gamma=-0.1)


# --- init ------------------------------------------------------------------


def test_init_aligned():
    s = yae_init(G)
    np.testing.assert_allclose(s.q_r, quat_identity(), atol=1e-15)
    np.testing.assert_array_equal(s.q_s, quat_identity())
    np.testing.assert_array_equal(s.omega_0, 0.0)


def test_init_quarter_turn_about_y():
    s = yae_init([9.81, 0.0, 0.0])
    # right-handed: R_y(+pi/2) takes +x onto -z
    expected = quat_exp(math.pi / 2 * np.array([0.0, 1.0, 0.0]))
    np.testing.assert_allclose(s.q_r, expected, atol=1e-12)
    np.testing.assert_allclose(s.R_r @ np.array([1.0, 0, 0]), -E_Z, atol=1e-12)


@given(st.lists(st.floats(-50, 50), min_size=3, max_size=3))
def test_init_levels_any_reading(a):
    a = np.array(a)
    if np.linalg.norm(a) <= 1.0:
        with pytest.raises(NearZeroAccel):
            yae_init(a)
        return
    s = yae_init(a)
    np.testing.assert_allclose(s.R_r @ (a / np.linalg.norm(a)), -E_Z, atol=1e-9)


def test_init_preload_passes_first_sample():
    a = np.array([1.0, -3.0, -9.0])
    s = yae_init(a)
    _, _, d = yae_step(s, ImuSample(np.zeros(3), a, 0.1))
    np.testing.assert_allclose(d.a_avg, a, atol=1e-12)


def test_step_requires_init():
    s = dataclasses.replace(yae_init(G), initialized=False)
    with pytest.raises(NotInitialized):
        yae_step(s, ImuSample(np.zeros(3), G, 0.1))


# --- step ------------------------------------------------------------------


def test_stationary_fixed_point():
    s0 = yae_init(G)
    s, ang, d = yae_step(s0, ImuSample(np.zeros(3), G, 0.1))
    for name in d.FIELDS:
        if name in ("a_r", "a_avg", "a_0"):
            continue
        np.testing.assert_array_equal(getattr(d, name), 0.0)
    assert (ang.phi, ang.theta, ang.psi_g) == (0.0, 0.0, 0.0)
    np.testing.assert_array_equal(s.q_r, s0.q_r)
    np.testing.assert_array_equal(s.q_s, s0.q_s)
    np.testing.assert_array_equal(s.omega_0, s0.omega_0)


@pytest.mark.parametrize("eps", [1e-4, 1e-2, 0.1, 0.3])
def test_small_tilt_correction(eps):
    a0 = np.array([math.sin(eps), 0.0, -math.cos(eps)])
    s = yae_init(G)
    s = dataclasses.replace(s, lp=biquad_preload(CFG.lowpass, 9.81 * a0))
    _, _, d = yae_step(s, ImuSample(np.zeros(3), 9.81 * a0, 0.1))
    np.testing.assert_allclose(d.a_0, a0, atol=1e-12)
    np.testing.assert_allclose(d.Omega, [0.0, math.sin(eps), 0.0], atol=1e-12)
    # linearization: -Omega x a_0 reproduces delta_a up to second order
    np.testing.assert_allclose(-np.cross(d.Omega, d.a_0), d.delta_a, atol=eps**2)


@pytest.mark.parametrize("gain", [0.25, 0.5, 0.8])
def test_feedback_contraction_ratio(gain):
    cfg = YaeConfig(r_r_gain=gain, gamma=0.0)
    a = 9.81 * np.array([0.02, -0.015, -1.0]) / np.linalg.norm([0.02, -0.015, -1.0])
    s = yae_init(G, cfg)
    s = dataclasses.replace(s, lp=biquad_preload(cfg.lowpass, a))
    norms = []
    for _ in range(6):
        s, _, d = yae_step(s, ImuSample(np.zeros(3), a, 0.1), cfg)
        norms.append(np.linalg.norm(d.delta_a))
    ratios = np.array(norms[1:]) / np.array(norms[:-1])
    np.testing.assert_allclose(ratios, 1 - gain, atol=2e-3)


def test_full_gain_levels_in_one_step():
    a = 9.81 * np.array([0.3, 0.1, -0.9]) / np.linalg.norm([0.3, 0.1, -0.9])
    s = yae_init(G)
    s = dataclasses.replace(s, lp=biquad_preload(CFG.lowpass, a))
    s, _, _ = yae_step(s, ImuSample(np.zeros(3), a, 0.1))
    tilt = math.acos(np.clip(-(s.R_r @ (a / 9.81))[2], -1, 1))
    # residual of a rotation by sin(alpha) instead of alpha
    alpha = math.acos(0.9 / np.linalg.norm([0.3, 0.1, -0.9]))
    assert tilt == pytest.approx(alpha - math.sin(alpha), abs=1e-9)


def test_gyro_integration_tracks_attitude():
    s = yae_init(G, YaeConfig(gamma=0.0))
    w = np.array([0.0, 0.0, 0.3])
    for k in range(20):
        s, ang, _ = yae_step(s, ImuSample(w, G, 0.1 * (k + 1)), YaeConfig(gamma=0.0))
    assert ang.phi == pytest.approx(0.6, abs=1e-9)


def test_bias_clamp():
    s = dataclasses.replace(yae_init(G), omega_0=np.array([1.0, -1.0, 0.0]))
    s, _, _ = yae_step(s, ImuSample(np.zeros(3), G, 0.1))
    assert np.abs(s.omega_0).max() <= BIAS_CLAMP


def test_collapsed_average_only_integrates():
    s = yae_init(G)
    s = dataclasses.replace(s, lp=biquad_preload(CFG.lowpass, np.array([0.0, 0.0, -0.1])))
    q_r = s.q_r.copy()
    w = np.array([0.1, 0.0, 0.0])
    s2, _, d = yae_step(s, ImuSample(w, np.zeros(3), 0.1))
    assert not d.referenced
    np.testing.assert_array_equal(s2.q_r, q_r)
    np.testing.assert_array_equal(s2.omega_0, s.omega_0)
    assert not np.array_equal(s2.q_s, s.q_s)
    with pytest.raises(NearZeroAccel):
        estimate_gravity_direction(s2)


def test_estimate_gravity_direction_stationary():
    s, _, _ = yae_step(yae_init(G), ImuSample(np.zeros(3), G, 0.1))
    a0 = estimate_gravity_direction(s)
    np.testing.assert_array_equal(a0, [0.0, 0.0, -1.0])
    np.testing.assert_array_equal(s.R_r @ a0, -E_Z)


def test_untethered_lateral_acceleration_biases_estimate():
    a = np.array([2.0, 0.0, -9.81])
    s = yae_init(a)
    for k in range(100):
        s, ang, _ = yae_step(s, ImuSample(np.zeros(3), a, 0.1 * k))
    # a stationary pod reads pure gravity, so the estimate is tilted by the lateral term
    assert abs(ang.theta) == pytest.approx(math.atan2(2.0, 9.81), abs=1e-9)


# --- closed loop on simulated flight ---------------------------------------


def run_yae(imu, cfg=CFG):
    s = yae_init(imu.a_s[0], cfg)
    lp = cfg.lowpass
    n = len(imu)
    R = np.empty((n, 3, 3))
    perp = np.empty(n)
    unit = np.empty(n)
    level = np.empty(n)
    for k in range(n):
        s, _, d = yae_step(s, imu[k], cfg, lp)
        R[k] = s.R
        perp[k] = abs(d.Omega @ d.a_0)
        unit[k] = abs(np.linalg.norm(d.a_0) - 1.0)
        level[k] = math.degrees(math.acos(np.clip(-(s.R_r @ estimate_gravity_direction(s))[2], -1, 1)))
    return s, R, perp, unit, level


def tilt_error_deg(R_est, R_true):
    up_est = np.einsum("nji,j->ni", R_est, E_Z)
    up_true = np.einsum("nji,j->ni", R_true, E_Z)
    return np.degrees(np.arccos(np.clip(np.sum(up_est * up_true, axis=1), -1, 1)))


@pytest.fixture(scope="module")
def flight(figure_eight_history, figure_eight_pose):
    imu = decimate_20(synthesize_imu_200hz(figure_eight_pose))
    idx = 20 * (np.arange(len(imu)) + 1)
    R_true = rotation_from_wind_angles(figure_eight_history.angles())[idx]
    return imu, R_true, figure_eight_history.t[idx]


def test_closed_loop_diagnostic_invariants(flight):
    imu, _, _ = flight
    _, _, perp, unit, level = run_yae(imu)
    assert perp.max() < 1e-9
    assert unit.max() < 1e-9
    # R_r maps the averaged direction onto -e_z up to the third-order residual
    assert level.max() < 0.5


def test_gravity_only_specific_force_recovers_attitude(figure_eight_history, figure_eight_pose, flight):
    _, R_true, t = flight
    still = dataclasses.replace(figure_eight_pose, accel=np.zeros_like(figure_eight_pose.accel))
    imu = decimate_20(synthesize_imu_200hz(still))
    _, R, _, _, _ = run_yae(imu)
    m = t >= 60.0
    err = tilt_error_deg(R[m], R_true[m])
    assert err.max() < 0.05
    az_true = np.arctan2(R_true[m, 1, 0], R_true[m, 0, 0])
    az_est = np.arctan2(R[m, 1, 0], R[m, 0, 0])
    assert np.degrees(np.abs(np.angle(np.exp(1j * (az_est - az_true))))).max() < 0.05


@pytest.mark.xfail(
    strict=True,
    reason="lateral figure-eight acceleration leaks through the 0.01 Hz lowpass (about 1 deg tilt); see notes/decisions.md",
)
def test_gravity_direction_error_on_flight(flight):
    imu, R_true, t = flight
    _, R, _, _, _ = run_yae(imu)
    m = t >= 60.0
    assert tilt_error_deg(R[m], R_true[m]).max() < 0.5


@pytest.mark.slow
def test_bias_converges_single_horizontal_axis():
    from kitenav.harness import ScenarioConfig, run_scenario

    b = math.radians(0.2)
    r = run_scenario(ScenarioConfig(duration=2000.0, imu_error=ImuErrorModel(gyro_bias=(0.0, b, 0.0)))).report
    assert r.bias_tail_mean_deg_s[1] == pytest.approx(0.2, rel=0.2)
