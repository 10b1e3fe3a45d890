"""
Yaw angle estimator.

Attitude is kept as two rotations.  ``R_s`` integrates the bias-corrected gyro
rates and maps the IMU frame into a drifting integration frame.  ``R_r`` maps
the integration frame into the gravity-referenced frame; it is steered so that
the heavily lowpassed specific force, taken in the integration frame, points
to ``-e_z``.  Dragging of the instantaneous acceleration against its average
feeds a slow gyro bias integrator.  The attitude output is ``R_r R_s``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace

import numpy as np
from numpy.typing import NDArray

from .geometry import (
    E_Z,
    GravityAngles,
    gravity_angles_from_rotation,
    minimal_rotation,
    quat_identity,
    quat_to_rotation,
    quaternion_integrate,
)
from .sensors import ImuSample

BIAS_CLAMP = math.radians(5.0)
MIN_INIT_ACCEL = 1.0
MIN_AVG_ACCEL = 0.5


class InvalidCutoff(ValueError):
    pass


class NearZeroAccel(ValueError):
    pass


class NotInitialized(RuntimeError):
    pass


@dataclass(frozen=True)
class Biquad:
    """Second-order section ``(b0, b1, b2) / (1, a1, a2)``."""

    b0: float
    b1: float
    b2: float
    a1: float
    a2: float

    @property
    def dc_gain(self) -> float:
        return (self.b0 + self.b1 + self.b2) / (1.0 + self.a1 + self.a2)


def butterworth2_design(cutoff_hz: float, sample_hz: float) -> Biquad:
    """Second-order Butterworth lowpass by prewarped bilinear transform.

    The numerator is derived from the denominator so that the DC gain is one
    to rounding, which matters at cutoffs far below the sample rate.
    """
    if not 0.0 < cutoff_hz < 0.5 * sample_hz:
        raise InvalidCutoff(f"cutoff {cutoff_hz} Hz outside (0, {0.5 * sample_hz}) Hz")
    k = math.tan(math.pi * cutoff_hz / sample_hz)
    norm = 1.0 / (1.0 + math.sqrt(2.0) * k + k * k)
    a1 = 2.0 * (k * k - 1.0) * norm
    a2 = (1.0 - math.sqrt(2.0) * k + k * k) * norm
    b0 = 0.25 * (1.0 + a1 + a2)
    return Biquad(b0, 2.0 * b0, b0, a1, a2)


def biquad_preload(f: Biquad, x: NDArray) -> NDArray:
    """Transposed direct-form II state at rest on the constant input ``x``.

    The state is kept relative to ``x`` (stored as the last row), so a
    constant input is an exact fixed point instead of one to rounding.  With
    a pole this close to one, rounding residue would otherwise be amplified
    by the large recursion gain.
    """
    x = np.asarray(x, dtype=float)
    return np.stack([np.zeros_like(x), np.zeros_like(x), x])


def biquad_step(f: Biquad, z: NDArray, x: NDArray) -> tuple[NDArray, NDArray]:
    """Filter one sample; returns ``(new_state, output)``."""
    u = x - z[2]
    v = f.b0 * u + z[0]
    z1 = f.b1 * u - f.a1 * v + z[1]
    z2 = f.b2 * u - f.a2 * v
    return np.stack([z1, z2, z[2]]), z[2] + v


@dataclass(frozen=True)
class YaeConfig:
    dt: float = 0.1
    cutoff_hz: float = 0.01
    gamma: float = 0.003
    r_r_gain: float = 1.0

    def __post_init__(self):
        if not self.dt > 0:
            raise ValueError("dt must be positive")
        if not 0.0 < self.cutoff_hz < 0.5 / self.dt:
            raise InvalidCutoff("cutoff must lie below the Nyquist rate of the navigation cycle")
        if self.gamma < 0:
            raise ValueError("gamma must be non-negative")

    @property
    def lowpass(self) -> Biquad:
        return butterworth2_design(self.cutoff_hz, 1.0 / self.dt)


@dataclass(frozen=True)
class YaeState:
    q_s: NDArray
    q_r: NDArray
    lp: NDArray  # (2, 3) biquad state, one column per axis
    a_avg: NDArray
    omega_0: NDArray
    initialized: bool = True

    @property
    def R_s(self) -> NDArray:
        return quat_to_rotation(self.q_s)

    @property
    def R_r(self) -> NDArray:
        return quat_to_rotation(self.q_r)

    @property
    def R(self) -> NDArray:
        return self.R_r @ self.R_s


@dataclass(frozen=True)
class YaeDiagnostics:
    a_r: NDArray
    a_avg: NDArray
    a_0: NDArray
    delta_a: NDArray
    Omega: NDArray
    delta_a_r: NDArray
    Omega_r: NDArray
    referenced: bool = True

    FIELDS = ("a_r", "a_avg", "a_0", "delta_a", "Omega", "delta_a_r", "Omega_r")


def yae_init(first_accel, cfg: YaeConfig = YaeConfig()) -> YaeState:
    """Start the estimator from the first accelerometer reading.

    ``R_s`` starts at identity, ``R_r`` is the smallest rotation taking the
    reading onto ``-e_z`` and the lowpass sits at rest on the reading.
    """
    a = np.asarray(first_accel, dtype=float)
    if not np.linalg.norm(a) > MIN_INIT_ACCEL:
        raise NearZeroAccel(f"|first_accel| = {np.linalg.norm(a):.3g} m/s^2 too small to level")
    q_r = minimal_rotation(a, -E_Z)
    return YaeState(
        q_s=quat_identity(),
        q_r=q_r,
        lp=biquad_preload(cfg.lowpass, a),
        a_avg=a.copy(),
        omega_0=np.zeros(3),
    )


def estimate_gravity_direction(state: YaeState) -> NDArray:
    """Unit gravity (specific force) direction in the integration frame."""
    n = np.linalg.norm(state.a_avg)
    if n < MIN_AVG_ACCEL:
        raise NearZeroAccel("averaged acceleration too small for a gravity estimate")
    return state.a_avg / n


_ZERO = np.zeros(3)


def yae_step(
    state: YaeState, imu: ImuSample, cfg: YaeConfig = YaeConfig(), lowpass: Biquad | None = None
) -> tuple[YaeState, GravityAngles, YaeDiagnostics]:
    """Advance the estimator by one navigation cycle.

    If the averaged acceleration collapses below 0.5 m/s^2 (slack tether) the
    cycle only integrates the gyros; referencing and bias estimation resume
    on their own once the average recovers.
    """
    if not state.initialized:
        raise NotInitialized("call yae_init first")
    f = lowpass if lowpass is not None else cfg.lowpass
    dt = cfg.dt

    omega = np.asarray(imu.omega_s, dtype=float) - state.omega_0
    q_s = quaternion_integrate(state.q_s, omega, dt)
    R_s = quat_to_rotation(q_s)

    # the accelerations are block averages, so rotate them with the mid-cycle attitude
    R_mid = quat_to_rotation(quaternion_integrate(state.q_s, omega, 0.5 * dt))
    a_r = R_mid @ np.asarray(imu.a_s, dtype=float)
    lp, a_avg = biquad_step(f, state.lp, a_r)

    n_avg = float(np.linalg.norm(a_avg))
    if n_avg < MIN_AVG_ACCEL:
        new = replace(state, q_s=q_s, lp=lp, a_avg=a_avg)
        angles = gravity_angles_from_rotation(quat_to_rotation(state.q_r) @ R_s)
        diag = YaeDiagnostics(a_r, a_avg, _ZERO, _ZERO, _ZERO, _ZERO, _ZERO, referenced=False)
        return new, angles, diag

    a_0 = a_avg / n_avg
    R_r = quat_to_rotation(state.q_r)
    # R_r^T (-e_z) is minus the last row of R_r
    delta_a = a_0 + R_r[2]
    Omega = -np.cross(a_0, delta_a)
    q_r = quaternion_integrate(state.q_r, Omega, cfg.r_r_gain)

    delta_a_r = a_r - a_avg
    n_r2 = float(a_r @ a_r)
    Omega_r = np.cross(a_r, delta_a_r) / n_r2 if n_r2 > 0.0 else _ZERO

    omega_0 = state.omega_0 + dt * cfg.gamma * (R_s.T @ Omega_r)
    omega_0 = np.clip(omega_0, -BIAS_CLAMP, BIAS_CLAMP)

    R = quat_to_rotation(q_r) @ R_s
    angles = gravity_angles_from_rotation(R)
    new = YaeState(q_s=q_s, q_r=q_r, lp=lp, a_avg=a_avg, omega_0=omega_0)
    diag = YaeDiagnostics(a_r, a_avg, a_0, delta_a, Omega, delta_a_r, Omega_r)
    return new, angles, diag
