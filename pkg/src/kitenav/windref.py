"""
Wind referencing of the estimator azimuth and the controller orientation.

The gravity-referenced azimuth ``phi_g`` has no absolute reference.  The
towpoint azimuth relative to the ship wind, ``phi_r = phi_s + pi - phi_w``,
does, but it is disturbed by ship motion.  A first-order complementary filter
keeps the fast part of ``phi_g`` and the slow part of ``phi_r``.

:func:`combined_step` is an experimental estimator that merges gravity and
wind referencing into a single filter on the rotation group.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace

import numpy as np
from numpy.typing import NDArray

from .geometry import (
    E_X,
    E_Z,
    GravityAngles,
    gravity_angles_from_rotation,
    gravity_to_wind,
    minimal_rotation,
    quat_exp,
    quat_identity,
    quat_mul,
    quat_normalize,
    quat_to_rotation,
    quaternion_integrate,
    rotation_from_gravity_angles,
    wrap_angle,
)
from .sensors import ImuSample, ShipWind
from .yae import (
    BIAS_CLAMP,
    MIN_AVG_ACCEL,
    MIN_INIT_ACCEL,
    Biquad,
    NearZeroAccel,
    biquad_preload,
    biquad_step,
    butterworth2_design,
)


@dataclass(frozen=True)
class WindRefConfig:
    tau: float = 100.0
    dt: float = 0.1

    def __post_init__(self):
        if not self.dt > 0:
            raise ValueError("dt must be positive")
        if not self.tau > 10.0 * self.dt:
            raise ValueError("tau must exceed ten navigation cycles")


@dataclass(frozen=True)
class WindRefState:
    offset: float = 0.0
    initialized: bool = False


@dataclass(frozen=True)
class NavOutput:
    phi_gr: float
    psi_m: float
    varphi_m: float
    vartheta_m: float


def compute_phi_r(phi_s: float, ship: ShipWind) -> float:
    """Horizontal angle of the towing line against the wind direction."""
    return wrap_angle(phi_s + math.pi - ship.phi_w)


def reference_step(
    state: WindRefState, phi_g: float, phi_r: float, cfg: WindRefConfig = WindRefConfig()
) -> tuple[WindRefState, float]:
    """One complementary-filter update; returns ``(state, phi_gr)``.

    The offset between ``phi_r`` and ``phi_g`` is lowpassed with time constant
    ``tau``, which is the same as ``HP[phi_g] + LP[phi_r]`` but keeps wrapping
    off the fast path.  The first call starts the offset at the current
    difference.
    """
    diff = wrap_angle(phi_r - phi_g)
    if not state.initialized:
        offset = diff
    else:
        offset = wrap_angle(state.offset + cfg.dt / cfg.tau * wrap_angle(diff - state.offset))
    return WindRefState(offset, True), wrap_angle(phi_g + offset)


def compute_nav_output(phi_gr: float, theta_g: float, psi_g: float) -> NavOutput:
    """Controller inputs from the referenced gravity angles.

    Raises
    ------
    DegenerateOrientation
        Propagated from :func:`kitenav.geometry.gravity_to_wind`.
    """
    w = gravity_to_wind(GravityAngles(phi_gr, theta_g, psi_g))
    return NavOutput(phi_gr, w.psi, w.varphi, w.vartheta)


# --- experimental combined estimator ---------------------------------------


@dataclass(frozen=True)
class CombinedConfig:
    """Gains of the combined gravity and wind estimator.

    ``k_a`` and ``k_w`` are the fractions of the gravity and wind direction
    errors corrected per cycle; ``k_b`` [1/s] feeds the correction into the
    gyro bias estimate.
    """

    k_a: float = 1.0
    k_w: float = 0.2
    k_b: float = 0.01
    dt: float = 0.1
    cutoff_hz: float = 0.01

    def __post_init__(self):
        if min(self.k_a, self.k_w, self.k_b) < 0:
            raise ValueError("gains must be non-negative")

    @property
    def lowpass(self) -> Biquad:
        return butterworth2_design(self.cutoff_hz, 1.0 / self.dt)


@dataclass(frozen=True)
class CombinedState:
    q_s: NDArray
    q_r: NDArray
    lp: NDArray
    a_avg: NDArray
    omega_0: NDArray

    @property
    def R(self) -> NDArray:
        return quat_to_rotation(self.q_r) @ quat_to_rotation(self.q_s)


def combined_init(
    first_accel, phi_r: float | None = None, cfg: CombinedConfig = CombinedConfig()
) -> CombinedState:
    """Level on the first reading and, if given, turn the azimuth onto ``phi_r``."""
    a = np.asarray(first_accel, dtype=float)
    if not np.linalg.norm(a) > MIN_INIT_ACCEL:
        raise NearZeroAccel("first acceleration too small to level")
    q_r = minimal_rotation(a, -E_Z)
    if phi_r is not None:
        turn = wrap_angle(phi_r - gravity_angles_from_rotation(quat_to_rotation(q_r)).phi)
        q_r = quat_normalize(quat_mul(quat_exp(E_Z * turn), q_r))
    return CombinedState(quat_identity(), q_r, biquad_preload(cfg.lowpass, a), a.copy(), np.zeros(3))


def combined_step(
    state: CombinedState,
    imu: ImuSample,
    phi_r: float,
    cfg: CombinedConfig = CombinedConfig(),
    lowpass: Biquad | None = None,
) -> tuple[CombinedState, GravityAngles]:
    """One cycle of the experimental combined estimator.

    The YAE structure is kept: gyros integrate ``R_s``, the specific force is
    lowpassed in the integration frame and ``R_r`` is steered by two vector
    pairs.  Gravity: lowpassed acceleration direction against ``-e_z``.
    Wind: the fictitious sensor ``w_s = R(phi_r, theta_g, psi_g)^T e_x``
    against ``e_x``.  The summed correction, mapped into the IMU frame, also
    drives the gyro bias estimate.
    """
    f = lowpass if lowpass is not None else cfg.lowpass
    dt = cfg.dt
    omega = np.asarray(imu.omega_s, dtype=float) - state.omega_0
    q_s = quaternion_integrate(state.q_s, omega, dt)
    R_s = quat_to_rotation(q_s)
    R_mid = quat_to_rotation(quaternion_integrate(state.q_s, omega, 0.5 * dt))
    a_r = R_mid @ np.asarray(imu.a_s, dtype=float)
    lp, a_avg = biquad_step(f, state.lp, a_r)
    R_r = quat_to_rotation(state.q_r)

    n_avg = float(np.linalg.norm(a_avg))
    if n_avg < MIN_AVG_ACCEL:
        new = replace(state, q_s=q_s, lp=lp, a_avg=a_avg)
        return new, gravity_angles_from_rotation(R_r @ R_s)

    a_0 = a_avg / n_avg
    omega_g = np.cross(a_0, -R_r[2])

    est = gravity_angles_from_rotation(R_r @ R_s)
    w_s = rotation_from_gravity_angles(GravityAngles(phi_r, est.theta, est.psi_g)).T @ E_X
    w_r = R_s @ w_s
    omega_w = np.cross(w_r, R_r[0])

    correction = cfg.k_a * omega_g + cfg.k_w * omega_w
    q_r = quaternion_integrate(state.q_r, correction, 1.0)
    # R_r corrections undo the drift of R_s, so the bias moves against them
    omega_0 = state.omega_0 - cfg.k_b * (R_s.T @ correction)
    omega_0 = np.clip(omega_0, -BIAS_CLAMP, BIAS_CLAMP)

    new = CombinedState(q_s, q_r, lp, a_avg, omega_0)
    return new, gravity_angles_from_rotation(quat_to_rotation(q_r) @ R_s)
