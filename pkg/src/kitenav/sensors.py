"""
Synthetic sensor suite: control-pod IMU, airspeed impeller, towpoint angles
and ship anemometer.

The IMU frame coincides with the reference frame when the pose rotation is the
identity.  Accelerometers report specific force, so a pod at rest with
``R = I`` reads ``(0, 0, -g)``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from numpy.typing import NDArray

from .dynamics import PoseTrajectory
from .geometry import wrap_angle

GRAVITY = 9.81
IMU_RATE_HZ = 200.0
DECIMATION = 20
GYRO_RANGE = math.radians(300.0)
ACCEL_RANGE = 100.0
AIRSPEED_RANGE = (5.0, 50.0)


class RateMismatch(ValueError):
    pass


class EmptyInput(ValueError):
    pass


@dataclass(frozen=True)
class ImuSample:
    omega_s: NDArray
    a_s: NDArray
    t: float


@dataclass
class ImuSeries:
    """Stacked IMU samples, ``omega_s`` and ``a_s`` of shape ``(n, 3)``."""

    t: NDArray
    omega_s: NDArray
    a_s: NDArray

    def __len__(self) -> int:
        return len(self.t)

    def __getitem__(self, k: int) -> ImuSample:
        return ImuSample(self.omega_s[k], self.a_s[k], float(self.t[k]))

    def __iter__(self):
        for k in range(len(self)):
            yield self[k]


@dataclass(frozen=True)
class ImuErrorModel:
    """Static biases plus white noise per 200 Hz sample."""

    gyro_bias: tuple[float, float, float] = (0.0, 0.0, 0.0)
    accel_bias: tuple[float, float, float] = (0.0, 0.0, 0.0)
    gyro_noise_sigma: float = 0.0
    accel_noise_sigma: float = 0.0
    seed: int = 0

    def __post_init__(self):
        if self.gyro_noise_sigma < 0 or self.accel_noise_sigma < 0:
            raise ValueError("noise sigmas must be non-negative")


@dataclass(frozen=True)
class ShipWind:
    """Apparent wind aboard the ship; ``phi_w = pi`` means wind along ``+e_x``."""

    v_w: float = 10.0
    phi_w: float = math.pi

    def __post_init__(self):
        if self.v_w < 0:
            raise ValueError("v_w must be non-negative")


@dataclass(frozen=True)
class TowpointDisturbance:
    """Residual ship motion as a sinusoid on both towpoint angles."""

    amplitude: float = 0.0
    period: float = 8.0
    phase: float = 0.0


@dataclass
class TowpointSeries:
    t: NDArray
    phi_s: NDArray
    theta_s: NDArray

    def __len__(self) -> int:
        return len(self.t)


@dataclass
class AirspeedSeries:
    t: NDArray
    v_a: NDArray


def synthesize_imu_200hz(
    truth: PoseTrajectory, err: ImuErrorModel = ImuErrorModel(), gravity: float = GRAVITY
) -> ImuSeries:
    """Gyro and accelerometer streams at 200 Hz from a pose trajectory.

    Raises
    ------
    RateMismatch
        If the trajectory is not sampled at 200 Hz.
    """
    if abs(truth.dt * IMU_RATE_HZ - 1.0) > 1e-9:
        raise RateMismatch(f"trajectory step {truth.dt} s is not 1/200 s")
    n = len(truth)
    rng = np.random.default_rng(err.seed)
    gyro_noise = rng.standard_normal((n, 3)) * err.gyro_noise_sigma
    accel_noise = rng.standard_normal((n, 3)) * err.accel_noise_sigma
    specific = truth.accel - gravity * np.array([0.0, 0.0, 1.0])
    a_body = np.einsum("nji,nj->ni", truth.R, specific)
    omega = truth.omega_body + np.asarray(err.gyro_bias, dtype=float)
    a_s = a_body + np.asarray(err.accel_bias, dtype=float)
    if err.gyro_noise_sigma > 0:
        omega = omega + gyro_noise
    if err.accel_noise_sigma > 0:
        a_s = a_s + accel_noise
    omega = np.clip(omega, -GYRO_RANGE, GYRO_RANGE)
    a_s = np.clip(a_s, -ACCEL_RANGE, ACCEL_RANGE)
    return ImuSeries(truth.t.copy(), omega, a_s)


def decimate_20(samples: ImuSeries) -> ImuSeries:
    """Average blocks of 20 samples; a trailing partial block is dropped.

    Each output carries the timestamp of the last sample of its block.
    """
    m = len(samples) // DECIMATION
    if m == 0:
        raise EmptyInput("fewer than 20 samples")
    k = m * DECIMATION
    omega = samples.omega_s[:k].reshape(m, DECIMATION, 3).mean(axis=1)
    a_s = samples.a_s[:k].reshape(m, DECIMATION, 3).mean(axis=1)
    t = samples.t[DECIMATION - 1 : k : DECIMATION].copy()
    return ImuSeries(t, omega, a_s)


def synthesize_towpoint(
    t: NDArray,
    positions: NDArray,
    ship: ShipWind = ShipWind(),
    disturbance: TowpointDisturbance | None = None,
    sigma: float = 0.0,
    seed: int = 0,
) -> TowpointSeries:
    """Towpoint azimuth and elevation from kite positions.

    The inertial azimuth ``phi`` of the tether is expressed in the ship frame
    as ``phi_s = phi - (pi - phi_w)`` so that ``phi_s + (pi - phi_w)`` recovers
    it.  ``t`` and ``positions`` are taken as given, typically at 10 Hz.
    """
    positions = np.asarray(positions, dtype=float)
    t = np.asarray(t, dtype=float)
    horizontal = np.hypot(positions[:, 0], positions[:, 1])
    phi = np.arctan2(positions[:, 1], positions[:, 0])
    theta = np.arctan2(-positions[:, 2], horizontal)
    phi_s = np.asarray(wrap_angle(phi - (math.pi - ship.phi_w)), dtype=float).reshape(-1)
    theta_s = theta.copy()
    if disturbance is not None and disturbance.amplitude != 0.0:
        d = disturbance.amplitude * np.sin(2 * math.pi * t / disturbance.period + disturbance.phase)
        phi_s = phi_s + d
        theta_s = theta_s + d
    if sigma > 0:
        rng = np.random.default_rng(seed)
        phi_s = phi_s + sigma * rng.standard_normal(len(t))
        theta_s = theta_s + sigma * rng.standard_normal(len(t))
    if disturbance is not None or sigma > 0:
        phi_s = np.asarray(wrap_angle(phi_s), dtype=float).reshape(-1)
    return TowpointSeries(t.copy(), phi_s, theta_s)


def synthesize_airspeed(t: NDArray, v_a, sigma: float = 0.0, seed: int = 0) -> AirspeedSeries:
    """Impeller reading: true air path speed plus noise, clipped to 5-50 m/s."""
    t = np.asarray(t, dtype=float)
    v = np.broadcast_to(np.asarray(v_a, dtype=float), t.shape).astype(float)
    if sigma > 0:
        v = v + sigma * np.random.default_rng(seed).standard_normal(t.shape)
    return AirspeedSeries(t.copy(), np.clip(v, *AIRSPEED_RANGE))
