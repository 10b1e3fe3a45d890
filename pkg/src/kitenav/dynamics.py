"""
Kinematic kite model on the tether sphere and a figure-eight steering law.

The state is the wind-angle triple ``(varphi, vartheta, psi)``.  With air path
speed ``v_a``, tether length ``L``, glide ratio ``E`` and steering gain ``g_k``
the equations of motion are::

    dvarphi/dt  = -v_a / (L sin vartheta) * sin psi
    dvartheta/dt = v_a / L * (cos psi - tan vartheta / E)
    dpsi/dt      = g_k v_a delta + dvarphi/dt * cos vartheta
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from numpy.typing import NDArray

from .geometry import (
    WindAngles,
    position_from_wind_angles,
    rotation_from_wind_angles,
    rotation_log,
    wrap_angle,
)

POLE_EPS = 1e-6
DEFAULT_DT = 0.005


class PoleSingularity(ValueError):
    """vartheta left the band (eps, pi - eps) where the model is defined."""


class TooFewSamples(ValueError):
    pass


@dataclass(frozen=True)
class ModelParams:
    L: float = 300.0
    E: float = 5.0
    g_k: float = 0.1
    v_a: float = 20.0

    def __post_init__(self):
        if not self.L > 0:
            raise ValueError("L must be positive")
        if not self.E > 0:
            raise ValueError("E must be positive")
        if not self.v_a > 0:
            raise ValueError("v_a must be positive")
        if self.g_k == 0:
            raise ValueError("g_k must be nonzero")


@dataclass(frozen=True)
class KiteState:
    varphi: float
    vartheta: float
    psi: float
    t: float = 0.0

    def angles(self) -> WindAngles:
        return WindAngles(self.varphi, self.vartheta, self.psi)


@dataclass(frozen=True)
class FigureEightConfig:
    """Bang-bang orientation target ``+-psi_s`` switched at ``+-switch_phi``."""

    psi_s: float = 0.7
    switch_phi: float = 0.35
    k_p: float = 2.0
    delta_max: float = 1.0

    def __post_init__(self):
        if not 0.0 < self.psi_s < math.pi / 2:
            raise ValueError("psi_s must lie in (0, pi/2)")
        if not self.k_p > 0:
            raise ValueError("k_p must be positive")
        if not self.delta_max > 0:
            raise ValueError("delta_max must be positive")


def equilibrium_vartheta(E: float, psi: float = 0.0) -> float:
    """vartheta at which dvartheta/dt vanishes for a fixed psi."""
    return math.atan(E * math.cos(psi))


def _derivative(varphi, vartheta, psi, L, E, gv, v_a, delta):
    if not POLE_EPS < vartheta < math.pi - POLE_EPS:
        raise PoleSingularity(f"vartheta={vartheta!r} outside the guarded band")
    s_th = math.sin(vartheta)
    dvarphi = -v_a / (L * s_th) * math.sin(psi)
    dvartheta = v_a / L * (math.cos(psi) - math.tan(vartheta) / E)
    dpsi = gv * delta + dvarphi * math.cos(vartheta)
    return dpsi, dvartheta, dvarphi


def state_derivative(s: KiteState, p: ModelParams, delta: float) -> tuple[float, float, float]:
    """Return ``(dpsi/dt, dvartheta/dt, dvarphi/dt)`` in rad/s.

    Raises
    ------
    PoleSingularity
        If ``vartheta`` is within 1e-6 rad of 0 or pi.
    """
    return _derivative(s.varphi, s.vartheta, s.psi, p.L, p.E, p.g_k * p.v_a, p.v_a, delta)


def step_rk4(s: KiteState, p: ModelParams, delta: float, dt: float = DEFAULT_DT) -> KiteState:
    """Classical Runge-Kutta step with the steering deflection held over ``dt``."""
    if not 0.0 < dt <= 0.1:
        raise ValueError("dt must lie in (0, 0.1]")
    L, E, v_a = p.L, p.E, p.v_a
    gv = p.g_k * v_a
    x0, y0, z0 = s.varphi, s.vartheta, s.psi
    h = 0.5 * dt
    k1 = _derivative(x0, y0, z0, L, E, gv, v_a, delta)
    k2 = _derivative(x0 + h * k1[2], y0 + h * k1[1], z0 + h * k1[0], L, E, gv, v_a, delta)
    k3 = _derivative(x0 + h * k2[2], y0 + h * k2[1], z0 + h * k2[0], L, E, gv, v_a, delta)
    k4 = _derivative(x0 + dt * k3[2], y0 + dt * k3[1], z0 + dt * k3[0], L, E, gv, v_a, delta)
    c = dt / 6.0
    psi = z0 + c * (k1[0] + 2 * k2[0] + 2 * k3[0] + k4[0])
    vartheta = y0 + c * (k1[1] + 2 * k2[1] + 2 * k3[1] + k4[1])
    varphi = x0 + c * (k1[2] + 2 * k2[2] + 2 * k3[2] + k4[2])
    if not POLE_EPS < vartheta < math.pi - POLE_EPS:
        raise PoleSingularity(f"vartheta={vartheta!r} outside the guarded band")
    return KiteState(_wrap(varphi), vartheta, _wrap(psi), s.t + dt)


def _wrap(a: float) -> float:
    # scalar fast path of geometry.wrap_angle
    if -math.pi < a <= math.pi:
        return a
    return float(wrap_angle(a))


def figure_eight_steer(s: KiteState, c: FigureEightConfig, target: float) -> tuple[float, float]:
    """One evaluation of the figure-eight steering law.

    Parameters
    ----------
    s : KiteState
        Current kite state.
    c : FigureEightConfig
        Steering configuration.
    target : float
        Current orientation target, ``+psi_s`` or ``-psi_s``.

    Returns
    -------
    delta : float
        Saturated steering deflection.
    target : float
        Updated orientation target.  Positive psi drives varphi down, so the
        target turns negative once ``varphi <= -switch_phi`` and back to
        positive once ``varphi >= switch_phi``.
    """
    if s.varphi <= -c.switch_phi:
        target = -c.psi_s
    elif s.varphi >= c.switch_phi:
        target = c.psi_s
    delta = c.k_p * _wrap(target - s.psi)
    delta = min(max(delta, -c.delta_max), c.delta_max)
    return delta, target


@dataclass
class StateHistory:
    """Sampled truth trajectory with uniform step ``dt``."""

    t: NDArray
    varphi: NDArray
    vartheta: NDArray
    psi: NDArray
    delta: NDArray
    dt: float

    def __len__(self) -> int:
        return len(self.t)

    def angles(self) -> WindAngles:
        return WindAngles(self.varphi, self.vartheta, self.psi)


def simulate(
    p: ModelParams,
    steering: FigureEightConfig | None,
    duration: float,
    initial: KiteState | None = None,
    dt: float = DEFAULT_DT,
    steer_start: float = 0.0,
) -> StateHistory:
    """Integrate the kite model for ``duration`` seconds.

    The kite starts at ``initial`` (default: at rest on the wind window centre,
    ``varphi = psi = 0`` and equilibrium ``vartheta``).  Without ``steering``
    the deflection is zero throughout; otherwise the figure-eight law takes
    over from ``steer_start`` on.  Returns ``n + 1`` samples including the
    initial state.
    """
    n = int(round(duration / dt))
    if n < 1:
        raise ValueError("duration shorter than one step")
    s = initial if initial is not None else KiteState(0.0, equilibrium_vartheta(p.E), 0.0, 0.0)
    t = np.empty(n + 1)
    out = np.empty((n + 1, 4))
    target = steering.psi_s if steering is not None else 0.0
    for k in range(n + 1):
        if steering is not None and k * dt >= steer_start - 1e-12:
            delta, target = figure_eight_steer(s, steering, target)
        else:
            delta = 0.0
        t[k] = k * dt + (initial.t if initial is not None else 0.0)
        out[k] = (s.varphi, s.vartheta, s.psi, delta)
        if k < n:
            s = step_rk4(s, p, delta, dt)
    return StateHistory(t, out[:, 0], out[:, 1], out[:, 2], out[:, 3], dt)


@dataclass
class PoseTrajectory:
    """Ground-truth kinematics sampled alongside a :class:`StateHistory`.

    ``omega_body[k]`` is the constant body rate that carries ``R[k]`` into
    ``R[k + 1]`` (repeated for the last sample); ``accel`` is the inertial
    acceleration of the kite position.
    """

    t: NDArray
    position: NDArray
    R: NDArray
    omega_body: NDArray
    accel: NDArray
    dt: float

    def __len__(self) -> int:
        return len(self.t)


def pose_trajectory(history: StateHistory, p: ModelParams) -> PoseTrajectory:
    n = len(history)
    if n < 3:
        raise TooFewSamples("need at least 3 samples for finite differences")
    dt = history.dt
    angles = history.angles()
    position = position_from_wind_angles(angles, p.L)
    R = rotation_from_wind_angles(angles)
    rel = np.swapaxes(R[:-1], -1, -2) @ R[1:]
    omega = np.empty((n, 3))
    omega[:-1] = rotation_log(rel) / dt
    omega[-1] = omega[-2]
    accel = np.empty((n, 3))
    accel[1:-1] = (position[2:] - 2.0 * position[1:-1] + position[:-2]) / dt**2
    if n >= 4:
        accel[0] = (2 * position[0] - 5 * position[1] + 4 * position[2] - position[3]) / dt**2
        accel[-1] = (2 * position[-1] - 5 * position[-2] + 4 * position[-3] - position[-4]) / dt**2
    else:
        accel[0] = accel[1]
        accel[-1] = accel[1]
    return PoseTrajectory(history.t.copy(), position, R, omega, accel, dt)

