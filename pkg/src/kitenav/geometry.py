"""
Rotations, quaternions and the two spherical parameterizations of a tethered kite.

The reference frame has ``e_x`` pointing downwind and ``e_z`` pointing down.
A kite pose is described either by gravity angles ``(phi, theta, psi_g)``
(azimuth, elevation, orientation against the horizon) or by wind angles
``(varphi, vartheta, psi)`` (position about the wind axis, angle from the wind
axis, orientation against the wind).

Quaternions are ``[w, x, y, z]`` arrays.  Rotation matrices map body vectors
into the reference frame.  Most functions broadcast over leading array
dimensions so that large batches can be transformed without Python loops.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from numpy.typing import ArrayLike, NDArray

TWO_PI = 2.0 * math.pi

E_X = np.array([1.0, 0.0, 0.0])
E_Y = np.array([0.0, 1.0, 0.0])
E_Z = np.array([0.0, 0.0, 1.0])

DEGENERATE_TOL = 1e-12
GIMBAL_TOL = 1e-9


class DegenerateOrientation(ValueError):
    """The kite sits on the wind axis where varphi and psi are not separable."""


class NonPositiveLength(ValueError):
    pass


@dataclass(frozen=True)
class GravityAngles:
    """Azimuth ``phi``, elevation ``theta`` and horizon orientation ``psi_g`` [rad]."""

    phi: float
    theta: float
    psi_g: float


@dataclass(frozen=True)
class WindAngles:
    """Wind-axis position ``varphi``, ``vartheta`` and wind orientation ``psi`` [rad]."""

    varphi: float
    vartheta: float
    psi: float


def wrap_angle(a):
    """Wrap angles to the half-open interval (-pi, pi]."""
    a = np.asarray(a, dtype=float)
    out = a - TWO_PI * np.ceil((a - math.pi) / TWO_PI)
    return float(out) if out.ndim == 0 else out


def _elementary(a, i, j) -> NDArray:
    a = np.asarray(a, dtype=float)
    c, s = np.cos(a), np.sin(a)
    m = np.zeros(a.shape + (3, 3))
    k = 3 - i - j
    m[..., k, k] = 1.0
    m[..., i, i] = c
    m[..., j, j] = c
    m[..., i, j] = -s
    m[..., j, i] = s
    return m


def rot_x(a) -> NDArray:
    """Right-handed rotation by ``a`` about the x axis."""
    return _elementary(a, 1, 2)


def rot_y(a) -> NDArray:
    return _elementary(a, 2, 0)


def rot_z(a) -> NDArray:
    return _elementary(a, 0, 1)


def rotation_from_gravity_angles(a: GravityAngles) -> NDArray:
    """Pose rotation ``R_z(phi) R_y(theta) R_x(-psi_g)``.

    Applied to the initial pose (kite at ``L e_x`` with its roll axis along
    ``-e_z``) it yields the kite pose.
    """
    return rot_z(a.phi) @ rot_y(a.theta) @ rot_x(-np.asarray(a.psi_g, dtype=float))


def rotation_from_wind_angles(a: WindAngles) -> NDArray:
    """Pose rotation ``R_x(varphi) R_y(vartheta) R_x(-psi)``."""
    return rot_x(a.varphi) @ rot_y(a.vartheta) @ rot_x(-np.asarray(a.psi, dtype=float))


def gravity_to_wind(a: GravityAngles) -> WindAngles:
    """Convert gravity angles to wind angles.

    Raises
    ------
    DegenerateOrientation
        If the kite lies (numerically) on the wind axis, ``|cos phi cos theta| >= 1 - 1e-12``.
    """
    phi = np.asarray(a.phi, dtype=float)
    theta = np.asarray(a.theta, dtype=float)
    cphi, sphi = np.cos(phi), np.sin(phi)
    cth, sth = np.cos(theta), np.sin(theta)
    c = cphi * cth
    if np.any(np.abs(c) >= 1.0 - DEGENERATE_TOL):
        raise DegenerateOrientation("kite on the wind axis: varphi and psi undefined")
    varphi = np.arctan2(sphi * cth, sth)
    vartheta = np.arccos(np.clip(c, -1.0, 1.0))
    psi = wrap_angle(np.asarray(a.psi_g, dtype=float) + np.arctan2(sphi, cphi * sth))
    if varphi.ndim == 0:
        return WindAngles(float(varphi), float(vartheta), float(psi))
    return WindAngles(varphi, vartheta, psi)


def _check_length(L: float) -> None:
    if not L > 0:
        raise NonPositiveLength(f"tether length must be positive, got {L}")


def position_from_gravity_angles(a: GravityAngles, L: float) -> NDArray:
    _check_length(L)
    phi = np.asarray(a.phi, dtype=float)
    theta = np.asarray(a.theta, dtype=float)
    return L * np.stack(
        [np.cos(phi) * np.cos(theta), np.sin(phi) * np.cos(theta), -np.sin(theta) + 0.0 * phi],
        axis=-1,
    )


def position_from_wind_angles(a: WindAngles, L: float) -> NDArray:
    _check_length(L)
    vp = np.asarray(a.varphi, dtype=float)
    vt = np.asarray(a.vartheta, dtype=float)
    return L * np.stack(
        [np.cos(vt) + 0.0 * vp, np.sin(vp) * np.sin(vt), -np.cos(vp) * np.sin(vt)], axis=-1
    )


def gravity_angles_from_rotation(R: ArrayLike, with_flag: bool = False):
    """Extract gravity angles from a pose rotation matrix.

    Inverts ``R = R_z(phi) R_y(theta) R_x(-psi_g)``.  At gimbal lock
    (``|sin theta| >= 1 - 1e-9``) only ``phi + psi_g`` or ``phi - psi_g`` is
    defined; ``psi_g`` is then set to zero and the whole rotation about the
    vertical is reported in ``phi``.

    Parameters
    ----------
    R : (..., 3, 3) array_like
        Rotation matrices.
    with_flag : bool
        Also return a boolean (array) that is true where gimbal lock occurred.
    """
    R = np.asarray(R, dtype=float)
    s = -R[..., 2, 0]
    locked = np.abs(s) >= 1.0 - GIMBAL_TOL
    theta = np.arctan2(s, np.hypot(R[..., 0, 0], R[..., 1, 0]))
    phi = np.arctan2(R[..., 1, 0], R[..., 0, 0])
    psi_g = -np.arctan2(R[..., 2, 1], R[..., 2, 2])
    if np.any(locked):
        theta = np.where(locked, np.copysign(math.pi / 2, s), theta)
        phi = np.where(locked, np.arctan2(-R[..., 0, 1], R[..., 1, 1]), phi)
        psi_g = np.where(locked, 0.0, psi_g)
    phi = wrap_angle(phi)
    psi_g = wrap_angle(psi_g)
    if np.ndim(theta) == 0:
        out = GravityAngles(float(phi), float(theta), float(psi_g))
        locked = bool(locked)
    else:
        out = GravityAngles(phi, theta, psi_g)
    return (out, locked) if with_flag else out


# --- quaternions -----------------------------------------------------------


def quat_mul(q1: ArrayLike, q2: ArrayLike) -> NDArray:
    """Hamilton product ``q1 ⊗ q2``."""
    q1 = np.asarray(q1, dtype=float)
    q2 = np.asarray(q2, dtype=float)
    w1, x1, y1, z1 = np.moveaxis(q1, -1, 0)
    w2, x2, y2, z2 = np.moveaxis(q2, -1, 0)
    return np.stack(
        [
            w1 * w2 - x1 * x2 - y1 * y2 - z1 * z2,
            w1 * x2 + x1 * w2 + y1 * z2 - z1 * y2,
            w1 * y2 - x1 * z2 + y1 * w2 + z1 * x2,
            w1 * z2 + x1 * y2 - y1 * x2 + z1 * w2,
        ],
        axis=-1,
    )


def quat_normalize(q: ArrayLike) -> NDArray:
    q = np.asarray(q, dtype=float)
    return q / np.linalg.norm(q, axis=-1, keepdims=True)


def quat_exp(rotvec: ArrayLike) -> NDArray:
    """Unit quaternion of the rotation by ``|rotvec|`` about ``rotvec``."""
    v = np.asarray(rotvec, dtype=float)
    angle = np.linalg.norm(v, axis=-1, keepdims=True)
    half = 0.5 * angle
    # sin(x/2)/x with a series fallback near zero
    small = angle < 1e-8
    safe = np.where(small, 1.0, angle)
    k = np.where(small, 0.5 - angle**2 / 48.0, np.sin(half) / safe)
    return np.concatenate([np.cos(half), k * v], axis=-1)


def quat_log(q: ArrayLike) -> NDArray:
    """Rotation vector of a unit quaternion (shortest rotation)."""
    q = np.asarray(q, dtype=float)
    q = np.where(q[..., :1] < 0.0, -q, q)
    vn = np.linalg.norm(q[..., 1:], axis=-1, keepdims=True)
    angle = 2.0 * np.arctan2(vn, q[..., :1])
    small = vn < 1e-12
    k = np.where(small, 2.0 / np.where(small, q[..., :1], 1.0), angle / np.where(small, 1.0, vn))
    return k * q[..., 1:]


def quat_to_rotation(q: ArrayLike) -> NDArray:
    q = np.asarray(q, dtype=float)
    w, x, y, z = np.moveaxis(q, -1, 0)
    return np.stack(
        [
            np.stack([1 - 2 * (y * y + z * z), 2 * (x * y - w * z), 2 * (x * z + w * y)], axis=-1),
            np.stack([2 * (x * y + w * z), 1 - 2 * (x * x + z * z), 2 * (y * z - w * x)], axis=-1),
            np.stack([2 * (x * z - w * y), 2 * (y * z + w * x), 1 - 2 * (x * x + y * y)], axis=-1),
        ],
        axis=-2,
    )


def quat_from_rotation(R: ArrayLike) -> NDArray:
    """Unit quaternion (``w >= 0``) of a rotation matrix, Shepperd's method."""
    R = np.asarray(R, dtype=float)
    tr = np.trace(R, axis1=-2, axis2=-1)
    diag = np.stack([tr, R[..., 0, 0], R[..., 1, 1], R[..., 2, 2]], axis=-1)
    idx = np.argmax(diag, axis=-1)
    q = np.empty(R.shape[:-2] + (4,))

    def sel(i):
        return idx == i

    m = sel(0)
    s = np.sqrt(1.0 + tr[m]) * 2.0
    q[m] = np.stack(
        [0.25 * s, (R[m, 2, 1] - R[m, 1, 2]) / s, (R[m, 0, 2] - R[m, 2, 0]) / s, (R[m, 1, 0] - R[m, 0, 1]) / s],
        axis=-1,
    )
    m = sel(1)
    s = np.sqrt(1.0 + R[m, 0, 0] - R[m, 1, 1] - R[m, 2, 2]) * 2.0
    q[m] = np.stack(
        [(R[m, 2, 1] - R[m, 1, 2]) / s, 0.25 * s, (R[m, 0, 1] + R[m, 1, 0]) / s, (R[m, 0, 2] + R[m, 2, 0]) / s],
        axis=-1,
    )
    m = sel(2)
    s = np.sqrt(1.0 + R[m, 1, 1] - R[m, 0, 0] - R[m, 2, 2]) * 2.0
    q[m] = np.stack(
        [(R[m, 0, 2] - R[m, 2, 0]) / s, (R[m, 0, 1] + R[m, 1, 0]) / s, 0.25 * s, (R[m, 1, 2] + R[m, 2, 1]) / s],
        axis=-1,
    )
    m = sel(3)
    s = np.sqrt(1.0 + R[m, 2, 2] - R[m, 0, 0] - R[m, 1, 1]) * 2.0
    q[m] = np.stack(
        [(R[m, 1, 0] - R[m, 0, 1]) / s, (R[m, 0, 2] + R[m, 2, 0]) / s, (R[m, 1, 2] + R[m, 2, 1]) / s, 0.25 * s],
        axis=-1,
    )
    q = np.where(q[..., :1] < 0.0, -q, q)
    return quat_normalize(q)


def rotation_log(R: ArrayLike) -> NDArray:
    """Rotation vector of a rotation matrix."""
    return quat_log(quat_from_rotation(R))


def quaternion_integrate(q: ArrayLike, omega: ArrayLike, dt: float) -> NDArray:
    """Propagate ``q`` by the body-frame rate ``omega`` held over ``dt``.

    Uses the exact exponential, ``q ⊗ exp(omega dt / 2)``, and renormalizes.
    """
    if not dt > 0:
        raise ValueError("dt must be positive")
    dq = quat_exp(np.asarray(omega, dtype=float) * dt)
    return quat_normalize(quat_mul(q, dq))


def quat_identity() -> NDArray:
    return np.array([1.0, 0.0, 0.0, 0.0])


def minimal_rotation(u: ArrayLike, v: ArrayLike) -> NDArray:
    """Quaternion of the smallest rotation taking direction ``u`` onto ``v``."""
    u = np.asarray(u, dtype=float)
    v = np.asarray(v, dtype=float)
    u = u / np.linalg.norm(u)
    v = v / np.linalg.norm(v)
    c = float(np.dot(u, v))
    if c < -1.0 + 1e-12:
        # antiparallel: any perpendicular axis does
        axis = np.cross(u, E_X)
        if np.linalg.norm(axis) < 1e-6:
            axis = np.cross(u, E_Y)
        axis /= np.linalg.norm(axis)
        return np.concatenate([[0.0], axis])
    q = np.concatenate([[1.0 + c], np.cross(u, v)])
    return quat_normalize(q)
