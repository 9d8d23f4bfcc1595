"""Reference frames, angle arithmetic on S1, and ground/aerial state types.

Frames: world (z up), rolling (z equals world z on flat ground, separated
from world by the yaw angle psi), body (separated from rolling by the pitch
angle about the y axis).  Attitudes are stored as 3x3 rotation matrices
mapping body coordinates into world coordinates.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from enum import Enum

import numpy as np

TWO_PI = 2.0 * math.pi


class MobilityMode(Enum):
    GROUND = "g"
    AERIAL = "a"


def wrap_angle(a: float) -> float:
    """Wrap an angle to (-pi, pi]."""
    w = math.remainder(float(a), TWO_PI)
    if w <= -math.pi:
        w += TWO_PI
    return w


def s1_distance(target: float, current: float) -> float:
    """Signed minimal angle d in (-pi, pi] with current + d == target (mod 2pi)."""
    return wrap_angle(target - current)


def rot2(psi: float) -> np.ndarray:
    """2x2 rotation matrix by psi (counter-clockwise)."""
    c, s = math.cos(psi), math.sin(psi)
    return np.array([[c, -s], [s, c]])


def world_to_rolling(v: np.ndarray, yaw: float) -> np.ndarray:
    """Rotate a planar world-frame vector into the rolling frame.

    Rolling-frame coordinates are the world coordinates rotated by -yaw, so
    the rolling x axis is the vehicle's forward direction.
    """
    c, s = math.cos(yaw), math.sin(yaw)
    return np.array([c * v[0] + s * v[1], -s * v[0] + c * v[1]])


def rolling_to_world(v: np.ndarray, yaw: float) -> np.ndarray:
    """Inverse of :func:`world_to_rolling`."""
    c, s = math.cos(yaw), math.sin(yaw)
    return np.array([c * v[0] - s * v[1], s * v[0] + c * v[1]])


def rot_z(psi: float) -> np.ndarray:
    c, s = math.cos(psi), math.sin(psi)
    return np.array([[c, -s, 0.0], [s, c, 0.0], [0.0, 0.0, 1.0]])


def rot_y(theta: float) -> np.ndarray:
    c, s = math.cos(theta), math.sin(theta)
    return np.array([[c, 0.0, s], [0.0, 1.0, 0.0], [-s, 0.0, c]])


def rot_x(phi: float) -> np.ndarray:
    c, s = math.cos(phi), math.sin(phi)
    return np.array([[1.0, 0.0, 0.0], [0.0, c, -s], [0.0, s, c]])


def is_rotation(R: np.ndarray, tol: float = 1e-9) -> bool:
    """Orthonormal within tol and determinant +1."""
    R = np.asarray(R)
    if R.shape != (3, 3):
        return False
    if not np.all(np.isfinite(R)):
        return False
    err = np.abs(R.T @ R - np.eye(3)).max()
    return err <= tol and abs(np.linalg.det(R) - 1.0) <= tol


def orthonormalize(R: np.ndarray) -> np.ndarray:
    """Project a near-rotation matrix back onto SO(3) (polar decomposition)."""
    u, _, vt = np.linalg.svd(R)
    out = u @ vt
    if np.linalg.det(out) < 0.0:
        u[:, -1] *= -1.0
        out = u @ vt
    return out


def euler_zyx_from_matrix(R: np.ndarray) -> tuple[float, float, float]:
    """Decompose R = Rz(yaw) Ry(pitch) Rx(roll); returns (yaw, pitch, roll)."""
    pitch = math.asin(max(-1.0, min(1.0, -R[2, 0])))
    if abs(R[2, 0]) < 1.0 - 1e-12:
        yaw = math.atan2(R[1, 0], R[0, 0])
        roll = math.atan2(R[2, 1], R[2, 2])
    else:
        # gimbal lock: roll is unobservable, fold it into yaw
        yaw = math.atan2(-R[0, 1], R[1, 1])
        roll = 0.0
    return yaw, pitch, roll


def hat(w: np.ndarray) -> np.ndarray:
    """Skew-symmetric matrix such that hat(w) @ v == cross(w, v)."""
    return np.array(
        [
            [0.0, -w[2], w[1]],
            [w[2], 0.0, -w[0]],
            [-w[1], w[0], 0.0],
        ]
    )


def cross3(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Cross product of two 3-vectors (much faster than np.cross here)."""
    return np.array(
        [
            a[1] * b[2] - a[2] * b[1],
            a[2] * b[0] - a[0] * b[2],
            a[0] * b[1] - a[1] * b[0],
        ]
    )


def vee(W: np.ndarray) -> np.ndarray:
    return np.array([W[2, 1], W[0, 2], W[1, 0]])


@dataclass
class AerialState:
    """Full in-flight state: position/velocity in world, attitude, body rates."""

    p: np.ndarray
    v: np.ndarray
    R: np.ndarray
    omega: np.ndarray

    def __post_init__(self) -> None:
        self.p = np.asarray(self.p, dtype=float).reshape(3)
        self.v = np.asarray(self.v, dtype=float).reshape(3)
        self.R = np.asarray(self.R, dtype=float).reshape(3, 3)
        self.omega = np.asarray(self.omega, dtype=float).reshape(3)

    @property
    def yaw(self) -> float:
        return euler_zyx_from_matrix(self.R)[0]

    def is_finite(self) -> bool:
        # NaN and inf both propagate through the sum
        s = self.p.sum() + self.v.sum() + self.R.sum() + self.omega.sum()
        return math.isfinite(s)

    def copy(self) -> "AerialState":
        return AerialState(self.p.copy(), self.v.copy(), self.R.copy(), self.omega.copy())

    @staticmethod
    def hover(p: np.ndarray, yaw: float = 0.0) -> "AerialState":
        return AerialState(np.asarray(p, dtype=float), np.zeros(3), rot_z(yaw), np.zeros(3))


@dataclass
class GroundState:
    """State while rolling.

    The no-slip constraint means the velocity expressed in the rolling frame
    has zero y component; helpers that integrate or hand off ground states
    keep ``v`` exactly parallel to the heading.  ``pitch`` is the free body
    pitch about the wheel axle; its rate is carried so pitch dynamics can be
    integrated and damped.
    """

    p: np.ndarray
    v: np.ndarray
    yaw: float
    omega_z: float = 0.0
    pitch: float = 0.0
    pitch_rate: float = 0.0

    def __post_init__(self) -> None:
        self.p = np.asarray(self.p, dtype=float).reshape(2)
        self.v = np.asarray(self.v, dtype=float).reshape(2)
        self.yaw = wrap_angle(float(self.yaw))

    @property
    def forward_speed(self) -> float:
        """Signed speed along the rolling x axis."""
        return float(world_to_rolling(self.v, self.yaw)[0])

    def lateral_speed(self) -> float:
        return float(world_to_rolling(self.v, self.yaw)[1])

    def with_no_slip(self) -> "GroundState":
        """Project the velocity onto the heading (used at landing handoff)."""
        vx = self.forward_speed
        v = np.array([vx * math.cos(self.yaw), vx * math.sin(self.yaw)])
        return GroundState(self.p.copy(), v, self.yaw, self.omega_z, self.pitch, self.pitch_rate)

    def is_finite(self) -> bool:
        s = self.p.sum() + self.v.sum() + self.yaw + self.omega_z + self.pitch + self.pitch_rate
        return math.isfinite(float(s))

    def copy(self) -> "GroundState":
        return GroundState(
            self.p.copy(), self.v.copy(), self.yaw, self.omega_z, self.pitch, self.pitch_rate
        )

    @staticmethod
    def at_rest(p, yaw: float = 0.0) -> "GroundState":
        return GroundState(np.asarray(p, dtype=float), np.zeros(2), yaw)


VehicleState = AerialState | GroundState


def mode_of(state: VehicleState) -> MobilityMode:
    return MobilityMode.AERIAL if isinstance(state, AerialState) else MobilityMode.GROUND


def position3(state: VehicleState, wheel_radius: float) -> np.ndarray:
    """World position of the body origin for either mobility mode."""
    if isinstance(state, AerialState):
        return state.p.copy()
    return np.array([state.p[0], state.p[1], wheel_radius])


def embed_ground_state(g: GroundState, wheel_radius: float) -> AerialState:
    """Lift a ground state to the aerial representation (z at wheel height)."""
    p = np.array([g.p[0], g.p[1], wheel_radius])
    v = np.array([g.v[0], g.v[1], 0.0])
    R = rot_z(g.yaw) @ rot_y(g.pitch)
    # body rates for a yaw-pitch composition: omega = yaw_rate * z_w + pitch_rate * y_b
    omega_world = np.array([0.0, 0.0, g.omega_z])
    omega = R.T @ omega_world + np.array([0.0, g.pitch_rate, 0.0])
    return AerialState(p, v, R, omega)


def project_aerial_state(a: AerialState) -> GroundState:
    """Drop an aerial state onto the ground representation.

    The no-slip invariant is not enforced here; the landing handoff applies
    :meth:`GroundState.with_no_slip` once the wheels are down.
    """
    yaw, pitch, _roll = euler_zyx_from_matrix(a.R)
    omega_world = a.R @ a.omega
    return GroundState(
        p=a.p[:2].copy(),
        v=a.v[:2].copy(),
        yaw=yaw,
        omega_z=float(omega_world[2]),
        pitch=pitch,
        pitch_rate=float(a.omega[1]),
    )
