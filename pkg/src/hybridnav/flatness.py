"""Differential-flatness mappings and boundary-constrained polynomials.

Trajectories for both mobility modes are degree-9 polynomials per axis in a
flat output space: planar position for rolling, position plus yaw for flying.
Ten boundary constraints (position and velocity at both ends, zero
acceleration/jerk/snap at both ends) pin each axis polynomial uniquely, so no
cost minimization is needed for single segments.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from numpy.polynomial import polynomial as npoly

from .dynamics import GRAVITY, ControlInput, VehicleParams
from .geometry import AerialState, GroundState, cross3

DEGREE = 9
MIN_DURATION = 0.2
MAX_DURATION = 30.0

# falling factorials of tau^k (k=5..9) for derivative orders 0..4 at tau=1
_END_ROWS = np.array(
    [[math.perm(k, m) for k in range(5, 10)] for m in range(5)],
    dtype=float,
)
_END_SOLVE = np.linalg.inv(_END_ROWS)


@dataclass
class FlatPoint:
    """Value and time-derivatives 1..4 of the flat output at one instant.

    ``derivs[k]`` is the k-th derivative, each row of length ``dims``
    (2 = planar position, 4 = position + yaw).
    """

    derivs: np.ndarray
    clamped: bool = False

    def __post_init__(self) -> None:
        self.derivs = np.asarray(self.derivs, dtype=float)
        if self.derivs.shape[0] != 5 or self.derivs.shape[1] not in (2, 4):
            raise ValueError("flat point needs derivatives 0..4 of 2 or 4 dims")

    @property
    def dims(self) -> int:
        return self.derivs.shape[1]

    @property
    def position(self) -> np.ndarray:
        return self.derivs[0, : min(self.dims, 3)]

    @property
    def velocity(self) -> np.ndarray:
        return self.derivs[1, : min(self.dims, 3)]

    @property
    def acceleration(self) -> np.ndarray:
        return self.derivs[2, : min(self.dims, 3)]


@dataclass
class FlatTrajectory:
    """Per-axis degree-9 polynomial on normalized time tau = (t - t0) / T."""

    coeffs: np.ndarray  # (dims, 10)
    duration: float
    t0: float = 0.0

    def __post_init__(self) -> None:
        self.coeffs = np.asarray(self.coeffs, dtype=float)
        if self.coeffs.ndim != 2 or self.coeffs.shape[1] != DEGREE + 1:
            raise ValueError("expected (dims, 10) coefficient array")

    @property
    def dims(self) -> int:
        return self.coeffs.shape[0]

    @property
    def t_end(self) -> float:
        return self.t0 + self.duration

    @property
    def endpoint(self) -> np.ndarray:
        return self.coeffs.sum(axis=1)  # tau = 1


def fit_boundary_polynomial(
    start_pos,
    start_vel,
    end_pos,
    end_vel,
    duration: float,
    t0: float = 0.0,
) -> FlatTrajectory:
    """Fit the unique degree-9 polynomial matching the ten boundary conditions.

    Solved per axis on normalized time, which keeps the linear system
    identical (and perfectly conditioned) for every duration in range.
    """
    if not MIN_DURATION <= duration <= MAX_DURATION:
        raise ValueError(f"duration {duration} outside [{MIN_DURATION}, {MAX_DURATION}] s")
    p0 = np.atleast_1d(np.asarray(start_pos, dtype=float))
    v0 = np.atleast_1d(np.asarray(start_vel, dtype=float))
    p1 = np.atleast_1d(np.asarray(end_pos, dtype=float))
    v1 = np.atleast_1d(np.asarray(end_vel, dtype=float))
    if not (p0.shape == v0.shape == p1.shape == v1.shape):
        raise ValueError("endpoint shapes disagree")
    if not all(np.all(np.isfinite(x)) for x in (p0, v0, p1, v1)):
        raise ValueError("non-finite boundary condition")

    dims = p0.shape[0]
    coeffs = np.zeros((dims, DEGREE + 1))
    coeffs[:, 0] = p0
    coeffs[:, 1] = v0 * duration
    # remaining unknowns c5..c9 from the five tau=1 constraints
    rhs = np.zeros((5, dims))
    rhs[0] = p1 - p0 - v0 * duration
    rhs[1] = (v1 - v0) * duration
    coeffs[:, 5:] = (_END_SOLVE @ rhs).T
    return FlatTrajectory(coeffs, duration, t0)


def sample_flat(traj: FlatTrajectory, t: float) -> FlatPoint:
    """Evaluate value and derivatives 1..4 at time t (clamped to the segment)."""
    tau = (t - traj.t0) / traj.duration
    clamped = tau < 0.0 or tau > 1.0
    tau = min(max(tau, 0.0), 1.0)
    out = np.empty((5, traj.dims))
    scale = 1.0
    c = traj.coeffs.T  # npoly expects coefficients along axis 0
    for k in range(5):
        out[k] = npoly.polyval(tau, c, tensor=True) * scale
        c = npoly.polyder(c)
        scale /= traj.duration
    return FlatPoint(out, clamped=clamped)


def _unit_with_derivs(u, du, ddu):
    """Unit vector of u and its first two time derivatives."""
    n = float(np.linalg.norm(u))
    nd = float(np.dot(u, du)) / n
    ndd = (float(np.dot(du, du)) + float(np.dot(u, ddu)) - nd * nd) / n
    e = u / n
    de = du / n - u * (nd / n**2)
    dde = ddu / n - 2.0 * du * (nd / n**2) - u * (ndd / n**2) + 2.0 * u * (nd**2 / n**3)
    return e, de, dde


class FlatnessSingularity(ValueError):
    """Raised when the thrust direction is undefined (near free fall)."""


def flat_to_state_aerial(
    z: FlatPoint, params: VehicleParams
) -> tuple[AerialState, ControlInput]:
    """Map a 4-D flat point to the full aerial state and control input.

    The body z axis follows the specific-force direction; yaw fixes the
    remaining freedom; body rates and moments come from jerk and snap.
    """
    if z.dims != 4:
        raise ValueError("aerial flatness needs a 4-D flat point")
    p, dp, ddp = z.derivs[0, :3], z.derivs[1, :3], z.derivs[2, :3]
    jerk, snap = z.derivs[3, :3], z.derivs[4, :3]
    psi, dpsi, ddpsi = z.derivs[0, 3], z.derivs[1, 3], z.derivs[2, 3]

    f = ddp + np.array([0.0, 0.0, GRAVITY])
    if np.linalg.norm(f) <= 0.1 * GRAVITY:
        raise FlatnessSingularity("thrust direction undefined near free fall")
    zb, dzb, ddzb = _unit_with_derivs(f, jerk, snap)

    c, s = math.cos(psi), math.sin(psi)
    xc = np.array([c, s, 0.0])
    dxc = dpsi * np.array([-s, c, 0.0])
    ddxc = ddpsi * np.array([-s, c, 0.0]) + dpsi**2 * np.array([-c, -s, 0.0])

    yr = cross3(zb, xc)
    dyr = cross3(dzb, xc) + cross3(zb, dxc)
    ddyr = cross3(ddzb, xc) + 2.0 * cross3(dzb, dxc) + cross3(zb, ddxc)
    if np.linalg.norm(yr) < 1e-6:
        raise FlatnessSingularity("yaw direction parallel to thrust axis")
    yb, dyb, ddyb = _unit_with_derivs(yr, dyr, ddyr)

    xb = cross3(yb, zb)
    dxb = cross3(dyb, zb) + cross3(yb, dzb)
    ddxb = cross3(ddyb, zb) + 2.0 * cross3(dyb, dzb) + cross3(yb, ddzb)

    R = np.column_stack([xb, yb, zb])
    dR = np.column_stack([dxb, dyb, dzb])
    ddR = np.column_stack([ddxb, ddyb, ddzb])

    wh = R.T @ dR
    omega = np.array([wh[2, 1], wh[0, 2], wh[1, 0]])
    ah = dR.T @ dR + R.T @ ddR
    ah = 0.5 * (ah - ah.T)
    domega = np.array([ah[2, 1], ah[0, 2], ah[1, 0]])

    inertia = params.inertia
    thrust = params.mass * float(np.linalg.norm(f))
    moments = inertia * domega + cross3(omega, inertia * omega)
    state = AerialState(p, dp, R, omega)
    return state, ControlInput(thrust, moments)


def flat_to_state_ground(
    z: FlatPoint, v_min: float = 0.05
) -> tuple[GroundState, tuple[float, float], bool]:
    """Map a 2-D flat point to the rolling state and inputs (v_x, yaw rate).

    Below ``v_min`` the heading is undefined; the returned flag is False and
    the caller should hold its previous heading.  Pitch is not part of the
    ground flat map and is reported as zero.
    """
    if z.dims != 2:
        raise ValueError("ground flatness needs a 2-D flat point")
    dx, dy = z.derivs[1]
    ddx, ddy = z.derivs[2]
    speed = math.hypot(dx, dy)
    ok = speed >= v_min
    if ok:
        yaw = math.atan2(dy, dx)
        yaw_rate = (dx * ddy - dy * ddx) / (speed * speed)
    else:
        yaw = 0.0
        yaw_rate = 0.0
    state = GroundState(z.derivs[0].copy(), z.derivs[1].copy(), yaw, omega_z=yaw_rate)
    return state, (speed, yaw_rate), ok


def embed_planar_in_flat4(z: FlatPoint, height: float) -> FlatPoint:
    """Lift a planar flat point into the 4-D flat space at constant height.

    Yaw follows the velocity direction, which is how the ground flat space
    sits inside the aerial one.  Yaw derivatives above the second are unused
    downstream and set to zero.
    """
    if z.dims != 2:
        raise ValueError("expected a 2-D flat point")
    dx, dy = z.derivs[1]
    ddx, ddy = z.derivs[2]
    jx, jy = z.derivs[3]
    v2 = dx * dx + dy * dy
    if v2 < 1e-12:
        raise ValueError("heading undefined at zero speed")
    psi = math.atan2(dy, dx)
    num = dx * ddy - dy * ddx
    dpsi = num / v2
    dnum = dx * jy - dy * jx
    dv2 = 2.0 * (dx * ddx + dy * ddy)
    ddpsi = (dnum * v2 - num * dv2) / (v2 * v2)

    out = np.zeros((5, 4))
    out[:, 0] = z.derivs[:, 0]
    out[:, 1] = z.derivs[:, 1]
    out[0, 2] = height
    out[0, 3] = psi
    out[1, 3] = dpsi
    out[2, 3] = ddpsi
    return FlatPoint(out)
