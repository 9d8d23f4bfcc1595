"""Rigid-body simulation of both mobility modes, motor mixing, power model.

All integration is fixed-step RK4.  The power model is momentum-theory shaped
(P = idle + c * sum f_i^1.5) and calibrated so that hover matches the measured
flying power and the default rolling thrust matches the measured rolling
power.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .geometry import AerialState, GroundState, cross3, hat, orthonormalize

GRAVITY = 9.81

# Measured average power targets the default calibration reproduces.
FLYING_POWER_W = 971.9
ROLLING_POWER_W = 194.5


def power_coeff_for_hover(mass: float, hover_power: float, idle_power: float = 0.0) -> float:
    """Coefficient c such that a level hover draws ``hover_power`` watts."""
    per_motor = mass * GRAVITY / 4.0
    return (hover_power - idle_power) / (4.0 * per_motor**1.5)


def rolling_fraction_for_power(
    mass: float, coeff: float, rolling_power: float, idle_power: float = 0.0
) -> float:
    """Thrust fraction of hover weight that draws ``rolling_power`` watts.

    Assumes an even four-motor split: P = idle + c * F^1.5 / 2.
    """
    total = (2.0 * (rolling_power - idle_power) / coeff) ** (2.0 / 3.0)
    return total / (mass * GRAVITY)


@dataclass
class VehicleParams:
    mass: float = 4.231
    inertia_diag: tuple[float, float, float] = (0.07, 0.07, 0.12)
    arm_length: float = 0.25
    wheel_radius: float = 0.25
    max_total_thrust: float = 62.5
    yaw_torque_coeff: float = 0.016  # N*m of yaw torque per N of motor thrust
    motor_power_coeff: float = field(default=None)  # W / N^1.5, calibrated if None
    idle_power: float = 0.0
    rolling_thrust_fraction: float = field(default=None)  # calibrated if None
    ground_yaw_bandwidth: float = 0.4  # yaw response is slower on the ground
    dt: float = 0.004

    def __post_init__(self) -> None:
        if self.motor_power_coeff is None:
            self.motor_power_coeff = power_coeff_for_hover(self.mass, FLYING_POWER_W, self.idle_power)
        if self.rolling_thrust_fraction is None:
            self.rolling_thrust_fraction = rolling_fraction_for_power(
                self.mass, self.motor_power_coeff, ROLLING_POWER_W, self.idle_power
            )
        if self.mass <= 0.0:
            raise ValueError("mass must be positive")
        if self.max_total_thrust <= self.mass * GRAVITY:
            raise ValueError("max_total_thrust must exceed hover weight")
        if not 0.0 < self.rolling_thrust_fraction < 1.0:
            raise ValueError("rolling_thrust_fraction must be in (0, 1)")
        self._mix = self.mixing_matrix()
        self._mix_inv = np.linalg.inv(self._mix)

    @property
    def hover_thrust(self) -> float:
        return self.mass * GRAVITY

    @property
    def rolling_thrust(self) -> float:
        return self.rolling_thrust_fraction * self.hover_thrust

    @property
    def inertia(self) -> np.ndarray:
        return np.asarray(self.inertia_diag, dtype=float)

    def mixing_matrix(self) -> np.ndarray:
        """Maps motor thrusts to (|F|, Mx, My, Mz) for an X configuration."""
        a = self.arm_length / math.sqrt(2.0)
        k = self.yaw_torque_coeff
        return np.array(
            [
                [1.0, 1.0, 1.0, 1.0],
                [a, -a, -a, a],
                [-a, -a, a, a],
                [k, -k, k, -k],
            ]
        )


@dataclass
class ControlInput:
    """Collective thrust magnitude plus body-frame moments."""

    thrust: float
    moments: np.ndarray

    def __post_init__(self) -> None:
        self.thrust = float(self.thrust)
        self.moments = np.asarray(self.moments, dtype=float).reshape(3)

    @staticmethod
    def zero() -> "ControlInput":
        return ControlInput(0.0, np.zeros(3))

    def as_vector(self) -> np.ndarray:
        return np.array([self.thrust, *self.moments])


@dataclass
class MotorThrusts:
    f: np.ndarray
    saturated: bool = False

    def __post_init__(self) -> None:
        self.f = np.asarray(self.f, dtype=float).reshape(4)

    @property
    def total(self) -> float:
        return float(self.f.sum())


def allocate_motors(u: ControlInput, params: VehicleParams) -> MotorThrusts:
    """Solve the X-configuration mixing for per-motor thrusts.

    When the request is infeasible the collective thrust is preserved and the
    moments are scaled down until every motor stays within [0, max/4]; the
    result is flagged ``saturated``.
    """
    thrust = min(max(u.thrust, 0.0), params.max_total_thrust)
    f = params._mix_inv @ np.array([thrust, *u.moments])
    f_max = params.max_total_thrust / 4.0
    base = thrust / 4.0
    delta = f - base
    lo, hi = f.min(), f.max()
    if lo >= 0.0 and hi <= f_max and abs(u.thrust - thrust) < 1e-12:
        return MotorThrusts(f, saturated=False)
    # scale the moment contribution so every motor lands in its box
    scale = 1.0
    for d in delta:
        if d < 0.0:
            scale = min(scale, (0.0 - base) / d)
        elif d > 0.0:
            scale = min(scale, (f_max - base) / d)
    scale = max(0.0, min(1.0, scale))
    return MotorThrusts(base + scale * delta, saturated=True)


def unmix_motors(f: MotorThrusts, params: VehicleParams) -> ControlInput:
    u = params._mix @ f.f
    return ControlInput(u[0], u[1:])


def power_draw(f: MotorThrusts, params: VehicleParams) -> float:
    """Electrical power for a set of motor thrusts (momentum-theory shape)."""
    thr = np.clip(f.f, 0.0, None)
    return float(params.idle_power + params.motor_power_coeff * np.sum(thr**1.5))


def _aerial_deriv(p, v, R, omega, thrust, moments, params):
    inertia = params.inertia
    acc = np.array([0.0, 0.0, -GRAVITY]) + R[:, 2] * (thrust / params.mass)
    dR = R @ hat(omega)
    domega = (moments - cross3(omega, inertia * omega)) / inertia
    return v, acc, dR, domega


def step_aerial(
    s: AerialState, u: ControlInput, dt: float, params: VehicleParams, floor_z: float = 0.0
) -> AerialState:
    """One RK4 step of the Newton-Euler quadrotor model.

    The flat floor at ``floor_z`` acts as an inelastic contact at wheel
    height: descending through it rests the vehicle on its wheels.
    """
    if not (0.0 < dt <= 0.02):
        raise ValueError("dt must be in (0, 0.02]")
    if not s.is_finite():
        raise ValueError("non-finite aerial state")
    thrust = min(max(u.thrust, 0.0), params.max_total_thrust)
    m = u.moments

    p, v, R, w = s.p, s.v, s.R, s.omega
    k1 = _aerial_deriv(p, v, R, w, thrust, m, params)
    k2 = _aerial_deriv(
        p + 0.5 * dt * k1[0], v + 0.5 * dt * k1[1], R + 0.5 * dt * k1[2], w + 0.5 * dt * k1[3],
        thrust, m, params,
    )
    k3 = _aerial_deriv(
        p + 0.5 * dt * k2[0], v + 0.5 * dt * k2[1], R + 0.5 * dt * k2[2], w + 0.5 * dt * k2[3],
        thrust, m, params,
    )
    k4 = _aerial_deriv(
        p + dt * k3[0], v + dt * k3[1], R + dt * k3[2], w + dt * k3[3], thrust, m, params
    )
    p2 = p + dt / 6.0 * (k1[0] + 2 * k2[0] + 2 * k3[0] + k4[0])
    v2 = v + dt / 6.0 * (k1[1] + 2 * k2[1] + 2 * k3[1] + k4[1])
    R2 = orthonormalize(R + dt / 6.0 * (k1[2] + 2 * k2[2] + 2 * k3[2] + k4[2]))
    w2 = w + dt / 6.0 * (k1[3] + 2 * k2[3] + 2 * k3[3] + k4[3])

    rest_z = floor_z + params.wheel_radius
    if p2[2] < rest_z:
        p2[2] = rest_z
        if v2[2] < 0.0:
            v2[2] = 0.0
    return AerialState(p2, v2, R2, w2)


def rolling_yaw_moment(u: ControlInput, pitch: float) -> float:
    """Recover the rolling-frame z moment from body-frame Mx, Mz."""
    return -math.sin(pitch) * u.moments[0] + math.cos(pitch) * u.moments[2]


def _ground_deriv(state_vec, thrust, m_y, m_z_r, params):
    _px, _py, vx, yaw, omega_z, pitch, pitch_rate = state_vec
    iy, iz = params.inertia_diag[1], params.inertia_diag[2]
    return np.array(
        [
            vx * math.cos(yaw),
            vx * math.sin(yaw),
            thrust * math.sin(pitch) / params.mass,
            omega_z,
            params.ground_yaw_bandwidth * m_z_r / iz,
            pitch_rate,
            m_y / iy,
        ]
    )


def step_ground(
    s: GroundState, u: ControlInput, dt: float, params: VehicleParams
) -> GroundState:
    """One RK4 step of the planar no-slip rolling model.

    Forward acceleration comes from the pitched thrust vector; yaw responds
    to the rolling-frame z moment through a reduced bandwidth factor; pitch
    integrates at full rate.  Lateral velocity is identically zero and roll
    is fixed (wheels stay on the ground).
    """
    if not (0.0 < dt <= 0.02):
        raise ValueError("dt must be in (0, 0.02]")
    if not s.is_finite():
        raise ValueError("non-finite ground state")
    thrust = min(max(u.thrust, 0.0), params.max_total_thrust)
    m_y = u.moments[1]

    y = np.array([s.p[0], s.p[1], s.forward_speed, s.yaw, s.omega_z, s.pitch, s.pitch_rate])
    # the rolling-frame yaw moment depends on the instantaneous pitch
    def deriv(vec):
        m_z_r = rolling_yaw_moment(u, vec[5])
        return _ground_deriv(vec, thrust, m_y, m_z_r, params)

    k1 = deriv(y)
    k2 = deriv(y + 0.5 * dt * k1)
    k3 = deriv(y + 0.5 * dt * k2)
    k4 = deriv(y + dt * k3)
    y2 = y + dt / 6.0 * (k1 + 2 * k2 + 2 * k3 + k4)

    vx, yaw = y2[2], y2[3]
    v = np.array([vx * math.cos(yaw), vx * math.sin(yaw)])
    return GroundState(y2[:2], v, yaw, y2[4], y2[5], y2[6])
