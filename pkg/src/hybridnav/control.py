"""Hybrid rolling/flying controller and take-off / landing transitions.

The flying side is a standard cascade: P position, PI velocity with
feedforward, an acceleration mixer producing collective thrust and a desired
attitude, P attitude, and PI body rates.  The rolling side reuses the same
architecture with the planar position loop feeding a yaw controller on S1 and
a velocity loop whose acceleration request is turned into a body pitch by the
acceleration mixer; the pitch PID then closes the loop.  Rolling thrust is
held constant (gravity is carried by the ground).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from enum import Enum

import numpy as np

from .dynamics import GRAVITY, ControlInput, VehicleParams
from .geometry import (
    AerialState,
    GroundState,
    MobilityMode,
    cross3,
    s1_distance,
    world_to_rolling,
)


class Transition(Enum):
    NONE = "none"
    TAKEOFF = "takeoff"
    LAND = "land"


@dataclass
class Setpoint:
    """Desired state handed from the local planner to the controller."""

    p: np.ndarray
    v_ff: np.ndarray
    a_ff: np.ndarray
    yaw: float | None
    mode: MobilityMode
    transition: Transition = Transition.NONE
    position_valid: bool = True

    def __post_init__(self) -> None:
        self.p = np.asarray(self.p, dtype=float).reshape(3)
        self.v_ff = np.asarray(self.v_ff, dtype=float).reshape(3)
        self.a_ff = np.asarray(self.a_ff, dtype=float).reshape(3)
        if self.transition is Transition.TAKEOFF and self.mode is not MobilityMode.AERIAL:
            raise ValueError("take-off setpoints must target aerial mode")
        if self.transition is Transition.LAND and self.mode is not MobilityMode.GROUND:
            raise ValueError("landing setpoints must target ground mode")

    @staticmethod
    def hold(position, yaw: float | None, mode: MobilityMode) -> "Setpoint":
        return Setpoint(np.asarray(position, dtype=float), np.zeros(3), np.zeros(3), yaw, mode)


@dataclass
class RollingGains:
    pos_kp: float = 1.2
    yaw_kp: float = 1.9
    yaw_kd: float = 1.1
    vel_kd: float = 2.0
    vel_ki: float = 0.2
    pitch_kp: float = 8.0
    pitch_kd: float = 1.4
    pitch_ki: float = 1.0


@dataclass
class FlyingGains:
    pos_kp: float = 1.4
    vel_kp: float = 3.0
    vel_ki: float = 0.4
    att_kp: float = 9.0
    rate_kp: float = 30.0  # angular acceleration per rad/s of rate error
    rate_ki: float = 10.0


@dataclass
class ControlLimits:
    v_max_ground: float = 0.35
    v_max_xy: float = 0.4
    v_max_z: float = 0.5
    a_max_xy: float = 2.5
    tilt_max: float = 0.5
    pitch_max_rolling: float = 0.35
    yaw_deadband: float = 0.15  # atan2 is ill-conditioned near the goal
    integral_clamp: float = 2.0
    deriv_filter_tau: float = 0.05
    takeoff_rate: float = 0.4
    takeoff_clearance: float = 0.55
    land_speed: float = 0.25
    land_tol: float = 0.05
    land_dwell: float = 1.0
    transition_timeout: float = 15.0


@dataclass
class ControllerState:
    """Integrators and filters advanced once per 250 Hz tick."""

    chi1: float = 0.0  # rolling velocity-error integral
    chi2: float = 0.0  # rolling pitch-error integral
    vel_int: np.ndarray = field(default_factory=lambda: np.zeros(3))
    rate_int: np.ndarray = field(default_factory=lambda: np.zeros(3))
    prev_yaw_err: float | None = None
    yaw_err_rate: float = 0.0
    yaw_hold: float | None = None
    transition_time: float = 0.0
    takeoff_z_ref: float | None = None
    land_dwell: float = 0.0
    hold_xy: np.ndarray | None = None

    def reset_transition(self) -> None:
        self.transition_time = 0.0
        self.takeoff_z_ref = None
        self.land_dwell = 0.0
        self.hold_xy = None

    def reset_integrators(self) -> None:
        self.chi1 = 0.0
        self.chi2 = 0.0
        self.vel_int = np.zeros(3)
        self.rate_int = np.zeros(3)
        self.prev_yaw_err = None
        self.yaw_err_rate = 0.0


def _clamp(x: float, lim: float) -> float:
    return max(-lim, min(lim, x))


def rolling_position(sp: Setpoint, est: GroundState, gains: RollingGains, limits: ControlLimits) -> float:
    """Desired forward speed from the planar position error (rolling frame x)."""
    e_w = sp.p[:2] - est.p
    e_r = world_to_rolling(e_w, est.yaw)
    return _clamp(gains.pos_kp * e_r[0], limits.v_max_ground)


def rolling_yaw(
    sp: Setpoint,
    est: GroundState,
    gains: RollingGains,
    state: ControllerState,
    limits: ControlLimits,
    dt: float,
) -> float:
    """Rolling-frame z moment from a PD law on the S1 heading error.

    Inside the position deadband the bearing to the goal is ill-defined, so
    the controller just damps the yaw rate to hold the current heading.
    """
    e_w = sp.p[:2] - est.p
    if float(np.hypot(e_w[0], e_w[1])) < limits.yaw_deadband:
        state.prev_yaw_err = None
        state.yaw_err_rate = 0.0
        return -gains.yaw_kd * est.omega_z
    psi_d = math.atan2(e_w[1], e_w[0])
    err = s1_distance(psi_d, est.yaw)
    if state.prev_yaw_err is None:
        raw = 0.0
    else:
        raw = s1_distance(err, state.prev_yaw_err) / dt
    alpha = dt / (limits.deriv_filter_tau + dt)
    state.yaw_err_rate += alpha * (raw - state.yaw_err_rate)
    state.prev_yaw_err = err
    return gains.yaw_kp * err + gains.yaw_kd * state.yaw_err_rate


def rolling_velocity(
    v_d: float,
    v_ff: float,
    est: GroundState,
    gains: RollingGains,
    state: ControllerState,
    limits: ControlLimits,
    dt: float,
) -> float:
    """Desired forward acceleration from the velocity error (PI with feedforward).

    The combined command (feedback plus feedforward) saturates at the ground
    speed limit so a setpoint leading the vehicle cannot push it past cruise.
    """
    v_cmd = _clamp(v_d + v_ff, limits.v_max_ground)
    e_dot = v_cmd - est.forward_speed
    state.chi1 = _clamp(state.chi1 + e_dot * dt, limits.integral_clamp)
    return gains.vel_kd * e_dot + gains.vel_ki * state.chi1


def rolling_mixer(
    a_x: float,
    m_z_rolling: float,
    est: GroundState,
    params: VehicleParams,
    limits: ControlLimits,
) -> tuple[float, float, float, float, bool]:
    """Turn a forward-acceleration request into pitch plus body moments.

    Returns (pitch_d, thrust, m_x_body, m_z_body, clamped).  Thrust is the
    constant rolling setting; the asin argument is clamped to the pitch
    limit so the wheels stay loaded.
    """
    thrust = params.rolling_thrust
    arg = a_x * params.mass / thrust
    lim = math.sin(limits.pitch_max_rolling)
    clamped = abs(arg) > lim
    pitch_d = math.asin(_clamp(arg, lim))
    # rolling-frame z moment expressed in body axes at the current pitch
    m_x = -math.sin(est.pitch) * m_z_rolling
    m_z = math.cos(est.pitch) * m_z_rolling
    return pitch_d, thrust, m_x, m_z, clamped


def rolling_pitch(
    pitch_d: float,
    est: GroundState,
    gains: RollingGains,
    state: ControllerState,
    limits: ControlLimits,
    dt: float,
) -> float:
    """Body y moment from the pitch PID."""
    err = s1_distance(pitch_d, est.pitch)
    state.chi2 = _clamp(state.chi2 + err * dt, limits.integral_clamp)
    return gains.pitch_kp * err + gains.pitch_kd * (-est.pitch_rate) + gains.pitch_ki * state.chi2


def rolling_step(
    sp: Setpoint,
    est: GroundState,
    params: VehicleParams,
    gains: RollingGains,
    state: ControllerState,
    limits: ControlLimits,
    dt: float,
) -> tuple[ControlInput, dict]:
    """Full rolling cascade for one tick."""
    if sp.position_valid:
        v_d = rolling_position(sp, est, gains, limits)
        m_z_r = rolling_yaw(sp, est, gains, state, limits, dt)
    else:
        # velocity-only fallback: steer toward the commanded velocity direction
        v_d = 0.0
        speed = float(np.hypot(sp.v_ff[0], sp.v_ff[1]))
        if speed > 0.02:
            psi_d = math.atan2(sp.v_ff[1], sp.v_ff[0])
            err = s1_distance(psi_d, est.yaw)
            m_z_r = gains.yaw_kp * err - gains.yaw_kd * est.omega_z
        else:
            m_z_r = -gains.yaw_kd * est.omega_z
    v_ff = float(world_to_rolling(sp.v_ff[:2], est.yaw)[0]) if np.any(sp.v_ff[:2]) else 0.0
    a_x = rolling_velocity(v_d, v_ff, est, gains, state, limits, dt)
    pitch_d, thrust, m_x, m_z, clamped = rolling_mixer(a_x, m_z_r, est, params, limits)
    m_y = rolling_pitch(pitch_d, est, gains, state, limits, dt)
    u = ControlInput(thrust, np.array([m_x, m_y, m_z]))
    return u, {"pitch_d": pitch_d, "accel_clamped": clamped, "v_d": v_d}


def _desired_attitude(f_des: np.ndarray, yaw: float) -> np.ndarray:
    zb = f_des / np.linalg.norm(f_des)
    xc = np.array([math.cos(yaw), math.sin(yaw), 0.0])
    yb = cross3(zb, xc)
    yb /= np.linalg.norm(yb)
    xb = cross3(yb, zb)
    return np.column_stack([xb, yb, zb])


def flying_step(
    sp: Setpoint,
    est: AerialState,
    params: VehicleParams,
    gains: FlyingGains,
    state: ControllerState,
    limits: ControlLimits,
    dt: float,
) -> tuple[ControlInput, dict]:
    """One tick of the flying cascade; returns the control input and events."""
    if sp.position_valid:
        v_d = gains.pos_kp * (sp.p - est.p)
    else:
        v_d = np.zeros(3)
    v_cmd = v_d + sp.v_ff
    nxy = float(np.hypot(v_cmd[0], v_cmd[1]))
    if nxy > limits.v_max_xy:
        v_cmd[:2] *= limits.v_max_xy / nxy
    v_cmd[2] = _clamp(v_cmd[2], limits.v_max_z)
    e_v = v_cmd - est.v
    state.vel_int = np.clip(state.vel_int + e_v * dt, -limits.integral_clamp, limits.integral_clamp)
    a_cmd = gains.vel_kp * e_v + gains.vel_ki * state.vel_int + sp.a_ff
    nxy = float(np.hypot(a_cmd[0], a_cmd[1]))
    if nxy > limits.a_max_xy:
        a_cmd[:2] *= limits.a_max_xy / nxy

    f_des = params.mass * (a_cmd + np.array([0.0, 0.0, GRAVITY]))
    f_des[2] = max(f_des[2], 0.25 * params.mass * GRAVITY)
    max_h = f_des[2] * math.tan(limits.tilt_max)
    nh = float(np.hypot(f_des[0], f_des[1]))
    if nh > max_h:
        f_des[:2] *= max_h / nh

    thrust = float(f_des @ est.R[:, 2])
    saturated = thrust > params.max_total_thrust
    thrust = min(max(thrust, 0.0), params.max_total_thrust)

    if sp.yaw is not None:
        yaw_d = sp.yaw
    else:
        vxy = float(np.hypot(sp.v_ff[0], sp.v_ff[1]))
        yaw_d = math.atan2(sp.v_ff[1], sp.v_ff[0]) if vxy > 0.1 else est.yaw
    R_d = _desired_attitude(f_des, yaw_d)

    e_m = 0.5 * (R_d.T @ est.R - est.R.T @ R_d)
    e_att = np.array([e_m[2, 1], e_m[0, 2], e_m[1, 0]])
    omega_d = -gains.att_kp * e_att
    e_w = omega_d - est.omega
    state.rate_int = np.clip(state.rate_int + e_w * dt, -limits.integral_clamp, limits.integral_clamp)
    inertia = params.inertia
    moments = inertia * (gains.rate_kp * e_w + gains.rate_ki * state.rate_int) + cross3(
        est.omega, inertia * est.omega
    )
    return ControlInput(thrust, moments), {"thrust_saturated": saturated, "yaw_d": yaw_d}


def transition_step(
    kind: Transition,
    est: AerialState,
    clearance_below: float,
    params: VehicleParams,
    gains: FlyingGains,
    state: ControllerState,
    limits: ControlLimits,
    dt: float,
) -> tuple[ControlInput, bool, dict]:
    """Advance a take-off or landing by one tick.

    Take-off ramps the z setpoint until the bottom clearance crosses the
    threshold.  Landing commands a constant descent velocity and finishes
    once the clearance stays within tolerance of the wheel radius for the
    dwell time (the dwell timer resets whenever contact is lost).
    """
    if kind is Transition.NONE:
        raise ValueError("no transition active")
    if state.hold_xy is None:
        state.hold_xy = est.p[:2].copy()
        state.yaw_hold = est.yaw
    state.transition_time += dt
    events: dict = {"timeout": state.transition_time > limits.transition_timeout}

    if kind is Transition.TAKEOFF:
        if state.takeoff_z_ref is None:
            state.takeoff_z_ref = est.p[2]
        state.takeoff_z_ref += limits.takeoff_rate * dt
        sp = Setpoint(
            np.array([state.hold_xy[0], state.hold_xy[1], state.takeoff_z_ref]),
            np.array([0.0, 0.0, limits.takeoff_rate]),
            np.zeros(3),
            state.yaw_hold,
            MobilityMode.AERIAL,
        )
        u, info = flying_step(sp, est, params, gains, state, limits, dt)
        done = clearance_below > limits.takeoff_clearance
    else:
        # capture the landing point horizontally before descending onto it
        xy_err = math.hypot(state.hold_xy[0] - est.p[0], state.hold_xy[1] - est.p[1])
        v_down = -limits.land_speed if xy_err < 0.15 else 0.0
        sp = Setpoint(
            np.array([state.hold_xy[0], state.hold_xy[1], est.p[2]]),
            np.array([0.0, 0.0, v_down]),
            np.zeros(3),
            state.yaw_hold,
            MobilityMode.AERIAL,
        )
        u, info = flying_step(sp, est, params, gains, state, limits, dt)
        if clearance_below <= params.wheel_radius + limits.land_tol:
            state.land_dwell += dt
        else:
            state.land_dwell = 0.0
        done = state.land_dwell >= limits.land_dwell
    events.update(info)
    return u, done, events
