"""Motion-primitive local planner shared by both mobility modes.

Each replan fits boundary polynomials from the current state to an arc of
endpoints ahead of the vehicle (with extra elevation fans when flying),
scores every primitive for collision against a nearest-neighbor obstacle
index and for goal progress, picks the cheapest, and extracts a controller
setpoint a fixed interval ahead.  Mode changes requested by the global
planner turn into take-off / landing setpoints, and when localization drops
out the planner keeps emitting velocity-only commands scored against the
instantaneous cloud.
"""

from __future__ import annotations

import io
import math
from dataclasses import dataclass, field
from enum import Enum

import numpy as np

from .control import Setpoint, Transition
from .flatness import FlatTrajectory, fit_boundary_polynomial, sample_flat
from .geometry import (
    AerialState,
    GroundState,
    MobilityMode,
    VehicleState,
    mode_of,
    position3,
    s1_distance,
    wrap_angle,
)
from .global_planner import LocalGoal
from .mapping import CollisionIndex
from .sensors import SensorFrame

COLLISION_COST = 1.0e6
NEAR_COLLISION_BASE = 100.0


class Verdict(Enum):
    FREE = "free"
    NEAR_COLLISION = "near"
    COLLISION = "collision"


@dataclass
class PlannerParams:
    # horizon matched to the global planner's waypoint lookahead: endpoints
    # further out than the next waypoint just park themselves inside walls.
    # in a 1.2 m corridor only ~15 deg of the arc is in the free lane, so the
    # azimuth sampling has to be dense enough to land several endpoints there
    horizon: float = 0.9
    n_azimuth: int = 25
    arc_halfspan: float = math.radians(120.0)
    elevations: tuple[float, ...] = (-math.radians(15.0), math.radians(15.0))
    vehicle_radius: float = 0.3
    buffer: float = 1.0
    goal_weight: float = 1.0  # W_g: goal progress vs. obstacle standoff
    cruise_speed: float = 0.3
    lookahead: float = 2.0
    replan_rate: float = 10.0
    n_collision_samples: int = 10
    z_bounds: tuple[float, float] = (0.4, 1.25)

    def __post_init__(self) -> None:
        if not self.buffer > self.vehicle_radius > 0.0:
            raise ValueError("need buffer > vehicle_radius > 0")
        if self.horizon <= 0.0 or self.goal_weight <= 0.0:
            raise ValueError("horizon and goal weight must be positive")

    @property
    def duration(self) -> float:
        return self.horizon / self.cruise_speed


@dataclass
class MotionPrimitive:
    traj: FlatTrajectory
    endpoint: np.ndarray
    heading_change: float
    c_collision: float = 0.0
    c_goal: float = 0.0
    verdict: Verdict = Verdict.FREE
    d_obstacle: float = math.inf

    @property
    def c_total(self) -> float:
        return self.c_collision + self.c_goal


def collision_cost(d_obstacle: float, params: PlannerParams) -> tuple[float, Verdict]:
    """Tiered collision cost from the distance to the nearest obstacle."""
    if d_obstacle < params.vehicle_radius:
        return COLLISION_COST, Verdict.COLLISION
    if d_obstacle < params.buffer:
        return NEAR_COLLISION_BASE * params.goal_weight - d_obstacle, Verdict.NEAR_COLLISION
    return 0.0, Verdict.FREE


def generate_endpoints(
    position: np.ndarray, heading: float, mode: MobilityMode, params: PlannerParams
) -> np.ndarray:
    """Arcs of endpoints centered on the heading.

    The main arc sits at the horizon radius; a second arc at half the radius
    gives tight escape turns near obstacles.  Aerial mode replicates the
    horizontal arcs at each configured elevation angle; endpoint heights are
    clamped to the planner's z band.
    """
    azimuths = heading + np.linspace(-params.arc_halfspan, params.arc_halfspan, params.n_azimuth)
    elevations = [0.0]
    if mode is MobilityMode.AERIAL:
        elevations += list(params.elevations)
    pts = []
    for radius in (params.horizon, 0.5 * params.horizon):
        for el in elevations:
            ce, se = math.cos(el), math.sin(el)
            x = position[0] + radius * ce * np.cos(azimuths)
            y = position[1] + radius * ce * np.sin(azimuths)
            z = np.full_like(x, position[2] + radius * se)
            pts.append(np.stack([x, y, z], axis=1))
    out = np.concatenate(pts, axis=0)
    if mode is MobilityMode.AERIAL:
        out[:, 2] = np.clip(out[:, 2], params.z_bounds[0], params.z_bounds[1])
    else:
        out[:, 2] = position[2]
    return out


def fit_primitive(
    position: np.ndarray,
    velocity: np.ndarray,
    heading: float,
    endpoint: np.ndarray,
    mode: MobilityMode,
    params: PlannerParams,
    t0: float,
) -> MotionPrimitive:
    """Boundary polynomial from the current state to one endpoint.

    The end velocity is the cruise speed directed radially outward; aerial
    primitives carry a fourth (yaw) axis from the current heading to the
    endpoint bearing.
    """
    delta = endpoint - position
    az = math.atan2(delta[1], delta[0])
    dn = float(np.linalg.norm(delta))
    duration = max(0.5, dn / params.cruise_speed)
    if mode is MobilityMode.GROUND:
        v_end = params.cruise_speed * np.array([math.cos(az), math.sin(az)])
        traj = fit_boundary_polynomial(
            position[:2], velocity[:2], endpoint[:2], v_end, duration, t0
        )
    else:
        u = delta / dn if dn > 1e-9 else np.array([math.cos(az), math.sin(az), 0.0])
        v_end = params.cruise_speed * u
        yaw_end = heading + s1_distance(az, heading)
        start = np.array([*position, heading])
        end = np.array([*endpoint, yaw_end])
        traj = fit_boundary_polynomial(
            start, np.array([*velocity, 0.0]), end, np.array([*v_end, 0.0]), duration, t0
        )
    return MotionPrimitive(traj, endpoint.copy(), abs(s1_distance(az, heading)))


_TAU_POWERS: dict[int, np.ndarray] = {}

# head fraction of each primitive exempt from collision checks: the vehicle
# cannot un-collide its current footprint, so escape maneuvers away from a
# nearby obstacle must stay feasible
QUERY_TAU_START = 0.3


def _tau_powers(n: int) -> np.ndarray:
    """(n, 10) matrix of tau^k at fixed fractions spanning the checked tail."""
    if n not in _TAU_POWERS:
        tau = np.linspace(QUERY_TAU_START, 1.0, n)[:, None]
        _TAU_POWERS[n] = tau ** np.arange(10)[None, :]
    return _TAU_POWERS[n]


def query_points(prim: MotionPrimitive, params: PlannerParams, wheel_z: float) -> np.ndarray:
    """Collision query points along the primitive (head exempt, end included)."""
    n = params.n_collision_samples
    vals = _tau_powers(n) @ prim.traj.coeffs.T  # (n, dims)
    pts = np.empty((n, 3))
    pts[:, 0] = vals[:, 0]
    pts[:, 1] = vals[:, 1]
    pts[:, 2] = vals[:, 2] if prim.traj.dims == 4 else wheel_z
    return pts


def score_primitive(
    prim: MotionPrimitive,
    index: CollisionIndex,
    goal_position: np.ndarray,
    params: PlannerParams,
    wheel_z: float = 0.0,
) -> MotionPrimitive:
    """Fill in collision and goal costs for one primitive."""
    pts = query_points(prim, params, wheel_z)
    prim.d_obstacle = float(index.distances(pts).min()) if index.n else math.inf
    prim.c_collision, prim.verdict = collision_cost(prim.d_obstacle, params)
    prim.c_goal = params.goal_weight * float(np.linalg.norm(prim.endpoint - goal_position))
    return prim


def select_index(prims: list[MotionPrimitive]) -> int | None:
    """Index of the minimum-cost primitive, or None if everything collides.

    Ties prefer the smaller heading change, then the lower index, so the
    selection is deterministic.
    """
    if not prims:
        raise ValueError("no primitives to select from")
    best = min(
        range(len(prims)), key=lambda k: (prims[k].c_total, prims[k].heading_change, k)
    )
    return None if prims[best].verdict is Verdict.COLLISION else best


def select_primitive(prims: list[MotionPrimitive]) -> MotionPrimitive | None:
    """Minimum total cost; None when every primitive is in collision."""
    k = select_index(prims)
    return None if k is None else prims[k]


def extract_setpoint(
    prim: MotionPrimitive, now: float, params: PlannerParams, mode: MobilityMode, wheel_z: float
) -> Setpoint:
    """Sample the primitive a fixed interval ahead and package it for control."""
    z = sample_flat(prim.traj, now + params.lookahead)
    if prim.traj.dims == 2:
        p = np.array([z.derivs[0, 0], z.derivs[0, 1], wheel_z])
        v = np.array([z.derivs[1, 0], z.derivs[1, 1], 0.0])
        a = np.array([z.derivs[2, 0], z.derivs[2, 1], 0.0])
        return Setpoint(p, v, a, None, mode)
    p = z.derivs[0, :3].copy()
    v = z.derivs[1, :3].copy()
    a = z.derivs[2, :3].copy()
    return Setpoint(p, v, a, wrap_angle(float(z.derivs[0, 3])), mode)


@dataclass
class PlanDebug:
    primitives: list[MotionPrimitive] = field(default_factory=list)
    selected: int = -1
    all_collision: bool = False
    velocity_only: bool = False

    def export_text(self) -> str:
        buf = io.StringIO()
        buf.write("# primitives v1\n")
        buf.write("# idx ex ey ez d_obstacle c_collision c_goal c_total verdict selected\n")
        for k, pr in enumerate(self.primitives):
            buf.write(
                f"{k} {pr.endpoint[0]:.4f} {pr.endpoint[1]:.4f} {pr.endpoint[2]:.4f} "
                f"{pr.d_obstacle:.4f} {pr.c_collision:.4f} {pr.c_goal:.4f} {pr.c_total:.4f} "
                f"{pr.verdict.value} {int(k == self.selected)}\n"
            )
        return buf.getvalue()


class LocalPlanner:
    """Stateful replanner invoked at the pointcloud rate."""

    def __init__(self, params: PlannerParams, wheel_radius: float) -> None:
        self.params = params
        self.wheel_radius = wheel_radius
        self.last_debug = PlanDebug()

    def _hold_setpoint(self, est: VehicleState, mode: MobilityMode) -> Setpoint:
        p = position3(est, self.wheel_radius)
        yaw = est.yaw if isinstance(est, AerialState) else None
        return Setpoint.hold(p, yaw, mode)

    def plan_step(
        self,
        goal: LocalGoal,
        est: VehicleState,
        frame: SensorFrame,
        map_index: CollisionIndex,
        cloud_index: CollisionIndex,
        now: float,
        land_clear: bool = True,
    ) -> tuple[Setpoint, PlanDebug]:
        """One replan: transition request, primitive selection, or hold.

        ``map_index`` covers the local map plus the instantaneous cloud and is
        used in normal operation; ``cloud_index`` holds only the fresh cloud
        and is what collision checks fall back to when localization is out.
        ``land_clear`` gates the landing request: while something other than
        the floor is directly below, the planner keeps flying toward the goal
        instead of descending onto it.
        """
        params = self.params
        mode = mode_of(est)

        if goal.mode is not mode and frame.localization_ok:
            if goal.mode is MobilityMode.AERIAL:
                sp = self._hold_setpoint(est, MobilityMode.AERIAL)
                sp.transition = Transition.TAKEOFF
                if goal.transition_point is not None:
                    sp.p[:2] = goal.transition_point[:2]
                self.last_debug = PlanDebug()
                return sp, self.last_debug
            if land_clear:
                sp = self._hold_setpoint(est, MobilityMode.GROUND)
                sp.transition = Transition.LAND
                if goal.transition_point is not None:
                    sp.p[:2] = goal.transition_point[:2]
                self.last_debug = PlanDebug()
                return sp, self.last_debug
            # not safe to descend here: keep flying toward the goal

        pos = position3(est, self.wheel_radius)
        if isinstance(est, AerialState):
            heading = est.yaw
            vel = est.v.copy()
        else:
            heading = est.yaw
            vel = np.array([est.v[0], est.v[1], 0.0])

        velocity_only = not frame.localization_ok
        index = cloud_index if velocity_only else map_index

        endpoints = generate_endpoints(pos, heading, mode, params)
        prims = [
            fit_primitive(pos, vel, heading, ep, mode, params, now) for ep in endpoints
        ]
        # one batched nearest-neighbor query over every primitive's samples
        n = params.n_collision_samples
        all_pts = np.concatenate([query_points(p, params, self.wheel_radius) for p in prims])
        dists = index.distances(all_pts).reshape(len(prims), n)
        goal_p = goal.position.copy()
        if mode is MobilityMode.AERIAL:
            # a ground-mode goal sits at wheel height; aim for it from cruise height
            goal_p[2] = max(goal_p[2], params.z_bounds[0])
        for k, pr in enumerate(prims):
            pr.d_obstacle = float(dists[k].min()) if index.n else math.inf
            pr.c_collision, pr.verdict = collision_cost(pr.d_obstacle, params)
            pr.c_goal = params.goal_weight * float(np.linalg.norm(pr.endpoint - goal_p))

        best = select_index(prims)
        debug = PlanDebug(primitives=prims, velocity_only=velocity_only)
        if best is None:
            debug.all_collision = True
            sp = self._hold_setpoint(est, mode)
            # every candidate is blocked at this heading; re-aim toward the
            # goal so the next replans see a rotated endpoint fan
            bearing = math.atan2(goal_p[1] - pos[1], goal_p[0] - pos[0])
            if abs(s1_distance(bearing, heading)) > 0.35:
                if mode is MobilityMode.GROUND:
                    target = pos + 0.25 * np.array([math.cos(bearing), math.sin(bearing), 0.0])
                    if index.distance(target) > params.vehicle_radius + 0.1:
                        sp.p = target
                else:
                    sp.yaw = bearing
            if velocity_only:
                sp.position_valid = False
            self.last_debug = debug
            return sp, debug

        debug.selected = best
        sp = extract_setpoint(prims[best], now, params, mode, self.wheel_radius)
        if velocity_only:
            sp.position_valid = False
        self.last_debug = debug
        return sp, debug
