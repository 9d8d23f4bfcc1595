"""Closed-loop mission executive: wiring, rates, telemetry, terminal states.

One deterministic fixed-timestep loop runs simulation and control at the
control rate, the local planner and mapper at the pointcloud rate, and the
global planner at its own slower rate.  Policies pin the allowed mobility
modes: roll-only removes the obstacles and never leaves the ground, fly-only
takes off immediately and never lands, hybrid plans freely.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from enum import Enum

import numpy as np
from scipy.ndimage import distance_transform_edt

from .control import (
    ControllerState,
    Setpoint,
    Transition,
    flying_step,
    rolling_step,
    transition_step,
)
from .dynamics import allocate_motors, power_draw, step_aerial, step_ground
from .geometry import (
    AerialState,
    GroundState,
    MobilityMode,
    embed_ground_state,
    mode_of,
    position3,
    project_aerial_state,
    rot_y,
    rot_z,
)
from .global_planner import LocalGoal, astar_search, build_lattice, next_waypoint
from .local_planner import LocalPlanner
from .mapping import CollisionIndex, EdtField, OccupancyWorld, build_collision_index
from .scenario import Scenario
from .sensors import SensorFrame, SensorSuite


class Policy(Enum):
    ROLL_ONLY = "roll"
    FLY_ONLY = "fly"
    HYBRID = "hybrid"


class Status(Enum):
    RUNNING = "run"
    COMPLETED = "completed"
    COLLISION = "collision"
    TIMEOUT = "timeout"


EXIT_CODES = {Status.COMPLETED: 0, Status.COLLISION: 2, Status.TIMEOUT: 3}

TELEMETRY_VERSION = "telemetry-v1"
TELEMETRY_COLUMNS = "t,px,py,pz,yaw,mode,transition,thrust,power_w,energy_j,dist_m,status"


@dataclass
class TelemetryRecord:
    t: float
    px: float
    py: float
    pz: float
    yaw: float
    mode: str
    transition: str
    thrust: float
    power_w: float
    energy_j: float
    dist_m: float
    status: str
    localization_ok: bool = True
    saturated: bool = False


@dataclass
class MissionResult:
    status: Status
    records: list[TelemetryRecord]
    policy: Policy
    scenario_name: str
    transitions: list[tuple[float, str]] = field(default_factory=list)
    final_path_text: str = ""
    map_text: str = ""

    @property
    def exit_code(self) -> int:
        return EXIT_CODES[self.status]

    def duration(self) -> float:
        return self.records[-1].t if self.records else 0.0

    def total_energy(self) -> float:
        return self.records[-1].energy_j if self.records else 0.0


def telemetry_csv(records: list[TelemetryRecord]) -> str:
    lines = [f"# {TELEMETRY_VERSION}", TELEMETRY_COLUMNS]
    for r in records:
        lines.append(
            f"{r.t:.3f},{r.px:.6f},{r.py:.6f},{r.pz:.6f},{r.yaw:.6f},{r.mode},{r.transition},"
            f"{r.thrust:.6f},{r.power_w:.6f},{r.energy_j:.6f},{r.dist_m:.6f},{r.status}"
        )
    return "\n".join(lines) + "\n"


def _densify(circuit: np.ndarray, max_step: float) -> np.ndarray:
    """Resample the circuit polyline so consecutive goals stay close.

    Sparse corner-only goals let the optimistic planner justify long detours
    through unmapped space; goals every ~1 m keep the mission on the track.
    """
    pts = [circuit[0]]
    for a, b in zip(circuit[:-1], circuit[1:]):
        seg = np.asarray(b) - np.asarray(a)
        n = max(1, int(math.ceil(float(np.linalg.norm(seg)) / max_step)))
        for k in range(1, n + 1):
            pts.append(np.asarray(a) + seg * (k / n))
    return np.asarray(pts[1:])


def _estimate(truth, p_est, yaw_est, v_est):
    if isinstance(truth, GroundState):
        return GroundState(
            p_est[:2], v_est[:2], yaw_est, truth.omega_z, truth.pitch, truth.pitch_rate
        )
    # replace the yaw component of the true attitude with the estimated one
    R_est = rot_z(yaw_est - truth.yaw) @ truth.R
    return AerialState(p_est, v_est, R_est, truth.omega.copy())


def run_mission(scenario: Scenario, policy: Policy, seed: int | None = None) -> MissionResult:
    scn = scenario
    params = scn.vehicle
    wheel = params.wheel_radius
    scene = scn.scene.without_boxes() if policy is Policy.ROLL_ONLY else scn.scene
    if policy is Policy.ROLL_ONLY:
        allowed = {MobilityMode.GROUND}
    elif policy is Policy.FLY_ONLY:
        allowed = {MobilityMode.AERIAL}
    else:
        allowed = {MobilityMode.GROUND, MobilityMode.AERIAL}

    sensors = SensorSuite(
        scene,
        wheel,
        lidar=scn.lidar,
        noise=scn.noise,
        failure_windows=scn.failure_windows,
        seed=scn.seed if seed is None else seed,
    )
    mc = scn.map_config
    world = OccupancyWorld(
        scene.bounds_lo,
        scene.bounds_hi,
        resolution=mc.resolution,
        l_hit=mc.l_hit,
        l_miss=mc.l_miss,
        l_clamp=mc.l_clamp,
        occ_threshold=mc.occ_threshold,
        local_extent=mc.local_extent,
        z_keep_min=mc.z_keep_min,
        max_ray_range=scn.lidar.max_range,
    )
    edt = EdtField(world.shape, mc.resolution, mc.edt_max_distance)
    planner = LocalPlanner(scn.planner, wheel)
    cs = ControllerState()

    dt = 1.0 / scn.rates.control_hz
    local_every = max(1, int(round(scn.rates.control_hz / scn.rates.local_hz)))
    global_every = max(1, int(round(scn.rates.control_hz / scn.rates.global_hz)))
    max_ticks = int(round(scn.max_time / dt))

    truth = GroundState.at_rest(scn.start_xy, scn.start_yaw)
    if policy is not Policy.FLY_ONLY:
        default_mode = MobilityMode.GROUND
        goal_z = wheel
    else:
        default_mode = MobilityMode.AERIAL
        goal_z = scn.global_planner.aerial_levels[0]

    goals = _densify(scn.circuit, max_step=1.0)
    goal_i = 0
    start_xy = scn.start_xy.copy()
    local_goal = LocalGoal(np.array([*goals[0], goal_z]), default_mode)
    global_path = None
    setpoint = Setpoint.hold(position3(truth, wheel), None, MobilityMode.GROUND)
    active_transition = Transition.NONE
    frame: SensorFrame | None = None
    cloud_world = np.empty((0, 3))
    map_index = CollisionIndex(np.empty((0, 3)))
    cloud_index = CollisionIndex(np.empty((0, 3)))

    records: list[TelemetryRecord] = []
    transitions: list[tuple[float, str]] = []
    energy = 0.0
    dist = 0.0
    prev_power: float | None = None
    last_transition_end = -10.0
    below, above = sensors.clearances(truth)
    status = Status.TIMEOUT

    for k in range(max_ticks + 1):
        t = k * dt
        p_est, yaw_est, v_est, loc_ok = sensors.sense_pose(truth, t)
        est = _estimate(truth, p_est, yaw_est, v_est)
        p3 = position3(truth, wheel)
        if active_transition is not Transition.NONE or k % local_every == 0:
            below, above = sensors.clearances(truth)

        if k % local_every == 0:
            cloud = sensors.lidar(truth)
            frame = SensorFrame(
                t, cloud, below, above, p_est, yaw_est, v_est,
                sensors.encoder_speed(truth), loc_ok,
            )
            if world.handle_localization_event(loc_ok):
                edt.reset()
            if len(cloud):
                R_map = rot_z(yaw_est) @ rot_y(truth.pitch) if isinstance(
                    truth, GroundState
                ) else est.R
                cloud_world = cloud @ R_map.T + p_est
                if loc_ok:
                    world.integrate_scan(p_est, R_map, cloud)
                # the floor is not an obstacle: drop ground-plane returns
                cloud_world = cloud_world[cloud_world[:, 2] >= mc.z_keep_min]
            else:
                cloud_world = np.empty((0, 3))

        if k % global_every == 0:
            edt.sync(world.occupied)
            while (
                goal_i < len(goals) - 1
                and float(np.hypot(p_est[0] - goals[goal_i][0], p_est[1] - goals[goal_i][1]))
                < scn.goal_advance_radius
            ):
                goal_i += 1
            goal3 = np.array([goals[goal_i][0], goals[goal_i][1], goal_z])
            col = world.column_obstacle_mask(mc.z_keep_min, wheel + 0.6)
            clearance2d = (
                distance_transform_edt(~col) * mc.resolution
                if col.any()
                else np.full(col.shape, edt.d_max)
            )
            np.minimum(clearance2d, edt.d_max, out=clearance2d)
            lattice = build_lattice(
                edt, world.lo, world.hi, wheel, scn.global_planner, allowed,
                observed=world.observed, ground_clearance_2d=clearance2d,
            )
            res = astar_search(lattice, p_est, goal3, mode_of(truth))
            if res.path is not None:
                global_path = res.path
            if global_path is not None:
                local_goal, _transition_req, _replan = next_waypoint(
                    global_path, p_est, mode_of(truth), scn.global_planner
                )
            else:
                local_goal = LocalGoal(goal3, default_mode)

        if k % local_every == 0 and active_transition is Transition.NONE and frame is not None:
            if loc_ok:
                map_index = build_collision_index(world, cloud_world, center=p_est)
            cloud_index = CollisionIndex(cloud_world)
            # landing is gated on having only floor below
            land_clear = below >= (p_est[2] - scene.floor_z) - 0.1
            setpoint, _debug = planner.plan_step(
                local_goal, est, frame, map_index, cloud_index, t, land_clear=land_clear
            )

        # ---------------------------------------------- transition machine
        recently_transitioned = t - last_transition_end < 1.5
        if (
            active_transition is Transition.NONE
            and setpoint.transition is not Transition.NONE
            and not recently_transitioned
        ):
            if setpoint.transition is Transition.TAKEOFF and isinstance(truth, GroundState):
                truth = embed_ground_state(truth, wheel)
                est = _estimate(truth, p_est, yaw_est, v_est)
                cs.reset_transition()
                cs.reset_integrators()
                cs.hold_xy = setpoint.p[:2].copy()
                cs.yaw_hold = truth.yaw
                active_transition = Transition.TAKEOFF
                transitions.append((t, "takeoff"))
            elif setpoint.transition is Transition.LAND and isinstance(truth, AerialState):
                cs.reset_transition()
                cs.hold_xy = setpoint.p[:2].copy()
                cs.yaw_hold = truth.yaw
                active_transition = Transition.LAND
                transitions.append((t, "land"))

        saturated = False
        if active_transition is not Transition.NONE:
            u, done, ev = transition_step(
                active_transition, est, below, params, scn.flying_gains, cs, scn.limits, dt
            )
            if ev.get("timeout"):
                status = Status.TIMEOUT
                records.append(
                    _record(t, truth, wheel, active_transition, u.thrust, prev_power or 0.0,
                            energy, dist, status, loc_ok, False)
                )
                break
            if done:
                if active_transition is Transition.LAND:
                    truth = project_aerial_state(truth).with_no_slip()
                active_transition = Transition.NONE
                cs.reset_transition()
                cs.reset_integrators()
                setpoint = Setpoint.hold(position3(truth, wheel), None, mode_of(truth))
                last_transition_end = t
        else:
            if isinstance(truth, GroundState):
                sp = setpoint if setpoint.mode is MobilityMode.GROUND else Setpoint.hold(
                    p3, None, MobilityMode.GROUND
                )
                u, info = rolling_step(sp, est, params, scn.rolling_gains, cs, scn.limits, dt)
            else:
                sp = setpoint if setpoint.mode is MobilityMode.AERIAL else Setpoint.hold(
                    p3, est.yaw, MobilityMode.AERIAL
                )
                u, info = flying_step(sp, est, params, scn.flying_gains, cs, scn.limits, dt)
                saturated = bool(info.get("thrust_saturated", False))

        motors = allocate_motors(u, params)
        saturated = saturated or motors.saturated
        power = power_draw(motors, params)
        if prev_power is not None:
            energy += 0.5 * (prev_power + power) * dt
        prev_power = power

        p_before = position3(truth, wheel)
        if isinstance(truth, GroundState):
            truth = step_ground(truth, u, dt, params)
        else:
            truth = step_aerial(truth, u, dt, params, floor_z=scene.floor_z)
        p_after = position3(truth, wheel)
        dist += float(np.hypot(p_after[0] - p_before[0], p_after[1] - p_before[1]))

        row_status = Status.RUNNING
        d_obs = scene.distance_to_obstacles(p_after)
        if d_obs < scn.collision_radius:
            row_status = status = Status.COLLISION
        elif (
            dist > scn.completion_min_distance
            and float(np.hypot(p_after[0] - start_xy[0], p_after[1] - start_xy[1]))
            < scn.completion_radius
        ):
            row_status = status = Status.COMPLETED

        records.append(
            _record(t, truth, wheel, active_transition, u.thrust, power, energy, dist,
                    row_status, loc_ok, saturated)
        )
        if row_status is not Status.RUNNING:
            break
    else:
        status = Status.TIMEOUT
        if records:
            records[-1].status = Status.TIMEOUT.value

    result = MissionResult(
        status=status,
        records=records,
        policy=policy,
        scenario_name=scn.name,
        transitions=transitions,
    )
    if global_path is not None:
        result.final_path_text = global_path.export_text()
    result.map_text = world.export_text()
    return result


def _record(t, truth, wheel, transition, thrust, power, energy, dist, status, loc_ok, saturated):
    p = position3(truth, wheel)
    yaw = truth.yaw
    mode = mode_of(truth).value
    trans = transition.value if transition is not Transition.NONE else "none"
    return TelemetryRecord(
        t, float(p[0]), float(p[1]), float(p[2]), float(yaw), mode, trans,
        float(thrust), float(power), float(energy), float(dist), status.value,
        loc_ok, saturated,
    )
