"""Scenario files: world geometry, vehicle/controller/planner configuration.

Scenarios load from YAML; the built-in ``paper-course`` scenario reconstructs
the enclosed serpentine test course: 1.2 m corridors with hairpin turns, an
18 m centerline circuit, 1.5 m walls under a closed ceiling, and three
removable 0.4 m obstacles blocking the corridors.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
import yaml

from .control import ControlLimits, FlyingGains, RollingGains
from .dynamics import VehicleParams
from .global_planner import GlobalPlannerParams
from .local_planner import PlannerParams
from .scene import Box, Scene, Wall
from .sensors import LidarSpec, NoiseModel


class ScenarioError(ValueError):
    """Configuration problem, reported with the offending field."""


@dataclass
class Rates:
    control_hz: float = 250.0
    local_hz: float = 10.0
    global_hz: float = 1.5

    def validate(self) -> None:
        if not (self.control_hz >= self.local_hz >= self.global_hz > 0.0):
            raise ScenarioError("rates: need control_hz >= local_hz >= global_hz > 0")


@dataclass
class MapConfig:
    resolution: float = 0.1
    edt_max_distance: float = 2.0
    l_hit: float = 0.85
    l_miss: float = -0.4
    l_clamp: float = 3.5
    occ_threshold: float = 0.7
    local_extent: tuple[float, float, float] = (5.0, 5.0, 3.0)
    z_keep_min: float = 0.15


@dataclass
class Scenario:
    name: str
    scene: Scene
    start_xy: np.ndarray
    start_yaw: float
    circuit: np.ndarray  # (N, 2) centerline waypoints, last closes the loop
    vehicle: VehicleParams = field(default_factory=VehicleParams)
    rolling_gains: RollingGains = field(default_factory=RollingGains)
    flying_gains: FlyingGains = field(default_factory=FlyingGains)
    limits: ControlLimits = field(default_factory=ControlLimits)
    planner: PlannerParams = field(default_factory=PlannerParams)
    global_planner: GlobalPlannerParams = field(default_factory=GlobalPlannerParams)
    lidar: LidarSpec = field(default_factory=LidarSpec)
    noise: NoiseModel = field(default_factory=NoiseModel)
    failure_windows: list[tuple[float, float]] = field(default_factory=list)
    rates: Rates = field(default_factory=Rates)
    map_config: MapConfig = field(default_factory=MapConfig)
    seed: int = 0
    max_time: float = 300.0
    completion_radius: float = 0.5
    completion_min_distance: float = 15.0
    goal_advance_radius: float = 1.1
    collision_radius: float = 0.2

    def __post_init__(self) -> None:
        self.start_xy = np.asarray(self.start_xy, dtype=float).reshape(2)
        self.circuit = np.asarray(self.circuit, dtype=float).reshape(-1, 2)
        self.rates.validate()
        if self.max_time <= 0.0:
            raise ScenarioError("max_time: must be positive")

    def circuit_length(self) -> float:
        return float(np.sum(np.linalg.norm(np.diff(self.circuit, axis=0), axis=1)))


def paper_course(with_obstacles: bool = True) -> Scenario:
    """The built-in serpentine circuit.

    A 6.0 x 4.2 m enclosure rings a notched island; a blocking wall in the
    bottom corridor forces a chicane with two hairpin turns through the
    notch.  The centerline circuit is exactly 18 m with 1.2 m corridors.
    """
    h = 1.5
    walls = [
        # outer enclosure
        Wall((0.0, 0.0), (6.0, 0.0), 0.0, h),
        Wall((6.0, 0.0), (6.0, 4.2), 0.0, h),
        Wall((6.0, 4.2), (0.0, 4.2), 0.0, h),
        Wall((0.0, 4.2), (0.0, 0.0), 0.0, h),
        # notched island
        Wall((1.2, 1.2), (1.8, 1.2), 0.0, h),
        Wall((1.8, 1.2), (1.8, 2.4), 0.0, h),
        Wall((1.8, 2.4), (4.2, 2.4), 0.0, h),
        Wall((4.2, 2.4), (4.2, 1.2), 0.0, h),
        Wall((4.2, 1.2), (4.8, 1.2), 0.0, h),
        Wall((4.8, 1.2), (4.8, 3.0), 0.0, h),
        Wall((4.8, 3.0), (1.2, 3.0), 0.0, h),
        Wall((1.2, 3.0), (1.2, 1.2), 0.0, h),
        # chicane: blocks the bottom corridor mid-notch
        Wall((3.0, 0.0), (3.0, 1.2), 0.0, h),
    ]
    obstacles = []
    if with_obstacles:
        obstacles = [
            Box((1.45, 0.0, 0.0), (1.55, 1.2, 0.4)),
            Box((4.8, 2.05, 0.0), (6.0, 2.15, 0.4)),
            Box((2.35, 3.0, 0.0), (2.45, 4.2, 0.4)),
        ]
    # bounds padded past the outer walls so boundary surfaces map cleanly
    scene = Scene(
        walls=walls,
        boxes=obstacles,
        floor_z=0.0,
        ceiling_z=h,
        bounds_lo=np.array([-0.2, -0.2, 0.0]),
        bounds_hi=np.array([6.2, 4.4, h + 0.1]),
    )
    circuit = np.array(
        [
            (0.6, 0.6),
            (2.4, 0.6),
            (2.4, 1.8),
            (3.6, 1.8),
            (3.6, 0.6),
            (5.4, 0.6),
            (5.4, 3.6),
            (0.6, 3.6),
            (0.6, 0.6),
        ]
    )
    return Scenario(
        name="paper-course",
        scene=scene,
        start_xy=np.array([0.6, 0.6]),
        start_yaw=0.0,
        circuit=circuit,
    )


BUILTIN_SCENARIOS = {"paper-course": paper_course}


def _require(d: dict, key: str, ctx: str):
    if key not in d:
        raise ScenarioError(f"{ctx}: missing required field '{key}'")
    return d[key]


def _build_from_dict(raw: dict) -> Scenario:
    if not isinstance(raw, dict):
        raise ScenarioError("scenario: top level must be a mapping")
    name = _require(raw, "name", "scenario")

    world = _require(raw, "world", "scenario")
    walls = []
    for k, w in enumerate(_require(world, "walls", "world")):
        try:
            walls.append(Wall(w["p0"], w["p1"], w.get("z0", 0.0), w.get("z1", world.get("wall_height", 1.5))))
        except (KeyError, ValueError, TypeError) as e:
            raise ScenarioError(f"world.walls[{k}]: {e}") from e
    boxes = []
    for k, b in enumerate(world.get("obstacles", [])):
        try:
            boxes.append(Box(b["lo"], b["hi"]))
        except (KeyError, ValueError, TypeError) as e:
            raise ScenarioError(f"world.obstacles[{k}]: {e}") from e
    try:
        scene = Scene(
            walls=walls,
            boxes=boxes,
            floor_z=world.get("floor_z", 0.0),
            ceiling_z=world.get("ceiling_z"),
            bounds_lo=np.asarray(_require(world, "bounds_lo", "world"), dtype=float),
            bounds_hi=np.asarray(_require(world, "bounds_hi", "world"), dtype=float),
        )
    except ValueError as e:
        raise ScenarioError(f"world: {e}") from e

    start = _require(raw, "start", "scenario")
    start_xy = _require(start, "xy", "start")
    start_yaw = float(start.get("yaw", 0.0))

    vehicle_raw = _require(raw, "vehicle", "scenario")
    for required in ("mass",):
        _require(vehicle_raw, required, "vehicle")
    try:
        vehicle = VehicleParams(**vehicle_raw)
    except (TypeError, ValueError) as e:
        raise ScenarioError(f"vehicle: {e}") from e

    def build(cls, key: str):
        try:
            return cls(**raw.get(key, {}))
        except (TypeError, ValueError) as e:
            raise ScenarioError(f"{key}: {e}") from e

    circuit = raw.get("circuit", [list(start_xy)])
    try:
        return Scenario(
            name=str(name),
            scene=scene,
            start_xy=np.asarray(start_xy, dtype=float),
            start_yaw=start_yaw,
            circuit=np.asarray(circuit, dtype=float),
            vehicle=vehicle,
            rolling_gains=build(RollingGains, "rolling_gains"),
            flying_gains=build(FlyingGains, "flying_gains"),
            limits=build(ControlLimits, "limits"),
            planner=build(PlannerParams, "planner"),
            global_planner=build(GlobalPlannerParams, "global_planner"),
            lidar=build(LidarSpec, "lidar"),
            noise=build(NoiseModel, "noise"),
            failure_windows=[tuple(w) for w in raw.get("failure_windows", [])],
            rates=build(Rates, "rates"),
            map_config=build(MapConfig, "map"),
            seed=int(raw.get("seed", 0)),
            max_time=float(raw.get("max_time", 300.0)),
            completion_radius=float(raw.get("completion_radius", 0.5)),
            completion_min_distance=float(raw.get("completion_min_distance", 15.0)),
            goal_advance_radius=float(raw.get("goal_advance_radius", 0.8)),
            collision_radius=float(raw.get("collision_radius", 0.2)),
        )
    except ScenarioError:
        raise
    except (TypeError, ValueError) as e:
        raise ScenarioError(f"scenario: {e}") from e


def load_scenario(path_or_name: str) -> Scenario:
    """Load a scenario YAML file, or one of the built-in scenarios by name."""
    if path_or_name in BUILTIN_SCENARIOS:
        return BUILTIN_SCENARIOS[path_or_name]()
    try:
        with open(path_or_name, "r", encoding="utf-8") as fh:
            raw = yaml.safe_load(fh)
    except FileNotFoundError as e:
        raise ScenarioError(f"scenario file not found: {path_or_name}") from e
    except yaml.YAMLError as e:
        raise ScenarioError(f"{path_or_name}: invalid YAML: {e}") from e
    return _build_from_dict(raw)
