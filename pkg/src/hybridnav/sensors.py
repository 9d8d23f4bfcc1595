"""Simulated sensors: spinning LIDAR, clearance rangers, noisy pose, encoder.

All randomness comes from a single seeded generator owned by the suite, so a
mission with a fixed seed replays bit-identically.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .geometry import (
    AerialState,
    GroundState,
    VehicleState,
    embed_ground_state,
    mode_of,
    position3,
    MobilityMode,
)
from .scene import Scene


@dataclass
class LidarSpec:
    n_rings: int = 16
    elevation_span: float = math.radians(15.0)  # rings cover +/- this angle
    azimuth_step: float = math.radians(2.0)
    max_range: float = 8.0
    # the wheels block two azimuth sectors centered on body +/- y; rings
    # steeper than the rim clearance angle pass over/under the wheels
    occlusion_halfwidth: float = math.radians(30.0)
    occlusion_max_elevation: float = math.radians(10.0)


@dataclass
class NoiseModel:
    pos_sigma: float = 0.0
    yaw_sigma: float = 0.0
    vel_sigma: float = 0.0


@dataclass
class SensorFrame:
    t: float
    points: np.ndarray  # (N, 3) in the sensor (body) frame
    clearance_below: float
    clearance_above: float
    pose_p: np.ndarray
    pose_yaw: float
    vel_estimate: np.ndarray
    encoder_speed: float
    localization_ok: bool


class SensorSuite:
    """Owns the scene, the ray table, the noise generator, and failure windows."""

    def __init__(
        self,
        scene: Scene,
        wheel_radius: float,
        lidar: LidarSpec | None = None,
        noise: NoiseModel | None = None,
        failure_windows: list[tuple[float, float]] | None = None,
        seed: int = 0,
        clearance_max: float = 5.0,
    ) -> None:
        self.scene = scene
        self.wheel_radius = wheel_radius
        self.lidar_spec = lidar or LidarSpec()
        self.noise = noise or NoiseModel()
        self.failure_windows = [tuple(map(float, w)) for w in (failure_windows or [])]
        self.clearance_max = clearance_max
        self.rng = np.random.default_rng(seed)
        self._frozen_pose: tuple[np.ndarray, float] | None = None
        self._rays_body = self._build_ray_table()

    def _build_ray_table(self) -> np.ndarray:
        spec = self.lidar_spec
        elevations = np.linspace(-spec.elevation_span, spec.elevation_span, spec.n_rings)
        n_az = max(1, int(round(2.0 * math.pi / spec.azimuth_step)))
        azimuths = np.arange(n_az) * (2.0 * math.pi / n_az) - math.pi
        blocked_az = np.zeros(n_az, dtype=bool)
        for center in (math.pi / 2.0, -math.pi / 2.0):
            d = np.abs(np.angle(np.exp(1j * (azimuths - center))))
            blocked_az |= d <= spec.occlusion_halfwidth
        el, az = np.meshgrid(elevations, azimuths, indexing="ij")
        occluded = blocked_az[None, :] & (np.abs(el) < spec.occlusion_max_elevation)
        dirs = np.stack(
            [np.cos(el) * np.cos(az), np.cos(el) * np.sin(az), np.sin(el)], axis=-1
        )
        return dirs[~occluded].reshape(-1, 3)

    # ------------------------------------------------------------------ pieces

    def attitude_of(self, state: VehicleState) -> np.ndarray:
        if isinstance(state, AerialState):
            return state.R
        return embed_ground_state(state, self.wheel_radius).R

    def lidar(self, state: VehicleState) -> np.ndarray:
        """Point cloud in the sensor (body) frame."""
        origin = position3(state, self.wheel_radius)
        R = self.attitude_of(state)
        dirs_world = self._rays_body @ R.T
        ranges = self.scene.raycast(origin, dirs_world, self.lidar_spec.max_range)
        hit = np.isfinite(ranges)
        return self._rays_body[hit] * ranges[hit, None]

    def clearances(self, state: VehicleState) -> tuple[float, float]:
        """Vertical distances from the body origin, saturated at the max range."""
        origin = position3(state, self.wheel_radius)
        dirs = np.array([[0.0, 0.0, -1.0], [0.0, 0.0, 1.0]])
        r = self.scene.raycast(origin, dirs, self.clearance_max)
        below = r[0] if np.isfinite(r[0]) else self.clearance_max
        above = r[1] if np.isfinite(r[1]) else self.clearance_max
        return float(below), float(above)

    def localization_ok(self, t: float) -> bool:
        return not any(t0 <= t < t1 for t0, t1 in self.failure_windows)

    def sense_pose(
        self, state: VehicleState, t: float
    ) -> tuple[np.ndarray, float, np.ndarray, bool]:
        """Noisy pose estimate; during failure windows the position freezes
        while the velocity estimate stays valid."""
        p = position3(state, self.wheel_radius)
        if isinstance(state, AerialState):
            yaw = state.yaw
            v = state.v.copy()
        else:
            yaw = state.yaw
            v = np.array([state.v[0], state.v[1], 0.0])
        n = self.noise
        p_est = p + self.rng.normal(0.0, n.pos_sigma, 3)
        yaw_est = yaw + self.rng.normal(0.0, n.yaw_sigma)
        v_est = v + self.rng.normal(0.0, n.vel_sigma, 3)
        ok = self.localization_ok(t)
        if ok:
            self._frozen_pose = (p_est.copy(), float(yaw_est))
        elif self._frozen_pose is not None:
            p_est, yaw_est = self._frozen_pose[0].copy(), self._frozen_pose[1]
        return p_est, float(yaw_est), v_est, ok

    def encoder_speed(self, state: VehicleState) -> float:
        if isinstance(state, GroundState):
            return state.forward_speed
        return float(np.hypot(state.v[0], state.v[1]))

    def frame(self, state: VehicleState, t: float) -> SensorFrame:
        below, above = self.clearances(state)
        p_est, yaw_est, v_est, ok = self.sense_pose(state, t)
        return SensorFrame(
            t=t,
            points=self.lidar(state),
            clearance_below=below,
            clearance_above=above,
            pose_p=p_est,
            pose_yaw=yaw_est,
            vel_estimate=v_est,
            encoder_speed=self.encoder_speed(state),
            localization_ok=ok,
        )
