"""World geometry for the simulator: extruded wall segments, boxes, planes.

Everything is axis-independent analytic geometry so ray casting and distance
queries stay exact and fast (vectorized over rays).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np


@dataclass
class Wall:
    """Vertical rectangle: a 2-D segment extruded from z0 to z1."""

    p0: np.ndarray
    p1: np.ndarray
    z0: float = 0.0
    z1: float = 1.5

    def __post_init__(self) -> None:
        self.p0 = np.asarray(self.p0, dtype=float).reshape(2)
        self.p1 = np.asarray(self.p1, dtype=float).reshape(2)
        if self.z1 <= self.z0:
            raise ValueError("wall z range is empty")
        if np.allclose(self.p0, self.p1):
            raise ValueError("degenerate wall segment")


@dataclass
class Box:
    """Axis-aligned box, used for the removable obstacles."""

    lo: np.ndarray
    hi: np.ndarray

    def __post_init__(self) -> None:
        self.lo = np.asarray(self.lo, dtype=float).reshape(3)
        self.hi = np.asarray(self.hi, dtype=float).reshape(3)
        if np.any(self.hi <= self.lo):
            raise ValueError("box extents are empty")


@dataclass
class Scene:
    walls: list[Wall] = field(default_factory=list)
    boxes: list[Box] = field(default_factory=list)
    floor_z: float = 0.0
    ceiling_z: float | None = None
    bounds_lo: np.ndarray = field(default_factory=lambda: np.array([-10.0, -10.0, 0.0]))
    bounds_hi: np.ndarray = field(default_factory=lambda: np.array([10.0, 10.0, 3.0]))

    def __post_init__(self) -> None:
        self.bounds_lo = np.asarray(self.bounds_lo, dtype=float).reshape(3)
        self.bounds_hi = np.asarray(self.bounds_hi, dtype=float).reshape(3)
        if np.any(self.bounds_hi <= self.bounds_lo):
            raise ValueError("scene bounds are empty")

    def without_boxes(self) -> "Scene":
        return Scene(
            walls=list(self.walls),
            boxes=[],
            floor_z=self.floor_z,
            ceiling_z=self.ceiling_z,
            bounds_lo=self.bounds_lo.copy(),
            bounds_hi=self.bounds_hi.copy(),
        )

    # ------------------------------------------------------------------ rays

    def raycast(self, origin: np.ndarray, dirs: np.ndarray, max_range: float) -> np.ndarray:
        """First-hit range for each unit direction; inf when nothing is hit."""
        origin = np.asarray(origin, dtype=float).reshape(3)
        dirs = np.asarray(dirs, dtype=float).reshape(-1, 3)
        n = dirs.shape[0]
        best = np.full(n, np.inf)

        with np.errstate(divide="ignore", invalid="ignore"):
            # horizontal planes
            for plane_z in filter(lambda z: z is not None, (self.floor_z, self.ceiling_z)):
                t = (plane_z - origin[2]) / dirs[:, 2]
                ok = np.isfinite(t) & (t > 1e-9)
                best = np.where(ok & (t < best), t, best)

            for box in self.boxes:
                t1 = (box.lo - origin) / dirs
                t2 = (box.hi - origin) / dirs
                tmin = np.nanmax(np.minimum(t1, t2), axis=1)
                tmax = np.nanmin(np.maximum(t1, t2), axis=1)
                ok = (tmax >= np.maximum(tmin, 0.0)) & (tmin > 1e-9)
                best = np.where(ok & (tmin < best), tmin, best)

            for wall in self.walls:
                seg = wall.p1 - wall.p0
                length = float(np.hypot(seg[0], seg[1]))
                u = seg / length
                nrm = np.array([-u[1], u[0]])
                denom = dirs[:, 0] * nrm[0] + dirs[:, 1] * nrm[1]
                t = ((wall.p0[0] - origin[0]) * nrm[0] + (wall.p0[1] - origin[1]) * nrm[1]) / denom
                ok = np.isfinite(t) & (t > 1e-9)
                hx = origin[0] + t * dirs[:, 0]
                hy = origin[1] + t * dirs[:, 1]
                hz = origin[2] + t * dirs[:, 2]
                s = (hx - wall.p0[0]) * u[0] + (hy - wall.p0[1]) * u[1]
                ok &= (s >= 0.0) & (s <= length) & (hz >= wall.z0) & (hz <= wall.z1)
                best = np.where(ok & (t < best), t, best)

        best[best > max_range] = np.inf
        return best

    # ------------------------------------------------------------- distances

    def distance_to_obstacles(self, p: np.ndarray, include_ceiling: bool = True) -> float:
        """Distance from a point to the nearest wall, box, or ceiling.

        The floor is not an obstacle (the wheels rest on it).
        """
        p = np.asarray(p, dtype=float).reshape(3)
        best = math.inf
        for wall in self.walls:
            seg = wall.p1 - wall.p0
            length = float(np.hypot(seg[0], seg[1]))
            u = seg / length
            s = min(max(float((p[:2] - wall.p0) @ u), 0.0), length)
            cx, cy = wall.p0 + s * u
            cz = min(max(p[2], wall.z0), wall.z1)
            best = min(best, math.dist((p[0], p[1], p[2]), (cx, cy, cz)))
        for box in self.boxes:
            d = np.maximum(np.maximum(box.lo - p, p - box.hi), 0.0)
            best = min(best, float(np.linalg.norm(d)))
        if include_ceiling and self.ceiling_z is not None:
            best = min(best, max(self.ceiling_z - p[2], 0.0))
        return best

    # ---------------------------------------------------------- rasterization

    def occupied_voxels(
        self, resolution: float, z_min: float = 0.0, z_max: float | None = None
    ) -> np.ndarray:
        """Ground-truth occupied voxel indices (walls and boxes) within bounds.

        Used by the path-export tool and by tests that need a fully known map.
        """
        z_hi = self.bounds_hi[2] if z_max is None else z_max
        step = resolution * 0.5
        pts = []
        for wall in self.walls:
            seg = wall.p1 - wall.p0
            length = float(np.hypot(seg[0], seg[1]))
            ns = max(2, int(math.ceil(length / step)) + 1)
            nz = max(2, int(math.ceil((min(wall.z1, z_hi) - max(wall.z0, z_min)) / step)) + 1)
            ss = np.linspace(0.0, length, ns)
            zs = np.linspace(max(wall.z0, z_min), min(wall.z1, z_hi), nz)
            xy = wall.p0 + np.outer(ss / length, seg)
            grid = np.empty((ns * nz, 3))
            grid[:, 0] = np.repeat(xy[:, 0], nz)
            grid[:, 1] = np.repeat(xy[:, 1], nz)
            grid[:, 2] = np.tile(zs, ns)
            pts.append(grid)
        for box in self.boxes:
            lo = np.maximum(box.lo, [*self.bounds_lo[:2], z_min])
            hi = np.minimum(box.hi, [*self.bounds_hi[:2], z_hi])
            if np.any(hi <= lo):
                continue
            axes = [np.arange(lo[i] + step / 2, hi[i], step) for i in range(3)]
            axes = [a if len(a) else np.array([(lo[i] + hi[i]) / 2]) for i, a in enumerate(axes)]
            g = np.stack(np.meshgrid(*axes, indexing="ij"), axis=-1).reshape(-1, 3)
            pts.append(g)
        if not pts:
            return np.empty((0, 3), dtype=np.int64)
        pts = np.concatenate(pts, axis=0)
        shape = np.ceil((self.bounds_hi - self.bounds_lo) / resolution).astype(int)
        ok = np.all((pts >= self.bounds_lo) & (pts <= self.bounds_hi), axis=1)
        idx = np.floor((pts[ok] - self.bounds_lo) / resolution).astype(np.int64)
        # surfaces exactly on the upper bound belong to the last voxel
        idx = np.minimum(idx, shape - 1)
        return np.unique(idx, axis=0)
