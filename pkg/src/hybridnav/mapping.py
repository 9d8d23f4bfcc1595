"""Occupancy mapping, incremental Euclidean distance transform, point index.

The map is a dense log-odds voxel grid over the (desk-scale) scenario bounds.
Scans update only a local window around the vehicle; the occupied set
accumulates globally and is cleared on localization failure.

The EDT is maintained incrementally per batch of changed voxels: newly
occupied voxels lower distances by stamping a precomputed squared-distance
kernel (the vectorized form of an expanding brushfire wavefront, exact by
construction), and freed voxels raise distances by recomputing the affected
neighborhood from the obstacles that can reach it.  Distances are truncated
at ``d_max``; beyond the planner's safety buffer they never affect any cost.
"""

from __future__ import annotations

import io
import math
from dataclasses import dataclass

import numpy as np
from scipy.spatial import cKDTree


class CollisionIndex:
    """Nearest-neighbor index over obstacle points; empty means free space."""

    def __init__(self, points: np.ndarray, empty_distance: float = math.inf) -> None:
        points = np.asarray(points, dtype=float).reshape(-1, 3)
        self.n = points.shape[0]
        self.empty_distance = empty_distance
        self._tree = cKDTree(points) if self.n else None

    def distance(self, p) -> float:
        return float(self.distances(np.asarray(p, dtype=float).reshape(1, 3))[0])

    def distances(self, pts: np.ndarray) -> np.ndarray:
        pts = np.asarray(pts, dtype=float).reshape(-1, 3)
        if self._tree is None:
            return np.full(pts.shape[0], self.empty_distance)
        d, _ = self._tree.query(pts)
        return np.asarray(d, dtype=float)


class OccupancyWorld:
    """Log-odds voxel grid with a moving local update window."""

    def __init__(
        self,
        bounds_lo,
        bounds_hi,
        resolution: float = 0.1,
        l_hit: float = 0.85,
        l_miss: float = -0.4,
        l_clamp: float = 3.5,
        occ_threshold: float = 0.7,
        local_extent=(5.0, 5.0, 3.0),
        z_keep_min: float = 0.15,
        z_keep_max: float | None = None,
        max_ray_range: float = 8.0,
    ) -> None:
        if resolution <= 0.0:
            raise ValueError("resolution must be positive")
        self.lo = np.asarray(bounds_lo, dtype=float).reshape(3)
        self.hi = np.asarray(bounds_hi, dtype=float).reshape(3)
        self.resolution = float(resolution)
        self.shape = tuple(np.ceil((self.hi - self.lo) / resolution).astype(int))
        self.l_hit = l_hit
        self.l_miss = l_miss
        self.l_clamp = l_clamp
        self.occ_threshold = occ_threshold
        self.local_extent = np.asarray(local_extent, dtype=float) / 2.0
        self.z_keep_min = z_keep_min
        self.z_keep_max = z_keep_max
        self.max_ray_range = max_ray_range
        self.logodds = np.zeros(self.shape, dtype=np.float32)
        self.occupied = np.zeros(self.shape, dtype=bool)
        self.observed = np.zeros(self.shape, dtype=bool)
        self._was_ok = True

    # ------------------------------------------------------------- indexing

    def index_of(self, pts: np.ndarray) -> np.ndarray:
        return np.floor((np.asarray(pts, dtype=float).reshape(-1, 3) - self.lo) / self.resolution).astype(
            np.int64
        )

    def in_grid(self, idx: np.ndarray) -> np.ndarray:
        return np.all((idx >= 0) & (idx < np.array(self.shape)), axis=1)

    def centers_of(self, idx: np.ndarray) -> np.ndarray:
        return self.lo + (np.asarray(idx, dtype=float) + 0.5) * self.resolution

    # ------------------------------------------------------------ integration

    def integrate_scan(self, sensor_p: np.ndarray, attitude: np.ndarray, points_sensor: np.ndarray) -> None:
        """Fuse one scan: carve free space along each ray, mark the endpoints.

        Updates are confined to the local window around the sensor (and to
        the height band of interest, which drops floor returns).
        """
        sensor_p = np.asarray(sensor_p, dtype=float).reshape(3)
        pts = np.asarray(points_sensor, dtype=float).reshape(-1, 3)
        if pts.size == 0:
            return
        ranges = np.linalg.norm(pts, axis=1)
        keep = ranges <= self.max_ray_range
        pts, ranges = pts[keep], ranges[keep]
        if pts.size == 0:
            return
        world = pts @ np.asarray(attitude, dtype=float).T + sensor_p

        win_lo = sensor_p - self.local_extent
        win_hi = sensor_p + self.local_extent

        # free-space samples along each ray, stopping one step short of the hit
        step = self.resolution * 0.5
        n_steps = np.maximum((np.floor((ranges - self.resolution) / step)).astype(int), 0)
        max_steps = int(n_steps.max()) if len(n_steps) else 0
        free_idx = np.empty((0, 3), dtype=np.int64)
        if max_steps > 0:
            ts = (np.arange(1, max_steps + 1) * step)[None, :]  # (1, S)
            mask = ts <= (ranges - self.resolution)[:, None]
            dirs = world - sensor_p
            with np.errstate(invalid="ignore", divide="ignore"):
                dirs = dirs / ranges[:, None]
            sample = sensor_p + dirs[:, None, :] * ts[:, :, None]
            sample = sample[mask]
            inside = np.all((sample >= win_lo) & (sample <= win_hi), axis=1)
            free_idx = self.index_of(sample[inside])
            free_idx = free_idx[self.in_grid(free_idx)]

        hit_in = np.all((world >= win_lo) & (world <= win_hi), axis=1)
        hit_in &= world[:, 2] >= self.z_keep_min
        if self.z_keep_max is not None:
            hit_in &= world[:, 2] <= self.z_keep_max
        hit_idx = self.index_of(world[hit_in])
        hit_idx = hit_idx[self.in_grid(hit_idx)]

        flat = self.logodds.reshape(-1)
        obs_flat = self.observed.reshape(-1)
        if len(free_idx):
            f = np.ravel_multi_index(free_idx.T, self.shape)
            f = np.unique(f)
            # do not carve the voxels this scan says are occupied
            if len(hit_idx):
                h = np.ravel_multi_index(hit_idx.T, self.shape)
                f = np.setdiff1d(f, h, assume_unique=False)
            np.add.at(flat, f, self.l_miss)
            obs_flat[f] = True
        if len(hit_idx):
            h = np.unique(np.ravel_multi_index(hit_idx.T, self.shape))
            np.add.at(flat, h, self.l_hit)
            obs_flat[h] = True
        np.clip(flat, -self.l_clamp, self.l_clamp, out=flat)
        self.occupied = self.logodds > self.occ_threshold

    def handle_localization_event(self, localization_ok: bool) -> bool:
        """Clear the map on the ok -> failed transition; True when cleared."""
        cleared = False
        if self._was_ok and not localization_ok:
            self.clear()
            cleared = True
        self._was_ok = localization_ok
        return cleared

    def clear(self) -> None:
        self.logodds[:] = 0.0
        self.occupied[:] = False
        self.observed[:] = False

    # --------------------------------------------------------------- queries

    def occupied_indices(self, center: np.ndarray | None = None) -> np.ndarray:
        """Occupied voxel indices, optionally cropped to the local window."""
        if center is None:
            return np.argwhere(self.occupied)
        center = np.asarray(center, dtype=float).reshape(3)
        lo = np.maximum(self.index_of((center - self.local_extent)[None, :])[0], 0)
        hi = np.minimum(
            self.index_of((center + self.local_extent)[None, :])[0] + 1, np.array(self.shape)
        )
        sub = self.occupied[lo[0] : hi[0], lo[1] : hi[1], lo[2] : hi[2]]
        return np.argwhere(sub) + lo

    def column_obstacle_mask(self, z_lo: float, z_hi: float) -> np.ndarray:
        """2-D mask of xy columns containing an occupied voxel in [z_lo, z_hi].

        Ground traversal cannot duck under partial observations of a wall, so
        the ground lattice treats any marked column as an obstacle column.
        """
        k0 = max(int((z_lo - self.lo[2]) / self.resolution), 0)
        k1 = min(int(math.ceil((z_hi - self.lo[2]) / self.resolution)), self.shape[2])
        if k1 <= k0:
            return np.zeros(self.shape[:2], dtype=bool)
        return self.occupied[:, :, k0:k1].any(axis=2)

    def occupied_points(self, center: np.ndarray | None = None) -> np.ndarray:
        idx = self.occupied_indices(center)
        if idx.size == 0:
            return np.empty((0, 3))
        return self.centers_of(idx)

    def export_text(self) -> str:
        """Occupied voxel centers, lexicographic, with a small header."""
        buf = io.StringIO()
        buf.write("# occupancy-map v1\n")
        buf.write(f"# resolution {self.resolution:.6f}\n")
        buf.write(f"# origin {self.lo[0]:.6f} {self.lo[1]:.6f} {self.lo[2]:.6f}\n")
        for x, y, z in self.occupied_points():
            buf.write(f"{x:.6f} {y:.6f} {z:.6f}\n")
        return buf.getvalue()


class EdtField:
    """Truncated Euclidean distance transform kept in sync with an occupancy mask."""

    def __init__(self, shape, resolution: float, d_max: float = 2.0) -> None:
        self.shape = tuple(int(s) for s in shape)
        self.resolution = float(resolution)
        self.d_max = float(d_max)
        self.r_vox = int(math.ceil(d_max / resolution))
        self.sentinel = np.int64((self.r_vox + 1) ** 2 * 3)
        self.dist_sq = np.full(self.shape, self.sentinel, dtype=np.int64)
        self.occupied = np.zeros(self.shape, dtype=bool)
        r = self.r_vox
        ax = np.arange(-r, r + 1)
        kx, ky, kz = np.meshgrid(ax, ax, ax, indexing="ij")
        kernel = (kx**2 + ky**2 + kz**2).astype(np.int64)
        kernel[kernel > r * r] = self.sentinel  # beyond truncation: never wins
        self._kernel = kernel

    # ------------------------------------------------------------- updates

    def _stamp(self, idx: np.ndarray) -> None:
        r = self.r_vox
        for i, j, k in idx:
            lo = (max(i - r, 0), max(j - r, 0), max(k - r, 0))
            hi = (min(i + r + 1, self.shape[0]), min(j + r + 1, self.shape[1]), min(k + r + 1, self.shape[2]))
            ker = self._kernel[
                lo[0] - i + r : hi[0] - i + r,
                lo[1] - j + r : hi[1] - j + r,
                lo[2] - k + r : hi[2] - k + r,
            ]
            win = self.dist_sq[lo[0] : hi[0], lo[1] : hi[1], lo[2] : hi[2]]
            np.minimum(win, ker, out=win)

    def update(self, newly_occupied: np.ndarray, newly_freed: np.ndarray) -> None:
        """Apply a batch of occupancy changes.

        Freed voxels invalidate every distance in their reach, so that
        region is reset and re-lowered from the obstacles that can see it;
        newly occupied voxels just lower distances around themselves.
        """
        newly_occupied = np.asarray(newly_occupied, dtype=np.int64).reshape(-1, 3)
        newly_freed = np.asarray(newly_freed, dtype=np.int64).reshape(-1, 3)
        if len(newly_freed):
            self.occupied[tuple(newly_freed.T)] = False
        if len(newly_occupied):
            self.occupied[tuple(newly_occupied.T)] = True

        if len(newly_freed):
            r = self.r_vox
            lo = np.maximum(newly_freed.min(axis=0) - r, 0)
            hi = np.minimum(newly_freed.max(axis=0) + r + 1, self.shape)
            region = tuple(slice(lo[d], hi[d]) for d in range(3))
            self.dist_sq[region] = self.sentinel
            # obstacles within reach of the reset region re-seed the wavefront
            slo = np.maximum(lo - r, 0)
            shi = np.minimum(hi + r, self.shape)
            search = tuple(slice(slo[d], shi[d]) for d in range(3))
            seeds = np.argwhere(self.occupied[search]) + slo
            self._stamp(seeds)
        if len(newly_occupied):
            self._stamp(newly_occupied)

    def sync(self, occupied_mask: np.ndarray) -> tuple[int, int]:
        """Diff against an occupancy mask and apply the changes incrementally."""
        newly_occ = np.argwhere(occupied_mask & ~self.occupied)
        newly_free = np.argwhere(self.occupied & ~occupied_mask)
        if len(newly_occ) or len(newly_free):
            self.update(newly_occ, newly_free)
        return len(newly_occ), len(newly_free)

    def reset(self) -> None:
        self.dist_sq[:] = self.sentinel
        self.occupied[:] = False

    # ------------------------------------------------------------- queries

    def distances_m(self) -> np.ndarray:
        """Full grid of truncated metric distances."""
        return np.minimum(np.sqrt(self.dist_sq.astype(float)) * self.resolution, self.d_max)

    def distance_at_index(self, idx) -> float:
        d2 = float(self.dist_sq[tuple(idx)])
        return min(math.sqrt(d2) * self.resolution, self.d_max)

    def distance(self, p, lo) -> tuple[float, bool]:
        """Distance at the voxel containing a world point; out-of-map gives d_max."""
        idx = np.floor((np.asarray(p, dtype=float).reshape(3) - np.asarray(lo)) / self.resolution).astype(int)
        if np.any(idx < 0) or np.any(idx >= np.array(self.shape)):
            return self.d_max, False
        return self.distance_at_index(idx), True


def brute_force_edt(occupied_mask: np.ndarray, resolution: float, d_max: float) -> np.ndarray:
    """Independent reference: exact nearest-occupied distance per voxel.

    Works in integer voxel space so the metric conversion is bit-identical
    to the incremental field's.
    """
    occ = np.argwhere(occupied_mask)
    out = np.full(occupied_mask.shape, d_max, dtype=float)
    if len(occ) == 0:
        return out
    tree = cKDTree(occ.astype(float))
    pts = np.argwhere(np.ones(occupied_mask.shape, dtype=bool)).astype(float)
    d, _ = tree.query(pts)
    return np.minimum(d.reshape(occupied_mask.shape) * resolution, d_max)


def build_collision_index(
    world: OccupancyWorld | None,
    cloud_world: np.ndarray | None,
    center: np.ndarray | None = None,
    empty_distance: float = math.inf,
) -> CollisionIndex:
    """Point index over local-map occupied voxel centers plus a fresh cloud."""
    parts = []
    if world is not None:
        occ = world.occupied_points(center)
        if len(occ):
            parts.append(occ)
    if cloud_world is not None and len(cloud_world):
        parts.append(np.asarray(cloud_world, dtype=float).reshape(-1, 3))
    pts = np.concatenate(parts, axis=0) if parts else np.empty((0, 3))
    return CollisionIndex(pts, empty_distance=empty_distance)
