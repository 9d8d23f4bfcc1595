"""Hybrid A* over a ground/aerial lattice with an energy-proxy flight cost.

The lattice has one ground layer at wheel height (8-connected) and a stack of
aerial layers (in-layer 8-connected plus diagonal links to the layers above
and below).  Vertical edges between the ground layer and the first aerial
layer are mode transitions and carry a fixed surcharge.  Node costs penalize
proximity to obstacles; aerial nodes additionally carry a flight surcharge
sized from the measured flying/rolling power ratio, which makes path cost an
energy proxy and biases the search toward rolling whenever the terrain
allows it.
"""

from __future__ import annotations

import heapq
import io
import math
from dataclasses import dataclass, field

import numpy as np

from .dynamics import FLYING_POWER_W, ROLLING_POWER_W
from .geometry import MobilityMode
from .mapping import EdtField


@dataclass
class GlobalPlannerParams:
    ground_spacing: float = 0.3
    aerial_levels: tuple[float, ...] = (0.8, 1.2)
    vehicle_radius: float = 0.3
    free_margin: float = 0.04
    w_obs: float = 2.0
    d_safe: float = 1.0
    flight_surcharge: float = FLYING_POWER_W / ROLLING_POWER_W - 1.0
    unknown_prior: float = 2.5  # ground-layer traversal prior for unobserved space
    transition_cost: float = 3.0  # measured transition energy in rolled-meter units
    waypoint_lookahead: int = 3
    transition_trigger_dist: float = 0.5
    offpath_replan_dist: float = 3.0
    snap_radius: float = 0.65

    @property
    def free_threshold(self) -> float:
        return self.vehicle_radius + self.free_margin


@dataclass
class LocalGoal:
    position: np.ndarray
    mode: MobilityMode
    transition_point: np.ndarray | None = None  # where the path changes mode

    def __post_init__(self) -> None:
        self.position = np.asarray(self.position, dtype=float).reshape(3)
        if self.transition_point is not None:
            self.transition_point = np.asarray(self.transition_point, dtype=float).reshape(3)


@dataclass
class HybridPath:
    positions: np.ndarray  # (N, 3)
    modes: list[MobilityMode]
    cumulative_cost: np.ndarray  # (N,)

    @property
    def total_cost(self) -> float:
        return float(self.cumulative_cost[-1])

    def __len__(self) -> int:
        return len(self.modes)

    def export_text(self) -> str:
        buf = io.StringIO()
        buf.write("# hybrid-path v1\n")
        buf.write("# x y z mode cumulative_cost\n")
        for p, m, c in zip(self.positions, self.modes, self.cumulative_cost):
            buf.write(f"{p[0]:.6f} {p[1]:.6f} {p[2]:.6f} {m.value} {c:.6f}\n")
        return buf.getvalue()


def node_cost(edt_distance: float, mode: MobilityMode, params: GlobalPlannerParams) -> float:
    """Per-node traversal cost: obstacle proximity plus the flight surcharge."""
    cost = params.w_obs * max(0.0, params.d_safe - edt_distance)
    if mode is MobilityMode.AERIAL:
        cost += params.flight_surcharge
    return cost


class Lattice:
    """Free-space node grid over the mapped bounds.

    Level 0 is the ground layer; levels 1..L are the configured aerial
    heights.  Node keys are (level, ix, iy).
    """

    def __init__(
        self,
        origin_xy: np.ndarray,
        nx: int,
        ny: int,
        level_z: list[float],
        level_modes: list[MobilityMode],
        spacing: float,
        free: np.ndarray,
        cost: np.ndarray,
        params: GlobalPlannerParams,
    ) -> None:
        self.origin_xy = origin_xy
        self.nx, self.ny = nx, ny
        self.level_z = level_z
        self.level_modes = level_modes
        self.spacing = spacing
        self.free = free  # (L, nx, ny) bool
        self.cost = cost  # (L, nx, ny) float
        self.params = params

    @property
    def n_levels(self) -> int:
        return len(self.level_z)

    def node_position(self, key) -> np.ndarray:
        l, i, j = key
        return np.array(
            [self.origin_xy[0] + i * self.spacing, self.origin_xy[1] + j * self.spacing, self.level_z[l]]
        )

    def node_mode(self, key) -> MobilityMode:
        return self.level_modes[key[0]]

    def free_node_count(self) -> int:
        return int(self.free.sum())

    def nearest_free(self, p: np.ndarray, prefer_level: int | None = None):
        """Snap a position to the nearest free node, preferring one level."""
        p = np.asarray(p, dtype=float).reshape(3)
        fi = (p[0] - self.origin_xy[0]) / self.spacing
        fj = (p[1] - self.origin_xy[1]) / self.spacing
        best, best_d = None, math.inf
        levels = range(self.n_levels) if prefer_level is None else [prefer_level]
        for l in levels:
            for radius in range(0, max(self.nx, self.ny)):
                i0, i1 = int(fi) - radius, int(fi) + radius + 1
                j0, j1 = int(fj) - radius, int(fj) + radius + 1
                for i in range(max(i0, 0), min(i1, self.nx)):
                    for j in range(max(j0, 0), min(j1, self.ny)):
                        if max(abs(i - int(fi)), abs(j - int(fj))) != radius:
                            continue
                        if not self.free[l, i, j]:
                            continue
                        d = float(np.linalg.norm(self.node_position((l, i, j)) - p))
                        if d < best_d:
                            best, best_d = (l, i, j), d
                if best is not None and radius * self.spacing > best_d + self.spacing:
                    break
            if best is not None:
                break
        if best is not None and best_d <= max(self.params.snap_radius, self.spacing * 2):
            return best
        return best if best is not None else None

    def neighbors(self, key):
        """Yield (neighbor_key, edge_length, is_transition)."""
        l, i, j = key
        sp = self.spacing
        for di in (-1, 0, 1):
            for dj in (-1, 0, 1):
                if di == 0 and dj == 0:
                    continue
                ni, nj = i + di, j + dj
                if not (0 <= ni < self.nx and 0 <= nj < self.ny):
                    continue
                if self.free[l, ni, nj]:
                    yield (l, ni, nj), math.hypot(di, dj) * sp, False
        if l >= 1:
            # diagonal links within the aerial stack
            for nl in (l - 1, l + 1):
                if nl < 1 or nl >= self.n_levels:
                    continue
                dz = abs(self.level_z[nl] - self.level_z[l])
                for di in (-1, 0, 1):
                    for dj in (-1, 0, 1):
                        ni, nj = i + di, j + dj
                        if not (0 <= ni < self.nx and 0 <= nj < self.ny):
                            continue
                        if self.free[nl, ni, nj]:
                            length = math.sqrt((di * di + dj * dj) * sp * sp + dz * dz)
                            yield (nl, ni, nj), length, False
        # vertical transition edges between ground and the first aerial layer
        if self.n_levels > 1 and self.level_modes[0] is MobilityMode.GROUND:
            if l == 0 and self.free[1, i, j]:
                yield (1, i, j), abs(self.level_z[1] - self.level_z[0]), True
            elif l == 1 and self.free[0, i, j]:
                yield (0, i, j), abs(self.level_z[1] - self.level_z[0]), True


def build_lattice(
    edt: EdtField,
    map_lo: np.ndarray,
    map_hi: np.ndarray,
    wheel_radius: float,
    params: GlobalPlannerParams,
    allowed_modes: set[MobilityMode] | None = None,
    observed: np.ndarray | None = None,
    ground_clearance_2d: np.ndarray | None = None,
) -> Lattice:
    """Sample the EDT on the node grid and keep the free nodes.

    Never-observed nodes stay traversable (optimistic) but carry a prior
    cost so imagined shortcuts through unmapped space do not outbid routes
    the map already supports.
    """
    allowed = allowed_modes or {MobilityMode.GROUND, MobilityMode.AERIAL}
    sp = params.ground_spacing
    # snap the node grid to world-frame multiples of the spacing so corridor
    # centerlines land on node rows regardless of the map padding
    origin = np.ceil(np.asarray(map_lo[:2], dtype=float) / sp) * sp
    nx = int(math.floor((map_hi[0] - origin[0]) / sp)) + 1
    ny = int(math.floor((map_hi[1] - origin[1]) / sp)) + 1

    level_z: list[float] = []
    level_modes: list[MobilityMode] = []
    if MobilityMode.GROUND in allowed:
        level_z.append(wheel_radius)
        level_modes.append(MobilityMode.GROUND)
    if MobilityMode.AERIAL in allowed:
        for z in params.aerial_levels:
            level_z.append(float(z))
            level_modes.append(MobilityMode.AERIAL)

    xs = origin[0] + np.arange(nx) * sp
    ys = origin[1] + np.arange(ny) * sp
    gx, gy = np.meshgrid(xs, ys, indexing="ij")
    dist = np.empty((len(level_z), nx, ny))
    known = np.ones((len(level_z), nx, ny), dtype=bool)
    shape = np.array(edt.shape)
    d_field = None
    for l, z in enumerate(level_z):
        pts = np.stack([gx.ravel(), gy.ravel(), np.full(gx.size, z)], axis=1)
        idx = np.floor((pts - map_lo) / edt.resolution).astype(int)
        ok = np.all((idx >= 0) & (idx < shape), axis=1)
        d = np.full(gx.size, edt.d_max)
        if ok.any():
            if d_field is None:
                d_field = edt.distances_m()
            ii = idx[ok]
            d[ok] = d_field[ii[:, 0], ii[:, 1], ii[:, 2]]
            if observed is not None:
                seen = np.zeros(gx.size, dtype=bool)
                seen[ok] = observed[ii[:, 0], ii[:, 1], ii[:, 2]]
                known[l] = seen.reshape(nx, ny)
        dist[l] = d.reshape(nx, ny)

    if ground_clearance_2d is not None and level_modes and level_modes[0] is MobilityMode.GROUND:
        pts = np.stack([gx.ravel(), gy.ravel()], axis=1)
        idx = np.floor((pts - map_lo[:2]) / edt.resolution).astype(int)
        shape2 = np.array(ground_clearance_2d.shape)
        ok = np.all((idx >= 0) & (idx < shape2), axis=1)
        d2 = np.full(gx.size, edt.d_max)
        d2[ok] = ground_clearance_2d[idx[ok, 0], idx[ok, 1]]
        dist[0] = np.minimum(dist[0], d2.reshape(nx, ny))

    free = dist > params.free_threshold
    cost = params.w_obs * np.maximum(0.0, params.d_safe - dist)
    if observed is not None and level_modes and level_modes[0] is MobilityMode.GROUND:
        # unexplored floor may hide obstacles; unseen air above mapped space
        # is just air, so only the ground layer pays the prior
        cost[0] += np.where(known[0], 0.0, params.unknown_prior)
    for l, m in enumerate(level_modes):
        if m is MobilityMode.AERIAL:
            cost[l] += params.flight_surcharge
    return Lattice(origin, nx, ny, level_z, level_modes, sp, free, cost, params)


@dataclass
class SearchResult:
    path: HybridPath | None
    reason: str = "ok"
    expanded: int = 0


def astar_search(lattice: Lattice, start_p, goal_p, start_mode: MobilityMode) -> SearchResult:
    """A* with an admissible straight-line heuristic (no flight surcharge).

    Edge cost is Euclidean length scaled by one plus the mean of the endpoint
    node costs, plus the fixed transition surcharge on mode-change edges.
    Ties break toward fewer mode changes, then lexicographic node order.
    """
    prefer = None
    for l, m in enumerate(lattice.level_modes):
        if m is start_mode:
            prefer = l
            break
    start = lattice.nearest_free(np.asarray(start_p, dtype=float), prefer_level=prefer)
    if start is None and prefer is not None:
        start = lattice.nearest_free(np.asarray(start_p, dtype=float))
    goal = lattice.nearest_free(np.asarray(goal_p, dtype=float))
    if start is None or goal is None:
        return SearchResult(None, "unreachable")

    goal_pos = lattice.node_position(goal)
    cost = lattice.cost

    def h(key) -> float:
        return float(np.linalg.norm(lattice.node_position(key) - goal_pos))

    g_best: dict = {start: 0.0}
    changes_best: dict = {start: 0}
    parent: dict = {}
    open_heap = [(h(start), 0, start)]
    closed: set = set()
    expanded = 0
    while open_heap:
        f, changes, key = heapq.heappop(open_heap)
        if key in closed:
            continue
        closed.add(key)
        expanded += 1
        if key == goal:
            break
        g = g_best[key]
        ck = cost[key]
        for nkey, length, is_transition in lattice.neighbors(key):
            if nkey in closed:
                continue
            edge = length * (1.0 + 0.5 * (ck + cost[nkey]))
            if is_transition:
                edge += lattice.params.transition_cost
            ng = g + edge
            nchanges = changes + (1 if is_transition else 0)
            old = g_best.get(nkey)
            if old is None or ng < old - 1e-12 or (abs(ng - old) <= 1e-12 and nchanges < changes_best.get(nkey, 1 << 30)):
                g_best[nkey] = ng
                changes_best[nkey] = nchanges
                parent[nkey] = key
                heapq.heappush(open_heap, (ng + h(nkey), nchanges, nkey))
    else:
        return SearchResult(None, "unreachable", expanded)

    keys = [goal]
    while keys[-1] != start:
        keys.append(parent[keys[-1]])
    keys.reverse()
    positions = np.array([lattice.node_position(k) for k in keys])
    modes = [lattice.node_mode(k) for k in keys]
    cum = np.array([g_best[k] for k in keys])
    return SearchResult(HybridPath(positions, modes, cum), "ok", expanded)


def next_waypoint(
    path: HybridPath,
    current_p,
    current_mode: MobilityMode,
    params: GlobalPlannerParams,
) -> tuple[LocalGoal, bool, bool]:
    """Local goal n nodes ahead of the closest path node.

    The goal position leads by the lookahead for smooth primitives, but the
    mobility mode comes from the next node along the path: transitions fire
    where the path actually changes mode, not where the lookahead lands.
    Returns (goal, transition_requested, replan_needed).
    """
    p = np.asarray(current_p, dtype=float).reshape(3)
    d = np.linalg.norm(path.positions - p, axis=1)
    nearest = int(np.argmin(d))
    replan = float(d[nearest]) > params.offpath_replan_dist
    target = min(nearest + params.waypoint_lookahead, len(path) - 1)
    mode = current_mode
    change_point = None
    for j in range(nearest + 1, target + 1):
        if path.modes[j] is not current_mode:
            horiz = float(np.hypot(path.positions[j][0] - p[0], path.positions[j][1] - p[1]))
            if horiz <= params.transition_trigger_dist:
                mode = path.modes[j]
                change_point = path.positions[j].copy()
            break
    goal = LocalGoal(path.positions[target].copy(), mode, change_point)
    return goal, goal.mode is not current_mode, replan
