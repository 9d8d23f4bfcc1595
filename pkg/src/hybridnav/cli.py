"""Command-line harness: missions, reports, step responses, exports.

Exit codes for `simulate`: 0 completed, 2 collision, 3 timeout, 4 bad config.
"""

from __future__ import annotations

import argparse
import sys
from pathlib import Path

import numpy as np

from .geometry import MobilityMode
from .global_planner import astar_search, build_lattice
from .mapping import EdtField, OccupancyWorld
from .mission import Policy, run_mission, telemetry_csv
from .reporting import (
    REFERENCE_AERIAL_POWER_W,
    energy_report,
    parse_telemetry_csv,
    render_mission_figures,
    render_step_figure,
    step_response_experiment,
)
from .scenario import ScenarioError, load_scenario
from .sensors import SensorSuite

CONFIG_ERROR = 4


def _cmd_simulate(args) -> int:
    try:
        scenario = load_scenario(args.scenario)
        policy = Policy(args.policy)
    except (ScenarioError, ValueError) as e:
        print(f"config error: {e}", file=sys.stderr)
        return CONFIG_ERROR
    result = run_mission(scenario, policy, seed=args.seed)
    outdir = Path(args.out)
    outdir.mkdir(parents=True, exist_ok=True)
    (outdir / "telemetry.csv").write_text(telemetry_csv(result.records))
    report = energy_report(result.records, args.reference_power)
    (outdir / "energy_report.txt").write_text(report.to_text())
    scene = scenario.scene.without_boxes() if policy is Policy.ROLL_ONLY else scenario.scene
    render_mission_figures(result, scene, outdir)
    if result.final_path_text:
        (outdir / "path.txt").write_text(result.final_path_text)
    print(
        f"{scenario.name} [{policy.value}] -> {result.status.value}: "
        f"{result.duration():.1f} s, {result.records[-1].dist_m:.1f} m, "
        f"{result.total_energy() / 1000.0:.2f} kJ"
    )
    print(f"outputs in {outdir}")
    return result.exit_code


def _cmd_energy_report(args) -> int:
    try:
        records = parse_telemetry_csv(Path(args.telemetry).read_text())
    except (OSError, ValueError) as e:
        print(f"config error: {e}", file=sys.stderr)
        return CONFIG_ERROR
    report = energy_report(records, args.reference_power)
    text = report.to_text()
    if args.out:
        Path(args.out).write_text(text)
    print(text, end="")
    return 0


def _cmd_step_response(args) -> int:
    try:
        resp = step_response_experiment(args.axis, args.magnitude)
    except ValueError as e:
        print(f"config error: {e}", file=sys.stderr)
        return CONFIG_ERROR
    m = resp.metrics
    print(
        f"{args.axis} step {args.magnitude:g}: rise {m.rise_time_s:.3f} s, "
        f"settle {m.settle_time_s:.3f} s, overshoot {100 * m.overshoot_frac:.1f}%"
        + (" [diverged]" if m.diverged else "")
    )
    if args.out:
        outdir = Path(args.out)
        outdir.mkdir(parents=True, exist_ok=True)
        trace = "\n".join(f"{t:.4f},{y:.6f}" for t, y in zip(resp.t, resp.y))
        (outdir / f"step_{args.axis}.csv").write_text("t,value\n" + trace + "\n")
        render_step_figure(resp, outdir)
    return 0


def _ground_truth_map(scenario) -> tuple[OccupancyWorld, EdtField]:
    mc = scenario.map_config
    world = OccupancyWorld(
        scenario.scene.bounds_lo,
        scenario.scene.bounds_hi,
        resolution=mc.resolution,
        z_keep_min=mc.z_keep_min,
    )
    idx = scenario.scene.occupied_voxels(mc.resolution, z_min=mc.z_keep_min)
    if len(idx):
        world.logodds[tuple(idx.T)] = world.l_clamp
        world.occupied = world.logodds > world.occ_threshold
    edt = EdtField(world.shape, mc.resolution, mc.edt_max_distance)
    edt.sync(world.occupied)
    return world, edt


def _cmd_export_map(args) -> int:
    try:
        scenario = load_scenario(args.scenario)
    except ScenarioError as e:
        print(f"config error: {e}", file=sys.stderr)
        return CONFIG_ERROR
    if args.scans > 0:
        # build from simulated scans at the start pose
        from .geometry import GroundState

        world, _ = _ground_truth_map(scenario)
        world.clear()
        sensors = SensorSuite(scenario.scene, scenario.vehicle.wheel_radius,
                              lidar=scenario.lidar, seed=scenario.seed)
        state = GroundState.at_rest(scenario.start_xy, scenario.start_yaw)
        for _ in range(args.scans):
            cloud = sensors.lidar(state)
            R = sensors.attitude_of(state)
            from .geometry import position3

            world.integrate_scan(position3(state, scenario.vehicle.wheel_radius), R, cloud)
    else:
        world, _ = _ground_truth_map(scenario)
    Path(args.out).write_text(world.export_text())
    print(f"map written to {args.out}")
    return 0


def _cmd_export_path(args) -> int:
    try:
        scenario = load_scenario(args.scenario)
        policy = Policy(args.policy)
    except (ScenarioError, ValueError) as e:
        print(f"config error: {e}", file=sys.stderr)
        return CONFIG_ERROR
    scene = scenario.scene.without_boxes() if policy is Policy.ROLL_ONLY else scenario.scene
    scenario.scene = scene
    world, edt = _ground_truth_map(scenario)
    if policy is Policy.ROLL_ONLY:
        allowed = {MobilityMode.GROUND}
    elif policy is Policy.FLY_ONLY:
        allowed = {MobilityMode.AERIAL}
    else:
        allowed = {MobilityMode.GROUND, MobilityMode.AERIAL}
    wheel = scenario.vehicle.wheel_radius
    lattice = build_lattice(edt, world.lo, world.hi, wheel, scenario.global_planner, allowed)
    start = np.array([*scenario.start_xy, wheel])
    goal_z = wheel if MobilityMode.GROUND in allowed else scenario.global_planner.aerial_levels[0]
    goal = np.array([*scenario.circuit[len(scenario.circuit) // 2], goal_z])
    res = astar_search(lattice, start, goal, MobilityMode.GROUND)
    if res.path is None:
        print("no path found", file=sys.stderr)
        return 1
    Path(args.out).write_text(res.path.export_text())
    print(f"path with {len(res.path)} nodes written to {args.out}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="hybridnav", description=__doc__)
    sub = ap.add_subparsers(dest="command", required=True)

    sim = sub.add_parser("simulate", help="run a closed-loop mission")
    sim.add_argument("--scenario", required=True, help="scenario file or built-in name")
    sim.add_argument("--policy", required=True, choices=[p.value for p in Policy])
    sim.add_argument("--seed", type=int, default=None)
    sim.add_argument("--out", required=True, help="output directory")
    sim.add_argument("--reference-power", type=float, default=REFERENCE_AERIAL_POWER_W)
    sim.set_defaults(fn=_cmd_simulate)

    rep = sub.add_parser("energy-report", help="summarize a telemetry CSV")
    rep.add_argument("--telemetry", required=True)
    rep.add_argument("--out", default=None)
    rep.add_argument("--reference-power", type=float, default=REFERENCE_AERIAL_POWER_W)
    rep.set_defaults(fn=_cmd_energy_report)

    st = sub.add_parser("step-response", help="rolling controller step response")
    st.add_argument("--axis", required=True, choices=["pitch", "velocity", "yaw"])
    st.add_argument("--magnitude", type=float, required=True)
    st.add_argument("--out", default=None)
    st.set_defaults(fn=_cmd_step_response)

    em = sub.add_parser("export-map", help="write the occupancy map as text")
    em.add_argument("--scenario", required=True)
    em.add_argument("--out", required=True)
    em.add_argument("--scans", type=int, default=0, help="simulated scans from the start pose (0 = ground truth)")
    em.set_defaults(fn=_cmd_export_map)

    ep = sub.add_parser("export-path", help="plan on the ground-truth map and export the path")
    ep.add_argument("--scenario", required=True)
    ep.add_argument("--policy", default="hybrid", choices=[p.value for p in Policy])
    ep.add_argument("--out", required=True)
    ep.set_defaults(fn=_cmd_export_path)
    return ap


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    return args.fn(args)


if __name__ == "__main__":
    sys.exit(main())
