"""Energy reports, break-even analysis, step-response metrics, and figures.

The report path renders matplotlib figures to files next to the delimited
telemetry so a run directory is self-contained: telemetry.csv, the energy
report text, and the power/track plots.
"""

from __future__ import annotations

import io
import math
from dataclasses import dataclass, field
from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt
import numpy as np

from .control import ControllerState, ControlLimits, RollingGains, rolling_mixer, rolling_pitch, rolling_velocity
from .dynamics import ControlInput, VehicleParams, step_ground
from .geometry import GroundState, s1_distance
from .mission import TELEMETRY_COLUMNS, MissionResult, TelemetryRecord
from .scene import Scene

REFERENCE_AERIAL_POWER_W = 650.0  # wheel-less craft of similar mass


def break_even_fraction(p_fly: float, p_roll: float, p_ref: float = REFERENCE_AERIAL_POWER_W) -> float:
    """Minimum rolling-time fraction for the hybrid to beat a wheel-less craft.

    Solves r*p_roll + (1-r)*p_fly = p_ref for r under a time-weighted
    average-power model.
    """
    if p_fly <= p_roll:
        raise ValueError("flying power must exceed rolling power")
    return (p_fly - p_ref) / (p_fly - p_roll)


@dataclass
class EnergyReport:
    rolling_avg_w: float | None
    rolling_std_w: float | None
    flying_avg_w: float | None
    flying_std_w: float | None
    rolling_time_s: float
    flying_time_s: float
    transition_time_s: float
    total_energy_j: float
    total_distance_m: float
    break_even: float | None
    reference_power_w: float = REFERENCE_AERIAL_POWER_W

    def to_text(self) -> str:
        buf = io.StringIO()
        buf.write("# energy-report v1\n")

        def line(key, val, fmt="{:.3f}"):
            buf.write(f"{key}: {fmt.format(val) if val is not None else 'unavailable'}\n")

        line("rolling_avg_power_w", self.rolling_avg_w)
        line("rolling_power_std_w", self.rolling_std_w)
        line("flying_avg_power_w", self.flying_avg_w)
        line("flying_power_std_w", self.flying_std_w)
        line("rolling_time_s", self.rolling_time_s)
        line("flying_time_s", self.flying_time_s)
        line("transition_time_s", self.transition_time_s)
        line("total_energy_j", self.total_energy_j)
        line("total_distance_m", self.total_distance_m)
        line("reference_power_w", self.reference_power_w)
        line("break_even_rolling_fraction", self.break_even, "{:.4f}")
        return buf.getvalue()


def _steady(records: list[TelemetryRecord], mode: str) -> np.ndarray:
    return np.array(
        [r.power_w for r in records if r.mode == mode and r.transition == "none"]
    )


def energy_report(
    records: list[TelemetryRecord], reference_power_w: float = REFERENCE_AERIAL_POWER_W
) -> EnergyReport:
    """Per-mode averages over steady segments (transitions excluded)."""
    if not records:
        raise ValueError("no telemetry")
    dt = records[1].t - records[0].t if len(records) > 1 else 0.0
    roll = _steady(records, "g")
    fly = _steady(records, "a")
    n_trans = sum(1 for r in records if r.transition != "none")
    roll_avg = float(roll.mean()) if len(roll) else None
    fly_avg = float(fly.mean()) if len(fly) else None
    be = None
    if roll_avg is not None and fly_avg is not None and fly_avg > roll_avg:
        be = break_even_fraction(fly_avg, roll_avg, reference_power_w)
    return EnergyReport(
        rolling_avg_w=roll_avg,
        rolling_std_w=float(roll.std()) if len(roll) else None,
        flying_avg_w=fly_avg,
        flying_std_w=float(fly.std()) if len(fly) else None,
        rolling_time_s=len(roll) * dt,
        flying_time_s=len(fly) * dt,
        transition_time_s=n_trans * dt,
        total_energy_j=records[-1].energy_j,
        total_distance_m=records[-1].dist_m,
        break_even=be,
        reference_power_w=reference_power_w,
    )


def parse_telemetry_csv(text: str) -> list[TelemetryRecord]:
    lines = [ln for ln in text.splitlines() if ln and not ln.startswith("#")]
    if not lines or lines[0] != TELEMETRY_COLUMNS:
        raise ValueError("unrecognized telemetry header")
    out = []
    for ln in lines[1:]:
        f = ln.split(",")
        out.append(
            TelemetryRecord(
                t=float(f[0]), px=float(f[1]), py=float(f[2]), pz=float(f[3]),
                yaw=float(f[4]), mode=f[5], transition=f[6], thrust=float(f[7]),
                power_w=float(f[8]), energy_j=float(f[9]), dist_m=float(f[10]), status=f[11],
            )
        )
    return out


# --------------------------------------------------------------------- steps


@dataclass
class StepMetrics:
    rise_time_s: float
    settle_time_s: float
    overshoot_frac: float
    diverged: bool = False


@dataclass
class StepResponse:
    axis: str
    magnitude: float
    t: np.ndarray
    y: np.ndarray
    metrics: StepMetrics


def _step_metrics(t: np.ndarray, y: np.ndarray, target: float, band: float = 0.05) -> StepMetrics:
    if target == 0.0:
        return StepMetrics(0.0, 0.0, 0.0, bool(np.max(np.abs(y)) > 1e-6))
    if not np.all(np.isfinite(y)) or np.max(np.abs(y)) > 10.0 * abs(target):
        return StepMetrics(math.inf, math.inf, math.inf, True)
    yn = y / target
    above10 = np.nonzero(yn >= 0.1)[0]
    above90 = np.nonzero(yn >= 0.9)[0]
    rise = t[above90[0]] - t[above10[0]] if len(above10) and len(above90) else math.inf
    outside = np.nonzero(np.abs(yn - 1.0) > band)[0]
    settle = t[outside[-1] + 1] if len(outside) and outside[-1] + 1 < len(t) else (
        math.inf if len(outside) == len(t) else 0.0
    )
    overshoot = max(0.0, float(yn.max()) - 1.0)
    return StepMetrics(float(rise), float(settle), overshoot, False)


def step_response_experiment(
    axis: str,
    magnitude: float,
    params: VehicleParams | None = None,
    gains: RollingGains | None = None,
    limits: ControlLimits | None = None,
    duration: float = 6.0,
) -> StepResponse:
    """Closed-loop rolling step response for one axis (pitch, velocity, yaw).

    Mirrors the tuning procedure: the pitch loop is exercised with the wheels
    held, the velocity loop on a straight line, and the yaw loop in place.
    """
    if axis not in ("pitch", "velocity", "yaw"):
        raise ValueError(f"unknown axis '{axis}'")
    params = params or VehicleParams()
    gains = gains or RollingGains()
    limits = limits or ControlLimits()
    dt = params.dt
    n = int(round(duration / dt))
    cs = ControllerState()
    state = GroundState.at_rest(np.zeros(2))
    ts = np.arange(n) * dt
    ys = np.zeros(n)
    yaw_err_filt = 0.0
    prev_yaw_err = None

    for k in range(n):
        if axis == "pitch":
            m_y = rolling_pitch(magnitude, state, gains, cs, limits, dt)
            u = ControlInput(0.0, np.array([0.0, m_y, 0.0]))
            # hold the wheels: suppress translation by zeroing thrust
            state = step_ground(state, u, dt, params)
            ys[k] = state.pitch
        elif axis == "velocity":
            a_x = rolling_velocity(magnitude, 0.0, state, gains, cs, limits, dt)
            pitch_d, thrust, m_x, m_z, _ = rolling_mixer(a_x, 0.0, state, params, limits)
            m_y = rolling_pitch(pitch_d, state, gains, cs, limits, dt)
            state = step_ground(state, ControlInput(thrust, np.array([m_x, m_y, m_z])), dt, params)
            ys[k] = state.forward_speed
        else:
            err = s1_distance(magnitude, state.yaw)
            raw = 0.0 if prev_yaw_err is None else s1_distance(err, prev_yaw_err) / dt
            alpha = dt / (limits.deriv_filter_tau + dt)
            yaw_err_filt += alpha * (raw - yaw_err_filt)
            prev_yaw_err = err
            m_z_r = gains.yaw_kp * err + gains.yaw_kd * yaw_err_filt
            pitch_d, thrust, m_x, m_z, _ = rolling_mixer(0.0, m_z_r, state, params, limits)
            m_y = rolling_pitch(pitch_d, state, gains, cs, limits, dt)
            state = step_ground(state, ControlInput(thrust, np.array([m_x, m_y, m_z])), dt, params)
            ys[k] = state.yaw
    return StepResponse(axis, magnitude, ts, ys, _step_metrics(ts, ys, magnitude))


# -------------------------------------------------------------------- figures


def render_mission_figures(result: MissionResult, scene: Scene, outdir: str | Path) -> list[Path]:
    """Write the power/energy-vs-distance and course-track figures."""
    outdir = Path(outdir)
    outdir.mkdir(parents=True, exist_ok=True)
    rec = result.records
    d = np.array([r.dist_m for r in rec])
    p = np.array([r.power_w for r in rec])
    e = np.array([r.energy_j for r in rec])
    x = np.array([r.px for r in rec])
    y = np.array([r.py for r in rec])
    aerial = np.array([r.mode == "a" for r in rec])

    fig, (ax1, ax2) = plt.subplots(2, 1, figsize=(7, 6), sharex=True)
    ax1.plot(d, p, lw=0.8, color="tab:blue")
    ax1.set_ylabel("power [W]")
    ax1.grid(alpha=0.3)
    ax2.plot(d, e / 1000.0, lw=1.2, color="tab:red")
    ax2.set_ylabel("energy [kJ]")
    ax2.set_xlabel("ground distance [m]")
    ax2.grid(alpha=0.3)
    fig.suptitle(f"{result.scenario_name} / {result.policy.value} ({result.status.value})")
    power_path = outdir / "power_energy.png"
    fig.savefig(power_path, dpi=130)
    plt.close(fig)

    fig, ax = plt.subplots(figsize=(7, 5.5))
    for wall in scene.walls:
        ax.plot([wall.p0[0], wall.p1[0]], [wall.p0[1], wall.p1[1]], "k-", lw=2)
    for box in scene.boxes:
        ax.fill(
            [box.lo[0], box.hi[0], box.hi[0], box.lo[0]],
            [box.lo[1], box.lo[1], box.hi[1], box.hi[1]],
            color="tab:red", alpha=0.6,
        )
    if aerial.any():
        ax.plot(np.where(aerial, x, np.nan), np.where(aerial, y, np.nan), "r-", lw=1.4, label="flying")
    if (~aerial).any():
        ax.plot(np.where(~aerial, x, np.nan), np.where(~aerial, y, np.nan), "b-", lw=1.4, label="rolling")
    ax.plot(x[0], y[0], "g^", ms=9, label="start")
    ax.set_aspect("equal")
    ax.set_xlabel("x [m]")
    ax.set_ylabel("y [m]")
    ax.legend(loc="upper right", fontsize=8)
    ax.set_title(f"track ({result.policy.value})")
    track_path = outdir / "course_track.png"
    fig.savefig(track_path, dpi=130)
    plt.close(fig)
    return [power_path, track_path]


def render_step_figure(resp: StepResponse, outdir: str | Path) -> Path:
    outdir = Path(outdir)
    outdir.mkdir(parents=True, exist_ok=True)
    fig, ax = plt.subplots(figsize=(6.5, 4))
    ax.plot(resp.t, resp.y, lw=1.2)
    ax.axhline(resp.magnitude, color="k", ls="--", lw=0.8)
    if resp.magnitude:
        ax.axhspan(0.95 * resp.magnitude, 1.05 * resp.magnitude, color="tab:green", alpha=0.15)
    ax.set_xlabel("time [s]")
    ax.set_ylabel(resp.axis)
    m = resp.metrics
    ax.set_title(
        f"{resp.axis} step {resp.magnitude:g}: rise {m.rise_time_s:.2f} s, "
        f"settle {m.settle_time_s:.2f} s, overshoot {100 * m.overshoot_frac:.1f}%"
    )
    ax.grid(alpha=0.3)
    path = outdir / f"step_{resp.axis}.png"
    fig.savefig(path, dpi=130)
    plt.close(fig)
    return path
