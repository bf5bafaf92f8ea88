"""Closed-loop scenario runner, metrics and experiment drivers.

Plant truth lives in the world frame.  Each control tick the pose is
projected onto the path to obtain the Frenet measurements, a control law
produces a steering command, and the plant is integrated with RK4 over the
control period (zero-order hold) with the steering actuator in the loop.
"""

from __future__ import annotations

import csv
import io
import json
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace
from typing import Iterable, Sequence

import numpy as np

from .controllers import CONTROLLERS, ControllerGains, Measurements
from .errors import ProjectionError, SingularityError
from .geometry import FrenetState, ToolOffset, feasibility, offset_deviation
from .kinematics import VehicleParams, measure_omega, step_world
from .path import CORRIDOR_HALF_WIDTH, ProjectionCursor, ReferencePath, WorldPose, project

CSV_COLUMNS = (
    "t",
    "s",
    "x",
    "y_world",
    "theta",
    "delta_applied",
    "y",
    "theta_tilde",
    "y_T",
    "theta_d",
    "delta_cmd",
    "e_theta",
    "curvature",
    "segment",
)
CONVERGENCE_THRESHOLD = 0.05
PROJECTION_MARGIN = 0.5


@dataclass(frozen=True)
class Noise:
    """Per-tick Gaussian measurement noise standard deviations."""

    omega_std: float = 0.0
    y_std: float = 0.0
    theta_std: float = 0.0


@dataclass(frozen=True)
class Scenario:
    path: ReferencePath
    params: VehicleParams
    gains: ControllerGains
    offset: ToolOffset
    controller: str
    initial: WorldPose
    dt_plant: float = 0.01
    dt_control: float = 0.1
    duration: float | None = None
    noise: Noise = Noise()
    corridor: float = CORRIDOR_HALF_WIDTH
    projection_margin: float = PROJECTION_MARGIN

    @property
    def substeps(self) -> int:
        return int(round(self.dt_control / self.dt_plant))

    @property
    def distance_limit(self) -> float:
        if self.duration is None:
            return self.path.total_length - self.projection_margin
        return self.duration

    def validate(self) -> None:
        if self.controller not in CONTROLLERS:
            raise ValueError(f"unknown controller {self.controller!r}; choose from {sorted(CONTROLLERS)}")
        if not self.dt_plant > 0:
            raise ValueError("dt_plant must be positive")
        if self.dt_control < self.dt_plant:
            raise ValueError("dt_control must be at least dt_plant")
        if abs(self.substeps * self.dt_plant - self.dt_control) > 1e-9 * self.dt_control:
            raise ValueError("dt_control must be an integer multiple of dt_plant")
        if self.params.v == 0.0:
            raise ValueError("speed must be non-zero")
        if not 0 < self.distance_limit <= self.path.total_length - self.projection_margin + 1e-9:
            raise ValueError(
                f"duration {self.distance_limit:.3f} m must be positive and leave a "
                f"{self.projection_margin} m margin before the path end ({self.path.total_length:.3f} m)"
            )


@dataclass(frozen=True)
class RunStatus:
    """``kind`` is ``completed``, ``singularity``, ``diverged`` or ``skipped``."""

    kind: str
    detail: str = ""
    error_kind: str = ""
    s: float = math.nan

    @property
    def completed(self) -> bool:
        return self.kind == "completed"

    @property
    def exit_code(self) -> int:
        return {"completed": 0, "singularity": 2, "diverged": 3}.get(self.kind, 1)

    def __str__(self) -> str:
        if self.completed:
            return "completed"
        where = f" at s = {self.s:.3f} m" if math.isfinite(self.s) else ""
        return f"{self.kind}{where}: {self.detail}"


@dataclass(frozen=True)
class LogRow:
    t: float
    s: float
    x: float
    y_world: float
    theta: float
    delta_applied: float
    y: float
    theta_tilde: float
    y_T: float
    theta_d: float
    delta_cmd: float
    e_theta: float
    curvature: float
    segment: str
    # not exported to CSV
    omega_meas: float = 0.0
    gamma: float = 0.0
    y_d: float = 0.0
    delta_unclamped: float = 0.0


@dataclass
class SimLog:
    rows: list[LogRow]
    status: RunStatus
    controller: str = ""
    offset: ToolOffset = ToolOffset(0.0, 0.0)
    segment_kinds: dict[str, str] = field(default_factory=dict)

    def __len__(self) -> int:
        return len(self.rows)

    def column(self, name: str) -> np.ndarray:
        if name == "segment":
            return np.array([r.segment for r in self.rows])
        return np.array([getattr(r, name) for r in self.rows], dtype=float)

    def to_csv(self) -> str:
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(CSV_COLUMNS)
        for r in self.rows:
            writer.writerow(
                [f"{getattr(r, c):.9g}" for c in CSV_COLUMNS[:-1]] + [r.segment]
            )
        return buf.getvalue()


def parse_log_csv(text: str) -> list[dict[str, float | str]]:
    """Parse a SimLog CSV back into rows of floats (segment kept as text)."""
    reader = csv.DictReader(io.StringIO(text))
    if tuple(reader.fieldnames or ()) != CSV_COLUMNS:
        raise ValueError(f"unexpected log header {reader.fieldnames}")
    return [
        {k: (v if k == "segment" else float(v)) for k, v in row.items()}
        for row in reader
    ]


def initial_pose_for_tool_error(
    path: ReferencePath,
    offset: ToolOffset,
    tool_error: float,
    s: float = 0.0,
    theta_tilde: float = 0.0,
) -> WorldPose:
    """World pose at abscissa ``s`` whose tool deviation equals ``tool_error``."""
    c = path.curvature_at(s)
    zero = offset_deviation(FrenetState(s, 0.0, theta_tilde), offset, c)
    return path.pose_at(s, tool_error - zero.y_T, theta_tilde)


def run(scenario: Scenario, seed: int = 0) -> SimLog:
    """Simulate ``scenario`` in closed loop and return its log.

    Deterministic for a given ``seed``.  A singular controller input or a
    departure from the projection corridor stops the run; the log collected
    so far is returned with the corresponding status.
    """
    scenario.validate()
    law = CONTROLLERS[scenario.controller]
    params, gains, offset, path = scenario.params, scenario.gains, scenario.offset, scenario.path
    noise = scenario.noise
    rng = np.random.default_rng(seed)
    cursor = ProjectionCursor()
    pose = scenario.initial
    n_sub = scenario.substeps
    rows: list[LogRow] = []
    status = RunStatus("completed")
    s_limit = None
    # generous cap so that a vehicle circling in place cannot loop forever
    max_ticks = int(math.ceil(10.0 * path.total_length / abs(params.v) / scenario.dt_control)) + 10
    for tick in range(max_ticks):
        t = tick * scenario.dt_control
        try:
            proj = project(path, pose, scenario.corridor, cursor)
        except ProjectionError as exc:
            status = RunStatus("diverged", str(exc), "corridor", rows[-1].s if rows else math.nan)
            break
        fr, c = proj.frenet, proj.curvature
        if s_limit is None:
            s_limit = min(fr.s + scenario.distance_limit, path.total_length - scenario.projection_margin)
        if fr.s >= s_limit:
            break
        try:
            omega = measure_omega(pose.delta, fr, c, params, noise.omega_std, rng)
            measured = fr
            if noise.y_std > 0 or noise.theta_std > 0:
                measured = FrenetState(
                    fr.s,
                    fr.y + (float(rng.normal(0.0, noise.y_std)) if noise.y_std > 0 else 0.0),
                    fr.theta_tilde + (float(rng.normal(0.0, noise.theta_std)) if noise.theta_std > 0 else 0.0),
                )
            out = law(Measurements(measured, c, omega, params.v), offset, gains, params)
            y_T = offset_deviation(fr, offset, c).y_T
        except SingularityError as exc:
            status = RunStatus("singularity", str(exc), exc.kind, fr.s)
            break
        rows.append(
            LogRow(
                t=t,
                s=fr.s,
                x=pose.x,
                y_world=pose.y,
                theta=pose.theta,
                delta_applied=pose.delta,
                y=fr.y,
                theta_tilde=fr.theta_tilde,
                y_T=y_T,
                theta_d=out.theta_d,
                delta_cmd=out.delta_cmd,
                e_theta=out.e_theta,
                curvature=c,
                segment=path.label_at(fr.s),
                omega_meas=omega,
                gamma=out.gamma,
                y_d=out.y_d,
                delta_unclamped=out.delta_unclamped,
            )
        )
        for _ in range(n_sub):
            pose = step_world(pose, params, out.delta_cmd, scenario.dt_plant)
    else:
        status = RunStatus("diverged", "time budget exhausted before the distance limit", "timeout", rows[-1].s if rows else math.nan)
    return SimLog(
        rows,
        status,
        scenario.controller,
        offset,
        {span.label: span.kind for span in path.spans},
    )


# -- metrics -----------------------------------------------------------------


@dataclass(frozen=True)
class Quartiles:
    q25: float
    median: float
    q75: float


def _quartiles(values: np.ndarray) -> Quartiles:
    if values.size == 0:
        return Quartiles(math.nan, math.nan, math.nan)
    q25, med, q75 = np.percentile(values, [25.0, 50.0, 75.0])
    return Quartiles(float(q25), float(med), float(q75))


def settle_distance(s: np.ndarray, err: np.ndarray, threshold: float, s_from: float) -> float | None:
    """Distance from ``s_from`` to the point after which ``|err|`` stays below ``threshold``.

    The crossing is interpolated linearly between rows.  Returns ``None``
    when the last row is still above the threshold, 0 when no row is.
    """
    above = np.flatnonzero(np.abs(err) >= threshold)
    if above.size == 0:
        return 0.0
    j = int(above[-1])
    if j == err.size - 1:
        return None
    a, b = abs(err[j]), abs(err[j + 1])
    frac = (a - threshold) / (a - b) if a != b else 0.0
    return float(s[j] + frac * (s[j + 1] - s[j]) - s_from)


@dataclass(frozen=True)
class Metrics:
    median_abs_yT: float
    q25: float
    q75: float
    max_abs_yT: float
    convergence_distance: float | None
    segment_quartiles: dict[str, Quartiles]
    recovery: dict[str, float | None]
    straight: Quartiles
    curve: Quartiles
    threshold: float
    rows: int
    status: str

    @property
    def converged(self) -> bool:
        return self.convergence_distance is not None

    @property
    def segment_medians(self) -> dict[str, float]:
        return {k: q.median for k, q in self.segment_quartiles.items()}

    def to_dict(self) -> dict:
        return {
            "status": self.status,
            "rows": self.rows,
            "threshold_m": self.threshold,
            "median_abs_yT_m": self.median_abs_yT,
            "q25_m": self.q25,
            "q75_m": self.q75,
            "max_abs_yT_m": self.max_abs_yT,
            "convergence_distance_m": self.convergence_distance,
            "straight": vars(self.straight),
            "curve": vars(self.curve),
            "segments": {k: vars(q) for k, q in self.segment_quartiles.items()},
            "recovery_m": dict(self.recovery),
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, allow_nan=True) + "\n"


def compute_metrics(log: SimLog, threshold: float = CONVERGENCE_THRESHOLD) -> Metrics:
    """Distribution of ``|y_T|`` overall, per segment, on lines and on curves.

    ``recovery[label]`` is measured from the first row of the segment to the
    point after which ``|y_T|`` stays below ``threshold`` up to the end of
    that segment.
    """
    abs_err = np.abs(log.column("y_T"))
    s = log.column("s")
    labels = log.column("segment")
    overall = _quartiles(abs_err)
    seg_q: dict[str, Quartiles] = {}
    recovery: dict[str, float | None] = {}
    for label in dict.fromkeys(labels.tolist()):
        mask = labels == label
        seg_q[label] = _quartiles(abs_err[mask])
        idx = np.flatnonzero(mask)
        recovery[label] = settle_distance(s[idx], abs_err[idx], threshold, float(s[idx[0]]))
    kinds = np.array([log.segment_kinds.get(lbl, "recorded") for lbl in labels.tolist()])
    conv = settle_distance(s, abs_err, threshold, float(s[0])) if s.size else None
    return Metrics(
        median_abs_yT=overall.median,
        q25=overall.q25,
        q75=overall.q75,
        max_abs_yT=float(abs_err.max()) if abs_err.size else math.nan,
        convergence_distance=conv,
        segment_quartiles=seg_q,
        recovery=recovery,
        straight=_quartiles(abs_err[kinds == "line"]),
        curve=_quartiles(abs_err[kinds == "arc"]),
        threshold=threshold,
        rows=len(log),
        status=str(log.status),
    )


# -- experiment drivers ------------------------------------------------------


@dataclass
class RunResult:
    status: RunStatus
    log: SimLog | None = None
    metrics: Metrics | None = None


def _run_and_measure(args: tuple[Scenario, int, float]) -> RunResult:
    scenario, seed, threshold = args
    log = run(scenario, seed)
    metrics = compute_metrics(log, threshold) if len(log) else None
    return RunResult(log.status, log, metrics)


def _map(jobs: Sequence[tuple[Scenario, int, float]], workers: int) -> list[RunResult]:
    if workers <= 1 or len(jobs) <= 1:
        return [_run_and_measure(job) for job in jobs]
    with ProcessPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(_run_and_measure, jobs))


CONTROLLER_ORDER = ("classical_o", "desired_deviation", "backstepping")


def compare_controllers(
    base: Scenario,
    seed: int = 0,
    threshold: float = CONVERGENCE_THRESHOLD,
    workers: int = 1,
) -> dict[str, RunResult]:
    """Run every controller on the same path, vehicle, offset and start pose."""
    base.validate()
    jobs = [(replace(base, controller=name), seed, threshold) for name in CONTROLLER_ORDER]
    return dict(zip(CONTROLLER_ORDER, _map(jobs, workers)))


def sweep_ts(
    base: Scenario,
    ts_values: Iterable[float],
    seed: int = 0,
    threshold: float = CONVERGENCE_THRESHOLD,
    workers: int = 1,
    tool_error: float | None = None,
) -> dict[float, RunResult]:
    """One backstepping run per longitudinal offset, everything else fixed.

    With ``tool_error`` set, the start pose is recomputed for each offset so
    the initial tool deviation is identical across the sweep; otherwise the
    base start pose is reused.  Offsets that do not fit inside the path's
    tightest curve are skipped.
    """
    c_peak = base.path.max_abs_curvature
    results: dict[float, RunResult] = {}
    jobs, keys = [], []
    for ts in ts_values:
        offset = ToolOffset(float(ts), base.offset.ty)
        check = feasibility(offset, c_peak)
        if not check.feasible:
            results[float(ts)] = RunResult(
                RunStatus("skipped", f"offset norm {offset.norm:.2f} m does not fit the curvature radius")
            )
            continue
        initial = base.initial
        if tool_error is not None:
            s0 = project(base.path, base.initial, base.corridor).frenet.s
            initial = initial_pose_for_tool_error(base.path, offset, tool_error, s0)
        jobs.append((replace(base, controller="backstepping", offset=offset, initial=initial), seed, threshold))
        keys.append(float(ts))
    for key, res in zip(keys, _map(jobs, workers)):
        results[key] = res
    return {float(ts): results[float(ts)] for ts in ts_values}


def _fmt(v: float | None) -> str:
    return "nan" if v is None else f"{v:.9g}"


def sweep_csv(results: dict[float, RunResult]) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(["ts_m", "q25", "median", "q75", "max"])
    for ts, res in results.items():
        m = res.metrics
        if m is None:
            writer.writerow([_fmt(ts), "nan", "nan", "nan", "nan"])
        else:
            writer.writerow([_fmt(ts), _fmt(m.q25), _fmt(m.median_abs_yT), _fmt(m.q75), _fmt(m.max_abs_yT)])
    return buf.getvalue()


def comparison_csv(results: dict[str, RunResult]) -> str:
    """Segment-by-controller quartiles of ``|y_T|``; segment ``all`` is the whole run."""
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(["controller", "segment", "q25", "median", "q75"])
    for name, res in results.items():
        m = res.metrics
        if m is None:
            writer.writerow([name, "all", "nan", "nan", "nan"])
            continue
        writer.writerow([name, "all", _fmt(m.q25), _fmt(m.median_abs_yT), _fmt(m.q75)])
        for label, q in m.segment_quartiles.items():
            writer.writerow([name, label, _fmt(q.q25), _fmt(q.median), _fmt(q.q75)])
    return buf.getvalue()
