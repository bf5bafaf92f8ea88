"""Flat YAML run configuration with explicit-unit keys."""

from __future__ import annotations

import dataclasses
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Sequence

import yaml

from .controllers import CONTROLLERS, ControllerGains
from .errors import ConfigError
from .geometry import ToolOffset
from .kinematics import VehicleParams
from .path import ReferencePath, build_path, field_course_segments, load_path, read_points_csv
from .simulator import Noise, Scenario, initial_pose_for_tool_error


@dataclass
class RunConfig:
    path_kind: str = "field_course"  # or "csv"
    path_csv: str | None = None
    path_ds_m: float = 0.05
    path_smoothing_samples: int = 5
    l1_m: float = 30.0
    l2_m: float = 30.0
    l3_m: float = 30.0
    c1_radius_m: float = 15.0
    c1_turn_deg: float = 90.0
    c2_radius_m: float = 10.0
    c2_turn_deg: float = -90.0

    wheelbase_m: float = 1.5
    delta_max_deg: float = 30.0
    delta_rate_max_dps: float = 30.0
    speed_mps: float = 0.75

    k_y_per_m: float = 0.21
    k_theta_per_m: float = 0.63
    ts_m: float = -2.5
    ty_m: float = -0.5
    controller: str = "backstepping"

    initial_s_m: float = 0.0
    initial_tool_error_m: float = 1.0
    initial_heading_error_deg: float = 0.0

    dt_plant_s: float = 0.01
    dt_control_s: float = 0.1
    duration_m: float | None = None
    corridor_half_width_m: float = 10.0
    convergence_threshold_m: float = 0.05

    noise_omega_std_rps: float = 0.0
    noise_y_std_m: float = 0.0
    noise_theta_std_rad: float = 0.0

    sweep_ts_values_m: list[float] = field(default_factory=lambda: [-2.0, -1.0, 0.0, 1.0, 2.0])
    seed: int = 0
    out_dir: str = "out"

    # -- construction ------------------------------------------------------
    @classmethod
    def from_mapping(cls, data: dict[str, Any]) -> "RunConfig":
        known = {f.name for f in dataclasses.fields(cls)}
        unknown = sorted(set(data) - known)
        if unknown:
            raise ConfigError(f"unknown configuration keys: {', '.join(unknown)}")
        cfg = cls(**data)
        cfg._coerce()
        return cfg

    def _coerce(self) -> None:
        for f in dataclasses.fields(self):
            value = getattr(self, f.name)
            if value is None:
                continue
            try:
                if f.type in ("float", "float | None"):
                    setattr(self, f.name, float(value))
                elif f.type == "int":
                    if isinstance(value, float) and not value.is_integer():
                        raise ValueError(value)
                    setattr(self, f.name, int(value))
                elif f.type == "list[float]":
                    setattr(self, f.name, [float(v) for v in value])
                elif f.type in ("str", "str | None"):
                    setattr(self, f.name, str(value))
            except (TypeError, ValueError) as exc:
                raise ConfigError(f"{f.name}: cannot interpret {value!r} as {f.type}") from exc
        if self.path_kind not in ("field_course", "csv"):
            raise ConfigError(f"path_kind must be 'field_course' or 'csv', got {self.path_kind!r}")
        if self.path_kind == "csv" and not self.path_csv:
            raise ConfigError("path_kind 'csv' requires path_csv")
        if self.controller not in CONTROLLERS:
            raise ConfigError(f"controller must be one of {sorted(CONTROLLERS)}, got {self.controller!r}")

    def apply_overrides(self, overrides: Sequence[str]) -> "RunConfig":
        """Return a copy with ``key=value`` overrides applied (values parsed as YAML)."""
        data = dataclasses.asdict(self)
        for item in overrides:
            key, sep, raw = item.partition("=")
            if not sep:
                raise ConfigError(f"override {item!r} is not of the form key=value")
            data[key.strip()] = yaml.safe_load(raw)
        return RunConfig.from_mapping(data)

    # -- domain objects ------------------------------------------------------
    def vehicle(self) -> VehicleParams:
        try:
            return VehicleParams(
                self.wheelbase_m,
                math.radians(self.delta_max_deg),
                math.radians(self.delta_rate_max_dps),
                self.speed_mps,
            )
        except ValueError as exc:
            raise ConfigError(str(exc)) from exc

    def gains(self) -> ControllerGains:
        try:
            return ControllerGains(self.k_y_per_m, self.k_theta_per_m)
        except ValueError as exc:
            raise ConfigError(str(exc)) from exc

    def offset(self) -> ToolOffset:
        return ToolOffset(self.ts_m, self.ty_m)

    def build_path(self) -> ReferencePath:
        c_max = self.vehicle().c_max
        if self.path_kind == "csv":
            return load_path(read_points_csv(self.path_csv), self.path_smoothing_samples, c_max=c_max)
        segments = field_course_segments(
            (self.l1_m, self.l2_m, self.l3_m),
            self.c1_radius_m,
            math.radians(self.c1_turn_deg),
            self.c2_radius_m,
            math.radians(self.c2_turn_deg),
        )
        return build_path(segments, ds=self.path_ds_m, c_max=c_max)

    def scenario(self, path: ReferencePath | None = None, gains: ControllerGains | None = None) -> Scenario:
        path = path or self.build_path()
        offset = self.offset()
        initial = initial_pose_for_tool_error(
            path,
            offset,
            self.initial_tool_error_m,
            self.initial_s_m,
            math.radians(self.initial_heading_error_deg),
        )
        return Scenario(
            path=path,
            params=self.vehicle(),
            gains=gains or self.gains(),
            offset=offset,
            controller=self.controller,
            initial=initial,
            dt_plant=self.dt_plant_s,
            dt_control=self.dt_control_s,
            duration=self.duration_m,
            noise=Noise(self.noise_omega_std_rps, self.noise_y_std_m, self.noise_theta_std_rad),
            corridor=self.corridor_half_width_m,
        )


def load_config(source: str | Path | None, overrides: Sequence[str] = ()) -> RunConfig:
    """Read a YAML mapping (or start from defaults when ``source`` is None)."""
    data: dict[str, Any] = {}
    if source is not None:
        try:
            with open(source, encoding="utf-8") as fh:
                loaded = yaml.safe_load(fh)
        except OSError as exc:
            raise ConfigError(f"cannot read config {source}: {exc}") from exc
        except yaml.YAMLError as exc:
            raise ConfigError(f"cannot parse config {source}: {exc}") from exc
        if loaded is None:
            loaded = {}
        if not isinstance(loaded, dict):
            raise ConfigError(f"{source}: top level must be a mapping")
        data = loaded
    cfg = RunConfig.from_mapping(data)
    return cfg.apply_overrides(overrides) if overrides else cfg


@dataclass(frozen=True)
class Finding:
    level: str  # "error" or "warning"
    message: str


def static_checks(cfg: RunConfig) -> list[Finding]:
    """Feasibility and tuning checks that need no simulation."""
    findings: list[Finding] = []
    if cfg.speed_mps == 0.0:
        findings.append(Finding("error", "speed_mps must be non-zero for distance-based control"))
    try:
        params = cfg.vehicle()
        gains = cfg.gains()
        path = cfg.build_path()
    except Exception as exc:  # any construction failure is a hard violation
        findings.append(Finding("error", str(exc)))
        return findings
    offset = cfg.offset()
    c_peak = path.max_abs_curvature
    if c_peak > 0.0:
        radius = 1.0 / c_peak
        if offset.norm >= radius:
            findings.append(
                Finding("error", f"offset norm {offset.norm:.2f} m ≥ curvature radius {radius:.2f} m: hypothesis H5")
            )
        if abs(offset.ts * c_peak) >= 1.0 - 1e-6:
            findings.append(
                Finding(
                    "error",
                    f"|T_s * c_max| = {abs(offset.ts * c_peak):.4f} ≥ 1: desired-deviation target undefined (arcsin domain)",
                )
            )
    if abs(offset.ty) * params.c_max >= 1.0:
        findings.append(
            Finding(
                "warning",
                f"|T_y| = {abs(offset.ty):.2f} m reaches the minimum turning radius "
                f"{1.0 / params.c_max:.2f} m: 1 - gamma*T_y can vanish",
            )
        )
    if gains.ratio_warning:
        findings.append(
            Finding(
                "warning",
                f"k_theta = {gains.k_theta:.3g} < 3 * k_y = {3 * gains.k_y:.3g}: angular loop not much faster than lateral loop",
            )
        )
    try:
        cfg.scenario(path, gains).validate()
    except Exception as exc:
        findings.append(Finding("error", str(exc)))
    return findings
