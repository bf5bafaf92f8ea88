"""Command-line entry point: simulate, compare, sweep-ts, validate, build-path."""

from __future__ import annotations

import argparse
import json
import logging
import os
import sys
import tempfile
from pathlib import Path
from typing import Sequence

from . import simulator
from .config import RunConfig, load_config, static_checks
from .errors import ConfigError, GuidanceError

logger = logging.getLogger("implement_guidance")

EXIT_OK = 0
EXIT_CONFIG = 1
EXIT_WARNINGS = 4


def write_atomic(path: Path, text: str) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.", suffix=".tmp")
    try:
        with os.fdopen(fd, "w", encoding="utf-8", newline="\n") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def _load(args: argparse.Namespace) -> RunConfig:
    cfg = load_config(args.config, args.overrides)
    if args.out is not None:
        cfg.out_dir = args.out
    if args.seed is not None:
        cfg.seed = args.seed
    return cfg


def _precheck(cfg: RunConfig) -> bool:
    errors = [f for f in static_checks(cfg) if f.level == "error"]
    for f in errors:
        print(f"error: {f.message}", file=sys.stderr)
    return not errors


def _fmt_distance(d: float | None) -> str:
    return "not converged" if d is None else f"{d:.2f} m"


def _say(args: argparse.Namespace, text: str) -> None:
    if not args.quiet:
        print(text)


def cmd_simulate(args: argparse.Namespace) -> int:
    cfg = _load(args)
    if not _precheck(cfg):
        return EXIT_CONFIG
    scenario = cfg.scenario()
    log = simulator.run(scenario, cfg.seed)
    metrics = simulator.compute_metrics(log, cfg.convergence_threshold_m) if len(log) else None
    out = Path(cfg.out_dir)
    write_atomic(out / "log.csv", log.to_csv())
    payload = metrics.to_json() if metrics else json.dumps({"status": str(log.status), "rows": 0}, indent=2) + "\n"
    write_atomic(out / "metrics.txt", payload)
    median = f"{metrics.median_abs_yT:.3f} m" if metrics else "n/a"
    conv = _fmt_distance(metrics.convergence_distance) if metrics else "n/a"
    _say(args, f"{cfg.controller}: {log.status}; median |y_T| = {median}; convergence distance = {conv}")
    return log.status.exit_code


def cmd_compare(args: argparse.Namespace) -> int:
    cfg = _load(args)
    if not _precheck(cfg):
        return EXIT_CONFIG
    results = simulator.compare_controllers(cfg.scenario(), cfg.seed, cfg.convergence_threshold_m, args.workers)
    out = Path(cfg.out_dir)
    for name, res in results.items():
        write_atomic(out / f"log_{name}.csv", res.log.to_csv())
        if res.metrics is not None:
            write_atomic(out / f"metrics_{name}.txt", res.metrics.to_json())
        median = f"{res.metrics.median_abs_yT:.3f} m" if res.metrics else "n/a"
        _say(args, f"{name}: {res.status}; median |y_T| = {median}")
    write_atomic(out / "comparison.csv", simulator.comparison_csv(results))
    if any(r.status.completed for r in results.values()):
        return EXIT_OK
    return next(iter(results.values())).status.exit_code


def cmd_sweep_ts(args: argparse.Namespace) -> int:
    cfg = _load(args)
    values = args.values if args.values else cfg.sweep_ts_values_m
    base = cfg.scenario()
    results = simulator.sweep_ts(
        base, values, cfg.seed, cfg.convergence_threshold_m, args.workers, tool_error=cfg.initial_tool_error_m
    )
    out = Path(cfg.out_dir)
    for ts, res in results.items():
        if res.metrics is None:
            print(f"warning: T_s = {ts:g} m skipped ({res.status})", file=sys.stderr)
            continue
        write_atomic(out / f"log_ts_{ts:+g}.csv", res.log.to_csv())
        _say(args, f"T_s = {ts:+g} m: {res.status}; median |y_T| = {res.metrics.median_abs_yT:.3f} m; "
                   f"curve median = {res.metrics.curve.median:.3f} m")
    write_atomic(out / "sweep.csv", simulator.sweep_csv(results))
    if any(r.status.completed for r in results.values()):
        return EXIT_OK
    codes = [r.status.exit_code for r in results.values()]
    return codes[0] if codes else EXIT_CONFIG


def cmd_validate(args: argparse.Namespace) -> int:
    cfg = _load(args)
    findings = static_checks(cfg)
    for f in findings:
        _say(args, f"{f.level}: {f.message}")
    if any(f.level == "error" for f in findings):
        return EXIT_CONFIG
    if findings:
        return EXIT_WARNINGS
    _say(args, "ok: no violations")
    return EXIT_OK


def cmd_build_path(args: argparse.Namespace) -> int:
    cfg = _load(args)
    path = cfg.build_path()
    write_atomic(Path(cfg.out_dir) / "path.csv", path.to_csv())
    _say(args, f"path: {len(path)} samples, {path.total_length:.3f} m")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--out", default=None, help="output directory (overrides out_dir)")
    common.add_argument("--seed", type=int, default=None, help="random seed (overrides seed)")
    common.add_argument("--quiet", action="store_true", help="suppress the summary output")

    parser = argparse.ArgumentParser(prog="implement-guidance", description=__doc__, parents=[common])
    sub = parser.add_subparsers(dest="command", required=True)

    def add(name: str, func, help_text: str) -> argparse.ArgumentParser:
        p = sub.add_parser(name, help=help_text, parents=[common])
        p.add_argument("config", help="YAML run configuration")
        p.add_argument("overrides", nargs="*", metavar="key=value", help="configuration overrides")
        p.set_defaults(func=func)
        return p

    add("simulate", cmd_simulate, "run one closed-loop scenario")
    p = add("compare", cmd_compare, "run the three controllers on the same scenario")
    p.add_argument("--workers", type=int, default=1)
    p = add("sweep-ts", cmd_sweep_ts, "backstepping runs over longitudinal tool offsets")
    p.add_argument("--values", type=float, nargs="+", default=None, metavar="TS_M")
    p.add_argument("--workers", type=int, default=1)
    add("validate", cmd_validate, "static feasibility and tuning checks")
    add("build-path", cmd_build_path, "write the reference path as CSV")
    return parser


def main(argv: Sequence[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.ERROR if args.quiet else logging.WARNING, format="%(levelname)s: %(message)s")
    try:
        return args.func(args)
    except (ConfigError, GuidanceError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
