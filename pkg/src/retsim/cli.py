"""Command-line entry point: headless runs, experiment suites, focus-curve
sweeps, and the interactive gateway server.

Exit codes: 0 success, 1 run failure (contact or limit abort in a
safety-strict run), 2 malformed configuration or arguments.
"""

from __future__ import annotations

import argparse
import csv
import dataclasses
import json
import logging
import os
import socket
import sys
from pathlib import Path

import numpy as np

from .config import ConfigError, parse_run_config, serialize_run_config
from .imaging import cr_score, intensity, make_default_texture, render_frame, sigma_law_for
from .sim import (
    AxialController,
    Engine,
    SimConfig,
    SimMode,
    report_to_json,
    run_experiment,
    run_metrics,
    run_registration,
)

log = logging.getLogger("retsim")

_LOG_LEVELS = {
    "error": logging.ERROR,
    "warn": logging.WARNING,
    "info": logging.INFO,
    "debug": logging.DEBUG,
}


def configure_logging() -> None:
    """Apply RETSIM_LOG_LEVEL (error|warn|info|debug; default info)."""
    name = os.environ.get("RETSIM_LOG_LEVEL", "info").lower()
    if name not in _LOG_LEVELS:
        raise ConfigError(
            f"RETSIM_LOG_LEVEL must be one of {sorted(_LOG_LEVELS)}, got '{name}'"
        )
    logging.basicConfig(
        level=_LOG_LEVELS[name], format="%(levelname)s %(name)s: %(message)s"
    )


def _load_config(path: str) -> SimConfig:
    try:
        text = Path(path).read_text(encoding="utf-8")
    except OSError as exc:
        raise ConfigError(f"cannot read config file '{path}': {exc}") from exc
    return parse_run_config(text)


def cmd_run(args: argparse.Namespace) -> int:
    cfg = _load_config(args.config)
    if args.seed is not None:
        cfg = dataclasses.replace(cfg, seed=args.seed)
    if args.mode is not None:
        cfg = dataclasses.replace(cfg, mode=SimMode(args.mode))

    prior = None
    report: dict = {"config": _config_echo(cfg)}
    if cfg.axial_controller is not AxialController.OPTIMIZER:
        log.info("registering surface prior before the run")
        registration = run_registration(cfg)
        prior = registration.model
        report["registration"] = {
            "duration_s": registration.duration_s,
            "sample_count": registration.sample_count,
        }

    engine = Engine(cfg, prior=prior)
    run_log = engine.run()
    out = Path(args.out)
    out.parent.mkdir(parents=True, exist_ok=True)
    out.write_text(run_log.to_jsonl(), encoding="utf-8")

    try:
        report["metrics"] = run_metrics(run_log)
    except ValueError:
        report["metrics"] = None  # aborted before enough samples for metrics
    report["aborted"] = run_log.aborted
    report["abort_reason"] = run_log.abort_reason
    report_path = out.with_suffix(".report.json")
    report_path.write_text(json.dumps(report, indent=2, sort_keys=True) + "\n",
                           encoding="utf-8")
    log.info("run complete: %d records -> %s", len(run_log.records), out)
    if run_log.aborted:
        log.error("run aborted: %s", run_log.abort_reason)
        return 1
    return 0


def _config_echo(cfg: SimConfig) -> dict:
    return {"yaml": serialize_run_config(cfg), "mode": cfg.mode.value, "seed": cfg.seed}


def cmd_experiment(args: argparse.Namespace) -> int:
    report = run_experiment(args.name, seeds=args.seeds)
    out = Path(args.out if args.out else f"{args.name}_report.json")
    out.parent.mkdir(parents=True, exist_ok=True)
    out.write_text(report_to_json(report), encoding="utf-8")
    log.info("experiment %s -> %s", args.name, out)
    return 0


def cmd_focus_sweep(args: argparse.Namespace) -> int:
    if not (0.0 < args.min_um < args.max_um) or args.step_um <= 0.0:
        raise ConfigError("need 0 < --min_um < --max_um and --step_um > 0")
    distances_um = np.arange(args.min_um, args.max_um + 0.5 * args.step_um, args.step_um)
    texture = make_default_texture()
    profile = SimConfig().focus
    law = sigma_law_for(texture, profile, 128, 300e-6)
    rows = []
    for i, d_um in enumerate(distances_um):
        frame = render_frame(
            texture, (0.0, 0.0), float(d_um) * 1e-6, profile, 100003 * 7 + i, law=law,
        )
        rows.append((float(d_um), cr_score(frame), intensity(frame)))
    out = Path(args.out)
    out.parent.mkdir(parents=True, exist_ok=True)
    with open(out, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(["distance_um", "cr", "intensity"])
        for d_um, cr, inten in rows:
            writer.writerow([f"{d_um:.3f}", f"{cr:.6f}", f"{inten:.6f}"])
    log.info("focus sweep: %d rows -> %s", len(rows), out)
    return 0


def cmd_serve(args: argparse.Namespace) -> int:
    cfg = _load_config(args.config) if args.config else SimConfig(script=None)
    # Refuse a busy port before handing off to the server loop.
    probe = socket.socket(socket.AF_INET, socket.SOCK_STREAM)
    try:
        probe.bind((args.host, args.port))
    except OSError as exc:
        raise ConfigError(f"cannot bind {args.host}:{args.port}: {exc}") from exc
    finally:
        probe.close()

    import uvicorn

    from .gateway import create_app

    app = create_app(cfg)
    log.info("serving on %s:%d", args.host, args.port)
    uvicorn.run(app, host=args.host, port=args.port, log_level="warning")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="retsim",
        description="Retinal-scanning robot simulator: runs, experiments, and calibration.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p_run = sub.add_parser("run", help="execute one simulation from a config file")
    p_run.add_argument("config", help="YAML run-configuration path")
    p_run.add_argument("--seed", type=int, default=None, help="override sim.seed")
    p_run.add_argument("--mode", choices=[m.value for m in SimMode], default=None)
    p_run.add_argument("--out", default="run_log.jsonl", help="tick log output path")
    p_run.set_defaults(func=cmd_run)

    p_exp = sub.add_parser("experiment", help="run a named experiment suite")
    p_exp.add_argument("name", help="exp1 | exp2 | exp3 | user_task")
    p_exp.add_argument("--out", default=None, help="report output path")
    p_exp.add_argument("--seeds", type=int, nargs="+", default=None)
    p_exp.set_defaults(func=cmd_experiment)

    p_sweep = sub.add_parser("focus-sweep", help="tabulate the focus response curve")
    p_sweep.add_argument("--min_um", type=float, required=True)
    p_sweep.add_argument("--max_um", type=float, required=True)
    p_sweep.add_argument("--step_um", type=float, required=True)
    p_sweep.add_argument("--out", default="focus_sweep.csv")
    p_sweep.set_defaults(func=cmd_focus_sweep)

    p_serve = sub.add_parser("serve", help="serve the interactive steering gateway")
    p_serve.add_argument("config", nargs="?", default=None, help="optional YAML config")
    p_serve.add_argument("--host", default="127.0.0.1")
    p_serve.add_argument("--port", type=int, default=8750)
    p_serve.set_defaults(func=cmd_serve)
    return parser


def main(argv: list[str] | None = None) -> int:
    try:
        configure_logging()
    except ConfigError as exc:
        print(f"retsim: {exc}", file=sys.stderr)
        return 2
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"retsim: {exc}", file=sys.stderr)
        return 2
    except ValueError as exc:
        print(f"retsim: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
