"""
Operator CLI.

    python -m app.main run <config-file> [--mode mil|dist] [--accel] [--out DIR]
                           [--seed U64] [--emit-plots] [--log-level LEVEL]

Exit codes: 0 completed and acceptance passed, 1 configuration error,
2 runtime failure or failed acceptance.
"""

import argparse
import json
import sys
from pathlib import Path
from typing import Any, Dict, Optional, Sequence

import structlog

from app.config.scenario import load_scenario, scenario_digest
from app.config.settings import get_settings
from app.core.exceptions import AcceptanceError, ConfigurationError, TestbedException
from app.core.logging import setup_logging
from app.services.metrics_service import evaluate_acceptance
from app.services.run_log_service import emit_plot_data, schema_header

logger = structlog.get_logger()

EXIT_OK = 0
EXIT_CONFIG = 1
EXIT_RUNTIME = 2

MODE_ALIASES = {"mil": "mil", "dist": "distributed", "distributed": "distributed"}


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="app.main", description="Virtual reaction-wheel HIL testbed")
    sub = parser.add_subparsers(dest="command", required=True)
    run = sub.add_parser("run", help="Run a scenario")
    run.add_argument("config", type=Path, help="Scenario YAML file")
    run.add_argument("--mode", choices=sorted(MODE_ALIASES), default=None)
    run.add_argument("--accel", action="store_true", help="Virtual clock instead of 1x wall clock")
    run.add_argument("--out", type=Path, default=None)
    run.add_argument("--seed", type=int, default=None)
    run.add_argument("--emit-plots", action="store_true")
    run.add_argument("--log-level", default=None)
    return parser


def write_summary(path: Path, summary: Dict[str, Any]) -> Path:
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps(summary, indent=2, sort_keys=True, default=str), encoding="utf-8")
    return path


def run_command(args: argparse.Namespace) -> int:
    settings = get_settings()
    overrides = {
        "mode": MODE_ALIASES[args.mode] if args.mode else None,
        "seed": args.seed,
        "timing.accelerated": True if args.accel else None,
    }
    try:
        cfg = load_scenario(args.config, overrides)
    except ConfigurationError as e:
        logger.error("Configuration error", error=str(e))
        return EXIT_CONFIG

    out_dir = args.out or Path(settings.OUTPUT_DIR) / cfg.name
    log = logger.bind(scenario=cfg.name, mode=cfg.mode)
    try:
        if cfg.mode == "distributed":
            from app.services.harness_service import run_distributed

            result = run_distributed(cfg, work_dir=out_dir / "nodes", log_level=args.log_level)
        else:
            from app.services.simulation_service import run_mil

            result = run_mil(cfg)
    except TestbedException as e:
        log.error("Run failed", error=str(e), error_type=type(e).__name__)
        return EXIT_RUNTIME

    summary = dict(result.summary)
    summary.update(schema_header())
    summary["scenario"] = cfg.name
    summary["config_digest"] = scenario_digest(cfg)
    summary["log_digest"] = result.log.digest()
    failures = evaluate_acceptance(result.log, cfg, summary)
    summary["acceptance"] = {"passed": not failures, "failures": failures}
    result.log.summary = summary

    result.log.write_csv(out_dir / "run_log.csv")
    write_summary(out_dir / "summary.json", summary)
    if args.emit_plots:
        emit_plot_data(result.log, "all", out_dir / "plots")
    log.info("Outputs written", out=str(out_dir), rows=len(result.log))

    if failures:
        raise AcceptanceError(failures)
    return EXIT_OK


def main(argv: Optional[Sequence[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    settings = get_settings()
    setup_logging(args.log_level or settings.LOG_LEVEL, settings.LOG_FORMAT)
    if args.command == "run":
        try:
            return run_command(args)
        except AcceptanceError as e:
            logger.error("Acceptance failed", scenario=args.config.stem, failures=e.failures)
            return EXIT_RUNTIME
    return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
