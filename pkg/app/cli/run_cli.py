# app/cli/run_cli.py

from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path
from typing import Any, Optional

from pydantic import ValidationError

from app.ensemble.trajectory import DivergenceError
from app.logging_config import configure_logging
from app.schemas.experiments import ExperimentConfig, PlotSpec, PresetName, Scale
from app.services.experiment_service import ExperimentCheckError, run_experiment
from app.services.plot_service import emit_plot

logger = logging.getLogger(__name__)

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_DIVERGENCE = 3
EXIT_CHECK_FAILED = 4


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="neuroevo",
        description="Neuroevolution vs gradient descent: run experiment presets and plot their outputs.",
    )
    parser.add_argument("--log-level", default=None, help="Override LOG_LEVEL from settings.")
    sub = parser.add_subparsers(dest="command", required=True)

    run = sub.add_parser("run", help="Run a preset or a JSON experiment config.")
    run.add_argument("--preset", choices=[p.value for p in PresetName], default=None)
    run.add_argument(
        "--config",
        type=Path,
        default=None,
        help="ExperimentConfig JSON, or a manifest.json from an earlier run.",
    )
    run.add_argument("--scale", choices=[s.value for s in Scale], default=None)
    run.add_argument("--seed", type=int, default=None, help="Master seed of the dynamics streams.")
    run.add_argument("--workers", type=int, default=None, help="Worker processes (default: WORKERS setting).")
    run.add_argument("--out", type=Path, default=None, help="Output directory.")
    run.add_argument("--plot", action="store_true", help="Also write the standard SVG figures.")
    run.add_argument(
        "--check",
        action="store_true",
        help="Evaluate the preset's acceptance checks; exit 4 if any fails.",
    )

    plot = sub.add_parser("plot", help="Plot columns of a CSV written by `run` to SVG.")
    plot.add_argument("csv", type=Path)
    plot.add_argument("--y", action="append", required=True, help="Column to plot (repeatable).")
    plot.add_argument("--x", default="t")
    plot.add_argument("--where", action="append", default=[], help="Row filter COLUMN=VALUE (repeatable).")
    plot.add_argument("--log-y", action="store_true")
    plot.add_argument("--title", default=None)
    plot.add_argument("--output", type=Path, default=None, help="SVG path (default: next to the CSV).")
    return parser


def load_config_file(path: Path) -> dict[str, Any]:
    """
    Read an ExperimentConfig JSON. A manifest.json is accepted too; its
    resolved config is used, which reruns the experiment exactly.
    """
    data = json.loads(path.read_text(encoding="utf-8"))
    if not isinstance(data, dict):
        raise ValueError(f"{path} must contain a JSON object")
    if "config" in data and "files" in data:
        return data["config"]
    return data


def config_from_args(args: argparse.Namespace) -> ExperimentConfig:
    data: dict[str, Any] = load_config_file(args.config) if args.config else {}
    flags = {
        "preset": args.preset,
        "scale": args.scale,
        "master_seed": args.seed,
        "workers": args.workers,
    }
    data.update({name: value for name, value in flags.items() if value is not None})
    return ExperimentConfig.model_validate(data)


def _parse_where(items: list[str]) -> dict[str, float]:
    where = {}
    for item in items:
        column, sep, value = item.partition("=")
        if not sep:
            raise ValueError(f"--where expects COLUMN=VALUE, got {item!r}")
        where[column.strip()] = float(value)
    return where


def cmd_run(args: argparse.Namespace) -> int:
    config = config_from_args(args)
    result, manifest, out = run_experiment(config, out_dir=args.out, check=args.check, plot=args.plot)
    print(f"Run complete: preset={config.preset.value} -> {out}")
    for name in manifest.files:
        print(f"  {name}")
    if args.check:
        print(f"All {len(result.checks)} acceptance checks passed")
    return EXIT_OK


def cmd_plot(args: argparse.Namespace) -> int:
    output = args.output or args.csv.with_suffix(".svg")
    spec = PlotSpec(
        x=args.x, y=args.y, where=_parse_where(args.where), log_y=args.log_y, title=args.title, output=output
    )
    path = emit_plot(args.csv, spec)
    print(f"Plot written: {path}")
    return EXIT_OK


def _report_validation_error(exc: ValidationError) -> None:
    print("Invalid configuration:", file=sys.stderr)
    for err in exc.errors():
        location = ".".join(str(part) for part in err["loc"]) or "<root>"
        print(f"  {location}: {err['msg']}", file=sys.stderr)


def main(argv: Optional[list[str]] = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    configure_logging(args.log_level)

    try:
        if args.command == "run":
            return cmd_run(args)
        return cmd_plot(args)
    except ValidationError as exc:
        _report_validation_error(exc)
        return EXIT_CONFIG
    except DivergenceError as exc:
        logger.error("Numerical divergence: %s", exc)
        print(
            f"Diverged: trajectory {exc.trajectory} at step {exc.step} (t={exc.scaled_time})",
            file=sys.stderr,
        )
        return EXIT_DIVERGENCE
    except ExperimentCheckError as exc:
        print(f"Acceptance check(s) failed: {', '.join(exc.failed)}", file=sys.stderr)
        return EXIT_CHECK_FAILED
    except (ValueError, OSError) as exc:
        logger.error("Run failed: %s", exc)
        print(f"Error: {exc}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
