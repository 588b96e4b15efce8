"""Command-line entry point: synth, run, plot, table, model dump.

Exit codes: 0 success, 2 configuration or validation error, 3 I/O error,
4 a classifier cell failed during ``run``. Two invocations writing to the
same output directory at once are not supported.
"""

from __future__ import annotations

import argparse
import logging
import sys
import time
from pathlib import Path

from . import __version__
from . import config as kv
from .errors import CellError, ConfigError, GazepipeError, TrainingError
from .harness import (
    ExperimentPlan,
    cells_csv,
    confusion_csv,
    format_table,
    format_table_csv,
    metadata_text,
    read_cells_csv,
    render_table,
    repetitions_csv,
    run_plan,
    worker_count,
)
from .ml import serialize
from .pipeline import prepare_dataset
from .storage import generator_config_from_mapping, read_dataset, write_dataset
from .synthgen import gen_dataset

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_IO = 3
EXIT_CELL = 4

logger = logging.getLogger("gazepipe")


def _add_generator_flags(p):
    p.add_argument("--experiment", choices=["head_fixed", "head_free"],
                   help="experiment kind (overrides the config file)")
    p.add_argument("--seed", type=int, help="master seed")
    p.add_argument("--degraded-nemg", action="store_true", default=None,
                   help="make left and right SCM envelopes statistically identical")
    p.add_argument("--noise-scale", type=float, help="multiplier on every noise source")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="gazepipe",
        description="Eye-gaze variation estimation from HEOG, neck EMG and IMU signals.",
    )
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    parser.add_argument("-v", "--verbose", action="store_true", help="log progress")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("synth", help="generate a synthetic dataset on disk")
    p.add_argument("--config", type=Path, help="generator key=value config file")
    p.add_argument("--out", type=Path, required=True, help="output dataset directory")
    _add_generator_flags(p)
    p.add_argument("--workers", type=int, help="generator processes (default GAZEPIPE_THREADS)")

    p = sub.add_parser("run", help="preprocess, train and evaluate; write the report")
    p.add_argument("--plan", type=Path, help="experiment plan key=value config file")
    p.add_argument("--data", type=Path,
                   help="dataset directory; without it a dataset is generated in memory")
    p.add_argument("--out", type=Path, required=True, help="report directory")
    p.add_argument("--profile", choices=["ci", "full"], help="repetition/epoch budget")
    _add_generator_flags(p)
    p.add_argument("--workers", type=int, help="worker processes (default GAZEPIPE_THREADS)")
    p.add_argument("--save-models", action="store_true",
                   help="write each cell's first-repetition model to OUT/models")

    p = sub.add_parser("plot", help="class-mean waveform figures (SVG + CSV)")
    p.add_argument("--data", type=Path, required=True, help="dataset directory")
    p.add_argument("--out", type=Path, required=True, help="figure directory")

    p = sub.add_parser("table", help="re-render a report table from its cell CSV")
    p.add_argument("cells", type=Path, help="cells.csv written by 'run'")
    p.add_argument("--csv", action="store_true", help="emit CSV instead of text")

    p = sub.add_parser("model", help="inspect serialized models")
    msub = p.add_subparsers(dest="model_command", required=True)
    d = msub.add_parser("dump", help="print a model file's header")
    d.add_argument("path", type=Path)
    return parser


def _generator_config(args, base=None):
    cfg = kv.read_kv(args.config) if getattr(args, "config", None) else dict(base or {})
    return generator_config_from_mapping(
        cfg,
        str(getattr(args, "config", None) or "<flags>"),
        experiment=args.experiment,
        master_seed=args.seed,
        degraded_nemg=args.degraded_nemg,
        noise_scale=args.noise_scale,
    )


def cmd_synth(args) -> int:
    cfg = _generator_config(args)
    t0 = time.perf_counter()
    dataset = gen_dataset(cfg, workers=worker_count(args.workers))
    path = write_dataset(dataset, args.out)
    logger.info("wrote %d segments to %s in %.1f s", len(dataset), path.parent,
                time.perf_counter() - t0)
    print(f"{len(dataset)} segments -> {path}")
    return EXIT_OK


def _load_or_generate(args, plan_cfg):
    if args.data is not None:
        return read_dataset(args.data)
    base = {"experiment": args.experiment or plan_cfg.get("experiment", "head_free")}
    if args.seed is None and "master_seed" in plan_cfg:
        base["master_seed"] = plan_cfg["master_seed"]
    args.config = None
    return gen_dataset(_generator_config(args, base), workers=worker_count(args.workers))


def cmd_run(args) -> int:
    t0 = time.perf_counter()
    plan_cfg = kv.read_kv(args.plan) if args.plan else {}
    dataset = _load_or_generate(args, plan_cfg)
    logger.info("preprocessing %d segments", len(dataset))
    prepared = prepare_dataset(dataset)
    defaults = {"experiment": dataset.experiment.value}
    if args.profile:
        plan_cfg.pop("profile", None)
        defaults["profile"] = args.profile
    if args.seed is not None:
        plan_cfg.pop("master_seed", None)
        defaults["master_seed"] = str(args.seed)
    plan = ExperimentPlan.from_mapping(plan_cfg, str(args.plan or "<flags>"), **defaults)
    if plan.experiment is not dataset.experiment:
        raise ConfigError(
            f"plan is for {plan.experiment.value} but the dataset is {dataset.experiment.value}"
        )

    def progress(done, total, key, acc):
        r, s, c = key
        logger.info("[%d/%d] rep %d %s/%s: %.1f%%", done, total, r, s, c, acc)

    report = run_plan(plan, prepared, workers=args.workers, progress=progress,
                      keep_models=args.save_models)
    out = args.out
    out.mkdir(parents=True, exist_ok=True)
    (out / "table.txt").write_text(render_table(report), encoding="utf-8")
    (out / "table.csv").write_text(format_table_csv(report.summary()), encoding="utf-8")
    (out / "cells.csv").write_text(cells_csv(report), encoding="utf-8")
    (out / "repetitions.csv").write_text(repetitions_csv(report), encoding="utf-8")
    (out / "confusion.csv").write_text(confusion_csv(report), encoding="utf-8")
    (out / "report_meta.txt").write_text(metadata_text(report), encoding="utf-8")
    if args.save_models:
        (out / "models").mkdir(exist_ok=True)
        for (s, c), model in report.models.items():
            serialize.save(model, out / "models" / f"{s.replace('+', '_')}_{c}.gzml")
    print(render_table(report), end="")
    logger.info("run finished in %.1f s", time.perf_counter() - t0)
    return EXIT_OK


def cmd_plot(args) -> int:
    from .plots import write_figures

    dataset = read_dataset(args.data)
    if len(dataset) == 0:
        raise GazepipeError("dataset is empty")
    written = write_figures(prepare_dataset(dataset), args.out)
    for p in written:
        print(p)
    return EXIT_OK


def cmd_table(args) -> int:
    summary = read_cells_csv(args.cells.read_text(encoding="utf-8"))
    print(format_table_csv(summary) if args.csv else format_table(summary), end="")
    return EXIT_OK


def cmd_model(args) -> int:
    print(serialize.format_header(serialize.read_header(args.path)))
    return EXIT_OK


COMMANDS = {"synth": cmd_synth, "run": cmd_run, "plot": cmd_plot, "table": cmd_table,
            "model": cmd_model}


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(
        level=logging.INFO if args.verbose else logging.WARNING,
        format="%(levelname)s %(name)s: %(message)s",
    )
    try:
        return COMMANDS[args.command](args)
    except CellError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CELL
    except TrainingError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CELL
    except GazepipeError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_IO


if __name__ == "__main__":
    sys.exit(main())
