"""
densimpute command line.

  densimpute generate  --name 2d_ring --n 500 --out ring.csv
  densimpute ampute    --input ring.csv --mechanism full_mcar --rate 0.2 --out ring_20.csv
  densimpute impute    --input ring_20.csv --method knnxkde --out ring_filled.csv
  densimpute benchmark --config bench.json --out results/
  densimpute stats     --input ring.csv

Every command writes a manifest JSON next to its output. Exit codes:
0 success (including benchmarks with partial failures), 1 fatal error,
2 usage or validation error.
"""

import argparse
import json
import sys
from pathlib import Path

import numpy as np
import structlog
from pydantic import ValidationError

from densimpute import __version__
from densimpute.core.knnxkde import (
    DEFAULT_BANDWIDTH,
    DEFAULT_INV_TAU,
    DEFAULT_N_DRAWS,
    DistanceMetric,
    PointStrategy,
    distributions_to_json,
    samples_to_frame,
)
from densimpute.data.dataset import DataMatrix, DatasetError, column_stats, correlation_summary, load_csv, write_csv
from densimpute.data.missingness import AmputationError, Mechanism, ScenarioSpec, ampute, apply_mask, write_mask_csv
from densimpute.data.synthetic import GeneratorSpec, generate, get_generator, list_generators
from densimpute.evaluation.benchmark import BenchmarkConfig, DatasetSpec, run_benchmark
from densimpute.evaluation.report import build_manifest, write_manifest, write_report
from densimpute.methods.base import ImputationResult, MethodNotImplementedError, UnknownMethodError
from densimpute.methods.imputers import DEFAULT_METHODS, build_default_registry
from densimpute.settings import configure_logging, default_threads, load_environment

log = structlog.get_logger()

EXIT_OK = 0
EXIT_FATAL = 1
EXIT_USAGE = 2


class UsageError(Exception):
    """Bad flag combination or value the parser cannot catch."""


def _resolve_seed(seed: int | None) -> int:
    return int(np.random.SeedSequence().entropy) if seed is None else seed


def _manifest_path(out: Path) -> Path:
    return out.with_suffix(".manifest.json")


def _args_config(args: argparse.Namespace) -> dict:
    return {k: (str(v) if isinstance(v, Path) else v) for k, v in vars(args).items() if k != "handler"}


def _column_index(X: DataMatrix, value: str | None) -> int | None:
    """Accept a column name or a 0-based index."""
    if value is None:
        return None
    if value in X.column_names:
        return X.column_names.index(value)
    try:
        index = int(value)
    except ValueError:
        raise UsageError(f"Unknown column {value!r}; columns: {', '.join(X.column_names)}")
    if not 0 <= index < X.n_cols:
        raise UsageError(f"Column index {index} out of range for {X.n_cols} columns")
    return index


# ── Commands ──────────────────────────────────────────────────────────────

def cmd_generate(args: argparse.Namespace) -> int:
    if get_generator(args.name) is None:
        raise UsageError(f"Unknown generator {args.name!r}; valid: {', '.join(list_generators())}")
    seed = _resolve_seed(args.seed)
    spec = GeneratorSpec(name=args.name, n=args.n, seed=seed)
    X = generate(spec)
    out = write_csv(X, args.out)
    write_manifest(
        build_manifest("generate", {**_args_config(args), "n": X.n_rows}, seed, output=str(out)),
        _manifest_path(out),
    )
    log.info("generate_complete", name=args.name, rows=X.n_rows, out=str(out))
    return EXIT_OK


def cmd_ampute(args: argparse.Namespace) -> int:
    mechanism = Mechanism(args.mechanism)
    if mechanism is Mechanism.MAR and args.cond_col is None:
        raise UsageError("MAR needs --cond-col")
    X = load_csv(args.input)
    scenario = ScenarioSpec(
        mechanism=mechanism,
        rate=args.rate,
        miss_col=_column_index(X, args.miss_col),
        cond_col=_column_index(X, args.cond_col),
    ).resolve(X.n_cols)

    seed = _resolve_seed(args.seed)
    mask = ampute(X, scenario, np.random.default_rng(seed))
    out = write_csv(apply_mask(X, mask), args.out)
    mask_out = write_mask_csv(mask, args.mask_out or out.with_suffix(".mask.csv"), X.column_names)
    realized = float((~mask).mean())
    write_manifest(
        build_manifest(
            "ampute",
            {**_args_config(args), "scenario": scenario.model_dump(mode="json")},
            seed,
            output=str(out),
            mask=str(mask_out),
            realized_rate=realized,
        ),
        _manifest_path(out),
    )
    log.info("ampute_complete", scenario=scenario.label, realized_rate=realized, out=str(out))
    return EXIT_OK


def _method_param(args: argparse.Namespace, method: str) -> float | None:
    return {"knnxkde": args.inv_tau, "knn": args.k, "softimpute": args.lam}.get(method)


def _emit_distributions(result: ImputationResult, X: DataMatrix, out_dir: Path, n_draws: int, seed: int) -> dict:
    """distributions.json in normalized coordinates, samples.csv in data units."""
    out_dir.mkdir(parents=True, exist_ok=True)
    params = result.normalization
    paths = {"distributions": out_dir / "distributions.json"}

    if result.distributions is not None:
        payload = distributions_to_json(result.distributions, X.column_names)
        payload["normalization"] = params.to_dict()
        rng = np.random.default_rng(np.random.SeedSequence(seed, spawn_key=(1,)))
        samples = samples_to_frame(result.distributions, n_draws, rng, denormalize_samples=False)
        names = list(X.column_names)
        samples[names] = samples[names].to_numpy() * params.span + params.mins
        paths["samples"] = out_dir / "samples.csv"
        samples.to_csv(paths["samples"], index=False, float_format="%.17g", encoding="utf-8")
    elif result.cell_models:
        payload = {
            "coordinates": "normalized",
            "normalization": params.to_dict(),
            "cells": [
                {"row": i, "col": j, "column": X.column_names[j], "mu": m.mu, "sigma": m.sigma}
                for (i, j), m in sorted(result.cell_models.items())
            ],
        }
    else:
        raise UsageError(f"Method {result.method!r} has no per-cell distribution to emit")

    paths["distributions"].write_text(json.dumps(payload, indent=2), encoding="utf-8")
    return {k: str(v) for k, v in paths.items()}


def cmd_impute(args: argparse.Namespace) -> int:
    registry = build_default_registry(
        h=args.bandwidth,
        n_draws=args.n_draws,
        strategy=PointStrategy(args.strategy),
        metric=DistanceMetric(args.metric),
        threads=args.threads or default_threads(),
    )
    imputer = registry.require(args.method)
    X = load_csv(args.input)
    seed = _resolve_seed(args.seed)
    emit = args.emit_distributions is not None

    result = imputer.impute(X, _method_param(args, imputer.name), rng=np.random.default_rng(seed), keep_distributions=emit)
    if not result.success:
        log.error("impute_failed", method=imputer.name, error=result.error)
        return EXIT_FATAL

    out = write_csv(result.imputed, args.out)
    extra = {"output": str(out), "param": result.param, "fallback_count": result.fallback_count}
    if emit:
        extra["emitted"] = _emit_distributions(result, X, Path(args.emit_distributions), args.n_draws, seed)
    write_manifest(build_manifest("impute", _args_config(args), seed, **extra), _manifest_path(out))
    log.info(
        "impute_complete",
        method=imputer.name,
        cells=X.n_missing,
        fallback_count=result.fallback_count,
        duration=f"{result.duration_seconds:.2f}s",
    )
    return EXIT_OK


def cmd_benchmark(args: argparse.Namespace) -> int:
    if args.config:
        config = BenchmarkConfig.model_validate_json(Path(args.config).read_text(encoding="utf-8"))
    else:
        config = BenchmarkConfig()

    overrides: dict = {}
    if args.threads is not None:
        overrides["threads"] = args.threads
    if args.seed is not None:
        overrides["seed"] = args.seed
    if args.repeats is not None:
        overrides["n_repeats"] = args.repeats
    if args.methods:
        overrides["methods"] = args.methods
    if args.datasets:
        overrides["datasets"] = [DatasetSpec(name=name) for name in args.datasets]
    # model_copy skips validation; round-trip so overrides are checked too
    config = BenchmarkConfig.model_validate(config.model_copy(update=overrides).model_dump())
    if not config.datasets:
        raise UsageError("No datasets: give --datasets or a config with a 'datasets' list")

    report = run_benchmark(config)
    paths = write_report(report, args.out, percent=args.percent)
    print(json.dumps({"status": report.status.value, **{k: str(v) for k, v in paths.items()}}, indent=2))
    return EXIT_OK


def cmd_stats(args: argparse.Namespace) -> int:
    X = load_csv(args.input)
    payload = {
        "rows": X.n_rows,
        "cols": X.n_cols,
        "missing": X.n_missing,
        "columns": column_stats(X).to_dict(),
        "correlation": correlation_summary(X).to_dict(),
    }
    text = json.dumps(payload, indent=2)
    if args.out:
        out = Path(args.out)
        out.parent.mkdir(parents=True, exist_ok=True)
        out.write_text(text, encoding="utf-8")
        write_manifest(build_manifest("stats", _args_config(args), None, output=str(out)), _manifest_path(out))
    else:
        print(text)
    return EXIT_OK


# ── Parser ────────────────────────────────────────────────────────────────

def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--seed", type=int, default=None, help="Master seed (default: drawn and recorded)")
    common.add_argument("--threads", type=int, default=None, help="Worker threads (env IMPUTE_THREADS)")
    common.add_argument("--log-level", default=None, help="DEBUG, INFO, WARNING, ERROR")
    common.add_argument("--log-json", action="store_true", default=None, help="JSON log lines on stderr")

    parser = argparse.ArgumentParser(prog="densimpute", description="Probabilistic imputation of numerical tables")
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("generate", parents=[common], help="Write a synthetic dataset")
    p.add_argument("--name", required=True, help=f"One of: {', '.join(list_generators())}")
    p.add_argument("--n", type=int, default=None, help="Rows (default per generator)")
    p.add_argument("--out", required=True, type=Path)
    p.set_defaults(handler=cmd_generate)

    p = sub.add_parser("ampute", parents=[common], help="Inject missing values into a complete CSV")
    p.add_argument("--input", required=True, type=Path)
    p.add_argument("--out", required=True, type=Path)
    p.add_argument("--mask-out", type=Path, default=None, help="Mask CSV (default: <out>.mask.csv)")
    p.add_argument("--mechanism", required=True, choices=[m.value for m in Mechanism])
    p.add_argument("--rate", type=float, required=True)
    p.add_argument("--miss-col", default=None, help="Column name or 0-based index (default: last)")
    p.add_argument("--cond-col", default=None, help="Conditioning column for MAR")
    p.set_defaults(handler=cmd_ampute)

    p = sub.add_parser("impute", parents=[common], help="Fill missing cells of a CSV")
    p.add_argument("--input", required=True, type=Path)
    p.add_argument("--out", required=True, type=Path)
    p.add_argument("--method", default="knnxkde", help=f"One of: {', '.join(DEFAULT_METHODS)}")
    p.add_argument("--inv-tau", type=float, default=DEFAULT_INV_TAU, help="knnxkde softmax 1/tau")
    p.add_argument("--bandwidth", type=float, default=DEFAULT_BANDWIDTH, help="knnxkde kernel bandwidth h")
    p.add_argument("--n-draws", type=int, default=DEFAULT_N_DRAWS)
    p.add_argument("--strategy", choices=[s.value for s in PointStrategy], default=PointStrategy.MEAN.value)
    p.add_argument("--metric", choices=[m.value for m in DistanceMetric], default=DistanceMetric.NAN_STD_EUCLIDEAN.value)
    p.add_argument("--k", type=float, default=5.0, help="knn neighbours")
    p.add_argument("--lambda", dest="lam", type=float, default=1.0, help="softimpute shrinkage")
    p.add_argument("--emit-distributions", default=None, metavar="DIR")
    p.set_defaults(handler=cmd_impute)

    p = sub.add_parser("benchmark", parents=[common], help="Run the repeated benchmark")
    p.add_argument("--config", type=Path, default=None, help="BenchmarkConfig JSON")
    p.add_argument("--out", required=True, type=Path)
    p.add_argument("--repeats", type=int, default=None)
    p.add_argument("--datasets", nargs="+", default=None, help="Generator names (replaces config datasets)")
    p.add_argument("--methods", nargs="+", default=None)
    p.add_argument("--percent", action="store_true", help="Also write mean ± std summary tables")
    p.set_defaults(handler=cmd_benchmark)

    p = sub.add_parser("stats", parents=[common], help="Column statistics and correlation summary")
    p.add_argument("--input", required=True, type=Path)
    p.add_argument("--out", type=Path, default=None)
    p.set_defaults(handler=cmd_stats)
    return parser


def main(argv: list[str] | None = None) -> int:
    load_environment()
    parser = build_parser()
    args = parser.parse_args(argv)

    try:
        configure_logging(args.log_level, args.log_json)
        # None until a command resolves it: benchmark lets its config decide
        if args.threads is not None and args.threads < 1:
            raise UsageError(f"--threads must be >= 1, got {args.threads}")
        return args.handler(args)
    except (UsageError, ValidationError, MethodNotImplementedError, UnknownMethodError) as e:
        print(f"densimpute {args.command}: error: {e}", file=sys.stderr)
        return EXIT_USAGE
    except (DatasetError, AmputationError, OSError) as e:
        log.error("command_failed", command=args.command, error=str(e))
        return EXIT_FATAL
    except ValueError as e:
        print(f"densimpute {args.command}: error: {e}", file=sys.stderr)
        return EXIT_USAGE
    except Exception as e:
        log.exception("command_crashed", command=args.command, error=str(e))
        return EXIT_FATAL


if __name__ == "__main__":
    sys.exit(main())
