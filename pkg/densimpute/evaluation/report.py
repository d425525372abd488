"""
Benchmark records and report files.

A run produces append-only ScoreRecords (one per dataset, method, scenario,
rate and repeat), rank summaries, the grid-search table and a manifest that
echoes the resolved config and every seed. Files written to the output
directory:
- scores.csv       ScoreRecords, full precision
- ranks.csv        RankSummary rows
- grid_search.csv  mean NRMSE per grid point and repeat
- manifest.json    config, seeds, versions, failures
- summary_<metric>.csv  mean ± std tables in percent (only with percent=True)
"""

import json
import platform
import time
from dataclasses import asdict, dataclass, field
from enum import Enum
from importlib import metadata
from pathlib import Path

import pandas as pd
import structlog

from densimpute import __version__
from densimpute.evaluation.ranking import RankSummary

log = structlog.get_logger()

SCORE_COLUMNS = [
    "dataset", "method", "mechanism", "rate", "repeat", "hyperparameter_name",
    "hyperparameter", "nrmse", "mean_loglik", "wall_clock_s", "fallback_count",
]
TRACKED_PACKAGES = ("numpy", "scipy", "pandas", "pydantic", "structlog")


class RunStatus(str, Enum):
    COMPLETE = "complete"
    PARTIAL = "partial"
    EMPTY = "empty"


@dataclass
class ScoreRecord:
    dataset: str
    method: str
    mechanism: str
    rate: float
    repeat: int
    hyperparameter_name: str | None
    hyperparameter: float | None
    nrmse: float
    mean_loglik: float | None
    wall_clock_s: float
    fallback_count: int = 0

    def __post_init__(self):
        if not self.nrmse >= 0:
            raise ValueError(f"nrmse must be >= 0, got {self.nrmse}")

    @property
    def key(self) -> tuple:
        return (self.dataset, self.method, self.mechanism, self.rate, self.repeat)


@dataclass
class BenchmarkReport:
    records: list[ScoreRecord] = field(default_factory=list)
    rank_summaries: list[RankSummary] = field(default_factory=list)
    grid_rows: list[dict] = field(default_factory=list)
    failures: list[dict] = field(default_factory=list)
    manifest: dict = field(default_factory=dict)

    @property
    def status(self) -> RunStatus:
        if not self.records and not self.failures:
            return RunStatus.EMPTY
        return RunStatus.PARTIAL if self.failures else RunStatus.COMPLETE

    def scores_frame(self) -> pd.DataFrame:
        frame = pd.DataFrame([asdict(r) for r in self.records], columns=SCORE_COLUMNS)
        # None (no likelihood / no hyperparameter) becomes NaN
        return frame.astype({"hyperparameter": float, "mean_loglik": float})

    def ranks_frame(self) -> pd.DataFrame:
        rows = [row for summary in self.rank_summaries for row in summary.to_rows()]
        return pd.DataFrame(
            rows, columns=["scenario", "rate", "metric", "method", "mean_rank", "std_rank", "n_datasets"]
        )

    def summary(self) -> dict:
        frame = self.scores_frame()
        return {
            "status": self.status.value,
            "records": len(self.records),
            "failures": len(self.failures),
            "datasets": sorted(frame["dataset"].unique().tolist()) if len(frame) else [],
            "methods": sorted(frame["method"].unique().tolist()) if len(frame) else [],
        }


def summary_table(report: BenchmarkReport, metric: str = "nrmse", percent: bool = True) -> pd.DataFrame:
    """Mean ± std over repeats, rows (dataset, mechanism, rate), one column per method."""
    frame = report.scores_frame().dropna(subset=[metric])
    if frame.empty:
        return pd.DataFrame()
    scale = 100.0 if percent and metric == "nrmse" else 1.0
    grouped = frame.groupby(["dataset", "mechanism", "rate", "method"])[metric]
    stats = grouped.agg(["mean", "std"]).fillna(0.0)
    decimals = 2 if metric == "nrmse" else 3
    cells = stats.apply(
        lambda r: f"{r['mean'] * scale:.{decimals}f} ± {r['std'] * scale:.{decimals}f}", axis=1
    )
    return cells.unstack("method")


def environment_versions() -> dict[str, str]:
    versions = {"python": platform.python_version(), "densimpute": __version__}
    for package in TRACKED_PACKAGES:
        try:
            versions[package] = metadata.version(package)
        except metadata.PackageNotFoundError:
            versions[package] = "unknown"
    return versions


def build_manifest(command: str, config: dict, seed: int | None, **extra) -> dict:
    return {
        "command": command,
        "created_at": time.strftime("%Y-%m-%dT%H:%M:%SZ", time.gmtime()),
        "seed": seed,
        "config": config,
        "versions": environment_versions(),
        **extra,
    }


def write_manifest(manifest: dict, path: str | Path) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps(manifest, indent=2, default=str), encoding="utf-8")
    log.info("manifest_written", path=str(path))
    return path


def write_report(report: BenchmarkReport, out_dir: str | Path, percent: bool = False) -> dict[str, Path]:
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    paths = {
        "scores": out / "scores.csv",
        "ranks": out / "ranks.csv",
        "grid": out / "grid_search.csv",
    }
    report.scores_frame().to_csv(paths["scores"], index=False, encoding="utf-8")
    report.ranks_frame().to_csv(paths["ranks"], index=False, encoding="utf-8")
    pd.DataFrame(report.grid_rows, columns=["dataset", "method", "mechanism", "rate", "param", "repeat", "nrmse", "error"]).to_csv(
        paths["grid"], index=False, encoding="utf-8"
    )
    if percent:
        for metric in ("nrmse", "mean_loglik"):
            table = summary_table(report, metric=metric)
            if not table.empty:
                paths[f"summary_{metric}"] = out / f"summary_{metric}.csv"
                table.to_csv(paths[f"summary_{metric}"], encoding="utf-8")

    manifest = {**report.manifest, "summary": report.summary(), "failures": report.failures}
    paths["manifest"] = write_manifest(manifest, out / "manifest.json")
    log.info("report_written", out_dir=str(out), records=len(report.records), failures=len(report.failures))
    return paths
