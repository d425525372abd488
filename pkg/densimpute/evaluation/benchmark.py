"""
Benchmark harness.

For every (dataset, mechanism, rate, method) cell: ampute the complete data
n_repeats times, grid-search the method's hyperparameter on mean NRMSE,
then score each repeat at the chosen value (NRMSE, mean log-likelihood,
wall-clock). Cells run concurrently under a semaphore; results are merged
in key order so the report does not depend on scheduling.
"""

import asyncio
import statistics
import time
import zlib
from dataclasses import dataclass, field
from pathlib import Path
from typing import Literal

import numpy as np
import structlog
from pydantic import BaseModel, Field, model_validator

from densimpute.core.knnxkde import DistanceMetric, PointStrategy, sample_cell, sample_row
from densimpute.data.dataset import BUNDLED_DATASETS, DataMatrix, apply_normalization, bundled_path, load_csv, normalize
from densimpute.data.missingness import Mechanism, ScenarioSpec, ampute, apply_mask
from densimpute.data.synthetic import GeneratorSpec, generate, get_generator, list_generators
from densimpute.evaluation.ranking import rank_methods
from densimpute.evaluation.report import BenchmarkReport, ScoreRecord, build_manifest
from densimpute.evaluation.scoring import loglik_analytic, loglik_gaussian, loglik_histogram, nrmse
from densimpute.methods.base import BaseImputer, ImputationResult, ImputerRegistry
from densimpute.methods.imputers import DEFAULT_METHODS, build_default_registry
from densimpute.settings import default_threads

log = structlog.get_logger()

TIE_TOL = 1e-12
DEFAULT_REPEATS = 20
DEFAULT_TIMING_REPEATS = 3
DEFAULT_LOGLIK_DRAWS = 10_000


class MethodFailure(RuntimeError):
    """A method returned success=False on a scored repeat."""


class DatasetSpec(BaseModel):
    """A benchmark dataset: a CSV path, a bundled dataset name or a registered generator."""
    name: str
    path: Path | None = None
    generator: str | None = None
    n: int | None = Field(default=None, ge=1)
    seed: int | None = None
    miss_col: int | None = Field(default=None, ge=0)
    cond_col: int | None = Field(default=None, ge=0)

    @model_validator(mode="after")
    def _source(self) -> "DatasetSpec":
        if self.path is None and self.generator is None:
            if self.name in BUNDLED_DATASETS:
                self.path = bundled_path(self.name)
            elif get_generator(self.name) is not None:
                self.generator = self.name
            else:
                known = [*sorted(BUNDLED_DATASETS), *list_generators()]
                raise ValueError(f"Dataset {self.name!r} needs a path or a known name ({', '.join(known)})")
        if self.path is not None and self.generator is not None:
            raise ValueError(f"Dataset {self.name!r}: give either path or generator, not both")
        if self.generator is not None and get_generator(self.generator) is None:
            raise ValueError(f"Unknown generator {self.generator!r}; valid: {', '.join(list_generators())}")
        return self


class BenchmarkConfig(BaseModel):
    datasets: list[DatasetSpec] = Field(default_factory=list)
    methods: list[str] = Field(default_factory=lambda: list(DEFAULT_METHODS))
    mechanisms: list[Mechanism] = Field(default_factory=lambda: list(Mechanism))
    rates: list[float] = Field(default_factory=lambda: [0.2])
    n_repeats: int = Field(default=DEFAULT_REPEATS, ge=1)
    seed: int | None = None
    threads: int = Field(default_factory=default_threads, ge=1)
    tune: bool = True
    grids: dict[str, list[float]] = Field(default_factory=dict)
    loglik: bool = True
    loglik_mode: Literal["histogram", "analytic"] = "histogram"
    loglik_draws: int = Field(default=DEFAULT_LOGLIK_DRAWS, ge=1)
    timing_repeats: int = Field(default=DEFAULT_TIMING_REPEATS, ge=1)
    bandwidth: float = Field(default=0.03, gt=0)
    point_strategy: PointStrategy = PointStrategy.MEAN
    metric: DistanceMetric = DistanceMetric.NAN_STD_EUCLIDEAN
    mice_iters: int = Field(default=10, ge=1)
    mice_repeats: int = Field(default=5, ge=1)


def derive_seed(master: int, *parts) -> np.random.SeedSequence:
    """Stable stream for a combination key; independent of scheduling and process."""
    key = tuple(zlib.crc32(str(p).encode("utf-8")) for p in parts)
    return np.random.SeedSequence(master, spawn_key=key)


# ── Trials and grid search ────────────────────────────────────────────────

@dataclass
class Trial:
    """One amputation of a complete dataset, with the truth on the amputed data's scale."""
    dataset: str
    scenario: ScenarioSpec
    repeat: int
    amputed: DataMatrix
    truth_norm: np.ndarray
    scored: np.ndarray


def prepare_trials(
    dataset: str,
    X: DataMatrix,
    scenario: ScenarioSpec,
    n_repeats: int,
    seed: int,
) -> list[Trial]:
    spec = scenario.resolve(X.n_cols)
    trials = []
    for repeat in range(n_repeats):
        rng = np.random.default_rng(derive_seed(seed, dataset, spec.mechanism.value, spec.rate, repeat, "ampute"))
        amputed = apply_mask(X, ampute(X, spec, rng))
        _, params = normalize(amputed)
        trials.append(Trial(
            dataset=dataset,
            scenario=spec,
            repeat=repeat,
            amputed=amputed,
            truth_norm=apply_normalization(X, params).values,
            scored=amputed.missing_mask,
        ))
    return trials


def _method_seed(seed: int, trial: Trial, method: str, param) -> np.random.SeedSequence:
    return derive_seed(seed, trial.dataset, trial.scenario.mechanism.value, trial.scenario.rate, trial.repeat, method, param)


@dataclass
class GridSearchResult:
    best_param: float | None
    mean_scores: dict = field(default_factory=dict)
    table: list[dict] = field(default_factory=list)


def grid_search(imputer: BaseImputer, grid, trials: list[Trial], seed: int) -> GridSearchResult:
    """Pick the grid value with the lowest mean NRMSE; earlier values win ties.

    A value failing on any repeat scores +inf.
    """
    grid = list(grid)
    if not grid:
        raise ValueError("Grid must not be empty")
    result = GridSearchResult(best_param=grid[0])
    best = float("inf")

    for param in grid:
        scores = []
        for trial in trials:
            if not trial.scored.any():
                continue
            outcome = imputer.impute(trial.amputed, param, rng=np.random.default_rng(_method_seed(seed, trial, imputer.name, param)))
            score = nrmse(trial.truth_norm, outcome.normalized.values, trial.scored) if outcome.success else float("inf")
            scores.append(score)
            result.table.append({
                "param": param, "repeat": trial.repeat, "nrmse": score, "error": outcome.error,
            })
        mean = float(np.mean(scores)) if scores else float("inf")
        if not np.isfinite(mean):
            mean = float("inf")
            log.warning("grid_point_failed", method=imputer.name, param=param)
        result.mean_scores[param] = mean
        if mean < best - TIE_TOL:
            best = mean
            result.best_param = param
    return result


# ── Per-repeat scoring ────────────────────────────────────────────────────

def mean_loglik(result: ImputationResult, truth_norm: np.ndarray, mode: str, n_draws: int, rng: np.random.Generator) -> float | None:
    """Mean log-likelihood of the hidden truths under the method's per-cell model."""
    scores: list[float] = []
    if result.distributions is not None:
        dists = result.distributions
        if mode == "analytic":
            scores = [loglik_analytic(c, truth_norm[c.row, c.col]) for c in dists.cell_distributions()]
        else:
            for rd in dists.row_distributions:
                draws = sample_row(rd, n_draws, rng)
                scores.extend(
                    loglik_histogram(draws[:, j], truth_norm[rd.row, col])
                    for j, col in enumerate(rd.missing_columns)
                )
            for (row, col), cell in sorted(dists.fallback_cells.items()):
                scores.append(loglik_histogram(sample_cell(cell, n_draws, rng), truth_norm[row, col]))
    elif result.cell_models:
        scores = [loglik_gaussian(m, truth_norm[i, j]) for (i, j), m in sorted(result.cell_models.items())]
    return float(np.mean(scores)) if scores else None


# ── Runner ────────────────────────────────────────────────────────────────

@dataclass
class CellOutcome:
    records: list[ScoreRecord] = field(default_factory=list)
    grid_rows: list[dict] = field(default_factory=list)
    failures: list[dict] = field(default_factory=list)
    best_param: float | None = None


class BenchmarkRunner:
    """Runs every benchmark cell with bounded concurrency."""

    def __init__(self, config: BenchmarkConfig, registry: ImputerRegistry | None = None):
        self.config = config
        self.seed = config.seed if config.seed is not None else int(np.random.SeedSequence().entropy)
        self.registry = registry or build_default_registry(
            h=config.bandwidth,
            strategy=config.point_strategy,
            metric=config.metric,
            mice_iters=config.mice_iters,
            mice_repeats=config.mice_repeats,
        )
        self.semaphore = asyncio.Semaphore(config.threads)

    def validate(self) -> list[ScenarioSpec]:
        """Fail before any work: missing files, unknown methods, invalid scenarios."""
        for spec in self.config.datasets:
            if spec.path is not None and not spec.path.exists():
                raise FileNotFoundError(f"Dataset {spec.name!r}: file not found: {spec.path}")
        for method in self.config.methods:
            self.registry.require(method)
        return [
            ScenarioSpec(mechanism=m, rate=r)
            for m in self.config.mechanisms
            for r in self.config.rates
        ]

    def load_dataset(self, spec: DatasetSpec) -> DataMatrix:
        if spec.path is not None:
            X = load_csv(spec.path)
        else:
            seed = spec.seed if spec.seed is not None else derive_seed(self.seed, spec.name, "generate")
            X = generate(GeneratorSpec(name=spec.generator, n=spec.n), rng=np.random.default_rng(seed))
        complete = ~X.missing_mask.any(axis=1)
        if not complete.all():
            log.warning("benchmark_dropped_incomplete_rows", dataset=spec.name, rows=int((~complete).sum()))
            X = X.with_values(X.values[complete])
        return X

    def _grid_for(self, imputer: BaseImputer) -> list:
        if not self.config.tune or imputer.hyperparameter is None:
            return [imputer.default_value]
        return list(self.config.grids.get(imputer.name, imputer.grid()))

    def evaluate_cell(self, spec: DatasetSpec, X: DataMatrix, scenario: ScenarioSpec, method: str) -> CellOutcome:
        imputer = self.registry.require(method)
        scenario = scenario.model_copy(update={"miss_col": spec.miss_col, "cond_col": spec.cond_col})
        trials = prepare_trials(spec.name, X, scenario, self.config.n_repeats, self.seed)
        search = grid_search(imputer, self._grid_for(imputer), trials, self.seed)

        outcome = CellOutcome(best_param=search.best_param)
        labels = {"dataset": spec.name, "method": method, "mechanism": scenario.mechanism.value, "rate": scenario.rate}
        outcome.grid_rows = [{**labels, **row} for row in search.table]

        want_loglik = self.config.loglik and imputer.supports_likelihood
        for trial in trials:
            if not trial.scored.any():
                continue
            try:
                outcome.records.append(self._score_trial(imputer, search.best_param, trial, want_loglik))
            except Exception as e:
                log.error("benchmark_repeat_failed", **labels, repeat=trial.repeat, error=str(e))
                outcome.failures.append({**labels, "repeat": trial.repeat, "error": str(e)})
        return outcome

    def _score_trial(self, imputer: BaseImputer, param, trial: Trial, want_loglik: bool) -> ScoreRecord:
        seq = _method_seed(self.seed, trial, imputer.name, param)
        result = imputer.impute(trial.amputed, param, rng=np.random.default_rng(seq), keep_distributions=want_loglik)
        if not result.success:
            raise MethodFailure(result.error)

        timings = [result.duration_seconds]
        for _ in range(self.config.timing_repeats - 1):
            start = time.perf_counter()
            imputer.impute(trial.amputed, param, rng=np.random.default_rng(seq))
            timings.append(time.perf_counter() - start)

        loglik = None
        if want_loglik:
            loglik_rng = np.random.default_rng(derive_seed(self.seed, trial.dataset, trial.scenario.mechanism.value, trial.scenario.rate, trial.repeat, imputer.name, "loglik"))
            loglik = mean_loglik(result, trial.truth_norm, self.config.loglik_mode, self.config.loglik_draws, loglik_rng)

        return ScoreRecord(
            dataset=trial.dataset,
            method=imputer.name,
            mechanism=trial.scenario.mechanism.value,
            rate=trial.scenario.rate,
            repeat=trial.repeat,
            hyperparameter_name=imputer.hyperparameter,
            hyperparameter=param,
            nrmse=nrmse(trial.truth_norm, result.normalized.values, trial.scored),
            mean_loglik=loglik,
            wall_clock_s=statistics.median(timings),
            fallback_count=result.fallback_count,
        )

    async def _run_cell(self, spec, X, scenario, method) -> CellOutcome:
        async with self.semaphore:
            return await asyncio.to_thread(self.evaluate_cell, spec, X, scenario, method)

    async def run(self) -> BenchmarkReport:
        started = time.time()
        scenarios = self.validate()
        datasets = [(spec, self.load_dataset(spec)) for spec in self.config.datasets]
        cells = [
            (spec, X, scenario, method)
            for spec, X in datasets
            for scenario in scenarios
            for method in self.config.methods
        ]
        log.info("benchmark_start", cells=len(cells), seed=self.seed, threads=self.config.threads)

        outcomes = await asyncio.gather(*(self._run_cell(*cell) for cell in cells), return_exceptions=True)

        report = BenchmarkReport()
        chosen: list[dict] = []
        for (spec, _, scenario, method), res in zip(cells, outcomes):
            labels = {"dataset": spec.name, "method": method, "mechanism": scenario.mechanism.value, "rate": scenario.rate}
            if isinstance(res, BaseException):
                log.error("benchmark_method_failed", **labels, error=str(res))
                report.failures.append({**labels, "repeat": None, "error": f"{type(res).__name__}: {res}"})
                continue
            report.records.extend(res.records)
            report.grid_rows.extend(res.grid_rows)
            report.failures.extend(res.failures)
            chosen.append({**labels, "param": res.best_param})

        report.records.sort(key=lambda r: r.key)
        report.rank_summaries = self._rank(report.records, scenarios)
        report.manifest = build_manifest(
            "benchmark",
            self.config.model_dump(mode="json"),
            self.seed,
            chosen_hyperparameters=chosen,
            duration_seconds=round(time.time() - started, 3),
        )
        log.info("benchmark_complete", records=len(report.records), failures=len(report.failures))
        return report

    def _rank(self, records: list[ScoreRecord], scenarios: list[ScenarioSpec]) -> list:
        summaries = []
        for scenario in scenarios:
            subset = [r for r in records if r.mechanism == scenario.mechanism.value and r.rate == scenario.rate]
            if not subset:
                continue
            for metric, higher in (("nrmse", False), ("mean_loglik", True)):
                table: dict[str, dict[str, list[float]]] = {}
                for r in subset:
                    value = getattr(r, metric)
                    if value is not None:
                        table.setdefault(r.dataset, {}).setdefault(r.method, []).append(value)
                if not table:
                    continue
                means = {d: {m: float(np.mean(v)) for m, v in row.items()} for d, row in table.items()}
                summaries.append(rank_methods(means, metric=metric, higher_is_better=higher, scenario=scenario.mechanism.value, rate=scenario.rate))
        return summaries


def run_benchmark(config: BenchmarkConfig, registry: ImputerRegistry | None = None) -> BenchmarkReport:
    return asyncio.run(BenchmarkRunner(config, registry).run())
