"""Rank aggregation of methods across datasets for one (scenario, rate)."""

from dataclasses import dataclass, field
from typing import Mapping

import numpy as np
from scipy.stats import rankdata


@dataclass
class RankSummary:
    metric: str
    scenario: str = ""
    rate: float | None = None
    mean_rank: dict[str, float] = field(default_factory=dict)
    std_rank: dict[str, float] = field(default_factory=dict)
    n_datasets: dict[str, int] = field(default_factory=dict)
    per_dataset: dict[str, dict[str, float]] = field(default_factory=dict)
    excluded: list[tuple[str, str]] = field(default_factory=list)

    def to_rows(self) -> list[dict]:
        return [
            {
                "scenario": self.scenario,
                "rate": self.rate,
                "metric": self.metric,
                "method": method,
                "mean_rank": self.mean_rank[method],
                "std_rank": self.std_rank[method],
                "n_datasets": self.n_datasets[method],
            }
            for method in sorted(self.mean_rank, key=lambda m: (self.mean_rank[m], m))
        ]


def _is_missing(value) -> bool:
    return value is None or not np.isfinite(value)


def rank_methods(
    scores: Mapping[str, Mapping[str, float | None]],
    metric: str = "nrmse",
    higher_is_better: bool = False,
    scenario: str = "",
    rate: float | None = None,
) -> RankSummary:
    """scores[dataset][method] -> score. Rank 1 is best; ties share the mean rank."""
    summary = RankSummary(metric=metric, scenario=scenario, rate=rate)
    collected: dict[str, list[float]] = {}

    for dataset in sorted(scores):
        row = scores[dataset]
        present = {}
        for method in sorted(row):
            if _is_missing(row[method]):
                summary.excluded.append((dataset, method))
            else:
                present[method] = float(row[method])
        if not present:
            continue
        methods = list(present)
        values = np.array([present[m] for m in methods])
        ranks = rankdata(-values if higher_is_better else values, method="average")
        summary.per_dataset[dataset] = dict(zip(methods, ranks.tolist()))
        for method, rank in zip(methods, ranks):
            collected.setdefault(method, []).append(float(rank))

    for method, ranks in collected.items():
        summary.mean_rank[method] = float(np.mean(ranks))
        summary.std_rank[method] = float(np.std(ranks))
        summary.n_datasets[method] = len(ranks)
    return summary
