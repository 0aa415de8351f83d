"""Cross-domain aggregation: raw transfer matrices, per-column min-max
normalization, the model/policy-averaged aggregate grid, per-target bar
summaries, and best-source lookup.

Conventions: grids are [source, target] with ROC-AUC percentages; the
diagonal holds the single-domain score under the "all" policy and is absent
(NaN) under "output"; normalization runs per target column over the N-1
off-diagonal entries and maps the best source to 1, the worst to 0
(all-equal columns collapse to 0.5). The aggregate is the element-wise mean
of every (model, policy) normalized grid.
"""

from __future__ import annotations

import csv
import importlib.resources
import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import MissingCellError, RegistryConflictError, ShapeError
from .registry import RunRecord

PAPER_DATASETS = ("magnatagatune", "fma_medium", "lyra", "turkish_makam",
                  "hindustani", "carnatic")
PAPER_MODELS = ("vggish", "musicnn", "ast")
PAPER_POLICIES = ("output", "all")


@dataclass
class TransferMatrix:
    model: str
    policy: str
    datasets: tuple[str, ...]
    grid: np.ndarray = field(repr=False)  # [source, target], NaN where absent

    @property
    def n(self) -> int:
        return len(self.datasets)

    def column(self, target: str) -> np.ndarray:
        """Off-diagonal source scores for one target, in dataset order."""
        j = self.datasets.index(target)
        keep = [i for i in range(self.n) if i != j]
        return self.grid[keep, j]


@dataclass
class AggregateMatrix:
    datasets: tuple[str, ...]
    grid: np.ndarray = field(repr=False)  # values in [0, 1], NaN diagonal


def _ordered_unique(values) -> tuple:
    seen: dict = {}
    for v in values:
        seen.setdefault(v, None)
    return tuple(seen)


def collect_matrices(records: list[RunRecord], datasets=None, models=None,
                     policies=None) -> list[TransferMatrix]:
    """Group registry records into complete per-(model, policy) grids.

    Every off-diagonal (source, target) cell must be present for every
    model/policy combination; duplicates must agree. Diagonal cells are
    taken from source == target records under "all" and stay absent under
    "output".
    """
    datasets = tuple(datasets) if datasets else _ordered_unique(
        [r.source for r in records] + [r.target for r in records])
    models = tuple(models) if models else _ordered_unique(r.model for r in records)
    policies = tuple(policies) if policies else _ordered_unique(r.policy for r in records)
    index = {d: i for i, d in enumerate(datasets)}
    n = len(datasets)

    cells: dict[tuple, float] = {}
    for r in records:
        key = (r.model, r.policy, r.source, r.target)
        if key in cells and abs(cells[key] - r.roc_auc) > 1e-9:
            raise RegistryConflictError(
                f"conflicting scores for {key}: {cells[key]} vs {r.roc_auc}")
        cells[key] = r.roc_auc

    missing = []
    matrices = []
    for model in models:
        for policy in policies:
            grid = np.full((n, n), np.nan)
            for src in datasets:
                for tgt in datasets:
                    if src == tgt and policy != "all":
                        continue
                    key = (model, policy, src, tgt)
                    if key not in cells:
                        if src == tgt:
                            continue  # single-domain score is optional
                        missing.append(key)
                        continue
                    grid[index[src], index[tgt]] = cells[key]
            matrices.append(TransferMatrix(model=model, policy=policy,
                                           datasets=datasets, grid=grid))
    if missing:
        listing = ", ".join(f"({m}, {p}, {s}->{t})" for m, p, s, t in missing[:8])
        raise MissingCellError(
            f"{len(missing)} missing off-diagonal cells, e.g. {listing}")
    return matrices


def minmax_normalize_column(column: np.ndarray) -> np.ndarray:
    """Map the N-1 source scores of a column to [0, 1]; all-equal gives 0.5."""
    column = np.asarray(column, dtype=np.float64)
    lo, hi = column.min(), column.max()
    if hi == lo:
        return np.full_like(column, 0.5)
    return (column - lo) / (hi - lo)


def normalize_matrix(tm: TransferMatrix) -> np.ndarray:
    """Per-target-column min-max over the off-diagonal cells; NaN diagonal."""
    n = tm.n
    out = np.full((n, n), np.nan)
    for j in range(n):
        keep = [i for i in range(n) if i != j]
        out[keep, j] = minmax_normalize_column(tm.grid[keep, j])
    return out


def aggregate(matrices: list[TransferMatrix]) -> AggregateMatrix:
    """Element-wise mean of all normalized (model, policy) grids."""
    if not matrices:
        raise ShapeError("aggregate: no matrices")
    datasets = matrices[0].datasets
    for tm in matrices:
        if tm.datasets != datasets:
            raise ShapeError(f"aggregate: dataset axes disagree "
                             f"({tm.datasets} vs {datasets})")
    stack = np.stack([normalize_matrix(tm) for tm in matrices])
    return AggregateMatrix(datasets=datasets, grid=stack.mean(axis=0))


def bar_summary(matrices: list[TransferMatrix], policy: str) -> dict:
    """Per-target mean raw scores per source (over models), plus the mean
    single-domain reference taken from the "all" diagonals."""
    chosen = [tm for tm in matrices if tm.policy == policy]
    if not chosen:
        raise MissingCellError(f"no matrices for policy '{policy}'")
    datasets = chosen[0].datasets
    diag = [tm for tm in matrices if tm.policy == "all"]
    out: dict[str, dict[str, float | None]] = {}
    for j, target in enumerate(datasets):
        bars: dict[str, float | None] = {}
        for i, source in enumerate(datasets):
            if i == j:
                continue
            bars[source] = float(np.mean([tm.grid[i, j] for tm in chosen]))
        singles = [tm.grid[j, j] for tm in diag if np.isfinite(tm.grid[j, j])]
        bars["single_domain"] = float(np.mean(singles)) if singles else None
        out[target] = bars
    return out


def best_source(agg: AggregateMatrix, target: str) -> list[str]:
    """Sources achieving the column maximum (all of them, when tied)."""
    j = agg.datasets.index(target)
    col = agg.grid[:, j]
    finite = np.isfinite(col)
    top = np.nanmax(col)
    return [agg.datasets[i] for i in range(len(col))
            if finite[i] and col[i] == top]


# -- published-score fixtures -------------------------------------------------


def reference_scores_path() -> Path:
    return Path(importlib.resources.files("crosstag") / "data" /
                "reference_transfer_scores.csv")


def load_score_table(path) -> list[RunRecord]:
    """Read a model,policy,source,target,roc_auc CSV into registry records."""
    records = []
    with open(path, newline="", encoding="utf-8") as fh:
        for row in csv.DictReader(fh):
            records.append(RunRecord(model=row["model"], policy=row["policy"],
                                     source=row["source"], target=row["target"],
                                     roc_auc=float(row["roc_auc"])))
    return records


def load_reference_matrices() -> list[TransferMatrix]:
    return collect_matrices(load_score_table(reference_scores_path()),
                            datasets=PAPER_DATASETS, models=PAPER_MODELS,
                            policies=PAPER_POLICIES)


# -- emission -----------------------------------------------------------------


def write_aggregate_csv(agg: AggregateMatrix, path) -> None:
    """N x N grid; blank cells on the diagonal."""
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["source"] + list(agg.datasets))
        for i, src in enumerate(agg.datasets):
            row = [src]
            for j in range(len(agg.datasets)):
                row.append("" if not np.isfinite(agg.grid[i, j])
                           else f"{agg.grid[i, j]:.6f}")
            writer.writerow(row)


def read_aggregate_csv(path) -> AggregateMatrix:
    with open(path, newline="") as fh:
        rows = list(csv.reader(fh))
    datasets = tuple(rows[0][1:])
    grid = np.full((len(datasets), len(datasets)), np.nan)
    for i, row in enumerate(rows[1:]):
        for j, cell in enumerate(row[1:]):
            if cell:
                grid[i, j] = float(cell)
    return AggregateMatrix(datasets=datasets, grid=grid)


def write_bars_csv(bars: dict, path) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["target", "source", "mean_roc_auc"])
        for target, per_source in bars.items():
            for source, value in per_source.items():
                writer.writerow([target, source, "" if value is None else f"{value:.4f}"])


def write_aggregate_json(agg: AggregateMatrix, bars_by_policy: dict, path) -> None:
    payload = {
        "datasets": list(agg.datasets),
        "aggregate": [[None if not np.isfinite(v) else round(float(v), 6) for v in row]
                      for row in agg.grid],
        "best_source": {t: best_source(agg, t) for t in agg.datasets},
        "bars": bars_by_policy,
    }
    Path(path).write_text(json.dumps(payload, indent=2, sort_keys=True))
