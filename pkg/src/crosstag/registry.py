"""Append-only JSONL registry of completed experiment cells.

One record per (model, source, target, policy) run:

    {"model": "vggish", "source": "a", "target": "b", "policy": "output",
     "seed": 0, "roc_auc": 85.82, "pr_auc": 41.2}

ROC/PR values are percentages. Single-domain runs are recorded with
source == target and policy "all".
"""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass
from pathlib import Path

from .errors import ManifestError

POLICIES = ("output", "all")


@dataclass(frozen=True)
class RunRecord:
    model: str
    source: str
    target: str
    policy: str
    roc_auc: float
    pr_auc: float | None = None
    seed: int | None = None

    def __post_init__(self):
        if self.policy not in POLICIES:
            raise ManifestError(f"unknown policy '{self.policy}'")


def append_record(path, record: RunRecord) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "a", encoding="utf-8") as fh:
        fh.write(json.dumps({k: v for k, v in asdict(record).items() if v is not None}) + "\n")


def read_registry(path) -> list[RunRecord]:
    path = Path(path)
    records = []
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.strip()
            if not line:
                continue
            try:
                d = json.loads(line)
                records.append(RunRecord(
                    model=d["model"], source=d["source"], target=d["target"],
                    policy=d["policy"], roc_auc=float(d["roc_auc"]),
                    pr_auc=d.get("pr_auc"), seed=d.get("seed")))
            except (json.JSONDecodeError, KeyError, ValueError) as exc:
                raise ManifestError(f"{path}:{lineno}: bad registry record ({exc})") from exc
    return records
