"""Song-level scoring and multi-label ranking metrics.

ROC-AUC is the Mann-Whitney statistic computed with average ranks (ties
count half); PR-AUC is average precision with tied scores grouped at a
single threshold. Tags whose evaluation split lacks a positive or a
negative example are skipped and reported, never imputed; macro averages
run over the surviving tags.
"""

from __future__ import annotations

import csv
import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .autodiff import Tensor
from .data import DatasetManifest, TagVocabulary, encode_targets
from .dsp import DspConfig, MelSpectrogram, sequential_chunks
from .errors import DataError, VocabMismatchError
from .melcache import MelCache
from .models import Model


def _average_ranks(x: np.ndarray) -> np.ndarray:
    """1-based ranks with ties averaged."""
    order = np.argsort(x, kind="mergesort")
    sx = x[order]
    ranks = np.empty(x.size, dtype=np.float64)
    boundaries = np.flatnonzero(np.diff(sx)) + 1
    starts = np.concatenate([[0], boundaries])
    stops = np.concatenate([boundaries, [x.size]])
    for lo, hi in zip(starts, stops):
        ranks[order[lo:hi]] = 0.5 * (lo + hi + 1)
    return ranks


def roc_auc(scores, labels) -> float | None:
    """P(score+ > score-) + P(tie)/2 via average ranks; None if one class only."""
    scores = np.asarray(scores, dtype=np.float64)
    labels = np.asarray(labels)
    pos = labels > 0
    n_pos = int(pos.sum())
    n_neg = labels.size - n_pos
    if n_pos == 0 or n_neg == 0:
        return None
    ranks = _average_ranks(scores)
    return float((ranks[pos].sum() - n_pos * (n_pos + 1) / 2.0) / (n_pos * n_neg))


def pr_auc(scores, labels) -> float | None:
    """Average precision over descending-score thresholds, ties grouped."""
    scores = np.asarray(scores, dtype=np.float64)
    labels = np.asarray(labels) > 0
    n_pos = int(labels.sum())
    if n_pos == 0:
        return None
    order = np.argsort(-scores, kind="mergesort")
    s_sorted = scores[order]
    y_sorted = labels[order].astype(np.float64)
    tp = np.cumsum(y_sorted)
    k = np.arange(1, scores.size + 1, dtype=np.float64)
    # indices where a threshold group (run of equal scores) ends
    group_end = np.flatnonzero(np.diff(s_sorted) != 0)
    group_end = np.concatenate([group_end, [scores.size - 1]])
    precision = tp[group_end] / k[group_end]
    recall = tp[group_end] / n_pos
    prev_recall = np.concatenate([[0.0], recall[:-1]])
    return float(np.sum((recall - prev_recall) * precision))


@dataclass
class EvalReport:
    per_tag: dict[str, dict]
    macro_roc_auc: float
    macro_pr_auc: float
    n_songs: int
    skipped_tags: list[str] = field(default_factory=list)

    def to_json(self) -> str:
        return json.dumps({
            "macro_roc_auc": self.macro_roc_auc,
            "macro_pr_auc": self.macro_pr_auc,
            "n_songs": self.n_songs,
            "skipped_tags": self.skipped_tags,
            "per_tag": self.per_tag,
        }, indent=2, sort_keys=True)

    @classmethod
    def from_json(cls, text: str) -> "EvalReport":
        d = json.loads(text)
        return cls(per_tag=d["per_tag"], macro_roc_auc=d["macro_roc_auc"],
                   macro_pr_auc=d["macro_pr_auc"], n_songs=d["n_songs"],
                   skipped_tags=d["skipped_tags"])

    def write_per_tag_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(["tag", "roc_auc", "pr_auc"])
            for tag, metrics in self.per_tag.items():
                if tag in self.skipped_tags:
                    continue
                writer.writerow([tag, metrics["roc_auc"], metrics["pr_auc"]])


def _sigmoid(z: np.ndarray) -> np.ndarray:
    out = np.empty_like(z, dtype=np.float64)
    np.exp(-np.abs(z), out=out)
    return np.where(z >= 0, 1.0 / (1.0 + out), out / (1.0 + out))


def song_scores(model: Model, mel: MelSpectrogram, dsp: DspConfig,
                batch_size: int = 16) -> np.ndarray:
    """Mean of per-chunk sigmoid scores over the recording's eval chunks."""
    chunks = sequential_chunks(mel, model.config.chunk, dsp.pad_value)
    scores = np.zeros(model.config.n_tags, dtype=np.float64)
    for lo in range(0, len(chunks), batch_size):
        batch = np.stack(chunks[lo:lo + batch_size])[:, None, :, :]
        logits = model.forward(Tensor(batch), train=False).data
        scores += _sigmoid(logits).sum(axis=0)
    return scores / len(chunks)


def metrics_from_scores(score_matrix: np.ndarray, label_matrix: np.ndarray,
                        vocab: TagVocabulary, n_songs: int) -> EvalReport:
    per_tag: dict[str, dict] = {}
    skipped: list[str] = []
    rocs, prs = [], []
    for i, tag in enumerate(vocab.tags):
        roc = roc_auc(score_matrix[:, i], label_matrix[:, i])
        pr = pr_auc(score_matrix[:, i], label_matrix[:, i])
        if roc is None or pr is None:
            skipped.append(tag)
            per_tag[tag] = {"roc_auc": None, "pr_auc": None}
            continue
        per_tag[tag] = {"roc_auc": roc, "pr_auc": pr}
        rocs.append(roc)
        prs.append(pr)
    if not rocs:
        raise DataError("every tag was single-class in this split; nothing to evaluate")
    return EvalReport(per_tag=per_tag,
                      macro_roc_auc=float(np.mean(rocs)),
                      macro_pr_auc=float(np.mean(prs)),
                      n_songs=n_songs, skipped_tags=skipped)


def evaluate(model: Model, manifest: DatasetManifest, vocab: TagVocabulary, split: str,
             dsp: DspConfig, cache: MelCache,
             max_duration_sec: float | None = None, batch_size: int = 16) -> EvalReport:
    """Per-tag and macro ROC/PR-AUC over all songs in a split (stable song order)."""
    entries = sorted(manifest.split_entries(split), key=lambda e: e.recording_id)
    if not entries:
        raise DataError(f"split '{split}' of '{manifest.dataset_id}' is empty")
    scores = np.zeros((len(entries), vocab.size))
    labels = np.zeros((len(entries), vocab.size))
    for i, entry in enumerate(entries):
        mel = cache.get(manifest.resolve_audio(entry), max_duration_sec)
        scores[i] = song_scores(model, mel, dsp, batch_size=batch_size)
        labels[i] = encode_targets(entry, vocab)
    return metrics_from_scores(scores, labels, vocab, n_songs=len(entries))


def validate_checkpoint_vocab(ckpt_vocab, vocab: TagVocabulary) -> None:
    if tuple(ckpt_vocab) != vocab.tags:
        raise VocabMismatchError(
            f"checkpoint vocabulary ({len(ckpt_vocab)} tags) does not match "
            f"dataset vocabulary ({vocab.size} tags)")
