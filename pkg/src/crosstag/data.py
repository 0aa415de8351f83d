"""Dataset manifests, tag vocabularies, duration caps, splits, targets.

Manifests are line-delimited JSON, one record per line:

    {"recording_id": "...", "audio_path": "audio/x.wav", "tags": ["a", "b"],
     "split": "train", "duration_sec": 4.0}

`split` and `duration_sec` are optional. Audio paths resolve relative to
the manifest's directory. A CSV import (same columns, tags separated by
'|') is provided for convenience.
"""

from __future__ import annotations

import csv
import hashlib
import json
from collections import Counter
from dataclasses import dataclass, replace
from pathlib import Path

import numpy as np

from .errors import ConfigError, ManifestError, VocabularyError

SPLITS = ("train", "valid", "test")


@dataclass(frozen=True)
class ManifestEntry:
    recording_id: str
    audio_path: str
    tags: tuple[str, ...]
    split: str | None = None
    duration_sec: float | None = None


@dataclass
class DatasetManifest:
    dataset_id: str
    entries: list[ManifestEntry]
    base_dir: Path | None = None

    def __post_init__(self):
        seen = set()
        for e in self.entries:
            if e.recording_id in seen:
                raise ManifestError(f"duplicate recording_id '{e.recording_id}'")
            seen.add(e.recording_id)
            if e.split is not None and e.split not in SPLITS:
                raise ManifestError(f"record '{e.recording_id}': bad split '{e.split}'")

    def split_entries(self, split: str) -> list[ManifestEntry]:
        return [e for e in self.entries if e.split == split]

    def resolve_audio(self, entry: ManifestEntry) -> Path:
        p = Path(entry.audio_path)
        if p.is_absolute() or self.base_dir is None:
            return p
        return self.base_dir / p


@dataclass(frozen=True)
class DatasetConfig:
    top_k_tags: int
    max_duration_sec: float | None = None

    def __post_init__(self):
        if self.top_k_tags < 1:
            raise ConfigError(f"top_k_tags must be >= 1, got {self.top_k_tags}")


# per-corpus defaults: vocabulary size and duration cap (seconds)
DATASET_PRESETS = {
    "magnatagatune": DatasetConfig(top_k_tags=50),
    "fma_medium": DatasetConfig(top_k_tags=20),
    "lyra": DatasetConfig(top_k_tags=30),
    "turkish_makam": DatasetConfig(top_k_tags=30, max_duration_sec=150.0),
    "hindustani": DatasetConfig(top_k_tags=20, max_duration_sec=780.0),
    "carnatic": DatasetConfig(top_k_tags=20, max_duration_sec=330.0),
}


@dataclass(frozen=True)
class TagVocabulary:
    tags: tuple[str, ...]
    relative_frequencies: tuple[float, ...]

    def __post_init__(self):
        if len(set(self.tags)) != len(self.tags):
            raise VocabularyError("duplicate tags in vocabulary")

    @property
    def size(self) -> int:
        return len(self.tags)

    def index(self) -> dict[str, int]:
        return {t: i for i, t in enumerate(self.tags)}


def load_manifest(path, dataset_id: str | None = None) -> DatasetManifest:
    path = Path(path)
    entries = []
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.strip()
            if not line:
                continue
            try:
                rec = json.loads(line)
            except json.JSONDecodeError as exc:
                raise ManifestError(f"{path}:{lineno}: invalid JSON ({exc})") from exc
            try:
                entries.append(ManifestEntry(
                    recording_id=str(rec["recording_id"]),
                    audio_path=str(rec["audio_path"]),
                    tags=tuple(rec.get("tags", [])),
                    split=rec.get("split"),
                    duration_sec=rec.get("duration_sec"),
                ))
            except KeyError as exc:
                raise ManifestError(f"{path}:{lineno}: missing field {exc}") from exc
    return DatasetManifest(dataset_id=dataset_id or path.stem, entries=entries,
                           base_dir=path.parent)


def save_manifest(manifest: DatasetManifest, path) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", encoding="utf-8") as fh:
        for e in manifest.entries:
            rec = {"recording_id": e.recording_id, "audio_path": e.audio_path,
                   "tags": list(e.tags)}
            if e.split is not None:
                rec["split"] = e.split
            if e.duration_sec is not None:
                rec["duration_sec"] = e.duration_sec
            fh.write(json.dumps(rec) + "\n")


def import_csv_manifest(path, dataset_id: str | None = None) -> DatasetManifest:
    path = Path(path)
    entries = []
    with open(path, newline="", encoding="utf-8") as fh:
        for row in csv.DictReader(fh):
            if "recording_id" not in row or "audio_path" not in row:
                raise ManifestError(f"{path}: rows need recording_id and audio_path columns")
            tags = tuple(t for t in (row.get("tags") or "").split("|") if t)
            dur = row.get("duration_sec")
            entries.append(ManifestEntry(
                recording_id=row["recording_id"], audio_path=row["audio_path"], tags=tags,
                split=row.get("split") or None,
                duration_sec=float(dur) if dur else None))
    return DatasetManifest(dataset_id=dataset_id or path.stem, entries=entries,
                           base_dir=path.parent)


def build_vocabulary(manifest: DatasetManifest, cfg: DatasetConfig) -> TagVocabulary:
    """Top-k tags by recording count; frequency ties break lexicographically."""
    counts = Counter()
    for e in manifest.entries:
        counts.update(set(e.tags))
    if len(counts) < cfg.top_k_tags:
        raise VocabularyError(
            f"{len(counts)} distinct tags < top_k_tags {cfg.top_k_tags}")
    ranked = sorted(counts.items(), key=lambda kv: (-kv[1], kv[0]))[: cfg.top_k_tags]
    n = max(1, len(manifest.entries))
    return TagVocabulary(tags=tuple(t for t, _ in ranked),
                         relative_frequencies=tuple(c / n for _, c in ranked))


def apply_duration_cap(manifest: DatasetManifest, cfg: DatasetConfig) -> DatasetManifest:
    """Cap each entry's effective duration; audio is truncated at load time."""
    if cfg.max_duration_sec is None:
        return manifest
    cap = cfg.max_duration_sec
    entries = [replace(e, duration_sec=min(e.duration_sec, cap))
               if e.duration_sec is not None else e
               for e in manifest.entries]
    return DatasetManifest(dataset_id=manifest.dataset_id, entries=entries,
                           base_dir=manifest.base_dir)


def _split_fraction(recording_id: str, seed: int) -> float:
    h = hashlib.blake2b(recording_id.encode(), key=str(seed).encode(), digest_size=8)
    return int.from_bytes(h.digest(), "big") / 2.0 ** 64


def assign_splits(manifest: DatasetManifest, ratios=(0.8, 0.1, 0.1),
                  seed: int = 0) -> DatasetManifest:
    """Deterministically split by keyed hash of recording_id; existing splits stay."""
    if abs(sum(ratios) - 1.0) > 1e-9 or len(ratios) != 3:
        raise ConfigError(f"split ratios must be three values summing to 1, got {ratios}")
    bounds = (ratios[0], ratios[0] + ratios[1])
    entries = []
    for e in manifest.entries:
        if e.split is not None:
            entries.append(e)
            continue
        u = _split_fraction(e.recording_id, seed)
        split = "train" if u < bounds[0] else ("valid" if u < bounds[1] else "test")
        entries.append(replace(e, split=split))
    return DatasetManifest(dataset_id=manifest.dataset_id, entries=entries,
                           base_dir=manifest.base_dir)


def encode_targets(entry: ManifestEntry, vocab: TagVocabulary) -> np.ndarray:
    """Multi-hot target over the vocabulary; out-of-vocabulary tags are ignored."""
    out = np.zeros(vocab.size, dtype=np.float32)
    tagset = set(entry.tags)
    for i, tag in enumerate(vocab.tags):
        if tag in tagset:
            out[i] = 1.0
    return out
