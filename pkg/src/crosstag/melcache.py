"""On-disk cache of computed log-mel spectrograms.

File format (little-endian): magic "CCMS", format version u32, n_mels u32,
n_frames u32, then row-major float32 values. One file per (audio content,
DSP config, duration cap) key; writes go through a temp file and an atomic
rename, so concurrent writers of the same key settle last-writer-wins with
identical content.
"""

from __future__ import annotations

import hashlib
import json
import os
import struct
from dataclasses import asdict
from pathlib import Path

import numpy as np

from .dsp import DspConfig, MelSpectrogram, load_clip, log_mel
from .errors import CheckpointError

MAGIC = b"CCMS"
VERSION = 1
_HEADER = struct.Struct("<4sIII")


def write_mel(path, mel: MelSpectrogram) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    values = np.ascontiguousarray(mel.values, dtype="<f4")
    tmp = path.with_suffix(path.suffix + f".tmp{os.getpid()}")
    with open(tmp, "wb") as fh:
        fh.write(_HEADER.pack(MAGIC, VERSION, mel.n_mels, mel.n_frames))
        fh.write(values.tobytes())
    os.replace(tmp, path)


def read_mel(path, frame_rate: float) -> MelSpectrogram:
    path = Path(path)
    blob = path.read_bytes()
    if len(blob) < _HEADER.size:
        raise CheckpointError(f"{path}: truncated mel cache header")
    magic, version, n_mels, n_frames = _HEADER.unpack_from(blob)
    if magic != MAGIC:
        raise CheckpointError(f"{path}: bad magic {magic!r}")
    if version != VERSION:
        raise CheckpointError(f"{path}: unsupported mel cache version {version}")
    expected = _HEADER.size + 4 * n_mels * n_frames
    if len(blob) != expected:
        raise CheckpointError(f"{path}: expected {expected} bytes, found {len(blob)}")
    values = np.frombuffer(blob, dtype="<f4", offset=_HEADER.size).reshape(n_mels, n_frames)
    return MelSpectrogram(values=values.copy(), frame_rate=frame_rate)


def _config_digest(cfg: DspConfig) -> str:
    return hashlib.blake2b(
        json.dumps(asdict(cfg), sort_keys=True).encode(), digest_size=8).hexdigest()


class MelCache:
    """Keyed store of log-mel spectrograms under a root directory.

    With `keep_in_memory` (the default) decoded spectrograms also stay in a
    process-local dict, so repeated epochs touch the disk once per file.
    """

    def __init__(self, root, cfg: DspConfig, keep_in_memory: bool = True):
        self.root = Path(root)
        self.cfg = cfg
        self._cfg_digest = _config_digest(cfg)
        self._memory: dict[str, MelSpectrogram] | None = {} if keep_in_memory else None
        self._key_memo: dict[tuple, str] = {}

    def key(self, audio_path, max_duration_sec: float | None = None) -> str:
        memo = (str(audio_path), max_duration_sec)
        if memo in self._key_memo:
            return self._key_memo[memo]
        h = hashlib.blake2b(digest_size=16)
        h.update(Path(audio_path).read_bytes())
        h.update(b"\x00" + self._cfg_digest.encode())
        if max_duration_sec is not None:
            h.update(b"\x00cap" + repr(float(max_duration_sec)).encode())
        digest = h.hexdigest()
        self._key_memo[memo] = digest
        return digest

    def path_for(self, key: str) -> Path:
        return self.root / f"{key}.ccms"

    def has(self, audio_path, max_duration_sec: float | None = None) -> bool:
        return self.path_for(self.key(audio_path, max_duration_sec)).exists()

    def get(self, audio_path, max_duration_sec: float | None = None) -> MelSpectrogram:
        """Return the cached mel for this audio, computing and storing on miss."""
        key = self.key(audio_path, max_duration_sec)
        if self._memory is not None and key in self._memory:
            return self._memory[key]
        path = self.path_for(key)
        if path.exists():
            mel = read_mel(path, self.cfg.frame_rate)
        else:
            clip = load_clip(audio_path, max_duration_sec)
            mel = log_mel(clip, self.cfg)
            write_mel(path, mel)
        if self._memory is not None:
            self._memory[key] = mel
        return mel
