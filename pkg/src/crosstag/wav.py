"""Minimal PCM WAV reading/writing (16-bit and 32-bit integer formats).

Stereo input is averaged down to mono at load time.
"""

from __future__ import annotations

import wave
from pathlib import Path

import numpy as np

from .errors import InvalidAudioError


def read_wav(path) -> tuple[np.ndarray, int]:
    """Load a WAV file as (mono float32 samples in [-1, 1], sample_rate)."""
    path = Path(path)
    try:
        with wave.open(str(path), "rb") as wf:
            n_channels = wf.getnchannels()
            sampwidth = wf.getsampwidth()
            rate = wf.getframerate()
            n_frames = wf.getnframes()
            raw = wf.readframes(n_frames)
    except (wave.Error, EOFError, OSError) as exc:
        raise InvalidAudioError(f"{path}: not a readable WAV file ({exc})") from exc

    if sampwidth == 2:
        data = np.frombuffer(raw, dtype="<i2").astype(np.float32) / 32768.0
    elif sampwidth == 4:
        data = np.frombuffer(raw, dtype="<i4").astype(np.float32) / 2147483648.0
    else:
        raise InvalidAudioError(f"{path}: unsupported sample width {sampwidth} bytes")
    if n_channels > 1:
        data = data.reshape(-1, n_channels).mean(axis=1)
    if data.size == 0:
        raise InvalidAudioError(f"{path}: empty audio stream")
    return data, rate


def write_wav(path, samples: np.ndarray, sample_rate: int, sampwidth: int = 2) -> None:
    """Write mono float samples in [-1, 1] as integer PCM."""
    samples = np.asarray(samples, dtype=np.float64)
    if sampwidth == 2:
        pcm = np.clip(np.round(samples * 32768.0), -32768, 32767).astype("<i2")
    elif sampwidth == 4:
        pcm = np.clip(np.round(samples * 2147483648.0), -2147483648, 2147483647).astype("<i4")
    else:
        raise InvalidAudioError(f"unsupported sample width {sampwidth} bytes")
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with wave.open(str(path), "wb") as wf:
        wf.setnchannels(1)
        wf.setsampwidth(sampwidth)
        wf.setframerate(sample_rate)
        wf.writeframes(pcm.tobytes())
