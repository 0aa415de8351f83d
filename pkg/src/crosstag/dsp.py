"""Log-mel front end: resampling, STFT, mel filterbank, chunking.

All functions are pure; identical inputs give bitwise-identical outputs.
Conventions the rest of the pipeline relies on:

- frames cover samples [t*hop, t*hop + fft_size), no center padding, so
  n_frames = 1 + floor((n_samples - fft_size) / hop_size)
- periodic Hann window, magnitude-squared one-sided spectrum
- HTK mel scale (2595 * log10(1 + f/700)); triangular filters integrated
  over each FFT bin's frequency span rather than sampled at bin centers,
  which keeps narrow low-frequency filters from vanishing at coarse FFT
  resolution
- natural log compression with an additive floor
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from functools import lru_cache
from pathlib import Path

import numpy as np
from numpy.lib.stride_tricks import as_strided

from .errors import ConfigError, DegenerateFilterbankError, InvalidAudioError, TooShortError
from .wav import read_wav

# resampler quality knobs: 64-tap-per-phase windowed sinc, Kaiser window
_TAPS_HALF = 32
_KAISER_BETA = 8.6
_ROLLOFF = 0.9475


@dataclass(frozen=True)
class DspConfig:
    target_sample_rate: int = 16000
    fft_size: int = 512
    hop_size: int = 256
    n_mels: int = 128
    f_min: float = 0.0
    f_max: float = 8000.0
    log_floor: float = 1e-10

    def __post_init__(self):
        if self.hop_size > self.fft_size:
            raise ConfigError(f"hop_size {self.hop_size} > fft_size {self.fft_size}")
        if self.f_max > self.target_sample_rate / 2:
            raise ConfigError(f"f_max {self.f_max} above Nyquist {self.target_sample_rate / 2}")
        if self.f_min < 0 or self.f_min > self.f_max:
            raise ConfigError(f"need 0 <= f_min <= f_max, got [{self.f_min}, {self.f_max}]")
        if self.n_mels < 1:
            raise ConfigError(f"n_mels must be >= 1, got {self.n_mels}")
        if self.log_floor <= 0:
            raise ConfigError("log_floor must be positive")

    @property
    def n_bins(self) -> int:
        return self.fft_size // 2 + 1

    @property
    def frame_rate(self) -> float:
        return self.target_sample_rate / self.hop_size

    @property
    def pad_value(self) -> float:
        """Fill value for chunks that run past the end of a recording."""
        return float(np.log(self.log_floor))


@dataclass
class AudioClip:
    samples: np.ndarray
    sample_rate: int

    def __post_init__(self):
        self.samples = np.asarray(self.samples, dtype=np.float32)
        if self.samples.ndim != 1 or self.samples.size == 0:
            raise InvalidAudioError(f"need non-empty mono samples, got shape {self.samples.shape}")
        if not np.all(np.isfinite(self.samples)):
            raise InvalidAudioError("audio contains non-finite samples")
        if self.sample_rate <= 0:
            raise InvalidAudioError(f"sample rate must be positive, got {self.sample_rate}")

    @property
    def duration_sec(self) -> float:
        return self.samples.size / self.sample_rate


@dataclass
class MelSpectrogram:
    values: np.ndarray  # [n_mels, n_frames], log-compressed power
    frame_rate: float

    @property
    def n_mels(self) -> int:
        return self.values.shape[0]

    @property
    def n_frames(self) -> int:
        return self.values.shape[1]


@dataclass(frozen=True)
class ChunkSpec:
    duration_sec: float
    n_frames: int

    @classmethod
    def from_duration(cls, duration_sec: float, cfg: DspConfig) -> "ChunkSpec":
        n_samples = round(duration_sec * cfg.target_sample_rate)
        if n_samples < cfg.fft_size:
            raise ConfigError(f"chunk of {duration_sec}s is shorter than one FFT frame")
        frames = 1 + (n_samples - cfg.fft_size) // cfg.hop_size
        return cls(duration_sec=duration_sec, n_frames=frames)


# per-architecture chunk durations (seconds)
CHUNK_DURATIONS = {"vggish": 3.69, "musicnn": 3.0, "ast": 8.0}


def chunk_spec_for(arch: str, cfg: DspConfig) -> ChunkSpec:
    return ChunkSpec.from_duration(CHUNK_DURATIONS[arch], cfg)


def n_frames_for(n_samples: int, cfg: DspConfig) -> int:
    if n_samples < cfg.fft_size:
        raise TooShortError(f"{n_samples} samples < fft_size {cfg.fft_size}")
    return 1 + (n_samples - cfg.fft_size) // cfg.hop_size


def load_clip(path, max_duration_sec: float | None = None) -> AudioClip:
    """Read a WAV file to a mono clip, truncating to the duration cap if set."""
    samples, rate = read_wav(path)
    if max_duration_sec is not None:
        samples = samples[: int(round(max_duration_sec * rate))]
    return AudioClip(samples=samples, sample_rate=rate)


# -- resampling ---------------------------------------------------------------


def _kaiser_window(x: np.ndarray, half_width: float) -> np.ndarray:
    u = x / half_width
    inside = np.abs(u) <= 1.0
    w = np.zeros_like(x)
    w[inside] = np.i0(_KAISER_BETA * np.sqrt(1.0 - u[inside] ** 2)) / np.i0(_KAISER_BETA)
    return w


@lru_cache(maxsize=32)
def _phase_bank(up: int, down: int) -> np.ndarray:
    """Per-phase filter taps [up, 64]; each phase normalized to unit DC gain."""
    fc = _ROLLOFF * min(1.0, up / down)
    j = np.arange(-_TAPS_HALF + 1, _TAPS_HALF + 1, dtype=np.float64)  # [-31, 32]
    fracs = np.arange(up, dtype=np.float64)[:, None] / up
    x = j[None, :] - fracs
    taps = fc * np.sinc(fc * x) * _kaiser_window(x, _TAPS_HALF)
    return taps / taps.sum(axis=1, keepdims=True)


def resample(clip: AudioClip, target_rate: int) -> AudioClip:
    """Band-limited polyphase resampling to `target_rate`.

    Output length is round(n * target / source). Same-rate input passes
    through untouched.
    """
    if target_rate <= 0:
        raise InvalidAudioError(f"target rate must be positive, got {target_rate}")
    if target_rate == clip.sample_rate:
        return clip
    src = clip.samples.astype(np.float64)
    n = src.size
    g = math.gcd(int(clip.sample_rate), int(target_rate))
    up = target_rate // g
    down = clip.sample_rate // g
    n_out = int(n * up // down + (1 if (n * up % down) * 2 >= down else 0))
    if n_out == 0:
        raise InvalidAudioError("resampled output would be empty")

    bank = _phase_bank(up, down)
    pad_l = _TAPS_HALF - 1
    pad_r = _TAPS_HALF + 1 + down
    xp = np.concatenate([np.zeros(pad_l), src, np.zeros(pad_r)])
    out = np.empty(n_out, dtype=np.float64)
    inv = pow(down % up, -1, up) if up > 1 else 0
    stride = xp.strides[0]
    for p in range(up):
        m0 = (p * inv) % up if up > 1 else 0
        if m0 >= n_out:
            continue
        n_k = (n_out - 1 - m0) // up + 1
        i0 = (m0 * down) // up  # first tap reads xp[i0], i.e. src[i0 - 31]
        window = as_strided(xp[i0:], shape=(n_k, 2 * _TAPS_HALF), strides=(down * stride, stride))
        out[m0::up] = window @ bank[p]
    return AudioClip(samples=out.astype(np.float32), sample_rate=target_rate)


# -- spectrogram --------------------------------------------------------------


@lru_cache(maxsize=8)
def _hann_periodic(n: int) -> np.ndarray:
    return 0.5 - 0.5 * np.cos(2.0 * np.pi * np.arange(n) / n)


def stft_power(clip: AudioClip, cfg: DspConfig) -> np.ndarray:
    """Magnitude-squared one-sided spectrum, [fft_size/2+1, n_frames]."""
    if clip.sample_rate != cfg.target_sample_rate:
        raise InvalidAudioError(
            f"clip at {clip.sample_rate} Hz, config expects {cfg.target_sample_rate} Hz")
    x = clip.samples.astype(np.float64)
    if x.size < cfg.fft_size:
        raise TooShortError(f"{x.size} samples < fft_size {cfg.fft_size}")
    n_frames = 1 + (x.size - cfg.fft_size) // cfg.hop_size
    s = x.strides[0]
    frames = as_strided(x, (n_frames, cfg.fft_size), (cfg.hop_size * s, s))
    windowed = frames * _hann_periodic(cfg.fft_size)
    spec = np.fft.rfft(windowed, axis=1)
    return (spec.real ** 2 + spec.imag ** 2).T


def hz_to_mel(f):
    return 2595.0 * np.log10(1.0 + np.asarray(f, dtype=np.float64) / 700.0)


def mel_to_hz(m):
    return 700.0 * (10.0 ** (np.asarray(m, dtype=np.float64) / 2595.0) - 1.0)


def mel_breakpoints(cfg: DspConfig) -> np.ndarray:
    """n_mels+2 Hz breakpoints, equally spaced on the mel scale."""
    mels = np.linspace(hz_to_mel(cfg.f_min), hz_to_mel(cfg.f_max), cfg.n_mels + 2)
    return mel_to_hz(mels)


def mel_filterbank(cfg: DspConfig) -> np.ndarray:
    """Triangular mel filters, [n_mels, fft_size/2+1].

    Each weight is the average of the triangle over the bin's frequency
    span [(k-1/2)*df, (k+1/2)*df] (clipped to [0, Nyquist]), computed from
    the exact piecewise-linear antiderivative.
    """
    pts = mel_breakpoints(cfg)
    df = cfg.target_sample_rate / cfg.fft_size
    k = np.arange(cfg.n_bins)
    lo_edge = np.maximum((k - 0.5) * df, 0.0)
    hi_edge = np.minimum((k + 0.5) * df, cfg.target_sample_rate / 2.0)

    def ramp_integral(u, v, a, b):
        # integral over [u, v] clipped to [a, b] of (f - a)/(b - a)
        u = np.clip(u, a, b)
        v = np.clip(v, a, b)
        if b - a <= 0:
            return np.zeros_like(u)
        return ((v - a) ** 2 - (u - a) ** 2) / (2.0 * (b - a))

    fb = np.zeros((cfg.n_mels, cfg.n_bins))
    for m in range(cfg.n_mels):
        left, center, right = pts[m], pts[m + 1], pts[m + 2]
        rise = ramp_integral(lo_edge, hi_edge, left, center)
        fall = ramp_integral(-hi_edge, -lo_edge, -right, -center)  # mirrored ramp
        fb[m] = (rise + fall) / df
    empty = np.flatnonzero(~fb.any(axis=1))
    if empty.size:
        raise DegenerateFilterbankError(
            f"{empty.size} mel filters have no energy (first: {empty[0]}); "
            f"n_mels={cfg.n_mels} over [{cfg.f_min}, {cfg.f_max}] Hz is degenerate")
    return fb


def log_mel(clip: AudioClip, cfg: DspConfig) -> MelSpectrogram:
    """Full front end: resample, STFT power, mel projection, log compression."""
    clip = resample(clip, cfg.target_sample_rate)
    power = stft_power(clip, cfg)
    mel_power = mel_filterbank(cfg) @ power
    values = np.log(mel_power + cfg.log_floor).astype(np.float32)
    return MelSpectrogram(values=values, frame_rate=cfg.frame_rate)


# -- chunking -----------------------------------------------------------------


def _padded(values: np.ndarray, n_frames: int, pad_value: float) -> np.ndarray:
    out = np.full((values.shape[0], n_frames), np.float32(pad_value), dtype=np.float32)
    out[:, : values.shape[1]] = values
    return out


def sequential_chunks(mel: MelSpectrogram, spec: ChunkSpec, pad_value: float) -> list[np.ndarray]:
    """Non-overlapping chunks for evaluation.

    A trailing partial chunk is dropped when at least one full chunk fits;
    recordings shorter than one chunk yield a single right-padded chunk.
    """
    F = spec.n_frames
    n = mel.n_frames
    if n < F:
        return [_padded(mel.values, F, pad_value)]
    return [mel.values[:, i * F:(i + 1) * F].copy() for i in range(n // F)]


def random_chunk(mel: MelSpectrogram, spec: ChunkSpec, rng: np.random.Generator,
                 pad_value: float) -> np.ndarray:
    """One uniformly positioned chunk for training."""
    F = spec.n_frames
    n = mel.n_frames
    if n <= F:
        return _padded(mel.values, F, pad_value)
    start = int(rng.integers(0, n - F + 1))
    return mel.values[:, start:start + F].copy()
