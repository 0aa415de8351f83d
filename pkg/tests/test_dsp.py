"""DSP front-end tests: resampler, STFT, mel filterbank, chunking.

Spectral assertions go through a naive direct DFT written here rather than
through numpy's FFT, and the filterbank is compared against a separately
coded construction, so each check is independent of the code under test.
"""

from __future__ import annotations

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from crosstag.dsp import (
    AudioClip,
    ChunkSpec,
    DspConfig,
    MelSpectrogram,
    chunk_spec_for,
    log_mel,
    mel_breakpoints,
    mel_filterbank,
    n_frames_for,
    random_chunk,
    resample,
    sequential_chunks,
    stft_power,
)
from crosstag.errors import (
    ConfigError,
    DegenerateFilterbankError,
    InvalidAudioError,
    TooShortError,
)

CFG = DspConfig()


def sine(freq, seconds, rate, amp=1.0):
    t = np.arange(int(round(seconds * rate))) / rate
    return (amp * np.sin(2 * np.pi * freq * t)).astype(np.float32)


def naive_dft_power(x: np.ndarray) -> np.ndarray:
    """O(n^2) direct DFT magnitude-squared, one-sided. Oracle only."""
    n = x.size
    k = np.arange(n // 2 + 1)
    angles = -2j * np.pi * np.outer(k, np.arange(n)) / n
    spec = np.exp(angles) @ x.astype(np.float64)
    return np.abs(spec) ** 2


class TestResample:
    def test_exact_decimation_length(self):
        clip = AudioClip(np.random.default_rng(0).uniform(-1, 1, 64000), 32000)
        out = resample(clip, 16000)
        assert out.sample_rate == 16000
        assert out.samples.size == 32000

    def test_identity_passthrough(self):
        clip = AudioClip(sine(440, 0.5, 16000), 16000)
        out = resample(clip, 16000)
        assert out is clip

    def test_sine_peak_survives_44k_to_16k(self):
        clip = AudioClip(sine(440, 1.0, 44100), 44100)
        out = resample(clip, 16000)
        assert out.samples.size == 16000
        n = 4096
        power = naive_dft_power(out.samples[:n])
        bin_hz = 16000 / n
        peak_hz = float(np.argmax(power)) * bin_hz
        assert abs(peak_hz - 440.0) <= bin_hz

    def test_rms_preserved(self):
        clip = AudioClip(sine(1000, 1.0, 48000, amp=0.5), 48000)
        out = resample(clip, 16000)
        rms_in = np.sqrt(np.mean(clip.samples.astype(np.float64) ** 2))
        rms_out = np.sqrt(np.mean(out.samples.astype(np.float64) ** 2))
        assert rms_out == pytest.approx(rms_in, rel=0.02)

    def test_constant_signal_stays_constant(self):
        clip = AudioClip(np.full(8000, 0.25, dtype=np.float32), 22050)
        out = resample(clip, 16000)
        core = out.samples[48:-48]  # skip the filter's 32-tap edge transients
        np.testing.assert_allclose(core, 0.25, atol=1e-7)

    def test_empty_input_rejected(self):
        with pytest.raises(InvalidAudioError):
            AudioClip(np.array([], dtype=np.float32), 16000)

    def test_bad_target_rate(self):
        clip = AudioClip(sine(440, 0.1, 16000), 16000)
        with pytest.raises(InvalidAudioError):
            resample(clip, 0)


class TestStft:
    def test_single_frame_boundary(self):
        clip = AudioClip(np.random.default_rng(1).uniform(-1, 1, 512), 16000)
        out = stft_power(clip, CFG)
        assert out.shape == (257, 1)

    def test_three_frames(self):
        clip = AudioClip(np.random.default_rng(2).uniform(-1, 1, 1024), 16000)
        assert stft_power(clip, CFG).shape == (257, 3)

    def test_1khz_sine_peaks_at_bin_32(self):
        clip = AudioClip(sine(1000, 1.0, 16000), 16000)
        out = stft_power(clip, CFG)
        assert np.all(out.argmax(axis=0) == 32)

    def test_matches_naive_dft_on_first_frame(self):
        rng = np.random.default_rng(3)
        clip = AudioClip(rng.uniform(-1, 1, 512).astype(np.float32), 16000)
        window = 0.5 - 0.5 * np.cos(2 * np.pi * np.arange(512) / 512)
        oracle = naive_dft_power(clip.samples.astype(np.float64) * window)
        out = stft_power(clip, CFG)[:, 0]
        np.testing.assert_allclose(out, oracle, rtol=1e-9, atol=1e-9)

    def test_too_short_raises(self):
        clip = AudioClip(np.ones(511, dtype=np.float32), 16000)
        with pytest.raises(TooShortError):
            stft_power(clip, CFG)

    def test_wrong_rate_rejected(self):
        clip = AudioClip(np.ones(1024, dtype=np.float32), 22050)
        with pytest.raises(InvalidAudioError):
            stft_power(clip, CFG)

    def test_peak_bin_at_ten_bin_centers(self):
        bin_hz = 16000 / 512  # 31.25
        for k in (4, 8, 16, 32, 48, 64, 96, 128, 160, 200):
            clip = AudioClip(sine(k * bin_hz, 0.5, 16000), 16000)
            out = stft_power(clip, CFG)
            assert np.all(out.argmax(axis=0) == k), f"peak off at bin {k}"


def oracle_filterbank(cfg: DspConfig) -> np.ndarray:
    """Independent mel filterbank: same bin-span integration contract, but
    computed by splitting each span at the triangle breakpoints and applying
    the trapezoid rule to the exact endpoint values."""
    mel = lambda f: 2595.0 * np.log10(1.0 + f / 700.0)
    imel = lambda m: 700.0 * (10.0 ** (m / 2595.0) - 1.0)
    pts = imel(np.linspace(mel(cfg.f_min), mel(cfg.f_max), cfg.n_mels + 2))
    df = cfg.target_sample_rate / cfg.fft_size
    n_bins = cfg.fft_size // 2 + 1
    fb = np.zeros((cfg.n_mels, n_bins))
    for m in range(cfg.n_mels):
        l, c, r = pts[m], pts[m + 1], pts[m + 2]

        def tri(f):
            if l < f <= c and c > l:
                return (f - l) / (c - l)
            if c < f < r and r > c:
                return (r - f) / (r - c)
            if f == c and c > l:
                return 1.0
            return 0.0

        for k in range(n_bins):
            a = max((k - 0.5) * df, 0.0)
            b = min((k + 0.5) * df, cfg.target_sample_rate / 2.0)
            cuts = sorted({a, b, *[p for p in (l, c, r) if a < p < b]})
            area = 0.0
            for u, v in zip(cuts[:-1], cuts[1:]):
                area += 0.5 * (tri(u) + tri(v)) * (v - u)
            fb[m, k] = area / df
    return fb


class TestMelFilterbank:
    def test_shape_and_sign(self):
        fb = mel_filterbank(CFG)
        assert fb.shape == (128, 257)
        assert np.all(fb >= 0)
        assert np.all(fb.any(axis=1))

    def test_centers_strictly_increasing(self):
        centers = mel_breakpoints(CFG)[1:-1]
        assert centers.size == 128
        assert np.all(np.diff(centers) > 0)

    def test_flat_spectrum_matches_oracle(self):
        fb = mel_filterbank(CFG)
        oracle = oracle_filterbank(CFG)
        flat = np.ones(257)
        mine, ref = fb @ flat, oracle @ flat
        np.testing.assert_allclose(mine, ref, rtol=1e-6)
        # full-matrix agreement is stronger and also holds
        np.testing.assert_allclose(fb, oracle, rtol=1e-6, atol=1e-12)

    def test_small_config_matches_oracle(self):
        cfg = DspConfig(target_sample_rate=8000, fft_size=128, hop_size=64,
                        n_mels=20, f_max=4000.0)
        np.testing.assert_allclose(mel_filterbank(cfg), oracle_filterbank(cfg),
                                   rtol=1e-6, atol=1e-12)

    def test_degenerate_raises(self):
        cfg = DspConfig(f_min=4000.0, f_max=4000.0)
        with pytest.raises(DegenerateFilterbankError):
            mel_filterbank(cfg)


class TestLogMel:
    def test_silence_hits_log_floor(self):
        clip = AudioClip(np.zeros(16000, dtype=np.float32) + 0.0, 16000)
        clip.samples[0] = 1e-30  # keep the finite/non-empty invariant honest
        mel = log_mel(clip, CFG)
        np.testing.assert_allclose(mel.values, np.log(1e-10), atol=1e-4)

    def test_frame_count_3p69_seconds(self):
        clip = AudioClip(np.random.default_rng(4).uniform(-1, 1, 59040), 16000)
        assert log_mel(clip, CFG).n_frames == 229

    def test_frame_count_8_seconds(self):
        clip = AudioClip(np.random.default_rng(5).uniform(-1, 1, 128000), 16000)
        assert log_mel(clip, CFG).n_frames == 499

    def test_deterministic_bitwise(self):
        x = np.random.default_rng(6).uniform(-1, 1, 20000).astype(np.float32)
        a = log_mel(AudioClip(x.copy(), 16000), CFG)
        b = log_mel(AudioClip(x.copy(), 16000), CFG)
        assert a.values.tobytes() == b.values.tobytes()

    def test_frame_rate(self):
        clip = AudioClip(sine(500, 1.0, 16000), 16000)
        assert log_mel(clip, CFG).frame_rate == 62.5

    def test_doubling_amplitude_adds_ln4(self):
        x = sine(1000, 1.0, 16000, amp=0.3)
        m1 = log_mel(AudioClip(x, 16000), CFG).values.astype(np.float64)
        m2 = log_mel(AudioClip(2 * x, 16000), CFG).values.astype(np.float64)
        strong = m1 > np.log(1e3 * 1e-10)
        assert strong.any()
        np.testing.assert_allclose((m2 - m1)[strong], np.log(4.0), atol=1e-3)


class TestChunking:
    SPEC = ChunkSpec(duration_sec=3.69, n_frames=229)
    PAD = float(np.log(1e-10))

    def _mel(self, n_frames):
        rng = np.random.default_rng(n_frames)
        return MelSpectrogram(values=rng.uniform(-5, 5, (128, n_frames)).astype(np.float32),
                              frame_rate=62.5)

    def test_exact_fit(self):
        chunks = sequential_chunks(self._mel(229), self.SPEC, self.PAD)
        assert len(chunks) == 1 and chunks[0].shape == (128, 229)

    def test_trailing_partial_dropped(self):
        mel = self._mel(500)
        chunks = sequential_chunks(mel, self.SPEC, self.PAD)
        assert len(chunks) == 2
        np.testing.assert_array_equal(chunks[0], mel.values[:, :229])
        np.testing.assert_array_equal(chunks[1], mel.values[:, 229:458])

    def test_short_input_padded(self):
        mel = self._mel(100)
        chunks = sequential_chunks(mel, self.SPEC, self.PAD)
        assert len(chunks) == 1
        np.testing.assert_array_equal(chunks[0][:, :100], mel.values)
        assert np.all(chunks[0][:, 100:] == np.float32(self.PAD))

    def test_random_chunk_within_bounds_and_deterministic(self):
        mel = self._mel(400)
        a = random_chunk(mel, self.SPEC, np.random.default_rng(9), self.PAD)
        b = random_chunk(mel, self.SPEC, np.random.default_rng(9), self.PAD)
        assert a.shape == (128, 229)
        np.testing.assert_array_equal(a, b)

    def test_chunk_spec_frames(self):
        assert chunk_spec_for("vggish", CFG).n_frames == 229
        assert chunk_spec_for("musicnn", CFG).n_frames == 186
        assert chunk_spec_for("ast", CFG).n_frames == 499


class TestConfigValidation:
    def test_hop_cannot_exceed_fft(self):
        with pytest.raises(ConfigError):
            DspConfig(hop_size=1024)

    def test_fmax_capped_at_nyquist(self):
        with pytest.raises(ConfigError):
            DspConfig(f_max=9000.0)


@settings(max_examples=60, deadline=None)
@given(n=st.integers(min_value=512, max_value=200000))
def test_frame_count_formula_property(n):
    assert n_frames_for(n, CFG) == 1 + (n - 512) // 256
    clip = AudioClip(np.ones(n, dtype=np.float32), 16000)
    assert stft_power(clip, CFG).shape[1] == 1 + (n - 512) // 256
