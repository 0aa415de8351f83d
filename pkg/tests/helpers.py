"""Micro-scale fixtures: tiny DSP config and models that train in seconds."""

from __future__ import annotations

from dataclasses import replace

from crosstag.data import DatasetConfig, build_vocabulary
from crosstag.dsp import ChunkSpec, DspConfig
from crosstag.melcache import MelCache
from crosstag.models import AstParams, ModelConfig, MusicnnParams, VggishParams
from crosstag.synth import SyntheticSpec, generate_synthetic


def micro_dsp() -> DspConfig:
    return DspConfig(n_mels=32)


def micro_model_config(arch: str, n_tags: int, dsp: DspConfig | None = None,
                       chunk_seconds: float = 1.0) -> ModelConfig:
    dsp = dsp or micro_dsp()
    chunk = ChunkSpec.from_duration(chunk_seconds, dsp)
    cfg = ModelConfig(
        arch=arch, n_tags=n_tags, chunk=chunk, n_mels=dsp.n_mels,
        vggish=VggishParams(n_conv_layers=3, base_channels=8,
                            channel_multipliers=(1, 1, 2), dense_dim=16),
        musicnn=MusicnnParams(vertical_channels=4, horizontal_channels=4,
                              horizontal_widths=(8, 16, 32), midend_channels=8,
                              dense_dim=16),
        ast=AstParams(embed_dim=32, n_layers=1, n_heads=4, mlp_ratio=2.0),
    )
    return cfg


def make_corpus(root, n_clips=24, n_tags=4, seed=11, clip_seconds=1.5,
                dsp: DspConfig | None = None):
    """Synthetic corpus + vocabulary + warm mel cache for fast tests."""
    dsp = dsp or micro_dsp()
    spec = SyntheticSpec(n_clips=n_clips, n_tags=n_tags, seed=seed,
                         clip_seconds=clip_seconds,
                         split_ratios=(0.6, 0.2, 0.2))
    manifest = generate_synthetic(spec, root)
    vocab = build_vocabulary(manifest, DatasetConfig(top_k_tags=n_tags))
    cache = MelCache(root / "melcache", dsp)
    return manifest, vocab, cache


def single_clip_corpus(root, dsp: DspConfig | None = None):
    """One clip, one tag, in every split (memorization sanity checks)."""
    dsp = dsp or micro_dsp()
    spec = SyntheticSpec(n_clips=3, n_tags=2, seed=5, clip_seconds=1.5,
                         prevalence=(0.9, 0.95), split_ratios=(1.0, 0.0, 0.0))
    manifest = generate_synthetic(spec, root)
    entries = [replace_split(manifest.entries[0], "train")]
    from crosstag.data import DatasetManifest
    manifest = DatasetManifest(dataset_id=manifest.dataset_id, entries=entries,
                               base_dir=manifest.base_dir)
    cache = MelCache(root / "melcache", dsp)
    from crosstag.data import DatasetConfig as DC, build_vocabulary as bv
    vocab = bv(manifest, DC(top_k_tags=min(2, len(set(
        t for e in manifest.entries for t in e.tags)))))
    return manifest, vocab, cache


def replace_split(entry, split):
    return replace(entry, split=split)
