"""Transfer initialization and the freeze invariant."""

from __future__ import annotations

from dataclasses import replace

import numpy as np
import pytest

from crosstag.checkpoint import ModelCheckpoint, load_checkpoint, save_checkpoint
from crosstag.data import TagVocabulary
from crosstag.errors import TransferError
from crosstag.models import OUTPUT_LAYER_NAMES, build_model
from crosstag.optim import ConstantAdam
from crosstag.registry import RunRecord, append_record, read_registry
from crosstag.training import TrainConfig, train
from crosstag.transfer import TransferPlan, finetune, initialize_from_source

from helpers import make_corpus, micro_dsp, micro_model_config


def _vocab(n, prefix="t"):
    return TagVocabulary(tags=tuple(f"{prefix}{i}" for i in range(n)),
                         relative_frequencies=tuple([0.3] * n))


def _source_checkpoint(arch, n_tags=3, seed=0, tmp_path=None):
    dsp = micro_dsp()
    cfg = micro_model_config(arch, n_tags, dsp)
    model = build_model(cfg, seed=seed)
    # touch batch-norm stats so the backbone carries non-default buffers
    from crosstag.autodiff import Tensor
    x = np.random.default_rng(seed).uniform(-3, 3, (4, 1, 32, cfg.chunk.n_frames))
    model.forward(Tensor(x.astype(np.float32)), train=True, rng=np.random.default_rng(0))
    path = tmp_path / f"{arch}.ckpt"
    save_checkpoint(model, [f"s{i}" for i in range(n_tags)],
                    {"source_dataset_id": "srcdom", "epochs_trained": 1}, path)
    return load_checkpoint(path)


class TestInitializeFromSource:
    @pytest.mark.parametrize("arch", ["vggish", "musicnn", "ast"])
    def test_backbone_bitwise_fresh_head(self, arch, tmp_path):
        ckpt = _source_checkpoint(arch, n_tags=3, tmp_path=tmp_path)
        plan = TransferPlan(source=ckpt, target_dataset_id="tgt",
                            target_vocab=_vocab(5), policy="output", seed=4)
        model = initialize_from_source(plan)
        arrays = model.named_arrays()
        for name, arr in ckpt.tensors.items():
            if name in OUTPUT_LAYER_NAMES:
                continue
            assert arrays[name].tobytes() == arr.tobytes(), name
        assert arrays["head.weight"].shape[1] == 5
        assert model.config.n_tags == 5

    def test_same_vocab_head_still_reinitialized(self, tmp_path):
        ckpt = _source_checkpoint("vggish", n_tags=3, tmp_path=tmp_path)
        plan = TransferPlan(source=ckpt, target_dataset_id="tgt",
                            target_vocab=_vocab(3), policy="all", seed=9)
        model = initialize_from_source(plan)
        assert model.named_arrays()["head.weight"].tobytes() != \
            ckpt.tensors["head.weight"].tobytes()

    def test_idempotent(self, tmp_path):
        ckpt = _source_checkpoint("musicnn", n_tags=3, tmp_path=tmp_path)
        plan = TransferPlan(source=ckpt, target_dataset_id="tgt",
                            target_vocab=_vocab(4), policy="output", seed=2)
        a = initialize_from_source(plan).named_arrays()
        b = initialize_from_source(plan).named_arrays()
        assert set(a) == set(b)
        for name in a:
            assert a[name].tobytes() == b[name].tobytes(), name

    def test_width_scale_mismatch_rejected(self, tmp_path):
        ckpt = _source_checkpoint("vggish", n_tags=3, tmp_path=tmp_path)
        bad_cfg = replace(ckpt.config, n_tags=4, width_scale=0.5)
        plan = TransferPlan(source=ckpt, target_dataset_id="tgt",
                            target_vocab=_vocab(4), policy="output",
                            target_config=bad_cfg)
        with pytest.raises(TransferError, match="width_scale"):
            initialize_from_source(plan)

    def test_arch_mismatch_rejected(self, tmp_path):
        ckpt = _source_checkpoint("vggish", n_tags=3, tmp_path=tmp_path)
        other = micro_model_config("musicnn", 4)
        plan = TransferPlan(source=ckpt, target_dataset_id="tgt",
                            target_vocab=_vocab(4), policy="all", target_config=other)
        with pytest.raises(TransferError, match="architecture"):
            initialize_from_source(plan)

    def test_manifest_shapes_differ_only_at_head(self, tmp_path):
        ckpt = _source_checkpoint("ast", n_tags=3, tmp_path=tmp_path)
        plan = TransferPlan(source=ckpt, target_dataset_id="tgt",
                            target_vocab=_vocab(6), policy="output")
        model = initialize_from_source(plan)
        arrays = model.named_arrays()
        assert set(arrays) == set(ckpt.tensors)
        for name in arrays:
            if name in OUTPUT_LAYER_NAMES:
                assert arrays[name].shape != ckpt.tensors[name].shape
            else:
                assert arrays[name].shape == ckpt.tensors[name].shape


class TestFinetune:
    @pytest.mark.parametrize("arch", ["vggish", "musicnn", "ast"])
    def test_output_only_freeze_invariant_bitwise(self, arch, tmp_path):
        dsp = micro_dsp()
        manifest, vocab, cache = make_corpus(tmp_path, n_clips=12, n_tags=3, seed=31)
        ckpt = _source_checkpoint(arch, n_tags=3, tmp_path=tmp_path)
        plan = TransferPlan(source=ckpt, target_dataset_id="tgt",
                            target_vocab=vocab, policy="output", seed=1)
        cfg = TrainConfig(batch_size=6, max_epochs=2, policy=ConstantAdam(lr=1e-3), seed=1)
        model, report = finetune(plan, manifest, cfg, dsp, cache)
        arrays = model.named_arrays()
        for name, arr in ckpt.tensors.items():
            if name in OUTPUT_LAYER_NAMES:
                continue
            assert arrays[name].tobytes() == arr.tobytes(), f"{arch}:{name} changed"
        assert len(report.epochs) == 2

    def test_all_policy_changes_backbone(self, tmp_path):
        dsp = micro_dsp()
        manifest, vocab, cache = make_corpus(tmp_path, n_clips=12, n_tags=3, seed=31)
        ckpt = _source_checkpoint("vggish", n_tags=3, tmp_path=tmp_path)
        plan = TransferPlan(source=ckpt, target_dataset_id="tgt",
                            target_vocab=vocab, policy="all", seed=1)
        cfg = TrainConfig(batch_size=6, max_epochs=2, policy=ConstantAdam(lr=1e-3), seed=1)
        model, _ = finetune(plan, manifest, cfg, dsp, cache)
        changed = [name for name, arr in ckpt.tensors.items()
                   if name not in OUTPUT_LAYER_NAMES
                   and model.named_arrays()[name].tobytes() != arr.tobytes()]
        assert changed

    def test_bad_policy_rejected(self, tmp_path):
        ckpt = _source_checkpoint("vggish", n_tags=3, tmp_path=tmp_path)
        with pytest.raises(TransferError, match="policy"):
            TransferPlan(source=ckpt, target_dataset_id="t", target_vocab=_vocab(3),
                         policy="partial")


class TestRegistry:
    def test_append_and_read_roundtrip(self, tmp_path):
        path = tmp_path / "runs.jsonl"
        rec = RunRecord(model="vggish", source="a", target="b", policy="output",
                        roc_auc=85.82, pr_auc=41.0, seed=3)
        append_record(path, rec)
        append_record(path, RunRecord(model="vggish", source="a", target="a",
                                      policy="all", roc_auc=91.23))
        records = read_registry(path)
        assert len(records) == 2
        assert records[0] == rec
        assert records[1].pr_auc is None
