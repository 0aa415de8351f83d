"""Parameter-sharing transfer: seed a target model from a source checkpoint
and fine-tune under a freeze policy.

Both regimes re-initialize the output layer (even when vocabularies match);
everything else copies bitwise from the source, running statistics
included. Under "output", only the head trains and the forward pass runs in
eval mode, so backbone parameters and statistics stay byte-identical to the
source. Under "all", the whole network trains with the same hyperparameters
as single-domain training.
"""

from __future__ import annotations

from dataclasses import dataclass, replace

from .checkpoint import ModelCheckpoint
from .data import DatasetManifest, TagVocabulary
from .dsp import DspConfig
from .errors import TransferError
from .melcache import MelCache
from .models import Model, ModelConfig, build_model
from .registry import RunRecord
from .training import TrainConfig, TrainReport, train

FREEZE_POLICIES = ("output", "all")


@dataclass
class TransferPlan:
    source: ModelCheckpoint
    target_dataset_id: str
    target_vocab: TagVocabulary
    policy: str
    seed: int = 0
    target_config: ModelConfig | None = None  # optional; must match the source backbone

    def __post_init__(self):
        if self.policy not in FREEZE_POLICIES:
            raise TransferError(f"freeze policy must be one of {FREEZE_POLICIES}, "
                                f"got '{self.policy}'")


def _check_config_compatible(source_cfg: ModelConfig, target_cfg: ModelConfig) -> None:
    if source_cfg.arch != target_cfg.arch:
        raise TransferError(
            f"architecture mismatch: source '{source_cfg.arch}' vs target '{target_cfg.arch}'")
    a = replace(source_cfg, n_tags=1)
    b = replace(target_cfg, n_tags=1)
    if a != b:
        raise TransferError(
            "source and target configs differ beyond the output width "
            f"(e.g. width_scale {source_cfg.width_scale} vs {target_cfg.width_scale})")


def initialize_from_source(plan: TransferPlan) -> Model:
    """Target model with the source backbone copied bitwise and a fresh head.

    The head is freshly initialized from the plan seed even when source and
    target vocabularies coincide.
    """
    target_cfg = plan.target_config or replace(plan.source.config,
                                               n_tags=plan.target_vocab.size)
    if target_cfg.n_tags != plan.target_vocab.size:
        raise TransferError(f"target config expects {target_cfg.n_tags} tags, "
                            f"vocabulary has {plan.target_vocab.size}")
    _check_config_compatible(plan.source.config, target_cfg)
    model = build_model(target_cfg, seed=plan.seed)
    backbone = {}
    model_arrays = model.named_arrays()
    for name, arr in plan.source.tensors.items():
        if name in model.output_layer_names:
            continue
        if name not in model_arrays:
            raise TransferError(f"source layer '{name}' has no counterpart in the target")
        if model_arrays[name].shape != arr.shape:
            raise TransferError(
                f"shared layer '{name}': source shape {arr.shape} vs "
                f"target shape {model_arrays[name].shape}")
        backbone[name] = arr
    model.load_arrays(backbone)
    return model


def finetune(plan: TransferPlan, manifest: DatasetManifest, cfg: TrainConfig,
             dsp: DspConfig, cache: MelCache,
             max_duration_sec: float | None = None) -> tuple[Model, TrainReport]:
    """Fine-tune from the source under the plan's freeze policy."""
    model = initialize_from_source(plan)
    if plan.policy == "output":
        model.set_trainable(set(model.output_layer_names))
        forward_train = False
    else:
        model.set_trainable(None)
        forward_train = True
    report = train(model, manifest, plan.target_vocab, cfg, dsp, cache,
                   max_duration_sec=max_duration_sec, forward_train=forward_train)
    return model, report


def run_record_for(plan: TransferPlan, report: TrainReport, pr_auc: float | None,
                   seed: int) -> RunRecord:
    """Registry line for a completed transfer cell (scores as percentages)."""
    return RunRecord(model=plan.source.config.arch,
                     source=plan.source.provenance.get("source_dataset_id", "unknown"),
                     target=plan.target_dataset_id,
                     policy=plan.policy,
                     roc_auc=100.0 * report.best_roc_auc,
                     pr_auc=None if pr_auc is None else 100.0 * pr_auc,
                     seed=seed)
