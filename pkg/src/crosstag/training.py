"""Single-domain supervised multi-label training.

One random chunk per recording per epoch; mean sigmoid BCE over tags and
batch; validation ROC-AUC after every epoch; the returned model carries the
best-validation parameters (ties keep the earlier epoch). Deterministic
given the seed: shuffling, chunk positions, and dropout all derive from
(seed, epoch) in a fixed draw order.
"""

from __future__ import annotations

import json
import time
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .autodiff import Tensor, bce_with_logits
from .data import DatasetManifest, TagVocabulary, encode_targets
from .dsp import DspConfig, random_chunk
from .errors import DataError, TrainingFault
from .evaluation import EvalReport, evaluate, validate_checkpoint_vocab
from .melcache import MelCache
from .models import Model
from .optim import AstAdamDecay, ConstantAdam, MixedAdamSgd, clip_grad_norm, make_optimizer


@dataclass
class TrainConfig:
    batch_size: int = 16
    max_epochs: int = 50
    policy: object = field(default_factory=ConstantAdam)
    seed: int = 0
    patience: int | None = None
    eval_split: str = "valid"
    stop_at_metric: float | None = None
    clip_grad_norm: float | None = None
    wall_clock_budget_sec: float | None = None

    def describe(self) -> dict:
        d = {"batch_size": self.batch_size, "max_epochs": self.max_epochs,
             "seed": self.seed, "patience": self.patience, "eval_split": self.eval_split,
             "stop_at_metric": self.stop_at_metric, "clip_grad_norm": self.clip_grad_norm,
             "policy": getattr(self.policy, "name", type(self.policy).__name__)}
        return d


def paper_train_config(arch: str, seed: int = 0) -> TrainConfig:
    """Full-scale hyperparameters per architecture."""
    if arch == "vggish":
        return TrainConfig(batch_size=16, max_epochs=200, policy=MixedAdamSgd(lr=1e-4),
                           seed=seed)
    if arch == "musicnn":
        return TrainConfig(batch_size=16, max_epochs=50, policy=MixedAdamSgd(lr=1e-4),
                           seed=seed)
    return TrainConfig(batch_size=12, max_epochs=30, policy=AstAdamDecay(), seed=seed)


def desk_train_config(arch: str, seed: int = 0) -> TrainConfig:
    """Fast CPU settings for the shrunk desk models."""
    lr = {"vggish": 2e-3, "musicnn": 2e-3, "ast": 1e-3}[arch]
    return TrainConfig(batch_size=16, max_epochs=40, policy=ConstantAdam(lr=lr),
                       seed=seed, clip_grad_norm=5.0)


@dataclass
class TrainReport:
    epochs: list[dict]
    best_epoch: int
    best_roc_auc: float | None
    stopped_reason: str
    train_config: dict
    eval_split: str

    def to_json(self) -> str:
        return json.dumps({
            "best_epoch": self.best_epoch,
            "best_roc_auc": self.best_roc_auc,
            "stopped_reason": self.stopped_reason,
            "eval_split": self.eval_split,
            "train_config": self.train_config,
            "epochs": self.epochs,
        }, indent=2, sort_keys=True)

    def write(self, path) -> None:
        Path(path).write_text(self.to_json())


def _snapshot(model: Model) -> dict[str, np.ndarray]:
    return {name: arr.copy() for name, arr in model.named_arrays().items()}


def train(model: Model, manifest: DatasetManifest, vocab: TagVocabulary,
          cfg: TrainConfig, dsp: DspConfig, cache: MelCache,
          max_duration_sec: float | None = None,
          forward_train: bool = True) -> TrainReport:
    """Train `model` in place; on return it holds the best-validation weights.

    `forward_train=False` runs the net in eval mode during updates (frozen
    backbone statistics) — the output-only fine-tuning regime.
    """
    entries = manifest.split_entries("train")
    if not entries:
        raise DataError(f"'{manifest.dataset_id}' has an empty train split")
    if not manifest.split_entries(cfg.eval_split):
        raise DataError(f"'{manifest.dataset_id}' has an empty {cfg.eval_split} split")
    entries = sorted(entries, key=lambda e: e.recording_id)
    targets = {e.recording_id: encode_targets(e, vocab) for e in entries}

    trainable = model.trainable_parameters()
    if not trainable:
        raise DataError("model has no trainable parameters")
    opt = None
    best_auc = -np.inf
    best_epoch = 0
    best_arrays = None
    history: list[dict] = []
    stopped = "max_epochs"
    evals_since_best = 0
    t0 = time.monotonic()

    for epoch in range(1, cfg.max_epochs + 1):
        kind, lr, momentum = cfg.policy.for_epoch(epoch, cfg.max_epochs)
        if opt is None or opt.kind != kind:
            opt = make_optimizer(kind, trainable, lr, momentum)
        else:
            opt.lr = lr
            if kind == "sgd":
                opt.momentum = momentum

        rng = np.random.default_rng([cfg.seed, epoch])
        order = rng.permutation(len(entries))
        epoch_loss = 0.0
        n_batches = 0
        for lo in range(0, len(order), cfg.batch_size):
            batch = [entries[i] for i in order[lo:lo + cfg.batch_size]]
            chunks = []
            for e in batch:
                mel = cache.get(manifest.resolve_audio(e), max_duration_sec)
                chunks.append(random_chunk(mel, model.config.chunk, rng, dsp.pad_value))
            x = Tensor(np.stack(chunks)[:, None, :, :])
            y = np.stack([targets[e.recording_id] for e in batch])
            logits = model.forward(x, train=forward_train, rng=rng)
            loss = bce_with_logits(logits, y)
            if not np.isfinite(loss.data):
                raise TrainingFault(f"non-finite loss at epoch {epoch}, step {n_batches}")
            opt.zero_grad()
            loss.backward()
            if cfg.clip_grad_norm is not None:
                clip_grad_norm(trainable, cfg.clip_grad_norm)
            opt.step()
            epoch_loss += loss.item()
            n_batches += 1

        try:
            report = evaluate(model, manifest, vocab, cfg.eval_split, dsp, cache,
                              max_duration_sec=max_duration_sec, batch_size=cfg.batch_size)
            auc, pr = report.macro_roc_auc, report.macro_pr_auc
        except DataError:
            # every tag single-class in the eval split (tiny corpora): the
            # metric is undefined, but training on the loss still proceeds
            auc, pr = None, None
        history.append({"epoch": epoch, "loss": epoch_loss / n_batches,
                        "roc_auc": auc, "pr_auc": pr})
        if auc is not None and auc > best_auc:
            best_auc = auc
            best_epoch = epoch
            best_arrays = _snapshot(model)
            evals_since_best = 0
        else:
            evals_since_best += 1

        if cfg.stop_at_metric is not None and best_auc >= cfg.stop_at_metric:
            stopped = "target_metric"
            break
        if cfg.patience is not None and evals_since_best > cfg.patience:
            stopped = "early_stop"
            break
        if cfg.wall_clock_budget_sec is not None and \
                time.monotonic() - t0 > cfg.wall_clock_budget_sec:
            stopped = "budget"
            break

    if best_arrays is not None:
        model.load_arrays(best_arrays)
    else:
        best_epoch = len(history)  # metric never defined: keep the final weights
    return TrainReport(epochs=history, best_epoch=best_epoch,
                       best_roc_auc=float(best_auc) if np.isfinite(best_auc) else None,
                       stopped_reason=stopped, train_config=cfg.describe(),
                       eval_split=cfg.eval_split)


def validate(model: Model, ckpt_vocab, manifest: DatasetManifest, vocab: TagVocabulary,
             dsp: DspConfig, cache: MelCache,
             max_duration_sec: float | None = None) -> EvalReport:
    """Evaluate a checkpointed model on the valid split, checking vocab identity."""
    validate_checkpoint_vocab(ckpt_vocab, vocab)
    return evaluate(model, manifest, vocab, "valid", dsp, cache,
                    max_duration_sec=max_duration_sec)
