"""Staged training: entropy-regularized loss, warm-restart schedule, strategies.

The multimodal objective is loss = ce - entropy_weight * H, where H is the
mean output-distribution entropy over unmasked target positions; raising H
counteracts the template corpus collapsing the decoder onto a handful of
stock phrasings. Stage "mapper" freezes the pretrained encoder and decoder
and trains only the bridge (projections and prompt embedder); "finetune"
unfreezes everything at a reduced rate behind a linear warmup.
"""

from __future__ import annotations

import json
import math
import struct
from dataclasses import dataclass, replace

import numpy as np

from facediff import metrics as me
from facediff.decoder import lm_pretrain
from facediff.encoder import pretrain_encoder
from facediff.mapper import ModelDims
from facediff.model import Model, ModelParams
from facediff.optim import Adam, lr_at_step
from facediff.tensor import Tensor, exp, gather_last, log, log_softmax, tensor_sum
from facediff.text import EOS_ID, PAD_ID, tokenize

STAGES = ("unimodal", "mapper", "finetune", "end_to_end_only", "mapper_only")
STRATEGIES = ("mapper_only", "end_to_end", "mapper_then_finetune")

_FROZEN_BY_STAGE = {
    "mapper": {"encoder", "decoder"},
    "mapper_only": {"encoder", "decoder"},
    "finetune": set(),
    "end_to_end_only": set(),
}


@dataclass
class LossConfig:
    entropy_weight: float = 0.01
    epsilon: float = 1e-10


@dataclass
class TrainConfig:
    stage: str = "mapper"
    lr: float = 1e-4
    lr_min: float = 0.0
    epochs: int = 1
    batch_size: int = 16
    restart_period: int = 0  # 0 resolves to one epoch of steps
    warmup_steps: int = 0
    seed: int = 0

    def __post_init__(self):
        if self.stage not in STAGES:
            raise ValueError(f"unknown stage {self.stage!r}")
        if self.lr <= 0 or self.lr_min < 0 or self.lr_min > self.lr:
            raise ValueError(f"need 0 <= lr_min <= lr, got {self.lr_min} and {self.lr}")
        if self.epochs < 0 or self.batch_size <= 0 or self.warmup_steps < 0:
            raise ValueError("epochs, batch_size, warmup_steps out of range")


def diversity_loss(logits: Tensor, targets: np.ndarray, cfg: LossConfig,
                   pad_id: int = PAD_ID) -> tuple[Tensor, Tensor, Tensor]:
    """Return (loss, ce, entropy) over non-PAD positions of a [B, T, V] batch."""
    targets = np.asarray(targets)
    mask = (targets != pad_id).astype(np.float64)
    n = mask.sum()
    if n == 0:
        raise ValueError("loss saw only PAD targets")
    logp = log_softmax(logits, axis=-1)
    ce = -tensor_sum(gather_last(logp, targets) * Tensor(mask)) / float(n)
    probs = exp(logp)
    plogp = tensor_sum(probs * log(probs + cfg.epsilon), axis=-1)
    entropy = -tensor_sum(plogp * Tensor(mask)) / float(n)
    if cfg.entropy_weight == 0.0:
        loss = ce
    else:
        loss = ce - cfg.entropy_weight * entropy
    return loss, ce, entropy


def cosine_warm_restarts_lr(step: int, cfg: TrainConfig) -> float:
    """Stepwise learning rate for a stage whose restart period is resolved."""
    if cfg.restart_period <= 0:
        raise ValueError("restart_period must be resolved to a positive step count")
    return lr_at_step(step, cfg.lr, cfg.lr_min, cfg.restart_period, cfg.warmup_steps)


def _multimodal_arrays(model: Model, records, tier: str):
    attrs_a = np.stack([r.face_a.attrs for r in records])
    attrs_b = np.stack([r.face_b.attrs for r in records])
    prompts = model.prompt_batch([r.prompt for r in records])
    targets = [tokenize(r.description(tier), model.vocab,
                        max_len=model.dims.max_text_len - 1) + [EOS_ID]
               for r in records]
    return attrs_a, attrs_b, prompts, targets


def _pad_targets(targets: list[list[int]]) -> np.ndarray:
    width = max(len(t) for t in targets)
    out = np.full((len(targets), width), PAD_ID, dtype=int)
    for i, t in enumerate(targets):
        out[i, :len(t)] = t
    return out


def train_stage(model: Model, records, cfg: TrainConfig, loss_cfg: LossConfig,
                tier: str = "concise") -> list[dict]:
    """Run one stage over the records, mutating model params; returns the log.

    The unimodal stage pretrains the encoder (verification, fixed 1e-2 Adam)
    and the decoder LM on the tier corpus; multimodal stages run the two-term
    objective under the warm-restart schedule.
    """
    if cfg.stage == "unimodal":
        enc_log = pretrain_encoder(records, model.params.groups["encoder"],
                                   model.enc_spec, epochs=cfg.epochs, lr=1e-2,
                                   batch_size=cfg.batch_size, seed=cfg.seed)
        corpus = [tokenize(r.description(tier), model.vocab,
                           max_len=model.dims.max_text_len - 1) for r in records]
        lm_log = lm_pretrain(corpus, model.params.groups["decoder"], model.dims,
                             epochs=cfg.epochs, lr=cfg.lr, batch_size=cfg.batch_size,
                             seed=cfg.seed)
        return [{"epoch": rec["epoch"], "stage": "unimodal", "loss": rec["ce"],
                 "ce": rec["ce"], "entropy": 0.0,
                 "lr": cfg.lr, "encoder_accuracy": enc_log[-1]["accuracy"] if enc_log else None}
                for rec in lm_log]
    model.params.set_frozen(_FROZEN_BY_STAGE[cfg.stage])
    attrs_a, attrs_b, prompts, targets = _multimodal_arrays(model, records, tier)
    n = len(records)
    steps_per_epoch = math.ceil(n / cfg.batch_size)
    cfg = replace(cfg, restart_period=cfg.restart_period or steps_per_epoch)
    opt = Adam()
    rng = np.random.default_rng(np.random.SeedSequence([cfg.seed, 5]))
    log: list[dict] = []
    step = 0
    for epoch in range(cfg.epochs):
        order = rng.permutation(n)
        sums = np.zeros(3)
        lr_first = cfg.lr
        for start in range(0, n, cfg.batch_size):
            idx = order[start:start + cfg.batch_size]
            t_ids = _pad_targets([targets[i] for i in idx])
            lr = cosine_warm_restarts_lr(step, cfg)
            if start == 0:
                lr_first = lr
            model.params.zero_grads()
            logits = model.logits(attrs_a[idx], attrs_b[idx], prompts[idx], t_ids)
            loss, ce, entropy = diversity_loss(logits, t_ids, loss_cfg)
            loss.backward()
            opt.step(model.params.named(trainable_only=True), lr)
            sums += (loss.item(), ce.item(), entropy.item())
            step += 1
        mean = sums / steps_per_epoch
        # the epoch's opening rate makes stage-level regime changes legible
        log.append({"epoch": epoch, "stage": cfg.stage, "loss": float(mean[0]),
                    "ce": float(mean[1]), "entropy": float(mean[2]),
                    "lr": lr_first})
    model.params.set_frozen(set())
    return log


def strategy_stage_plan(strategy: str, unimodal: TrainConfig, mapper: TrainConfig,
                        finetune: TrainConfig) -> list[TrainConfig]:
    """Expand a strategy into stage configs with equal multimodal step budgets."""
    if strategy not in STRATEGIES:
        raise ValueError(f"unknown strategy {strategy!r}")
    total = mapper.epochs + finetune.epochs
    if strategy == "mapper_only":
        return [unimodal, replace(mapper, stage="mapper_only", epochs=total)]
    if strategy == "end_to_end":
        return [unimodal, replace(mapper, stage="end_to_end_only", epochs=total)]
    return [unimodal, mapper, replace(finetune, stage="finetune")]


def run_strategy(strategy: str, model: Model, train_records, eval_records,
                 unimodal: TrainConfig, mapper: TrainConfig, finetune: TrainConfig,
                 loss_cfg: LossConfig, tier: str = "concise"):
    """Train through a strategy's stages, then evaluate; returns (report, log)."""
    log: list[dict] = []
    for cfg in strategy_stage_plan(strategy, unimodal, mapper, finetune):
        log.extend(train_stage(model, train_records, cfg, loss_cfg, tier))
    report = me.evaluate_model(model, eval_records, tier)
    return report, log


def write_training_log(log: list[dict], path: str) -> None:
    """Line-delimited records with epoch, stage, loss, ce, entropy, lr."""
    with open(path, "w", encoding="utf-8") as fh:
        for rec in log:
            fh.write(json.dumps(rec, sort_keys=True) + "\n")


# checkpointing ----------------------------------------------------------

MAGIC = b"FDIFFCK1"
CHECKPOINT_VERSION = 1


class CheckpointError(ValueError):
    """Base class for checkpoint load failures."""


class CheckpointFormatError(CheckpointError):
    """Bad magic or unsupported version."""


class CheckpointTruncatedError(CheckpointError):
    """The file ends before the declared payload does."""


class CheckpointShapeError(CheckpointError):
    """Stored parameter names or extents disagree with the target model."""


def save_checkpoint(params: ModelParams, path: str) -> None:
    """Self-describing little-endian float32 dump of every named parameter."""
    named = params.named()
    with open(path, "wb") as fh:
        fh.write(MAGIC)
        fh.write(struct.pack("<II", CHECKPOINT_VERSION, len(named)))
        for name, tensor in named:
            raw = name.encode("utf-8")
            fh.write(struct.pack("<H", len(raw)))
            fh.write(raw)
            shape = tensor.shape
            fh.write(struct.pack("<B", len(shape)))
            fh.write(struct.pack(f"<{len(shape)}I", *shape) if shape else b"")
            fh.write(tensor.data.astype("<f4").tobytes())


def load_checkpoint(path: str) -> dict[str, np.ndarray]:
    """Read back name -> float32 array, validating structure as it goes."""
    with open(path, "rb") as fh:
        blob = fh.read()
    if blob[:8] != MAGIC:
        raise CheckpointFormatError(f"bad magic {blob[:8]!r}")
    offset = 8

    def take(n: int) -> bytes:
        nonlocal offset
        if offset + n > len(blob):
            raise CheckpointTruncatedError(
                f"needed {n} bytes at offset {offset}, file has {len(blob)}")
        out = blob[offset:offset + n]
        offset += n
        return out

    version, count = struct.unpack("<II", take(8))
    if version != CHECKPOINT_VERSION:
        raise CheckpointFormatError(f"unsupported checkpoint version {version}")
    out: dict[str, np.ndarray] = {}
    for _ in range(count):
        (name_len,) = struct.unpack("<H", take(2))
        name = take(name_len).decode("utf-8")
        (rank,) = struct.unpack("<B", take(1))
        shape = struct.unpack(f"<{rank}I", take(4 * rank)) if rank else ()
        n_values = int(np.prod(shape)) if shape else 1
        data = np.frombuffer(take(4 * n_values), dtype="<f4").reshape(shape)
        out[name] = data
    if offset != len(blob):
        raise CheckpointFormatError(f"{len(blob) - offset} trailing bytes after payload")
    return out


def load_into(params: ModelParams, path: str) -> None:
    """Load a checkpoint into an existing model, insisting on exact structure."""
    stored = load_checkpoint(path)
    named = dict(params.named())
    missing = sorted(set(named) - set(stored))
    extra = sorted(set(stored) - set(named))
    if missing or extra:
        raise CheckpointShapeError(f"parameter sets disagree: missing {missing}, "
                                   f"unexpected {extra}")
    for name, tensor in named.items():
        if stored[name].shape != tensor.shape:
            raise CheckpointShapeError(f"{name}: stored shape {stored[name].shape} "
                                       f"vs model shape {tensor.shape}")
    for name, tensor in named.items():
        tensor.data = stored[name].astype(np.float64)
        tensor.zero_grad()
