"""Estimator-style facade over the full train/generate pipeline.

FaceMatchExplainer follows the scikit-learn contract: constructor arguments
are stored verbatim (so get_params/set_params/clone work), fit validates and
trains, fitted state lands in trailing-underscore attributes, and predict
maps pair records to generated explanation strings.
"""

from __future__ import annotations

from sklearn.base import BaseEstimator
from sklearn.utils.validation import check_is_fitted

import numpy as np

from facediff.data import PairRecord
from facediff.mapper import ModelDims
from facediff.metrics import evaluate_model
from facediff.model import ArchConfig, build_model
from facediff.encoder import EncoderSpec
from facediff.tensor import no_grad
from facediff.text import build_vocab, detokenize
from facediff.training import LossConfig, TrainConfig, run_strategy


def check_records(X) -> list[PairRecord]:
    """Validate that X is a non-empty sequence of pair records."""
    records = list(X)
    if not records:
        raise ValueError("expected at least one pair record")
    for i, rec in enumerate(records):
        if not isinstance(rec, PairRecord):
            raise TypeError(f"X[{i}] is {type(rec).__name__}, expected PairRecord")
    return records


class FaceMatchExplainer(BaseEstimator):
    """Fit on pair records; predict natural-language match explanations."""

    def __init__(self, strategy="mapper_then_finetune", tier="concise",
                 use_sep=True, use_cross_projection=True,
                 use_text_projection=True, encoder_kind="variant_a",
                 h=16, s=2, c=2, t=9, d=16, n_heads=2, proj_layers=1,
                 fusion_layers=1, decoder_layers=1, max_text_len=80,
                 entropy_weight=0.01, unimodal_epochs=5, mapper_epochs=10,
                 finetune_epochs=5, lr=1e-3, finetune_lr=1e-4, batch_size=8,
                 seed=0):
        self.strategy = strategy
        self.tier = tier
        self.use_sep = use_sep
        self.use_cross_projection = use_cross_projection
        self.use_text_projection = use_text_projection
        self.encoder_kind = encoder_kind
        self.h = h
        self.s = s
        self.c = c
        self.t = t
        self.d = d
        self.n_heads = n_heads
        self.proj_layers = proj_layers
        self.fusion_layers = fusion_layers
        self.decoder_layers = decoder_layers
        self.max_text_len = max_text_len
        self.entropy_weight = entropy_weight
        self.unimodal_epochs = unimodal_epochs
        self.mapper_epochs = mapper_epochs
        self.finetune_epochs = finetune_epochs
        self.lr = lr
        self.finetune_lr = finetune_lr
        self.batch_size = batch_size
        self.seed = seed

    def fit(self, X, y=None):
        records = check_records(X)
        texts = [r.prompt for r in records]
        texts.extend(r.description(self.tier) for r in records)
        self.vocab_ = build_vocab(texts)
        dims = ModelDims(h=self.h, s=self.s, c=self.c, t=self.t, d=self.d,
                         n_heads=self.n_heads, proj_layers=self.proj_layers,
                         fusion_layers=self.fusion_layers,
                         decoder_layers=self.decoder_layers,
                         attr_dim=records[0].face_a.attrs.shape[0],
                         max_text_len=self.max_text_len)
        arch = ArchConfig(use_sep=self.use_sep,
                          use_cross_projection=self.use_cross_projection,
                          use_text_projection=self.use_text_projection)
        enc = EncoderSpec(kind=self.encoder_kind, h=self.h)
        self.model_ = build_model(self.vocab_, dims, arch, enc, seed=self.seed)
        unimodal = TrainConfig(stage="unimodal", lr=self.lr,
                               epochs=self.unimodal_epochs,
                               batch_size=self.batch_size, seed=self.seed)
        mapper = TrainConfig(stage="mapper", lr=self.lr,
                             epochs=self.mapper_epochs,
                             batch_size=self.batch_size, seed=self.seed)
        finetune = TrainConfig(stage="finetune", lr=self.finetune_lr,
                               epochs=self.finetune_epochs,
                               batch_size=self.batch_size,
                               warmup_steps=5, seed=self.seed)
        loss_cfg = LossConfig(entropy_weight=self.entropy_weight)
        self.train_report_, self.training_log_ = run_strategy(
            self.strategy, self.model_, records, records, unimodal, mapper,
            finetune, loss_cfg, self.tier)
        return self

    def predict(self, X) -> list[str]:
        check_is_fitted(self, "model_")
        records = check_records(X)
        model = self.model_
        outputs = []
        for start in range(0, len(records), 32):
            chunk = records[start:start + 32]
            attrs_a = np.stack([r.face_a.attrs for r in chunk])
            attrs_b = np.stack([r.face_b.attrs for r in chunk])
            prompts = model.prompt_batch([r.prompt for r in chunk])
            with no_grad():
                ids = model.generate(attrs_a, attrs_b, prompts)
            outputs.extend(detokenize(seq, model.vocab) for seq in ids)
        return outputs

    def score(self, X, y=None) -> float:
        """Mean embedding-similarity score against each record's reference."""
        check_is_fitted(self, "model_")
        report = evaluate_model(self.model_, check_records(X), self.tier)
        return report.semscore
