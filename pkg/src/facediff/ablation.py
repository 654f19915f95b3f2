"""Config sweeps over the architecture and training axes.

Each axis expands into named variants that differ from the base only in that
axis; disabling the fusion path is the one coupled case, since the separator
cannot survive without it. All variants of one matrix share the dataset, the
seed, and the total multimodal step budget, so rows are comparable.
"""

from __future__ import annotations

from facediff import metrics as me
from facediff.config import LM_SIZES, ConfigError, RunConfig, with_overrides
from facediff.model import build_model
from facediff.text import build_vocab
from facediff.training import STRATEGIES, run_strategy

DECODER_LAYER_SWEEP = (2, 4, 8, 16)

AXES = ("sep", "cross_projection", "text_projection", "encoder",
        "decoder_layers", "strategy", "lm_size")


def axis_variants(base: RunConfig, axis: str) -> list[tuple[str, RunConfig]]:
    if axis == "sep":
        return [("with_sep", with_overrides(base, use_sep=True,
                                            use_cross_projection=True)),
                ("without_sep", with_overrides(base, use_sep=False))]
    if axis == "cross_projection":
        # turning fusion off forces the separator off as well
        return [("with_cross_projection",
                 with_overrides(base, use_cross_projection=True)),
                ("without_cross_projection",
                 with_overrides(base, use_cross_projection=False, use_sep=False))]
    if axis == "text_projection":
        return [("with_text_projection",
                 with_overrides(base, use_text_projection=True)),
                ("without_text_projection",
                 with_overrides(base, use_text_projection=False))]
    if axis == "encoder":
        return [(f"encoder_{kind}", with_overrides(base, encoder_kind=kind))
                for kind in ("variant_a", "variant_b")]
    if axis == "decoder_layers":
        return [(f"decoder_layers_{n}",
                 with_overrides(base, decoder_layers=n, lm_size=""))
                for n in DECODER_LAYER_SWEEP]
    if axis == "strategy":
        return [(f"strategy_{s}", with_overrides(base, strategy=s))
                for s in STRATEGIES]
    if axis == "lm_size":
        return [(f"lm_{name}", with_overrides(base, lm_size=name))
                for name in sorted(LM_SIZES)]
    raise ConfigError(f"unknown ablation axis {axis!r}; known axes: {AXES}")


def build_matrix(base: RunConfig, axes: list[str]) -> list[tuple[str, RunConfig]]:
    """Expand axes in declared order into uniquely named variants."""
    rows: list[tuple[str, RunConfig]] = []
    seen = set()
    for axis in axes:
        for name, cfg in axis_variants(base, axis):
            if name in seen:
                raise ConfigError(f"duplicate variant name {name!r}")
            seen.add(name)
            rows.append((name, cfg))
    if not rows:
        raise ConfigError("ablation needs at least one axis")
    return rows


def run_variant(cfg: RunConfig, train_records, eval_records):
    """Train one configuration from scratch and evaluate it."""
    texts = [r.prompt for r in train_records]
    for r in train_records:
        texts.append(r.description(cfg.tier))
    vocab = build_vocab(texts)
    model = build_model(vocab, cfg.model_dims(), cfg.arch(), cfg.enc_spec(),
                        seed=cfg.seed)
    unimodal, mapper, finetune = cfg.stage_configs()
    report, log = run_strategy(cfg.strategy, model, train_records, eval_records,
                               unimodal, mapper, finetune, cfg.loss(), cfg.tier)
    return model, report, log


def run_ablation(base: RunConfig, axes: list[str], train_records, eval_records,
                 out_path: str | None = None) -> list[tuple[str, "me.MetricReport"]]:
    """Train and evaluate every variant; rows keep the declared order."""
    matrix = build_matrix(base, axes)
    rows = []
    for name, cfg in matrix:
        _, report, _ = run_variant(cfg, train_records, eval_records)
        rows.append((name, report))
    if out_path is not None:
        me.write_report(rows, out_path)
    return rows
