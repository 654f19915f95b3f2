"""Flat key=value run configuration with strict key and constraint checking.

One file drives a whole run: model shape, architecture switches, loss, the
three stage budgets, and the training strategy. Unknown keys are errors, not
warnings, so a typo cannot silently fall back to a default.
"""

from __future__ import annotations

from dataclasses import dataclass, fields, replace

from facediff.encoder import ENCODER_KINDS, EncoderSpec
from facediff.mapper import CLIP_MODES, ModelDims
from facediff.model import ArchConfig
from facediff.training import STRATEGIES, LossConfig, TrainConfig


class ConfigError(ValueError):
    """Unknown key, bad type, or violated constraint in a run configuration."""


# (d, decoder_layers, n_heads) stand-ins for the small/medium/large LM tiers
LM_SIZES = {
    "small": (32, 2, 2),
    "medium": (64, 4, 4),
    "large": (96, 6, 6),
}

TIERS = ("concise", "comprehensive")


@dataclass
class RunConfig:
    # model shape
    h: int = 32
    s: int = 4
    c: int = 4
    t: int = 9
    d: int = 32
    n_heads: int = 2
    proj_layers: int = 1
    fusion_layers: int = 1
    decoder_layers: int = 2
    attr_dim: int = 6
    max_text_len: int = 160
    lm_size: str = ""  # empty, or a preset overriding d/decoder_layers/n_heads
    # architecture switches
    use_sep: bool = True
    use_cross_projection: bool = True
    use_text_projection: bool = True
    share_image_projection: bool = True
    clip_keep: str = "content"
    encoder_kind: str = "variant_a"
    # loss
    entropy_weight: float = 0.01
    epsilon: float = 1e-10
    # stage budgets
    unimodal_epochs: int = 10
    unimodal_lr: float = 1e-3
    unimodal_batch_size: int = 16
    mapper_epochs: int = 20
    mapper_lr: float = 1e-4
    mapper_lr_min: float = 0.0
    mapper_batch_size: int = 16
    mapper_restart_period: int = 0
    mapper_warmup_steps: int = 0
    finetune_epochs: int = 10
    finetune_lr: float = 1e-5
    finetune_lr_min: float = 0.0
    finetune_batch_size: int = 16
    finetune_restart_period: int = 0
    finetune_warmup_steps: int = 100
    # run plumbing
    strategy: str = "mapper_then_finetune"
    tier: str = "concise"
    seed: int = 0
    dataset: str = ""
    out_dir: str = "out"

    def validate(self) -> "RunConfig":
        if self.use_sep and not self.use_cross_projection:
            raise ConfigError("use_sep=true requires use_cross_projection=true "
                              "(the separator lives inside the fusion path)")
        if self.lm_size and self.lm_size not in LM_SIZES:
            raise ConfigError(f"lm_size must be one of {sorted(LM_SIZES)} or empty, "
                              f"got {self.lm_size!r}")
        if self.strategy not in STRATEGIES:
            raise ConfigError(f"strategy must be one of {STRATEGIES}, "
                              f"got {self.strategy!r}")
        if self.tier not in TIERS:
            raise ConfigError(f"tier must be one of {TIERS}, got {self.tier!r}")
        if self.encoder_kind not in ENCODER_KINDS:
            raise ConfigError(f"encoder_kind must be one of {ENCODER_KINDS}, "
                              f"got {self.encoder_kind!r}")
        if self.clip_keep not in CLIP_MODES:
            raise ConfigError(f"clip_keep must be one of {CLIP_MODES}, "
                              f"got {self.clip_keep!r}")
        d, layers, heads = self._lm_shape()
        if d % heads != 0:
            raise ConfigError(f"model width {d} must divide evenly into {heads} heads")
        for name in ("h", "s", "c", "t", "attr_dim", "max_text_len", "proj_layers",
                     "fusion_layers"):
            if getattr(self, name) <= 0:
                raise ConfigError(f"{name} must be positive")
        if layers <= 0:
            raise ConfigError("decoder_layers must be positive")
        try:
            self.stage_configs()
        except ValueError as err:
            raise ConfigError(str(err)) from err
        return self

    def _lm_shape(self) -> tuple[int, int, int]:
        if self.lm_size:
            return LM_SIZES[self.lm_size]
        return self.d, self.decoder_layers, self.n_heads

    def model_dims(self) -> ModelDims:
        d, layers, heads = self._lm_shape()
        return ModelDims(h=self.h, s=self.s, c=self.c, t=self.t, d=d,
                         n_heads=heads, proj_layers=self.proj_layers,
                         fusion_layers=self.fusion_layers, decoder_layers=layers,
                         attr_dim=self.attr_dim, max_text_len=self.max_text_len)

    def arch(self) -> ArchConfig:
        return ArchConfig(use_sep=self.use_sep,
                          use_cross_projection=self.use_cross_projection,
                          use_text_projection=self.use_text_projection,
                          share_image_projection=self.share_image_projection,
                          clip_keep=self.clip_keep)

    def enc_spec(self) -> EncoderSpec:
        return EncoderSpec(kind=self.encoder_kind, h=self.h)

    def loss(self) -> LossConfig:
        return LossConfig(entropy_weight=self.entropy_weight, epsilon=self.epsilon)

    def stage_configs(self) -> tuple[TrainConfig, TrainConfig, TrainConfig]:
        unimodal = TrainConfig(stage="unimodal", lr=self.unimodal_lr,
                               epochs=self.unimodal_epochs,
                               batch_size=self.unimodal_batch_size, seed=self.seed)
        mapper = TrainConfig(stage="mapper", lr=self.mapper_lr,
                             lr_min=self.mapper_lr_min, epochs=self.mapper_epochs,
                             batch_size=self.mapper_batch_size,
                             restart_period=self.mapper_restart_period,
                             warmup_steps=self.mapper_warmup_steps, seed=self.seed)
        finetune = TrainConfig(stage="finetune", lr=self.finetune_lr,
                               lr_min=self.finetune_lr_min,
                               epochs=self.finetune_epochs,
                               batch_size=self.finetune_batch_size,
                               restart_period=self.finetune_restart_period,
                               warmup_steps=self.finetune_warmup_steps,
                               seed=self.seed)
        return unimodal, mapper, finetune

    def to_text(self) -> str:
        lines = []
        for f in fields(self):
            value = getattr(self, f.name)
            if f.type == "bool" or isinstance(value, bool):
                rendered = "true" if value else "false"
            else:
                rendered = repr(value) if isinstance(value, float) else str(value)
            lines.append(f"{f.name}={rendered}")
        return "\n".join(lines) + "\n"


_FIELD_TYPES = {f.name: f.type for f in fields(RunConfig)}


def _coerce(key: str, raw: str):
    kind = _FIELD_TYPES[key]
    if kind == "bool":
        if raw == "true":
            return True
        if raw == "false":
            return False
        raise ConfigError(f"{key} expects true or false, got {raw!r}")
    if kind == "int":
        try:
            return int(raw)
        except ValueError:
            raise ConfigError(f"{key} expects an integer, got {raw!r}") from None
    if kind == "float":
        try:
            return float(raw)
        except ValueError:
            raise ConfigError(f"{key} expects a number, got {raw!r}") from None
    return raw


def parse_config_text(text: str) -> RunConfig:
    """key=value per line; blank lines and # comments allowed; strict keys."""
    values = {}
    for lineno, line in enumerate(text.splitlines(), start=1):
        stripped = line.strip()
        if not stripped or stripped.startswith("#"):
            continue
        if "=" not in stripped:
            raise ConfigError(f"line {lineno}: expected key=value, got {line!r}")
        key, _, raw = stripped.partition("=")
        key, raw = key.strip(), raw.strip()
        if key not in _FIELD_TYPES:
            raise ConfigError(f"line {lineno}: unknown key {key!r}")
        if key in values:
            raise ConfigError(f"line {lineno}: duplicate key {key!r}")
        values[key] = _coerce(key, raw)
    return RunConfig(**values).validate()


def parse_config(path: str) -> RunConfig:
    with open(path, "r", encoding="utf-8") as fh:
        return parse_config_text(fh.read())


def save_config(cfg: RunConfig, path: str) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(cfg.to_text())


def with_overrides(cfg: RunConfig, **changes) -> RunConfig:
    """Replace fields and re-validate; unknown names raise ConfigError."""
    unknown = set(changes) - set(_FIELD_TYPES)
    if unknown:
        raise ConfigError(f"unknown config fields {sorted(unknown)}")
    return replace(cfg, **changes).validate()
