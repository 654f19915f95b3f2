"""Full model assembly: parameter groups, architecture switches, forward pass."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from facediff import decoder as dec
from facediff.encoder import EncoderSpec, encode_face, init_encoder
from facediff.mapper import (CLIP_MODES, ModelDims, PrefixBundle, cross_projection,
                             image_projection, init_cross_projection,
                             init_image_projection, init_text_projection,
                             naive_concat_prefix, text_projection)
from facediff.tensor import Tensor
from facediff.text import PAD_ID, Vocab, embed_text, tokenize


@dataclass
class ArchConfig:
    """Architecture switches; a separator requires the fusion stack to exist."""

    use_sep: bool = True
    use_cross_projection: bool = True
    use_text_projection: bool = True
    share_image_projection: bool = True
    clip_keep: str = "content"
    tie_output_head: bool = True

    def validate(self) -> "ArchConfig":
        if self.use_sep and not self.use_cross_projection:
            raise ValueError("use_sep requires use_cross_projection")
        if self.clip_keep not in CLIP_MODES:
            raise ValueError(f"clip_keep must be one of {CLIP_MODES}")
        return self


class ModelParams:
    """Named parameter groups with per-group freeze flags.

    Frozen groups receive no optimizer updates and their gradients are
    discarded at the next explicit zeroing, so their bytes never move.
    """

    def __init__(self, groups: dict[str, dict[str, Tensor]]):
        self.groups = groups
        self.frozen: set[str] = set()

    def set_frozen(self, groups: set[str]) -> None:
        unknown = groups - set(self.groups)
        if unknown:
            raise ValueError(f"cannot freeze unknown groups {sorted(unknown)}")
        self.frozen = set(groups)

    def named(self, trainable_only: bool = False) -> list[tuple[str, Tensor]]:
        out = []
        for group in sorted(self.groups):
            if trainable_only and group in self.frozen:
                continue
            for name in sorted(self.groups[group]):
                out.append((f"{group}.{name}", self.groups[group][name]))
        return out

    def zero_grads(self) -> None:
        for _, p in self.named():
            p.zero_grad()

    def group_bytes(self, group: str) -> bytes:
        chunks = [self.groups[group][name].data.tobytes()
                  for name in sorted(self.groups[group])]
        return b"".join(chunks)

    @property
    def n_params(self) -> int:
        return sum(p.size for _, p in self.named())


@dataclass
class Model:
    """A built model: dims, switches, vocabulary, and its parameter groups."""

    dims: ModelDims
    arch: ArchConfig
    enc_spec: EncoderSpec
    vocab: Vocab
    params: ModelParams

    @property
    def prefix_len(self) -> int:
        if self.arch.clip_keep == "constants":
            return self.dims.c
        base = 2 * self.dims.s + self.dims.t
        return base + 1 if self.arch.use_sep else base

    def prompt_batch(self, prompts: list[str]) -> np.ndarray:
        ids = np.full((len(prompts), self.dims.t), PAD_ID, dtype=int)
        for i, prompt in enumerate(prompts):
            toks = tokenize(prompt, self.vocab, max_len=self.dims.t)
            ids[i, :len(toks)] = toks
        return ids

    def build_prefix(self, attrs_a: np.ndarray, attrs_b: np.ndarray,
                     prompt_ids: np.ndarray) -> PrefixBundle:
        g = self.params.groups
        dims, arch = self.dims, self.arch
        e1 = encode_face(attrs_a, g["encoder"], self.enc_spec)
        e2 = encode_face(attrs_b, g["encoder"], self.enc_spec)
        p1 = image_projection(e1, g["image_proj"], dims, arch.clip_keep)
        second = g["image_proj"] if arch.share_image_projection else g["image_proj_b"]
        p2 = image_projection(e2, second, dims, arch.clip_keep)
        temb = embed_text(prompt_ids, g["text_embed"]["table"], g["text_embed"]["pos"])
        if arch.use_text_projection:
            txt = text_projection(temb, g["text_proj"], dims, arch.clip_keep)
        else:
            txt = temb
        if arch.use_cross_projection:
            sep = dec.sep_row(g["decoder"]) if arch.use_sep else None
            fused = cross_projection(p1, p2, txt, g["cross_proj"], dims, sep,
                                     arch.clip_keep)
        else:
            sep = None
            fused = naive_concat_prefix(p1, p2, txt)
        return PrefixBundle(p1, p2, sep, txt, fused)

    def logits(self, attrs_a: np.ndarray, attrs_b: np.ndarray, prompt_ids: np.ndarray,
               target_ids: np.ndarray) -> Tensor:
        bundle = self.build_prefix(attrs_a, attrs_b, prompt_ids)
        return dec.decode_logits(self.params.groups["decoder"], bundle.fused,
                                 target_ids, self.dims)

    def generate(self, attrs_a: np.ndarray, attrs_b: np.ndarray, prompt_ids: np.ndarray,
                 max_new: int | None = None) -> list[list[int]]:
        max_new = self.dims.max_text_len + 1 if max_new is None else max_new
        bundle = self.build_prefix(attrs_a, attrs_b, prompt_ids)
        return dec.generate_batch(self.params.groups["decoder"], bundle.fused,
                                  self.dims, max_new)


def decoder_maxlen(dims: ModelDims) -> int:
    longest_prefix = max(2 * dims.s + dims.t + 1, dims.c)
    return longest_prefix + dims.max_text_len + 2


def build_model(vocab: Vocab, dims: ModelDims, arch: ArchConfig | None = None,
                enc_spec: EncoderSpec | None = None, seed: int = 0) -> Model:
    """Construct every needed parameter group from one seed."""
    arch = (arch or ArchConfig()).validate()
    enc_spec = enc_spec or EncoderSpec(h=dims.h)
    if enc_spec.h != dims.h:
        raise ValueError(f"encoder width {enc_spec.h} must equal dims.h {dims.h}")
    dims.V = vocab.size
    dims.validate()
    root = np.random.SeedSequence([seed, 17])
    keys = ["encoder", "image_proj", "image_proj_b", "text_proj", "cross_proj",
            "text_embed", "decoder"]
    rngs = {k: np.random.default_rng(s) for k, s in zip(keys, root.spawn(len(keys)))}
    groups: dict[str, dict[str, Tensor]] = {
        "encoder": init_encoder(enc_spec, dims.attr_dim, rngs["encoder"]),
        "image_proj": init_image_projection(dims, rngs["image_proj"]),
        "text_embed": {
            "table": Tensor(rngs["text_embed"].normal(0.0, 0.02, size=(dims.V, dims.d)),
                            requires_grad=True),
            "pos": Tensor(rngs["text_embed"].normal(0.0, 0.02, size=(dims.t, dims.d)),
                          requires_grad=True),
        },
        "decoder": dec.init_decoder(dims, decoder_maxlen(dims), rngs["decoder"],
                                    arch.tie_output_head),
    }
    if not arch.share_image_projection:
        groups["image_proj_b"] = init_image_projection(dims, rngs["image_proj_b"])
    if arch.use_text_projection:
        groups["text_proj"] = init_text_projection(dims, rngs["text_proj"])
    if arch.use_cross_projection:
        groups["cross_proj"] = init_cross_projection(dims, rngs["cross_proj"])
    return Model(dims=dims, arch=arch, enc_spec=enc_spec, vocab=vocab,
                 params=ModelParams(groups))
