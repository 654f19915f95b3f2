"""Projection mappers that fuse two face embeddings and a prompt into a prefix.

The image projection lifts an [b, h] embedding to s tokens of width d via a
linear map to k = s*d; each projection appends c learnable constant tokens,
runs a bidirectional transformer, and keeps the content positions (the
constants are dropped unless clip_keep="constants" selects the opposite
convention). The cross projection concatenates [image1; SEP; image2], appends
the prompt tokens, and fuses the whole sequence the same way; SEP is the
decoder's own EOS embedding row.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from facediff.tensor import DimensionError, Tensor, broadcast_to, concat, reshape
from facediff.transformer import init_linear, init_stack, linear, stack_forward

CLIP_MODES = ("content", "constants")


@dataclass
class ModelDims:
    """Every shape symbol in one place.

    b: batch, h: face embedding width, s: tokens per image, c: learnable
    constants per projection, t: prompt length, d: model width, V: vocabulary,
    k = s*d: flattened image projection width.
    """

    b: int = 8
    h: int = 32
    s: int = 8
    c: int = 8
    t: int = 9
    d: int = 64
    V: int = 0
    n_heads: int = 4
    proj_layers: int = 2
    fusion_layers: int = 2
    decoder_layers: int = 4
    attr_dim: int = 6
    max_text_len: int = 160

    @property
    def k(self) -> int:
        return self.s * self.d

    def validate(self) -> "ModelDims":
        for name in ("b", "h", "s", "c", "t", "d", "n_heads", "proj_layers",
                     "fusion_layers", "decoder_layers", "attr_dim", "max_text_len"):
            if getattr(self, name) <= 0:
                raise ValueError(f"dim {name} must be positive, got {getattr(self, name)}")
        if self.d % self.n_heads != 0:
            raise ValueError(f"d={self.d} must be divisible by n_heads={self.n_heads}")
        return self


@dataclass
class PrefixBundle:
    """The assembled decoder prefix plus the pieces it was fused from."""

    img1_tokens: Tensor
    img2_tokens: Tensor
    sep: Tensor | None
    text_tokens: Tensor
    fused: Tensor


def init_image_projection(dims: ModelDims, rng: np.random.Generator) -> dict[str, Tensor]:
    params: dict[str, Tensor] = {}
    init_linear(params, "lift", dims.h, dims.k, rng)
    params["const"] = Tensor(rng.normal(0.0, 0.02, size=(dims.c, dims.d)), requires_grad=True)
    params["pos"] = Tensor(rng.normal(0.0, 0.02, size=(dims.s + dims.c, dims.d)),
                           requires_grad=True)
    params.update(init_stack(dims.proj_layers, dims.d, dims.n_heads, rng))
    return params


def init_text_projection(dims: ModelDims, rng: np.random.Generator) -> dict[str, Tensor]:
    params: dict[str, Tensor] = {}
    params["const"] = Tensor(rng.normal(0.0, 0.02, size=(dims.c, dims.d)), requires_grad=True)
    params["pos"] = Tensor(rng.normal(0.0, 0.02, size=(dims.t + dims.c, dims.d)),
                           requires_grad=True)
    params.update(init_stack(dims.proj_layers, dims.d, dims.n_heads, rng))
    return params


def init_cross_projection(dims: ModelDims, rng: np.random.Generator) -> dict[str, Tensor]:
    params: dict[str, Tensor] = {}
    max_len = 2 * dims.s + dims.t + 1 + dims.c
    params["const"] = Tensor(rng.normal(0.0, 0.02, size=(dims.c, dims.d)), requires_grad=True)
    params["pos"] = Tensor(rng.normal(0.0, 0.02, size=(max_len, dims.d)), requires_grad=True)
    params.update(init_stack(dims.fusion_layers, dims.d, dims.n_heads, rng))
    return params


def _project(params: dict[str, Tensor], x: Tensor, dims: ModelDims,
             clip_keep: str) -> Tensor:
    """Append constants, run the bidirectional stack, keep one side of the cut."""
    if clip_keep not in CLIP_MODES:
        raise ValueError(f"clip_keep must be one of {CLIP_MODES}, got {clip_keep!r}")
    b, n_content = x.shape[0], x.shape[1]
    const = broadcast_to(params["const"], (b, dims.c, dims.d))
    seq = concat([x, const], axis=1)
    seq = seq + params["pos"][: n_content + dims.c]
    out = stack_forward(params, seq, dims.n_heads, mask=None)
    if clip_keep == "content":
        return out[:, :n_content]
    return out[:, n_content:]


def image_projection(e: Tensor, params: dict[str, Tensor], dims: ModelDims,
                     clip_keep: str = "content") -> Tensor:
    """[b, h] face embedding -> [b, s, d] image tokens."""
    if e.ndim != 2 or e.shape[1] != dims.h:
        raise DimensionError(f"expected [b, {dims.h}] embedding, got {e.shape}")
    lifted = linear(params, "lift", e)            # [b, k]
    tokens = reshape(lifted, (e.shape[0], dims.s, dims.d))
    return _project(params, tokens, dims, clip_keep)


def text_projection(x: Tensor, params: dict[str, Tensor], dims: ModelDims,
                    clip_keep: str = "content") -> Tensor:
    """[b, t, d] embedded prompt -> [b, t, d] contextualized prompt tokens."""
    if x.ndim != 3 or x.shape[2] != dims.d:
        raise DimensionError(f"expected [b, t, {dims.d}] prompt embedding, got {x.shape}")
    return _project(params, x, dims, clip_keep)


def cross_projection(p1: Tensor, p2: Tensor, txt: Tensor, params: dict[str, Tensor],
                     dims: ModelDims, sep: Tensor | None = None,
                     clip_keep: str = "content") -> Tensor:
    """Fuse [img1; SEP; img2; prompt] through the bidirectional stack.

    With a SEP row the fused length is 2s + t + 1, without it 2s + t.
    """
    if p1.shape != p2.shape:
        raise DimensionError(f"image token shapes disagree: {p1.shape} vs {p2.shape}")
    b = p1.shape[0]
    parts = [p1]
    if sep is not None:
        parts.append(broadcast_to(reshape(sep, (1, 1, dims.d)), (b, 1, dims.d)))
    parts.extend([p2, txt])
    seq = concat(parts, axis=1)
    return _project(params, seq, dims, clip_keep)


def naive_concat_prefix(p1: Tensor, p2: Tensor, txt: Tensor) -> Tensor:
    """Base-model prefix: plain concatenation, no separator, no fusion stack."""
    if p1.shape != p2.shape:
        raise DimensionError(f"image token shapes disagree: {p1.shape} vs {p2.shape}")
    return concat([p1, p2, txt], axis=1)
