"""Pre-norm transformer blocks shared by the projection stacks and the decoder.

Parameters live in flat dicts keyed "block{i}.{name}" plus "final_ln.*";
masks are additive [T, T] arrays (0 = attend, -1e9 = blocked) so every
intermediate stays finite.
"""

from __future__ import annotations

import math

import numpy as np

from facediff.tensor import (Tensor, concat, gelu, layer_norm, matmul, reshape,
                             softmax, transpose)

_MASK_CACHE: dict[tuple, np.ndarray] = {}


def init_linear(params: dict, name: str, n_in: int, n_out: int, rng: np.random.Generator,
                scale: float = 0.02) -> None:
    params[f"{name}.w"] = Tensor(rng.normal(0.0, scale, size=(n_in, n_out)), requires_grad=True)
    params[f"{name}.b"] = Tensor(np.zeros(n_out), requires_grad=True)


def linear(params: dict, name: str, x: Tensor) -> Tensor:
    return matmul(x, params[f"{name}.w"]) + params[f"{name}.b"]


def init_ln(params: dict, name: str, d: int) -> None:
    params[f"{name}.gain"] = Tensor(np.ones(d), requires_grad=True)
    params[f"{name}.bias"] = Tensor(np.zeros(d), requires_grad=True)


def apply_ln(params: dict, name: str, x: Tensor) -> Tensor:
    return layer_norm(x, params[f"{name}.gain"], params[f"{name}.bias"])


def init_stack(n_layers: int, d: int, n_heads: int, rng: np.random.Generator) -> dict[str, Tensor]:
    if d % n_heads != 0:
        raise ValueError(f"model width {d} not divisible by {n_heads} heads")
    params: dict[str, Tensor] = {}
    for i in range(n_layers):
        b = f"block{i}"
        init_ln(params, f"{b}.ln1", d)
        for proj in ("wq", "wk", "wv", "wo"):
            init_linear(params, f"{b}.{proj}", d, d, rng)
        init_ln(params, f"{b}.ln2", d)
        init_linear(params, f"{b}.mlp1", d, 4 * d, rng)
        init_linear(params, f"{b}.mlp2", 4 * d, d, rng)
    init_ln(params, "final_ln", d)
    return params


def _attention(params: dict, block: str, x: Tensor, n_heads: int,
               mask: np.ndarray | None) -> Tensor:
    b, t, d = x.shape
    hd = d // n_heads
    q = linear(params, f"{block}.wq", x)
    k = linear(params, f"{block}.wk", x)
    v = linear(params, f"{block}.wv", x)
    def split(h: Tensor) -> Tensor:
        return transpose(reshape(h, (b, t, n_heads, hd)), (0, 2, 1, 3))
    q, k, v = split(q), split(k), split(v)
    scores = matmul(q, transpose(k, (0, 1, 3, 2))) * (1.0 / math.sqrt(hd))
    if mask is not None:
        scores = scores + Tensor(mask)
    att = softmax(scores, axis=-1)
    out = matmul(att, v)
    out = reshape(transpose(out, (0, 2, 1, 3)), (b, t, d))
    return linear(params, f"{block}.wo", out)


def stack_forward(params: dict, x: Tensor, n_heads: int,
                  mask: np.ndarray | None = None) -> Tensor:
    n_layers = 1 + max(int(key[5:].split(".")[0]) for key in params if key.startswith("block"))
    for i in range(n_layers):
        b = f"block{i}"
        x = x + _attention(params, b, apply_ln(params, f"{b}.ln1", x), n_heads, mask)
        h = apply_ln(params, f"{b}.ln2", x)
        x = x + linear(params, f"{b}.mlp2", gelu(linear(params, f"{b}.mlp1", h)))
    return apply_ln(params, "final_ln", x)


def prefix_causal_mask(prefix_len: int, total_len: int) -> np.ndarray:
    """Full attention inside the prefix, strictly causal everywhere after it."""
    key = ("prefix", prefix_len, total_len)
    if key not in _MASK_CACHE:
        allowed = np.tril(np.ones((total_len, total_len), dtype=bool))
        allowed[:prefix_len, :prefix_len] = True
        _MASK_CACHE[key] = np.where(allowed, 0.0, -1e9)
    return _MASK_CACHE[key]
