"""Face attribute encoder: a small MLP pretrained on same/different verification.

Two interchangeable variants sit behind EncoderSpec; both map an attribute
vector to an h-dimensional embedding, so the rest of the stack never needs
to know which one is active.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from facediff.optim import Adam
from facediff.tensor import Tensor, gelu, no_grad, softplus, sqrt, tanh
from facediff.transformer import init_linear, linear

ENCODER_KINDS = ("variant_a", "variant_b")


@dataclass
class FaceAttr:
    """One synthetic face: identity plus its realized attribute coordinates."""

    identity_id: int
    attrs: np.ndarray
    noise_seed: int = 0

    def __post_init__(self):
        self.attrs = np.asarray(self.attrs, dtype=np.float64)
        if self.attrs.ndim != 1:
            raise ValueError(f"attrs must be a vector, got shape {self.attrs.shape}")
        if not np.isfinite(self.attrs).all():
            raise ValueError("attrs must be finite")


@dataclass
class EncoderSpec:
    """Which encoder body to build and the embedding width it must emit."""

    kind: str = "variant_a"
    h: int = 32
    layers: int = 0

    def __post_init__(self):
        if self.kind not in ENCODER_KINDS:
            raise ValueError(f"unknown encoder kind {self.kind!r}")
        if self.layers == 0:
            self.layers = 2 if self.kind == "variant_a" else 3
        if self.h <= 0 or self.layers <= 0:
            raise ValueError("h and layers must be positive")


def init_encoder(spec: EncoderSpec, attr_dim: int, rng: np.random.Generator) -> dict[str, Tensor]:
    params: dict[str, Tensor] = {}
    if spec.kind == "variant_a":
        widths = [attr_dim, 64, spec.h]
    else:
        widths = [attr_dim] + [48] * (spec.layers - 1) + [spec.h]
    for i in range(len(widths) - 1):
        init_linear(params, f"fc{i}", widths[i], widths[i + 1], rng, scale=0.2)
    # verification head used only during pretraining
    params["cls.scale"] = Tensor(np.array([1.0]), requires_grad=True)
    params["cls.bias"] = Tensor(np.array([0.0]), requires_grad=True)
    return params


def _as_attr_batch(faces) -> np.ndarray:
    if isinstance(faces, FaceAttr):
        return faces.attrs[None, :]
    if isinstance(faces, (list, tuple)):
        return np.stack([f.attrs for f in faces])
    arr = np.asarray(faces, dtype=np.float64)
    if arr.ndim == 1:
        arr = arr[None, :]
    return arr


def encode_face(faces, params: dict[str, Tensor], spec: EncoderSpec) -> Tensor:
    """Embed one face or a batch to [b, h]; same params for every call site."""
    attrs = _as_attr_batch(faces)
    x = Tensor(attrs)
    n_layers = sum(1 for k in params if k.startswith("fc") and k.endswith(".w"))
    act = tanh if spec.kind == "variant_a" else gelu
    for i in range(n_layers):
        x = linear(params, f"fc{i}", x)
        if i < n_layers - 1:
            x = act(x)
    return x


def pair_cosine(e1: Tensor, e2: Tensor) -> Tensor:
    """Cosine similarity of two [b, h] embedding batches, regularized at zero."""
    dot = (e1 * e2).sum(axis=-1)
    n1 = sqrt((e1 * e1).sum(axis=-1) + 1e-12)
    n2 = sqrt((e2 * e2).sum(axis=-1) + 1e-12)
    return dot / (n1 * n2)


def _pair_arrays(records) -> tuple[np.ndarray, np.ndarray, np.ndarray, set[int]]:
    a, b, y, identities = [], [], [], set()
    for rec in records:
        a.append(rec.face_a.attrs)
        b.append(rec.face_b.attrs)
        label = rec.label if isinstance(rec.label, str) else ("match" if rec.label else "no_match")
        y.append(1.0 if label == "match" else -1.0)
        identities.add(rec.face_a.identity_id)
        identities.add(rec.face_b.identity_id)
    return np.stack(a), np.stack(b), np.array(y), identities


def pretrain_encoder(records, params: dict[str, Tensor], spec: EncoderSpec,
                     epochs: int, lr: float = 1e-2, batch_size: int = 32,
                     seed: int = 0) -> list[dict]:
    """Verification pretraining: logistic loss on pair cosine similarity.

    Returns a per-epoch log of loss and same/different accuracy. Zero epochs
    is a no-op that leaves params byte-identical.
    """
    attrs_a, attrs_b, labels, identities = _pair_arrays(records)
    if len(identities) < 2:
        raise ValueError(f"verification pretraining needs at least 2 identities, "
                         f"got {len(identities)}")
    opt = Adam()
    rng = np.random.default_rng(seed)
    names = sorted(params)
    log: list[dict] = []
    n = len(labels)
    for epoch in range(epochs):
        order = rng.permutation(n)
        losses, correct = [], 0
        for start in range(0, n, batch_size):
            idx = order[start:start + batch_size]
            for p in params.values():
                p.zero_grad()
            e1 = encode_face(attrs_a[idx], params, spec)
            e2 = encode_face(attrs_b[idx], params, spec)
            z = pair_cosine(e1, e2) * params["cls.scale"] + params["cls.bias"]
            loss = softplus(z * Tensor(-labels[idx])).mean()
            loss.backward()
            opt.step([(name, params[name]) for name in names], lr)
            losses.append(loss.item())
            correct += int(((z.data > 0) == (labels[idx] > 0)).sum())
        log.append({"epoch": epoch, "loss": float(np.mean(losses)), "accuracy": correct / n})
    return log


def pair_accuracy(records, params: dict[str, Tensor], spec: EncoderSpec) -> float:
    attrs_a, attrs_b, labels, _ = _pair_arrays(records)
    with no_grad():
        e1 = encode_face(attrs_a, params, spec)
        e2 = encode_face(attrs_b, params, spec)
        z = pair_cosine(e1, e2) * params["cls.scale"] + params["cls.bias"]
    return float(((z.data > 0) == (labels > 0)).mean())
