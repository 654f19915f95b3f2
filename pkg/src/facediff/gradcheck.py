"""Finite-difference verification for every op and the end-to-end model.

The op suite exercises each differentiable primitive on small random inputs.
The model suite builds the standard check model (h=32, s=4, c=4, t=5, d=16,
about 200 vocabulary entries), runs the two-term loss on a batch of 2, and
checks the analytic gradient of every parameter group against central
differences. To keep the full sweep under a desk-scale time budget, each
group is subsampled to a seeded coordinate quota unless full=True.
"""

from __future__ import annotations

import numpy as np

from facediff import tensor as T
from facediff.data import generate_dataset
from facediff.mapper import ModelDims
from facediff.model import Model, build_model
from facediff.tensor import GradCheckReport, Tensor, grad_check
from facediff.text import SPECIAL_TOKENS, Vocab
from facediff.training import LossConfig, diversity_loss

DEFAULT_COORD_QUOTA = 400


def _probe(out: Tensor, seed: int) -> Tensor:
    """Project any output to a scalar through a fixed random blend."""
    rng = np.random.default_rng(seed)
    return T.tensor_sum(out * Tensor(rng.normal(size=out.shape)))


def _rand(rng, *shape, positive=False):
    data = rng.normal(size=shape)
    if positive:
        data = np.abs(data) + 0.5
    return Tensor(data, requires_grad=True)


def op_suite(step: float = 1e-5, tol: float = 1e-4,
             seed: int = 0) -> list[GradCheckReport]:
    """One report per differentiable primitive; composites ride on top."""
    rng = np.random.default_rng(seed)
    reports = []

    def check(name, build):
        f, params = build()
        reports.append(grad_check(f, params, step=step, tol=tol, op_name=name,
                                  seed=seed))

    a = _rand(rng, 3, 4)
    b = _rand(rng, 3, 4)
    row = _rand(rng, 4)
    pos = _rand(rng, 3, 4, positive=True)
    m1 = _rand(rng, 3, 5)
    m2 = _rand(rng, 5, 2)
    bm1 = _rand(rng, 2, 3, 5)
    bm2 = _rand(rng, 2, 5, 4)
    gain = _rand(rng, 4)
    bias = _rand(rng, 4)
    table = _rand(rng, 6, 4)
    logits = _rand(rng, 2, 3, 6)
    ids = np.array([[1, 4, 2], [0, 5, 3]])

    check("add_broadcast", lambda: (lambda: _probe(a + row, 1), [a, row]))
    check("sub", lambda: (lambda: _probe(a - b, 2), [a, b]))
    check("mul_broadcast", lambda: (lambda: _probe(a * row, 3), [a, row]))
    check("neg", lambda: (lambda: _probe(-a, 4), [a]))
    check("div", lambda: (lambda: _probe(a / pos, 5), [a, pos]))
    check("power", lambda: (lambda: _probe(pos ** 1.7, 6), [pos]))
    check("exp", lambda: (lambda: _probe(T.exp(a), 7), [a]))
    check("log", lambda: (lambda: _probe(T.log(pos), 8), [pos]))
    check("sqrt", lambda: (lambda: _probe(T.sqrt(pos), 9), [pos]))
    check("tanh", lambda: (lambda: _probe(T.tanh(a), 10), [a]))
    check("sigmoid", lambda: (lambda: _probe(T.sigmoid(a), 11), [a]))
    check("softplus", lambda: (lambda: _probe(T.softplus(a), 12), [a]))
    check("gelu", lambda: (lambda: _probe(T.gelu(a), 13), [a]))
    check("matmul", lambda: (lambda: _probe(m1 @ m2, 14), [m1, m2]))
    check("matmul_batched", lambda: (lambda: _probe(bm1 @ bm2, 15), [bm1, bm2]))
    check("reshape", lambda: (lambda: _probe(T.reshape(a, (2, 6)), 16), [a]))
    check("transpose", lambda: (lambda: _probe(T.transpose(bm1, (1, 0, 2)), 17), [bm1]))
    check("getitem", lambda: (lambda: _probe(a[1:, :2], 18), [a]))
    check("concat", lambda: (lambda: _probe(T.concat([a, b], axis=1), 19), [a, b]))
    check("broadcast_to", lambda: (lambda: _probe(T.broadcast_to(row, (3, 4)), 20), [row]))
    check("sum_axis", lambda: (lambda: _probe(T.tensor_sum(a, axis=0), 21), [a]))
    check("mean_keepdims",
          lambda: (lambda: _probe(T.tensor_mean(a, axis=1, keepdims=True), 22), [a]))
    check("gather_rows", lambda: (lambda: _probe(T.gather_rows(table, ids), 23), [table]))
    check("gather_last", lambda: (lambda: _probe(T.gather_last(logits, ids), 24), [logits]))
    check("softmax", lambda: (lambda: _probe(T.softmax(logits), 25), [logits]))
    check("log_softmax", lambda: (lambda: _probe(T.log_softmax(logits), 26), [logits]))
    check("layer_norm",
          lambda: (lambda: _probe(T.layer_norm(a, gain, bias), 27), [a, gain, bias]))
    check("diversity_loss", lambda: (
        lambda: diversity_loss(logits, ids % 5 + 1, LossConfig(entropy_weight=0.05))[0],
        [logits]))
    return reports


def check_dims() -> ModelDims:
    return ModelDims(h=32, s=4, c=4, t=5, d=16, n_heads=2, proj_layers=1,
                     fusion_layers=1, decoder_layers=2, attr_dim=6,
                     max_text_len=24)


def check_vocab(n_words: int = 196) -> Vocab:
    return Vocab(SPECIAL_TOKENS + tuple(f"w{i}" for i in range(n_words)))


def build_check_model(seed: int = 0) -> Model:
    return build_model(check_vocab(), check_dims(), seed=seed)


def model_suite(full: bool = False, step: float = 1e-5, tol: float = 1e-4,
                seed: int = 0,
                coord_quota: int = DEFAULT_COORD_QUOTA) -> list[GradCheckReport]:
    """Per-group finite-difference checks of the full training loss, batch 2."""
    model = build_check_model(seed)
    records = generate_dataset(4, 2, seed=seed)
    attrs_a = np.stack([r.face_a.attrs for r in records])
    attrs_b = np.stack([r.face_b.attrs for r in records])
    prompts = model.prompt_batch([r.prompt for r in records])
    rng = np.random.default_rng(seed)
    targets = rng.integers(len(SPECIAL_TOKENS), model.vocab.size, size=(2, 6))
    loss_cfg = LossConfig(entropy_weight=0.01)

    def loss():
        return diversity_loss(model.logits(attrs_a, attrs_b, prompts, targets),
                              targets, loss_cfg)[0]

    # With loss ~ 5 and step 1e-5, the difference quotient has ~1e-10 of
    # roundoff, so coordinates whose gradient sits below 1e-4 are judged on
    # absolute error (<= 1e-8) rather than an unresolvable relative one.
    reports = []
    for group in sorted(model.params.groups):
        tensors = [model.params.groups[group][k]
                   for k in sorted(model.params.groups[group])]
        cap = None if full else max(1, coord_quota // len(tensors))
        reports.append(grad_check(loss, tensors, step=step, tol=tol,
                                  op_name=f"loss/{group}",
                                  max_coords_per_param=cap, seed=seed,
                                  scale_floor=1e-4))
    return reports


def run_all(quick: bool = False, full: bool = False,
            seed: int = 0) -> list[GradCheckReport]:
    reports = op_suite(seed=seed)
    if not quick:
        reports.extend(model_suite(full=full, seed=seed))
    return reports
