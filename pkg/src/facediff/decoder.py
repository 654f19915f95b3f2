"""Decoder-only language model conditioned on a fused prefix.

The prefix occupies positions 0..L-1 and target tokens continue at L..L+T-1
in one positional index space. Attention is full within the prefix and
strictly causal afterwards, so the logits for target step j depend only on
the prefix and targets before j (teacher forcing shifts targets right behind
a BOS). The output head is the transposed token table when tied.
"""

from __future__ import annotations

import numpy as np

from facediff.optim import Adam
from facediff.tensor import (Tensor, concat, gather_last, gather_rows, log_softmax,
                             matmul, no_grad, transpose)
from facediff.text import BOS_ID, EOS_ID, PAD_ID
from facediff.transformer import init_stack, prefix_causal_mask, stack_forward
from facediff.mapper import ModelDims


def init_decoder(dims: ModelDims, maxlen: int, rng: np.random.Generator,
                 tie_output_head: bool = True) -> dict[str, Tensor]:
    params: dict[str, Tensor] = {}
    params["token_table"] = Tensor(rng.normal(0.0, 0.02, size=(dims.V, dims.d)),
                                   requires_grad=True)
    params["pos_table"] = Tensor(rng.normal(0.0, 0.02, size=(maxlen, dims.d)),
                                 requires_grad=True)
    if not tie_output_head:
        params["head"] = Tensor(rng.normal(0.0, 0.02, size=(dims.d, dims.V)),
                                requires_grad=True)
    params.update(init_stack(dims.decoder_layers, dims.d, dims.n_heads, rng))
    return params


def sep_row(params: dict[str, Tensor]) -> Tensor:
    """The separator embedding is the decoder's own EOS table row."""
    return gather_rows(params["token_table"], np.array([EOS_ID]))[0]


def decode_logits(params: dict[str, Tensor], prefix: Tensor, target_ids: np.ndarray,
                  dims: ModelDims) -> Tensor:
    """Teacher-forced logits [b, T, V]; step j sees prefix and targets < j."""
    target_ids = np.asarray(target_ids)
    b, L = prefix.shape[0], prefix.shape[1]
    T = target_ids.shape[1]
    maxlen = params["pos_table"].shape[0]
    if L + T > maxlen:
        raise IndexError(f"sequence length {L + T} exceeds positional table {maxlen}")
    input_ids = np.concatenate([np.full((b, 1), BOS_ID), target_ids[:, :-1]], axis=1)
    pos = params["pos_table"]
    tok = gather_rows(params["token_table"], input_ids) + pos[L:L + T]
    x = concat([prefix + pos[:L], tok], axis=1) if L else tok
    x = stack_forward(params, x, dims.n_heads, mask=prefix_causal_mask(L, L + T))
    x = x[:, L:]
    if "head" in params:
        return matmul(x, params["head"])
    return matmul(x, transpose(params["token_table"], (1, 0)))


def generate_batch(params: dict[str, Tensor], prefix: Tensor, dims: ModelDims,
                   max_new: int, mode: str = "greedy") -> list[list[int]]:
    """Greedy decoding per row, stopping at EOS or max_new tokens (EOS kept)."""
    if mode != "greedy":
        raise ValueError(f"unsupported decoding mode {mode!r}")
    b = prefix.shape[0]
    out: list[list[int]] = [[] for _ in range(b)]
    done = [False] * b
    current = np.zeros((b, 0), dtype=int)
    with no_grad():
        for _ in range(max_new):
            probe = np.concatenate([current, np.full((b, 1), PAD_ID)], axis=1)
            logits = decode_logits(params, prefix, probe, dims)
            nxt = logits.data[:, -1, :].argmax(axis=-1).astype(int)
            current = np.concatenate([current, nxt[:, None]], axis=1)
            for i in range(b):
                if not done[i]:
                    out[i].append(int(nxt[i]))
                    if nxt[i] == EOS_ID:
                        done[i] = True
            if all(done):
                break
    return out


def generate(params: dict[str, Tensor], prefix: Tensor, dims: ModelDims,
             max_new: int, mode: str = "greedy") -> list[int]:
    if prefix.shape[0] != 1:
        raise ValueError(f"generate takes a single prefix, got batch {prefix.shape[0]}")
    return generate_batch(params, prefix, dims, max_new, mode)[0]


def masked_ce(logits: Tensor, target_ids: np.ndarray, pad_id: int = PAD_ID) -> Tensor:
    """Mean next-token cross entropy over non-PAD target positions."""
    mask = (np.asarray(target_ids) != pad_id).astype(np.float64)
    n = mask.sum()
    if n == 0:
        raise ValueError("loss saw only PAD targets")
    token_ll = gather_last(log_softmax(logits, axis=-1), target_ids)
    return -(token_ll * Tensor(mask)).sum() / float(n)


def _pad_batch(seqs: list[list[int]]) -> np.ndarray:
    width = max(len(s) for s in seqs)
    out = np.full((len(seqs), width), PAD_ID, dtype=int)
    for i, s in enumerate(seqs):
        out[i, :len(s)] = s
    return out


def lm_pretrain(sequences: list[list[int]], params: dict[str, Tensor], dims: ModelDims,
                epochs: int, lr: float = 1e-3, batch_size: int = 16,
                seed: int = 0) -> list[dict]:
    """Unimodal next-token pretraining on token sequences (no visual prefix).

    Each sequence is extended with EOS; optimization is plain Adam at a
    constant rate. Returns per-epoch mean CE.
    """
    targets = [list(s) + [EOS_ID] for s in sequences]
    opt = Adam()
    rng = np.random.default_rng(seed)
    names = sorted(params)
    log: list[dict] = []
    n = len(targets)
    for epoch in range(epochs):
        order = rng.permutation(n)
        losses = []
        for start in range(0, n, batch_size):
            batch = [targets[i] for i in order[start:start + batch_size]]
            ids = _pad_batch(batch)
            for p in params.values():
                p.zero_grad()
            prefix = Tensor(np.zeros((len(batch), 0, dims.d)))
            loss = masked_ce(decode_logits(params, prefix, ids, dims), ids)
            loss.backward()
            opt.step([(name, params[name]) for name in names], lr)
            losses.append(loss.item())
        log.append({"epoch": epoch, "ce": float(np.mean(losses))})
    return log


def lm_ce(sequences: list[list[int]], params: dict[str, Tensor], dims: ModelDims) -> float:
    """Teacher-forced mean CE of the bare LM on a sequence corpus."""
    targets = [list(s) + [EOS_ID] for s in sequences]
    ids = _pad_batch(targets)
    with no_grad():
        prefix = Tensor(np.zeros((len(targets), 0, dims.d)))
        return masked_ce(decode_logits(params, prefix, ids, dims), ids).item()
