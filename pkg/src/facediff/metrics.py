"""Text quality scoring: n-gram overlap, alignment-based, and embedding-based.

All three scores live in [0, 1] and return exactly 1.0 when candidate and
reference are the same non-empty token sequence. Tokenization matches the
corpus convention (lowercased words, apostrophes kept).
"""

from __future__ import annotations

import math
from collections import Counter
from dataclasses import dataclass

import numpy as np

from facediff.decoder import masked_ce
from facediff.model import Model
from facediff.tensor import no_grad
from facediff.text import EOS_ID, PAD_ID, detokenize, tokenize, word_tokens


def _ngrams(tokens: list[str], n: int) -> Counter:
    return Counter(tuple(tokens[i:i + n]) for i in range(len(tokens) - n + 1))


def bleu(candidate: str, references: list[str]) -> float:
    """4-gram BLEU with add-one smoothing on orders 2..4.

    Unigram precision stays unsmoothed so disjoint texts score 0. Brevity
    penalty uses the reference whose length is closest to the candidate,
    breaking ties toward the shorter reference.
    """
    cand = word_tokens(candidate)
    refs = [word_tokens(r) for r in references if word_tokens(r)]
    if not cand or not refs:
        return 0.0
    log_sum = 0.0
    for n in range(1, 5):
        counts = _ngrams(cand, n)
        total = sum(counts.values())
        clipped = 0
        for gram, k in counts.items():
            best = max(_ngrams(ref, n).get(gram, 0) for ref in refs)
            clipped += min(k, best)
        if n == 1:
            if clipped == 0:
                return 0.0
            p = clipped / total
        else:
            p = (clipped + 1) / (total + 1)
        log_sum += 0.25 * math.log(p)
    c = len(cand)
    r = min((abs(len(ref) - c), len(ref)) for ref in refs)[1]
    bp = min(1.0, math.exp(1.0 - r / c))
    return bp * math.exp(log_sum)


def meteor_lite(candidate: str, reference: str, recall_weight: float = 10.0,
                penalty_weight: float = 0.5, penalty_power: float = 3.0) -> float:
    """Recall-weighted unigram F-score with a fragmentation penalty.

    Alignment is greedy: each candidate token takes the leftmost unused
    exact match in the reference. F = w*P*R / (R + (w-1)*P) with w the
    recall weight; penalty = penalty_weight * (chunks / matches)^power,
    applied only when the alignment breaks into more than one chunk so a
    verbatim copy scores exactly 1.0.
    """
    cand = word_tokens(candidate)
    ref = word_tokens(reference)
    if not cand or not ref:
        return 0.0
    used = [False] * len(ref)
    pairs: list[tuple[int, int]] = []
    for i, tok in enumerate(cand):
        for j, rtok in enumerate(ref):
            if not used[j] and rtok == tok:
                used[j] = True
                pairs.append((i, j))
                break
    m = len(pairs)
    if m == 0:
        return 0.0
    precision = m / len(cand)
    recall = m / len(ref)
    w = recall_weight
    f = w * precision * recall / (recall + (w - 1.0) * precision)
    chunks = 1 + sum(1 for k in range(1, m)
                     if pairs[k] != (pairs[k - 1][0] + 1, pairs[k - 1][1] + 1))
    penalty = penalty_weight * (chunks / m) ** penalty_power if chunks > 1 else 0.0
    return f * (1.0 - penalty)


def semscore(candidate: str, reference: str, table: np.ndarray, vocab) -> float:
    """Harmonic mean of greedy embedding similarity in both directions.

    Tokens map through the vocab into rows of the decoder token table;
    cosine similarities are shifted from [-1, 1] into [0, 1] before the
    directional means, so antipodal embeddings score 0 rather than -1.
    """
    ids_c = [vocab.id_of(t) for t in word_tokens(candidate)]
    ids_r = [vocab.id_of(t) for t in word_tokens(reference)]
    if not ids_c or not ids_r:
        return 0.0
    table = np.asarray(table, dtype=np.float64)

    def unit_rows(ids):
        rows = table[ids]
        norms = np.linalg.norm(rows, axis=1, keepdims=True)
        return rows / np.maximum(norms, 1e-12)

    sim = unit_rows(ids_c) @ unit_rows(ids_r).T
    mapped = (sim + 1.0) / 2.0
    p = float(mapped.max(axis=1).mean())
    r = float(mapped.max(axis=0).mean())
    if p + r == 0.0:
        return 0.0
    return 2.0 * p * r / (p + r)


@dataclass
class MetricReport:
    meteor_lite: float
    bleu: float
    semscore: float
    ce_loss: float
    n_examples: int

    def __post_init__(self):
        for field in ("meteor_lite", "bleu", "semscore"):
            v = getattr(self, field)
            if not 0.0 <= v <= 1.0:
                raise ValueError(f"{field} must lie in [0, 1], got {v}")
        if self.ce_loss < 0 or not math.isfinite(self.ce_loss):
            raise ValueError(f"ce_loss must be finite and >= 0, got {self.ce_loss}")
        if self.n_examples <= 0:
            raise ValueError("n_examples must be positive")


def evaluate_model(model: Model, records, tier: str = "concise",
                   batch_size: int = 32) -> MetricReport:
    """Greedy-decode every record and score against its rendered description.

    CE is teacher-forced mean loss per non-PAD target token across the whole
    set; the text metrics average per example over generated outputs.
    """
    if not records:
        raise ValueError("cannot evaluate on an empty record set")
    table = model.params.groups["decoder"]["token_table"].data
    scores = np.zeros(3)
    ce_sum, tok_sum = 0.0, 0
    for start in range(0, len(records), batch_size):
        chunk = records[start:start + batch_size]
        attrs_a = np.stack([r.face_a.attrs for r in chunk])
        attrs_b = np.stack([r.face_b.attrs for r in chunk])
        prompts = model.prompt_batch([r.prompt for r in chunk])
        with no_grad():
            outputs = model.generate(attrs_a, attrs_b, prompts)
            targets = _target_batch(model, chunk, tier)
            ce = masked_ce(model.logits(attrs_a, attrs_b, prompts, targets), targets)
        n_tok = int((targets != PAD_ID).sum())
        ce_sum += ce.item() * n_tok
        tok_sum += n_tok
        for rec, ids in zip(chunk, outputs):
            hyp = detokenize(ids, model.vocab)
            ref = rec.description(tier)
            scores += (meteor_lite(hyp, ref), bleu(hyp, [ref]),
                       semscore(hyp, ref, table, model.vocab))
    mean = scores / len(records)
    return MetricReport(meteor_lite=float(mean[0]), bleu=float(mean[1]),
                        semscore=float(mean[2]), ce_loss=ce_sum / tok_sum,
                        n_examples=len(records))


def _target_batch(model: Model, records, tier: str) -> np.ndarray:
    seqs = [tokenize(r.description(tier), model.vocab,
                     max_len=model.dims.max_text_len - 1) + [EOS_ID]
            for r in records]
    width = max(len(s) for s in seqs)
    out = np.full((len(seqs), width), PAD_ID, dtype=int)
    for i, s in enumerate(seqs):
        out[i, :len(s)] = s
    return out


REPORT_HEADER = "config,meteor_lite,bleu,semscore,ce_loss,n_examples"


def write_report(rows: list[tuple[str, MetricReport]], path: str) -> None:
    """One CSV row per configuration, floats in shortest-repr form."""
    lines = [REPORT_HEADER]
    for name, rep in rows:
        if "," in name or "\n" in name:
            raise ValueError(f"config name {name!r} cannot contain commas or newlines")
        lines.append(f"{name},{rep.meteor_lite!r},{rep.bleu!r},{rep.semscore!r},"
                     f"{rep.ce_loss!r},{rep.n_examples}")
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("\n".join(lines) + "\n")
