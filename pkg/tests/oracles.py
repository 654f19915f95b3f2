"""Independent reference implementations used to cross-check scoring code.

Everything here is written from the stated formulas with plain loops and no
shared helpers, so agreement with the package is evidence, not tautology.
"""

import math
import re


def simple_tokens(text):
    return re.findall(r"[a-z0-9']+", text.lower())


def oracle_bleu(candidate, references):
    ctoks = simple_tokens(candidate)
    reftoks = [simple_tokens(r) for r in references if simple_tokens(r)]
    if len(ctoks) == 0 or len(reftoks) == 0:
        return 0.0
    logs = []
    for n in (1, 2, 3, 4):
        cgrams = [tuple(ctoks[i:i + n]) for i in range(len(ctoks) - n + 1)]
        num = 0
        for gram in sorted(set(cgrams)):
            have = cgrams.count(gram)
            best = 0
            for rt in reftoks:
                rgrams = [tuple(rt[i:i + n]) for i in range(len(rt) - n + 1)]
                found = rgrams.count(gram)
                if found > best:
                    best = found
            num += have if have < best else best
        den = len(cgrams)
        if n == 1:
            if num == 0:
                return 0.0
            logs.append(math.log(num / den))
        else:
            logs.append(math.log((num + 1) / (den + 1)))
    c = len(ctoks)
    best_len, best_gap = None, None
    for rt in reftoks:
        gap = abs(len(rt) - c)
        if best_gap is None or gap < best_gap or (gap == best_gap and len(rt) < best_len):
            best_gap, best_len = gap, len(rt)
    bp = math.exp(1.0 - best_len / c) if c < best_len else 1.0
    return bp * math.exp(sum(logs) / 4.0)


def oracle_meteor(candidate, reference, w=10.0, gamma=0.5, beta=3.0):
    cand = simple_tokens(candidate)
    ref = simple_tokens(reference)
    if not cand or not ref:
        return 0.0
    taken = set()
    align = []
    for ci in range(len(cand)):
        for rj in range(len(ref)):
            if rj not in taken and ref[rj] == cand[ci]:
                taken.add(rj)
                align.append((ci, rj))
                break
    m = len(align)
    if m == 0:
        return 0.0
    p = m / len(cand)
    r = m / len(ref)
    f = w * p * r / (r + (w - 1.0) * p)
    chunks = 0
    prev = None
    for pair in align:
        if prev is None or pair != (prev[0] + 1, prev[1] + 1):
            chunks += 1
        prev = pair
    pen = gamma * (chunks / m) ** beta if chunks > 1 else 0.0
    return f * (1.0 - pen)


def oracle_semscore(candidate, reference, table, vocab):
    cand = simple_tokens(candidate)
    ref = simple_tokens(reference)
    if not cand or not ref:
        return 0.0

    def vec(tok):
        return [float(x) for x in table[vocab.id_of(tok)]]

    def cosine(u, v):
        dot = sum(a * b for a, b in zip(u, v))
        nu = math.sqrt(sum(a * a for a in u))
        nv = math.sqrt(sum(b * b for b in v))
        return dot / (max(nu, 1e-12) * max(nv, 1e-12))

    def directional(src, dst):
        total = 0.0
        for s in src:
            best = -2.0
            for d in dst:
                sim = (cosine(vec(s), vec(d)) + 1.0) / 2.0
                if sim > best:
                    best = sim
            total += best
        return total / len(src)

    p = directional(cand, ref)
    r = directional(ref, cand)
    if p + r == 0.0:
        return 0.0
    return 2.0 * p * r / (p + r)


def oracle_cosine_restart(step, lr, lr_min, period, warmup):
    if warmup > 0 and step < warmup:
        return lr * (step + 1) / warmup
    t = (step - warmup) % period
    return lr_min + 0.5 * (lr - lr_min) * (1.0 + math.cos(math.pi * t / period))


def oracle_diversity_terms(logits_row, target_index, lam, eps):
    """Single-position loss terms from the stated formulas, stdlib math only."""
    mx = max(logits_row)
    exps = [math.exp(v - mx) for v in logits_row]
    z = sum(exps)
    probs = [e / z for e in exps]
    ce = -(math.log(probs[target_index]))
    ent = -sum(p * math.log(p + eps) for p in probs)
    loss = ce if lam == 0.0 else ce - lam * ent
    return loss, ce, ent
