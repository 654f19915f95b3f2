"""Synthetic paired-face dataset with two-tier template explanations.

Identities are prototypes over six named attribute slots; each slot level
maps to a continuous coordinate so the encoder sees real vectors while the
description templates reason over the decoded levels. A realization is a
prototype plus Gaussian jitter and an occasional grooming flip, which is
how a genuine match pair can still show a minor attribute difference.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from statistics import fmean

import numpy as np

from facediff.encoder import FaceAttr
from facediff.text import word_tokens

PROMPT_TEMPLATE = "do these two faces show the same person? explain."

ATTRIBUTE_SLOTS: tuple[tuple[str, tuple[str, ...]], ...] = (
    ("skin tone", ("fair", "tan", "olive", "bronze", "deep")),
    ("eye shape", ("almond", "round", "hooded", "narrow", "upturned")),
    ("hair color", ("black", "brown", "blonde", "auburn", "silver")),
    ("jawline", ("rounded", "square", "pointed", "soft", "angular")),
    ("facial hair", ("absent", "stubble", "mustache", "beard", "goatee")),
    ("eyebrow thickness", ("thin", "sparse", "medium", "thick", "bushy")),
)
N_SLOTS = len(ATTRIBUTE_SLOTS)
GROOMABLE_SLOTS = (2, 4)  # hair color, facial hair
NOISE_SIGMA = 0.06
FLIP_PROB = 0.15

MATCH_VERDICT = "depict the same person"
NO_MATCH_VERDICT = "do not depict the same person"


class DataFormatError(ValueError):
    """A dataset file violates the line-delimited record format."""


def _rng(*key: int) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence(list(key)))


def slot_center(slot: int, level: int) -> float:
    k = len(ATTRIBUTE_SLOTS[slot][1])
    return -1.0 + 2.0 * (level + 0.5) / k


def decode_level(slot: int, coord: float) -> int:
    k = len(ATTRIBUTE_SLOTS[slot][1])
    level = int(round((coord + 1.0) / 2.0 * k - 0.5))
    return min(max(level, 0), k - 1)


def decode_levels(attrs: np.ndarray) -> tuple[int, ...]:
    return tuple(decode_level(i, attrs[i]) for i in range(N_SLOTS))


@dataclass
class IdentityProto:
    """A prototype face: one level per slot plus optional free coordinates."""

    identity_id: int
    levels: tuple[int, ...]
    attrs: np.ndarray


@dataclass
class PairRecord:
    """One training example: two faces, a label, and both description tiers."""

    pair_id: int
    face_a: FaceAttr
    face_b: FaceAttr
    label: str
    prompt: str
    concise: str
    comprehensive: str

    def __post_init__(self):
        if self.label not in ("match", "no_match"):
            raise ValueError(f"label must be match or no_match, got {self.label!r}")
        if self.face_a.attrs.shape != self.face_b.attrs.shape:
            raise ValueError("face attribute vectors must have equal length")

    def description(self, tier: str) -> str:
        if tier == "concise":
            return self.concise
        if tier == "comprehensive":
            return self.comprehensive
        raise ValueError(f"unknown tier {tier!r}")


def gen_identities(n: int, attr_dim: int = N_SLOTS, seed: int = 0) -> list[IdentityProto]:
    """Sample n distinct prototypes with roughly uniform slot marginals."""
    if attr_dim < N_SLOTS:
        raise ValueError(f"attr_dim must be at least {N_SLOTS}, got {attr_dim}")
    if n < 1:
        raise ValueError("need at least one identity")
    rng = _rng(seed, 0)
    seen: set[tuple[int, ...]] = set()
    protos: list[IdentityProto] = []
    while len(protos) < n:
        levels = tuple(int(rng.integers(len(values))) for _, values in ATTRIBUTE_SLOTS)
        if levels in seen:
            continue
        seen.add(levels)
        attrs = np.empty(attr_dim)
        for slot, level in enumerate(levels):
            attrs[slot] = slot_center(slot, level)
        if attr_dim > N_SLOTS:
            attrs[N_SLOTS:] = rng.uniform(-1.0, 1.0, size=attr_dim - N_SLOTS)
        protos.append(IdentityProto(len(protos), levels, attrs))
    return protos


def realize_face(proto: IdentityProto, noise_seed: int,
                 flip_prob: float = FLIP_PROB) -> FaceAttr:
    """One noisy observation of a prototype, with an occasional grooming flip."""
    rng = np.random.default_rng(noise_seed)
    attrs = proto.attrs.copy()
    if rng.random() < flip_prob:
        slot = int(rng.choice(GROOMABLE_SLOTS))
        k = len(ATTRIBUTE_SLOTS[slot][1])
        delta = 1 if rng.random() < 0.5 else -1
        level = min(max(proto.levels[slot] + delta, 0), k - 1)
        attrs[slot] = slot_center(slot, level)
    attrs += rng.normal(0.0, NOISE_SIGMA, size=attrs.shape)
    return FaceAttr(proto.identity_id, attrs, noise_seed=noise_seed)


def gen_pairs(identities: list[IdentityProto], n_pairs: int, match_fraction: float,
              seed: int = 0) -> list[tuple[FaceAttr, FaceAttr, str]]:
    """Sample labeled face pairs; the match count is exactly
    round(match_fraction * n_pairs)."""
    if not 0.0 <= match_fraction <= 1.0:
        raise ValueError(f"match_fraction must be in [0, 1], got {match_fraction}")
    if len(identities) < 2 and match_fraction < 1.0:
        raise ValueError("no-match pairs need at least two identities")
    rng = _rng(seed, 1)
    n_match = round(match_fraction * n_pairs)
    labels = ["match"] * n_match + ["no_match"] * (n_pairs - n_match)
    labels = [labels[i] for i in rng.permutation(n_pairs)]
    pairs = []
    for label in labels:
        if label == "match":
            proto = identities[int(rng.integers(len(identities)))]
            face_a = realize_face(proto, int(rng.integers(2 ** 62)))
            face_b = realize_face(proto, int(rng.integers(2 ** 62)))
        else:
            ia, ib = rng.choice(len(identities), size=2, replace=False)
            proto_a, proto_b = identities[int(ia)], identities[int(ib)]
            # retry the rare draw whose jitter hides every prototype difference
            for _ in range(8):
                face_a = realize_face(proto_a, int(rng.integers(2 ** 62)))
                face_b = realize_face(proto_b, int(rng.integers(2 ** 62)))
                if decode_levels(face_a.attrs) != decode_levels(face_b.attrs):
                    break
        pairs.append((face_a, face_b, label))
    return pairs


def _slot_phrase(slot: int, level: int) -> str:
    return ATTRIBUTE_SLOTS[slot][1][level]


def render_description(face_a: FaceAttr, face_b: FaceAttr, label: str, tier: str,
                       seed: int = 0) -> str:
    """Deterministic template text for one pair; the verdict always follows
    the label while the attribute clauses follow the decoded coordinates."""
    rng = np.random.default_rng(seed)
    la, lb = decode_levels(face_a.attrs), decode_levels(face_b.attrs)
    same = [i for i in range(N_SLOTS) if la[i] == lb[i]]
    diff = [i for i in range(N_SLOTS) if la[i] != lb[i]]
    if tier == "concise":
        return _render_concise(la, lb, same, diff, label, rng)
    if tier == "comprehensive":
        return _render_comprehensive(la, lb, same, diff, label, rng)
    raise ValueError(f"unknown tier {tier!r}")


def render_descriptions(rec: PairRecord, tier: str, seed: int = 0) -> str:
    return render_description(rec.face_a, rec.face_b, rec.label, tier, seed)


def _render_concise(la, lb, same, diff, label, rng) -> str:
    pick = lambda options: options[int(rng.integers(len(options)))]
    if label == "match":
        opening = pick((
            "the two facial images show strong agreement across the key identifying attributes.",
            "a quick comparison of the two facial images reveals broad agreement on the defining attributes.",
        ))
        shared = same if same else [0, 1]
        named = shared[:4] if len(shared) >= 4 else shared + diff[: 4 - len(shared)]
        body = (f"both faces present {_slot_phrase(0, la[0])} skin tone and "
                f"{_slot_phrase(1, la[1])} eyes, together with {_slot_phrase(2, la[2])} hair "
                f"and a {_slot_phrase(3, la[3])} jawline.")
        if diff:
            i = diff[0]
            detail = (f"the only minor deviation concerns the {ATTRIBUTE_SLOTS[i][0]}, which "
                      f"shifts from {_slot_phrase(i, la[i])} to {_slot_phrase(i, lb[i])} "
                      f"between the first and second image.")
        else:
            detail = pick((
                "the remaining attributes, including facial hair and eyebrow thickness, line up consistently as well.",
                "every remaining attribute, from facial hair down to eyebrow thickness, lines up consistently too.",
            ))
        verdict = f"overall, these images {MATCH_VERDICT}."
        return " ".join([opening, body, detail, verdict])
    opening = pick((
        "the two facial images share a few surface features but diverge on core attributes.",
        "at first glance the two facial images look loosely related, yet the core attributes diverge.",
    ))
    i = diff[0]
    clauses = [f"the first face shows {_slot_phrase(i, la[i])} {ATTRIBUTE_SLOTS[i][0]} "
               f"while the second shows {_slot_phrase(i, lb[i])}"]
    if len(diff) > 1:
        j = diff[1]
        clauses.append(f"and the {ATTRIBUTE_SLOTS[j][0]} likewise differs, "
                       f"{_slot_phrase(j, la[j])} against {_slot_phrase(j, lb[j])}")
    body = ", ".join(clauses) + "."
    if same:
        middle = (f"agreement on {ATTRIBUTE_SLOTS[same[0]][0]} is not enough to offset "
                  f"these mismatches.")
    else:
        middle = "hardly any attribute survives the comparison intact."
    verdict = f"taken together, these images {NO_MATCH_VERDICT}."
    return " ".join([opening, body, middle, verdict])


def _render_comprehensive(la, lb, same, diff, label, rng) -> str:
    pick = lambda options: options[int(rng.integers(len(options)))]
    opening = pick((
        "upon close inspection of the two facial images, a number of detailed observations "
        "emerge regarding every identifying attribute.",
        "a careful side by side review of the two portraits supports a full attribute by "
        "attribute comparison of the faces.",
    ))
    sentences = [opening]
    for i in range(N_SLOTS):
        name = ATTRIBUTE_SLOTS[i][0]
        if la[i] == lb[i]:
            sentences.append(pick((
                f"the {name} appears {_slot_phrase(i, la[i])} in both images, showing no "
                f"meaningful deviation.",
                f"the {name} is {_slot_phrase(i, la[i])} in each image, a point of clear "
                f"agreement.",
            )))
        else:
            sentences.append(pick((
                f"the {name} differs visibly, appearing {_slot_phrase(i, la[i])} in the "
                f"first image but {_slot_phrase(i, lb[i])} in the second.",
                f"the {name} stands apart, reading {_slot_phrase(i, la[i])} on the first "
                f"face against {_slot_phrase(i, lb[i])} on the second.",
            )))
    if label == "match":
        sentences.append(pick((
            f"despite the small variations noted above, the overall structure remains "
            f"remarkably consistent, and these images {MATCH_VERDICT}.",
            f"the accumulated agreement across attributes is decisive, and these images "
            f"{MATCH_VERDICT}.",
        )))
    else:
        sentences.append(pick((
            f"the accumulated differences outweigh any superficial resemblance, and these "
            f"images {NO_MATCH_VERDICT}.",
            f"with so many attributes in open disagreement, these images "
            f"{NO_MATCH_VERDICT}.",
        )))
    return " ".join(sentences)


def generate_dataset(n_identities: int, n_pairs: int, match_fraction: float = 0.5,
                     seed: int = 0, attr_dim: int = N_SLOTS) -> list[PairRecord]:
    identities = gen_identities(n_identities, attr_dim, seed)
    pairs = gen_pairs(identities, n_pairs, match_fraction, seed)
    records = []
    for pair_id, (face_a, face_b, label) in enumerate(pairs):
        concise = render_description(face_a, face_b, label, "concise",
                                     seed=_derive_seed(seed, pair_id, 0))
        comprehensive = render_description(face_a, face_b, label, "comprehensive",
                                           seed=_derive_seed(seed, pair_id, 1))
        records.append(PairRecord(pair_id, face_a, face_b, label, PROMPT_TEMPLATE,
                                  concise, comprehensive))
    return records


def _derive_seed(base: int, pair_id: int, tier_tag: int) -> int:
    return int(np.random.SeedSequence([base, 2, pair_id, tier_tag]).generate_state(1)[0])


def make_splits(n_identities: int, train_pairs: int, test_pairs: int,
                match_fraction: float = 0.5, seed: int = 0,
                attr_dim: int = N_SLOTS) -> tuple[list[PairRecord], list[PairRecord]]:
    """Train and test pair sets drawn over one shared identity pool."""
    train = generate_dataset(n_identities, train_pairs, match_fraction, seed, attr_dim)
    test = generate_dataset(n_identities, test_pairs, match_fraction, seed + 1, attr_dim)
    return train, test


@dataclass
class CorpusStats:
    average: float
    median: float
    max: int
    vocab: int


def corpus_stats(texts: list[str]) -> CorpusStats:
    """Word-count statistics; the median takes the lower middle for even counts."""
    if not texts:
        raise ValueError("corpus_stats needs a non-empty corpus")
    token_lists = [word_tokens(t) for t in texts]
    lengths = sorted(len(toks) for toks in token_lists)
    vocab = set()
    for toks in token_lists:
        vocab.update(toks)
    return CorpusStats(
        average=fmean(lengths),
        median=float(lengths[(len(lengths) - 1) // 2]),
        max=lengths[-1],
        vocab=len(vocab),
    )


SCHEMA_VERSION = 1
_RECORD_KEYS = ("pair_id", "identity_a", "identity_b", "attrs_a", "attrs_b", "label",
                "prompt", "concise", "comprehensive")


def _format_attrs(attrs: np.ndarray) -> str:
    return ",".join(repr(float(x)) for x in attrs)


def _parse_attrs(text: str) -> np.ndarray:
    try:
        return np.array([float(x) for x in text.split(",")])
    except ValueError as err:
        raise DataFormatError(f"bad attribute list: {err}") from None


def save_dataset(records: list[PairRecord], path: str, seed: int) -> None:
    """Line-delimited UTF-8 records behind a header with schema version and seed."""
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(json.dumps({"schema_version": SCHEMA_VERSION, "seed": seed},
                            sort_keys=True) + "\n")
        for rec in records:
            row = {
                "pair_id": rec.pair_id,
                "identity_a": rec.face_a.identity_id,
                "identity_b": rec.face_b.identity_id,
                "attrs_a": _format_attrs(rec.face_a.attrs),
                "attrs_b": _format_attrs(rec.face_b.attrs),
                "label": rec.label,
                "prompt": rec.prompt,
                "concise": rec.concise,
                "comprehensive": rec.comprehensive,
            }
            fh.write(json.dumps(row, sort_keys=True) + "\n")


def load_dataset(path: str) -> tuple[list[PairRecord], dict]:
    with open(path, "r", encoding="utf-8") as fh:
        lines = fh.read().splitlines()
    if not lines:
        raise DataFormatError("dataset file is empty")
    header = _parse_line(lines[0], 1)
    if "schema_version" not in header or "seed" not in header:
        raise DataFormatError("header must carry schema_version and seed")
    if header["schema_version"] != SCHEMA_VERSION:
        raise DataFormatError(f"unsupported schema version {header['schema_version']}")
    records = []
    for lineno, line in enumerate(lines[1:], start=2):
        if not line.strip():
            continue
        row = _parse_line(line, lineno)
        missing = [k for k in _RECORD_KEYS if k not in row]
        if missing:
            raise DataFormatError(f"line {lineno}: missing keys {missing}")
        records.append(PairRecord(
            pair_id=int(row["pair_id"]),
            face_a=FaceAttr(int(row["identity_a"]), _parse_attrs(row["attrs_a"])),
            face_b=FaceAttr(int(row["identity_b"]), _parse_attrs(row["attrs_b"])),
            label=row["label"],
            prompt=row["prompt"],
            concise=row["concise"],
            comprehensive=row["comprehensive"],
        ))
    return records, header


def _parse_line(line: str, lineno: int) -> dict:
    try:
        row = json.loads(line)
    except json.JSONDecodeError as err:
        raise DataFormatError(f"line {lineno}: not a valid record ({err})") from None
    if not isinstance(row, dict):
        raise DataFormatError(f"line {lineno}: record must be a flat map")
    return row


def validate_records(records) -> list[PairRecord]:
    """Input-validation helper shared by the estimator facade and the CLI."""
    records = list(records)
    if not records:
        raise ValueError("need at least one pair record")
    attr_dim = records[0].face_a.attrs.shape[0]
    for rec in records:
        if not isinstance(rec, PairRecord):
            raise TypeError(f"expected PairRecord, got {type(rec).__name__}")
        if rec.face_a.attrs.shape[0] != attr_dim:
            raise ValueError("all records must share one attribute dimension")
        if not rec.concise or not rec.comprehensive:
            raise ValueError(f"pair {rec.pair_id}: empty description")
    return records
