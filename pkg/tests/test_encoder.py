"""Face encoder variants and verification pretraining."""

import numpy as np
import pytest

from facediff.data import generate_dataset
from facediff.encoder import (EncoderSpec, FaceAttr, encode_face, init_encoder,
                              pair_accuracy, pair_cosine, pretrain_encoder)
from facediff.tensor import Tensor, grad_check, no_grad


def _params_and_spec(kind="variant_a", h=16, attr_dim=6, seed=0):
    spec = EncoderSpec(kind=kind, h=h)
    params = init_encoder(spec, attr_dim, np.random.default_rng(seed))
    return params, spec


def test_spec_defaults_layer_counts():
    assert EncoderSpec(kind="variant_a").layers == 2
    assert EncoderSpec(kind="variant_b").layers == 3
    with pytest.raises(ValueError):
        EncoderSpec(kind="resnet")


def test_variants_are_interchangeable_in_shape():
    rng = np.random.default_rng(1)
    batch = rng.normal(size=(5, 6))
    for kind in ("variant_a", "variant_b"):
        params, spec = _params_and_spec(kind=kind)
        out = encode_face(batch, params, spec)
        assert out.shape == (5, 16)
        assert np.isfinite(out.data).all()


def test_encode_accepts_single_face_and_lists():
    params, spec = _params_and_spec()
    face = FaceAttr(0, np.zeros(6))
    assert encode_face(face, params, spec).shape == (1, 16)
    assert encode_face([face, face], params, spec).shape == (2, 16)


def test_zero_input_zero_final_layer_gives_zero_embedding():
    params, spec = _params_and_spec()
    last = spec.layers - 1
    params[f"fc{last}.w"].data[:] = 0.0
    params[f"fc{last}.b"].data[:] = 0.0
    out = encode_face(np.zeros((2, 6)), params, spec)
    assert np.all(out.data == 0.0)


def test_encoding_deterministic_for_fixed_seed():
    batch = np.random.default_rng(2).normal(size=(3, 6))
    outs = []
    for _ in range(2):
        params, spec = _params_and_spec(seed=7)
        outs.append(encode_face(batch, params, spec).data)
    assert np.array_equal(outs[0], outs[1])


def test_encoder_gradients_check_out():
    for kind in ("variant_a", "variant_b"):
        params, spec = _params_and_spec(kind=kind, h=8)
        batch = np.random.default_rng(3).normal(size=(2, 6))
        probe = np.random.default_rng(4).normal(size=(2, 8))
        tensors = [params[k] for k in sorted(params)]
        report = grad_check(lambda: (encode_face(batch, params, spec) * Tensor(probe)).sum(),
                            tensors, op_name=f"encoder_{kind}")
        assert report.passed, str(report)


def test_pair_cosine_bounds_and_self_similarity():
    rng = np.random.default_rng(5)
    e = Tensor(rng.normal(size=(4, 8)))
    cos_self = pair_cosine(e, e).data
    assert np.allclose(cos_self, 1.0, atol=1e-9)
    f = Tensor(rng.normal(size=(4, 8)))
    assert np.all(np.abs(pair_cosine(e, f).data) <= 1.0 + 1e-12)


def test_pretrain_rejects_single_identity():
    records = [r for r in generate_dataset(2, 40, 1.0, seed=1)
               if r.face_a.identity_id == 0 and r.face_b.identity_id == 0]
    params, spec = _params_and_spec()
    with pytest.raises(ValueError):
        pretrain_encoder(records, params, spec, epochs=1)


def test_zero_epochs_is_byte_identical_noop():
    records = generate_dataset(4, 20, 0.5, seed=2)
    params, spec = _params_and_spec()
    before = {k: v.data.tobytes() for k, v in params.items()}
    log = pretrain_encoder(records, params, spec, epochs=0)
    assert log == []
    assert all(params[k].data.tobytes() == before[k] for k in params)


def test_two_separable_identities_classify_above_95_percent():
    records = generate_dataset(2, 120, 0.5, seed=3)
    params, spec = _params_and_spec(seed=11)
    pretrain_encoder(records, params, spec, epochs=40, lr=1e-2, seed=11)
    assert pair_accuracy(records, params, spec) > 0.95


def test_pretraining_orders_cosine_by_identity_on_heldout():
    train = generate_dataset(12, 300, 0.5, seed=4)
    held = generate_dataset(12, 120, 0.5, seed=5)
    params, spec = _params_and_spec(seed=12)
    pretrain_encoder(train, params, spec, epochs=30, lr=1e-2, seed=12)
    with no_grad():
        same, diff = [], []
        for rec in held:
            e1 = encode_face(rec.face_a, params, spec)
            e2 = encode_face(rec.face_b, params, spec)
            cos = float(pair_cosine(e1, e2).data[0])
            (same if rec.label == "match" else diff).append(cos)
    assert np.mean(same) > np.mean(diff)
