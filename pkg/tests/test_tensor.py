"""Numeric core: forward values, backward rules, gradient checker."""

import numpy as np
import pytest

from facediff import tensor as T
from facediff.tensor import (ContractError, DimensionError, GradCheckReport, Tensor,
                             grad_check, no_grad, unbroadcast)


def test_matmul_known_product():
    a = Tensor([[1.0, 2.0], [3.0, 4.0]])
    b = Tensor([[5.0], [6.0]])
    out = a @ b
    assert out.data.tolist() == [[17.0], [39.0]]


def test_matmul_shape_mismatch_names_both_shapes():
    a = Tensor(np.zeros((2, 3)))
    b = Tensor(np.zeros((2, 3)))
    with pytest.raises(DimensionError) as err:
        T.matmul(a, b)
    assert "(2, 3)" in str(err.value)


def test_matmul_rejects_vectors():
    with pytest.raises(DimensionError):
        T.matmul(Tensor([1.0, 2.0]), Tensor(np.zeros((2, 2))))


def test_softmax_rows_sum_to_one():
    rng = np.random.default_rng(0)
    x = Tensor(rng.normal(size=(4, 7)))
    p = T.softmax(x)
    assert np.all(np.abs(p.data.sum(axis=-1) - 1.0) <= 1e-12)
    assert np.all(p.data >= 0)


def test_softmax_extreme_logits_do_not_overflow():
    p = T.softmax(Tensor([[1000.0, 0.0]]))
    assert np.isfinite(p.data).all()
    assert p.data[0, 0] == pytest.approx(1.0, abs=1e-12)
    assert p.data[0, 1] == pytest.approx(0.0, abs=1e-12)


def test_layer_norm_normalizes_each_slice():
    rng = np.random.default_rng(1)
    x = Tensor(rng.normal(loc=3.0, scale=2.0, size=(5, 8)))
    gain = Tensor(np.ones(8))
    bias = Tensor(np.zeros(8))
    out = T.layer_norm(x, gain, bias)
    assert np.all(np.abs(out.data.mean(axis=-1)) <= 1e-12)
    # variance of the normalized slice is 1 up to the eps regularizer
    assert np.all(np.abs(out.data.var(axis=-1) - 1.0) <= 1e-4)


def test_layer_norm_zero_variance_returns_bias():
    x = Tensor([[5.0, 5.0, 5.0]])
    gain = Tensor(np.full(3, 2.0))
    bias = Tensor([0.5, -0.5, 0.0])
    out = T.layer_norm(x, gain, bias)
    assert np.allclose(out.data, [[0.5, -0.5, 0.0]], atol=1e-15)


def test_layer_norm_rejects_wrong_gain_shape():
    with pytest.raises(DimensionError):
        T.layer_norm(Tensor(np.zeros((2, 4))), Tensor(np.zeros(3)), Tensor(np.zeros(4)))


def test_backward_quadratic_gradient_equals_w():
    w = Tensor([1.0, 2.0, 3.0], requires_grad=True)
    loss = ((w * w).sum()) * 0.5
    loss.backward()
    assert w.grad.tolist() == [1.0, 2.0, 3.0]


def test_backward_accumulates_until_zeroed():
    w = Tensor([1.0, 2.0], requires_grad=True)
    for _ in range(2):
        ((w * w).sum() * 0.5).backward()
    assert w.grad.tolist() == [2.0, 4.0]
    w.zero_grad()
    ((w * w).sum() * 0.5).backward()
    assert w.grad.tolist() == [1.0, 2.0]


def test_backward_rejects_non_scalar():
    w = Tensor([1.0, 2.0], requires_grad=True)
    with pytest.raises(ContractError):
        (w * w).backward()


def test_backward_reaches_all_requires_grad_ancestors():
    a = Tensor([2.0], requires_grad=True)
    b = a * 3.0
    loss = (b * b).sum()
    loss.backward()
    assert b.grad is not None
    assert a.grad == pytest.approx([36.0])


def test_gradients_are_float64_and_deterministic():
    rng = np.random.default_rng(2)
    x0 = rng.normal(size=(3, 3))
    grads = []
    for _ in range(2):
        x = Tensor(x0, requires_grad=True)
        (T.softmax(x) * Tensor(x0)).sum().backward()
        grads.append(x.grad.copy())
    assert grads[0].dtype == np.float64
    assert np.array_equal(grads[0], grads[1])


def test_unbroadcast_sums_extra_dims():
    g = np.ones((4, 3, 5))
    assert unbroadcast(g, (3, 5)).shape == (3, 5)
    assert unbroadcast(g, (1, 5)).shape == (1, 5)
    assert unbroadcast(g, (1, 5)).sum() == 60.0


def _scalar_probe(build, *params):
    """Project an op output to a scalar with a fixed random blend."""
    probe = {}
    def f():
        out = build(*params)
        if "w" not in probe:
            probe["w"] = np.random.default_rng(99).normal(size=out.shape)
        return (out * Tensor(probe["w"])).sum()
    return f


OP_CASES = {
    "add": (lambda a, b: T.add(a, b), [(3, 4), (3, 4)]),
    "add_broadcast": (lambda a, b: T.add(a, b), [(2, 3, 4), (4,)]),
    "mul": (lambda a, b: T.mul(a, b), [(3, 4), (3, 4)]),
    "mul_broadcast": (lambda a, b: T.mul(a, b), [(2, 1, 4), (3, 4)]),
    "neg": (T.neg, [(3, 4)]),
    "power": (lambda a: T.power(a, 3.0), [(3, 4)]),
    "exp": (T.exp, [(3, 4)]),
    "log": (lambda a: T.log(T.exp(a)), [(3, 4)]),
    "sqrt": (lambda a: T.sqrt(T.exp(a)), [(3, 4)]),
    "tanh": (T.tanh, [(3, 4)]),
    "sigmoid": (T.sigmoid, [(3, 4)]),
    "softplus": (T.softplus, [(3, 4)]),
    "gelu": (T.gelu, [(3, 4)]),
    "matmul": (T.matmul, [(3, 4), (4, 2)]),
    "matmul_batched": (T.matmul, [(2, 3, 4), (2, 4, 2)]),
    "matmul_broadcast": (T.matmul, [(2, 2, 3, 4), (4, 2)]),
    "reshape": (lambda a: T.reshape(a, (4, 3)), [(3, 4)]),
    "transpose": (lambda a: T.transpose(a, (1, 0, 2)), [(2, 3, 4)]),
    "getitem": (lambda a: a[:, 1:3], [(3, 4)]),
    "concat": (lambda a, b: T.concat([a, b], axis=1), [(3, 2), (3, 4)]),
    "broadcast_to": (lambda a: T.broadcast_to(a, (5, 3, 4)), [(3, 4)]),
    "sum_axis": (lambda a: T.tensor_sum(a, axis=1), [(3, 4)]),
    "sum_keepdims": (lambda a: T.tensor_sum(a, axis=-1, keepdims=True), [(3, 4)]),
    "mean": (lambda a: T.tensor_mean(a, axis=0), [(3, 4)]),
    "softmax": (T.softmax, [(3, 5)]),
    "log_softmax": (T.log_softmax, [(3, 5)]),
    "layer_norm": (T.layer_norm, [(3, 6), (6,), (6,)]),
    "gather_rows": (lambda t: T.gather_rows(t, np.array([[0, 2], [2, 2]])), [(4, 5)]),
    "gather_last": (lambda t: T.gather_last(t, np.array([[0, 2], [4, 1]])), [(2, 2, 5)]),
}


@pytest.mark.parametrize("name", sorted(OP_CASES))
def test_grad_check_per_op(name):
    build, shapes = OP_CASES[name]
    rng = np.random.default_rng(hash(name) % (2 ** 32))
    params = [Tensor(rng.normal(size=s), requires_grad=True) for s in shapes]
    report = grad_check(_scalar_probe(build, *params), params, step=1e-5, tol=1e-4,
                        op_name=name)
    assert report.passed, str(report)


def test_grad_check_flags_corrupted_gradient():
    # d/dw sum(w * detach(w)) reports w analytically but the value is sum(w^2),
    # whose true derivative is 2w: an exact factor-of-two corruption.
    w = Tensor(np.random.default_rng(5).normal(size=4) + 3.0, requires_grad=True)
    report = grad_check(lambda: (w * w.detach()).sum(), [w], op_name="corrupted")
    assert not report.passed
    assert report.max_rel_error > 0.1


def test_grad_check_report_fields():
    w = Tensor([2.0], requires_grad=True)
    report = grad_check(lambda: (w * w).sum(), [w], op_name="square")
    assert isinstance(report, GradCheckReport)
    assert report.passed and report.n_coords == 1
    assert "square" in str(report)


def test_no_grad_skips_graph_construction():
    w = Tensor([1.0], requires_grad=True)
    with no_grad():
        out = w * 2.0
    assert not out.requires_grad
    assert out._backward_fn is None


def test_forward_values_finite_on_finite_inputs():
    rng = np.random.default_rng(3)
    x = Tensor(rng.normal(scale=50.0, size=(4, 6)), requires_grad=True)
    outs = [T.softmax(x), T.log_softmax(x), T.gelu(x), T.tanh(x), T.sigmoid(x),
            T.softplus(x), T.layer_norm(x, Tensor(np.ones(6)), Tensor(np.zeros(6)))]
    for out in outs:
        assert np.isfinite(out.data).all()


def test_gather_rows_rejects_out_of_range():
    with pytest.raises(IndexError):
        T.gather_rows(Tensor(np.zeros((3, 2))), np.array([3]))
