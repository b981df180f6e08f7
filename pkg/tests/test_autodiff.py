import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from infocatvae import autodiff as ad
from infocatvae.autodiff import NumericalError, ShapeError, Tape, TapeError, Tensor, finite_difference_check
from infocatvae.gradcheck import op_checks
from infocatvae.rng import Rng


def grad_of(f, *xs):
    for x in xs:
        x.requires_grad = True
        x.grad = None
    with Tape() as tape:
        root = f(*xs)
    tape.backward(root)
    return [x.grad for x in xs]


def test_matmul_example():
    out = ad.matmul(Tensor([[1, 2], [3, 4]]), Tensor([[1], [1]]))
    np.testing.assert_array_equal(out.data, [[3], [7]])


def test_softmax_symmetric_row():
    np.testing.assert_allclose(ad.softmax_rows(Tensor([[0.0, 0.0]])).data, [[0.5, 0.5]])


def test_relu_example():
    np.testing.assert_array_equal(ad.relu(Tensor([-1.0, 2.0])).data, [0.0, 2.0])


def test_forward_op_dispatch():
    np.testing.assert_array_equal(ad.forward_op("relu", Tensor([-1.0, 2.0])).data, [0.0, 2.0])
    assert ad.forward_op("sum", Tensor([1.0, 2.0])).item() == 3.0
    with pytest.raises(ValueError):
        ad.forward_op("conv2d", Tensor([1.0]))


@pytest.mark.parametrize(
    "f, x, expected",
    [
        (lambda x: ad.sum(ad.square(x)), [3.0], [6.0]),
        (lambda x: ad.sum(ad.add(x, x)), [1.0], [2.0]),
        (lambda x: ad.sum(ad.sigmoid(x)), [0.0], [0.25]),
    ],
    ids=["square", "fan-out", "sigmoid"],
)
def test_backward_examples(f, x, expected):
    (g,) = grad_of(f, Tensor(x))
    np.testing.assert_allclose(g, expected)


def test_shape_mismatch_names_op_and_shapes():
    with pytest.raises(ShapeError) as info:
        ad.add(Tensor(np.zeros((2, 3))), Tensor(np.zeros((3, 2))))
    assert info.value.kind == "add"
    assert "(2, 3)" in str(info.value) and "(3, 2)" in str(info.value)
    with pytest.raises(ShapeError, match="matmul"):
        ad.matmul(Tensor(np.zeros((2, 3))), Tensor(np.zeros((2, 3))))


def test_scalar_broadcast_allowed():
    out = ad.mul(Tensor(np.ones((2, 2))), Tensor(3.0))
    np.testing.assert_array_equal(out.data, 3.0)
    out = ad.add(Tensor(np.ones((2, 2))), 1.5)
    np.testing.assert_array_equal(out.data, 2.5)


def test_log_of_nonpositive_raises():
    with pytest.raises(NumericalError):
        ad.log(Tensor([1.0, 0.0]))
    with pytest.raises(NumericalError):
        ad.log(Tensor([-2.0]))


def test_exp_overflow_raises_instead_of_inf():
    with pytest.raises(NumericalError):
        ad.exp(Tensor([1000.0]))


def test_backward_errors():
    x = Tensor([1.0, 2.0], requires_grad=True)
    with pytest.raises(TapeError, match="empty"):
        Tape().backward(ad.sum(x))
    with Tape() as tape:
        y = ad.square(x)
    with pytest.raises(TapeError, match="scalar"):
        tape.backward(y)


def test_root_from_another_tape_rejected():
    x = Tensor([1.0], requires_grad=True)
    with Tape():
        other = ad.sum(x)
    with Tape() as tape:
        ad.sum(ad.square(x))
    with pytest.raises(TapeError, match="not produced"):
        tape.backward(other)


def test_tape_cleared_after_backward_unless_retained():
    x = Tensor([2.0], requires_grad=True)
    with Tape() as tape:
        y = ad.sum(ad.square(x))
    tape.backward(y, retain=True)
    assert len(tape) > 0
    tape.backward(y)
    np.testing.assert_allclose(x.grad, [8.0])  # accumulated over two calls
    assert len(tape) == 0


def test_nothing_recorded_outside_tape():
    x = Tensor([1.0], requires_grad=True)
    y = ad.square(x)
    assert not y.requires_grad


def test_backward_order_is_reverse_of_recording():
    x = Tensor([0.3, -0.2], requires_grad=True)
    with Tape() as tape:
        y = ad.sum(ad.exp(ad.square(x)))
    kinds = [n.kind for n in tape.nodes]
    assert kinds == ["square", "exp", "sum"]
    ids = {id(n.output): i for i, n in enumerate(tape.nodes)}
    for i, node in enumerate(tape.nodes):
        for inp in node.inputs:
            assert ids.get(id(inp), -1) < i
    tape.backward(y)
    np.testing.assert_allclose(x.grad, 2 * x.data * np.exp(x.data**2))


def test_independent_subgraphs_gradients_concatenate():
    rng = Rng(3)
    a = Tensor(rng.standard_normal((3,)))
    b = Tensor(rng.standard_normal((4,)))
    ga, gb = grad_of(lambda a, b: ad.add(ad.sum(ad.square(a)), ad.sum(ad.sigmoid(b))), a, b)
    (ga_alone,) = grad_of(lambda a: ad.sum(ad.square(a)), Tensor(a.data))
    (gb_alone,) = grad_of(lambda b: ad.sum(ad.sigmoid(b)), Tensor(b.data))
    np.testing.assert_array_equal(np.concatenate([ga, gb]), np.concatenate([ga_alone, gb_alone]))


def test_detach_blocks_gradient():
    x = Tensor([1.5], requires_grad=True)
    with Tape() as tape:
        y = ad.add(ad.sum(ad.square(x)), ad.sum(ad.detach(ad.square(x))))
    tape.backward(y)
    np.testing.assert_allclose(x.grad, [3.0])


def test_bce_with_logits_stays_finite_when_saturated():
    out = ad.bce_with_logits(Tensor([800.0, -800.0]), np.array([0.0, 1.0]))
    np.testing.assert_allclose(out.data, [800.0, 800.0])


@settings(max_examples=60, deadline=None)
@given(arrays(np.float64, st.tuples(st.integers(1, 5), st.integers(1, 6)),
              elements=st.floats(-500, 500, allow_nan=False)))
def test_softmax_rows_are_distributions(x):
    s = ad.softmax_rows(Tensor(x)).data
    np.testing.assert_allclose(s.sum(axis=1), 1.0, atol=1e-6)
    assert np.all(s >= 0)
    ls = ad.log_softmax_rows(Tensor(x)).data
    assert np.all(np.isfinite(ls))


@settings(max_examples=60, deadline=None)
@given(arrays(np.float64, st.tuples(st.integers(1, 4), st.integers(1, 4)),
              elements=st.floats(-30, 30, allow_nan=False)))
def test_softmax_strictly_positive_for_moderate_inputs(x):
    s = ad.softmax_rows(Tensor(x)).data
    assert np.all(s > 0) and np.all(s < 1 + 1e-12)
    sg = ad.sigmoid(Tensor(x)).data
    assert np.all(sg > 0) and np.all(sg < 1)


def test_finite_difference_square_oracle():
    x = Tensor(Rng(1).uniform(8) * 2 - 1)
    assert finite_difference_check(lambda t: ad.sum(ad.square(t)), x, h=1e-5) <= 1e-6


def test_finite_difference_constant_function():
    x = Tensor([0.1, 0.2])
    assert finite_difference_check(lambda t: Tensor(3.0), x) == 0.0


def test_finite_difference_rejects_bad_inputs():
    x = Tensor([1.0])
    with pytest.raises(ValueError):
        finite_difference_check(lambda t: ad.sum(t), x, h=1e-2)
    with pytest.raises(TypeError):
        finite_difference_check(lambda t: ad.sum(t), Tensor([1.0], dtype=np.float32))
    with pytest.raises(NumericalError):
        finite_difference_check(lambda t: Tensor(np.inf), x)


def test_every_op_passes_gradient_check():
    for result in op_checks(trials=20, seed=11):
        assert result.passed, result.line()


def test_leaf_grad_dtype_follows_data():
    x = Tensor(np.ones(3, dtype=np.float32), requires_grad=True)
    (g,) = grad_of(lambda t: ad.sum(ad.scalar_mul(t, 2.0)), x)
    assert g.dtype == np.float32
