import numpy as np
import pytest
from numpy.testing import assert_allclose, assert_array_equal

from tcpgen_biasing import autodiff as ad
from tcpgen_biasing.config import GRADIENT_CHECK_TOLERANCE


def random_arrays(seed=0, **shapes):
    rng = np.random.default_rng(seed)
    return {name: rng.normal(size=shape) for name, shape in shapes.items()}


def assert_gradients_match(loss_function, arrays):
    errors = ad.gradient_check(loss_function, arrays)
    for name, error in errors.items():
        assert error < GRADIENT_CHECK_TOLERANCE, f"{name}: {error}"


def test_linear_and_tanh_gradients():
    """Test a dense layer with tanh against finite differences"""
    arrays = random_arrays(x=(4,), W=(3, 4), b=(3,))
    assert_gradients_match(lambda t: ad.reduce_sum(ad.tanh(ad.linear(t["x"], t["W"], t["b"]))), arrays)


def test_batched_linear_gradients():
    arrays = random_arrays(x=(5, 4), W=(3, 4), b=(3,))
    assert_gradients_match(lambda t: ad.reduce_sum(ad.sigmoid(ad.linear(t["x"], t["W"], t["b"]))), arrays)


def test_softmax_log_gradients():
    """Test log of a softmax against finite differences"""
    arrays = random_arrays(z=(6,), w=(6,))
    assert_gradients_match(lambda t: ad.reduce_sum(ad.log(ad.softmax(t["z"])) * t["w"]), arrays)


def test_masked_softmax_gradients():
    mask = np.array([True, False, True, True, False, True])
    arrays = random_arrays(z=(6,), w=(6,))
    assert_gradients_match(lambda t: ad.reduce_sum(ad.softmax(t["z"], mask=mask) * t["w"]), arrays)


def test_masked_softmax_gives_exact_zeros():
    """Test that masked entries get exactly zero probability"""
    mask = np.array([True, False, True])
    probabilities = ad.softmax(ad.Tensor([1.0, 50.0, -2.0]), mask=mask).data
    assert probabilities[1] == 0.0
    assert probabilities.sum() == pytest.approx(1.0, abs=1e-15)


def test_division_and_exp_gradients():
    arrays = random_arrays(a=(3,), b=(3,))
    arrays["b"] = np.abs(arrays["b"]) + 1.0
    assert_gradients_match(lambda t: ad.reduce_sum(ad.exp(t["a"]) / t["b"]), arrays)


def test_logaddexp_gradients():
    """Test logaddexp against finite differences"""
    arrays = random_arrays(a=(4,), b=(4,))
    assert_gradients_match(lambda t: ad.reduce_sum(ad.logaddexp(t["a"], t["b"])), arrays)


def test_concat_stack_and_indexing_gradients():
    arrays = random_arrays(a=(3,), b=(2,))

    def loss(t):
        joined = ad.concat([t["a"], t["b"]])
        stacked = ad.stack([joined, joined * 2.0])
        return ad.reduce_sum(stacked[1] * stacked[0]) + ad.reduce_sum(ad.gather(joined, [0, 4]))

    assert_gradients_match(loss, arrays)


def test_scatter_gradients():
    """Test scattering rows back into a table against finite differences"""
    arrays = random_arrays(x=(3,), w=(6,))
    assert_gradients_match(lambda t: ad.reduce_sum(ad.scatter(t["x"], [5, 0, 2], 6) * t["w"]), arrays)


def test_broadcast_gradients_are_summed():
    arrays = random_arrays(x=(4, 3), b=(3,))
    assert_gradients_match(lambda t: ad.mean(ad.tanh(t["x"] + t["b"])), arrays)


def test_rnn_cell_gradients():
    """Test the recurrent cell against finite differences"""
    arrays = random_arrays(x=(2,), h=(3,), W=(3, 2), U=(3, 3), b=(3,))
    assert_gradients_match(lambda t: ad.reduce_sum(ad.rnn_cell(t["x"], t["h"], t["W"], t["U"], t["b"])), arrays)


def test_reused_tensor_accumulates_gradient():
    """Test that a tensor used twice receives the sum of both gradients"""
    x = ad.Tensor([3.0], requires_grad=True)
    (x * x + x).backward()
    assert_allclose(x.grad, [7.0])


def test_repeated_index_accumulates_gradient():
    x = ad.Tensor([1.0, 2.0, 3.0], requires_grad=True)
    ad.reduce_sum(x[np.array([0, 0, 2])]).backward()
    assert_array_equal(x.grad, [2.0, 0.0, 1.0])


def test_relu_subgradient_at_zero_is_zero():
    """Test the relu subgradient at exactly zero"""
    x = ad.Tensor([-1.0, 0.0, 2.0], requires_grad=True)
    ad.reduce_sum(ad.relu(x)).backward()
    assert_array_equal(x.grad, [0.0, 0.0, 1.0])


def test_nothing_is_recorded_without_gradients():
    out = ad.tanh(ad.Tensor([1.0, 2.0]) @ ad.Tensor([[1.0], [2.0]]))
    assert not out.requires_grad
    assert out._parents == ()


def test_matmul_rejects_three_dimensions():
    """Test that matmul only accepts vectors and matrices"""
    with pytest.raises(ValueError):
        ad.matmul(np.zeros((2, 2, 2)), np.zeros((2, 2)))


def test_numpy_operands_stay_on_the_tape():
    x = ad.Tensor([1.0, 2.0], requires_grad=True)
    out = np.array([3.0, 4.0]) * x
    assert isinstance(out, ad.Tensor)
    ad.reduce_sum(out).backward()
    assert_array_equal(x.grad, [3.0, 4.0])


def test_relative_error():
    assert ad.relative_error([1.0, 0.0], [1.0, 0.0]) == 0.0
    assert ad.relative_error([0.0], [0.0]) == 0.0
    assert ad.relative_error([1.0], [2.0]) == pytest.approx(0.5)
