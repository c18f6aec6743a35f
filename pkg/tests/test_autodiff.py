import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from flsimco import autodiff as ad
from flsimco.autodiff import NumericsError, Tensor, finite_difference_grad


def grad_of(make_loss, x0):
    t = Tensor(x0, requires_grad=True)
    ad.backward(make_loss(t))
    return t.grad


def fd_of(make_loss, x0, eps=1e-5):
    return finite_difference_grad(lambda arr: float(make_loss(Tensor(arr)).data), x0, eps)


def test_square_scalar():
    x = Tensor(3.0, requires_grad=True)
    y = x * x
    ad.backward(y)
    assert y.item() == 9.0
    assert x.grad == 6.0


def test_constant_function_zero_grad():
    x = Tensor([1.0, 2.0], requires_grad=True)
    loss = ad.tsum(Tensor([5.0, 5.0])) + 0.0 * ad.tsum(x)
    ad.backward(loss)
    assert np.all(x.grad == 0.0)


def test_grad_zero_when_root_independent():
    x = Tensor([1.0, 2.0], requires_grad=True)
    loss = ad.tsum(Tensor([1.0, 1.0]))
    value, grads = ad.forward_backward(loss, [x])
    assert value == 2.0
    assert np.all(grads[0] == 0.0)


PRIMITIVE_CASES = {
    "add": (lambda t: ad.tsum(t + Tensor(np.arange(6.0).reshape(2, 3))), (2, 3), None),
    "add_bias_broadcast": (lambda t: ad.tsum(ad.tanh(Tensor(np.ones((4, 3))) + t)), (3,), None),
    "sub": (lambda t: ad.tsum(ad.sub(Tensor(np.ones((2, 3))), t)), (2, 3), None),
    "mul": (lambda t: ad.tsum(t * t), (2, 3), None),
    "div": (lambda t: ad.tsum(ad.div(Tensor(np.ones((2, 3))), t)), (2, 3), "positive"),
    "neg": (lambda t: ad.tsum(-t), (2, 3), None),
    "matmul": (lambda t: ad.tsum(ad.matmul(t, Tensor(np.arange(12.0).reshape(3, 4) / 6.0))), (2, 3), None),
    "tanh": (lambda t: ad.tsum(ad.tanh(t)), (2, 3), None),
    "relu": (lambda t: ad.tsum(ad.relu(t)), (2, 3), None),
    "exp": (lambda t: ad.tsum(ad.exp(t * 0.5)), (2, 3), None),
    "log": (lambda t: ad.tsum(ad.log(t)), (2, 3), "positive"),
    "sum": (lambda t: ad.tsum(t) * 2.0, (2, 3), None),
    "rowsum": (lambda t: ad.dot(ad.rowsum(t), Tensor([1.0, -2.0])), (2, 3), None),
    "transpose": (lambda t: ad.tsum(ad.matmul(ad.transpose(t), Tensor(np.ones((2, 2))))), (2, 3), None),
    "dot": (lambda t: ad.dot(t, Tensor([1.0, 2.0, 3.0])), (3,), None),
    "row": (lambda t: ad.dot(ad.row(t, 0), ad.row(t, 1)), (2, 3), None),
    "l2_normalize_vec": (lambda t: ad.dot(ad.l2_normalize(t), Tensor([1.0, -1.0, 0.5])), (3,), "offset"),
    "l2_normalize_rows": (lambda t: ad.tsum(ad.mul(ad.l2_normalize(t), Tensor(np.arange(6.0).reshape(2, 3)))),
                          (2, 3), "offset"),
}


@pytest.mark.parametrize("name", sorted(PRIMITIVE_CASES))
def test_primitive_gradients_match_finite_differences(name):
    make_loss, shape, domain = PRIMITIVE_CASES[name]
    for seed in range(10):
        rng = np.random.default_rng(seed)
        x0 = rng.normal(size=shape)
        if domain == "positive":
            x0 = np.abs(x0) + 0.5
        elif domain == "offset":
            x0 = x0 + np.sign(x0) * 0.5  # keep norms away from zero
        analytic = grad_of(make_loss, x0)
        fd = fd_of(make_loss, x0)
        scale = np.maximum(np.maximum(np.abs(fd), np.abs(analytic)), 1e-6)
        assert np.max(np.abs(analytic - fd) / scale) < 1e-4, f"{name} seed {seed}"


def test_relu_kink_avoided_in_checks():
    # relu gradient at exactly zero is defined as zero
    t = Tensor([0.0, -1.0, 2.0], requires_grad=True)
    ad.backward(ad.tsum(ad.relu(t)))
    assert list(t.grad) == [0.0, 0.0, 1.0]


def test_stop_gradient_exact():
    # d/dx of sg[h(x)] * u(x) must equal h(x) * u'(x) exactly
    x = Tensor(2.0, requires_grad=True)
    h = x * x          # value 4
    u = x * 3.0        # derivative 3
    ad.backward(ad.stop_gradient(h) * u)
    assert x.grad == 4.0 * 3.0


def test_stop_gradient_blocks_branch_completely():
    x = Tensor([1.0, 2.0], requires_grad=True)
    ad.backward(ad.tsum(ad.stop_gradient(ad.exp(x))))
    assert x.grad is None or np.all(x.grad == 0.0)


def test_shared_node_grad_accumulates():
    x = Tensor(3.0, requires_grad=True)
    y = x * x
    loss = y + y
    ad.backward(loss)
    assert x.grad == 12.0


def test_non_leaf_grads_discarded():
    x = Tensor([1.0, 2.0], requires_grad=True)
    mid = ad.exp(x)
    loss = ad.tsum(mid)
    ad.backward(loss)
    assert mid.grad is None
    assert x.grad is not None


def test_backward_requires_scalar_root():
    x = Tensor([1.0, 2.0], requires_grad=True)
    with pytest.raises(ValueError):
        ad.backward(x + x)


def test_overflow_error_names_primitive():
    x = Tensor(1e308)
    with np.errstate(over="ignore"):
        with pytest.raises(NumericsError, match="exp"):
            ad.exp(x)
        with pytest.raises(NumericsError, match="mul"):
            ad.mul(x, x)


def test_l2_normalize_zero_vector_errors():
    with pytest.raises(NumericsError, match="zero-norm"):
        ad.l2_normalize(Tensor([0.0, 0.0, 0.0]))


@settings(max_examples=50, deadline=None)
@given(st.lists(st.floats(-50, 50), min_size=2, max_size=8))
def test_l2_normalize_unit_norm(values):
    arr = np.asarray(values)
    norm = np.linalg.norm(arr)
    if norm < 1e-6:
        return
    out = ad.l2_normalize(Tensor(arr))
    assert abs(np.linalg.norm(out.data) - 1.0) < 1e-9


def test_finite_difference_cube():
    fd = finite_difference_grad(lambda x: float(x[0] ** 3), np.array([2.0]), eps=1e-5)
    assert abs(fd[0] - 12.0) < 1e-6


def test_finite_difference_linear_ones():
    fd = finite_difference_grad(lambda x: float(x.sum()), np.arange(5.0))
    assert np.allclose(fd, 1.0, atol=1e-9)


def test_finite_difference_rejects_bad_eps():
    with pytest.raises(ValueError):
        finite_difference_grad(lambda x: 0.0, np.zeros(2), eps=0.0)


def test_forward_backward_returns_loss_and_grads():
    w = Tensor([2.0, -1.0], requires_grad=True)
    loss = ad.dot(w, Tensor([3.0, 4.0]))
    value, (grad,) = ad.forward_backward(loss, [w])
    assert value == 2.0
    assert np.allclose(grad, [3.0, 4.0])
