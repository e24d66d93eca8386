"""Finite-difference checks for every autodiff primitive."""

import numpy as np
import pytest

from slidelm import autodiff as ad
from slidelm.autodiff import Tensor
from slidelm.optim import grad_check

rng = np.random.default_rng(0)


def check(fn, *shapes, tol=1e-7, step=1e-6):
    params = {f"p{i}": Tensor(rng.standard_normal(s), requires_grad=True)
              for i, s in enumerate(shapes)}
    err = grad_check(lambda: fn(*params.values()), params, step)
    assert err < tol, err


def test_elementwise_ops():
    check(lambda a, b: ((a + b) * (a - b) / (b * b + 2.0)).sum(), (3, 4), (3, 4))
    check(lambda a: ((a ** 3.0) + (-a)).sum(), (5,))
    check(lambda a: (1.0 / (a * a + 1.0)).sum(), (4, 2))


def test_broadcasting_grads():
    check(lambda a, b: (a + b).sum(), (3, 4), (4,))
    check(lambda a, b: (a * b).sum(), (2, 3, 4), (1, 4))
    check(lambda a, b: (a / (b * b + 1.0)).sum(), (5, 1), (3,))


@pytest.mark.parametrize("sa,sb", [
    ((3, 4), (4, 5)),
    ((2, 3, 4), (2, 4, 5)),
    ((3, 4), (2, 4, 5)),     # broadcast leading dim
    ((4,), (4, 5)),
    ((3, 4), (4,)),
    ((4,), (4,)),
])
def test_matmul_grads(sa, sb):
    check(lambda a, b: (a @ b).sum() + ((a @ b) * (a @ b)).sum(), sa, sb)


def test_shape_ops():
    check(lambda a: a.reshape(6, 2).sum(axis=0).sum(), (3, 4))
    check(lambda a: a.transpose(1, 0, 2).sum(), (2, 3, 4))
    check(lambda a: a.swapaxes(0, 1).sum(), (3, 4))
    check(lambda a: a[1:, :2].sum(), (4, 4))
    check(lambda a: a[:, 1].sum(), (3, 4))


def test_fancy_index_accumulates():
    x = Tensor(rng.standard_normal(4), requires_grad=True)
    y = x[np.array([0, 0, 1])].sum()
    y.backward()
    assert np.allclose(x.grad, [2.0, 1.0, 0.0, 0.0])


def test_reductions_and_cumsum():
    check(lambda a: a.sum(axis=1, keepdims=True).sum(), (3, 4))
    check(lambda a: a.mean(axis=0).sum(), (3, 4))
    check(lambda a: a.mean().reshape(1).sum(), (2, 5))
    check(lambda a: a.cumsum(0).sum(), (6,))
    check(lambda a: (a.cumsum(1) * a).sum(), (3, 4))


def test_pointwise_nonlinearities():
    check(lambda a: (a * 0.1).exp().sum(), (4, 4))
    check(lambda a: (a * a + 0.5).log().sum(), (4,))
    check(lambda a: (a * a + 0.1).sqrt().sum(), (5,))
    check(lambda a: a.tanh().sum(), (3, 3))
    check(lambda a: ad.gelu(a).sum(), (4, 5))


def test_layer_norm_fused():
    g = Tensor(rng.standard_normal(5), requires_grad=True)
    b = Tensor(rng.standard_normal(5), requires_grad=True)
    x = Tensor(rng.standard_normal((3, 4, 5)), requires_grad=True)
    err = grad_check(lambda: (ad.layer_norm(x, g, b) ** 2.0).sum(),
                     {"x": x, "g": g, "b": b}, 1e-6)
    assert err < 1e-7
    # matches the composite formulation
    y = ad.layer_norm(x, g, b, eps=1e-5)
    mu = x.data.mean(-1, keepdims=True)
    var = ((x.data - mu) ** 2).mean(-1, keepdims=True)
    ref = (x.data - mu) / np.sqrt(var + 1e-5) * g.data + b.data
    assert np.abs(y.data - ref).max() < 1e-12


def test_softmax_and_log_softmax():
    check(lambda a: (ad.softmax(a, axis=-1) * ad.softmax(a, axis=-1)).sum(), (3, 5))
    check(lambda a: ad.log_softmax(a, axis=0).sum(), (4, 3))
    x = rng.standard_normal((2, 7))
    s = ad.softmax(Tensor(x), axis=-1)
    assert np.allclose(s.data.sum(-1), 1.0)
    assert np.allclose(ad.log_softmax(Tensor(x)).data, np.log(s.data))


def test_concat_stack_take():
    check(lambda a, b: ad.concat([a, b], axis=1).sum(), (2, 3), (2, 4))
    check(lambda a, b: ad.stack([a, b], axis=0).sum(), (3,), (3,))
    ids = np.array([[0, 2], [1, 1]])
    check(lambda t: ad.take_rows(t, ids).sum(), (3, 4))
    idx = np.array([[1], [0], [2]])
    check(lambda a: ad.take_along(a, idx, axis=-1).sum(), (3, 4))


def test_no_grad_blocks_graph():
    x = Tensor(np.ones(3), requires_grad=True)
    with ad.no_grad():
        y = (x * 2.0).sum()
    assert not y.requires_grad


def test_detach():
    x = Tensor(np.ones(3), requires_grad=True)
    y = (x.detach() * 3.0).sum()
    assert not y.requires_grad


def test_backward_requires_scalar():
    x = Tensor(np.ones(3), requires_grad=True)
    with pytest.raises(ValueError):
        (x * 2.0).backward()


def test_grad_accumulation_over_reuse():
    x = Tensor(np.array([2.0]), requires_grad=True)
    y = (x * x + x).sum()  # dy/dx = 2x + 1 = 5
    y.backward()
    assert np.allclose(x.grad, [5.0])


def test_dtype_preserved():
    x = Tensor(np.ones((2, 2), dtype=np.float32), requires_grad=True)
    y = ad.softmax(x @ x, axis=-1)
    assert y.dtype == np.float32
    y.sum().backward()
    assert x.grad.dtype == np.float32
