"""Tape correctness: worked gradients plus central finite differences
for every primitive."""

import numpy as np
import pytest

from brepsynth import autodiff as ad
from brepsynth.autodiff import DetachedGraph, NotScalar, Tape, Tensor, backward


def finite_diff(f, params, h=1e-5):
    """Central-difference gradients of scalar f(params)."""
    grads = []
    for p in params:
        g = np.zeros_like(p.data)
        flat = p.data.reshape(-1)
        gf = g.reshape(-1)
        for i in range(flat.size):
            old = flat[i]
            flat[i] = old + h
            up = f()
            flat[i] = old - h
            dn = f()
            flat[i] = old
            gf[i] = (up - dn) / (2 * h)
        grads.append(g)
    return grads


def check_grads(make_loss, params, rel=1e-4):
    for p in params:
        p.grad = None
    with Tape() as tape:
        loss = make_loss()
    grad_map = tape.backward(loss)
    numeric = finite_diff(lambda: float(make_loss().data), params)
    for p, num in zip(params, numeric):
        got = grad_map.get(p, np.zeros_like(p.data))
        denom = max(np.abs(num).max(), np.abs(got).max(), 1e-8)
        assert np.abs(got - num).max() / denom < rel, f"grad mismatch vs finite differences"


def test_backward_sum_is_ones():
    x = Tensor(np.array([1.0, 2.0, 3.0]), requires_grad=True)
    with Tape() as tape:
        loss = ad.tsum(x)
    grads = tape.backward(loss)
    assert np.allclose(grads[x], [1.0, 1.0, 1.0])


def test_backward_quadratic():
    x = Tensor(np.array([1.0, 2.0, 3.0]), requires_grad=True)
    with Tape() as tape:
        loss = ad.tsum(ad.mul(x, x))
    grads = tape.backward(loss)
    assert np.allclose(grads[x], [2.0, 4.0, 6.0])


def test_backward_requires_scalar():
    x = Tensor(np.ones(3), requires_grad=True)
    with Tape() as tape:
        y = ad.mul(x, 2.0)
        with pytest.raises(NotScalar):
            tape.backward(y)


def test_backward_detached():
    x = Tensor(np.ones(3), requires_grad=True)
    loss = ad.tsum(x)  # no tape active
    with pytest.raises(DetachedGraph):
        backward(loss)


def test_unused_parameter_gets_no_gradient():
    x = Tensor(np.ones(3), requires_grad=True)
    unused = Tensor(np.ones(3), requires_grad=True)
    with Tape() as tape:
        loss = ad.tsum(x)
    grads = tape.backward(loss)
    assert unused not in grads


def test_three_layer_mlp_matches_finite_differences():
    rng = np.random.default_rng(0)
    ws = [Tensor(rng.normal(size=(5, 7)) * 0.3, requires_grad=True),
          Tensor(rng.normal(size=(7, 4)) * 0.3, requires_grad=True),
          Tensor(rng.normal(size=(4, 1)) * 0.3, requires_grad=True)]
    x = rng.normal(size=(3, 5))

    def loss():
        h = ad.gelu(ad.matmul(Tensor(x), ws[0]))
        h = ad.gelu(ad.matmul(h, ws[1]))
        return ad.tsum(ad.matmul(h, ws[2]))

    check_grads(loss, ws)


@pytest.mark.parametrize("op", ["add", "sub", "mul", "exp", "gelu", "softmax",
                                "log_softmax", "layer_norm", "mean", "getitem",
                                "concat", "transpose", "reshape", "gather_rows",
                                "select_last", "matmul_batched"])
def test_primitive_gradients(op):
    rng = np.random.default_rng(hash(op) % 2**32)
    a = Tensor(rng.normal(size=(3, 4)), requires_grad=True)
    b = Tensor(rng.normal(size=(3, 4)), requires_grad=True)
    w = Tensor(rng.normal(size=(4, 2)), requires_grad=True)
    big = Tensor(rng.normal(size=(2, 3, 4)), requires_grad=True)

    builders = {
        "add": (lambda: ad.tsum(ad.mul(ad.add(a, b), ad.add(a, b))), [a, b]),
        "sub": (lambda: ad.tsum(ad.mul(ad.sub(a, b), ad.sub(a, b))), [a, b]),
        "mul": (lambda: ad.tsum(ad.mul(a, b)), [a, b]),
        "exp": (lambda: ad.tsum(ad.exp(ad.mul(a, 0.3))), [a]),
        "gelu": (lambda: ad.tsum(ad.gelu(a)), [a]),
        "softmax": (lambda: ad.tsum(ad.mul(ad.softmax(a), b)), [a, b]),
        "log_softmax": (lambda: ad.tsum(ad.mul(ad.log_softmax(a), b)), [a, b]),
        "layer_norm": (lambda: ad.tsum(ad.mul(ad.layer_norm(a), b)), [a, b]),
        "mean": (lambda: ad.tsum(ad.mul(ad.tmean(a, axis=1, keepdims=True), b)), [a, b]),
        "getitem": (lambda: ad.tsum(ad.mul(a[1:3], b[0:2])), [a, b]),
        "concat": (lambda: ad.tsum(ad.mul(ad.concat([a, b], axis=1), ad.concat([b, a], axis=1))), [a, b]),
        "transpose": (lambda: ad.tsum(ad.mul(ad.transpose(big, (1, 0, 2)), 2.0)), [big]),
        "reshape": (lambda: ad.tsum(ad.mul(ad.reshape(big, (6, 4)), ad.reshape(big, (6, 4)))), [big]),
        "gather_rows": (lambda: ad.tsum(ad.gather_rows(a, np.array([0, 2, 2, 1]))), [a]),
        "select_last": (lambda: ad.tsum(ad.select_last(a, np.array([1, 3, 0]))), [a]),
        "matmul_batched": (lambda: ad.tsum(ad.matmul(big, w)), [big, w]),
    }
    fn, params = builders[op]
    check_grads(fn, params)


def test_broadcast_add_gradients():
    rng = np.random.default_rng(9)
    a = Tensor(rng.normal(size=(3, 4)), requires_grad=True)
    bias = Tensor(rng.normal(size=(4,)), requires_grad=True)
    check_grads(lambda: ad.tsum(ad.mul(ad.add(a, bias), ad.add(a, bias))), [a, bias])


def test_gradient_accumulates_over_reuse():
    x = Tensor(np.array([2.0]), requires_grad=True)
    with Tape() as tape:
        y = ad.add(ad.mul(x, x), ad.mul(x, 3.0))  # x^2 + 3x
        loss = ad.tsum(y)
    grads = tape.backward(loss)
    assert np.allclose(grads[x], [7.0])


def test_forward_stays_finite_for_large_inputs():
    rng = np.random.default_rng(11)
    x = Tensor(rng.uniform(-1e3, 1e3, size=(4, 8)))
    for fn in (ad.softmax, ad.log_softmax, ad.layer_norm, ad.gelu):
        out = fn(x)
        assert np.isfinite(out.data).all()
