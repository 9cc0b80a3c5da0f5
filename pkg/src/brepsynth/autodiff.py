"""Minimal reverse-mode autodiff over numpy arrays.

A Tape records primitive operations while it is active; ``backward`` walks
the record once in reverse. The primitive set is deliberately small
(matmul, elementwise arithmetic, softmax/log-softmax, layer norm, GELU,
exp, gathers, slicing, reshapes, reductions) — everything the sequence
models and denoisers need, with hand-written backward rules so the
finite-difference suite stays meaningful.
"""

import numpy as np

DTYPE = np.float64


class NotScalar(ValueError):
    pass


class DetachedGraph(ValueError):
    pass


class ShapeMismatch(ValueError):
    pass


_ACTIVE = []


class Tape:
    """Ordered record of primitive ops; context manager activates it."""

    def __init__(self):
        self._entries = []  # (out, parents, backward_fn)

    def __enter__(self):
        _ACTIVE.append(self)
        return self

    def __exit__(self, *exc):
        _ACTIVE.pop()
        return False

    def record(self, out, parents, backward):
        self._entries.append((out, parents, backward))

    def backward(self, loss):
        """Reverse sweep from scalar `loss`; returns {Tensor: grad array}.

        Visits each recorded node exactly once. Gradients of requires_grad
        tensors that never fed `loss` simply stay absent from the map (the
        optimizer treats absent as zero).
        """
        if loss.data.size != 1:
            raise NotScalar(f"loss has shape {loss.data.shape}")
        if not any(out is loss for out, _, _ in self._entries):
            raise DetachedGraph("loss was not recorded on this tape")
        grads = {id(loss): np.ones_like(loss.data)}
        leaf = {}
        for out, parents, backward in reversed(self._entries):
            g = grads.pop(id(out), None)
            if g is None:
                continue
            for parent, pg in zip(parents, backward(g)):
                if pg is None:
                    continue
                key = id(parent)
                if key in grads:
                    grads[key] = grads[key] + pg
                else:
                    grads[key] = pg
                if parent.requires_grad:
                    leaf[parent] = grads[key]
        result = {}
        for t, g in leaf.items():
            result[t] = g
            t.grad = g if t.grad is None else t.grad + g
        return result


def backward(loss):
    """Gradient map for `loss`, a scalar Tensor recorded on an active tape."""
    if loss.tape is None:
        raise DetachedGraph("no tape recorded this value")
    return loss.tape.backward(loss)


def _tape():
    return _ACTIVE[-1] if _ACTIVE else None


class Tensor:
    __slots__ = ("data", "requires_grad", "grad", "tape")

    def __init__(self, data, requires_grad=False):
        self.data = np.asarray(data, dtype=DTYPE)
        self.requires_grad = requires_grad
        self.grad = None
        self.tape = None

    @property
    def shape(self):
        return self.data.shape

    def __repr__(self):
        return f"Tensor(shape={self.data.shape}, grad={self.requires_grad})"

    # convenience operators; all defer to the primitive functions below
    def __add__(self, other):
        return add(self, other)

    def __radd__(self, other):
        return add(self, other)

    def __sub__(self, other):
        return sub(self, other)

    def __mul__(self, other):
        return mul(self, other)

    def __rmul__(self, other):
        return mul(self, other)

    def __neg__(self):
        return mul(self, -1.0)

    def __matmul__(self, other):
        return matmul(self, other)

    def __getitem__(self, key):
        return getitem(self, key)


def as_tensor(x):
    return x if isinstance(x, Tensor) else Tensor(x)


def _record(out_data, parents, backward_fn):
    out = Tensor(out_data)
    tape = _tape()
    if tape is not None and any(
        p.requires_grad or p.tape is tape for p in parents if isinstance(p, Tensor)
    ):
        tracked = [p for p in parents if isinstance(p, Tensor)]
        tape.record(out, tracked, backward_fn)
        out.tape = tape
    return out


def _unbroadcast(grad, shape):
    """Sum `grad` down to `shape` (reverses numpy broadcasting)."""
    extra = grad.ndim - len(shape)
    if extra > 0:
        grad = grad.sum(axis=tuple(range(extra)))
    axes = tuple(i for i, s in enumerate(shape) if s == 1 and grad.shape[i] != 1)
    if axes:
        grad = grad.sum(axis=axes, keepdims=True)
    return grad.reshape(shape)


def add(a, b):
    a, b = as_tensor(a), as_tensor(b)

    def bwd(g):
        return _unbroadcast(g, a.data.shape), _unbroadcast(g, b.data.shape)

    return _record(a.data + b.data, [a, b], bwd)


def sub(a, b):
    a, b = as_tensor(a), as_tensor(b)

    def bwd(g):
        return _unbroadcast(g, a.data.shape), _unbroadcast(-g, b.data.shape)

    return _record(a.data - b.data, [a, b], bwd)


def mul(a, b):
    a, b = as_tensor(a), as_tensor(b)
    ad, bd = a.data, b.data

    def bwd(g):
        return _unbroadcast(g * bd, ad.shape), _unbroadcast(g * ad, bd.shape)

    return _record(ad * bd, [a, b], bwd)


def matmul(a, b):
    a, b = as_tensor(a), as_tensor(b)
    ad, bd = a.data, b.data
    if ad.shape[-1] != bd.shape[-2 if bd.ndim > 1 else 0]:
        raise ShapeMismatch(f"matmul {ad.shape} @ {bd.shape}")

    def bwd(g):
        if bd.ndim == 1:
            ga = np.outer(g, bd) if ad.ndim > 1 else g * bd
            gb = ad.T @ g if ad.ndim > 1 else ad * g
            return ga, gb
        ga = g @ np.swapaxes(bd, -1, -2)
        gb = np.swapaxes(ad, -1, -2) @ g
        return _unbroadcast(ga, ad.shape), _unbroadcast(gb, bd.shape)

    return _record(ad @ bd, [a, b], bwd)


def exp(a):
    a = as_tensor(a)
    out_data = np.exp(a.data)

    def bwd(g):
        return (g * out_data,)

    return _record(out_data, [a], bwd)


def gelu(a):
    """tanh-approximation GELU."""
    a = as_tensor(a)
    x = a.data
    c = np.sqrt(2.0 / np.pi)
    inner = c * (x + 0.044715 * x**3)
    t = np.tanh(inner)
    out_data = 0.5 * x * (1.0 + t)

    def bwd(g):
        dinner = c * (1.0 + 3 * 0.044715 * x**2)
        d = 0.5 * (1.0 + t) + 0.5 * x * (1.0 - t**2) * dinner
        return (g * d,)

    return _record(out_data, [a], bwd)


def softmax(a):
    """Softmax over the last axis."""
    a = as_tensor(a)
    z = a.data - a.data.max(axis=-1, keepdims=True)
    e = np.exp(z)
    s = e / e.sum(axis=-1, keepdims=True)

    def bwd(g):
        dot = (g * s).sum(axis=-1, keepdims=True)
        return (s * (g - dot),)

    return _record(s, [a], bwd)


def log_softmax(a):
    a = as_tensor(a)
    z = a.data - a.data.max(axis=-1, keepdims=True)
    lse = np.log(np.exp(z).sum(axis=-1, keepdims=True))
    out_data = z - lse
    s = np.exp(out_data)

    def bwd(g):
        return (g - s * g.sum(axis=-1, keepdims=True),)

    return _record(out_data, [a], bwd)


def layer_norm(a, eps=1e-6):
    """Normalize the last axis to zero mean / unit variance (pre-affine)."""
    a = as_tensor(a)
    x = a.data
    mu = x.mean(axis=-1, keepdims=True)
    xc = x - mu
    var = (xc * xc).mean(axis=-1, keepdims=True)
    inv = 1.0 / np.sqrt(var + eps)
    y = xc * inv

    def bwd(g):
        gm = g.mean(axis=-1, keepdims=True)
        gy = (g * y).mean(axis=-1, keepdims=True)
        return (inv * (g - gm - y * gy),)

    return _record(y, [a], bwd)


def reshape(a, shape):
    a = as_tensor(a)
    old = a.data.shape

    def bwd(g):
        return (g.reshape(old),)

    return _record(a.data.reshape(shape), [a], bwd)


def transpose(a, axes):
    a = as_tensor(a)
    inv = np.argsort(axes)

    def bwd(g):
        return (g.transpose(inv),)

    return _record(a.data.transpose(axes), [a], bwd)


def concat(parts, axis):
    parts = [as_tensor(p) for p in parts]
    sizes = [p.data.shape[axis] for p in parts]
    splits = np.cumsum(sizes)[:-1]

    def bwd(g):
        return tuple(np.split(g, splits, axis=axis))

    return _record(np.concatenate([p.data for p in parts], axis=axis), parts, bwd)


def tsum(a, axis=None, keepdims=False):
    a = as_tensor(a)
    shape = a.data.shape

    def bwd(g):
        if axis is None:
            return (np.broadcast_to(g, shape).copy(),)
        gg = g if keepdims else np.expand_dims(g, axis)
        return (np.broadcast_to(gg, shape).copy(),)

    return _record(a.data.sum(axis=axis, keepdims=keepdims), [a], bwd)


def tmean(a, axis=None, keepdims=False):
    a = as_tensor(a)
    shape = a.data.shape
    if axis is None:
        count = a.data.size
    else:
        count = shape[axis]

    def bwd(g):
        if axis is None:
            return (np.broadcast_to(g / count, shape).copy(),)
        gg = g if keepdims else np.expand_dims(g, axis)
        return (np.broadcast_to(gg / count, shape).copy(),)

    return _record(a.data.mean(axis=axis, keepdims=keepdims), [a], bwd)


def gather_rows(a, idx):
    """Index the leading axis with an integer array (embedding lookup)."""
    a = as_tensor(a)
    idx = np.asarray(idx, dtype=np.intp)

    def bwd(g):
        out = np.zeros_like(a.data)
        np.add.at(out, idx, g)
        return (out,)

    return _record(a.data[idx], [a], bwd)


def getitem(a, key):
    a = as_tensor(a)

    def bwd(g):
        out = np.zeros_like(a.data)
        np.add.at(out, key, g)
        return (out,)

    return _record(a.data[key], [a], bwd)


def select_last(a, idx):
    """out[..., i] = a[..., i, idx[..., i]] — pick one entry along the last axis."""
    a = as_tensor(a)
    idx = np.asarray(idx, dtype=np.intp)
    key = tuple(np.indices(idx.shape)) + (idx,)

    def bwd(g):
        out = np.zeros_like(a.data)
        np.add.at(out, key, g)
        return (out,)

    return _record(a.data[key], [a], bwd)
