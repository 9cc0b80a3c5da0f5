"""Shared neural building blocks: linear / layer-norm / attention /
graph-convolution layers, sinusoidal encodings, pointer scoring, AdamW,
and the checkpoint container format."""

import struct

import numpy as np

from . import autodiff as ad
from .autodiff import ShapeMismatch, Tensor

NEG_INF = -1e30


def trunc_normal(rng, shape, std=0.02):
    """Truncated normal init: resample outside two standard deviations."""
    out = rng.standard_normal(shape) * std
    bad = np.abs(out) > 2 * std
    while bad.any():
        out[bad] = rng.standard_normal(bad.sum()) * std
        bad = np.abs(out) > 2 * std
    return out


class Module:
    """Base with named-parameter registry; nesting builds dotted names."""

    def __init__(self):
        self._params = {}
        self._modules = {}

    def __setattr__(self, name, value):
        if isinstance(value, Tensor) and value.requires_grad:
            self.__dict__.setdefault("_params", {})[name] = value
        elif isinstance(value, Module):
            self.__dict__.setdefault("_modules", {})[name] = value
        elif isinstance(value, (list, tuple)) and value and all(
            isinstance(v, Module) for v in value
        ):
            for i, v in enumerate(value):
                self.__dict__.setdefault("_modules", {})[f"{name}.{i}"] = v
        object.__setattr__(self, name, value)

    def named_parameters(self, prefix=""):
        for name, p in self._params.items():
            yield prefix + name, p
        for name, m in self._modules.items():
            yield from m.named_parameters(prefix + name + ".")

    def parameters(self):
        return [p for _, p in self.named_parameters()]

    def zero_grad(self):
        for p in self.parameters():
            p.grad = None

    def state_dict(self):
        return {name: p.data.astype(np.float32) for name, p in self.named_parameters()}

    def load_state_dict(self, state):
        own = dict(self.named_parameters())
        missing = set(own) - set(state)
        extra = set(state) - set(own)
        if missing or extra:
            raise KeyError(f"state mismatch: missing={sorted(missing)} extra={sorted(extra)}")
        for name, p in own.items():
            arr = np.asarray(state[name], dtype=ad.DTYPE)
            if arr.shape != p.data.shape:
                raise ShapeMismatch(f"{name}: {arr.shape} vs {p.data.shape}")
            p.data = arr


class Linear(Module):
    def __init__(self, d_in, d_out, rng, bias=True, zero_init=False):
        super().__init__()
        if zero_init:
            w = np.zeros((d_in, d_out))
        else:
            w = trunc_normal(rng, (d_in, d_out))
        self.w = Tensor(w, requires_grad=True)
        self.b = Tensor(np.zeros(d_out), requires_grad=True) if bias else None

    def __call__(self, x):
        out = ad.matmul(x, self.w)
        if self.b is not None:
            out = ad.add(out, self.b)
        return out


class LayerNorm(Module):
    def __init__(self, d):
        super().__init__()
        self.gamma = Tensor(np.ones(d), requires_grad=True)
        self.beta = Tensor(np.zeros(d), requires_grad=True)

    def __call__(self, x):
        return ad.add(ad.mul(ad.layer_norm(x), self.gamma), self.beta)


class Mlp(Module):
    """Two-layer perceptron with GELU, the fusion unit used everywhere."""

    def __init__(self, d_in, d_hidden, d_out, rng):
        super().__init__()
        self.fc1 = Linear(d_in, d_hidden, rng)
        self.fc2 = Linear(d_hidden, d_out, rng)

    def __call__(self, x):
        return self.fc2(ad.gelu(self.fc1(x)))


class MultiHeadAttention(Module):
    def __init__(self, d_model, n_heads, rng):
        super().__init__()
        if d_model % n_heads:
            raise ShapeMismatch(f"d_model {d_model} not divisible by n_heads {n_heads}")
        self.n_heads = n_heads
        self.d_head = d_model // n_heads
        self.wq = Linear(d_model, d_model, rng)
        self.wk = Linear(d_model, d_model, rng)
        self.wv = Linear(d_model, d_model, rng)
        self.wo = Linear(d_model, d_model, rng)

    def __call__(self, q, k, v, mask=None):
        """Scaled dot-product attention.

        q/k/v: (..., seq, d_model). mask: additive float array broadcastable
        to (..., n_heads, seq_q, seq_k); blocked positions carry NEG_INF and
        end up with exactly zero attention weight.
        """
        sq = q.data.shape[-2]
        sk = k.data.shape[-2]
        lead = q.data.shape[:-2]

        def heads(t, s):
            t = ad.reshape(t, lead + (s, self.n_heads, self.d_head))
            axes = tuple(range(len(lead))) + (len(lead) + 1, len(lead), len(lead) + 2)
            return ad.transpose(t, axes)

        qh = heads(self.wq(q), sq)
        kh = heads(self.wk(k), sk)
        vh = heads(self.wv(v), sk)
        kt = ad.transpose(kh, tuple(range(kh.data.ndim - 2)) + (kh.data.ndim - 1, kh.data.ndim - 2))
        scores = ad.mul(ad.matmul(qh, kt), 1.0 / np.sqrt(self.d_head))
        if mask is not None:
            scores = ad.add(scores, mask)
        attn = ad.softmax(scores)
        out = ad.matmul(attn, vh)
        axes = tuple(range(len(lead))) + (len(lead) + 1, len(lead), len(lead) + 2)
        out = ad.transpose(out, axes)
        out = ad.reshape(out, lead + (sq, self.n_heads * self.d_head))
        return self.wo(out)


class TransformerBlock(Module):
    """Pre-norm block: x + attn(LN(x)), then x + mlp(LN(x))."""

    def __init__(self, d_model, n_heads, rng, dropout=0.0):
        super().__init__()
        self.ln1 = LayerNorm(d_model)
        self.attn = MultiHeadAttention(d_model, n_heads, rng)
        self.ln2 = LayerNorm(d_model)
        self.mlp = Mlp(d_model, 4 * d_model, d_model, rng)
        self.dropout = dropout

    def _drop(self, x, rng):
        if rng is None or self.dropout <= 0.0:
            return x
        keep = (rng.random(x.data.shape) >= self.dropout) / (1.0 - self.dropout)
        return ad.mul(x, keep)

    def __call__(self, x, mask=None, rng=None):
        h = self.ln1(x)
        x = ad.add(x, self._drop(self.attn(h, h, h, mask), rng))
        x = ad.add(x, self._drop(self.mlp(self.ln2(x)), rng))
        return x


class TransformerStack(Module):
    def __init__(self, n_layers, d_model, n_heads, rng, dropout=0.0):
        super().__init__()
        self.blocks = [TransformerBlock(d_model, n_heads, rng, dropout) for _ in range(n_layers)]
        self.ln_f = LayerNorm(d_model)

    def __call__(self, x, mask=None, rng=None):
        for block in self.blocks:
            x = block(x, mask=mask, rng=rng)
        return self.ln_f(x)


def causal_mask(seq):
    """(seq, seq) additive mask blocking future positions."""
    m = np.zeros((seq, seq))
    m[np.triu_indices(seq, k=1)] = NEG_INF
    return m


def padding_mask(valid):
    """Additive mask from a boolean (B, seq) validity array: keys at padded
    positions are blocked for every query."""
    b, s = valid.shape
    m = np.where(valid[:, None, None, :], 0.0, NEG_INF)
    return m


class GcnLayer(Module):
    """Symmetric-normalized graph convolution with self-loops."""

    def __init__(self, d_in, d_out, rng, activation=True):
        super().__init__()
        self.lin = Linear(d_in, d_out, rng)
        self.activation = activation

    @staticmethod
    def normalized_adjacency(adj):
        a = np.asarray(adj, dtype=ad.DTYPE) + np.eye(adj.shape[0])
        d = a.sum(axis=1)
        inv = 1.0 / np.sqrt(d)
        return a * inv[:, None] * inv[None, :]

    def __call__(self, x, norm_adj):
        out = self.lin(ad.matmul(Tensor(norm_adj), x))
        return ad.gelu(out) if self.activation else out


class PointerHead(Module):
    """Dot-product pointer scores between a decoder state and candidates."""

    def __init__(self, d_model, rng):
        super().__init__()
        self.proj_state = Linear(d_model, d_model, rng)
        self.proj_cand = Linear(d_model, d_model, rng)
        self.scale = 1.0 / np.sqrt(d_model)

    def logits(self, states, candidates, mask=None):
        """states: (s, d) or (d,); candidates: (m, d); mask: additive (.., m)."""
        s = self.proj_state(states)
        c = self.proj_cand(candidates)
        ct = ad.transpose(c, (1, 0))
        out = ad.mul(ad.matmul(s, ct), self.scale)
        if mask is not None:
            out = ad.add(out, mask)
        return out

    def __call__(self, state, candidates, mask=None):
        if candidates.data.shape[0] < 1:
            raise ValueError("empty candidate set")
        return ad.softmax(self.logits(state, candidates, mask))


def sinusoidal_encoding(positions, d_model):
    """Standard sin/cos positional features for integer `positions` (n,)."""
    positions = np.asarray(positions, dtype=ad.DTYPE)
    half = d_model // 2
    freqs = np.exp(-np.log(10000.0) * np.arange(half) / max(half - 1, 1))
    ang = positions[:, None] * freqs[None, :]
    out = np.zeros(positions.shape + (d_model,))
    out[:, 0::2] = np.sin(ang)[:, : (d_model + 1) // 2]
    out[:, 1::2] = np.cos(ang)[:, : d_model // 2]
    return out


class AdamWConfig:
    def __init__(self, learning_rate=5e-4, weight_decay=1e-6, betas=(0.9, 0.999), epsilon=1e-8):
        if learning_rate <= 0:
            raise ValueError("learning_rate must be positive")
        self.learning_rate = learning_rate
        self.weight_decay = weight_decay
        self.betas = betas
        self.epsilon = epsilon


def adamw_step(params, grads, state, cfg):
    """One decoupled-weight-decay Adam update, in place on `params`.

    params: list of Tensors; grads: aligned list of arrays (None = zero);
    state: dict carrying 'step', 'm', 'v' (created on first call).
    """
    if not state:
        state["step"] = 0
        state["m"] = [np.zeros_like(p.data) for p in params]
        state["v"] = [np.zeros_like(p.data) for p in params]
    state["step"] += 1
    t = state["step"]
    b1, b2 = cfg.betas
    c1 = 1.0 - b1**t
    c2 = 1.0 - b2**t
    for i, p in enumerate(params):
        g = grads[i]
        if g is None:
            g = np.zeros_like(p.data)
        if g.shape != p.data.shape:
            raise ShapeMismatch(f"grad {g.shape} vs param {p.data.shape}")
        m = state["m"][i]
        v = state["v"][i]
        m *= b1
        m += (1 - b1) * g
        v *= b2
        v += (1 - b2) * g * g
        mhat = m / c1
        vhat = v / c2
        p.data = p.data - cfg.learning_rate * (
            mhat / (np.sqrt(vhat) + cfg.epsilon) + cfg.weight_decay * p.data
        )
    return params, state


class AdamW:
    def __init__(self, params, cfg):
        self.params = list(params)
        self.cfg = cfg
        self.state = {}

    def step(self, grad_map):
        grads = [grad_map.get(p) for p in self.params]
        adamw_step(self.params, grads, self.state, self.cfg)


CKPT_MAGIC = b"BSNN"
CKPT_VERSION = 1


def save_checkpoint(path, state):
    """Write named float32 tensors as a flat record container."""
    with open(path, "wb") as fh:
        fh.write(CKPT_MAGIC)
        fh.write(struct.pack("<II", CKPT_VERSION, len(state)))
        for name in sorted(state):
            arr = np.ascontiguousarray(state[name], dtype="<f4")
            enc = name.encode("utf-8")
            fh.write(struct.pack("<H", len(enc)))
            fh.write(enc)
            fh.write(struct.pack("<B", arr.ndim))
            fh.write(struct.pack(f"<{arr.ndim}I", *arr.shape))
            fh.write(arr.tobytes())


def load_checkpoint(path):
    with open(path, "rb") as fh:
        if fh.read(4) != CKPT_MAGIC:
            raise ValueError(f"{path}: not a checkpoint container")
        version, count = struct.unpack("<II", fh.read(8))
        if version != CKPT_VERSION:
            raise ValueError(f"{path}: unsupported checkpoint version {version}")
        state = {}
        for _ in range(count):
            (nlen,) = struct.unpack("<H", fh.read(2))
            name = fh.read(nlen).decode("utf-8")
            (ndim,) = struct.unpack("<B", fh.read(1))
            shape = struct.unpack(f"<{ndim}I", fh.read(4 * ndim)) if ndim else ()
            n = int(np.prod(shape)) if shape else 1
            arr = np.frombuffer(fh.read(4 * n), dtype="<f4").reshape(shape)
            state[name] = arr
        return state
