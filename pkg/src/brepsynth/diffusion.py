"""Denoising diffusion over per-entity geometry rows.

One architecture, four instances (boxes w=6, edge curves w=12, face
grids w=48, vertices w=3): each entity token concatenates the noisy
target row with its conditioning row; a transformer over the entity set
predicts the injected noise. Linear beta schedule, epsilon prediction,
ancestral sampling.
"""

from dataclasses import dataclass

import numpy as np

from . import autodiff as ad
from .autodiff import ShapeMismatch, Tensor
from .nn import Linear, Mlp, Module, TransformerStack, padding_mask, sinusoidal_encoding

TARGET_WIDTHS = {"box": 6, "edge": 12, "face": 48, "vertex": 3}


class InvalidRange(ValueError):
    pass


@dataclass(frozen=True)
class NoiseSchedule:
    betas: np.ndarray
    alpha_bars: np.ndarray

    @property
    def timesteps(self):
        return len(self.betas)


def make_schedule(timesteps, beta_min=1e-4, beta_max=0.02):
    """Linear betas, cumulative-product alpha-bars."""
    if not (0 < beta_min < beta_max < 1):
        raise InvalidRange(f"need 0 < beta_min < beta_max < 1, got {beta_min}, {beta_max}")
    if timesteps < 1:
        raise InvalidRange("need at least one timestep")
    betas = np.linspace(beta_min, beta_max, timesteps)
    return NoiseSchedule(betas=betas, alpha_bars=np.cumprod(1.0 - betas))


def forward_diffuse(x0, t, eps, schedule):
    """q(x_t | x0) realization: sqrt(abar_t) x0 + sqrt(1 - abar_t) eps.

    t is 1-based (matching the sampling loop); accepts scalar t or one t
    per leading item of x0.
    """
    x0 = np.asarray(x0, dtype=np.float64)
    ab = schedule.alpha_bars[np.asarray(t) - 1]
    if np.ndim(t) > 0:
        ab = ab.reshape((-1,) + (1,) * (x0.ndim - 1))
    return np.sqrt(ab) * x0 + np.sqrt(1.0 - ab) * eps


class DiffusionModel(Module):
    """Transformer denoiser over one entity set, plus its conditioner."""

    def __init__(self, preset, kind, conditioner, rng):
        super().__init__()
        if kind not in TARGET_WIDTHS:
            raise ValueError(f"kind must be one of {sorted(TARGET_WIDTHS)}")
        self.kind = kind
        self.width = TARGET_WIDTHS[kind]
        d = preset.diff_dim
        self.conditioner = conditioner
        self.in_proj = Linear(self.width + preset.d_cond_diff, d, rng)
        self.t_mlp = Mlp(d, d, d, rng)
        self.stack = TransformerStack(preset.diff_layers, d, preset.diff_heads, rng, preset.dropout)
        self.out_proj = Linear(d, self.width, rng, zero_init=True)

    def forward(self, x_t, cond_rows, t, attn_mask=None, rng=None):
        """eps prediction. x_t: Tensor (B, n, w); cond_rows: Tensor
        (B, n, d_cond); t: (B,) 1-based ints."""
        if x_t.data.shape[-1] != self.width:
            raise ShapeMismatch(f"{self.kind}: expected width {self.width}, got {x_t.data.shape}")
        tok = self.in_proj(ad.concat([x_t, cond_rows], axis=-1))
        t_emb = self.t_mlp(Tensor(sinusoidal_encoding(np.asarray(t), tok.data.shape[-1])))
        tok = ad.add(tok, ad.reshape(t_emb, (t_emb.data.shape[0], 1, t_emb.data.shape[-1])))
        h = self.stack(tok, mask=attn_mask, rng=rng)
        return self.out_proj(h)


def diffusion_loss(model, x0, cond_feats, valid_mask, schedule, rng, train_rng=None):
    """Noise-prediction MSE restricted to valid entities.

    x0: (B, n, w) normalized targets; cond_feats: batched feature dict for
    the model's conditioner; valid_mask: (B, n) boolean. Per entity the
    error is the squared L2 norm over the target width; the loss averages
    over valid entities only.
    """
    x0 = np.asarray(x0, dtype=np.float64)
    b = x0.shape[0]
    t = rng.integers(1, schedule.timesteps + 1, size=b)
    eps = rng.standard_normal(x0.shape)
    x_t = forward_diffuse(x0, t, eps, schedule)
    cond_rows = model.conditioner.rows(cond_feats)
    eps_hat = model.forward(
        Tensor(x_t), cond_rows, t, attn_mask=padding_mask(valid_mask), rng=train_rng
    )
    err = ad.sub(eps_hat, Tensor(eps))
    per_entity = ad.tsum(ad.mul(err, err), axis=-1)
    weights = valid_mask.astype(np.float64) / valid_mask.sum()
    return ad.tsum(ad.mul(per_entity, weights))


def diffusion_sample(model, cond_feats, n_entities, schedule, seed):
    """Ancestral sampling: x_T ~ N(0, I) refined down to x_0, which is
    clamped to [-1.2, 1.2]. Deterministic per seed."""
    rng = np.random.default_rng(seed)
    cond_rows = model.conditioner.rows({k: v[None] for k, v in cond_feats.items()})
    x = rng.standard_normal((1, n_entities, model.width))
    betas, abars = schedule.betas, schedule.alpha_bars
    for t in range(schedule.timesteps, 0, -1):
        eps_hat = model.forward(Tensor(x), cond_rows, np.array([t])).data
        alpha = 1.0 - betas[t - 1]
        x = (x - betas[t - 1] / np.sqrt(1.0 - abars[t - 1]) * eps_hat) / np.sqrt(alpha)
        if t > 1:
            var = (1.0 - abars[t - 2]) / (1.0 - abars[t - 1]) * betas[t - 1]
            x = x + np.sqrt(var) * rng.standard_normal(x.shape)
    return np.clip(x[0], -1.2, 1.2)
