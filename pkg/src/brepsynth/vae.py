"""Sequence VAE over the flattened face-adjacency-count tokens.

A non-causal encoder pools the token sequence into a Gaussian posterior;
a causal decoder, conditioned on the latent draw added to every input
embedding, reconstructs the sequence token by token. Sampling draws the
latent from the prior and decodes until <EOS>, retrying until the length
is triangular.
"""

import numpy as np

from . import autodiff as ad
from .autodiff import Tensor
from .nn import (
    NEG_INF,
    Linear,
    Module,
    TransformerStack,
    causal_mask,
    padding_mask,
    sinusoidal_encoding,
    trunc_normal,
)
from .topocodec import EfSequence, NotTriangularLength


class SamplingExhausted(RuntimeError):
    pass


def kl_standard_normal(mu, logvar):
    """Closed-form KL(N(mu, sigma^2) || N(0, I)) summed over dimensions:
    -1/2 sum(1 + log sigma^2 - mu^2 - sigma^2)."""
    term = ad.add(1.0, logvar)
    term = ad.sub(term, ad.mul(mu, mu))
    term = ad.sub(term, ad.exp(logvar))
    return ad.mul(ad.tsum(term, axis=-1), -0.5)


class EfVae(Module):
    def __init__(self, preset, rng):
        super().__init__()
        self.k_max = preset.k_max
        self.eos = preset.k_max + 1
        self.bos = preset.k_max + 2
        self.pad = preset.k_max + 3
        self.vocab = preset.k_max + 4
        self.max_body = preset.n_f_max * (preset.n_f_max - 1) // 2
        d = preset.topo_dim
        self.d_z = preset.d_z
        self.embedding = Tensor(trunc_normal(rng, (self.vocab, d)), requires_grad=True)
        self.encoder = TransformerStack(preset.topo_layers, d, preset.topo_heads, rng, preset.dropout)
        self.mu_head = Linear(d, preset.d_z, rng)
        self.logvar_head = Linear(d, preset.d_z, rng)
        self.z_proj = Linear(preset.d_z, d, rng)
        self.decoder = TransformerStack(preset.topo_layers, d, preset.topo_heads, rng, preset.dropout)
        self.head = Linear(d, self.vocab, rng)

    def _embed(self, tokens):
        emb = ad.gather_rows(self.embedding, tokens)
        pos = sinusoidal_encoding(np.arange(tokens.shape[-1]), emb.data.shape[-1])
        return ad.add(emb, pos)

    def encode(self, tokens, valid, rng=None):
        """Posterior parameters from padded token rows (B, L)."""
        h = self.encoder(self._embed(tokens), mask=padding_mask(valid), rng=rng)
        w = valid / valid.sum(axis=1, keepdims=True)
        pooled = ad.tsum(ad.mul(h, w[:, :, None]), axis=1)
        return self.mu_head(pooled), self.logvar_head(pooled)

    def decode_logits(self, inputs, z, valid, rng=None):
        """Next-token logits under teacher forcing; z is added to every
        input embedding so each step is latent-conditioned."""
        x = ad.add(self._embed(inputs), ad.reshape(self.z_proj(z), (inputs.shape[0], 1, -1)))
        mask = causal_mask(inputs.shape[1]) + padding_mask(valid)
        return self.head(self.decoder(x, mask=mask, rng=rng))


def batch_sequences(seqs, pad):
    """Right-pad token tuples; returns (tokens (B, L), valid (B, L))."""
    length = max(len(s.tokens) for s in seqs)
    tokens = np.full((len(seqs), length), pad, dtype=np.int64)
    valid = np.zeros((len(seqs), length), dtype=bool)
    for i, s in enumerate(seqs):
        tokens[i, : len(s.tokens)] = s.tokens
        valid[i, : len(s.tokens)] = True
    return tokens, valid


def vae_loss(model, seqs, rng, train_rng=None):
    """(loss, reconstruction, kl), each batch-mean.

    Reconstruction is the summed next-token cross-entropy of the causal
    decoder over real (non-pad) positions; KL is the closed form against
    the standard-normal prior, summed over latent dimensions.
    """
    targets, valid = batch_sequences(seqs, model.pad)
    inputs = np.concatenate(
        [np.full((targets.shape[0], 1), model.bos, dtype=np.int64), targets[:, :-1]], axis=1
    )
    mu, logvar = model.encode(targets, valid, rng=train_rng)
    eps = rng.standard_normal(mu.data.shape)
    z = ad.add(mu, ad.mul(ad.exp(ad.mul(logvar, 0.5)), eps))
    logits = model.decode_logits(inputs, z, valid, rng=train_rng)
    logp = ad.select_last(ad.log_softmax(logits), targets)
    recon = ad.mul(ad.tsum(ad.mul(logp, valid.astype(np.float64))), -1.0 / len(seqs))
    kl = ad.tmean(kl_standard_normal(mu, logvar))
    return ad.add(recon, kl), recon, kl


def vae_sample(model, seed, temperature=1.0, max_retries=16):
    """Draw z from the prior and decode one sequence; reject-and-retry
    until the body length is triangular."""
    rng = np.random.default_rng(seed)
    for _ in range(max_retries):
        z = Tensor(rng.standard_normal((1, model.d_z)))
        tokens = []
        for _ in range(model.max_body + 1):
            inputs = np.array([[model.bos] + tokens], dtype=np.int64)
            valid = np.ones_like(inputs, dtype=bool)
            logits = model.decode_logits(inputs, z, valid).data[0, -1].copy()
            logits[model.bos] = NEG_INF
            logits[model.pad] = NEG_INF
            if temperature <= 0:
                tok = int(np.argmax(logits))
            else:
                p = np.exp((logits - logits.max()) / temperature)
                p /= p.sum()
                tok = int(rng.choice(len(p), p=p))
            if tok == model.eos:
                break
            tokens.append(tok)
        try:
            return EfSequence(tuple(tokens) + (model.eos,), k_max=model.k_max)
        except (NotTriangularLength, ValueError):
            continue
    raise SamplingExhausted(f"no triangular sequence within {max_retries} draws")
