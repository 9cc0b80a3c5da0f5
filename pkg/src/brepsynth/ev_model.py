"""Autoregressive half-edge pointer decoder for edge-vertex topology.

Each edge contributes two direction-tagged candidate embeddings built
from its conditioning row plus a graph-convolution context over the
edge adjacency (edges sharing a face); three specials (<L>, <F>, <E>)
complete the candidate set. A causal decoder walks the emitted sequence
and a pointer head scores the candidates at every step. During both
teacher forcing and sampling, tokens the grammar forbids are masked to
-inf, so emitted sequences always decode.
"""

import numpy as np

from . import autodiff as ad
from .autodiff import Tensor
from .conditioning import EvConditioner
from .nn import (
    NEG_INF,
    GcnLayer,
    Linear,
    Module,
    PointerHead,
    TransformerStack,
    causal_mask,
    sinusoidal_encoding,
    trunc_normal,
)
from .topocodec import EvGrammar, EvSequence, MalformedSequence, ev_special_tokens
from .vae import SamplingExhausted


class EvDecoder(Module):
    def __init__(self, preset, rng, ablation="none"):
        super().__init__()
        d = preset.topo_dim
        self.n_e_max = preset.n_e_max
        self.max_steps = 4 * preset.n_e_max + 2 * preset.n_f_max + 2
        self.conditioner = EvConditioner(preset.d_cond_topo, rng, ablation)
        self.gcn1 = GcnLayer(preset.d_cond_topo, d, rng)
        self.gcn2 = GcnLayer(d, d, rng)
        self.he_proj = Linear(preset.d_cond_topo, d, rng)
        self.ctx_proj = Linear(d, d, rng)
        self.dir_emb = Tensor(trunc_normal(rng, (2, d)), requires_grad=True)
        self.special_emb = Tensor(trunc_normal(rng, (3, d)), requires_grad=True)
        self.bos_emb = Tensor(trunc_normal(rng, (1, d)), requires_grad=True)
        self.encoder = TransformerStack(preset.topo_layers, d, preset.topo_heads, rng, preset.dropout)
        self.decoder = TransformerStack(preset.topo_layers, d, preset.topo_heads, rng, preset.dropout)
        self.pointer = PointerHead(d, rng)

    @property
    def ablation(self):
        return self.conditioner.ablation

    @staticmethod
    def edge_adjacency(ef, n_e):
        adj = np.zeros((n_e, n_e))
        by_face = {}
        for e, (fa, fb) in enumerate(ef.rows):
            by_face.setdefault(int(fa), []).append(e)
            by_face.setdefault(int(fb), []).append(e)
        for edges in by_face.values():
            for i in edges:
                for j in edges:
                    if i != j:
                        adj[i, j] = 1.0
        return adj

    def candidates(self, ef, cond_rows, rng=None):
        """Contextualized candidate embeddings: (2 n_e + 3, d)."""
        n_e = len(ef)
        norm_adj = GcnLayer.normalized_adjacency(self.edge_adjacency(ef, n_e))
        ctx = self.gcn2(self.gcn1(cond_rows, norm_adj), norm_adj)
        base = ad.add(self.he_proj(cond_rows), self.ctx_proj(ctx))
        edge_idx = np.repeat(np.arange(n_e), 2)
        dir_idx = np.tile(np.arange(2), n_e)
        halves = ad.add(ad.gather_rows(base, edge_idx), ad.gather_rows(self.dir_emb, dir_idx))
        cands = ad.concat([halves, self.special_emb], axis=0)
        enc = self.encoder(ad.reshape(cands, (1,) + cands.data.shape), rng=rng)
        return ad.reshape(enc, cands.data.shape)

    def decode_states(self, cands, prev_ids, rng=None):
        """Causal decoder states for steps 0..S-1; step t sees the
        candidate embeddings of tokens emitted before t."""
        steps = len(prev_ids) + 1
        table = ad.concat([self.bos_emb, cands], axis=0)
        ids = np.concatenate([[0], np.asarray(prev_ids, dtype=np.int64) + 1])
        x = ad.add(ad.gather_rows(table, ids), sinusoidal_encoding(np.arange(steps), table.data.shape[-1]))
        x = ad.reshape(x, (1, steps, -1))
        h = self.decoder(x, mask=causal_mask(steps), rng=rng)
        return ad.reshape(h, (steps, -1))


def tokens_to_internal(tokens, n_e, n_e_max):
    """Map alphabet tokens to per-instance candidate indices 0..2n_e+2."""
    specials = ev_special_tokens(n_e_max)
    out = []
    for t in tokens:
        if t < 2 * n_e:
            out.append(t)
        elif t in specials:
            out.append(2 * n_e + specials.index(t))
        else:
            raise MalformedSequence(f"token {t} outside this instance's candidates")
    return np.array(out, dtype=np.int64)


def internal_to_token(idx, n_e, n_e_max):
    if idx < 2 * n_e:
        return int(idx)
    return ev_special_tokens(n_e_max)[idx - 2 * n_e]


def grammar_mask(gram, n_e):
    """Additive pointer mask from the grammar's feasible-token map."""
    mask = np.full(2 * n_e + 3, NEG_INF)
    feas = gram.feasible()
    for e, d in feas.get(EvGrammar.TOK_HALF, []):
        mask[2 * e + d] = 0.0
    if EvGrammar.TOK_L in feas:
        mask[2 * n_e] = 0.0
    if EvGrammar.TOK_F in feas:
        mask[2 * n_e + 1] = 0.0
    if EvGrammar.TOK_E in feas:
        mask[2 * n_e + 2] = 0.0
    return mask


def _apply_internal(gram, idx, n_e):
    if idx < 2 * n_e:
        gram.push_half(idx // 2, idx % 2)
    elif idx == 2 * n_e:
        gram.push_loop_end()
    elif idx == 2 * n_e + 1:
        gram.push_face_end()
    else:
        gram.push_end()


def ev_loss(model, seq, cond, ef, train_rng=None):
    """Grammar-masked teacher-forced NLL, averaged over prediction steps.

    Specials are regular prediction targets; only padding would be
    excluded from the average (single sequences carry none).
    """
    n_e = len(ef)
    n_f = int(ef.rows.max()) + 1
    ids = tokens_to_internal(seq.tokens, n_e, model.n_e_max)
    gram = EvGrammar(ef, n_f, strict_manifold=True)
    masks = np.empty((len(ids), 2 * n_e + 3))
    for s, idx in enumerate(ids):
        masks[s] = grammar_mask(gram, n_e)
        if masks[s, idx] < 0:
            raise MalformedSequence(f"step {s}: target token infeasible under the grammar")
        _apply_internal(gram, int(idx), n_e)
    cands = model.candidates(ef, cond.rows, rng=train_rng)
    states = model.decode_states(cands, ids[:-1], rng=train_rng)
    logits = model.pointer.logits(states, cands, mask=masks)
    logp = ad.select_last(ad.log_softmax(logits), ids)
    return ad.mul(ad.tmean(logp), -1.0)


def ev_sample(model, cond, ef, seed, temperature=1.0, max_restarts=16):
    """Constrained autoregressive decode; the returned sequence always
    satisfies the grammar (restarts on dead ends)."""
    n_e = len(ef)
    n_f = int(ef.rows.max()) + 1
    rng = np.random.default_rng(seed)
    cands = model.candidates(ef, cond.rows)
    for _ in range(max_restarts):
        gram = EvGrammar(ef, n_f, strict_manifold=True)
        ids = []
        ok = True
        for _ in range(model.max_steps):
            mask = grammar_mask(gram, n_e)
            if not np.isfinite(mask).any():
                ok = False
                break
            states = model.decode_states(cands, np.array(ids, dtype=np.int64))
            logits = model.pointer.logits(states, cands).data[-1] + mask
            if temperature <= 0:
                idx = int(np.argmax(logits))
            else:
                p = np.exp((logits - logits.max()) / temperature)
                p /= p.sum()
                idx = int(rng.choice(len(p), p=p))
            ids.append(idx)
            _apply_internal(gram, idx, n_e)
            if gram.done:
                break
        if ok and gram.done:
            tokens = tuple(internal_to_token(i, n_e, model.n_e_max) for i in ids)
            return EvSequence(tokens, n_e_max=model.n_e_max)
    raise SamplingExhausted(f"edge-vertex decoding dead-ended {max_restarts} times")
