"""Dataset preparation, training loops and system checkpointing.

A "system" is the six learned models: the adjacency-sequence VAE, the
half-edge pointer decoder, and the four geometry denoisers. Each trains
independently (teacher-forced on ground truth), so the loops here are
deliberately simple: AdamW on one loss, deterministic given the seed.
"""

import json
import os
import time
from dataclasses import dataclass, field

import numpy as np

from .autodiff import Tape
from .brep import derive_incidence, face_edge_lists
from .brepfile import read_brep
from .conditioning import (
    BoxConditioner,
    ConditioningEmbedding,
    EdgeConditioner,
    FaceConditioner,
    VertexConditioner,
    stack_features,
)
from .config import Preset, get_preset
from .diffusion import DiffusionModel, diffusion_loss, make_schedule
from .ev_model import EvDecoder, ev_loss
from .nn import AdamW, AdamWConfig, load_checkpoint, save_checkpoint
from .topocodec import build_fef, canonicalize_faces, encode_ev_sequence, flatten_fef
from .vae import EfVae, vae_loss

MODEL_NAMES = ("ef_vae", "ev_decoder", "p_box", "p_edge", "p_face", "p_vertex")
DIFFUSION_KINDS = {"p_box": "box", "p_edge": "edge", "p_face": "face", "p_vertex": "vertex"}


@dataclass
class System:
    preset: Preset
    ablation: str
    ef_vae: EfVae
    ev_decoder: EvDecoder
    p_box: DiffusionModel
    p_edge: DiffusionModel
    p_face: DiffusionModel
    p_vertex: DiffusionModel

    def model(self, name):
        return getattr(self, name)

    @property
    def schedule(self):
        return make_schedule(self.preset.timesteps, self.preset.beta_min, self.preset.beta_max)


def build_system(preset, seed, ablation="none"):
    """Fresh system with per-model initialization streams."""
    streams = np.random.SeedSequence([seed, 0xB1E5]).spawn(len(MODEL_NAMES))
    rngs = {name: np.random.default_rng(s) for name, s in zip(MODEL_NAMES, streams)}
    d_diff = preset.d_cond_diff
    return System(
        preset=preset,
        ablation=ablation,
        ef_vae=EfVae(preset, rngs["ef_vae"]),
        ev_decoder=EvDecoder(preset, rngs["ev_decoder"], ablation=ablation),
        p_box=DiffusionModel(
            preset, "box", BoxConditioner(d_diff, rngs["p_box"], preset.n_f_max, preset.k_max),
            rngs["p_box"],
        ),
        p_edge=DiffusionModel(preset, "edge", EdgeConditioner(d_diff, rngs["p_edge"]), rngs["p_edge"]),
        p_face=DiffusionModel(preset, "face", FaceConditioner(d_diff, rngs["p_face"]), rngs["p_face"]),
        p_vertex=DiffusionModel(
            preset, "vertex", VertexConditioner(d_diff, rngs["p_vertex"]), rngs["p_vertex"]
        ),
    )


def save_system(system, out_dir):
    os.makedirs(out_dir, exist_ok=True)
    meta = {
        "version": 1,
        "preset": json.loads(system.preset.to_json()),
        "ablation": system.ablation,
    }
    with open(os.path.join(out_dir, "system.json"), "w", encoding="utf-8") as fh:
        json.dump(meta, fh, indent=1)
    for name in MODEL_NAMES:
        save_checkpoint(os.path.join(out_dir, f"{name}.ckpt"), system.model(name).state_dict())


def load_system(ckpt_dir):
    with open(os.path.join(ckpt_dir, "system.json"), "r", encoding="utf-8") as fh:
        meta = json.load(fh)
    preset = Preset(**meta["preset"])
    system = build_system(preset, seed=0, ablation=meta.get("ablation", "none"))
    for name in MODEL_NAMES:
        path = os.path.join(ckpt_dir, f"{name}.ckpt")
        system.model(name).load_state_dict(load_checkpoint(path))
    return system


@dataclass
class Record:
    """Everything one corpus solid contributes to the six training tasks."""

    ef_seq: object
    ev_seq: object
    ef: object
    x_box: np.ndarray
    x_edge: np.ndarray
    x_face: np.ndarray
    x_vertex: np.ndarray
    feats: dict = field(default_factory=dict)


def prepare_record(m, system):
    """Per-solid tensors, sequences and conditioner features (all from
    ground truth; models are trained teacher-forced)."""
    preset = system.preset
    fef = build_fef(m.ef, m.n_f)
    inc = derive_incidence(m.ef, m.ev, m.n_f, m.n_v)
    fe = face_edge_lists(m.ef, m.n_f)
    boxes = m.box_tensor()
    edges = m.edge_tensor()
    faces = m.face_tensor()
    feats = {
        "p_box": system.p_box.conditioner.features(m.ef, m.n_f),
        "p_edge": system.p_edge.conditioner.features(m.ef, boxes),
        "ev": system.ev_decoder.conditioner.features(m.ef, boxes, edges),
        "p_face": system.p_face.conditioner.features(fe, edges, boxes, inc.fv),
        "p_vertex": system.p_vertex.conditioner.features(inc.vf, inc.ve, boxes, faces),
    }
    return Record(
        ef_seq=flatten_fef(fef, k_max=preset.k_max),
        ev_seq=encode_ev_sequence(m, n_e_max=preset.n_e_max),
        ef=m.ef,
        x_box=boxes,
        x_edge=edges,
        x_face=faces,
        x_vertex=m.vertices.copy(),
        feats=feats,
    )


def prepare_dataset(paths, system):
    return [prepare_record(read_brep(p), system) for p in paths]


@dataclass
class TrainLog:
    name: str
    steps: int
    losses: list
    seconds: float

    def tail_mean(self, k=50):
        return float(np.mean(self.losses[-k:]))


def _optimizer(model, preset):
    cfg = AdamWConfig(learning_rate=preset.learning_rate, weight_decay=preset.weight_decay)
    return AdamW(model.parameters(), cfg)


def train_vae(system, dataset, steps, seed, batch_size=16):
    model = system.ef_vae
    opt = _optimizer(model, system.preset)
    rng = np.random.default_rng(np.random.SeedSequence([seed, 1]))
    losses = []
    t0 = time.time()
    for _ in range(steps):
        idx = rng.integers(0, len(dataset), size=min(batch_size, len(dataset)))
        seqs = [dataset[i].ef_seq for i in idx]
        with Tape() as tape:
            loss, _, _ = vae_loss(model, seqs, rng, train_rng=rng)
        opt.step(tape.backward(loss))
        losses.append(float(loss.data))
    return TrainLog("ef_vae", steps, losses, time.time() - t0)


def train_ev(system, dataset, steps, seed):
    model = system.ev_decoder
    opt = _optimizer(model, system.preset)
    rng = np.random.default_rng(np.random.SeedSequence([seed, 2]))
    losses = []
    t0 = time.time()
    for _ in range(steps):
        rec = dataset[rng.integers(0, len(dataset))]
        with Tape() as tape:
            cond = ConditioningEmbedding(
                rows=model.conditioner.rows(rec.feats["ev"]),
                entity_kind="edge",
                provenance=model.conditioner.provenance,
            )
            loss = ev_loss(model, rec.ev_seq, cond, rec.ef, train_rng=rng)
        opt.step(tape.backward(loss))
        losses.append(float(loss.data))
    return TrainLog("ev_decoder", steps, losses, time.time() - t0)


def train_diffusion(system, dataset, name, steps, seed, batch_size=16):
    model = system.model(name)
    kind = DIFFUSION_KINDS[name]
    target = {"box": "x_box", "edge": "x_edge", "face": "x_face", "vertex": "x_vertex"}[kind]
    opt = _optimizer(model, system.preset)
    schedule = system.schedule
    rng = np.random.default_rng(np.random.SeedSequence([seed, 3, MODEL_NAMES.index(name)]))
    losses = []
    t0 = time.time()
    for _ in range(steps):
        idx = rng.integers(0, len(dataset), size=min(batch_size, len(dataset)))
        feats, valid = stack_features([dataset[i].feats[name] for i in idx])
        n_max = valid.shape[1]
        x0 = np.zeros((len(idx), n_max, model.width))
        for row, i in enumerate(idx):
            arr = getattr(dataset[i], target)
            x0[row, : arr.shape[0]] = arr
        with Tape() as tape:
            loss = diffusion_loss(model, x0, feats, valid, schedule, rng, train_rng=rng)
        opt.step(tape.backward(loss))
        losses.append(float(loss.data))
    return TrainLog(name, steps, losses, time.time() - t0)


def train_model(system, dataset, name, steps, seed, batch_size=16):
    if name == "ef_vae":
        return train_vae(system, dataset, steps, seed, batch_size)
    if name == "ev_decoder":
        return train_ev(system, dataset, steps, seed)
    return train_diffusion(system, dataset, name, steps, seed, batch_size)
