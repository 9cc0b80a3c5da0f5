"""Deterministic construction of the per-entity conditioning rows that
each generation stage reads from previously generated topology/geometry.

Every embedding follows the same recipe: gather incident-entity features
through an incidence table, push them through a shared two-layer MLP,
sum over the incident set (order invariance), concatenate encodings of
the incidence structure itself (counts, never raw indices), and fuse
with a final two-layer MLP. The fusion weights are owned — and trained —
by the consuming network.
"""

from dataclasses import dataclass

import numpy as np

from . import autodiff as ad
from .autodiff import Tensor
from .brep import IndexOutOfRange, face_edge_lists
from .nn import Mlp, Module
from .topocodec import build_fef, canonicalize_faces

COUNT_BINS = 32
COUNT_ENC_WIDTH = COUNT_BINS + 1


@dataclass
class ConditioningEmbedding:
    rows: Tensor           # (n_entities, d_cond) or batched (B, n, d_cond)
    entity_kind: str       # face | edge | vertex
    provenance: tuple      # source field names actually fused

    @property
    def n_entities(self):
        return self.rows.data.shape[-2]


def gather(table, source, pad_to=None):
    """out[r][j] = source[table[r][j]]; rows shorter than the pad width get
    zero rows with their mask bit off. Returns (values, mask)."""
    source = np.asarray(source, dtype=np.float64)
    rows = [list(r) for r in table]
    k = max((len(r) for r in rows), default=0)
    if pad_to is not None:
        if k > pad_to:
            raise ValueError(f"incidence width {k} exceeds pad width {pad_to}")
        k = pad_to
    n = len(rows)
    out = np.zeros((n, k) + source.shape[1:])
    mask = np.zeros((n, k), dtype=bool)
    for r, idx in enumerate(rows):
        for j, i in enumerate(idx):
            if not 0 <= i < source.shape[0]:
                raise IndexOutOfRange(f"row {r}: index {i} outside [0, {source.shape[0]})")
            out[r, j] = source[i]
            mask[r, j] = True
    return out, mask


def count_encoding(counts):
    """(scalar count / 32, one-hot of the count clipped to 32 bins)."""
    counts = np.asarray(counts, dtype=np.int64)
    flat = counts.reshape(-1)
    enc = np.zeros((flat.size, COUNT_ENC_WIDTH))
    enc[:, 0] = flat / COUNT_BINS
    clipped = np.clip(flat, 1, COUNT_BINS) - 1
    enc[np.arange(flat.size), 1 + clipped] = np.where(flat > 0, 1.0, 0.0)
    return enc.reshape(counts.shape + (COUNT_ENC_WIDTH,))


def _masked_sum(encoded, mask):
    """Sum encoded incident features over the incidence axis (-2)."""
    return ad.tsum(ad.mul(encoded, mask[..., None].astype(np.float64)), axis=-2)


class BoxConditioner(Module):
    """Per-face context for bounding-box generation: boundary edge count
    plus the face's row of the canonicalized adjacency-count matrix."""

    entity_kind = "face"
    provenance = ("face_edge_counts", "fef_row")

    def __init__(self, d_cond, rng, n_f_max, k_max):
        super().__init__()
        self.n_f_max = n_f_max
        self.k_max = k_max
        self.fuse = Mlp(COUNT_ENC_WIDTH + n_f_max, d_cond, d_cond, rng)

    def features(self, ef, n_f):
        if n_f > self.n_f_max:
            raise IndexOutOfRange(f"{n_f} faces exceed the maximum {self.n_f_max}")
        fef = build_fef(ef, n_f)
        if (np.argsort(fef.row_sums(), kind="stable") != np.arange(n_f)).any():
            fef, _ = canonicalize_faces(fef)
        row_pad = np.zeros((n_f, self.n_f_max))
        row_pad[:, :n_f] = fef.counts / self.k_max
        counts = count_encoding(fef.row_sums())
        return {"x": np.concatenate([counts, row_pad], axis=-1)}

    def rows(self, feats):
        return self.fuse(Tensor(feats["x"]))

    def __call__(self, ef, n_f):
        return ConditioningEmbedding(
            rows=self.rows(self.features(ef, n_f)),
            entity_kind=self.entity_kind,
            provenance=self.provenance,
        )


class EdgeConditioner(Module):
    """Per-edge context: incident face boxes encoded and summed, joined
    with an encoding of the incidence row."""

    entity_kind = "edge"
    provenance = ("incident_face_boxes", "edge_face_incidence")

    def __init__(self, d_cond, rng):
        super().__init__()
        self.box_mlp = Mlp(6, d_cond, d_cond, rng)
        self.fuse = Mlp(d_cond + COUNT_ENC_WIDTH, d_cond, d_cond, rng)

    def features(self, ef, boxes):
        boxes = np.asarray(boxes, dtype=np.float64)
        gathered, mask = gather(ef.rows, boxes)
        counts = count_encoding(mask.sum(axis=-1))
        return {"boxes": gathered, "box_mask": mask, "inc": counts}

    def rows(self, feats):
        summed = _masked_sum(self.box_mlp(Tensor(feats["boxes"])), feats["box_mask"])
        return self.fuse(ad.concat([summed, Tensor(feats["inc"])], axis=-1))

    def __call__(self, ef, boxes):
        return ConditioningEmbedding(
            rows=self.rows(self.features(ef, boxes)),
            entity_kind=self.entity_kind,
            provenance=self.provenance,
        )


ABLATIONS = ("none", "mask_B", "mask_E")


class EvConditioner(Module):
    """Per-edge context for edge-vertex topology: summed incident-box
    encodings, the incidence encoding, and the edge's own control-point
    geometry. The ablation switch zeroes the box or edge-geometry term."""

    entity_kind = "edge"

    def __init__(self, d_cond, rng, ablation="none"):
        super().__init__()
        if ablation not in ABLATIONS:
            raise ValueError(f"ablation must be one of {ABLATIONS}")
        self.ablation = ablation
        self.box_mlp = Mlp(6, d_cond, d_cond, rng)
        self.edge_mlp = Mlp(12, d_cond, d_cond, rng)
        self.fuse = Mlp(2 * d_cond + COUNT_ENC_WIDTH, d_cond, d_cond, rng)

    @property
    def provenance(self):
        fields = ["edge_face_incidence"]
        if self.ablation != "mask_B":
            fields.insert(0, "incident_face_boxes")
        if self.ablation != "mask_E":
            fields.append("edge_control_points")
        return tuple(fields)

    def features(self, ef, boxes, edges):
        boxes = np.asarray(boxes, dtype=np.float64)
        edges = np.asarray(edges, dtype=np.float64)
        gathered, mask = gather(ef.rows, boxes)
        counts = count_encoding(mask.sum(axis=-1))
        return {"boxes": gathered, "box_mask": mask, "inc": counts, "edges": edges}

    def rows(self, feats):
        box_term = _masked_sum(self.box_mlp(Tensor(feats["boxes"])), feats["box_mask"])
        edge_term = self.edge_mlp(Tensor(feats["edges"]))
        if self.ablation == "mask_B":
            box_term = ad.mul(box_term, 0.0)
        if self.ablation == "mask_E":
            edge_term = ad.mul(edge_term, 0.0)
        return self.fuse(ad.concat([box_term, Tensor(feats["inc"]), edge_term], axis=-1))

    def __call__(self, ef, boxes, edges, ablation=None):
        if ablation is not None and ablation != self.ablation:
            raise ValueError("ablation is fixed at construction (weights are trained with it)")
        return ConditioningEmbedding(
            rows=self.rows(self.features(ef, boxes, edges)),
            entity_kind=self.entity_kind,
            provenance=self.provenance,
        )


class FaceConditioner(Module):
    """Per-face context for surface generation: summed incident edge
    geometry, the face box, and incident vertex/edge count encodings."""

    entity_kind = "face"
    provenance = ("incident_edge_geometry", "face_box", "face_vertex_counts", "face_edge_counts")

    def __init__(self, d_cond, rng):
        super().__init__()
        self.edge_mlp = Mlp(12, d_cond, d_cond, rng)
        self.box_mlp = Mlp(6, d_cond, d_cond, rng)
        self.fuse = Mlp(2 * d_cond + 2 * COUNT_ENC_WIDTH, d_cond, d_cond, rng)

    def features(self, fe, edges, boxes, fv):
        edges = np.asarray(edges, dtype=np.float64)
        boxes = np.asarray(boxes, dtype=np.float64)
        gathered, mask = gather(fe, edges)
        return {
            "edges": gathered,
            "edge_mask": mask,
            "box": boxes,
            "fv_counts": count_encoding([len(r) for r in fv]),
            "fe_counts": count_encoding([len(r) for r in fe]),
        }

    def rows(self, feats):
        edge_term = _masked_sum(self.edge_mlp(Tensor(feats["edges"])), feats["edge_mask"])
        box_term = self.box_mlp(Tensor(feats["box"]))
        return self.fuse(
            ad.concat(
                [edge_term, box_term, Tensor(feats["fv_counts"]), Tensor(feats["fe_counts"])],
                axis=-1,
            )
        )

    def __call__(self, fe, edges, boxes, fv):
        return ConditioningEmbedding(
            rows=self.rows(self.features(fe, edges, boxes, fv)),
            entity_kind=self.entity_kind,
            provenance=self.provenance,
        )


class VertexConditioner(Module):
    """Per-vertex context for position generation: summed encodings of
    incident face boxes and face control grids plus incidence counts.
    Edge geometry is deliberately never an input."""

    entity_kind = "vertex"
    provenance = ("incident_face_boxes", "incident_face_grids", "vertex_face_counts", "vertex_edge_counts")

    def __init__(self, d_cond, rng):
        super().__init__()
        self.box_mlp = Mlp(6, d_cond, d_cond, rng)
        self.face_mlp = Mlp(48, d_cond, d_cond, rng)
        self.fuse = Mlp(2 * d_cond + 2 * COUNT_ENC_WIDTH, d_cond, d_cond, rng)

    def features(self, vf, ve, boxes, faces):
        boxes = np.asarray(boxes, dtype=np.float64)
        faces = np.asarray(faces, dtype=np.float64)
        g_boxes, mask_b = gather(vf, boxes)
        g_faces, mask_f = gather(vf, faces)
        return {
            "boxes": g_boxes,
            "box_mask": mask_b,
            "faces": g_faces,
            "face_mask": mask_f,
            "vf_counts": count_encoding([len(r) for r in vf]),
            "ve_counts": count_encoding([len(r) for r in ve]),
        }

    def rows(self, feats):
        box_term = _masked_sum(self.box_mlp(Tensor(feats["boxes"])), feats["box_mask"])
        face_term = _masked_sum(self.face_mlp(Tensor(feats["faces"])), feats["face_mask"])
        return self.fuse(
            ad.concat(
                [box_term, face_term, Tensor(feats["vf_counts"]), Tensor(feats["ve_counts"])],
                axis=-1,
            )
        )

    def __call__(self, vf, ve, boxes, faces):
        return ConditioningEmbedding(
            rows=self.rows(self.features(vf, ve, boxes, faces)),
            entity_kind=self.entity_kind,
            provenance=self.provenance,
        )


def stack_features(feature_list):
    """Pad per-model feature dicts to a common entity count and stack into
    batch arrays; returns (batched, valid_mask). Gathered incidence arrays
    (ndim >= 3, and their boolean masks) are also padded along the
    incidence axis; fixed-width feature rows are not."""
    keys = feature_list[0].keys()
    batched = {}
    first = next(iter(keys))
    n_max = max(f[first].shape[0] for f in feature_list)
    for key in keys:
        arrs = [f[key] for f in feature_list]
        pad_incidence = arrs[0].ndim >= 3 or arrs[0].dtype == bool
        k_max = max(a.shape[1] for a in arrs) if (pad_incidence and arrs[0].ndim >= 2) else None
        out = []
        for a in arrs:
            pad = [(0, n_max - a.shape[0])] + [(0, 0)] * (a.ndim - 1)
            if k_max is not None:
                pad[1] = (0, k_max - a.shape[1])
            out.append(np.pad(a, pad))
        batched[key] = np.stack(out)
    valid = np.zeros((len(feature_list), n_max), dtype=bool)
    for i, f in enumerate(feature_list):
        valid[i, : f[first].shape[0]] = True
    return batched, valid
