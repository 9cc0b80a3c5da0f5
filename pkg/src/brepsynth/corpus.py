"""Synthetic parametric-solid corpus: exact B-reps of axis-aligned
cuboids, right prisms and L-brackets, plus corpus filtering and the
manifest bookkeeping. All generated coordinates live in the normalized
[-1, 1]^3 frame and are 9-digit quantized so files round-trip exactly.
"""

import json
import os
from dataclasses import dataclass, field

import numpy as np

from .brep import Aabb, BrepModel, EdgeCurve, EdgeFaceTable, EdgeVertexTable, FaceSurface
from .brepfile import ParseError, quantize_model, read_brep, write_brep
from .geometry import compute_bbox
from .topocodec import K_MAX_DEFAULT, build_fef, canonicalize_model

FAMILIES = ("cuboids", "prisms", "lbrackets", "mixed")

DROP_TOO_MANY_FACES = "TooManyFaces"
DROP_TOO_MANY_EDGES_PER_FACE = "TooManyEdgesPerFace"
DROP_PARSE_ERROR = "ParseError"
DROP_SEAM_EDGE = "SeamEdge"
DROP_SHARED_EDGE_VOCAB = "SharedEdgeCountExceedsVocab"


def line_curve(a, b):
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    return EdgeCurve(np.stack([a, a + (b - a) / 3.0, a + 2.0 * (b - a) / 3.0, b]))


def bilinear_patch(p00, p10, p01, p11):
    """Exact bicubic representation of the bilinear quad (degree
    elevation: a function affine in each parameter separately is
    reproduced by sampling the control grid uniformly)."""
    corners = [np.asarray(p, dtype=np.float64) for p in (p00, p10, p01, p11)]
    t = np.arange(4) / 3.0
    grid = np.empty((4, 4, 3))
    for i, u in enumerate(t):
        for j, v in enumerate(t):
            grid[i, j] = (
                (1 - u) * (1 - v) * corners[0]
                + u * (1 - v) * corners[1]
                + (1 - u) * v * corners[2]
                + u * v * corners[3]
            )
    return FaceSurface(grid)


def _planar_face_patch(pts):
    """Planar patch spanning the in-plane bounding rectangle of a planar
    polygon (so every boundary edge lies inside the patch)."""
    pts = np.asarray(pts, dtype=np.float64)
    origin = pts.mean(axis=0)
    centered = pts - origin
    # Newell normal, robust for any simple planar polygon
    normal = np.zeros(3)
    for i in range(len(pts)):
        a = pts[i] - origin
        b = pts[(i + 1) % len(pts)] - origin
        normal += np.cross(a, b)
    normal /= np.linalg.norm(normal)
    axis = np.zeros(3)
    axis[np.argmin(np.abs(normal))] = 1.0
    ex = np.cross(normal, axis)
    ex /= np.linalg.norm(ex)
    ey = np.cross(normal, ex)
    xs = centered @ ex
    ys = centered @ ey
    lo = np.array([xs.min(), ys.min()])
    hi = np.array([xs.max(), ys.max()])
    corner = lambda x, y: origin + x * ex + y * ey
    return bilinear_patch(
        corner(lo[0], lo[1]), corner(hi[0], lo[1]), corner(lo[0], hi[1]), corner(hi[0], hi[1])
    )


def solid_from_vertex_loops(vertices, face_loops):
    """Assemble an exact planar-faced solid from vertex coordinates and
    per-face ordered vertex loops; returns the canonicalized model."""
    vertices = np.asarray(vertices, dtype=np.float64)
    edge_ids = {}
    edge_faces = {}
    for f, loop in enumerate(face_loops):
        for i in range(len(loop)):
            pair = tuple(sorted((loop[i], loop[(i + 1) % len(loop)])))
            if pair not in edge_ids:
                edge_ids[pair] = len(edge_ids)
                edge_faces[pair] = []
            edge_faces[pair].append(f)
    ef_rows = np.zeros((len(edge_ids), 2), dtype=np.int64)
    ev_rows = np.zeros((len(edge_ids), 2), dtype=np.int64)
    curves = [None] * len(edge_ids)
    for pair, e in edge_ids.items():
        faces = edge_faces[pair]
        if len(faces) != 2:
            raise ValueError(f"edge {pair} bounds {len(faces)} faces; solid is not closed")
        ef_rows[e] = faces
        ev_rows[e] = pair
        curves[e] = line_curve(vertices[pair[0]], vertices[pair[1]])
    patches = [_planar_face_patch(vertices[list(loop)]) for loop in face_loops]
    model = BrepModel(
        vertices=vertices,
        edges=curves,
        faces=patches,
        boxes=[compute_bbox(p) for p in patches],
        ef=EdgeFaceTable(ef_rows),
        ev=EdgeVertexTable(ev_rows),
    )
    return quantize_model(canonicalize_model(model))


def make_cuboid(center=(0.0, 0.0, 0.0), extents=(1.0, 1.0, 1.0)):
    """Axis-aligned cuboid; `extents` are full side lengths."""
    c = np.asarray(center, dtype=np.float64)
    h = np.asarray(extents, dtype=np.float64) / 2.0
    corners = np.array(
        [[sx, sy, sz] for sz in (-1, 1) for sy in (-1, 1) for sx in (-1, 1)], dtype=np.float64
    )
    verts = c + corners * h
    quads = [
        [0, 1, 3, 2],  # bottom (z-)
        [4, 6, 7, 5],  # top (z+)
        [0, 2, 6, 4],  # x-
        [1, 5, 7, 3],  # x+
        [0, 4, 5, 1],  # y-
        [2, 3, 7, 6],  # y+
    ]
    return solid_from_vertex_loops(verts, quads)


def unit_cube():
    return make_cuboid(extents=(1.0, 1.0, 1.0))


def make_prism(k=3, radius=0.7, height=1.0, rotation=0.0, center=(0.0, 0.0, 0.0)):
    """Right prism over a regular k-gon (3 <= k), axis along z."""
    if k < 3:
        raise ValueError("prism base needs at least 3 vertices")
    c = np.asarray(center, dtype=np.float64)
    ang = rotation + 2.0 * np.pi * np.arange(k) / k
    base = np.stack([radius * np.cos(ang), radius * np.sin(ang), np.full(k, -height / 2)], axis=1)
    top = base + np.array([0.0, 0.0, height])
    verts = np.concatenate([base, top]) + c
    loops = [list(range(k))[::-1], [k + i for i in range(k)]]
    for i in range(k):
        j = (i + 1) % k
        loops.append([i, j, k + j, k + i])
    return solid_from_vertex_loops(verts, loops)


def make_lbracket(a=1.4, b=1.4, notch_x=0.7, notch_y=0.7, height=1.0, center=(0.0, 0.0, 0.0)):
    """L-shaped right prism: an a x b rectangle with its (+x, +y) corner
    notched away from (notch_x, notch_y) outward."""
    if not (0 < notch_x < a and 0 < notch_y < b):
        raise ValueError("notch must cut strictly inside the rectangle")
    c = np.asarray(center, dtype=np.float64)
    poly = np.array(
        [
            [0.0, 0.0],
            [a, 0.0],
            [a, notch_y],
            [notch_x, notch_y],
            [notch_x, b],
            [0.0, b],
        ]
    ) - np.array([a / 2, b / 2])
    n = len(poly)
    lower = np.concatenate([poly, np.full((n, 1), -height / 2)], axis=1)
    upper = np.concatenate([poly, np.full((n, 1), height / 2)], axis=1)
    verts = np.concatenate([lower, upper]) + c
    loops = [list(range(n))[::-1], [n + i for i in range(n)]]
    for i in range(n):
        j = (i + 1) % n
        loops.append([i, j, n + j, n + i])
    return solid_from_vertex_loops(verts, loops)


def random_solid(rng, family):
    """One random solid of the family, normalized within [-1, 1]^3."""
    if family == "mixed":
        family = FAMILIES[rng.integers(0, 3)]
    jitter = rng.uniform(-0.05, 0.05, 3)
    if family == "cuboids":
        return make_cuboid(center=jitter, extents=rng.uniform(0.3, 1.8, 3))
    if family == "prisms":
        return make_prism(
            k=int(rng.integers(3, 9)),
            radius=rng.uniform(0.3, 0.85),
            height=rng.uniform(0.5, 1.7),
            rotation=rng.uniform(0.0, 2.0 * np.pi),
            center=jitter,
        )
    if family == "lbrackets":
        a = rng.uniform(0.8, 1.7)
        b = rng.uniform(0.8, 1.7)
        return make_lbracket(
            a=a,
            b=b,
            notch_x=rng.uniform(0.3, 0.7) * a,
            notch_y=rng.uniform(0.3, 0.7) * b,
            height=rng.uniform(0.5, 1.7),
            center=jitter,
        )
    raise ValueError(f"unknown family {family!r}")


@dataclass
class CorpusManifest:
    files: list = field(default_factory=list)  # {path, n_f, max_edges_per_face, split}
    kept: int = 0
    dropped: int = 0
    drop_reasons: dict = field(default_factory=dict)

    def train_paths(self):
        return [f["path"] for f in self.files if f["split"] == "train"]

    def val_paths(self):
        return [f["path"] for f in self.files if f["split"] == "val"]

    def paths(self):
        return [f["path"] for f in self.files]

    def save(self, path):
        payload = {
            "version": 1,
            "files": self.files,
            "stats": {"kept": self.kept, "dropped": self.dropped, "drop_reasons": self.drop_reasons},
        }
        with open(path, "w", encoding="utf-8") as fh:
            json.dump(payload, fh, indent=1)

    @classmethod
    def load(cls, path):
        with open(path, "r", encoding="utf-8") as fh:
            payload = json.load(fh)
        stats = payload.get("stats", {})
        return cls(
            files=payload["files"],
            kept=stats.get("kept", len(payload["files"])),
            dropped=stats.get("dropped", 0),
            drop_reasons=stats.get("drop_reasons", {}),
        )


def _split_for_index(i):
    return "val" if i % 10 == 9 else "train"


def model_stats(m):
    fef = build_fef(m.ef, m.n_f)
    per_face = fef.row_sums()
    return {"n_f": m.n_f, "max_edges_per_face": int(per_face.max())}


def ingest_check(m, max_faces=50, max_edges_per_face=30, k_max=K_MAX_DEFAULT):
    """Filter rule plus ingestion sanity: returns a drop reason or None."""
    if (m.ef.rows[:, 0] == m.ef.rows[:, 1]).any():
        return DROP_SEAM_EDGE
    if m.n_f > max_faces:
        return DROP_TOO_MANY_FACES
    fef = build_fef(m.ef, m.n_f)
    if int(fef.row_sums().max()) > max_edges_per_face:
        return DROP_TOO_MANY_EDGES_PER_FACE
    iu = np.triu_indices(m.n_f, k=1)
    if m.n_f > 1 and int(fef.counts[iu].max()) > k_max:
        return DROP_SHARED_EDGE_VOCAB
    return None


def filter_corpus(paths, max_faces=50, max_edges_per_face=30):
    """Apply the corpus filter; parse failures are recorded, not fatal."""
    manifest = CorpusManifest()
    kept_idx = 0
    for path in sorted(str(p) for p in paths):
        try:
            m = read_brep(path)
        except (ParseError, OSError) as err:
            manifest.dropped += 1
            manifest.drop_reasons.setdefault(DROP_PARSE_ERROR, []).append(
                {"path": path, "reason": str(err)}
            )
            continue
        reason = ingest_check(m, max_faces, max_edges_per_face)
        if reason is not None:
            manifest.dropped += 1
            manifest.drop_reasons.setdefault(reason, []).append({"path": path})
            continue
        entry = {"path": path, "split": _split_for_index(kept_idx)}
        entry.update(model_stats(m))
        manifest.files.append(entry)
        manifest.kept += 1
        kept_idx += 1
    return manifest


def make_synthetic_corpus(n, family, seed, out_dir):
    """Generate n solids of the family into out_dir; returns the manifest."""
    if n < 1:
        raise ValueError("corpus size must be >= 1")
    if family not in FAMILIES:
        raise ValueError(f"family must be one of {FAMILIES}")
    os.makedirs(out_dir, exist_ok=True)
    manifest = CorpusManifest()
    rng = np.random.default_rng(seed)
    for i in range(n):
        m = random_solid(rng, family)
        path = os.path.join(out_dir, f"{family[:-1]}_{i:05d}.brep")
        write_brep(m, path)
        entry = {"path": path, "split": _split_for_index(i)}
        entry.update(model_stats(m))
        manifest.files.append(entry)
        manifest.kept += 1
    return manifest
