"""B-rep data model: geometry tensors, incidence tables, derived
incidences, Euler characteristic and the structural hash.

Conventions: a solid with N_v vertices / N_e edges / N_f faces stores
vertices as points, edges as cubic Bezier curves (4 control points),
faces as bicubic patches (4x4 control grids) plus one axis-aligned box
per face. Topology is two tables: edge->(face_a, face_b) and
edge->(vertex_a, vertex_b), each row stored with the smaller index first.
"""

import hashlib
from dataclasses import dataclass, field

import numpy as np


class IndexOutOfRange(IndexError):
    pass


def _frozen(arr, dtype=np.float64):
    out = np.array(arr, dtype=dtype)
    out.flags.writeable = False
    return out


@dataclass(frozen=True)
class EdgeCurve:
    """Cubic Bezier curve: exactly four 3D control points."""

    control_points: np.ndarray

    def __post_init__(self):
        pts = _frozen(self.control_points)
        if pts.shape != (4, 3):
            raise ValueError(f"edge curve needs 4 control points, got {pts.shape}")
        if not np.isfinite(pts).all():
            raise ValueError("non-finite edge control points")
        object.__setattr__(self, "control_points", pts)

    def flat(self):
        return self.control_points.reshape(12)


@dataclass(frozen=True)
class FaceSurface:
    """Bicubic Bezier patch: 4x4 grid of 3D control points."""

    control_grid: np.ndarray

    def __post_init__(self):
        grid = _frozen(self.control_grid)
        if grid.shape != (4, 4, 3):
            raise ValueError(f"face surface needs a 4x4 control grid, got {grid.shape}")
        if not np.isfinite(grid).all():
            raise ValueError("non-finite face control grid")
        object.__setattr__(self, "control_grid", grid)

    def flat(self):
        return self.control_grid.reshape(48)


@dataclass(frozen=True)
class Aabb:
    min: np.ndarray
    max: np.ndarray

    def __post_init__(self):
        lo = _frozen(self.min)
        hi = _frozen(self.max)
        if lo.shape != (3,) or hi.shape != (3,):
            raise ValueError("box corners must be 3D points")
        if (lo > hi).any():
            raise ValueError(f"box min {lo} exceeds max {hi}")
        object.__setattr__(self, "min", lo)
        object.__setattr__(self, "max", hi)

    @classmethod
    def of_points(cls, pts):
        pts = np.asarray(pts, dtype=np.float64).reshape(-1, 3)
        return cls(pts.min(axis=0), pts.max(axis=0))

    def flat(self):
        return np.concatenate([self.min, self.max])


class _PairTable:
    """Shared behaviour of the two incidence tables: (n, 2) integer rows,
    each row sorted ascending. Row-level distinctness is deliberately not
    enforced here — the validity checker reports it instead."""

    kind = "index"

    def __init__(self, rows):
        rows = np.array(rows, dtype=np.int64).reshape(-1, 2)
        rows = np.sort(rows, axis=1)
        rows.flags.writeable = False
        self.rows = rows

    def __len__(self):
        return self.rows.shape[0]

    def __eq__(self, other):
        return type(self) is type(other) and np.array_equal(self.rows, other.rows)

    def check_bounds(self, n):
        if len(self) and (self.rows.min() < 0 or self.rows.max() >= n):
            raise IndexOutOfRange(f"{self.kind} index out of range [0, {n})")


class EdgeFaceTable(_PairTable):
    kind = "face"


class EdgeVertexTable(_PairTable):
    kind = "vertex"


@dataclass(frozen=True)
class BrepModel:
    vertices: np.ndarray          # (n_v, 3)
    edges: tuple                  # n_e EdgeCurve
    faces: tuple                  # n_f FaceSurface
    boxes: tuple                  # n_f Aabb
    ef: EdgeFaceTable
    ev: EdgeVertexTable

    def __post_init__(self):
        verts = _frozen(self.vertices)
        if verts.ndim != 2 or verts.shape[1] != 3:
            raise ValueError(f"vertices must be (n, 3), got {verts.shape}")
        object.__setattr__(self, "vertices", verts)
        object.__setattr__(self, "edges", tuple(self.edges))
        object.__setattr__(self, "faces", tuple(self.faces))
        object.__setattr__(self, "boxes", tuple(self.boxes))
        if self.n_v < 1 or self.n_e < 1 or self.n_f < 1:
            raise ValueError("empty solid: need at least one vertex, edge and face")
        if len(self.boxes) != self.n_f:
            raise ValueError("exactly one bounding box per face required")
        if len(self.ef) != self.n_e or len(self.ev) != self.n_e:
            raise ValueError("incidence tables must have one row per edge")
        self.ef.check_bounds(self.n_f)
        self.ev.check_bounds(self.n_v)

    @property
    def n_v(self):
        return self.vertices.shape[0]

    @property
    def n_e(self):
        return len(self.edges)

    @property
    def n_f(self):
        return len(self.faces)

    def edge_tensor(self):
        return np.stack([e.flat() for e in self.edges])

    def face_tensor(self):
        return np.stack([f.flat() for f in self.faces])

    def box_tensor(self):
        return np.stack([b.flat() for b in self.boxes])


@dataclass(frozen=True)
class DerivedIncidence:
    """Face/vertex-centric views recovered from the two edge tables."""

    fe: tuple  # per face: incident edge ids
    fv: tuple  # per face: incident vertex ids
    vf: tuple  # per vertex: incident face ids
    ve: tuple  # per vertex: incident edge ids


def derive_incidence(ef, ev, n_f, n_v):
    """Invert the edge tables into per-face / per-vertex sorted id lists."""
    ef.check_bounds(n_f)
    ev.check_bounds(n_v)
    fe = [set() for _ in range(n_f)]
    fv = [set() for _ in range(n_f)]
    vf = [set() for _ in range(n_v)]
    ve = [set() for _ in range(n_v)]
    for e, (fa, fb) in enumerate(ef.rows):
        fe[fa].add(e)
        fe[fb].add(e)
        va, vb = ev.rows[e]
        for v in (va, vb):
            ve[v].add(e)
            vf[v].update((fa, fb))
            fv[fa].add(v)
            fv[fb].add(v)
    as_rows = lambda groups: tuple(tuple(sorted(g)) for g in groups)
    return DerivedIncidence(fe=as_rows(fe), fv=as_rows(fv), vf=as_rows(vf), ve=as_rows(ve))


def face_edge_lists(ef, n_f):
    """Per-face edge id lists with multiplicity, in edge-id order."""
    fe = [[] for _ in range(n_f)]
    for e, (fa, fb) in enumerate(ef.rows):
        fe[fa].append(e)
        if fb != fa:
            fe[fb].append(e)
    return fe


def euler_characteristic(m):
    return m.n_v - m.n_e + m.n_f


def hash_brep(m, precision=4):
    """Deterministic digest of topology plus rounded coordinates.

    Stored entity order matters by design: relabelled models hash
    differently. Rounding makes coordinate noise below 10^-precision
    invisible to the digest.
    """

    def rounded(arr):
        # adding 0.0 normalizes -0.0 so near-zero values hash stably
        return (np.round(np.asarray(arr, dtype=np.float64), precision) + 0.0).tobytes()

    h = hashlib.sha256()
    h.update(b"counts")
    h.update(np.array([m.n_v, m.n_e, m.n_f], dtype=np.int64).tobytes())
    h.update(b"EF")
    h.update(m.ef.rows.tobytes())
    h.update(b"EV")
    h.update(m.ev.rows.tobytes())
    h.update(b"V")
    h.update(rounded(m.vertices))
    h.update(b"E")
    h.update(rounded(m.edge_tensor()))
    h.update(b"F")
    h.update(rounded(m.face_tensor()))
    h.update(b"B")
    h.update(rounded(m.box_tensor()))
    return h.hexdigest()
