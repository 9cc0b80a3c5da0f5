"""Topological and geometric validity checking.

Checks run in tiers so one corruption reports its own code rather than a
cascade: (1) per-edge structure, (2) boundary loops / wireframe
connectivity / Euler count, (3) geometric gaps. A later tier only runs
when the earlier ones pass.

The geometric tier approximates a CAD kernel's sewing tolerance: curve
endpoints must sit on their vertices within `tol`, and sampled curve
points must sit within `tol` of both incident surfaces, measured against
a triangulated 32x32 sample grid of each patch.
"""

from dataclasses import dataclass

import numpy as np

from . import kernels
from .brep import face_edge_lists
from .topocodec import OpenLoopError, chain_loops

NON_MANIFOLD_EDGE = "NonManifoldEdge"
DEGENERATE_EDGE_ENDPOINTS = "DegenerateEdgeEndpoints"
OPEN_LOOP = "OpenLoop"
DISCONNECTED_WIREFRAME = "DisconnectedWireframe"
GAP_EDGE_VERTEX = "GeometricGapEdgeVertex"
GAP_EDGE_FACE = "GeometricGapEdgeFace"
EULER_MISMATCH = "EulerMismatch"

CURVE_SAMPLES = 16
SURFACE_GRID = 32
DEFAULT_TOL = 1e-3


@dataclass(frozen=True)
class ValidityReport:
    violations: tuple  # (code, entity_index, message)
    warnings: tuple = ()

    @property
    def is_valid(self):
        return not self.violations

    def codes(self):
        return {code for code, _, _ in self.violations}

    def summary(self):
        if self.is_valid:
            return "valid"
        return ";".join(f"{code}@{idx}" for code, idx, _ in self.violations)


def _edge_structure_violations(m, tol):
    out = []
    for e, (fa, fb) in enumerate(m.ef.rows):
        if fa == fb:
            out.append((NON_MANIFOLD_EDGE, e, f"edge {e} bounds face {fa} on both sides"))
    for e, (va, vb) in enumerate(m.ev.rows):
        if va == vb or np.linalg.norm(m.vertices[va] - m.vertices[vb]) <= tol:
            out.append(
                (DEGENERATE_EDGE_ENDPOINTS, e, f"edge {e} endpoints {va},{vb} coincide")
            )
    return out


def _loop_violations(m):
    out = []
    fe = face_edge_lists(m.ef, m.n_f)
    loops_per_face = []
    for f in range(m.n_f):
        try:
            loops_per_face.append(len(chain_loops(fe[f], m.ev.rows)))
        except OpenLoopError as err:
            loops_per_face.append(0)
            code = NON_MANIFOLD_EDGE if err.kind == "degree" else OPEN_LOOP
            out.append((code, f, f"face {f}: {err}"))
    return out, loops_per_face


def _wireframe_components(m):
    parent = list(range(m.n_v))

    def find(x):
        while parent[x] != x:
            parent[x] = parent[parent[x]]
            x = parent[x]
        return x

    for va, vb in m.ev.rows:
        ra, rb = find(int(va)), find(int(vb))
        if ra != rb:
            parent[rb] = ra
    roots = {}
    for v in range(m.n_v):
        roots.setdefault(find(v), []).append(v)
    return list(roots.values())


def check_validity(m, tol=DEFAULT_TOL):
    """Validity report for a structurally well-formed model."""
    violations = _edge_structure_violations(m, tol)
    if violations:
        return ValidityReport(tuple(violations))

    violations, _ = _loop_violations(m)
    warnings = []
    components = _wireframe_components(m)
    if len(components) > 1:
        extra = sorted(components, key=min)[1]
        violations.append(
            (DISCONNECTED_WIREFRAME, min(extra), f"wireframe splits into {len(components)} components")
        )
    else:
        chi = m.n_v - m.n_e + m.n_f
        if chi != 2:
            if not violations and chi < 2 and chi % 2 == 0:
                # connected, clean loops, even deficit: a handle-bearing
                # shell rather than a broken one — warn, don't reject
                warnings.append(f"Euler count {chi} suggests genus {(2 - chi) // 2}")
            else:
                violations.append(
                    (EULER_MISMATCH, -1, f"V - E + F = {chi}, expected 2")
                )
    if violations:
        return ValidityReport(tuple(violations), tuple(warnings))

    ts = np.linspace(0.0, 1.0, CURVE_SAMPLES)
    grids = {}
    for e in range(m.n_e):
        curve = m.edges[e]
        va, vb = (int(x) for x in m.ev.rows[e])
        p0, p3 = curve.control_points[0], curve.control_points[3]
        direct = max(np.linalg.norm(p0 - m.vertices[va]), np.linalg.norm(p3 - m.vertices[vb]))
        swapped = max(np.linalg.norm(p0 - m.vertices[vb]), np.linalg.norm(p3 - m.vertices[va]))
        gap = min(direct, swapped)
        if gap > tol:
            violations.append(
                (GAP_EDGE_VERTEX, e, f"edge {e} endpoint misses its vertex by {gap:.2e}")
            )
            continue
        pts = kernels.cubic_points(curve.control_points[None], ts)[0]
        for f in (int(x) for x in m.ef.rows[e]):
            if f not in grids:
                grids[f] = _face_grid(m.faces[f])
            dist = kernels.grid_gap_dist(pts, grids[f]).max()
            if dist > tol:
                violations.append(
                    (GAP_EDGE_FACE, e, f"edge {e} strays {dist:.2e} from face {f}")
                )
    return ValidityReport(tuple(violations), tuple(warnings))


def _face_grid(surface):
    t = np.linspace(0.0, 1.0, SURFACE_GRID)
    uu, vv = np.meshgrid(t, t, indexing="ij")
    pts = kernels.bicubic_eval(surface.control_grid, uu.ravel(), vv.ravel())
    return pts.reshape(SURFACE_GRID, SURFACE_GRID, 3)


def count_boundary_loops(m):
    """Total boundary loops over all faces (0 contribution for faces whose
    boundary fails to chain)."""
    fe = face_edge_lists(m.ef, m.n_f)
    total = 0
    for f in range(m.n_f):
        try:
            total += len(chain_loops(fe[f], m.ev.rows))
        except OpenLoopError:
            continue
    return total
