"""Evaluation metric suite.

Distribution metrics compare point clouds sampled from generated and
reference solids (matching distance, coverage, grid-occupancy JSD);
CAD metrics score validity, uniqueness and novelty via the structural
hash; complexity metrics summarize wireframe cycles, surface curvature
and boundary loops.
"""

from dataclasses import dataclass

import numpy as np

from .brep import hash_brep
from .config import GAP_TOL_DEFAULT, HASH_PRECISION_DEFAULT, JSD_GRID_DEFAULT
from .geometry import EmptySet, chamfer_distance, eval_surface, DegenerateSurface
from .validity import check_validity, count_boundary_loops


@dataclass(frozen=True)
class MetricReport:
    mmd_cd: float
    cov_cd: float
    jsd: float
    valid: float
    unique: float
    novel: float
    cc: float
    mc: float
    loops: float

    def as_dict(self):
        return {
            "mmd_cd": self.mmd_cd,
            "cov_cd": self.cov_cd,
            "jsd": self.jsd,
            "valid": self.valid,
            "unique": self.unique,
            "novel": self.novel,
            "cc": self.cc,
            "mc": self.mc,
            "loops": self.loops,
        }

    def text_block(self):
        return "\n".join(f"{k}: {v:.6g}" for k, v in self.as_dict().items()) + "\n"


def mmd_cd(gen_clouds, ref_clouds):
    """Mean over references of the Chamfer distance to the closest
    generated cloud."""
    if not gen_clouds or not ref_clouds:
        raise EmptySet("need nonempty generated and reference sets")
    best = [min(chamfer_distance(g, r) for g in gen_clouds) for r in ref_clouds]
    return float(np.mean(best))


def cov_cd(gen_clouds, ref_clouds):
    """Fraction of references that are the Chamfer nearest neighbour of
    at least one generated cloud."""
    if not gen_clouds or not ref_clouds:
        raise EmptySet("need nonempty generated and reference sets")
    covered = set()
    for g in gen_clouds:
        dists = [chamfer_distance(g, r) for r in ref_clouds]
        covered.add(int(np.argmin(dists)))
    return len(covered) / len(ref_clouds)


def jsd_grid(gen_clouds, ref_clouds, grid_n=JSD_GRID_DEFAULT):
    """Jensen-Shannon divergence (nats) between pooled occupancy
    histograms on a grid_n^3 lattice over [-1, 1]^3; out-of-range points
    clamp to boundary cells."""

    def histogram(clouds):
        if not clouds:
            raise EmptySet("empty cloud list")
        pts = np.concatenate([np.asarray(c).reshape(-1, 3) for c in clouds])
        cells = np.clip(((pts + 1.0) / 2.0 * grid_n).astype(np.int64), 0, grid_n - 1)
        flat = (cells[:, 0] * grid_n + cells[:, 1]) * grid_n + cells[:, 2]
        h = np.bincount(flat, minlength=grid_n**3).astype(np.float64)
        return h / h.sum()

    p = histogram(gen_clouds)
    q = histogram(ref_clouds)
    m = 0.5 * (p + q)

    def kl(a, b):
        mask = a > 0
        return float((a[mask] * np.log(a[mask] / b[mask])).sum())

    return 0.5 * kl(p, m) + 0.5 * kl(q, m)


def cyclomatic_complexity(m):
    """Cycle rank E - V + C of the vertex-edge multigraph."""
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
    components = len({find(v) for v in range(m.n_v)})
    return m.n_e - m.n_v + components


def mean_curvature_metric(m, samples_per_face=16):
    """Mean |H| over a samples_per_face^2 parameter grid on every face;
    degenerate samples are skipped (an all-degenerate model scores 0)."""
    t = (np.arange(samples_per_face) + 0.5) / samples_per_face
    vals = []
    for face in m.faces:
        for u in t:
            for v in t:
                try:
                    vals.append(abs(eval_surface(face, u, v).mean_curvature))
                except DegenerateSurface:
                    continue
    return float(np.mean(vals)) if vals else 0.0


def boundary_loops_metric(m):
    return float(count_boundary_loops(m))


def valid_unique_novel(gen_models, train_digests, tol=GAP_TOL_DEFAULT, precision=HASH_PRECISION_DEFAULT):
    """(valid, unique, novel) fractions over the generated set."""
    if not gen_models:
        return 0.0, 0.0, 0.0
    digests = [hash_brep(m, precision) for m in gen_models]
    counts = {}
    for d in digests:
        counts[d] = counts.get(d, 0) + 1
    valid = np.mean([check_validity(m, tol).is_valid for m in gen_models])
    unique = np.mean([counts[d] == 1 for d in digests])
    novel = np.mean([d not in train_digests for d in digests])
    return float(valid), float(unique), float(novel)
