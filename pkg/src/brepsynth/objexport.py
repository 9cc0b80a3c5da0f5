"""Wavefront OBJ export: each face tessellated on a tess_n x tess_n
parameter grid and triangulated, with vertices deduplicated within 1e-6.
Visual inspection only; not an exchange-grade sewing."""

import numpy as np

from .geometry import surface_grid

DEDUP_DECIMALS = 6


def tessellate(m, tess_n=16):
    """(vertices (n, 3), triangles (t, 3) int) for the whole solid."""
    verts = []
    seen = {}
    tris = []

    def vid(p):
        key = tuple(np.round(p, DEDUP_DECIMALS) + 0.0)
        if key not in seen:
            seen[key] = len(verts)
            verts.append(np.asarray(p, dtype=np.float64))
        return seen[key]

    for face in m.faces:
        grid = surface_grid(face, tess_n)
        ids = np.empty((tess_n, tess_n), dtype=np.int64)
        for i in range(tess_n):
            for j in range(tess_n):
                ids[i, j] = vid(grid[i, j])
        for i in range(tess_n - 1):
            for j in range(tess_n - 1):
                a, b, c, d = ids[i, j], ids[i + 1, j], ids[i, j + 1], ids[i + 1, j + 1]
                tris.append((a, b, c))
                tris.append((b, d, c))
    return np.stack(verts), np.array(tris, dtype=np.int64)


def export_obj(m, path, tess_n=16):
    if tess_n < 2:
        raise ValueError("tessellation needs at least 2 samples per axis")
    verts, tris = tessellate(m, tess_n)
    try:
        with open(path, "w", encoding="ascii") as fh:
            fh.write(f"# brepsynth export: {m.n_f} faces, tess {tess_n}\n")
            for v in verts:
                fh.write(f"v {v[0]:.9g} {v[1]:.9g} {v[2]:.9g}\n")
            for a, b, c in tris:
                fh.write(f"f {a + 1} {b + 1} {c + 1}\n")
    except OSError as err:
        raise IOError(f"cannot write {path}: {err}") from err
