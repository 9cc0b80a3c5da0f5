"""Pure-numpy implementations of the hot geometry kernels.

Same signatures/semantics as the compiled extension in ``_kernels.pyx``;
``brepsynth.kernels`` picks one of the two at import time.
"""

import numpy as np

_CHUNK = 512


def nn_sqdist(a, b):
    """Nearest-neighbour squared distances between two point sets.

    Returns (amin, bmin): for every row of `a` the squared distance to its
    nearest row of `b`, and vice versa. Computed via the GEMM expansion
    |x-y|^2 = |x|^2 + |y|^2 - 2 x.y, chunked to bound memory.
    """
    a = np.ascontiguousarray(a, dtype=np.float64)
    b = np.ascontiguousarray(b, dtype=np.float64)
    na, nb = a.shape[0], b.shape[0]
    a2 = (a * a).sum(axis=1)
    b2 = (b * b).sum(axis=1)
    amin = np.full(na, np.inf)
    bmin = np.full(nb, np.inf)
    for s in range(0, na, _CHUNK):
        e = min(s + _CHUNK, na)
        d2 = a2[s:e, None] + b2[None, :] - 2.0 * (a[s:e] @ b.T)
        np.maximum(d2, 0.0, out=d2)
        amin[s:e] = d2.min(axis=1)
        np.minimum(bmin, d2.min(axis=0), out=bmin)
    return amin, bmin


def _bernstein3(t):
    t = np.asarray(t, dtype=np.float64)
    s = 1.0 - t
    return np.stack([s * s * s, 3.0 * t * s * s, 3.0 * t * t * s, t * t * t], axis=-1)


def _bernstein3_d1(t):
    t = np.asarray(t, dtype=np.float64)
    s = 1.0 - t
    return np.stack(
        [-3.0 * s * s, 3.0 * s * s - 6.0 * t * s, 6.0 * t * s - 3.0 * t * t, 3.0 * t * t],
        axis=-1,
    )


def _bernstein3_d2(t):
    t = np.asarray(t, dtype=np.float64)
    s = 1.0 - t
    return np.stack(
        [6.0 * s, -12.0 * s + 6.0 * t, 6.0 * s - 12.0 * t, 6.0 * t], axis=-1
    )


def cubic_points(ctrl, ts):
    """Evaluate cubic Bezier curves at parameters `ts`.

    ctrl: (n, 4, 3) control points, ts: (k,) -> (n, k, 3).
    """
    ctrl = np.asarray(ctrl, dtype=np.float64)
    basis = _bernstein3(ts)  # (k, 4)
    return np.einsum("kb,nbc->nkc", basis, ctrl)


def bicubic_eval(ctrl, us, vs):
    """Evaluate one bicubic Bezier patch at paired parameters.

    ctrl: (4, 4, 3), us/vs: (k,) -> (k, 3). Row index of the control grid
    follows u, column index follows v.
    """
    ctrl = np.asarray(ctrl, dtype=np.float64)
    bu = _bernstein3(us)
    bv = _bernstein3(vs)
    return np.einsum("ki,kj,ijc->kc", bu, bv, ctrl)


def bicubic_full(ctrl, us, vs):
    """Patch point plus first/second parametric derivatives.

    Returns (S, Su, Sv, Suu, Suv, Svv), each (k, 3).
    """
    ctrl = np.asarray(ctrl, dtype=np.float64)
    bu, bu1, bu2 = _bernstein3(us), _bernstein3_d1(us), _bernstein3_d2(us)
    bv, bv1, bv2 = _bernstein3(vs), _bernstein3_d1(vs), _bernstein3_d2(vs)

    def term(a, b):
        return np.einsum("ki,kj,ijc->kc", a, b, ctrl)

    return (
        term(bu, bv),
        term(bu1, bv),
        term(bu, bv1),
        term(bu2, bv),
        term(bu1, bv1),
        term(bu, bv2),
    )


def _point_tri_sqdist(p, a, b, c):
    """Squared distance from point `p` to triangles (a, b, c), each (t, 3)."""
    ab = b - a
    ac = c - a
    ap = p[None, :] - a
    d1 = (ab * ap).sum(axis=1)
    d2 = (ac * ap).sum(axis=1)
    bp = p[None, :] - b
    d3 = (ab * bp).sum(axis=1)
    d4 = (ac * bp).sum(axis=1)
    cp = p[None, :] - c
    d5 = (ab * cp).sum(axis=1)
    d6 = (ac * cp).sum(axis=1)

    vc = d1 * d4 - d3 * d2
    vb = d5 * d2 - d1 * d6
    va = d3 * d6 - d5 * d4

    out = np.empty(a.shape[0])
    done = np.zeros(a.shape[0], dtype=bool)

    def settle(mask, closest):
        sel = mask & ~done
        if sel.any():
            diff = p[None, :] - closest[sel]
            out[sel] = (diff * diff).sum(axis=1)
            done[sel] = True

    settle((d1 <= 0) & (d2 <= 0), a)
    settle((d3 >= 0) & (d4 <= d3), b)
    with np.errstate(divide="ignore", invalid="ignore"):
        v_ab = np.where(d1 - d3 != 0, d1 / (d1 - d3), 0.0)
        settle((vc <= 0) & (d1 >= 0) & (d3 <= 0), a + v_ab[:, None] * ab)
        settle((d6 >= 0) & (d5 <= d6), c)
        w_ac = np.where(d2 - d6 != 0, d2 / (d2 - d6), 0.0)
        settle((vb <= 0) & (d2 >= 0) & (d6 <= 0), a + w_ac[:, None] * ac)
        den_bc = (d4 - d3) + (d5 - d6)
        w_bc = np.where(den_bc != 0, (d4 - d3) / den_bc, 0.0)
        settle(
            (va <= 0) & (d4 - d3 >= 0) & (d5 - d6 >= 0),
            b + w_bc[:, None] * (c - b),
        )
        denom = va + vb + vc
        denom = np.where(denom != 0, denom, 1.0)
        settle(np.ones_like(done), a + (vb / denom)[:, None] * ab + (vc / denom)[:, None] * ac)
    return out


def grid_gap_dist(pts, grid):
    """Distance from query points to a sampled surface grid.

    For each point: locate the nearest grid sample, then take the exact
    minimum distance over the triangulated quads in the surrounding 3x3
    sample window. grid: (g, g, 3), pts: (k, 3) -> (k,) distances.
    """
    pts = np.asarray(pts, dtype=np.float64)
    grid = np.asarray(grid, dtype=np.float64)
    g = grid.shape[0]
    flat = grid.reshape(-1, 3)
    d2 = ((pts[:, None, :] - flat[None, :, :]) ** 2).sum(axis=2)
    nearest = d2.argmin(axis=1)
    if g < 2:
        return np.sqrt(d2[np.arange(pts.shape[0]), nearest])
    out = np.empty(pts.shape[0])
    for n, p in enumerate(pts):
        i, j = divmod(int(nearest[n]), g)
        i0, i1 = max(i - 1, 0), min(i + 1, g - 2)
        j0, j1 = max(j - 1, 0), min(j + 1, g - 2)
        tri_a, tri_b, tri_c = [], [], []
        for qi in range(i0, i1 + 1):
            for qj in range(j0, j1 + 1):
                p00 = grid[qi, qj]
                p10 = grid[qi + 1, qj]
                p01 = grid[qi, qj + 1]
                p11 = grid[qi + 1, qj + 1]
                tri_a += [p00, p10]
                tri_b += [p10, p11]
                tri_c += [p01, p01]
        best = _point_tri_sqdist(p, np.array(tri_a), np.array(tri_b), np.array(tri_c)).min()
        out[n] = np.sqrt(min(best, d2[n, nearest[n]]))
    return out
