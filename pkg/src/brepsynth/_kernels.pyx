# Compiled twins of the hot loops in _kernels_np.py. Keep semantics in
# lockstep with that module; tests/test_kernels.py asserts parity.

import numpy as np

cimport numpy as cnp
from libc.math cimport sqrt

cnp.import_array()


def nn_sqdist(a_in, b_in):
    cdef cnp.ndarray[cnp.float64_t, ndim=2] a = np.ascontiguousarray(a_in, dtype=np.float64)
    cdef cnp.ndarray[cnp.float64_t, ndim=2] b = np.ascontiguousarray(b_in, dtype=np.float64)
    cdef Py_ssize_t na = a.shape[0], nb = b.shape[0]
    cdef cnp.ndarray[cnp.float64_t, ndim=1] amin = np.full(na, np.inf)
    cdef cnp.ndarray[cnp.float64_t, ndim=1] bmin = np.full(nb, np.inf)
    cdef Py_ssize_t i, j
    cdef double dx, dy, dz, d2
    for i in range(na):
        for j in range(nb):
            dx = a[i, 0] - b[j, 0]
            dy = a[i, 1] - b[j, 1]
            dz = a[i, 2] - b[j, 2]
            d2 = dx * dx + dy * dy + dz * dz
            if d2 < amin[i]:
                amin[i] = d2
            if d2 < bmin[j]:
                bmin[j] = d2
    return amin, bmin


cdef inline void _basis3(double t, double* out) nogil:
    cdef double s = 1.0 - t
    out[0] = s * s * s
    out[1] = 3.0 * t * s * s
    out[2] = 3.0 * t * t * s
    out[3] = t * t * t


cdef inline void _basis3_d1(double t, double* out) nogil:
    cdef double s = 1.0 - t
    out[0] = -3.0 * s * s
    out[1] = 3.0 * s * s - 6.0 * t * s
    out[2] = 6.0 * t * s - 3.0 * t * t
    out[3] = 3.0 * t * t


cdef inline void _basis3_d2(double t, double* out) nogil:
    cdef double s = 1.0 - t
    out[0] = 6.0 * s
    out[1] = -12.0 * s + 6.0 * t
    out[2] = 6.0 * s - 12.0 * t
    out[3] = 6.0 * t


def cubic_points(ctrl_in, ts_in):
    cdef cnp.ndarray[cnp.float64_t, ndim=3] ctrl = np.ascontiguousarray(ctrl_in, dtype=np.float64)
    cdef cnp.ndarray[cnp.float64_t, ndim=1] ts = np.ascontiguousarray(ts_in, dtype=np.float64)
    cdef Py_ssize_t n = ctrl.shape[0], k = ts.shape[0]
    cdef cnp.ndarray[cnp.float64_t, ndim=3] out = np.zeros((n, k, 3))
    cdef double basis[4]
    cdef Py_ssize_t e, i, p, c
    for i in range(k):
        _basis3(ts[i], basis)
        for e in range(n):
            for c in range(3):
                for p in range(4):
                    out[e, i, c] += basis[p] * ctrl[e, p, c]
    return out


def bicubic_eval(ctrl_in, us_in, vs_in):
    cdef cnp.ndarray[cnp.float64_t, ndim=3] ctrl = np.ascontiguousarray(ctrl_in, dtype=np.float64)
    cdef cnp.ndarray[cnp.float64_t, ndim=1] us = np.ascontiguousarray(us_in, dtype=np.float64)
    cdef cnp.ndarray[cnp.float64_t, ndim=1] vs = np.ascontiguousarray(vs_in, dtype=np.float64)
    cdef Py_ssize_t k = us.shape[0]
    cdef cnp.ndarray[cnp.float64_t, ndim=2] out = np.zeros((k, 3))
    cdef double bu[4]
    cdef double bv[4]
    cdef Py_ssize_t n, i, j, c
    cdef double w
    for n in range(k):
        _basis3(us[n], bu)
        _basis3(vs[n], bv)
        for i in range(4):
            for j in range(4):
                w = bu[i] * bv[j]
                for c in range(3):
                    out[n, c] += w * ctrl[i, j, c]
    return out


def bicubic_full(ctrl_in, us_in, vs_in):
    cdef cnp.ndarray[cnp.float64_t, ndim=3] ctrl = np.ascontiguousarray(ctrl_in, dtype=np.float64)
    cdef cnp.ndarray[cnp.float64_t, ndim=1] us = np.ascontiguousarray(us_in, dtype=np.float64)
    cdef cnp.ndarray[cnp.float64_t, ndim=1] vs = np.ascontiguousarray(vs_in, dtype=np.float64)
    cdef Py_ssize_t k = us.shape[0]
    cdef cnp.ndarray[cnp.float64_t, ndim=3] out = np.zeros((6, k, 3))
    cdef double bu[4]
    cdef double bu1[4]
    cdef double bu2[4]
    cdef double bv[4]
    cdef double bv1[4]
    cdef double bv2[4]
    cdef Py_ssize_t n, i, j, c
    cdef double pc
    for n in range(k):
        _basis3(us[n], bu)
        _basis3_d1(us[n], bu1)
        _basis3_d2(us[n], bu2)
        _basis3(vs[n], bv)
        _basis3_d1(vs[n], bv1)
        _basis3_d2(vs[n], bv2)
        for i in range(4):
            for j in range(4):
                for c in range(3):
                    pc = ctrl[i, j, c]
                    out[0, n, c] += bu[i] * bv[j] * pc
                    out[1, n, c] += bu1[i] * bv[j] * pc
                    out[2, n, c] += bu[i] * bv1[j] * pc
                    out[3, n, c] += bu2[i] * bv[j] * pc
                    out[4, n, c] += bu1[i] * bv1[j] * pc
                    out[5, n, c] += bu[i] * bv2[j] * pc
    return out[0], out[1], out[2], out[3], out[4], out[5]


cdef double _pt_tri_sq(double px, double py, double pz,
                       double* a, double* b, double* c) nogil:
    cdef double abx = b[0] - a[0], aby = b[1] - a[1], abz = b[2] - a[2]
    cdef double acx = c[0] - a[0], acy = c[1] - a[1], acz = c[2] - a[2]
    cdef double apx = px - a[0], apy = py - a[1], apz = pz - a[2]
    cdef double d1 = abx * apx + aby * apy + abz * apz
    cdef double d2 = acx * apx + acy * apy + acz * apz
    cdef double qx, qy, qz, v, w, den
    if d1 <= 0.0 and d2 <= 0.0:
        return apx * apx + apy * apy + apz * apz
    cdef double bpx = px - b[0], bpy = py - b[1], bpz = pz - b[2]
    cdef double d3 = abx * bpx + aby * bpy + abz * bpz
    cdef double d4 = acx * bpx + acy * bpy + acz * bpz
    if d3 >= 0.0 and d4 <= d3:
        return bpx * bpx + bpy * bpy + bpz * bpz
    cdef double vc = d1 * d4 - d3 * d2
    if vc <= 0.0 and d1 >= 0.0 and d3 <= 0.0:
        v = d1 / (d1 - d3)
        qx = apx - v * abx
        qy = apy - v * aby
        qz = apz - v * abz
        return qx * qx + qy * qy + qz * qz
    cdef double cpx = px - c[0], cpy = py - c[1], cpz = pz - c[2]
    cdef double d5 = abx * cpx + aby * cpy + abz * cpz
    cdef double d6 = acx * cpx + acy * cpy + acz * cpz
    if d6 >= 0.0 and d5 <= d6:
        return cpx * cpx + cpy * cpy + cpz * cpz
    cdef double vb = d5 * d2 - d1 * d6
    if vb <= 0.0 and d2 >= 0.0 and d6 <= 0.0:
        w = d2 / (d2 - d6)
        qx = apx - w * acx
        qy = apy - w * acy
        qz = apz - w * acz
        return qx * qx + qy * qy + qz * qz
    cdef double va = d3 * d6 - d5 * d4
    if va <= 0.0 and d4 - d3 >= 0.0 and d5 - d6 >= 0.0:
        w = (d4 - d3) / ((d4 - d3) + (d5 - d6))
        qx = px - (b[0] + w * (c[0] - b[0]))
        qy = py - (b[1] + w * (c[1] - b[1]))
        qz = pz - (b[2] + w * (c[2] - b[2]))
        return qx * qx + qy * qy + qz * qz
    den = va + vb + vc
    if den == 0.0:
        den = 1.0
    v = vb / den
    w = vc / den
    qx = px - (a[0] + v * abx + w * acx)
    qy = py - (a[1] + v * aby + w * acy)
    qz = pz - (a[2] + v * abz + w * acz)
    return qx * qx + qy * qy + qz * qz


def grid_gap_dist(pts_in, grid_in):
    cdef cnp.ndarray[cnp.float64_t, ndim=2] pts = np.ascontiguousarray(pts_in, dtype=np.float64)
    cdef cnp.ndarray[cnp.float64_t, ndim=3] grid = np.ascontiguousarray(grid_in, dtype=np.float64)
    cdef Py_ssize_t k = pts.shape[0], g = grid.shape[0]
    cdef cnp.ndarray[cnp.float64_t, ndim=1] out = np.empty(k)
    cdef Py_ssize_t n, i, j, bi, bj, qi, qj
    cdef double best, d2, dx, dy, dz, px, py, pz
    cdef double tri0[3]
    cdef double tri1[3]
    cdef double tri2[3]
    cdef Py_ssize_t i0, i1, j0, j1, t
    for n in range(k):
        px = pts[n, 0]
        py = pts[n, 1]
        pz = pts[n, 2]
        best = 1e300
        bi = 0
        bj = 0
        for i in range(g):
            for j in range(g):
                dx = px - grid[i, j, 0]
                dy = py - grid[i, j, 1]
                dz = pz - grid[i, j, 2]
                d2 = dx * dx + dy * dy + dz * dz
                if d2 < best:
                    best = d2
                    bi = i
                    bj = j
        if g >= 2:
            i0 = bi - 1 if bi - 1 > 0 else 0
            i1 = bi + 1 if bi + 1 < g - 2 else g - 2
            j0 = bj - 1 if bj - 1 > 0 else 0
            j1 = bj + 1 if bj + 1 < g - 2 else g - 2
            for qi in range(i0, i1 + 1):
                for qj in range(j0, j1 + 1):
                    for t in range(2):
                        if t == 0:
                            tri0[0] = grid[qi, qj, 0]; tri0[1] = grid[qi, qj, 1]; tri0[2] = grid[qi, qj, 2]
                            tri1[0] = grid[qi + 1, qj, 0]; tri1[1] = grid[qi + 1, qj, 1]; tri1[2] = grid[qi + 1, qj, 2]
                        else:
                            tri0[0] = grid[qi + 1, qj, 0]; tri0[1] = grid[qi + 1, qj, 1]; tri0[2] = grid[qi + 1, qj, 2]
                            tri1[0] = grid[qi + 1, qj + 1, 0]; tri1[1] = grid[qi + 1, qj + 1, 1]; tri1[2] = grid[qi + 1, qj + 1, 2]
                        tri2[0] = grid[qi, qj + 1, 0]; tri2[1] = grid[qi, qj + 1, 1]; tri2[2] = grid[qi, qj + 1, 2]
                        d2 = _pt_tri_sq(px, py, pz, tri0, tri1, tri2)
                        if d2 < best:
                            best = d2
        out[n] = sqrt(best)
    return out
