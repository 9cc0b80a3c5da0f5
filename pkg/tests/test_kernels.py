"""Backend parity (compiled vs numpy) and correctness oracles for the
hot geometry kernels."""

import numpy as np
import pytest

from brepsynth import kernels
from brepsynth.kernels import numpy_backend


def _impl_pairs():
    if not kernels.USING_EXT:
        pytest.skip("compiled extension not built")
    from brepsynth import _kernels as ext

    return ext, numpy_backend


def test_nn_sqdist_matches_bruteforce():
    rng = np.random.default_rng(0)
    a = rng.normal(size=(37, 3))
    b = rng.normal(size=(53, 3))
    amin, bmin = kernels.nn_sqdist(a, b)
    d2 = ((a[:, None, :] - b[None, :, :]) ** 2).sum(axis=2)
    assert np.allclose(amin, d2.min(axis=1))
    assert np.allclose(bmin, d2.min(axis=0))


def test_backend_parity_nn_sqdist():
    ext, ref = _impl_pairs()
    rng = np.random.default_rng(1)
    a = rng.normal(size=(200, 3))
    b = rng.normal(size=(150, 3))
    ea, eb = ext.nn_sqdist(a, b)
    na, nb = ref.nn_sqdist(a, b)
    assert np.allclose(ea, na, atol=1e-12)
    assert np.allclose(eb, nb, atol=1e-12)


def test_backend_parity_curve_and_surface():
    ext, ref = _impl_pairs()
    rng = np.random.default_rng(2)
    ctrl_c = rng.normal(size=(5, 4, 3))
    ts = rng.random(17)
    assert np.allclose(ext.cubic_points(ctrl_c, ts), ref.cubic_points(ctrl_c, ts), atol=1e-12)
    ctrl_s = rng.normal(size=(4, 4, 3))
    us, vs = rng.random(40), rng.random(40)
    assert np.allclose(ext.bicubic_eval(ctrl_s, us, vs), ref.bicubic_eval(ctrl_s, us, vs), atol=1e-12)
    for e_arr, n_arr in zip(ext.bicubic_full(ctrl_s, us, vs), ref.bicubic_full(ctrl_s, us, vs)):
        assert np.allclose(e_arr, n_arr, atol=1e-12)


def test_backend_parity_grid_gap():
    ext, ref = _impl_pairs()
    rng = np.random.default_rng(3)
    grid = rng.normal(size=(12, 12, 3))
    pts = rng.normal(size=(25, 3))
    assert np.allclose(ext.grid_gap_dist(pts, grid), ref.grid_gap_dist(pts, grid), atol=1e-12)


def test_cubic_points_affine_precision():
    # control points on a line: curve is that line, arc-length uniform
    ctrl = np.array([[[0, 0, 0], [1, 0, 0], [2, 0, 0], [3, 0, 0]]], dtype=float)
    ts = np.linspace(0, 1, 7)
    pts = kernels.cubic_points(ctrl, ts)[0]
    assert np.allclose(pts[:, 0], 3 * ts)
    assert np.allclose(pts[:, 1:], 0)


def test_grid_gap_zero_for_points_on_planar_grid():
    t = np.linspace(0, 1, 16)
    uu, vv = np.meshgrid(t, t, indexing="ij")
    grid = np.stack([uu, vv, np.zeros_like(uu)], axis=-1)
    rng = np.random.default_rng(4)
    pts = np.column_stack([rng.random(10), rng.random(10), np.zeros(10)])
    assert np.allclose(kernels.grid_gap_dist(pts, grid), 0.0, atol=1e-12)


def test_grid_gap_off_plane_distance():
    t = np.linspace(0, 1, 8)
    uu, vv = np.meshgrid(t, t, indexing="ij")
    grid = np.stack([uu, vv, np.zeros_like(uu)], axis=-1)
    pts = np.array([[0.4, 0.4, 0.25]])
    assert np.allclose(kernels.grid_gap_dist(pts, grid), 0.25, atol=1e-12)


def test_point_triangle_distance_against_sampling():
    rng = np.random.default_rng(5)
    for _ in range(50):
        tri = rng.normal(size=(3, 3))
        p = rng.normal(size=3)
        got = numpy_backend._point_tri_sqdist(p, tri[0][None], tri[1][None], tri[2][None])[0]
        # dense barycentric sampling as the oracle
        w = rng.random((4000, 3))
        w /= w.sum(axis=1, keepdims=True)
        samples = w @ tri
        ref = ((samples - p) ** 2).sum(axis=1).min()
        assert got <= ref + 1e-9
        edge = np.linspace(0, 1, 400)[:, None]
        borders = np.concatenate(
            [tri[0] + edge * (tri[1] - tri[0]), tri[1] + edge * (tri[2] - tri[1]), tri[0] + edge * (tri[2] - tri[0])]
        )
        ref_border = ((borders - p) ** 2).sum(axis=1).min()
        assert got <= ref_border + 1e-9
        assert got >= min(ref, ref_border) - 2e-3
