"""B-rep data model, derived incidences, Euler characteristic, hashing."""

import numpy as np
import pytest

from brepsynth.brep import (
    Aabb,
    BrepModel,
    EdgeCurve,
    EdgeFaceTable,
    EdgeVertexTable,
    FaceSurface,
    IndexOutOfRange,
    derive_incidence,
    euler_characteristic,
    hash_brep,
)
from brepsynth.corpus import make_prism, random_solid

from conftest import rand_cuboid


def test_edge_curve_validation():
    with pytest.raises(ValueError):
        EdgeCurve(np.zeros((3, 3)))
    with pytest.raises(ValueError):
        EdgeCurve(np.full((4, 3), np.nan))


def test_aabb_ordering():
    with pytest.raises(ValueError):
        Aabb([0, 0, 1], [1, 1, 0])
    box = Aabb.of_points([[1, 2, 3], [-1, 0, 5]])
    assert np.allclose(box.min, [-1, 0, 3]) and np.allclose(box.max, [1, 2, 5])


def test_tables_store_sorted_rows():
    t = EdgeFaceTable([[2, 1], [0, 3]])
    assert t.rows.tolist() == [[1, 2], [0, 3]]
    with pytest.raises(IndexOutOfRange):
        t.check_bounds(3)


def test_model_bounds_checked(cube):
    bad_ef = EdgeFaceTable(np.vstack([cube.ef.rows[:-1], [[0, 99]]]))
    with pytest.raises(IndexOutOfRange):
        BrepModel(
            vertices=cube.vertices,
            edges=cube.edges,
            faces=cube.faces,
            boxes=cube.boxes,
            ef=bad_ef,
            ev=cube.ev,
        )


def test_derive_incidence_direct_inversion():
    ef = EdgeFaceTable([[0, 1], [0, 2], [1, 2]])
    ev = EdgeVertexTable([[0, 1], [1, 2], [0, 2]])
    inc = derive_incidence(ef, ev, 3, 3)
    assert inc.fe == ((0, 1), (0, 2), (1, 2))


def test_derive_incidence_one_edge_two_faces():
    ef = EdgeFaceTable([[0, 1]])
    ev = EdgeVertexTable([[0, 1]])
    inc = derive_incidence(ef, ev, 2, 2)
    assert inc.fv == ((0, 1), (0, 1))


def test_derive_incidence_cube(cube):
    inc = derive_incidence(cube.ef, cube.ev, cube.n_f, cube.n_v)
    assert all(len(r) == 4 for r in inc.fe)
    assert all(len(r) == 4 for r in inc.fv)
    assert all(len(r) == 3 for r in inc.vf)
    assert all(len(r) == 3 for r in inc.ve)


def test_derive_incidence_inverts_back(cube):
    inc = derive_incidence(cube.ef, cube.ev, cube.n_f, cube.n_v)
    rebuilt = [[None, None] for _ in range(cube.n_e)]
    for f, edges in enumerate(inc.fe):
        for e in edges:
            slot = 0 if rebuilt[e][0] is None else 1
            rebuilt[e][slot] = f
    assert np.array_equal(np.sort(np.array(rebuilt), axis=1), cube.ef.rows)


def test_edges_listed_by_both_faces():
    rng = np.random.default_rng(0)
    for _ in range(20):
        m = random_solid(rng, "mixed")
        inc = derive_incidence(m.ef, m.ev, m.n_f, m.n_v)
        for e, (fa, fb) in enumerate(m.ef.rows):
            assert e in inc.fe[fa] and e in inc.fe[fb]


def quad_torus():
    """4x4 quad grid torus: 16 vertices, 32 edges, 16 faces, genus 1."""
    n = 4
    verts = np.zeros((n * n, 3))
    for i in range(n):
        for j in range(n):
            theta = 2 * np.pi * i / n
            phi = 2 * np.pi * j / n
            r = 0.5 + 0.2 * np.cos(phi)
            verts[i * n + j] = [r * np.cos(theta), r * np.sin(theta), 0.2 * np.sin(phi)]
    vid = lambda i, j: (i % n) * n + (j % n)
    loops = []
    for i in range(n):
        for j in range(n):
            loops.append([vid(i, j), vid(i + 1, j), vid(i + 1, j + 1), vid(i, j + 1)])
    edge_ids = {}
    faces_of = {}
    for f, loop in enumerate(loops):
        for k in range(4):
            pair = tuple(sorted((loop[k], loop[(k + 1) % 4])))
            edge_ids.setdefault(pair, len(edge_ids))
            faces_of.setdefault(pair, []).append(f)
    ev = [None] * len(edge_ids)
    ef = [None] * len(edge_ids)
    for pair, e in edge_ids.items():
        ev[e] = pair
        ef[e] = faces_of[pair]
    from brepsynth.corpus import bilinear_patch
    from brepsynth.geometry import compute_bbox

    patches = [
        bilinear_patch(verts[a], verts[b], verts[d], verts[c]) for a, b, c, d in loops
    ]
    return BrepModel(
        vertices=verts,
        edges=[EdgeCurve(np.linspace(verts[a], verts[b], 4)) for a, b in ev],
        faces=patches,
        boxes=[compute_bbox(p) for p in patches],
        ef=EdgeFaceTable(ef),
        ev=EdgeVertexTable(ev),
    )


def test_euler_characteristic_values(cube):
    assert euler_characteristic(cube) == 2
    prism = make_prism(3)
    assert prism.n_v == 6 and prism.n_e == 9 and prism.n_f == 5
    assert euler_characteristic(prism) == 2
    torus = quad_torus()
    assert (torus.n_v, torus.n_e, torus.n_f) == (16, 32, 16)
    assert euler_characteristic(torus) == 0


def test_hash_deterministic_on_copy(cube):
    import copy

    assert hash_brep(cube) == hash_brep(copy.deepcopy(cube))


def test_hash_ignores_sub_rounding_motion(cube):
    verts = cube.vertices.copy()
    verts[0, 0] += 1e-6  # below the 4-decimal rounding resolution
    moved = BrepModel(
        vertices=verts, edges=cube.edges, faces=cube.faces, boxes=cube.boxes, ef=cube.ef, ev=cube.ev
    )
    assert hash_brep(cube, precision=4) == hash_brep(moved, precision=4)
    verts[0, 0] += 0.01
    moved_far = BrepModel(
        vertices=verts, edges=cube.edges, faces=cube.faces, boxes=cube.boxes, ef=cube.ef, ev=cube.ev
    )
    assert hash_brep(cube, precision=4) != hash_brep(moved_far, precision=4)


def test_hash_sensitive_to_incidence_change(cube):
    rows = cube.ef.rows.copy()
    rows[0] = [0, 3] if rows[0].tolist() != [0, 3] else [0, 4]
    changed = BrepModel(
        vertices=cube.vertices,
        edges=cube.edges,
        faces=cube.faces,
        boxes=cube.boxes,
        ef=EdgeFaceTable(rows),
        ev=cube.ev,
    )
    assert hash_brep(cube) != hash_brep(changed)


def test_hash_equal_inputs_equal_digests_many():
    import copy

    rng = np.random.default_rng(7)
    for _ in range(1000):
        m = random_solid(rng, "mixed")
        assert hash_brep(m) == hash_brep(copy.deepcopy(m))
