"""Evaluation and analysis of the B-spline geometry: curve/surface
evaluation, curvature, bounding boxes, area-weighted surface sampling,
Chamfer distance, and the plane fitting used by post-processing.

With four control points the clamped cubic B-spline coincides with the
cubic Bezier, which is what these routines evaluate; endpoint
interpolation (curve(0) = P0, curve(1) = P3) is relied on by the
edge-vertex gap checks.
"""

from dataclasses import dataclass

import numpy as np

from . import kernels
from .brep import Aabb, FaceSurface


class ParameterOutOfRange(ValueError):
    pass


class DegenerateSurface(ValueError):
    pass


class RankDeficient(ValueError):
    pass


class EmptySet(ValueError):
    pass


@dataclass(frozen=True)
class SurfaceSample:
    point: np.ndarray
    normal: np.ndarray
    mean_curvature: float


@dataclass(frozen=True)
class PlaneFit:
    origin: np.ndarray
    normal: np.ndarray
    rms_error: float


def eval_curve(curve, t):
    """Point on a cubic Bezier edge curve, t in [0, 1]."""
    t_arr = np.atleast_1d(np.asarray(t, dtype=np.float64))
    if (t_arr < 0).any() or (t_arr > 1).any():
        raise ParameterOutOfRange(f"curve parameter {t} outside [0, 1]")
    pts = kernels.cubic_points(curve.control_points[None], t_arr)[0]
    return pts[0] if np.isscalar(t) or np.asarray(t).ndim == 0 else pts


def eval_surface(surface, u, v):
    """SurfaceSample (point, unit normal, mean curvature) at (u, v).

    Normal is the normalized cross product of the parametric partials;
    mean curvature comes from the first and second fundamental forms:
    H = (eG - 2fF + gE) / (2 (EG - F^2)).
    """
    if not (0 <= u <= 1 and 0 <= v <= 1):
        raise ParameterOutOfRange(f"surface parameters ({u}, {v}) outside [0, 1]^2")
    s, su, sv, suu, suv, svv = (
        a[0] for a in kernels.bicubic_full(surface.control_grid, np.array([u]), np.array([v]))
    )
    cross = np.cross(su, sv)
    norm = np.linalg.norm(cross)
    if norm < 1e-12:
        raise DegenerateSurface(f"vanishing normal at ({u}, {v})")
    n = cross / norm
    big_e = su @ su
    big_f = su @ sv
    big_g = sv @ sv
    e = n @ suu
    f = n @ suv
    g = n @ svv
    h = (e * big_g - 2.0 * f * big_f + g * big_e) / (2.0 * (big_e * big_g - big_f**2))
    return SurfaceSample(point=s, normal=n, mean_curvature=float(h))


def surface_grid(surface, n):
    """(n, n, 3) points at the uniform parameter grid (row index = u)."""
    t = np.linspace(0.0, 1.0, n)
    uu, vv = np.meshgrid(t, t, indexing="ij")
    pts = kernels.bicubic_eval(surface.control_grid, uu.ravel(), vv.ravel())
    return pts.reshape(n, n, 3)


def curve_points(curve, n):
    """(n, 3) points at n uniform parameters including both endpoints."""
    return kernels.cubic_points(curve.control_points[None], np.linspace(0.0, 1.0, n))[0]


def compute_bbox(surface):
    """Control-point bounding box; convex hull containment makes it
    enclose the whole patch."""
    return Aabb.of_points(surface.control_grid.reshape(-1, 3))


def _face_jacobians(surface, n=16):
    """|Su x Sv| on the n x n midpoint grid (area quadrature samples)."""
    t = (np.arange(n) + 0.5) / n
    uu, vv = np.meshgrid(t, t, indexing="ij")
    _, su, sv, _, _, _ = kernels.bicubic_full(surface.control_grid, uu.ravel(), vv.ravel())
    return np.linalg.norm(np.cross(su, sv), axis=1)


def face_area(surface, n=16):
    """Midpoint-rule estimate of the patch area."""
    return float(_face_jacobians(surface, n).mean())


def sample_surface_points(m, n, seed):
    """n points on the solid's surface, area-weighted across faces and
    density-uniform within each face via rejection on |Su x Sv|.

    Deterministic for a given seed.
    """
    if n < 1:
        raise ValueError("need at least one sample")
    rng = np.random.default_rng(seed)
    jac = [_face_jacobians(f) for f in m.faces]
    areas = np.array([j.mean() for j in jac])
    total = areas.sum()
    if total <= 0:
        raise DegenerateSurface("model has zero total surface area")
    counts = rng.multinomial(n, areas / total)
    out = []
    for f, count in enumerate(counts):
        if count == 0:
            continue
        envelope = jac[f].max() * 1.05
        if envelope <= 0:
            raise DegenerateSurface(f"face {f} has zero area")
        grid = m.faces[f].control_grid
        got = 0
        while got < count:
            draw = max(count - got, 16)
            uvr = rng.random((draw, 3))
            _, su, sv, _, _, _ = kernels.bicubic_full(grid, uvr[:, 0], uvr[:, 1])
            dens = np.linalg.norm(np.cross(su, sv), axis=1)
            accept = uvr[:, 2] * envelope <= dens
            keep = np.nonzero(accept)[0][: count - got]
            if keep.size:
                out.append(kernels.bicubic_eval(grid, uvr[keep, 0], uvr[keep, 1]))
                got += keep.size
    return np.concatenate(out, axis=0)


def chamfer_distance(a, b):
    """Symmetric squared-distance Chamfer: mean over a of squared nearest
    distance to b, plus the same with roles swapped."""
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if a.size == 0 or b.size == 0:
        raise EmptySet("chamfer distance of an empty point set")
    amin, bmin = kernels.nn_sqdist(a.reshape(-1, 3), b.reshape(-1, 3))
    return float(amin.mean() + bmin.mean())


def fit_plane(points):
    """Least-squares plane through `points` via the covariance eigenbasis.

    normal = eigenvector of the smallest eigenvalue; rms_error is the
    root-mean-square orthogonal residual. Raises RankDeficient for
    (near-)collinear input.
    """
    pts = np.asarray(points, dtype=np.float64).reshape(-1, 3)
    if pts.shape[0] < 3:
        raise RankDeficient(f"{pts.shape[0]} points cannot define a plane")
    origin = pts.mean(axis=0)
    centered = pts - origin
    # SVD of the centered points = eigenbasis of their covariance, computed
    # without squaring away the small singular values
    _, svals, vt = np.linalg.svd(centered, full_matrices=False)
    scale = 1.0 / np.sqrt(pts.shape[0])
    if svals[1] * scale <= 1e-12 * (1.0 + svals[0] * scale):
        raise RankDeficient("points are collinear")
    normal = vt[2]
    k = int(np.argmax(np.abs(normal)))
    if normal[k] < 0:
        normal = -normal
    rms = float(svals[2] * scale)
    return PlaneFit(origin=origin, normal=normal, rms_error=rms)


@dataclass(frozen=True)
class Plane:
    fit: PlaneFit


@dataclass(frozen=True)
class Spline:
    surface: FaceSurface


def postprocess_face(face, boundary_pts, interior_pts, threshold):
    """Primitive substitution: fit one plane jointly to boundary and
    interior samples; adopt it when the rms residual beats `threshold`,
    otherwise keep the generated patch. Degenerate fits fall back to the
    patch rather than failing."""
    pts = np.concatenate(
        [np.asarray(boundary_pts).reshape(-1, 3), np.asarray(interior_pts).reshape(-1, 3)]
    )
    try:
        fit = fit_plane(pts)
    except RankDeficient:
        return Spline(face)
    if fit.rms_error < threshold:
        return Plane(fit)
    return Spline(face)


def project_to_plane(face, fit):
    """Planar patch: the face's control grid orthogonally projected onto
    the fitted plane (how an adopted Plane is materialized as geometry)."""
    grid = face.control_grid.reshape(-1, 3)
    d = (grid - fit.origin) @ fit.normal
    return FaceSurface((grid - d[:, None] * fit.normal[None, :]).reshape(4, 4, 3))
