"""Four-stage factorized generation: adjacency topology, coarse geometry
(boxes then edge curves), edge-vertex topology, fine geometry (face
grids then vertices) — followed by assembly, per-face primitive
post-processing, endpoint snapping and validity checking.

Each stage consumes only outputs of strictly earlier stages; the trace
records what every stage produced, how long it took and how often it
retried. Model misbehaviour becomes a StageFailed result, never an
uncaught crash.
"""

import time
from dataclasses import dataclass, field

import numpy as np

from .brep import Aabb, BrepModel, EdgeCurve, EdgeVertexTable, FaceSurface, derive_incidence, face_edge_lists
from .brepfile import quantize_model
from .conditioning import ConditioningEmbedding
from .diffusion import diffusion_sample
from .ev_model import ev_sample
from .geometry import Plane, compute_bbox, curve_points, postprocess_face, project_to_plane, surface_grid
from .topocodec import canonicalize_faces, decode_ev_sequence, fef_to_ef, unflatten_fef
from .validity import check_validity
from .vae import SamplingExhausted, vae_sample

STAGES = (
    "level1_topology",
    "boxes",
    "edges",
    "level2_topology",
    "faces",
    "vertices",
    "assemble",
)

LEVEL1_RESTARTS = 16


class StageFailed(RuntimeError):
    def __init__(self, stage, cause, trace):
        super().__init__(f"{stage}: {cause}")
        self.stage = stage
        self.cause = cause
        self.trace = trace


@dataclass
class GenerationTrace:
    fef: object = None
    ef: object = None
    boxes: object = None          # raw diffusion box rows (n_f, 6)
    edge_curves: object = None    # raw diffusion edge rows (n_e, 12)
    ev_sequence: object = None
    ev: object = None
    face_grids: object = None     # raw diffusion face rows (n_f, 48)
    vertices: object = None
    durations: dict = field(default_factory=dict)
    retries: dict = field(default_factory=dict)

    _ORDER = ("fef", "ef", "boxes", "edge_curves", "ev_sequence", "ev", "face_grids", "vertices")

    def check_stage_order(self):
        """Dependency honesty: no stage output may exist without all of
        its predecessors."""
        seen_absent = None
        for name in self._ORDER:
            if getattr(self, name) is None:
                seen_absent = name
            elif seen_absent is not None:
                raise ValueError(f"{name} present but earlier stage {seen_absent} absent")

    def lines(self):
        out = []
        for stage in STAGES:
            if stage in self.durations:
                out.append(
                    f"stage={stage} seconds={self.durations[stage]:.3f} "
                    f"retries={self.retries.get(stage, 0)}"
                )
        return out


@dataclass
class GenerationResult:
    model: object            # BrepModel or None
    report: object           # ValidityReport or None
    trace: GenerationTrace
    failure: object = None   # StageFailed, when model is None

    @property
    def ok(self):
        return self.model is not None

    @property
    def valid(self):
        return self.report is not None and self.report.is_valid


@dataclass
class SampleConfig:
    snap: bool = True
    temperature: float = 1.0
    validity_tol: float = None       # default: preset.validity_tol
    postprocess: bool = True
    boundary_samples: int = 16
    interior_grid: int = 8


def _timed(trace, stage):
    class _Ctx:
        def __enter__(self):
            self.t0 = time.time()
            return self

        def __exit__(self, *exc):
            trace.durations[stage] = trace.durations.get(stage, 0.0) + time.time() - self.t0
            return False

    return _Ctx()


def _plausible_fef(fef, n_e_max):
    """Reject adjacency matrices no edge-vertex grammar can complete:
    every face needs at least two boundary edges, and the edge count must
    fit the half-edge alphabet."""
    sums = fef.row_sums()
    return fef.n_e >= 2 and fef.n_e <= n_e_max and (sums >= 2).all()


def _stage_seed(seed, stage):
    return np.random.SeedSequence([seed, STAGES.index(stage)])


def generate(system, seed, config=None):
    """One end-to-end sample; returns a GenerationResult (never raises on
    model misbehaviour)."""
    cfg = config or SampleConfig()
    preset = system.preset
    tol = cfg.validity_tol if cfg.validity_tol is not None else preset.validity_tol
    schedule = system.schedule
    trace = GenerationTrace()

    try:
        with _timed(trace, "level1_topology"):
            rng = np.random.default_rng(_stage_seed(seed, "level1_topology"))
            fef = None
            for attempt in range(LEVEL1_RESTARTS):
                seq = vae_sample(
                    system.ef_vae, rng.integers(0, 2**63), temperature=cfg.temperature
                )
                cand = unflatten_fef(seq)
                if cand.n_f <= preset.n_f_max and _plausible_fef(cand, preset.n_e_max):
                    fef = cand
                    trace.retries["level1_topology"] = attempt
                    break
            if fef is None:
                raise SamplingExhausted("no plausible adjacency matrix")
            # faces were generated in canonical (sorted) order by training
            # convention; enforce it on the sample before edge expansion
            fef, _ = canonicalize_faces(fef)
            ef = fef_to_ef(fef)
            trace.fef = fef
            trace.ef = ef
    except SamplingExhausted as err:
        return GenerationResult(None, None, trace, failure=StageFailed("level1_topology", str(err), trace))

    n_f = fef.n_f
    n_e = len(ef)

    with _timed(trace, "boxes"):
        feats = system.p_box.conditioner.features(ef, n_f)
        raw = diffusion_sample(
            system.p_box, feats, n_f, schedule, _stage_seed(seed, "boxes")
        )
        boxes = np.concatenate(
            [np.minimum(raw[:, :3], raw[:, 3:]), np.maximum(raw[:, :3], raw[:, 3:])], axis=1
        )
        trace.boxes = boxes

    with _timed(trace, "edges"):
        feats = system.p_edge.conditioner.features(ef, boxes)
        edge_rows = diffusion_sample(
            system.p_edge, feats, n_e, schedule, _stage_seed(seed, "edges")
        )
        trace.edge_curves = edge_rows

    try:
        with _timed(trace, "level2_topology"):
            feats = system.ev_decoder.conditioner.features(ef, boxes, edge_rows)
            cond = ConditioningEmbedding(
                rows=system.ev_decoder.conditioner.rows(feats),
                entity_kind="edge",
                provenance=system.ev_decoder.conditioner.provenance,
            )
            rng = np.random.default_rng(_stage_seed(seed, "level2_topology"))
            ev_seq = ev_sample(
                system.ev_decoder, cond, ef, rng.integers(0, 2**63), temperature=cfg.temperature
            )
            ev = decode_ev_sequence(ev_seq, ef)
            trace.ev_sequence = ev_seq
            trace.ev = ev
    except SamplingExhausted as err:
        return GenerationResult(None, None, trace, failure=StageFailed("level2_topology", str(err), trace))

    n_v = int(ev.rows.max()) + 1
    inc = derive_incidence(ef, ev, n_f, n_v)
    fe = face_edge_lists(ef, n_f)

    with _timed(trace, "faces"):
        feats = system.p_face.conditioner.features(fe, edge_rows, boxes, inc.fv)
        face_rows = diffusion_sample(
            system.p_face, feats, n_f, schedule, _stage_seed(seed, "faces")
        )
        trace.face_grids = face_rows

    with _timed(trace, "vertices"):
        feats = system.p_vertex.conditioner.features(inc.vf, inc.ve, boxes, face_rows)
        vertices = diffusion_sample(
            system.p_vertex, feats, n_v, schedule, _stage_seed(seed, "vertices")
        )
        trace.vertices = vertices

    try:
        with _timed(trace, "assemble"):
            trace.check_stage_order()
            model = assemble_model(
                vertices, edge_rows, face_rows, ef, ev, cfg, preset, fe
            )
            report = check_validity(model, tol=tol)
        return GenerationResult(model, report, trace)
    except Exception as err:  # noqa: BLE001 - robustness contract
        return GenerationResult(None, None, trace, failure=StageFailed("assemble", str(err), trace))


def assemble_model(vertices, edge_rows, face_rows, ef, ev, cfg, preset, fe):
    """BrepModel from raw stage outputs: post-process faces (plane
    substitution), snap curve endpoints, recompute boxes from the final
    surfaces, quantize for serialization."""
    curves = [EdgeCurve(r.reshape(4, 3)) for r in edge_rows]
    faces = [FaceSurface(r.reshape(4, 4, 3)) for r in face_rows]
    if cfg.postprocess:
        faces = [
            _postprocessed_face(faces[f], [curves[e] for e in fe[f]], cfg, preset)
            for f in range(len(faces))
        ]
    model = BrepModel(
        vertices=np.asarray(vertices, dtype=np.float64),
        edges=curves,
        faces=faces,
        boxes=[compute_bbox(f) for f in faces],
        ef=ef,
        ev=ev,
    )
    if cfg.snap:
        model = snap_endpoints(model)
    return quantize_model(model)


def _postprocessed_face(face, boundary_curves, cfg, preset):
    boundary = np.concatenate(
        [curve_points(c, cfg.boundary_samples) for c in boundary_curves]
    ) if boundary_curves else np.zeros((0, 3))
    interior = surface_grid(face, cfg.interior_grid).reshape(-1, 3)
    result = postprocess_face(face, boundary, interior, preset.postprocess_threshold)
    if isinstance(result, Plane):
        return project_to_plane(face, result.fit)
    return result.surface


def snap_endpoints(m):
    """Replace each curve's first/last control points by its two vertices
    (best endpoint assignment); interior control points untouched.
    Idempotent."""
    curves = []
    for e, curve in enumerate(m.edges):
        va, vb = (int(x) for x in m.ev.rows[e])
        pa, pb = m.vertices[va], m.vertices[vb]
        ctrl = curve.control_points.copy()
        direct = np.linalg.norm(ctrl[0] - pa) + np.linalg.norm(ctrl[3] - pb)
        swapped = np.linalg.norm(ctrl[0] - pb) + np.linalg.norm(ctrl[3] - pa)
        ctrl[0], ctrl[3] = (pa, pb) if direct <= swapped else (pb, pa)
        curves.append(EdgeCurve(ctrl))
    return BrepModel(
        vertices=m.vertices,
        edges=curves,
        faces=m.faces,
        boxes=m.boxes,
        ef=m.ef,
        ev=m.ev,
    )


def generate_batch(system, n, seed, config=None, workers=1):
    """n independent generations with per-item derived seeds; the result
    set is identical for any worker count."""
    if n < 1:
        raise ValueError("batch size must be >= 1")
    seeds = [int(np.random.SeedSequence([seed, i]).generate_state(1)[0]) for i in range(n)]
    if workers <= 1:
        return [generate(system, s, config) for s in seeds]
    import multiprocessing as mp

    ctx = mp.get_context("fork")
    with ctx.Pool(workers) as pool:
        return pool.starmap(_generate_job, [(system, s, config) for s in seeds])


def _generate_job(system, seed, config):
    return generate(system, seed, config)
