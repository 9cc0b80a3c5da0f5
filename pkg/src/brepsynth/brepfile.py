"""Line-oriented text interchange format for B-rep models.

Fixed section order (header, counts, V, E, F, B, EF, EV), one entity per
line, reals printed with 9 significant digits. Models whose coordinates
are already 9-digit representable (everything this package emits — see
`quantize_model`) round-trip bit-exactly in both directions.
"""

import numpy as np

from .brep import Aabb, BrepModel, EdgeCurve, EdgeFaceTable, EdgeVertexTable, FaceSurface

FORMAT_NAME = "brepsynth-brep"
FORMAT_VERSION = 1


class ParseError(ValueError):
    def __init__(self, line, reason):
        super().__init__(f"line {line}: {reason}")
        self.line = line
        self.reason = reason


class VersionUnsupported(ParseError):
    pass


def _fmt(x):
    return format(float(x), ".9g")


def quantize_value(x):
    return float(_fmt(x))


def quantize_model(m):
    """Snap every coordinate to its 9-significant-digit representation so
    the model survives serialization unchanged."""
    q = np.vectorize(quantize_value)
    return BrepModel(
        vertices=q(m.vertices),
        edges=tuple(EdgeCurve(q(e.control_points)) for e in m.edges),
        faces=tuple(FaceSurface(q(f.control_grid)) for f in m.faces),
        boxes=tuple(Aabb(q(b.min), q(b.max)) for b in m.boxes),
        ef=m.ef,
        ev=m.ev,
    )


def dumps(m):
    lines = [f"{FORMAT_NAME} {FORMAT_VERSION}", f"counts {m.n_v} {m.n_e} {m.n_f}"]
    lines.append("V")
    for v in m.vertices:
        lines.append(" ".join(_fmt(x) for x in v))
    lines.append("E")
    for e in m.edges:
        lines.append(" ".join(_fmt(x) for x in e.flat()))
    lines.append("F")
    for f in m.faces:
        lines.append(" ".join(_fmt(x) for x in f.flat()))
    lines.append("B")
    for b in m.boxes:
        lines.append(" ".join(_fmt(x) for x in b.flat()))
    lines.append("EF")
    for fa, fb in m.ef.rows:
        lines.append(f"{fa} {fb}")
    lines.append("EV")
    for va, vb in m.ev.rows:
        lines.append(f"{va} {vb}")
    return "\n".join(lines) + "\n"


def write_brep(m, path):
    with open(path, "w", encoding="ascii") as fh:
        fh.write(dumps(m))


class _Reader:
    def __init__(self, text):
        self.lines = text.splitlines()
        self.pos = 0

    def next(self, what):
        if self.pos >= len(self.lines):
            raise ParseError(self.pos + 1, f"unexpected end of file, expected {what}")
        self.pos += 1
        return self.lines[self.pos - 1].strip()

    def floats(self, count, what):
        parts = self.next(what).split()
        if len(parts) != count:
            raise ParseError(self.pos, f"{what}: expected {count} values, got {len(parts)}")
        try:
            return [float(p) for p in parts]
        except ValueError as err:
            raise ParseError(self.pos, f"{what}: {err}") from None

    def ints(self, count, what):
        parts = self.next(what).split()
        if len(parts) != count:
            raise ParseError(self.pos, f"{what}: expected {count} values, got {len(parts)}")
        try:
            return [int(p) for p in parts]
        except ValueError as err:
            raise ParseError(self.pos, f"{what}: {err}") from None

    def section(self, name):
        got = self.next(f"section {name}")
        if got != name:
            raise ParseError(self.pos, f"expected section {name}, got {got!r}")


def loads(text):
    r = _Reader(text)
    header = r.next("header").split()
    if len(header) != 2 or header[0] != FORMAT_NAME:
        raise ParseError(1, "not a brep file")
    if header[1] != str(FORMAT_VERSION):
        raise VersionUnsupported(1, f"unsupported version {header[1]}")
    counts = r.next("counts").split()
    if len(counts) != 4 or counts[0] != "counts":
        raise ParseError(r.pos, "malformed counts line")
    try:
        n_v, n_e, n_f = (int(c) for c in counts[1:])
    except ValueError:
        raise ParseError(r.pos, "counts must be integers") from None
    r.section("V")
    vertices = [r.floats(3, "vertex") for _ in range(n_v)]
    r.section("E")
    edges = [EdgeCurve(np.reshape(r.floats(12, "edge"), (4, 3))) for _ in range(n_e)]
    r.section("F")
    faces = [FaceSurface(np.reshape(r.floats(48, "face"), (4, 4, 3))) for _ in range(n_f)]
    r.section("B")
    boxes = []
    for _ in range(n_f):
        vals = r.floats(6, "box")
        boxes.append(Aabb(vals[:3], vals[3:]))
    r.section("EF")
    ef = EdgeFaceTable([r.ints(2, "ef row") for _ in range(n_e)])
    r.section("EV")
    ev = EdgeVertexTable([r.ints(2, "ev row") for _ in range(n_e)])
    if r.pos != len(r.lines) and any(l.strip() for l in r.lines[r.pos :]):
        raise ParseError(r.pos + 1, "trailing content after EV section")
    try:
        return BrepModel(
            vertices=vertices, edges=edges, faces=faces, boxes=boxes, ef=ef, ev=ev
        )
    except (ValueError, IndexError) as err:
        raise ParseError(r.pos, str(err)) from None


def read_brep(path):
    with open(path, "r", encoding="ascii") as fh:
        return loads(fh.read())
