"""Canonical, reversible serializations of both topology levels.

Level 1: the symmetric face-by-face shared-edge-count matrix, flattened
to its upper triangle in row-major order and terminated by <EOS>.

Level 2: per-face boundary loops written as directed half-edges. Each
edge owns two half-edges (token = 2*edge_id + direction bit) and two
endpoint slots; slot 2e is the tail of the forward half-edge, slot 2e+1
its head, with the reverse direction using them swapped. Loops end with
<L>, faces with <F>, the sequence with <E>; special token values sit
above the half-edge range of a fixed maximum edge count so sequences
from different solids share one alphabet.
"""

from collections import Counter
from dataclasses import dataclass

import numpy as np

from .brep import BrepModel, EdgeFaceTable, EdgeVertexTable, face_edge_lists

K_MAX_DEFAULT = 8
N_E_MAX_DEFAULT = 32


class NotTriangularLength(ValueError):
    pass


class MalformedSequence(ValueError):
    pass


class SelfLoopVertex(MalformedSequence):
    """Sequence rejected because a merge would give some edge two equal
    endpoints."""


class OpenLoopError(ValueError):
    """A face's boundary edges do not chain into closed loops.

    kind: "degree" (a boundary vertex not used exactly twice), "stuck"
    (walk cannot continue) or "empty" (face without edges).
    """

    def __init__(self, message, face=None, vertex=None, kind="stuck"):
        super().__init__(message)
        self.face = face
        self.vertex = vertex
        self.kind = kind


@dataclass(frozen=True)
class FefMatrix:
    """Symmetric nonnegative shared-edge counts; zero diagonal."""

    counts: np.ndarray

    def __post_init__(self):
        counts = np.array(self.counts, dtype=np.int64)
        if counts.ndim != 2 or counts.shape[0] != counts.shape[1]:
            raise ValueError(f"square matrix required, got {counts.shape}")
        if (counts < 0).any():
            raise ValueError("negative shared-edge count")
        if (counts != counts.T).any():
            raise ValueError("matrix must be symmetric")
        if np.diagonal(counts).any():
            raise ValueError("diagonal must be zero (a face cannot share an edge with itself)")
        counts.flags.writeable = False
        object.__setattr__(self, "counts", counts)

    @property
    def n_f(self):
        return self.counts.shape[0]

    @property
    def n_e(self):
        iu = np.triu_indices(self.n_f, k=1)
        return int(self.counts[iu].sum())

    def row_sums(self):
        return self.counts.sum(axis=1)


@dataclass(frozen=True)
class EfSequence:
    """Upper-triangle count tokens terminated by one <EOS> (= k_max + 1)."""

    tokens: tuple
    k_max: int = K_MAX_DEFAULT

    def __post_init__(self):
        tokens = tuple(int(t) for t in self.tokens)
        object.__setattr__(self, "tokens", tokens)
        eos = self.k_max + 1
        if not tokens or tokens[-1] != eos:
            raise ValueError("sequence must end with <EOS>")
        body = tokens[:-1]
        if any(t < 0 or t > self.k_max for t in body):
            raise ValueError(f"count token outside [0, {self.k_max}]")
        _n_f_from_triangular(len(body))

    @property
    def body(self):
        return self.tokens[:-1]


@dataclass(frozen=True)
class HalfEdge:
    edge_id: int
    direction: int  # 0 forward, 1 reverse

    def __post_init__(self):
        if self.direction not in (0, 1):
            raise ValueError("direction must be 0 or 1")

    @property
    def token(self):
        return 2 * self.edge_id + self.direction


def ev_special_tokens(n_e_max):
    """(loop, face, end) token values for a given alphabet size."""
    return 2 * n_e_max, 2 * n_e_max + 1, 2 * n_e_max + 2


@dataclass(frozen=True)
class EvSequence:
    """Half-edge boundary serialization, terminated by <E>."""

    tokens: tuple
    n_e_max: int = N_E_MAX_DEFAULT

    def __post_init__(self):
        tokens = tuple(int(t) for t in self.tokens)
        object.__setattr__(self, "tokens", tokens)
        _, _, tok_e = ev_special_tokens(self.n_e_max)
        if not tokens or tokens[-1] != tok_e:
            raise ValueError("sequence must end with <E>")
        if tok_e in tokens[:-1]:
            raise ValueError("<E> may only appear once, at the end")
        if any(t < 0 or t > tok_e for t in tokens):
            raise ValueError("token outside the alphabet")


def _n_f_from_triangular(length):
    n = int((1 + np.sqrt(1 + 8 * length)) / 2 + 0.5)
    if n < 2 or n * (n - 1) // 2 != length:
        raise NotTriangularLength(f"{length} tokens is not a triangular count")
    return n


def build_fef(ef, n_f):
    """Count shared edges for every face pair."""
    ef.check_bounds(n_f)
    counts = np.zeros((n_f, n_f), dtype=np.int64)
    for fa, fb in ef.rows:
        if fa != fb:
            counts[fa, fb] += 1
            counts[fb, fa] += 1
    return FefMatrix(counts)


def canonicalize_faces(fef):
    """Relabel faces so boundary-edge counts are nondecreasing.

    Stable: ties keep their original relative order. Returns the relabelled
    matrix and the permutation with perm[new] = old.
    """
    perm = np.argsort(fef.row_sums(), kind="stable")
    counts = fef.counts[np.ix_(perm, perm)]
    return FefMatrix(counts), perm


def flatten_fef(fef, k_max=K_MAX_DEFAULT):
    iu = np.triu_indices(fef.n_f, k=1)
    body = fef.counts[iu]
    if body.size and body.max() > k_max:
        raise ValueError(f"shared-edge count {body.max()} exceeds k_max={k_max}")
    return EfSequence(tuple(body) + (k_max + 1,), k_max=k_max)


def unflatten_fef(seq):
    body = seq.body
    n_f = _n_f_from_triangular(len(body))
    counts = np.zeros((n_f, n_f), dtype=np.int64)
    iu = np.triu_indices(n_f, k=1)
    counts[iu] = body
    counts += counts.T
    return FefMatrix(counts)


def assign_global_edge_ids(ef):
    """Edge order sorted lexicographically by (face_a, face_b); ties keep
    original order. Returns perm with perm[new] = old."""
    rows = ef.rows
    return np.lexsort((np.arange(len(ef)), rows[:, 1], rows[:, 0]))


def fef_to_ef(fef):
    """Materialize one edge per counted incidence, in (face_a, face_b,
    occurrence) order — already lexicographic, so global ids are stable."""
    rows = []
    n_f = fef.n_f
    for fa in range(n_f):
        for fb in range(fa + 1, n_f):
            rows.extend([[fa, fb]] * int(fef.counts[fa, fb]))
    if not rows:
        raise ValueError("empty adjacency matrix produces no edges")
    return EdgeFaceTable(rows)


def chain_loops(edge_ids, ev_rows):
    """Order a face's boundary edges into closed loops.

    Returns loops as lists of (edge_id, tail_vertex, head_vertex). Raises
    OpenLoopError when a boundary vertex is not used exactly twice or the
    walk cannot continue.
    """
    if not edge_ids:
        raise OpenLoopError("face has no boundary edges", kind="empty")
    inc = {}
    for e in edge_ids:
        va, vb = int(ev_rows[e][0]), int(ev_rows[e][1])
        inc.setdefault(va, []).append(e)
        inc.setdefault(vb, []).append(e)
    for v, es in inc.items():
        if len(es) != 2:
            raise OpenLoopError(
                f"vertex {v} used {len(es)} times on one boundary", vertex=v, kind="degree"
            )
    unused = set(edge_ids)
    loops = []
    while unused:
        e0 = min(unused)
        unused.discard(e0)
        va, vb = int(ev_rows[e0][0]), int(ev_rows[e0][1])
        loop = [(e0, va, vb)]
        start_tail, head = va, vb
        while head != start_tail:
            nxt = [e for e in inc[head] if e in unused]
            if not nxt:
                raise OpenLoopError(f"boundary walk stuck at vertex {head}", vertex=head)
            e = nxt[0]
            unused.discard(e)
            wa, wb = int(ev_rows[e][0]), int(ev_rows[e][1])
            tail, head = (wa, wb) if wa == head else (wb, wa)
            loop.append((e, tail, head))
        loops.append(loop)
    return loops


def _loop_directions(loop, ev_rows):
    """Direction bit per chained step: 0 when the step runs the edge from
    its stored smaller vertex to the larger one."""
    return [(e, 0 if (tail, head) == tuple(ev_rows[e]) else 1) for e, tail, head in loop]


def orient_model_loops(m):
    """Chained boundary loops of every face with a globally consistent
    traversal orientation, each rotated to start at its smallest token.

    The two faces of an edge must run it in opposite directions, which is
    a parity constraint between their loops; two-coloring the loop
    adjacency graph settles it. Each orientation component is seeded so
    its smallest edge runs forward where that edge first appears. Raises
    OpenLoopError(kind="orientation") when no consistent choice exists.
    """
    fe = face_edge_lists(m.ef, m.n_f)
    nodes = []  # (face, directions-as-chained)
    per_face = []
    edge_nodes = {}
    for f in range(m.n_f):
        ids = []
        for loop in chain_loops(fe[f], m.ev.rows):
            node = len(nodes)
            dirs = _loop_directions(loop, m.ev.rows)
            nodes.append(dirs)
            ids.append(node)
            for e, d in dirs:
                edge_nodes.setdefault(e, []).append((node, d))
        per_face.append(ids)
    flip = [None] * len(nodes)
    for e_seed in sorted(edge_nodes):
        pair = edge_nodes[e_seed]
        node0, d0 = min(pair)
        if flip[node0] is not None:
            continue
        flip[node0] = d0  # makes e_seed forward in its first loop
        queue = [node0]
        while queue:
            node = queue.pop()
            for e, d in nodes[node]:
                for other, d_other in edge_nodes[e]:
                    if other == node and d_other == d:
                        continue
                    want = 1 - (d_other ^ flip[node] ^ d)  # opposite realized dirs
                    if flip[other] is None:
                        flip[other] = want
                        queue.append(other)
                    elif flip[other] != want:
                        raise OpenLoopError(
                            f"edge {e} cannot be traversed consistently", kind="orientation"
                        )
    out = []
    for f, ids in enumerate(per_face):
        oriented = []
        for node in ids:
            dirs = nodes[node]
            if flip[node]:
                dirs = [(e, 1 - d) for e, d in reversed(dirs)]
            pos = min(range(len(dirs)), key=lambda i: 2 * dirs[i][0] + dirs[i][1])
            oriented.append(dirs[pos:] + dirs[:pos])
        out.append(sorted(oriented, key=lambda hs: 2 * hs[0][0] + hs[0][1]))
    return out


def encode_ev_sequence(m, n_e_max=N_E_MAX_DEFAULT):
    """Serialize a model's face boundaries as the half-edge token sequence.

    Faces are emitted in stored order (canonicalize first for the training
    convention). Each edge's two half-edges are spent by its two faces, so
    every half-edge token appears exactly once; loops within a face are
    ordered by their leading token.
    """
    if m.n_e > n_e_max:
        raise ValueError(f"{m.n_e} edges exceed the alphabet maximum {n_e_max}")
    tok_l, tok_f, tok_e = ev_special_tokens(n_e_max)
    tokens = []
    for loops in orient_model_loops(m):
        for halves in loops:
            tokens.extend(2 * e + d for e, d in halves)
            tokens.append(tok_l)
        tokens.append(tok_f)
    tokens.append(tok_e)
    return EvSequence(tuple(tokens), n_e_max=n_e_max)


class _UnionFind:
    def __init__(self, n):
        self.parent = list(range(n))
        self.rank = [0] * n

    def find(self, x):
        root = x
        while self.parent[root] != root:
            root = self.parent[root]
        while self.parent[x] != root:
            self.parent[x], x = root, self.parent[x]
        return root

    def union(self, a, b):
        ra, rb = self.find(a), self.find(b)
        if ra == rb:
            return ra
        if self.rank[ra] < self.rank[rb]:
            ra, rb = rb, ra
        self.parent[rb] = ra
        if self.rank[ra] == self.rank[rb]:
            self.rank[ra] += 1
        return ra


class EvGrammar:
    """Stateful legality oracle for half-edge sequences.

    Tracks which half-edges are spent, the open chain of the current loop,
    and the vertex-slot union-find; exposes the feasible next tokens. Two
    safety rules guard merges: the two slots of one edge may never unify
    (no degenerate edges), and — when `strict_manifold` is set, as during
    sampling — a merged vertex may touch a face through at most two slots
    (keeps face boundaries manifold).
    """

    TOK_HALF = "half"
    TOK_L = "L"
    TOK_F = "F"
    TOK_E = "E"

    def __init__(self, ef, n_f, strict_manifold=False):
        self.n_e = len(ef)
        self.n_f = n_f
        self.strict_manifold = strict_manifold
        self.fe = face_edge_lists(ef, n_f)
        self.edge_faces = [tuple(int(x) for x in row) for row in ef.rows]
        self.uf = _UnionFind(2 * self.n_e)
        # per find-root: face -> number of member slots touching that face
        self.face_use = {
            2 * e + s: Counter(self.edge_faces[e]) for e in range(self.n_e) for s in (0, 1)
        }
        self.used = [False] * (2 * self.n_e)
        self.face_idx = 0
        self.remaining = Counter(self.fe[0]) if n_f else Counter()
        self.loops_in_face = 0
        self.chain = []
        self.done = False

    @staticmethod
    def tail_slot(edge, direction):
        return 2 * edge + direction

    @staticmethod
    def head_slot(edge, direction):
        return 2 * edge + 1 - direction

    def _edge_pair_roots(self):
        return {
            frozenset((self.uf.find(2 * e), self.uf.find(2 * e + 1)))
            for e in range(self.n_e)
        }

    def _merge_safe(self, slot_a, slot_b, pair_roots):
        ra, rb = self.uf.find(slot_a), self.uf.find(slot_b)
        if ra == rb:
            return True
        if frozenset((ra, rb)) in pair_roots:
            return False  # would collapse some edge's two endpoints
        if self.strict_manifold:
            ca, cb = self.face_use[ra], self.face_use[rb]
            small, big = (ca, cb) if len(ca) <= len(cb) else (cb, ca)
            for face, cnt in small.items():
                if cnt + big.get(face, 0) > 2:
                    return False
        return True

    def feasible(self):
        """Mapping of legal next tokens: kind -> payload list."""
        if self.done:
            return {}
        out = {}
        pair_roots = self._edge_pair_roots()
        halves = []
        head_root = None
        if self.chain:
            e_last, d_last = self.chain[-1]
            head_root = self.head_slot(e_last, d_last)
        for e, cnt in self.remaining.items():
            if cnt <= 0:
                continue
            for d in (0, 1):
                if self.used[2 * e + d]:
                    continue
                if head_root is None or self._merge_safe(
                    head_root, self.tail_slot(e, d), pair_roots
                ):
                    halves.append((e, d))
        if halves:
            out[self.TOK_HALF] = sorted(halves)
        if self.chain:
            e0, d0 = self.chain[0]
            if self._merge_safe(head_root, self.tail_slot(e0, d0), pair_roots):
                out[self.TOK_L] = True
        if not self.chain and self.loops_in_face >= 1 and not +self.remaining:
            out[self.TOK_F] = True
        if not self.chain and self.loops_in_face == 0 and self.face_idx >= self.n_f:
            out[self.TOK_E] = True
        return out

    def push_half(self, edge, direction):
        if self.chain:
            e_last, d_last = self.chain[-1]
            self._union(self.head_slot(e_last, d_last), self.tail_slot(edge, direction))
        self.chain.append((edge, direction))
        self.used[2 * edge + direction] = True
        self.remaining[edge] -= 1

    def push_loop_end(self):
        e_last, d_last = self.chain[-1]
        e0, d0 = self.chain[0]
        self._union(self.head_slot(e_last, d_last), self.tail_slot(e0, d0))
        self.chain = []
        self.loops_in_face += 1

    def push_face_end(self):
        self.face_idx += 1
        self.loops_in_face = 0
        self.remaining = (
            Counter(self.fe[self.face_idx]) if self.face_idx < self.n_f else Counter()
        )

    def push_end(self):
        self.done = True

    def _union(self, a, b):
        ra, rb = self.uf.find(a), self.uf.find(b)
        if ra == rb:
            return
        merged = self.face_use.pop(ra) + self.face_use.pop(rb)
        root = self.uf.union(ra, rb)
        self.face_use[root] = merged

    def vertex_classes(self):
        """Slot equivalence classes numbered by smallest member slot."""
        roots = {}
        for slot in range(2 * self.n_e):
            roots.setdefault(self.uf.find(slot), []).append(slot)
        ordered = sorted(roots.values(), key=min)
        cls = {}
        for vid, slots in enumerate(ordered):
            for slot in slots:
                cls[slot] = vid
        return cls


def decode_ev_sequence(seq, ef):
    """Reconstruct the edge-to-vertex table from a half-edge sequence.

    Vertices are the union-find classes of endpoint slots; consecutive
    half-edges of a loop merge head with next tail, closing at <L>.
    Raises MalformedSequence on grammar violations and SelfLoopVertex when
    a merge would collapse both endpoints of an edge.
    """
    n_f = int(ef.rows.max()) + 1 if len(ef) else 0
    n_e = len(ef)
    tok_l, tok_f, tok_e = ev_special_tokens(seq.n_e_max)
    if n_e > seq.n_e_max:
        raise MalformedSequence(f"{n_e} edges exceed the sequence alphabet")
    gram = EvGrammar(ef, n_f, strict_manifold=False)
    for pos, tok in enumerate(seq.tokens):
        feas = gram.feasible()
        if tok == tok_l:
            if not gram.chain:
                raise MalformedSequence(f"token {pos}: <L> with no open loop")
            if EvGrammar.TOK_L not in feas:
                raise SelfLoopVertex(f"token {pos}: closing the loop would degenerate an edge")
            gram.push_loop_end()
        elif tok == tok_f:
            if EvGrammar.TOK_F not in feas:
                raise MalformedSequence(f"token {pos}: face not completable here")
            gram.push_face_end()
        elif tok == tok_e:
            if EvGrammar.TOK_E not in feas:
                raise MalformedSequence(f"token {pos}: <E> before all faces closed")
            gram.push_end()
        else:
            edge, direction = divmod(tok, 2)
            if edge >= n_e:
                raise MalformedSequence(f"token {pos}: unknown half-edge {tok}")
            if gram.used[tok]:
                raise MalformedSequence(f"token {pos}: half-edge {tok} reused")
            if gram.remaining[edge] <= 0:
                raise MalformedSequence(f"token {pos}: edge {edge} not on face {gram.face_idx}")
            if gram.chain and (edge, direction) not in feas.get(EvGrammar.TOK_HALF, []):
                raise SelfLoopVertex(f"token {pos}: joining half-edge {tok} degenerates an edge")
            gram.push_half(edge, direction)
    if not gram.done:
        raise MalformedSequence("sequence ended before <E>")
    cls = gram.vertex_classes()
    rows = [[cls[2 * e], cls[2 * e + 1]] for e in range(n_e)]
    table = EdgeVertexTable(rows)
    if (table.rows[:, 0] == table.rows[:, 1]).any():
        raise SelfLoopVertex("an edge's endpoints merged into one vertex")
    return table


def canonicalize_model(m):
    """Relabel faces, edges and vertices into the canonical training frame.

    Faces: ascending boundary-edge count (stable). Edges: lexicographic by
    incident face pair. Vertices: numbered by their smallest endpoint slot,
    matching decode_ev_sequence's class numbering — so encode/decode
    round-trips reproduce the stored tables exactly.
    """
    fef = build_fef(m.ef, m.n_f)
    _, face_perm = canonicalize_faces(fef)
    face_new = np.empty(m.n_f, dtype=np.int64)
    face_new[face_perm] = np.arange(m.n_f)
    ef1 = EdgeFaceTable(face_new[m.ef.rows])
    edge_perm = assign_global_edge_ids(ef1)
    ef2 = EdgeFaceTable(ef1.rows[edge_perm])
    ev2 = m.ev.rows[edge_perm]
    min_slot = np.full(m.n_v, 2 * m.n_e, dtype=np.int64)
    for e in range(m.n_e):
        for s in (0, 1):
            v = ev2[e, s]
            min_slot[v] = min(min_slot[v], 2 * e + s)
    order = np.argsort(min_slot, kind="stable")
    vert_new = np.empty(m.n_v, dtype=np.int64)
    vert_new[order] = np.arange(m.n_v)
    return BrepModel(
        vertices=m.vertices[order],
        edges=tuple(m.edges[i] for i in edge_perm),
        faces=tuple(m.faces[i] for i in face_perm),
        boxes=tuple(m.boxes[i] for i in face_perm),
        ef=ef2,
        ev=EdgeVertexTable(vert_new[ev2]),
    )
