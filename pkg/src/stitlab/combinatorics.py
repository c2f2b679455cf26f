"""Combinatorial structure extraction from a finished construction.

Every 1-dimensional face of every cell-separating polygon becomes an
I-segment record.  Internal vertices of segments are recovered from
provenance rather than geometric search: a corner of a polygon whose two
adjacent sides are carried by two older polygons lands on the side of the
younger of those two carried by the older (a T-vertex, labelled left or
right), and two segments in the same carrier plane whose owners lie on
opposite sides of that plane cross in an X-vertex.  Geometry enters only
as verification: every provenance decision is checked against coordinates
and the run fails loudly on disagreement.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .engine import ConstructionResult
from .geometry import SourceTag


class ClassificationError(Exception):
    """Provenance and geometry disagree; carries a diagnostic payload."""

    def __init__(self, message, **context):
        super().__init__(message + (f" | context: {context}" if context else ""))
        self.context = context


@dataclass
class Mark:
    """Internal vertex on an I-segment, ordered by the segment parameter."""

    param: float
    kind: str                # 'X' | 'TL' | 'TR'
    source_polygon: int
    birth_time: float
    vertex: int              # global vertex id
    position: np.ndarray


@dataclass
class ISegmentRecord:
    """One side of a cell-separating polygon with its internal marks."""

    seg_id: tuple[int, int]      # (owner polygon id, side index)
    owner: int
    carrier: SourceTag
    a: np.ndarray                # endpoints in fixed lexicographic order
    b: np.ndarray
    length: float
    window_carried: bool
    end_corners: tuple[tuple[int, int], tuple[int, int]]  # (poly, corner) at a and b
    marks: list[Mark] = field(default_factory=list)
    end_vertices: tuple = (None, None)

    @property
    def direction(self) -> np.ndarray:
        return (self.b - self.a) / self.length

    def midpoint(self) -> np.ndarray:
        return 0.5 * (self.a + self.b)

    @property
    def nu(self) -> int:
        return len(self.marks)

    def count_kinds(self) -> dict:
        out = {"X": 0, "TL": 0, "TR": 0}
        for m in self.marks:
            out[m.kind] += 1
        return out


@dataclass
class VertexRecord:
    id: int
    position: np.ndarray
    kind: str                    # 'T' | 'X'
    segment: tuple[int, int]     # segment carrying the mark
    source_polygon: int
    crossing_segment: tuple | None = None
    incident: list = field(default_factory=list)   # EdgeRecord refs


@dataclass
class EdgeRecord:
    """Tessellation edge with its three classifications.

    Endpoint kinds use 'B' for a segment extremity; the class lookup is a
    total function of the two kinds.
    """

    seg_id: tuple[int, int]
    index: int
    kinds: tuple[str, str]
    v0: int | None
    v1: int | None
    p0: np.ndarray
    p1: np.ndarray
    class_tx: str
    class_p1: int
    class_z1: int
    interior: bool               # both endpoints are genuine vertices

    def midpoint(self) -> np.ndarray:
        return 0.5 * (self.p0 + self.p1)

    def length(self) -> float:
        return float(np.linalg.norm(self.p1 - self.p0))


def edge_classes(k0: str, k1: str) -> tuple[str, int, int]:
    """(endpoint-type class, plate-side equality count, ridge equality
    count) from the two endpoint kinds."""
    t0 = "X" if k0 == "X" else "T"
    t1 = "X" if k1 == "X" else "T"
    class_tx = "TT" if (t0, t1) == ("T", "T") else (
        "XX" if (t0, t1) == ("X", "X") else "TX")

    pair = frozenset((k0, k1))
    n_b = (k0 == "B") + (k1 == "B")
    if n_b == 2:
        class_p1 = 3
    elif n_b == 1:
        class_p1 = 2
    elif k0 == k1:               # XX, TLTL, TRTR
        class_p1 = 2
    elif pair == frozenset(("TL", "TR")):
        class_p1 = 1
    else:                        # one T-label, one X
        class_p1 = 1

    if n_b == 2:
        class_z1 = 2
    elif n_b == 1:
        other = k1 if k0 == "B" else k0
        class_z1 = 1 if other in ("TL", "TR") else 0
    elif k0 == k1 and k0 in ("TL", "TR"):
        class_z1 = 1
    else:
        class_z1 = 0
    return class_tx, class_p1, class_z1


@dataclass
class TessellationStructure:
    """Segments, vertices and edges of one construction, fully classified."""

    result: ConstructionResult
    segments: list[ISegmentRecord]
    vertices: list[VertexRecord]
    edges: list[EdgeRecord]
    corner_vertex: dict          # (polygon, corner index) -> vertex id | None
    by_seg: dict                 # seg_id -> ISegmentRecord

    def genuine_vertex(self, vid) -> bool:
        return vid is not None


# ---------------------------------------------------------------------------
# extraction
# ---------------------------------------------------------------------------

def extract_segments(result: ConstructionResult) -> list[ISegmentRecord]:
    """One record per polygon side, endpoints in lexicographic order."""
    policy = result.policy
    segments = []
    for poly in result.polygons:
        k = len(poly.sides)
        for i, side in enumerate(poly.sides):
            a, b = side.a, side.b
            corner_a, corner_b = (poly.id, i), (poly.id, (i + 1) % k)
            if tuple(b) < tuple(a):
                a, b = b, a
                corner_a, corner_b = corner_b, corner_a
            length = float(np.linalg.norm(b - a))
            if length <= policy.merge_eps:
                raise ClassificationError(
                    "degenerate polygon side", polygon=poly.id, side=i)
            segments.append(ISegmentRecord(
                seg_id=(poly.id, i), owner=poly.id, carrier=side.carrier,
                a=a, b=b, length=length,
                window_carried=side.carrier.is_window,
                end_corners=(corner_a, corner_b),
            ))
    _verify_carrier_incidence(result, segments)
    return segments


def _verify_carrier_incidence(result, segments):
    policy = result.policy
    tol = 1e3 * policy.merge_eps
    for seg in segments:
        if seg.carrier.is_window:
            plane_row = result.window.planes[seg.carrier.index]
            normal, offset = plane_row[:3], plane_row[3]
        else:
            pl = result.polygons[seg.carrier.index].plane
            normal, offset = pl.n, pl.offset
        for point in (seg.a, seg.b):
            if abs(float(point @ normal) - offset) > tol:
                raise ClassificationError(
                    "segment endpoint off its carrier plane",
                    seg=seg.seg_id, carrier=seg.carrier.key())


# ---------------------------------------------------------------------------
# mark placement
# ---------------------------------------------------------------------------

def place_marks(result: ConstructionResult,
                segments: list[ISegmentRecord]) -> TessellationStructure:
    """Populate segment marks and the global vertex table.

    T-vertices come from polygon corners (provenance lookup on the two
    adjacent carriers), X-vertices from transversal crossings of
    opposite-side segments within each carrier plane.  Both placements are
    geometrically verified; any mismatch raises ClassificationError.
    """
    policy = result.policy
    polygons = result.polygons
    by_seg = {s.seg_id: s for s in segments}
    by_owner_carrier = {}
    for s in segments:
        key = (s.owner, s.carrier.key())
        if key in by_owner_carrier:
            raise ClassificationError("owner has two sides on one carrier",
                                      seg=s.seg_id)
        by_owner_carrier[key] = s

    vertices: list[VertexRecord] = []
    corner_vertex: dict[tuple[int, int], int | None] = {}

    def new_vertex(pos, kind, seg_id, source, crossing=None) -> int:
        vid = len(vertices)
        vertices.append(VertexRecord(
            id=vid, position=pos, kind=kind, segment=seg_id,
            source_polygon=source, crossing_segment=crossing))
        return vid

    # --- T marks from polygon corners -------------------------------------
    for poly in polygons:
        k = len(poly.sides)
        loop = poly.loop
        for c in range(k):
            prev_side = by_seg[(poly.id, (c - 1) % k)]
            next_side = by_seg[(poly.id, c)]
            f1, f2 = prev_side.carrier, next_side.carrier
            if f1.is_window or f2.is_window:
                corner_vertex[(poly.id, c)] = None
                continue
            if f1.index == f2.index:
                raise ClassificationError("consecutive sides share a carrier",
                                          polygon=poly.id, corner=c)
            younger, older = max(f1.index, f2.index), min(f1.index, f2.index)
            target = by_owner_carrier.get((younger, ("polygon", older)))
            if target is None:
                raise ClassificationError(
                    "corner matches no segment", polygon=poly.id, corner=c,
                    younger=younger, older=older)
            q = loop[c]
            rel = q - target.a
            param = float(rel @ (target.b - target.a)) / target.length ** 2
            off_line = np.linalg.norm(rel - param * (target.b - target.a))
            if off_line > 1e3 * policy.merge_eps:
                raise ClassificationError(
                    "corner off its resolved segment", polygon=poly.id,
                    corner=c, distance=float(off_line))
            pad = policy.merge_eps / target.length
            if not (pad < param < 1.0 - pad):
                raise ClassificationError(
                    "corner parameter outside the open segment",
                    polygon=poly.id, corner=c, param=param)

            # left/right label in the carrier-plane frame
            carrier_normal = polygons[older].plane.n
            tangent = target.direction
            left = np.cross(carrier_normal, tangent)
            feeler = prev_side if f1.index == older else next_side
            fa, fb = feeler.a, feeler.b
            if np.linalg.norm(fa - q) < np.linalg.norm(fb - q):
                d = fb - fa
            else:
                d = fa - fb
            d = d / np.linalg.norm(d)
            label = "TL" if float(d @ left) > 0 else "TR"

            # the trace direction must point into the half-space of the
            # segment owner's plane that contains the marking polygon
            owner_normal = polygons[younger].plane.n
            s_trace = float(d @ owner_normal)
            s_cell = float((poly.loop.mean(axis=0) - q) @ owner_normal)
            if abs(s_trace) < 1e-9 or abs(s_cell) < 1e-12 or s_trace * s_cell <= 0:
                raise ClassificationError(
                    "left/right frame check failed", polygon=poly.id,
                    corner=c, trace=s_trace, cell=s_cell)

            vid = new_vertex(q, "T", target.seg_id, poly.id)
            corner_vertex[(poly.id, c)] = vid
            target.marks.append(Mark(
                param=param, kind=label, source_polygon=poly.id,
                birth_time=poly.birth_time, vertex=vid, position=q))

    # --- X marks from in-plane crossings -----------------------------------
    by_carrier: dict[int, list[ISegmentRecord]] = {}
    for s in segments:
        if not s.window_carried:
            by_carrier.setdefault(s.carrier.index, []).append(s)

    for carrier_id, segs in by_carrier.items():
        if len(segs) < 2:
            continue
        plane = polygons[carrier_id].plane
        n = plane.n
        # deterministic in-plane basis
        helper = np.array([1.0, 0.0, 0.0]) if abs(n[0]) < 0.9 else np.array([0.0, 1.0, 0.0])
        e1 = np.cross(n, helper)
        e1 /= np.linalg.norm(e1)
        e2 = np.cross(n, e1)
        origin = polygons[carrier_id].loop[0]

        p0 = np.array([[(s.a - origin) @ e1, (s.a - origin) @ e2] for s in segs])
        dvec = np.array([[(s.b - s.a) @ e1, (s.b - s.a) @ e2] for s in segs])
        side = np.array([
            float((polygons[s.owner].loop.mean(axis=0) - origin) @ n) for s in segs
        ])
        if np.min(np.abs(side)) < policy.merge_eps:
            raise ClassificationError("owner polygon lies in its carrier plane",
                                      carrier=carrier_id)
        idx_up = [i for i, s_ in enumerate(side) if s_ > 0]
        idx_dn = [i for i, s_ in enumerate(side) if s_ < 0]

        def crossings(ii, jj):
            """All transversal interior crossings between segment batches."""
            out = []
            if not ii or not jj:
                return out
            pi, di = p0[ii][:, None, :], dvec[ii][:, None, :]
            pj, dj = p0[jj][None, :, :], dvec[jj][None, :, :]
            denom = di[..., 0] * dj[..., 1] - di[..., 1] * dj[..., 0]
            rel = pj - pi
            with np.errstate(divide="ignore", invalid="ignore"):
                ti = (rel[..., 0] * dj[..., 1] - rel[..., 1] * dj[..., 0]) / denom
                tj = (rel[..., 0] * di[..., 1] - rel[..., 1] * di[..., 0]) / denom
            scale = np.abs(denom) > 1e-14
            for ai, bi in zip(*np.nonzero(scale)):
                sa, sb = segs[ii[ai]], segs[jj[bi]]
                pad_a = policy.merge_eps / sa.length
                pad_b = policy.merge_eps / sb.length
                if pad_a < ti[ai, bi] < 1 - pad_a and pad_b < tj[ai, bi] < 1 - pad_b:
                    out.append((ii[ai], jj[bi], float(ti[ai, bi]), float(tj[ai, bi])))
            return out

        same_side = crossings(idx_up, idx_up) + crossings(idx_dn, idx_dn)
        same_side = [c for c in same_side if segs[c[0]].seg_id != segs[c[1]].seg_id]
        if same_side:
            raise ClassificationError(
                "same-side segments cross inside a carrier plane",
                carrier=carrier_id, pairs=[(segs[i].seg_id, segs[j].seg_id)
                                           for i, j, *_ in same_side[:3]])

        for i, j, ti, tj in crossings(idx_up, idx_dn):
            sa, sb = segs[i], segs[j]
            pos = sa.a + ti * (sa.b - sa.a)
            pos_check = sb.a + tj * (sb.b - sb.a)
            if np.linalg.norm(pos - pos_check) > 1e3 * policy.merge_eps:
                raise ClassificationError("crossing points disagree",
                                          segs=(sa.seg_id, sb.seg_id))
            young = max(sa.owner, sb.owner)
            vid = new_vertex(pos, "X", sa.seg_id, young, crossing=sb.seg_id)
            birth = polygons[young].birth_time
            sa.marks.append(Mark(param=ti, kind="X", source_polygon=young,
                                 birth_time=birth, vertex=vid, position=pos))
            sb.marks.append(Mark(param=tj, kind="X", source_polygon=young,
                                 birth_time=birth, vertex=vid, position=pos))

    # --- sort, validate, attach end vertices --------------------------------
    for seg in segments:
        seg.marks.sort(key=lambda m: m.param)
        for m0, m1 in zip(seg.marks, seg.marks[1:]):
            if (m1.param - m0.param) * seg.length <= result.policy.merge_eps:
                raise ClassificationError("marks collide on a segment",
                                          seg=seg.seg_id,
                                          params=(m0.param, m1.param))
        seg.end_vertices = (corner_vertex.get(seg.end_corners[0]),
                            corner_vertex.get(seg.end_corners[1]))
        if not seg.window_carried:
            for m in seg.marks:
                if m.kind in ("TL", "TR") and m.source_polygon <= seg.owner:
                    raise ClassificationError(
                        "T mark from a polygon not younger than the owner",
                        seg=seg.seg_id, source=m.source_polygon)

    edges = _build_edges(segments)
    structure = TessellationStructure(
        result=result, segments=segments, vertices=vertices, edges=edges,
        corner_vertex=corner_vertex, by_seg=by_seg)
    _attach_incidence(structure)
    return structure


def _build_edges(segments) -> list[EdgeRecord]:
    edges = []
    for seg in segments:
        kinds = ["B"] + [m.kind for m in seg.marks] + ["B"]
        points = [seg.a] + [m.position for m in seg.marks] + [seg.b]
        vids = [seg.end_vertices[0]] + [m.vertex for m in seg.marks] \
            + [seg.end_vertices[1]]
        for i in range(len(kinds) - 1):
            tx, p1, z1 = edge_classes(kinds[i], kinds[i + 1])
            interior = (not seg.window_carried
                        and vids[i] is not None and vids[i + 1] is not None)
            edges.append(EdgeRecord(
                seg_id=seg.seg_id, index=i, kinds=(kinds[i], kinds[i + 1]),
                v0=vids[i], v1=vids[i + 1], p0=points[i], p1=points[i + 1],
                class_tx=tx, class_p1=p1, class_z1=z1, interior=interior))
    return edges


def _attach_incidence(structure: TessellationStructure):
    for edge in structure.edges:
        for vid in (edge.v0, edge.v1):
            if vid is not None:
                structure.vertices[vid].incident.append(edge)
    for v in structure.vertices:
        if len(v.incident) != 4:
            raise ClassificationError(
                "vertex does not have exactly four incident edges",
                vertex=v.id, kind=v.kind, count=len(v.incident))


# ---------------------------------------------------------------------------
# geometric cross-check of vertex types
# ---------------------------------------------------------------------------

def classify_vertices(structure: TessellationStructure,
                      angular_tol: float = 1e-5) -> None:
    """Re-derive every vertex type from its incident edge directions and
    compare with provenance; raise on any disagreement.

    An X-vertex shows two anti-collinear direction pairs among its four
    incident edges, a T-vertex exactly one.  The tolerance sits far above
    the position-noise floor and far below generic angles.
    """
    if not structure.vertices:
        return
    dirs = np.zeros((len(structure.vertices), 4, 3))
    for v in structure.vertices:
        for k, edge in enumerate(v.incident):
            far = edge.p1 if edge.v0 == v.id else edge.p0
            d = far - v.position
            dirs[v.id, k] = d / np.linalg.norm(d)
    pair_idx = [(0, 1), (0, 2), (0, 3), (1, 2), (1, 3), (2, 3)]
    i_idx = [p[0] for p in pair_idx]
    j_idx = [p[1] for p in pair_idx]
    di = dirs[:, i_idx, :]
    dj = dirs[:, j_idx, :]
    cross_norm = np.linalg.norm(np.cross(di, dj), axis=2)
    dots = np.einsum("vpk,vpk->vp", di, dj)
    anti = (cross_norm < angular_tol) & (dots < 0)
    n_pairs = anti.sum(axis=1)
    for v in structure.vertices:
        expected = 2 if v.kind == "X" else 1
        if n_pairs[v.id] != expected:
            raise ClassificationError(
                "geometric and provenance classifiers disagree",
                vertex=v.id, kind=v.kind, collinear_pairs=int(n_pairs[v.id]))


def build_structure(result: ConstructionResult,
                    verify_geometry: bool = True) -> TessellationStructure:
    """Full pipeline: segments, marks, edges, incidence, cross-checks."""
    segments = extract_segments(result)
    structure = place_marks(result, segments)
    if verify_geometry:
        classify_vertices(structure)
    return structure
