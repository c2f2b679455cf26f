"""Convex polytope primitives: planes, half-space splitting, incidence,
mean width and point merging.

Polytopes carry their full vertex/edge/facet incidence and are rebuilt by
clipping the cached complex when split, which is the hot path of the
tessellation engine.  Facet loops are kept counter-clockwise as seen from
outside, so outward normals, volumes and dihedral angles all come from the
cached structure without re-solving anything.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np


class GeometryError(Exception):
    pass


class PlaneMissesInterior(GeometryError):
    """The splitting plane leaves one side empty: the caller must re-sample."""


class NearVertexPlane(GeometryError):
    """The splitting plane passes within merge tolerance of a vertex."""


class DegeneratePolytope(GeometryError):
    pass


@dataclass(frozen=True)
class Plane:
    """Oriented plane {x : <normal, x> = offset}; the plus side is
    <normal, x> > offset."""

    normal: tuple[float, float, float]
    offset: float

    def __post_init__(self):
        n = np.asarray(self.normal, dtype=float)
        if abs(np.linalg.norm(n) - 1.0) > 1e-12:
            raise GeometryError("plane normal must be a unit vector")

    @property
    def n(self) -> np.ndarray:
        return np.asarray(self.normal, dtype=float)

    def signed_distance(self, points: np.ndarray) -> np.ndarray:
        return np.asarray(points, dtype=float) @ self.n - self.offset


@dataclass(frozen=True)
class SourceTag:
    """Provenance of a cell facet: a window facet or a cell-separating
    polygon born during the construction."""

    kind: str  # "window" | "polygon"
    index: int

    def __post_init__(self):
        if self.kind not in ("window", "polygon"):
            raise ValueError(f"unknown tag kind {self.kind!r}")

    @property
    def is_window(self) -> bool:
        return self.kind == "window"

    def key(self) -> tuple[str, int]:
        return (self.kind, self.index)


@dataclass(frozen=True)
class TolerancePolicy:
    """Shared tolerances: merge_eps identifies points, angular_eps tests
    collinearity/coplanarity of unit vectors."""

    merge_eps: float
    angular_eps: float = 1e-9

    @classmethod
    def for_window(cls, side: float) -> "TolerancePolicy":
        return cls(merge_eps=1e-9 * side, angular_eps=1e-9)

    def __post_init__(self):
        if self.merge_eps <= 0 or self.angular_eps <= 0:
            raise ValueError("tolerances must be positive")


class ConvexPolytope:
    """Bounded convex polytope with cached incidence.

    Attributes
    ----------
    planes : (F, 4) array, rows (nx, ny, nz, offset) with outward normals,
        so the body is the set with ``planes[:, :3] @ x <= planes[:, 3]``.
    tags : list of SourceTag, one per plane.
    vertices : (V, 3) array.
    facets : list of index arrays, loop per plane, CCW seen from outside.
    """

    __slots__ = ("planes", "tags", "vertices", "facets", "_edges", "_volume",
                 "_mean_width")

    def __init__(self, planes, tags, vertices, facets):
        self.planes = np.asarray(planes, dtype=float)
        self.tags = list(tags)
        self.vertices = np.asarray(vertices, dtype=float)
        self.facets = [np.asarray(f, dtype=np.intp) for f in facets]
        self._edges = None
        self._volume = None
        self._mean_width = None
        if len(self.vertices) < 4:
            raise DegeneratePolytope("polytope needs at least 4 vertices")
        if len(self.facets) != len(self.planes) or len(self.tags) != len(self.planes):
            raise DegeneratePolytope("facet/plane/tag counts disagree")

    # -- incidence ---------------------------------------------------------

    @property
    def edges(self) -> dict:
        """Map (i, j) vertex-index pair (i < j) -> (facet_a, facet_b)."""
        if self._edges is None:
            found: dict[tuple[int, int], list[int]] = {}
            for fi, loop in enumerate(self.facets):
                for a, b in zip(loop, np.roll(loop, -1)):
                    key = (int(a), int(b)) if a < b else (int(b), int(a))
                    found.setdefault(key, []).append(fi)
            for key, fs in found.items():
                if len(fs) != 2:
                    raise DegeneratePolytope(
                        f"edge {key} belongs to {len(fs)} facets"
                    )
            self._edges = {k: (v[0], v[1]) for k, v in found.items()}
        return self._edges

    def euler_characteristic(self) -> int:
        return len(self.vertices) - len(self.edges) + len(self.facets)

    # -- metrics -----------------------------------------------------------

    def volume(self) -> float:
        if self._volume is None:
            vol = 0.0
            for loop in self.facets:
                pts = self.vertices[loop]
                base = pts[0]
                for a, b in zip(pts[1:-1], pts[2:]):
                    vol += np.dot(base, np.cross(a, b))
            self._volume = vol / 6.0
        return self._volume

    def mean_width(self) -> float:
        """Rotation-averaged support width: (1/4pi) sum of edge length
        times exterior dihedral angle."""
        if self._mean_width is None:
            pairs = np.array(list(self.edges.keys()), dtype=np.intp)
            facet_pairs = np.array(list(self.edges.values()), dtype=np.intp)
            seg = self.vertices[pairs[:, 1]] - self.vertices[pairs[:, 0]]
            lengths = np.sqrt((seg * seg).sum(axis=1))
            na = self.planes[facet_pairs[:, 0], :3]
            nb = self.planes[facet_pairs[:, 1], :3]
            cross = np.cross(na, nb)
            sin = np.sqrt((cross * cross).sum(axis=1))
            cos = (na * nb).sum(axis=1)
            angles = np.arctan2(sin, cos)
            self._mean_width = float((lengths * angles).sum()) / (4.0 * math.pi)
        return self._mean_width

    def centroid(self) -> np.ndarray:
        return self.vertices.mean(axis=0)

    def diameter(self) -> float:
        v = self.vertices
        d2 = ((v[:, None, :] - v[None, :, :]) ** 2).sum(axis=2)
        return math.sqrt(float(d2.max()))

    def support_interval(self, direction: np.ndarray) -> tuple[float, float]:
        proj = self.vertices @ np.asarray(direction, dtype=float)
        return float(proj.min()), float(proj.max())

    def width(self, direction: np.ndarray) -> float:
        lo, hi = self.support_interval(direction)
        return hi - lo

    def contains(self, point, tol: float = 0.0) -> bool:
        return bool(np.all(self.planes[:, :3] @ np.asarray(point, float)
                           <= self.planes[:, 3] + tol))

    def scaled(self, factor: float) -> "ConvexPolytope":
        if factor <= 0:
            raise ValueError("scale factor must be positive")
        planes = self.planes.copy()
        planes[:, 3] *= factor
        return ConvexPolytope(planes, self.tags, self.vertices * factor,
                              self.facets)


def mean_width(poly: ConvexPolytope) -> float:
    """Rotation-averaged support width of a convex polytope."""
    return poly.mean_width()


def make_window(side: float) -> ConvexPolytope:
    """Axis-aligned cube [0, side]^3 with window facet tags 0..5."""
    if side <= 0:
        raise ValueError("window side must be positive")
    s = float(side)
    verts = np.array([
        [0, 0, 0], [s, 0, 0], [s, s, 0], [0, s, 0],
        [0, 0, s], [s, 0, s], [s, s, s], [0, s, s],
    ], dtype=float)
    # outward normals -x, +x, -y, +y, -z, +z
    planes = np.array([
        [-1, 0, 0, 0], [1, 0, 0, s],
        [0, -1, 0, 0], [0, 1, 0, s],
        [0, 0, -1, 0], [0, 0, 1, s],
    ], dtype=float)
    facets = [
        [0, 4, 7, 3],  # x = 0
        [1, 2, 6, 5],  # x = s
        [0, 1, 5, 4],  # y = 0
        [2, 3, 7, 6],  # y = s
        [0, 3, 2, 1],  # z = 0
        [4, 5, 6, 7],  # z = s
    ]
    tags = [SourceTag("window", i) for i in range(6)]
    return ConvexPolytope(planes, tags, verts, facets)


def split_polytope(poly: ConvexPolytope, plane: Plane, new_tag: SourceTag,
                   merge_eps: float):
    """Split ``poly`` by ``plane`` into (plus side, minus side).

    Returns ``(plus, minus, cut_loop, cut_carriers)`` where ``cut_loop`` is
    the intersection polygon ordered so its normal matches ``plane`` and
    ``cut_carriers[i]`` is the facet tag of ``poly`` containing the side
    from ``cut_loop[i]`` to ``cut_loop[i+1]``.

    Raises :class:`PlaneMissesInterior` if one side is empty and
    :class:`NearVertexPlane` if any vertex is within ``merge_eps`` of the
    plane (callers re-sample; this keeps the clip generic).
    """
    dist = plane.signed_distance(poly.vertices)
    if np.min(np.abs(dist)) < merge_eps:
        raise NearVertexPlane("plane passes too close to a vertex")
    plus_mask = dist > 0
    if plus_mask.all() or not plus_mask.any():
        raise PlaneMissesInterior("plane does not cross the interior")

    # one intersection point per crossed edge, shared by all facet loops
    cut_points: dict[tuple[int, int], int] = {}
    new_coords: list[np.ndarray] = []

    def cut_index(i: int, j: int) -> int:
        key = (i, j) if i < j else (j, i)
        idx = cut_points.get(key)
        if idx is None:
            di, dj = dist[key[0]], dist[key[1]]
            t = di / (di - dj)
            pt = poly.vertices[key[0]] + t * (poly.vertices[key[1]] - poly.vertices[key[0]])
            idx = len(new_coords)
            new_coords.append(pt)
            cut_points[key] = idx
        return idx

    n_old = len(poly.vertices)

    def clip_loop(loop: np.ndarray, keep_plus: bool):
        """Sutherland-Hodgman on one facet loop; cut vertices get indices
        offset by n_old.  Returns (clipped loop, cut pair) where cut pair
        is (exit_cut, entry_cut) in traversal order, or None."""
        out: list[int] = []
        cuts: list[int] = []
        k = len(loop)
        for idx in range(k):
            a = int(loop[idx])
            b = int(loop[(idx + 1) % k])
            a_in = plus_mask[a] if keep_plus else not plus_mask[a]
            b_in = plus_mask[b] if keep_plus else not plus_mask[b]
            if a_in:
                out.append(a)
            if a_in != b_in:
                ci = cut_index(a, b) + n_old
                out.append(ci)
                cuts.append(ci)
        if len(out) < 3:
            return None, None
        return out, cuts

    def assemble(keep_plus: bool):
        loops = []
        kept_planes = []
        kept_tags = []
        cut_edges = []  # (cut_a, cut_b, facet tag) per clipped facet
        for fi, loop in enumerate(poly.facets):
            clipped, cuts = clip_loop(loop, keep_plus)
            if clipped is None:
                continue
            loops.append(clipped)
            kept_planes.append(poly.planes[fi])
            kept_tags.append(poly.tags[fi])
            if cuts:
                if len(cuts) != 2:
                    raise GeometryError("facet crossed the plane more than once")
                cut_edges.append((cuts[0], cuts[1], poly.tags[fi]))
        # chain the per-facet cut edges into the section polygon
        nxt = {}
        for a, b, tag in cut_edges:
            # orientation within each facet alternates; build an adjacency
            nxt.setdefault(a, []).append((b, tag))
            nxt.setdefault(b, []).append((a, tag))
        start = cut_edges[0][0]
        loop_idx = [start]
        carriers = []
        prev = None
        cur = start
        while True:
            options = nxt[cur]
            nxt_pt, tag = options[0] if (prev is None or options[0][0] != prev) else options[1]
            carriers.append(tag)
            prev, cur = cur, nxt_pt
            if cur == start:
                break
            loop_idx.append(cur)
        if len(loop_idx) != len(cut_edges):
            raise GeometryError("section polygon failed to close")
        section = [loop_idx, carriers]
        # the section facet for this child
        n_out = plane.n if not keep_plus else -plane.n
        off = plane.offset if not keep_plus else -plane.offset
        loops.append(loop_idx)
        kept_planes.append(np.array([n_out[0], n_out[1], n_out[2], off]))
        kept_tags.append(new_tag)
        # compact vertex numbering
        used = sorted({v for lp in loops for v in lp})
        remap = {v: i for i, v in enumerate(used)}
        coords = np.array([
            poly.vertices[v] if v < n_old else new_coords[v - n_old]
            for v in used
        ])
        new_loops = [np.array([remap[v] for v in lp], dtype=np.intp) for lp in loops]
        # orient the section loop outward (the clipped old loops keep their
        # orientation from the parent)
        sec = new_loops[-1]
        pts = coords[sec]
        normal_est = np.zeros(3)
        base = pts[0]
        for a, b in zip(pts[1:-1], pts[2:]):
            normal_est += np.cross(a - base, b - base)
        if np.dot(normal_est, n_out) < 0:
            new_loops[-1] = sec[::-1]
        child = ConvexPolytope(np.array(kept_planes), kept_tags, coords, new_loops)
        return child, section

    plus, section_plus = assemble(True)
    minus, _ = assemble(False)

    # canonical cut polygon oriented along the plane normal, in global
    # cut-point coordinates
    loop_idx, carriers = section_plus
    pts = np.array([new_coords[v - n_old] for v in loop_idx])
    normal_est = np.zeros(3)
    base = pts[0]
    for a, b in zip(pts[1:-1], pts[2:]):
        normal_est += np.cross(a - base, b - base)
    if np.dot(normal_est, plane.n) < 0:
        pts = pts[::-1]
        # edge i of the reversed loop is edge (k-2-i) of the original,
        # except the closing edge which keeps its carrier
        rev = carriers[::-1]
        carriers = rev[1:] + rev[:1]
    return plus, minus, pts, carriers


# ---------------------------------------------------------------------------
# point merging
# ---------------------------------------------------------------------------

def point_key(x, merge_eps) -> tuple[int, int, int]:
    """Grid key such that points within merge_eps land in equal or adjacent
    cells; dedup must scan the 27-neighborhood.  Accepts a TolerancePolicy
    or a plain length."""
    if isinstance(merge_eps, TolerancePolicy):
        merge_eps = merge_eps.merge_eps
    p = np.asarray(x, dtype=float)
    if not np.all(np.isfinite(p)):
        raise ValueError("point must be finite")
    return tuple(int(math.floor(c / merge_eps)) for c in p)


class PointMerger:
    """Union-find point identification on the merge grid.

    Points closer than merge_eps are merged into one representative; the
    merge relation is closed transitively, so chains of nearby points
    collapse to a single canonical point.
    """

    def __init__(self, merge_eps: float):
        self.eps = merge_eps
        self.points: list[np.ndarray] = []
        self.parent: list[int] = []
        self.grid: dict[tuple[int, int, int], list[int]] = {}

    def _find(self, i: int) -> int:
        while self.parent[i] != i:
            self.parent[i] = self.parent[self.parent[i]]
            i = self.parent[i]
        return i

    def add(self, x) -> int:
        """Insert a point, returning the canonical index it merged into."""
        p = np.asarray(x, dtype=float)
        key = point_key(p, self.eps)
        idx = len(self.points)
        self.points.append(p)
        self.parent.append(idx)
        root = idx
        for dx in (-1, 0, 1):
            for dy in (-1, 0, 1):
                for dz in (-1, 0, 1):
                    cell = (key[0] + dx, key[1] + dy, key[2] + dz)
                    for other in self.grid.get(cell, ()):
                        if np.linalg.norm(self.points[other] - p) <= self.eps:
                            ra, rb = self._find(root), self._find(other)
                            if ra != rb:
                                self.parent[ra] = rb
                            root = rb
        self.grid.setdefault(key, []).append(idx)
        return self._find(idx)

    def canonical(self, idx: int) -> int:
        return self._find(idx)
