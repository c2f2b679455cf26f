"""Unbiased minus-sampling estimators over replicate constructions.

Objects are counted when their circumcenter falls in the window shrunk by
a per-side margin and when they carry no window-clipped structure, which
removes boundary bias.  Edge-class proportions, vertex neighborhood means,
plate/facet/cell adjacencies and the segment-level histograms all come out
of one pass over a classified structure; replicate-level values are then
averaged with standard errors across replicates.
"""

from __future__ import annotations

import math
from collections import defaultdict
from dataclasses import dataclass, field

import numpy as np

from .combinatorics import (ClassificationError, EdgeRecord,
                            TessellationStructure)

EDGE_CLASSES = ("TT", "XX", "TX", "P1,1", "P1,2", "P1,3", "Z1,0", "Z1,1", "Z1,2")


class EstimationError(Exception):
    """No eligible objects; enlarge t or shrink the margin."""


def _edge_class_names(edge: EdgeRecord):
    return (edge.class_tx, f"P1,{edge.class_p1}", f"Z1,{edge.class_z1}")


# ---------------------------------------------------------------------------
# smallest enclosing balls (circumcenters for the counting rule)
# ---------------------------------------------------------------------------

def _circle_through(p, q, r):
    ax, ay = p
    bx, by = q
    cx, cy = r
    d = 2.0 * (ax * (by - cy) + bx * (cy - ay) + cx * (ay - by))
    if abs(d) < 1e-300:
        return (0.5 * (ax + cx), 0.5 * (ay + cy))
    pa = ax * ax + ay * ay
    pb = bx * bx + by * by
    pc = cx * cx + cy * cy
    return ((pa * (by - cy) + pb * (cy - ay) + pc * (ay - by)) / d,
            (pa * (cx - bx) + pb * (ax - cx) + pc * (bx - ax)) / d)


def min_enclosing_circle(points) -> np.ndarray:
    """Center of the smallest circle containing the points (Welzl-style
    move-to-front on plain floats; point sets here are tiny)."""
    pts = [(float(p[0]), float(p[1])) for p in points]
    cx, cy = pts[0]
    r2 = 0.0

    def d2(p, x, y):
        return (p[0] - x) ** 2 + (p[1] - y) ** 2

    for i in range(1, len(pts)):
        if d2(pts[i], cx, cy) <= r2 * (1 + 1e-10):
            continue
        cx, cy = pts[i]
        r2 = 0.0
        for j in range(i):
            if d2(pts[j], cx, cy) <= r2 * (1 + 1e-10):
                continue
            cx = 0.5 * (pts[i][0] + pts[j][0])
            cy = 0.5 * (pts[i][1] + pts[j][1])
            r2 = d2(pts[i], cx, cy)
            for k in range(j):
                if d2(pts[k], cx, cy) <= r2 * (1 + 1e-10):
                    continue
                cx, cy = _circle_through(pts[i], pts[j], pts[k])
                r2 = d2(pts[i], cx, cy)
    return np.array([cx, cy])


def _sphere_through(support):
    """Center of the smallest sphere with all support points on its rim
    (2-4 affinely independent points)."""
    pts = [np.asarray(p, float) for p in support]
    if len(pts) == 1:
        return pts[0]
    base = pts[0]
    basis = np.array([p - base for p in pts[1:]])        # k x 3
    rhs = 0.5 * np.array([float(b @ b) for b in basis])  # |p-base|^2 / 2
    gram = basis @ basis.T
    coef = np.linalg.solve(gram, rhs)
    return base + basis.T @ coef


def min_enclosing_sphere(points: np.ndarray) -> np.ndarray:
    """Center of the smallest ball containing the 3-d points."""
    pts = np.asarray(points, dtype=float)

    def check(c, r2, p):
        return ((p - c) ** 2).sum() <= r2 * (1 + 1e-10)

    c, r2 = pts[0].copy(), 0.0
    for i in range(1, len(pts)):
        if check(c, r2, pts[i]):
            continue
        c, r2 = pts[i].copy(), 0.0
        for j in range(i):
            if check(c, r2, pts[j]):
                continue
            c = 0.5 * (pts[i] + pts[j])
            r2 = ((pts[i] - c) ** 2).sum()
            for k in range(j):
                if check(c, r2, pts[k]):
                    continue
                c = _sphere_through([pts[i], pts[j], pts[k]])
                r2 = ((pts[i] - c) ** 2).sum()
                for m in range(k):
                    if check(c, r2, pts[m]):
                        continue
                    c = _sphere_through([pts[i], pts[j], pts[k], pts[m]])
                    r2 = ((pts[i] - c) ** 2).sum()
    return c


# ---------------------------------------------------------------------------
# plate extraction: planar faces of each cell-separating polygon
# ---------------------------------------------------------------------------

@dataclass
class PlateRecord:
    polygon: int
    node_points: np.ndarray          # (k, 2) in-plane
    boundary_edges: list[EdgeRecord]
    circumcenter: np.ndarray         # 3-d
    clean: bool                      # no window-clipped structure on its rim


def _plane_basis(normal: np.ndarray):
    nx, ny, nz = float(normal[0]), float(normal[1]), float(normal[2])
    hx, hy, hz = (1.0, 0.0, 0.0) if abs(nx) < 0.9 else (0.0, 1.0, 0.0)
    ex, ey, ez = ny * hz - nz * hy, nz * hx - nx * hz, nx * hy - ny * hx
    norm = math.sqrt(ex * ex + ey * ey + ez * ez)
    e1 = np.array([ex / norm, ey / norm, ez / norm])
    e2 = np.array([ny * e1[2] - nz * e1[1],
                   nz * e1[0] - nx * e1[2],
                   nx * e1[1] - ny * e1[0]])
    return e1, e2


def extract_plates(structure: TessellationStructure) -> list[PlateRecord]:
    """Faces of the arrangement each polygon induces together with the
    segments it carries; every face is one plate of the tessellation.

    The arrangement graph is assembled purely combinatorially from the
    edge records (nodes are vertex ids or polygon corners), then faces are
    walked with the rotate-clockwise-at-each-node rule.  Per connected
    component the positive-area face count must equal E - V + 1; window
    effects can only merge boundary plates, which stay ineligible.
    """
    result = structure.result
    by_owner = defaultdict(list)
    by_carrier = defaultdict(list)
    for seg in structure.segments:
        by_owner[seg.owner].append(seg)
        if not seg.carrier.is_window:
            by_carrier[seg.carrier.index].append(seg)
    edges_by_seg = defaultdict(list)
    for e in structure.edges:
        edges_by_seg[e.seg_id].append(e)
    for lst in edges_by_seg.values():
        lst.sort(key=lambda e: e.index)

    plates: list[PlateRecord] = []
    for poly in result.polygons:
        e1, e2 = _plane_basis(poly.plane.n)
        origin = poly.loop[0]

        def to2d(p):
            rel = p - origin
            return (float(rel @ e1), float(rel @ e2))

        def node_key(seg, end):
            vid = seg.end_vertices[end]
            return ("v", vid) if vid is not None else ("c",) + seg.end_corners[end]

        nodes: dict = {}
        adjacency: dict = defaultdict(list)
        graph_edges: list = []

        member_segments = by_owner[poly.id] + by_carrier.get(poly.id, [])
        for seg in member_segments:
            keys = [node_key(seg, 0)] + [("v", m.vertex) for m in seg.marks] \
                + [node_key(seg, 1)]
            for edge in edges_by_seg[seg.seg_id]:
                k0, k1 = keys[edge.index], keys[edge.index + 1]
                if k0 not in nodes:
                    nodes[k0] = to2d(edge.p0)
                if k1 not in nodes:
                    nodes[k1] = to2d(edge.p1)
                idx = len(graph_edges)
                graph_edges.append((k0, k1, edge))
                adjacency[k0].append((idx, False))
                adjacency[k1].append((idx, True))
        if not graph_edges:
            continue

        def tail_head(half):
            idx, reverse = half
            k0, k1, _ = graph_edges[idx]
            return (k1, k0) if reverse else (k0, k1)

        outgoing: dict = {}
        for key, incident in adjacency.items():
            px, py = nodes[key]
            ranked = []
            for half in incident:
                other = nodes[tail_head(half)[1]]
                ranked.append((math.atan2(other[1] - py, other[0] - px), half))
            ranked.sort()
            outgoing[key] = [h for _, h in ranked]

        visited = set()
        faces = []
        for hs in outgoing.values():
            for start in hs:
                if start in visited:
                    continue
                face = []
                half = start
                while half not in visited:
                    visited.add(half)
                    face.append(half)
                    head = tail_head(half)[1]
                    ring = outgoing[head]
                    pos = ring.index((half[0], not half[1]))
                    half = ring[(pos - 1) % len(ring)]
                faces.append(face)

        # union-find components: the rotation-system walk yields exactly
        # E - V + 2 faces per component; the single most negative one is
        # the outer face, everything else is a plate (sliver plates can be
        # arbitrarily small, so no area threshold is used)
        parent = {key: key for key in nodes}

        def find(x):
            while parent[x] != x:
                parent[x] = parent[parent[x]]
                x = parent[x]
            return x

        for k0, k1, _ in graph_edges:
            parent[find(k0)] = find(k1)
        comp_nodes: dict = defaultdict(int)
        comp_edges: dict = defaultdict(int)
        for key in nodes:
            comp_nodes[find(key)] += 1
        for k0, _k1, _ in graph_edges:
            comp_edges[find(k0)] += 1

        by_component: dict = defaultdict(list)
        for face in faces:
            loop_keys = [tail_head(h)[0] for h in face]
            pts = np.array([nodes[k] for k in loop_keys])
            area = 0.5 * float(np.sum(
                pts[:, 0] * np.roll(pts[:, 1], -1)
                - np.roll(pts[:, 0], -1) * pts[:, 1]))
            by_component[find(loop_keys[0])].append((area, face, loop_keys, pts))
        for comp, comp_faces in by_component.items():
            cycles = comp_edges[comp] - comp_nodes[comp] + 1
            if len(comp_faces) != cycles + 1:
                raise ClassificationError(
                    "face walk disagrees with the Euler relation",
                    polygon=poly.id, walked=len(comp_faces),
                    expected=cycles + 1)
            if cycles <= 0:
                continue
            comp_faces.sort(key=lambda item: item[0])
            for _area, face, loop_keys, pts in comp_faces[1:]:
                bedges = [graph_edges[h[0]][2] for h in face]
                clean = all(k[0] == "v" for k in loop_keys) and all(
                    not structure.by_seg[e.seg_id].window_carried
                    for e in bedges)
                center2 = min_enclosing_circle(pts)
                plates.append(PlateRecord(
                    polygon=poly.id, node_points=pts, boundary_edges=bedges,
                    circumcenter=origin + center2[0] * e1 + center2[1] * e2,
                    clean=clean))
    return plates


# ---------------------------------------------------------------------------
# point-in-convex-loop classification (edge/facet matching)
# ---------------------------------------------------------------------------

def classify_points_in_loop(points2, loop2, tol):
    """Vectorized containment codes against a convex loop:
    0 strictly inside, 1 on the rim, 2 outside."""
    pts = np.atleast_2d(np.asarray(points2, dtype=float))
    loop = np.asarray(loop2, dtype=float)
    a = loop
    b = np.roll(loop, -1, axis=0)
    e = b - a
    lengths = np.linalg.norm(e, axis=1)
    area2 = float(np.sum(a[:, 0] * b[:, 1] - b[:, 0] * a[:, 1]))
    orient = 1.0 if area2 >= 0 else -1.0
    rel = pts[:, None, :] - a[None, :, :]
    dist = orient * (e[None, :, 0] * rel[..., 1] - e[None, :, 1] * rel[..., 0]) \
        / lengths[None, :]
    proj = (rel[..., 0] * e[None, :, 0] + rel[..., 1] * e[None, :, 1]) \
        / (lengths[None, :] ** 2)
    dmin = dist.min(axis=1)
    codes = np.full(len(pts), 2, dtype=int)
    codes[dmin > tol] = 0
    near = (np.abs(dist) <= tol) & (proj >= -1e-9) & (proj <= 1.0 + 1e-9)
    codes[(dmin >= -tol) & (dmin <= tol) & near.any(axis=1)] = 1
    return codes


# ---------------------------------------------------------------------------
# one-replicate summary
# ---------------------------------------------------------------------------

SEG_JOINT_N_CAP = 60
SEG_JOINT_XX_CAP = 6


@dataclass
class ReplicateStats:
    """Raw per-replicate estimates; one value per reported quantity plus
    compact raw histograms for conditional (mechanism) tests."""

    values: dict = field(default_factory=dict)
    counters: dict = field(default_factory=dict)
    arrays: dict = field(default_factory=dict)


def validate_realization(structure: TessellationStructure) -> None:
    """Per-realization exact identities (no tolerance)."""
    n_marks = sum(len(s.marks) for s in structure.segments)
    if len(structure.edges) != n_marks + len(structure.segments):
        raise ClassificationError("edge count must equal marks + segments")
    for e in structure.edges:
        if e.class_p1 == 3 and (e.class_z1 != 2 or e.class_tx != "TT"):
            raise ClassificationError("a whole-segment edge must be TT and Z1,2",
                                      seg=e.seg_id)
        if (e.class_z1 == 2) != (e.class_p1 == 3):
            raise ClassificationError("Z1,2 and P1,3 must coincide",
                                      seg=e.seg_id)


def replicate_statistics(structure: TessellationStructure, margin: float,
                         with_heavy_adjacencies: bool = True) -> ReplicateStats:
    """All estimator rows for one construction at one margin."""
    if not 0 <= margin < 0.4:
        raise ValueError("margin must lie in [0, 0.4)")
    result = structure.result
    side = result.window_side
    lo, hi = margin * side, (1.0 - margin) * side

    def in_reduced(p) -> bool:
        return (lo <= p[0] <= hi) and (lo <= p[1] <= hi) and (lo <= p[2] <= hi)

    validate_realization(structure)

    stats = ReplicateStats()
    vals = stats.values
    counters = stats.counters

    # --- vertices -----------------------------------------------------------
    verts = [v for v in structure.vertices if in_reduced(v.position)]
    n_v = len(verts)
    if n_v == 0:
        raise EstimationError("no eligible vertices; enlarge t or lower margin")
    vals["eps_V[T]"] = sum(1 for v in verts if v.kind == "T") / n_v
    counters["n_vertices"] = n_v

    # --- edges ----------------------------------------------------------------
    eligible_edges = [e for e in structure.edges
                      if e.interior and in_reduced(e.midpoint())]
    n_e = len(eligible_edges)
    if n_e == 0:
        raise EstimationError("no eligible edges")
    counters["n_edges"] = n_e
    class_counts = {name: 0 for name in EDGE_CLASSES}
    for e in eligible_edges:
        for name in _edge_class_names(e):
            class_counts[name] += 1
    for name in EDGE_CLASSES:
        vals[f"eps_E[{name}]"] = class_counts[name] / n_e
    vals["lambda_E/lambda_V"] = n_e / n_v

    # --- vertex-centred means (usable = all four incident edges resolved) ----
    mu_sums = {(tag, c): 0.0 for c in EDGE_CLASSES
               for tag in ("V", "V[T]", "V[X]")}
    eta = dict.fromkeys(("V,T", "V,X", "T,T", "T,X", "X,T", "X,X"), 0.0)
    n_usable = {"V": 0, "V[T]": 0, "V[X]": 0}
    skipped = 0
    for v in verts:
        if any(not e.interior for e in v.incident):
            skipped += 1
            continue
        tag = "V[T]" if v.kind == "T" else "V[X]"
        n_usable["V"] += 1
        n_usable[tag] += 1
        for e in v.incident:
            for name in _edge_class_names(e):
                mu_sums[("V", name)] += 1
                mu_sums[(tag, name)] += 1
        neighbors = [e.v1 if e.v0 == v.id else e.v0 for e in v.incident]
        n_t = sum(1 for nb in neighbors if structure.vertices[nb].kind == "T")
        eta["V,T"] += n_t
        eta["V,X"] += 4 - n_t
        if v.kind == "T":
            eta["T,T"] += n_t
            eta["T,X"] += 4 - n_t
        else:
            eta["X,T"] += n_t
            eta["X,X"] += 4 - n_t
    counters["skipped_vertices"] = skipped
    if min(n_usable.values()) == 0:
        raise EstimationError("no usable vertices for neighborhood means")
    for cls in EDGE_CLASSES:
        for tag in ("V", "V[T]", "V[X]"):
            vals[f"mu_{tag},E[{cls}]"] = mu_sums[(tag, cls)] / n_usable[tag]
    vals["eta_V,V[T]"] = eta["V,T"] / n_usable["V"]
    vals["eta_V,V[X]"] = eta["V,X"] / n_usable["V"]
    vals["eta_V[T],V[T]"] = eta["T,T"] / n_usable["V[T]"]
    vals["eta_V[T],V[X]"] = eta["T,X"] / n_usable["V[T]"]
    vals["eta_V[X],V[T]"] = eta["X,T"] / n_usable["V[X]"]
    vals["eta_V[X],V[X]"] = eta["X,X"] / n_usable["V[X]"]

    # --- segments ---------------------------------------------------------------
    # Complete-segment statistics are size-biased: a segment is dropped
    # when it reaches the window, which happens more often to long ones.
    # The bias decays exponentially in the margin, so the histograms are
    # taken both at the configured margin and at a wide one.
    wide = max(margin, min(margin + 0.10, 0.38))
    wlo, whi = wide * side, (1.0 - wide) * side
    for prefix, s_lo, s_hi in (("", lo, hi), ("wide:", wlo, whi)):
        full_segments = [
            s for s in structure.segments
            if not s.window_carried
            and s.end_vertices[0] is not None and s.end_vertices[1] is not None
            and bool(np.all(s.midpoint() >= s_lo) and np.all(s.midpoint() <= s_hi))
        ]
        if not full_segments:
            if not prefix:
                raise EstimationError("no eligible segments")
            continue      # wide margin can be empty on small constructions
        if not prefix:
            counters["n_segments"] = len(full_segments)
            vals["lambda_I1/lambda_V"] = len(full_segments) / n_v
        else:
            counters["n_segments_wide"] = len(full_segments)

        nu_head, nuxx_head = 12, 6
        nu_pmf = np.zeros(nu_head + 1)
        nuxx_pmf = np.zeros(nuxx_head + 1)
        if not prefix:
            joint = np.zeros((SEG_JOINT_N_CAP + 1, SEG_JOINT_XX_CAP + 1))
            stats.arrays["seg_joint"] = joint
        t_frac = x_frac = l_frac = lr_frac = 0.0
        n_marked = n_with_t = 0
        for s in full_segments:
            if s.nu <= nu_head:
                nu_pmf[s.nu] += 1
            kinds = s.count_kinds()
            n_t_marks = kinds["TL"] + kinds["TR"]
            mark_kinds = [m.kind for m in s.marks]
            xx = sum(1 for k0, k1 in zip(mark_kinds, mark_kinds[1:])
                     if k0 == "X" and k1 == "X")
            if xx <= nuxx_head:
                nuxx_pmf[xx] += 1
            if not prefix and s.nu <= SEG_JOINT_N_CAP:
                joint[s.nu, min(xx, SEG_JOINT_XX_CAP)] += 1
            if s.nu >= 1:
                n_marked += 1
                t_frac += n_t_marks / s.nu
                x_frac += kinds["X"] / s.nu
                l_frac += kinds["TL"] / s.nu
            if n_t_marks >= 1:
                n_with_t += 1
                lr_frac += kinds["TL"] / n_t_marks
        n_seg = len(full_segments)
        for n in range(nu_head + 1):
            vals[f"{prefix}p_nu[{n}]"] = nu_pmf[n] / n_seg
        for n in range(nuxx_head + 1):
            vals[f"{prefix}p_nuXX[{n}]"] = nuxx_pmf[n] / n_seg
        if n_marked:
            vals[f"{prefix}p_T"] = t_frac / n_marked
            vals[f"{prefix}p_X"] = x_frac / n_marked
            vals[f"{prefix}p_L"] = l_frac / n_marked
        if n_with_t:
            vals[f"{prefix}p_L|T"] = lr_frac / n_with_t

    # --- whole polygons ----------------------------------------------------------
    clean_polys = [
        p for p in result.polygons
        if not any(s.carrier.is_window for s in p.sides)
        and all(structure.corner_vertex.get((p.id, c)) is not None
                for c in range(len(p.sides)))
    ]
    eligible_polys = [p for p in clean_polys
                      if in_reduced(_polygon_circumcenter(p))]
    vals["lambda_I/lambda_V"] = len(eligible_polys) / n_v

    # --- plates --------------------------------------------------------------------
    plates = extract_plates(structure)
    eligible_plates = [
        p for p in plates
        if p.clean and in_reduced(p.circumcenter)
        and all(e.interior for e in p.boundary_edges)
    ]
    if not eligible_plates:
        raise EstimationError("no eligible plates")
    counters["n_plates"] = len(eligible_plates)
    vals["lambda_P/lambda_V"] = len(eligible_plates) / n_v
    plate_cls = dict.fromkeys(EDGE_CLASSES, 0.0)
    nodes_sum = edges_sum = 0
    for p in eligible_plates:
        nodes_sum += len(p.node_points)
        edges_sum += len(p.boundary_edges)
        for e in p.boundary_edges:
            for name in _edge_class_names(e):
                plate_cls[name] += 1
    for name in EDGE_CLASSES:
        vals[f"mu_P,E[{name}]"] = plate_cls[name] / len(eligible_plates)
    vals["mu_P,E"] = edges_sum / len(eligible_plates)
    vals["mu_P,V"] = nodes_sum / len(eligible_plates)

    _facet_cell_statistics(structure, vals, counters, in_reduced, eligible_polys,
                           with_heavy_adjacencies)
    return stats


def _polygon_circumcenter(poly):
    e1, e2 = _plane_basis(poly.plane.n)
    origin = poly.loop[0]
    pts2 = np.column_stack([(poly.loop - origin) @ e1, (poly.loop - origin) @ e2])
    c2 = min_enclosing_circle(pts2)
    return origin + c2[0] * e1 + c2[1] * e2


def _mean_class_counts(per_object: list[dict]) -> dict:
    out = dict.fromkeys(EDGE_CLASSES, 0.0)
    if not per_object:
        return out
    for counts in per_object:
        for name, k in counts.items():
            out[name] += k
    for name in EDGE_CLASSES:
        out[name] /= len(per_object)
    return out


def _facet_cell_statistics(structure, vals, counters, in_reduced,
                           eligible_polys, heavy):
    """Ridge/facet/cell intensities and (when ``heavy``) the edge
    adjacencies of facets, whole polygons, cells and cell skeletons via
    per-plane containment matching."""
    result = structure.result
    side = result.window_side
    contact_tol = 1e3 * result.policy.merge_eps
    n_v = counters["n_vertices"]

    def off_boundary(pts) -> bool:
        return bool(np.all(pts > contact_tol) and np.all(pts < side - contact_tol))

    n_ridge = 0
    cell_records = []
    for cell in result.final_cells:
        if not any(t.is_window for t in cell.tags) and off_boundary(cell.vertices):
            if in_reduced(min_enclosing_sphere(cell.vertices)):
                cell_records.append(cell)
        for (i, j), _facets in cell.edges.items():
            ends = cell.vertices[[i, j]]
            if off_boundary(ends) and in_reduced(0.5 * (ends[0] + ends[1])):
                n_ridge += 1
    vals["lambda_Z1/lambda_V"] = n_ridge / n_v
    vals["lambda_Z/lambda_V"] = len(cell_records) / n_v
    counters["n_cells"] = len(cell_records)

    # facets in polygon planes, circumcenter rule
    facet_records = []
    n_facets = 0
    frame_cache = {}

    def frame(pid):
        if pid not in frame_cache:
            poly = result.polygons[pid]
            e1, e2 = _plane_basis(poly.plane.n)
            frame_cache[pid] = (e1, e2, poly.loop[0])
        return frame_cache[pid]

    for cell in result.final_cells:
        for fi, loop in enumerate(cell.facets):
            tag = cell.tags[fi]
            if tag.is_window:
                continue
            pts = cell.vertices[loop]
            if not off_boundary(pts):
                continue
            e1, e2, origin = frame(tag.index)
            pts2 = np.column_stack([(pts - origin) @ e1, (pts - origin) @ e2])
            c2 = min_enclosing_circle(pts2)
            if in_reduced(origin + c2[0] * e1 + c2[1] * e2):
                n_facets += 1
                facet_records.append((cell, tag.index, pts2))
    vals["lambda_Z2/lambda_V"] = n_facets / n_v

    if not heavy:
        return

    edges_in_plane = defaultdict(list)
    for e in structure.edges:
        seg = structure.by_seg[e.seg_id]
        edges_in_plane[seg.owner].append(e)
        if not seg.carrier.is_window:
            edges_in_plane[seg.carrier.index].append(e)
    mid_cache = {}

    def plane_members(pid):
        if pid not in mid_cache:
            e1, e2, origin = frame(pid)
            members = edges_in_plane.get(pid, [])
            if members:
                mids = np.array([e.midpoint() for e in members])
                mids2 = np.column_stack([(mids - origin) @ e1,
                                         (mids - origin) @ e2])
            else:
                mids2 = np.zeros((0, 2))
            mid_cache[pid] = (members, mids2)
        return mid_cache[pid]

    def adjacency(pid, loop2):
        members, mids2 = plane_members(pid)
        if not members:
            return [], True
        codes = classify_points_in_loop(mids2, loop2, contact_tol)
        pairs = [(e, "in" if c == 0 else "on")
                 for e, c in zip(members, codes) if c != 2]
        resolved = all(e.interior for e, _ in pairs)
        return pairs, resolved

    # facet-edge adjacencies, split into rim and relative interior
    per_facet, per_facet_in, per_facet_on = [], [], []
    unresolved_facets = 0
    for cell, pid, pts2 in facet_records:
        pairs, resolved = adjacency(pid, pts2)
        if not resolved:
            unresolved_facets += 1
            continue
        tot = dict.fromkeys(EDGE_CLASSES, 0)
        inner = dict.fromkeys(EDGE_CLASSES, 0)
        rim = dict.fromkeys(EDGE_CLASSES, 0)
        for e, where in pairs:
            for name in _edge_class_names(e):
                tot[name] += 1
                (inner if where == "in" else rim)[name] += 1
        per_facet.append(tot)
        per_facet_in.append(inner)
        per_facet_on.append(rim)
    counters["unresolved_facets"] = unresolved_facets
    for prefix, rows in (("mu_Z2", per_facet), ("mu_int(Z2)", per_facet_in),
                         ("mu_bd(Z2)", per_facet_on)):
        means = _mean_class_counts(rows)
        for name in EDGE_CLASSES:
            vals[f"{prefix},E[{name}]"] = means[name]

    # whole-polygon adjacencies
    per_poly, per_poly_in, per_poly_on = [], [], []
    unresolved_polys = 0
    for poly in eligible_polys:
        e1, e2, origin = frame(poly.id)
        loop2 = np.column_stack([(poly.loop - origin) @ e1,
                                 (poly.loop - origin) @ e2])
        pairs, resolved = adjacency(poly.id, loop2)
        if not resolved:
            unresolved_polys += 1
            continue
        tot = dict.fromkeys(EDGE_CLASSES, 0)
        inner = dict.fromkeys(EDGE_CLASSES, 0)
        rim = dict.fromkeys(EDGE_CLASSES, 0)
        for e, where in pairs:
            for name in _edge_class_names(e):
                tot[name] += 1
                (inner if where == "in" else rim)[name] += 1
        per_poly.append(tot)
        per_poly_in.append(inner)
        per_poly_on.append(rim)
    counters["unresolved_polygons"] = unresolved_polys
    for prefix, rows in (("mu_I", per_poly), ("mu_int(I)", per_poly_in),
                         ("mu_bd(I)", per_poly_on)):
        means = _mean_class_counts(rows)
        for name in EDGE_CLASSES:
            vals[f"{prefix},E[{name}]"] = means[name]

    # cells: union of facet adjacencies; skeleton = edges on any facet rim
    per_cell, per_skeleton = [], []
    unresolved_cells = 0
    for cell in cell_records:
        seen: dict[int, list] = {}
        resolved = True
        for fi, loop in enumerate(cell.facets):
            tag = cell.tags[fi]
            e1, e2, origin = frame(tag.index)
            pts2 = np.column_stack([(cell.vertices[loop] - origin) @ e1,
                                    (cell.vertices[loop] - origin) @ e2])
            pairs, ok = adjacency(tag.index, pts2)
            resolved = resolved and ok
            if not resolved:
                break
            for e, where in pairs:
                entry = seen.setdefault(id(e), [e, False])
                if where == "on":
                    entry[1] = True
        if not resolved:
            unresolved_cells += 1
            continue
        tot = dict.fromkeys(EDGE_CLASSES, 0)
        sk = dict.fromkeys(EDGE_CLASSES, 0)
        for e, on_rim in seen.values():
            for name in _edge_class_names(e):
                tot[name] += 1
                if on_rim:
                    sk[name] += 1
        per_cell.append(tot)
        per_skeleton.append(sk)
    counters["unresolved_cells"] = unresolved_cells
    for prefix, rows in (("mu_Z", per_cell), ("mu_sk(Z)", per_skeleton)):
        means = _mean_class_counts(rows)
        for name in EDGE_CLASSES:
            vals[f"{prefix},E[{name}]"] = means[name]


# ---------------------------------------------------------------------------
# cross-replicate aggregation
# ---------------------------------------------------------------------------

@dataclass
class EstimatorReport:
    """Mean/SE per quantity across replicates, plus population counters
    and the per-replicate raw histograms."""

    quantities: dict            # name -> (estimate, se, n_replicates)
    margin: float
    n_replicates: int
    counters: dict
    arrays: list = field(default_factory=list)

    def estimate(self, name):
        return self.quantities[name][0]

    def se(self, name):
        return self.quantities[name][1]

    def rows(self):
        for name in sorted(self.quantities):
            est, se, n = self.quantities[name]
            yield name, est, se, n


def aggregate_replicates(per_replicate: list[ReplicateStats],
                         margin: float) -> EstimatorReport:
    if len(per_replicate) < 2:
        raise EstimationError("need at least two replicates")
    names = set()
    for rep in per_replicate:
        names.update(rep.values)
    quantities = {}
    for name in names:
        xs = np.array([rep.values[name] for rep in per_replicate
                       if name in rep.values], dtype=float)
        if len(xs) < 2:
            continue
        quantities[name] = (float(xs.mean()),
                            float(xs.std(ddof=1) / math.sqrt(len(xs))),
                            len(xs))
    counters: dict = defaultdict(float)
    for rep in per_replicate:
        for key, value in rep.counters.items():
            counters[key] += value
    return EstimatorReport(quantities=quantities, margin=margin,
                           n_replicates=len(per_replicate),
                           counters=dict(counters),
                           arrays=[rep.arrays for rep in per_replicate])
