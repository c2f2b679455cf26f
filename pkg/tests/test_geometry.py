import math

import numpy as np
import pytest

from stitlab.geometry import (ConvexPolytope, DegeneratePolytope,
                              NearVertexPlane, Plane, PlaneMissesInterior,
                              PointMerger, SourceTag, TolerancePolicy,
                              make_window, point_key, split_polytope)
from stitlab.directions import isotropic, sample_hitting_plane


def test_window_basics():
    cube = make_window(1.0)
    assert len(cube.vertices) == 8
    assert len(cube.edges) == 12
    assert len(cube.facets) == 6
    assert cube.volume() == pytest.approx(1.0, abs=1e-14)
    assert cube.euler_characteristic() == 2
    assert all(t.is_window for t in cube.tags)


def test_window_mean_width_and_scaling():
    assert make_window(1.0).mean_width() == pytest.approx(1.5, abs=1e-12)
    assert make_window(2.0).mean_width() == pytest.approx(3.0, abs=1e-12)


def test_cube_dihedral_angles_are_right():
    cube = make_window(1.0)
    normals = cube.planes[:, :3]
    for (i, j), (fa, fb) in cube.edges.items():
        angle = math.acos(abs(float(normals[fa] @ normals[fb])))
        assert angle == pytest.approx(math.pi / 2, abs=1e-12)


def test_invalid_window_side():
    with pytest.raises(ValueError):
        make_window(0.0)


def test_plane_requires_unit_normal():
    with pytest.raises(Exception):
        Plane((1.0, 1.0, 0.0), 0.5)


def test_symmetric_split():
    cube = make_window(1.0)
    plus, minus, loop, carriers = split_polytope(
        cube, Plane((1, 0, 0), 0.5), SourceTag("polygon", 0), 1e-9)
    assert plus.volume() == pytest.approx(0.5, abs=1e-12)
    assert minus.volume() == pytest.approx(0.5, abs=1e-12)
    assert len(loop) == 4
    assert all(c.is_window for c in carriers)
    # cut facet carries the new tag on both children
    assert any(t == SourceTag("polygon", 0) for t in plus.tags)
    assert any(t == SourceTag("polygon", 0) for t in minus.tags)


def test_split_misses_interior():
    cube = make_window(1.0)
    with pytest.raises(PlaneMissesInterior):
        split_polytope(cube, Plane((1, 0, 0), 2.0), SourceTag("polygon", 0), 1e-9)


def test_split_near_vertex_rejected():
    cube = make_window(1.0)
    n = np.array([1.0, 1.0, 1.0]) / math.sqrt(3.0)
    with pytest.raises(NearVertexPlane):
        split_polytope(cube, Plane(tuple(n), 1e-12), SourceTag("polygon", 0), 1e-9)


def test_randomized_splits_conserve_volume_and_euler():
    rng = np.random.default_rng(7)
    dist = isotropic()
    poly = make_window(1.0)
    for i in range(60):
        plane = sample_hitting_plane(poly, dist, rng)
        try:
            plus, minus, loop, carriers = split_polytope(
                poly, plane, SourceTag("polygon", i), 1e-9)
        except NearVertexPlane:
            continue
        assert plus.volume() + minus.volume() == pytest.approx(
            poly.volume(), rel=1e-9)
        assert plus.euler_characteristic() == 2
        assert minus.euler_characteristic() == 2
        assert len(loop) == len(carriers) >= 3
        # section loop lies on the plane and in every named carrier facet
        assert np.max(np.abs(plane.signed_distance(loop))) < 1e-9
        poly = plus if plus.volume() >= minus.volume() else minus


def test_section_sides_lie_in_their_carrier_planes():
    rng = np.random.default_rng(11)
    dist = isotropic()
    poly = make_window(1.0)
    plane = sample_hitting_plane(poly, dist, rng)
    plus, minus, loop, carriers = split_polytope(
        poly, plane, SourceTag("polygon", 0), 1e-9)
    k = len(loop)
    for i in range(k):
        tag = carriers[i]
        row = make_window(1.0).planes[tag.index]
        for point in (loop[i], loop[(i + 1) % k]):
            assert abs(float(row[:3] @ point) - row[3]) < 1e-9


def _regular_tetrahedron(edge: float) -> ConvexPolytope:
    scale = edge / (2.0 * math.sqrt(2.0))
    verts = scale * np.array([
        [1, 1, 1], [1, -1, -1], [-1, 1, -1], [-1, -1, 1]], dtype=float)
    faces = [(1, 2, 3), (0, 3, 2), (0, 1, 3), (0, 2, 1)]
    planes = []
    loops = []
    centroid = verts.mean(axis=0)
    for tri in faces:
        a, b, c = (verts[i] for i in tri)
        n = np.cross(b - a, c - a)
        n /= np.linalg.norm(n)
        if float(n @ (a - centroid)) < 0:
            n = -n
            tri = tri[::-1]
        planes.append([n[0], n[1], n[2], float(n @ a)])
        loops.append(list(tri))
    tags = [SourceTag("window", i) for i in range(4)]
    return ConvexPolytope(np.array(planes), tags, verts, loops)


def test_mean_width_against_support_sampling_oracle():
    """Cauchy: the mean width equals the direction-averaged support width."""
    rng = np.random.default_rng(3)
    n = 1_000_000
    dirs = rng.normal(size=(n, 3))
    dirs /= np.linalg.norm(dirs, axis=1, keepdims=True)
    for body in (make_window(1.0), _regular_tetrahedron(1.0)):
        proj = body.vertices @ dirs.T
        widths = proj.max(axis=0) - proj.min(axis=0)
        mc = float(widths.mean())
        se = float(widths.std() / math.sqrt(n))
        assert abs(body.mean_width() - mc) < 3 * se


def test_mean_width_homogeneity():
    rng = np.random.default_rng(5)
    poly = make_window(1.0)
    plane = sample_hitting_plane(poly, isotropic(), rng)
    part, _, _, _ = split_polytope(poly, plane, SourceTag("polygon", 0), 1e-9)
    for c in (0.5, 2.0, 7.3):
        assert part.scaled(c).mean_width() == pytest.approx(
            c * part.mean_width(), rel=1e-12)


def test_degenerate_polytope_rejected():
    with pytest.raises(DegeneratePolytope):
        ConvexPolytope(np.zeros((1, 4)), [SourceTag("window", 0)],
                       np.zeros((2, 3)), [[0, 1]])


def test_point_key_identity_and_separation():
    eps = 1e-9
    assert point_key((0.3, 0.4, 0.5), eps) == point_key((0.3, 0.4, 0.5), eps)
    merger = PointMerger(eps)
    a = merger.add((0.0, 0.0, 0.0))
    b = merger.add((10 * eps, 0.0, 0.0))
    assert merger.canonical(a) != merger.canonical(b)
    c = merger.add((0.1 * eps, 0.0, 0.0))
    assert merger.canonical(c) == merger.canonical(a)


def test_point_merger_transitive_closure():
    eps = 1e-6
    merger = PointMerger(eps)
    # chain of points, each within eps of the next but first and last apart
    ids = [merger.add((i * 0.8 * eps, 0.0, 0.0)) for i in range(5)]
    roots = {merger.canonical(i) for i in ids}
    assert len(roots) == 1


def test_tolerance_policy_validation():
    with pytest.raises(ValueError):
        TolerancePolicy(merge_eps=0.0)
    policy = TolerancePolicy.for_window(2.0)
    assert policy.merge_eps == pytest.approx(2e-9)
