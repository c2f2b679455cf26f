import math
from collections import Counter

import numpy as np
import pytest

from stitlab.estimators import (EstimationError, aggregate_replicates,
                                classify_points_in_loop, extract_plates,
                                min_enclosing_circle, min_enclosing_sphere,
                                replicate_statistics)

EPS_GROUPS = (("TT", "XX", "TX"), ("P1,1", "P1,2", "P1,3"),
              ("Z1,0", "Z1,1", "Z1,2"))


def test_min_enclosing_circle_cases():
    square = np.array([[0, 0], [1, 0], [1, 1], [0, 1]], dtype=float)
    assert np.allclose(min_enclosing_circle(square), [0.5, 0.5], atol=1e-12)
    tri = np.array([[0, 0], [2, 0], [1, math.sqrt(3)]])
    assert np.allclose(min_enclosing_circle(tri), [1, 1 / math.sqrt(3)],
                       atol=1e-9)
    two = np.array([[0, 0], [4, 0], [2, 0.5]])
    assert np.allclose(min_enclosing_circle(two), [2, 0], atol=1e-12)


def test_min_enclosing_sphere_cases():
    cube = np.array([[i, j, k] for i in (0, 1) for j in (0, 1) for k in (0, 1)],
                    dtype=float)
    assert np.allclose(min_enclosing_sphere(cube), [0.5, 0.5, 0.5], atol=1e-9)
    pair = np.array([[0, 0, 0], [2, 0, 0], [1, 0.2, 0]])
    assert np.allclose(min_enclosing_sphere(pair), [1, 0, 0], atol=1e-12)


def test_classify_points_in_loop():
    loop = np.array([[0, 0], [1, 0], [1, 1], [0, 1]], dtype=float)
    points = np.array([[0.5, 0.5], [0.5, 0.0], [1.5, 0.5], [0.0, 0.0],
                       [-0.2, -0.3]])
    codes = classify_points_in_loop(points, loop, tol=1e-9)
    assert list(codes) == [0, 1, 2, 1, 2]
    # orientation independence
    codes_r = classify_points_in_loop(points, loop[::-1], tol=1e-9)
    assert list(codes) == list(codes_r)


def test_plates_euler_consistency(small_structure):
    plates = extract_plates(small_structure)
    assert plates
    by_poly = Counter(p.polygon for p in plates)
    # a polygon with no carried segments is exactly one plate
    carried = Counter(s.carrier.index for s in small_structure.segments
                      if not s.carrier.is_window)
    for poly in small_structure.result.polygons:
        if carried[poly.id] == 0:
            assert by_poly[poly.id] == 1


def test_every_interior_edge_borders_three_plates(small_structure):
    """Each tessellation edge away from the window rim is adjacent to
    exactly three plates: two in its carrier plane, one in its owner."""
    plates = extract_plates(small_structure)
    counts = Counter()
    for plate in plates:
        for e in plate.boundary_edges:
            counts[id(e)] += 1
    side = small_structure.result.window_side
    for e in small_structure.edges:
        mid = e.midpoint()
        if not e.interior:
            continue
        if not all(0.25 * side < c < 0.75 * side for c in mid):
            continue
        assert counts[id(e)] == 3


def test_replicate_statistics_identities(small_structure):
    stats = replicate_statistics(small_structure, margin=0.1)
    vals = stats.values
    for group in EPS_GROUPS:
        total = sum(vals[f"eps_E[{c}]"] for c in group)
        assert total == pytest.approx(1.0, abs=1e-12)
    assert vals["eps_E[Z1,2]"] == vals["eps_E[P1,3]"]
    # four incident edges per usable vertex, so the class means sum to 4
    assert sum(vals[f"mu_V,E[{c}]"] for c in ("TT", "XX", "TX")) \
        == pytest.approx(4.0, abs=1e-12)
    assert vals["eta_V,V[T]"] + vals["eta_V,V[X]"] == pytest.approx(4.0)
    # T vertices never touch XX edges, X vertices never touch TT edges
    assert vals["mu_V[T],E[XX]"] == 0.0
    assert vals["mu_V[X],E[TT]"] == 0.0
    assert vals["mu_V[X],E[Z1,0]"] == pytest.approx(4.0, abs=1e-12)
    # count pmfs are proper
    nu_mass = sum(vals[f"p_nu[{n}]"] for n in range(13))
    assert nu_mass <= 1.0 + 1e-12
    xx_mass = sum(vals[f"p_nuXX[{n}]"] for n in range(7))
    assert xx_mass <= 1.0 + 1e-12


def test_margin_validation(small_structure):
    with pytest.raises(ValueError):
        replicate_statistics(small_structure, margin=0.5)


def test_zero_eligible_objects_raises(unit_window):
    from stitlab.combinatorics import build_structure
    from stitlab.directions import direction_preset
    from stitlab.engine import run_construction
    res = run_construction(unit_window, direction_preset("isotropic"), 3.0,
                           seed=12)
    st = build_structure(res)
    with pytest.raises(EstimationError):
        replicate_statistics(st, margin=0.39)


def test_aggregated_estimates_near_targets(replicate_structures):
    per_rep = [replicate_statistics(st, margin=0.15)
               for st in replicate_structures]
    report = aggregate_replicates(per_rep, margin=0.15)
    checks = {
        "lambda_E/lambda_V": 2.0,
        "lambda_I1/lambda_V": 2.0 / 3.0,
        "lambda_P/lambda_V": 7.0 / 6.0,
        "eps_V[T]": 2.0 / 3.0,
        "eta_V,V[T]": 8.0 / 3.0,
        "mu_P,E": 36.0 / 7.0,
        "mu_P,V": 36.0 / 7.0,
    }
    for name, target in checks.items():
        est, se, n = report.quantities[name]
        assert n == len(replicate_structures)
        assert abs(est - target) < max(5 * se, 0.02 * abs(target) + 1e-9), name


def test_aggregate_needs_two_replicates(replicate_structures):
    per_rep = [replicate_statistics(replicate_structures[0], margin=0.15)]
    with pytest.raises(EstimationError):
        aggregate_replicates(per_rep, margin=0.15)
