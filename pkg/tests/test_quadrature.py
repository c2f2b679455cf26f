import math

import numpy as np
import pytest

from stitlab.quadrature import QuadratureConfig, QuadratureError, quad1d, quad2d


def test_constant_is_exact():
    value, err = quad2d(lambda a, b: np.ones_like(a))
    assert value == pytest.approx(1.0, abs=1e-14)
    assert err < 1e-13


def test_bilinear_is_exact():
    value, _ = quad2d(lambda a, b: a * b)
    assert value == pytest.approx(0.25, abs=1e-12)


def test_rectangle_domain():
    value, _ = quad2d(lambda a, b: a + b, domain=((0.0, 2.0), (1.0, 3.0)))
    # int over [0,2]x[1,3] of (a+b) = 4 + 8
    assert value == pytest.approx(12.0, abs=1e-10)


def test_peaked_integrand_converges():
    value, err = quad2d(lambda a, b: np.exp(-200.0 * ((a - 0.3) ** 2 + (b - 0.7) ** 2)))
    assert value == pytest.approx(math.pi / 200.0, rel=1e-8)
    assert err <= max(1e-12, 1e-10 * value) * 1.01


def test_quad1d_log_singularity_like():
    value, _ = quad1d(lambda x: np.sqrt(x), 0.0, 1.0)
    assert value == pytest.approx(2.0 / 3.0, abs=1e-9)


def test_depth_exhaustion_reports_best_value():
    config = QuadratureConfig(abs_tol=1e-300, rel_tol=1e-300,
                              max_subdivision_depth=3)
    with pytest.raises(QuadratureError) as info:
        quad2d(lambda a, b: np.exp(-50.0 * (a - 0.5) ** 2), config=config)
    assert info.value.value == pytest.approx(
        math.sqrt(math.pi / 50.0) * math.erf(0.5 * math.sqrt(50.0)), rel=1e-4)


def test_invalid_tolerances_rejected():
    with pytest.raises(ValueError):
        QuadratureConfig(abs_tol=0.0)
    with pytest.raises(ValueError):
        QuadratureConfig(max_subdivision_depth=40)
