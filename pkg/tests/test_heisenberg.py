import math
import warnings

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from lipfactor.curves import Curve
from lipfactor.heisenberg import (
    HeisenbergPoint,
    HorizontalityWarning,
    cc_length,
    group_mul,
    horizontal_lift,
    horizontality_defect,
    inverse,
    left_translate,
    projection_area_formula_check,
)

coords = arrays(float, 3, elements=st.floats(-5, 5))


@settings(max_examples=100, deadline=None)
@given(coords, coords, coords)
def test_group_axioms(p, q, r):
    assert np.allclose(group_mul(group_mul(p, q), r), group_mul(p, group_mul(q, r)), atol=1e-9)
    e = np.zeros(3)
    assert np.array_equal(group_mul(p, e), p)
    assert np.allclose(group_mul(p, inverse(p)), e, atol=1e-12)


def test_group_law_values():
    p = HeisenbergPoint([1.0], [0.0], 0.0)
    q = HeisenbergPoint([0.0], [1.0], 0.0)
    # t = 2 (y x' - x y') = 2 (0 - 1)
    assert (p * q).t == -2.0
    assert (q * p).t == 2.0
    assert (p * p.inverse()).as_array().tolist() == [0.0, 0.0, 0.0]
    assert HeisenbergPoint.from_array([1, 2, 3, 4, 5]).n == 2


def test_bad_points():
    with pytest.raises(ValueError):
        group_mul(np.zeros(4), np.zeros(4))
    with pytest.raises(ValueError):
        HeisenbergPoint([np.inf], [0.0], 0.0)


def circle_lift(r=0.5, k=10_000):
    s = np.linspace(0, 2 * np.pi, k + 1)
    xy = r * np.column_stack([np.cos(s), np.sin(s)])
    xy[-1] = xy[0]
    return horizontal_lift(Curve(s, xy))


def test_lifted_circle_height_and_length():
    c = circle_lift()
    # dt = 2 (y dx - x dy) = -2 r^2 ds over a full turn
    assert c.points[-1, -1] - c.points[0, -1] == pytest.approx(-4 * math.pi * 0.25, abs=1e-6)
    res = cc_length(c)
    assert res.horizontal
    assert res.value == pytest.approx(math.pi, abs=1e-6)
    assert horizontality_defect(c) <= 1e-12


def test_lift_is_horizontal_exactly_for_polygons():
    rng = np.random.default_rng(2)
    xy = np.cumsum(rng.normal(size=(50, 4)), axis=0)
    c = horizontal_lift(Curve(np.arange(50.0), xy), t0=3.0)
    assert c.points[0, -1] == 3.0
    assert horizontality_defect(c) <= 1e-12


@settings(max_examples=40, deadline=None)
@given(coords, st.integers(0, 2**32 - 1))
def test_left_translation_preserves_horizontality_and_length(p, seed):
    xy = np.cumsum(np.random.default_rng(seed).normal(size=(30, 2)), axis=0)
    c = horizontal_lift(Curve(np.arange(30.0), xy))
    moved = left_translate(p, c)
    assert horizontality_defect(moved) <= 1e-9 * (1 + np.abs(moved.points).max()) ** 2
    assert cc_length(moved).value == pytest.approx(cc_length(c).value, rel=1e-12)


def test_non_horizontal_curve_is_flagged():
    s = np.linspace(0, 1, 11)
    c = Curve(s, np.column_stack([s, 0 * s, s]))
    with pytest.warns(HorizontalityWarning):
        res = cc_length(c)
    assert not res.horizontal and res.defect == pytest.approx(1.0)
    with pytest.raises(ValueError):
        projection_area_formula_check([c])


def test_doubled_segment_projection_area():
    s = np.linspace(0, 1, 1001)
    seg = Curve(s, np.column_stack([s, 0 * s]))
    a = horizontal_lift(seg, 0.0)
    b = horizontal_lift(seg, 1.0)
    res = projection_area_formula_check([a, b])
    assert res.lhs == pytest.approx(2.0, abs=1e-12)
    assert abs(res.lhs - res.rhs) <= 1e-3


def test_projection_area_with_crossing_and_weight():
    with warnings.catch_warnings():
        warnings.simplefilter("error")
        s = np.linspace(0, 1, 2001)
        a = horizontal_lift(Curve(s, np.column_stack([s, 0 * s])))
        b = horizontal_lift(Curve(s, np.column_stack([0.5 + 0 * s, s - 0.5])))
        res = projection_area_formula_check([a, b], g=lambda p: 1 + p[:, 0])
    # int (1 + x) over both segments = 1.5 + 1.5
    assert res.lhs == pytest.approx(3.0, rel=1e-9)
    assert abs(res.lhs - res.rhs) <= 1e-2


def test_closed_lift_projection_area():
    c = circle_lift(k=4000)
    res = projection_area_formula_check([c], rho=1e-3)
    assert abs(res.lhs - res.rhs) <= 1e-3 * res.lhs
