import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from lipfactor import heisenberg as H
from lipfactor.area import (
    Curve,
    area_formula_check,
    coarea_check,
    length,
    length_preserving_check,
    oriented_area,
    speed,
    stokes_check,
)
from lipfactor.builtins import make_builtin
from lipfactor.sampled_map import MetricTarget, from_function


def circle(k, r=1.0):
    th = np.linspace(0, 2 * np.pi, k + 1)
    pts = r * np.column_stack([np.cos(th), np.sin(th)])
    pts[-1] = pts[0]
    return Curve(th, pts, closed=True)


def winding_area(c: Curve, grid: int = 801) -> float:
    # independent oracle: integrate the winding number over a fine grid
    pts = c.points
    lo, hi = pts.min(axis=0) - 0.1, pts.max(axis=0) + 0.1
    xs = np.linspace(lo[0], hi[0], grid)
    ys = np.linspace(lo[1], hi[1], grid)
    X, Y = np.meshgrid(xs, ys)
    q = np.column_stack([X.ravel(), Y.ravel()])
    wind = np.zeros(len(q))
    for a, b in zip(pts[:-1], pts[1:]):
        va = a - q
        vb = b - q
        wind += np.arctan2(va[:, 0] * vb[:, 1] - va[:, 1] * vb[:, 0], np.sum(va * vb, axis=1))
    cell = (xs[1] - xs[0]) * (ys[1] - ys[0])
    return float(np.sum(np.round(wind / (2 * np.pi))) * cell)


def test_circle_area_and_length():
    c = circle(10_000)
    assert oriented_area(c) == pytest.approx(math.pi, abs=1e-6)
    assert oriented_area(c.reversed()) == -oriented_area(c)
    assert length(c) == pytest.approx(2 * math.pi, abs=1e-6)
    assert speed(c, 10) == pytest.approx(1.0, abs=1e-6)


def test_figure_eight_cancels():
    t = np.linspace(0, 2 * np.pi, 10_001)
    pts = np.column_stack([np.sin(t), np.sin(t) * np.cos(t)])
    pts[-1] = pts[0]
    c = Curve(t, pts, closed=True)
    assert abs(oriented_area(c)) <= 1e-4
    assert abs(winding_area(Curve(t[::250], pts[::250], closed=True))) <= 1e-2


def test_shoelace_matches_winding_oracle():
    rng = np.random.default_rng(5)
    for _ in range(3):
        th = np.sort(rng.uniform(0, 2 * np.pi, 12))
        r = rng.uniform(0.5, 1.5, 12)
        pts = np.column_stack([r * np.cos(th), r * np.sin(th)])
        c = Curve.closed_loop(pts)
        assert oriented_area(c) == pytest.approx(winding_area(c), abs=2e-2)


def test_open_curve_rejected():
    with pytest.raises(ValueError):
        oriented_area(Curve([0.0, 1.0, 2.0], [[0, 0], [1, 0], [0, 1.0]]))


@settings(max_examples=40, deadline=None)
@given(st.integers(0, 2**32 - 1), st.integers(0, 20))
def test_oriented_area_invariances(seed, shift):
    rng = np.random.default_rng(seed)
    pts = rng.normal(size=(21, 2))
    c = Curve.closed_loop(pts)
    a = oriented_area(c)
    assert oriented_area(c.reversed()) == -a
    rolled = Curve.closed_loop(np.roll(pts, shift, axis=0))
    assert oriented_area(rolled) == pytest.approx(a, rel=1e-12, abs=1e-12)
    moved = Curve.closed_loop(pts + np.array([3.0, -2.0]))
    assert oriented_area(moved) == pytest.approx(a, rel=1e-9, abs=1e-9)


def test_stokes_identity_disk():
    res = stokes_check(lambda v: v, circle(2000))
    assert res.lhs == pytest.approx(res.rhs, abs=1e-9)
    assert res.lhs == pytest.approx(math.pi, abs=1e-5)


def test_stokes_rank_one_extension_is_exactly_zero():
    def gamma(v):
        u = np.sin(3 * v[:, 0]) + v[:, 0] * v[:, 1]
        return np.column_stack([u, 2 * u])

    b = circle(2000)
    res = stokes_check(gamma, Curve(b.params, gamma(b.points), closed=True))
    assert res.rhs == 0.0
    assert abs(res.lhs) <= 1e-12


def test_stokes_rejects_mismatched_boundary():
    with pytest.raises(ValueError):
        stokes_check(lambda v: 2 * v, circle(100))


def test_area_formula_fold():
    f, _ = make_builtin("fold", 10_000)
    res = area_formula_check(f)
    assert abs(res.lhs - res.rhs) / res.rhs <= 1e-2
    # the cell straddling the kink has equal end values and contributes nothing
    assert res.lhs == pytest.approx(2.0 - 2 * f.h, rel=1e-9)


def test_area_formula_with_weight():
    f = from_function(1, 2001, lambda p: p[:, 0] ** 2)
    res = area_formula_check(f, g=lambda x: 1 + x[:, 0])
    # int_0^1 (1 + x) 2x dx = 1 + 2/3
    assert res.lhs == pytest.approx(5 / 3, rel=1e-4)
    assert res.rhs == pytest.approx(5 / 3, rel=1e-2)


def test_area_formula_planar_map():
    f = from_function(2, 81, lambda p: np.column_stack([p[:, 0] + 0.2 * p[:, 1] ** 2, p[:, 1]]))
    res = area_formula_check(f)
    assert res.lhs == pytest.approx(1.0, rel=1e-6)
    assert abs(res.lhs - res.rhs) / res.rhs <= 5e-2


def test_area_formula_rejects_small_rho():
    f = from_function(1, 101, lambda p: p[:, 0])
    with pytest.raises(ValueError):
        area_formula_check(f, rho=0.1 * f.h)


def test_coarea_square():
    F = from_function(2, 201, lambda p: p[:, 0] ** 2)
    res = coarea_check(F)
    assert abs(res.lhs - res.rhs) <= 1e-2


def test_coarea_other_dimensions():
    res = coarea_check(from_function(1, 201, lambda p: np.sin(7 * p[:, 0])))
    assert res.gap <= 2e-2
    res = coarea_check(from_function(3, 21, lambda p: p[:, 0] ** 2 + 0.5 * p[:, 1]))
    assert res.gap / res.lhs <= 2e-2


def spiral(N):
    return make_builtin("spiral", N)[0]


def test_length_preservation_spiral_lift():
    f = spiral(2001)
    rep = length_preserving_check(H.project, f)
    assert rep["hypothesis_holds"] and rep["conclusion_asserted"]
    assert rep["md_fraction_within"] >= 0.99
    assert rep["conclusion_holds"]


def test_length_preservation_negative_control():
    f = spiral(2001)
    rep = length_preserving_check(lambda q: 2 * H.project(q), f)
    assert rep["hypothesis_fails"]
    assert rep["length_ratio_min"] == pytest.approx(2.0, rel=1e-9)
    assert not rep["conclusion_asserted"]


def test_length_preservation_euclidean_isometry():
    f = from_function(2, 41, lambda p: np.column_stack([p[:, 0], p[:, 1], np.zeros(len(p))]))
    R = np.array([[0, -1, 0], [1, 0, 0], [0, 0, 1.0]])
    rep = length_preserving_check(lambda y: y @ R.T, f, MetricTarget.euclidean())
    assert rep["hypothesis_holds"] and rep["conclusion_holds"]
