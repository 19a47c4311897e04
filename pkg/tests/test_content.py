import itertools
import math
import time

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from lipfactor.builtins import make_builtin
from lipfactor.content import (
    ContentReport,
    DyadicCube,
    density,
    density_ladder,
    geometric_ladder,
    hausdorff_content,
    mapping_content_dp,
    verify_cover,
)
from lipfactor.sampled_map import from_function


# -- brute-force oracle ------------------------------------------------------


def _members(f, cube):
    lo, hi = cube.bounds()
    pts = f.domain.points()
    inside = np.all((pts >= lo - 1e-12) & (pts <= hi + 1e-12), axis=1)
    return np.flatnonzero(inside)


def _cube_content(f, cube, n):
    top = f.lipschitz * cube.diam
    if top <= 0:
        return 0.0
    return hausdorff_content(f.values[_members(f, cube)], n, geometric_ladder(top), f.target).value


def _antichains(cube, max_depth):
    """Every dyadic cover of ``cube`` by descendants of depth <= max_depth."""
    yield [cube]
    if cube.depth < max_depth:
        for combo in itertools.product(*[list(_antichains(c, max_depth)) for c in cube.children()]):
            yield [q for part in combo for q in part]


def brute_force(f, n, m, max_depth):
    d = f.domain.d
    cache = {}
    best = math.inf
    for cover in _antichains(DyadicCube(0, (0,) * d), max_depth):
        terms = []
        for q in cover:
            if q not in cache:
                cache[q] = _cube_content(f, q, n) * q.diam**m
            terms.append(cache[q])
        best = min(best, math.fsum(terms))
    return best


def random_map(rng, d, N):
    A = rng.normal(size=(3, d))
    B = rng.normal(size=(3, d))
    w = rng.uniform(1, 4, size=3)
    mode = rng.integers(3)
    def fn(p):
        out = np.sin(w * (p @ A.T)) + 0.3 * (p @ B.T)
        if mode == 0:
            out[:, 1:] = 0  # rank <= 1 maps
        return out
    return from_function(d, N, fn)


@pytest.mark.parametrize("d", [2, 3])
def test_dp_equals_brute_force(d):
    rng = np.random.default_rng(100 + d)
    for trial in range(20):
        N = 5 if trial % 2 else 9
        f = random_map(rng, d, N)
        for depth in (0, 1, 2):
            rep = mapping_content_dp(f, None, 2, d - 2, depth)
            assert rep.value == brute_force(f, 2, d - 2, depth)


# -- closed forms -------------------------------------------------------------


def test_projection_with_square_oracle_is_sqrt3():
    f, oracle = make_builtin("projection", 33, 3)
    for depth in range(6):
        t = time.perf_counter()
        rep = mapping_content_dp(f, None, 2, 1, depth, oracle(2))
        assert time.perf_counter() - t < 5
        assert abs(rep.value - math.sqrt(3)) <= 1e-12
        assert rep.bound_kind == "exact-at-resolution"


def test_coordinate_map_content_is_zero_with_oracle():
    f, oracle = make_builtin("coordinate", 17, 3)
    for depth in range(5):
        assert mapping_content_dp(f, None, 2, 1, depth, oracle(2)).value == 0.0


def test_coordinate_map_sampled_estimate_small():
    f = from_function(3, 33, lambda p: p[:, 0])
    vals = [mapping_content_dp(f, None, 2, 1, k).value for k in range(5)]
    assert vals[4] <= 0.05
    assert all(b <= a for a, b in zip(vals, vals[1:]))


def test_identity_square_content():
    f, oracle = make_builtin("identity", 17, 2)
    assert mapping_content_dp(f, None, 2, 0, 3, oracle(2)).value == pytest.approx(1.0, abs=1e-12)


def test_empty_set_costs_nothing():
    f = from_function(2, 9, lambda p: p.copy())
    rep = mapping_content_dp(f, np.zeros(81, dtype=bool), 2, 0, 2)
    assert rep.value == 0.0 and rep.cover == []


def test_mapping_argument_checks():
    f = from_function(3, 9, lambda p: p[:, 0])
    with pytest.raises(ValueError):
        mapping_content_dp(f, None, 2, 2, 1)
    with pytest.raises(ValueError):
        mapping_content_dp(f, None, 2, 1, 4)


@settings(max_examples=20, deadline=None)
@given(st.integers(0, 2**32 - 1))
def test_dp_certificate_properties(seed):
    rng = np.random.default_rng(seed)
    f = random_map(rng, 2, 9)
    E = rng.random(81) < 0.5
    rep = mapping_content_dp(f, E, 2, 0, 3)
    assert verify_cover(rep, f, E)["ok"]
    assert rep.value == pytest.approx(rep.parameters["dp_value"], rel=1e-12, abs=1e-15)
    # the optimum is no worse than any uniform-depth cover
    for k in range(4):
        uniform = mapping_content_dp(f, E, 2, 0, k).value
        assert rep.value <= uniform * (1 + 1e-12) + 1e-15
    # shrinking E cannot increase the content
    sub = E & (rng.random(81) < 0.5)
    assert mapping_content_dp(f, sub, 2, 0, 3).value <= rep.value * (1 + 1e-12) + 1e-15


def test_report_roundtrip_and_tamper_detection():
    f, oracle = make_builtin("projection", 17, 3)
    rep = mapping_content_dp(f, None, 2, 1, 3, oracle(2))
    back = ContentReport.from_dict(rep.to_dict())
    assert verify_cover(back, f)["ok"]
    back.value *= 1.01
    assert not verify_cover(back, f)["ok"]
    partial = ContentReport(rep.value, [], rep.bound_kind, rep.parameters)
    assert verify_cover(partial, f)["uncovered"] > 0


# -- Hausdorff content --------------------------------------------------------


def test_segment_one_content():
    pts = np.linspace(0, 1, 1001)[:, None]
    rep = hausdorff_content(pts, 1, geometric_ladder(0.5, 8))
    r = rep.parameters["radius"]
    # k balls of radius r with k <= 1/(2r) + 1 at the chosen rung
    assert 1.0 <= rep.value <= 1.0 + 2 * r + 1e-12
    assert verify_cover(rep, points=pts)["ok"]


def test_hausdorff_content_of_nothing_and_a_point():
    assert hausdorff_content(np.zeros((0, 2)), 2, [1.0]).value == 0.0
    rep = hausdorff_content(np.zeros((1, 2)), 2, [1.0, 0.1])
    assert rep.value == pytest.approx(math.pi * 0.01)


def test_scales_must_decrease():
    with pytest.raises(ValueError):
        hausdorff_content(np.zeros((3, 2)), 2, [0.1, 1.0])


@settings(max_examples=30, deadline=None)
@given(st.integers(0, 2**32 - 1), st.floats(0.1, 10))
def test_content_scales_homogeneously(seed, c):
    pts = np.random.default_rng(seed).random((40, 2))
    a = hausdorff_content(pts, 2, geometric_ladder(1.0)).value
    b = hausdorff_content(c * pts, 2, c * geometric_ladder(1.0)).value
    assert b == pytest.approx(c**2 * a, rel=1e-9)


# -- densities ------------------------------------------------------------------


def test_density_ladder():
    assert np.allclose(density_ladder(1.0, 0.2), [1.0, 0.5, 0.25, 0.2])
    assert np.allclose(density_ladder(1.0, 0.5), [1.0, 0.5])


def test_density_identity_close_to_one():
    f = from_function(2, 101, lambda p: p.copy())
    e = density(f, f.domain.flat_index([50, 50]), 2, [0.2, 0.1, 0.05])
    # lattice packing of half-spacing balls: pi/4 per point
    assert np.all((e.ratios >= 0.25) & (e.ratios <= 4))
    assert e.upper == pytest.approx(math.pi / 4, rel=0.05)


def test_density_of_coordinate_decays_with_refinement():
    uppers = []
    for N in (51, 101, 201):
        f = from_function(2, N, lambda p: p[:, 0])
        e = density(f, f.domain.flat_index([N // 2, N // 2]), 2, [0.2, 0.1, 0.05])
        uppers.append(e.upper)
    assert uppers[-1] < 0.06
    assert uppers[0] > uppers[1] > uppers[2]


def test_density_of_constant_is_zero():
    f = from_function(2, 51, lambda p: np.zeros(len(p)))
    e = density(f, f.domain.flat_index([25, 25]), 2, [0.2, 0.1])
    assert e.upper == 0.0 and e.lower == 0.0


def test_density_argument_checks():
    f = from_function(2, 21, lambda p: p.copy())
    c = f.domain.flat_index([10, 10])
    with pytest.raises(ValueError):
        density(f, c, 2, [0.1, 0.2])
    with pytest.raises(ValueError):
        density(f, c, 2, [0.6, 0.2])
    with pytest.raises(ValueError):
        density(f, 0, 2, [0.1])
