import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from lipfactor.seminorm import (
    Seminorm,
    ball_volume_exact,
    ball_volume_mc,
    jacobian,
    jacobian_exact,
    unit_ball_volume,
)

finite = st.floats(-10, 10, allow_nan=False, allow_infinity=False)


def hexagon():
    angles = np.array([0.0, np.pi / 3, 2 * np.pi / 3])
    return Seminorm(np.column_stack([np.cos(angles), np.sin(angles)]), 2)


def grid_volume(s: Seminorm, bound: float, k: int = 801) -> float:
    # midpoint-rule count of {sigma <= 1} inside [-bound, bound]^2
    ax = (np.arange(k) + 0.5) / k * 2 * bound - bound
    X, Y = np.meshgrid(ax, ax)
    inside = s.eval_many(np.column_stack([X.ravel(), Y.ravel()])) <= 1
    return inside.mean() * (2 * bound) ** 2


def test_unit_ball_volumes():
    assert unit_ball_volume(1) == pytest.approx(2.0)
    assert unit_ball_volume(2) == pytest.approx(math.pi)
    assert unit_ball_volume(3) == pytest.approx(4 * math.pi / 3)


def test_sup_norm_jacobian_is_pi_over_four():
    s = Seminorm(np.eye(2), 2)
    assert jacobian_exact(s) == pytest.approx(math.pi / 4, rel=1e-12)
    assert jacobian(s, 200_000, seed=1) == pytest.approx(math.pi / 4, rel=1e-2)


def test_hexagon_jacobian():
    # regular hexagon of inradius 1 has area 2 sqrt(3)
    s = hexagon()
    assert ball_volume_exact(s) == pytest.approx(2 * math.sqrt(3), rel=1e-12)
    assert jacobian_exact(s) == pytest.approx(math.pi / (2 * math.sqrt(3)), rel=1e-12)
    assert grid_volume(s, 1.2) == pytest.approx(2 * math.sqrt(3), rel=2e-3)


def test_rank_and_kernel_of_degenerate_seminorm():
    s = Seminorm([[1.0, 1.0, 0.0], [2.0, 2.0, 0.0]], 3)
    assert s.rank() == 1
    ker = np.array(s.kernel_basis())
    assert ker.shape == (2, 3)
    assert np.allclose(s.rows @ ker.T, 0)
    assert jacobian(s) == 0.0
    assert jacobian_exact(s) == 0.0


def test_empty_and_zero_seminorms():
    s = Seminorm(np.zeros((0, 2)), 2)
    assert s.eval([1.0, 2.0]) == 0.0 and s.rank() == 0
    assert len(s.kernel_basis()) == 2
    assert Seminorm.from_rows(np.zeros((3, 2))).rank() == 0


def test_bad_inputs():
    with pytest.raises(ValueError):
        Seminorm(np.ones((2, 3)), 2)
    with pytest.raises(ValueError):
        jacobian(Seminorm(np.eye(2), 2), samples=0)
    with pytest.raises(ValueError):
        ball_volume_exact(Seminorm(np.eye(4), 4))


def test_mc_volume_agrees_with_grid_count():
    s = Seminorm([[1.0, 0.3], [-0.2, 1.0], [0.7, 0.7]], 2)
    vol, err = ball_volume_mc(s, 400_000, seed=3)
    assert abs(vol - grid_volume(s, 1.6)) < 4 * err + 5e-3


def test_mc_is_deterministic_per_seed():
    s = hexagon()
    assert ball_volume_mc(s, 10_000, 7) == ball_volume_mc(s, 10_000, 7)


@settings(max_examples=60, deadline=None)
@given(arrays(float, (3, 2), elements=finite), arrays(float, 2, elements=finite), arrays(float, 2, elements=finite),
       st.floats(-5, 5))
def test_seminorm_axioms(rows, u, v, c):
    s = Seminorm(rows, 2)
    assert s.eval(u + v) <= s.eval(u) + s.eval(v) + 1e-9 * (1 + s.eval(u) + s.eval(v))
    assert s.eval(c * u) == pytest.approx(abs(c) * s.eval(u), rel=1e-9, abs=1e-9)
    assert s.eval(u) >= 0


@settings(max_examples=25, deadline=None)
@given(arrays(float, (4, 3), elements=st.floats(-3, 3)), arrays(float, (3, 3), elements=st.floats(-2, 2)))
def test_jacobian_transforms_by_determinant(rows, A):
    # J(sigma o A) = |det A| J(sigma)
    s = Seminorm(rows, 3)
    if s.rank() < 3 or abs(np.linalg.det(A)) < 1e-2 or np.linalg.cond(rows) > 1e4:
        return
    t = Seminorm(rows @ A, 3)
    assert jacobian_exact(t) == pytest.approx(abs(np.linalg.det(A)) * jacobian_exact(s), rel=1e-6)


def test_exact_matches_mc_on_random_seminorms():
    rng = np.random.default_rng(11)
    for k in range(10):
        n = 2 + k % 2
        s = Seminorm(rng.normal(size=(n + 3, n)), n)
        vol, err = ball_volume_mc(s, 200_000, seed=k)
        exact = ball_volume_exact(s)
        # p = 1 when the sampling box is the ball itself: then only rounding remains
        assert abs(vol - exact) <= 3 * err + 1e-12 * exact
