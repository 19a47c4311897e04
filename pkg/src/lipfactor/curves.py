"""Polyline curves in a metric space: length, speed and oriented area."""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable

import numpy as np

__all__ = ["Curve", "length", "speed", "oriented_area", "euclidean_distance"]


def euclidean_distance(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    return np.linalg.norm(np.asarray(a, dtype=float) - np.asarray(b, dtype=float), axis=-1)


@dataclass(frozen=True)
class Curve:
    """Sampled curve ``t_i -> points[i]``.

    ``distance`` is a vectorized metric on rows of ``points``; Euclidean
    by default.  A closed curve repeats its first point at the end.
    """

    params: np.ndarray
    points: np.ndarray
    closed: bool = False
    distance: Callable[[np.ndarray, np.ndarray], np.ndarray] = euclidean_distance

    def __post_init__(self):
        params = np.asarray(self.params, dtype=float)
        points = np.asarray(self.points, dtype=float)
        if points.ndim == 1:
            points = points[:, None]
        if params.ndim != 1 or len(params) != len(points):
            raise ValueError("params and points must have the same length")
        if len(params) < 2:
            raise ValueError("a curve needs at least two samples")
        if np.any(np.diff(params) <= 0):
            raise ValueError("params must be strictly increasing")
        if self.closed and not np.array_equal(points[0], points[-1]):
            raise ValueError("closed curve must end at its starting point")
        object.__setattr__(self, "params", params)
        object.__setattr__(self, "points", points)

    @classmethod
    def closed_loop(cls, points, params=None, **kw) -> Curve:
        """Close ``points`` by appending the first point."""
        points = np.asarray(points, dtype=float)
        points = np.vstack([points, points[:1]])
        if params is None:
            params = np.arange(len(points), dtype=float)
        return cls(params, points, closed=True, **kw)

    @property
    def k(self) -> int:
        return len(self.params) - 1

    def segment_lengths(self) -> np.ndarray:
        return self.distance(self.points[:-1], self.points[1:])

    def reversed(self) -> Curve:
        return Curve(self.params[-1] + self.params[0] - self.params[::-1], self.points[::-1], self.closed, self.distance)


def length(c: Curve) -> float:
    """Polygonal length; a lower bound for the length of any curve through the samples."""
    return float(np.sum(c.segment_lengths()))


def speed(c: Curve, i: int) -> float:
    if not 0 < i < c.k:
        raise ValueError(f"speed needs an interior index in (0, {c.k}), got {i}")
    dist = c.distance(c.points[i - 1], c.points[i + 1])
    return float(dist) / (c.params[i + 1] - c.params[i - 1])


def oriented_area(c: Curve) -> float:
    """Signed area ``int x dy`` enclosed by a closed planar curve (shoelace)."""
    if not c.closed:
        raise ValueError("oriented area needs a closed curve")
    if c.points.shape[1] != 2:
        raise ValueError("oriented area needs planar points")
    x = c.points[:-1, 0]
    y = c.points[:-1, 1]
    # correctly rounded sum: exact sign flip under reversal and cyclic shifts
    return 0.5 * math.fsum(x * (np.roll(y, -1) - np.roll(y, 1)))
