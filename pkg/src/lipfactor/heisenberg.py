"""Heisenberg group arithmetic and horizontal curves.

Points of H^n are stored as arrays ``(x_1..x_n, y_1..y_n, t)``.  The
group law is

    (x, y, t) * (x', y', t') = (x + x', y + y', t + t' + 2 sum_j (y_j x'_j - x_j y'_j))

and a curve is horizontal when ``dt = 2 sum_j (y_j dx_j - x_j dy_j)``.
Carnot-Caratheodory lengths of horizontal curves are computed as the
Euclidean length of the projection ``pi(x, y, t) = (x, y)``; distances
between arbitrary points are never computed.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass
from typing import Callable, NamedTuple, Sequence

import numpy as np
from scipy.spatial import cKDTree

from .curves import Curve

__all__ = [
    "HeisenbergPoint",
    "HorizontalityWarning",
    "group_mul",
    "inverse",
    "project",
    "projected_distance",
    "horizontal_lift",
    "horizontality_defect",
    "segment_defects",
    "cc_length",
    "left_translate",
    "projection_area_formula_check",
]


class HorizontalityWarning(UserWarning):
    pass


def _split(p: np.ndarray):
    p = np.asarray(p, dtype=float)
    if p.shape[-1] % 2 != 1:
        raise ValueError("Heisenberg points have odd length 2n+1")
    n = (p.shape[-1] - 1) // 2
    return p[..., :n], p[..., n : 2 * n], p[..., 2 * n]


@dataclass(frozen=True)
class HeisenbergPoint:
    x: np.ndarray
    y: np.ndarray
    t: float

    def __post_init__(self):
        x = np.atleast_1d(np.asarray(self.x, dtype=float))
        y = np.atleast_1d(np.asarray(self.y, dtype=float))
        if x.shape != y.shape or x.ndim != 1:
            raise ValueError("x and y must be vectors of the same length")
        if not (np.all(np.isfinite(x)) and np.all(np.isfinite(y)) and math.isfinite(self.t)):
            raise ValueError("Heisenberg point entries must be finite")
        object.__setattr__(self, "x", x)
        object.__setattr__(self, "y", y)
        object.__setattr__(self, "t", float(self.t))

    @property
    def n(self) -> int:
        return len(self.x)

    @classmethod
    def from_array(cls, p) -> HeisenbergPoint:
        x, y, t = _split(p)
        return cls(x, y, float(t))

    @classmethod
    def identity(cls, n: int = 1) -> HeisenbergPoint:
        return cls(np.zeros(n), np.zeros(n), 0.0)

    def as_array(self) -> np.ndarray:
        return np.concatenate([self.x, self.y, [self.t]])

    def __mul__(self, other: HeisenbergPoint) -> HeisenbergPoint:
        return HeisenbergPoint.from_array(group_mul(self.as_array(), other.as_array()))

    def inverse(self) -> HeisenbergPoint:
        return HeisenbergPoint(-self.x, -self.y, -self.t)


def group_mul(p, q) -> np.ndarray:
    """Group product, broadcasting over leading axes."""
    p = np.asarray(p, dtype=float)
    q = np.asarray(q, dtype=float)
    if p.shape[-1] != q.shape[-1]:
        raise ValueError(f"dimension mismatch: {p.shape[-1]} vs {q.shape[-1]}")
    x, y, t = _split(p)
    x2, y2, t2 = _split(q)
    tt = t + t2 + 2.0 * np.sum(y * x2 - x * y2, axis=-1)
    return np.concatenate([x + x2, y + y2, np.asarray(tt)[..., None]], axis=-1)


def inverse(p) -> np.ndarray:
    return -np.asarray(p, dtype=float)


def project(p) -> np.ndarray:
    p = np.asarray(p, dtype=float)
    return p[..., :-1]


def projected_distance(a, b) -> np.ndarray:
    """Euclidean distance of projections: the cc length of a horizontal segment."""
    return np.linalg.norm(project(a) - project(b), axis=-1)


def _symplectic_increment(xy: np.ndarray) -> np.ndarray:
    """``2 sum_j (ybar_j dx_j - xbar_j dy_j)`` per segment, with midpoint bars."""
    n = xy.shape[1] // 2
    x, y = xy[:, :n], xy[:, n:]
    dx, dy = np.diff(x, axis=0), np.diff(y, axis=0)
    xm, ym = 0.5 * (x[1:] + x[:-1]), 0.5 * (y[1:] + y[:-1])
    return 2.0 * np.sum(ym * dx - xm * dy, axis=1)


def horizontal_lift(c: Curve, t0: float = 0.0) -> Curve:
    """Lift a curve in R^{2n} to the horizontal curve starting at height ``t0``."""
    xy = c.points
    if xy.shape[1] % 2:
        raise ValueError("planar curve must live in R^{2n}")
    t = t0 + np.concatenate([[0.0], np.cumsum(_symplectic_increment(xy))])
    pts = np.hstack([xy, t[:, None]])
    # closedness of the lift depends on the enclosed area
    closed = c.closed and pts[0, -1] == pts[-1, -1]
    return Curve(c.params, pts, closed, projected_distance)


def segment_defects(c: Curve) -> np.ndarray:
    p = c.points
    dt = np.diff(p[:, -1])
    return np.abs(dt - _symplectic_increment(p[:, :-1])) / np.diff(c.params)


def horizontality_defect(c: Curve) -> float:
    return float(np.max(segment_defects(c)))


def default_tolerance(c: Curve) -> float:
    return 1e-6 * (c.params[-1] - c.params[0])


class CCLength(NamedTuple):
    value: float
    defect: float
    horizontal: bool


def cc_length(c: Curve, tol: float | None = None) -> CCLength:
    """cc length as the Euclidean length of the projection.

    Non-horizontal input is flagged (``horizontal=False`` plus a
    ``HorizontalityWarning``) but the projected length is still returned.
    """
    tol = default_tolerance(c) if tol is None else tol
    defect = horizontality_defect(c)
    proj = project(c.points)
    value = float(np.sum(np.linalg.norm(np.diff(proj, axis=0), axis=1)))
    ok = defect <= tol
    if not ok:
        warnings.warn(f"curve is not horizontal (defect {defect:.3g} > {tol:.3g})", HorizontalityWarning, stacklevel=2)
    return CCLength(value, defect, ok)


def left_translate(p, c: Curve) -> Curve:
    pts = group_mul(np.broadcast_to(np.asarray(p, dtype=float), c.points.shape), c.points)
    return Curve(c.params, pts, c.closed and np.array_equal(pts[0], pts[-1]), c.distance)


class AreaCheck(NamedTuple):
    lhs: float
    rhs: float
    gap: float


def _arc_samples(c: Curve, spacing: float):
    """Midpoints of sub-segments of the projected polyline, with their arc weights."""
    proj = project(c.points)
    seg = np.linalg.norm(np.diff(proj, axis=0), axis=1)
    pieces = np.maximum(1, np.ceil(seg / spacing)).astype(int)
    seg_id = np.repeat(np.arange(len(seg)), pieces)
    frac = np.concatenate([(np.arange(k) + 0.5) / k for k in pieces])
    a, b = c.points[seg_id], c.points[seg_id + 1]
    pts = a + frac[:, None] * (b - a)
    w = seg[seg_id] / pieces[seg_id]
    start = np.concatenate([[0.0], np.cumsum(seg)])
    arc = start[seg_id] + frac * seg[seg_id]
    return pts, w, arc, float(start[-1])


def projection_area_formula_check(
    curves: Sequence[Curve],
    g: Callable[[np.ndarray], np.ndarray] | None = None,
    rho: float = 1e-3,
    spacing: float | None = None,
    tol: float | None = None,
) -> AreaCheck:
    """Compare ``int_E g dH^1_cc`` with ``int_{pi(E)} sum_{pi^{-1}(y)} g dH^1``.

    ``E`` is the union of the given horizontal curves.  The right side
    deduplicates overlapping projections at radius ``rho / 2`` and counts
    preimages as runs of samples within ``rho`` of each projected point.
    """
    if g is None:
        g = lambda p: np.ones(len(p))  # noqa: E731
    spacing = rho / 4 if spacing is None else spacing
    if spacing <= 0 or rho < 2 * spacing:
        raise ValueError("need 0 < spacing <= rho / 2")
    if not curves:
        return AreaCheck(0.0, 0.0, 0.0)
    chunks = []
    for cid, c in enumerate(curves):
        ctol = default_tolerance(c) if tol is None else tol
        defect = horizontality_defect(c)
        if defect > ctol:
            raise ValueError(f"curve {cid} is not horizontal (defect {defect:.3g})")
        pts, w, arc, total = _arc_samples(c, spacing)
        chunks.append((pts, w, arc, np.full(len(w), cid), total, c.closed))
    pts = np.vstack([ch[0] for ch in chunks])
    w = np.concatenate([ch[1] for ch in chunks])
    arc = np.concatenate([ch[2] for ch in chunks])
    cid = np.concatenate([ch[3] for ch in chunks])
    totals = [ch[4] for ch in chunks]
    closed = [ch[5] for ch in chunks]
    gv = np.asarray(g(pts), dtype=float)
    lhs = math.fsum(w * gv)

    proj = project(pts)
    tree = cKDTree(proj)

    def arc_gap(i, j):
        gap = abs(arc[i] - arc[j])
        if closed[cid[i]]:
            gap = min(gap, totals[cid[i]] - gap)
        return gap

    kept = np.zeros(len(w), dtype=bool)
    near = tree.query_ball_point(proj, rho / 2)
    for i in range(len(w)):
        dup = False
        for j in near[i]:
            if j < i and kept[j] and (cid[j] != cid[i] or arc_gap(i, j) > rho):
                dup = True
                break
        kept[i] = not dup

    max_step = 2.0 * spacing
    terms = []
    wide = tree.query_ball_point(proj[kept], rho)
    for i, nbrs in zip(np.flatnonzero(kept), wide):
        nbrs = np.asarray(nbrs)
        total = 0.0
        for k in np.unique(cid[nbrs]):
            sel = nbrs[cid[nbrs] == k]
            order = np.argsort(arc[sel], kind="stable")
            sel = sel[order]
            breaks = np.flatnonzero(np.diff(arc[sel]) > max_step)
            runs = np.split(sel, breaks + 1)
            if closed[k] and len(runs) > 1:
                # wrap-around: first and last run meet at the closing point
                if arc[runs[0][0]] < max_step and totals[k] - arc[runs[-1][-1]] < max_step:
                    runs = [np.concatenate([runs[-1], runs[0]])] + runs[1:-1]
            for run in runs:
                j = run[np.argmin(np.linalg.norm(proj[run] - proj[i], axis=1))]
                total += gv[j]
        terms.append(w[i] * total)
    rhs = math.fsum(terms)
    return AreaCheck(lhs, rhs, abs(lhs - rhs))
