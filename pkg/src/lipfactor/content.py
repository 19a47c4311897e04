"""Hausdorff content, dyadic mapping content and n-densities of sampled maps.

The mapping content of ``f`` on ``E`` is

    H^{n,m}_inf(f, E) = inf sum_i H^n_inf(f(Q_i)) diam(Q_i)^m

over covers of ``E`` by closed dyadic cubes.  ``mapping_content_dp``
computes this infimum exactly over covers of depth ``<= max_depth``,
given per-cube image contents.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, NamedTuple, Sequence

import numpy as np

from .sampled_map import MetricTarget, SampledMap
from .seminorm import unit_ball_volume

__all__ = [
    "DyadicCube",
    "ContentReport",
    "DensityEstimate",
    "hausdorff_content",
    "greedy_cover_radii",
    "geometric_ladder",
    "cube_point_ids",
    "mapping_content_dp",
    "hat_content_bounds",
    "density",
    "density_ladder",
    "verify_cover",
]

LADDER_RUNGS = 6  # radii r, r/2, ..., r/32


class DyadicCube(NamedTuple):
    depth: int
    index: tuple[int, ...]

    @property
    def d(self) -> int:
        return len(self.index)

    @property
    def side(self) -> float:
        return 2.0**-self.depth

    @property
    def diam(self) -> float:
        return math.sqrt(self.d) * self.side

    def bounds(self) -> tuple[np.ndarray, np.ndarray]:
        lo = np.asarray(self.index, dtype=float) * self.side
        return lo, lo + self.side

    def children(self) -> list[DyadicCube]:
        base = np.asarray(self.index) * 2
        offsets = np.indices((2,) * self.d).reshape(self.d, -1).T
        return [DyadicCube(self.depth + 1, tuple(int(v) for v in base + o)) for o in offsets]

    def contains_grid(self, idx: np.ndarray, N: int) -> np.ndarray:
        """Closed-cube membership of grid multi-indices, in exact integer arithmetic."""
        idx = np.atleast_2d(idx)
        j = np.asarray(self.index)
        scaled = idx * (1 << self.depth)
        return np.all((scaled >= j * (N - 1)) & (scaled <= (j + 1) * (N - 1)), axis=1)


@dataclass
class ContentReport:
    """Value of a content computation with the cover certifying it.

    ``cover`` holds ``(center, radius)`` balls for Hausdorff content and
    ``(DyadicCube, image_content)`` pairs for mapping content.
    """

    value: float
    cover: list
    bound_kind: str
    parameters: dict = field(default_factory=dict)

    @property
    def kind(self) -> str:
        return self.parameters.get("kind", "")

    def recompute(self) -> float:
        if self.kind == "mapping":
            m = self.parameters["m"]
            return math.fsum(c * cube.diam**m for cube, c in self.cover)
        n = self.parameters["n"]
        omega = unit_ball_volume(n)
        return math.fsum(omega * r**n for _, r in self.cover)

    def to_dict(self) -> dict:
        if self.kind == "mapping":
            cover = [{"depth": c.depth, "index": list(c.index), "image_content": v} for c, v in self.cover]
        else:
            cover = [{"center": np.asarray(p).tolist(), "radius": r} for p, r in self.cover]
        return {
            "value": self.value,
            "bound_kind": self.bound_kind,
            "parameters": self.parameters,
            "cover": cover,
        }

    @classmethod
    def from_dict(cls, data: dict) -> ContentReport:
        params = data["parameters"]
        if params.get("kind") == "mapping":
            cover = [(DyadicCube(c["depth"], tuple(c["index"])), c["image_content"]) for c in data["cover"]]
        else:
            cover = [(np.asarray(c["center"]), c["radius"]) for c in data["cover"]]
        return cls(data["value"], cover, data["bound_kind"], params)


def geometric_ladder(top: float, rungs: int = LADDER_RUNGS) -> np.ndarray:
    return top * 0.5 ** np.arange(rungs)


def greedy_cover_radii(points: np.ndarray, target: MetricTarget, r_min: float) -> tuple[np.ndarray, np.ndarray]:
    """Farthest-point order of ``points`` down to covering radius ``r_min``.

    Returns the centre ids and ``radii[k]``, the covering radius achieved
    by the first ``k + 1`` centres (non-increasing).
    """
    order = [0]
    mind = np.asarray(target.distance(points, points[0][None]), dtype=float)
    radii = [float(mind.max())]
    while radii[-1] > r_min:
        nxt = int(np.argmax(mind))
        order.append(nxt)
        mind = np.minimum(mind, target.distance(points, points[nxt][None]))
        radii.append(float(mind.max()))
    return np.asarray(order), np.asarray(radii)


def hausdorff_content(
    points,
    n: int,
    scales: Sequence[float],
    target: MetricTarget | None = None,
) -> ContentReport:
    """Upper bound on ``H^n_inf`` of a finite point set by greedy ball covers.

    For each radius ``r`` of the (strictly decreasing) ladder the points
    are covered greedily by balls of radius ``r`` centred at points; the
    cost is ``count * omega_n * r^n`` and the cheapest rung is returned.
    """
    if n < 1:
        raise ValueError("n must be at least 1")
    scales = np.asarray(scales, dtype=float)
    if scales.ndim != 1 or scales.size == 0 or np.any(scales <= 0) or np.any(np.diff(scales) >= 0):
        raise ValueError("scales must be a non-empty, strictly decreasing list of positive radii")
    target = MetricTarget.euclidean() if target is None else target
    points = np.asarray(points, dtype=float)
    if points.ndim == 1:
        points = points[:, None]
    params = {"kind": "hausdorff", "n": n, "scales": scales.tolist()}
    if len(points) == 0:
        return ContentReport(0.0, [], "upper", params)
    order, radii = greedy_cover_radii(points, target, float(scales[-1]))
    omega = unit_ball_volume(n)
    best = None
    for r in scales:
        count = int(np.argmax(radii <= r)) + 1
        cost = count * omega * r**n
        if best is None or cost < best[0]:
            best = (cost, count, float(r))
    _, count, r = best
    cover = [(points[i].copy(), r) for i in order[:count]]
    params["radius"] = r
    report = ContentReport(0.0, cover, "upper", params)
    report.value = report.recompute()
    return report


def _axis_ranges(N: int, depth: int) -> list[tuple[int, int]]:
    """Inclusive grid-index range of each closed dyadic interval at ``depth``."""
    k = 1 << depth
    return [(-(-j * (N - 1) // k), ((j + 1) * (N - 1)) // k) for j in range(k)]


def cube_point_ids(f: SampledMap, cube: DyadicCube) -> np.ndarray:
    """Flat ids of grid points in the closed cube."""
    N = f.domain.N
    ranges = _axis_ranges(N, cube.depth)
    axes = [np.arange(ranges[j][0], ranges[j][1] + 1) for j in cube.index]
    mesh = np.meshgrid(*axes, indexing="ij")
    return np.ravel_multi_index(tuple(m.ravel() for m in mesh), f.domain.shape)


def _sampled_image_content(f: SampledMap, n: int) -> Callable[[DyadicCube], float]:
    def content(cube: DyadicCube) -> float:
        top = f.lipschitz * cube.diam
        if top <= 0:
            return 0.0
        pts = f.values[cube_point_ids(f, cube)]
        return hausdorff_content(pts, n, geometric_ladder(top), f.target).value

    return content


def _check_mapping_args(f: SampledMap, n: int, m: int, max_depth: int) -> None:
    if n < 1 or m < 0:
        raise ValueError("need n >= 1 and m >= 0")
    if n + m != f.domain.d:
        raise ValueError(f"n + m = {n + m} must equal the domain dimension {f.domain.d}")
    if max_depth < 0:
        raise ValueError("max_depth must be nonnegative")
    if (1 << max_depth) > f.domain.N - 1:
        raise ValueError(f"2^max_depth = {1 << max_depth} exceeds N - 1 = {f.domain.N - 1}")


def _e_mask(f: SampledMap, E) -> np.ndarray:
    if E is None:
        return np.ones(f.domain.shape, dtype=bool)
    E = np.asarray(E, dtype=bool)
    return E.reshape(f.domain.shape)


def _occupied(E: np.ndarray, N: int, depth: int) -> np.ndarray:
    """Which closed cubes at ``depth`` meet ``E``."""
    d = E.ndim
    k = 1 << depth
    ranges = _axis_ranges(N, depth)
    out = E
    for ax in range(d):
        parts = [np.any(np.take(out, np.arange(lo, hi + 1), axis=ax), axis=ax, keepdims=True) for lo, hi in ranges]
        out = np.concatenate(parts, axis=ax)
    assert out.shape == (k,) * d
    return out


def mapping_content_dp(
    f: SampledMap,
    E=None,
    n: int = 2,
    m: int | None = None,
    max_depth: int = 3,
    image_oracle: Callable[[DyadicCube], float] | None = None,
) -> ContentReport:
    """Optimal dyadic cover of ``E`` for ``sum H^n_inf(f(Q)) diam(Q)^m``.

    Bottom-up over the dyadic tree, ``cost(Q) = min(content(Q) diam(Q)^m,
    sum of children)``; cubes missing ``E`` cost nothing.  ``content(Q)``
    is ``image_oracle(Q)`` when given, else the greedy estimate of the
    sampled image ``f(Q)`` with radii ``L diam(Q)`` down to ``L diam(Q)/32``.
    The result is exact over dyadic covers of depth ``<= max_depth`` for
    the given per-cube contents; with the sampled estimator it is an
    upper bound at that resolution.
    """
    d = f.domain.d
    m = d - n if m is None else m
    _check_mapping_args(f, n, m, max_depth)
    Emask = _e_mask(f, E)
    content = image_oracle if image_oracle is not None else _sampled_image_content(f, n)
    N = f.domain.N

    level_cost: list[np.ndarray] = [None] * (max_depth + 1)  # type: ignore[list-item]
    level_self: list[np.ndarray] = [None] * (max_depth + 1)  # type: ignore[list-item]
    level_content: list[np.ndarray] = [None] * (max_depth + 1)  # type: ignore[list-item]
    level_occ: list[np.ndarray] = [None] * (max_depth + 1)  # type: ignore[list-item]
    child_sum = None
    for depth in range(max_depth, -1, -1):
        k = 1 << depth
        occ = _occupied(Emask, N, depth)
        cont = np.zeros((k,) * d)
        for idx in zip(*np.nonzero(occ)):
            cont[idx] = content(DyadicCube(depth, tuple(int(i) for i in idx)))
        diam = math.sqrt(d) * 2.0**-depth
        own = np.where(occ, cont * diam**m, 0.0)
        if child_sum is None:
            cost = own
            take = occ.copy()
        else:
            take = occ & (own <= child_sum)
            cost = np.where(take, own, child_sum)
        level_cost[depth], level_self[depth], level_content[depth], level_occ[depth] = cost, take, cont, occ
        if depth > 0:
            shape = []
            for _ in range(d):
                shape += [k // 2, 2]
            child_sum = cost.reshape(shape).sum(axis=tuple(range(1, 2 * d, 2)))

    cover = []
    stack = [DyadicCube(0, (0,) * d)]
    while stack:
        cube = stack.pop()
        if not level_occ[cube.depth][cube.index]:
            continue
        if level_self[cube.depth][cube.index]:
            cover.append((cube, float(level_content[cube.depth][cube.index])))
        else:
            stack.extend(reversed(cube.children()))
    cover.sort(key=lambda item: (item[0].depth, item[0].index))
    params = {
        "kind": "mapping",
        "n": n,
        "m": m,
        "max_depth": max_depth,
        "estimator": "oracle" if image_oracle is not None else "greedy",
        "ladder_rungs": LADDER_RUNGS,
        "lipschitz": f.lipschitz,
        "N": N,
        "d": d,
    }
    report = ContentReport(0.0, cover, "exact-at-resolution" if image_oracle is not None else "upper", params)
    report.value = report.recompute()
    report.parameters["dp_value"] = float(level_cost[0][(0,) * d])
    return report


def hat_content_bounds(f: SampledMap, E=None, n: int = 2, m: int | None = None, max_depth: int = 3, image_oracle=None):
    """``(0, upper)`` bounds for the arbitrary-cover content; dyadic covers are admissible."""
    upper = mapping_content_dp(f, E, n, m, max_depth, image_oracle)
    upper.parameters["quantity"] = "hat"
    return 0.0, upper


@dataclass
class DensityEstimate:
    point: int
    radii: np.ndarray
    ratios: np.ndarray
    upper: float
    lower: float

    def to_dict(self) -> dict:
        return {
            "point": self.point,
            "radii": self.radii.tolist(),
            "ratios": self.ratios.tolist(),
            "upper": self.upper,
            "lower": self.lower,
        }


def _ball_ids(dom, idx: np.ndarray, r: float) -> np.ndarray:
    span = int(math.floor(r / dom.h + 1e-9))
    axes = [np.arange(max(0, i - span), min(dom.N, i + span + 1)) for i in idx]
    mesh = np.stack(np.meshgrid(*axes, indexing="ij"), axis=-1).reshape(-1, dom.d)
    inside = np.sum(((mesh - idx) * dom.h) ** 2, axis=1) <= r * r * (1 + 1e-12)
    return np.sort(dom.flat_index(mesh[inside]))


def _local_spacing(f: SampledMap, ids: np.ndarray) -> float:
    """Largest image distance between axis neighbours inside ``ids``."""
    dom = f.domain
    multi = dom.multi_index(ids)
    best = 0.0
    for k in range(dom.d):
        nb = multi.copy()
        nb[:, k] += 1
        ok = nb[:, k] < dom.N
        nb_flat = dom.flat_index(nb[ok])
        inside = np.isin(nb_flat, ids)
        if np.any(inside):
            dist = f.target.distance(f.values[ids[ok][inside]], f.values[nb_flat[inside]])
            best = max(best, float(np.max(dist)))
    return best


def density_ladder(top: float, floor: float) -> np.ndarray:
    """Halving radii from ``top`` down to ``floor`` (included)."""
    rungs = [top]
    while rungs[-1] / 2 > floor:
        rungs.append(rungs[-1] / 2)
    if rungs[-1] > floor > 0:
        rungs.append(floor)
    return np.asarray(rungs)


def density(
    f: SampledMap,
    x,
    n: int,
    radii: Sequence[float],
    tail: int = 3,
    ladder: str = "resolution",
) -> DensityEstimate:
    """Ratios ``H^n_inf(f(B(x, r))) / (omega_n r^n)`` for a decreasing radius ladder.

    The content of each image ball is the greedy estimate over halving radii
    from ``L_loc r`` down to a floor.  With ``ladder="resolution"`` (default)
    the floor is half the largest image spacing of grid neighbours in the
    ball, below which a finite sample stops representing its continuum;
    ``ladder="relative"`` uses six rungs ``L r, ..., L r / 32``.
    Upper and lower densities are the max and min over the ``tail``
    smallest radii.
    """
    if ladder not in ("resolution", "relative"):
        raise ValueError(f"unknown ladder {ladder!r}")
    dom = f.domain
    idx = dom.multi_index(int(x)) if np.ndim(x) == 0 else np.asarray(x, dtype=int)
    flat = int(dom.flat_index(idx))
    radii = np.asarray(radii, dtype=float)
    if radii.size == 0 or np.any(np.diff(radii) >= 0):
        raise ValueError("radii must be strictly decreasing")
    if not dom.is_interior(idx):
        raise ValueError("density needs an interior point")
    center = idx * dom.h
    to_boundary = float(np.min(np.minimum(center, 1.0 - center)))
    if radii[0] > to_boundary + 1e-12:
        raise ValueError(f"radius {radii[0]} leaves the cube (distance to boundary {to_boundary})")
    if radii[-1] < dom.h:
        raise ValueError(f"radius {radii[-1]} is below the grid resolution {dom.h}")
    omega = unit_ball_volume(n)
    ratios = []
    for r in radii:
        ids = _ball_ids(dom, idx, r)
        if len(ids) < 10:
            raise ValueError(f"ball of radius {r} holds only {len(ids)} grid points (need 10)")
        value = 0.0
        if ladder == "relative":
            top = f.lipschitz * r
            scales = geometric_ladder(top) if top > 0 else None
        else:
            spacing = _local_spacing(f, ids)
            top = spacing / dom.h * r
            scales = density_ladder(top, spacing / 2) if top > 0 else None
        if scales is not None:
            value = hausdorff_content(f.values[ids], n, scales, f.target).value
        ratios.append(value / (omega * r**n))
    ratios = np.asarray(ratios)
    tail_vals = ratios[-tail:]
    return DensityEstimate(flat, radii, ratios, float(tail_vals.max()), float(tail_vals.min()))


def verify_cover(report: ContentReport, f: SampledMap | None = None, E=None, points=None, rtol: float = 1e-12) -> dict:
    """Re-check a content certificate: value matches the cover and the cover covers the set."""
    recomputed = report.recompute()
    value_ok = abs(recomputed - report.value) <= rtol * max(1.0, abs(report.value))
    uncovered = 0
    if report.kind == "mapping":
        if f is None:
            raise ValueError("mapping-content covers are checked against a sampled map")
        N = f.domain.N
        Emask = _e_mask(f, E).ravel()
        covered = np.zeros(f.domain.size, dtype=bool)
        idx = f.domain.index_array()
        for cube, _ in report.cover:
            covered |= cube.contains_grid(idx, N)
        uncovered = int(np.count_nonzero(Emask & ~covered))
    else:
        if points is None:
            raise ValueError("Hausdorff-content covers are checked against the point set")
        points = np.asarray(points, dtype=float)
        if points.ndim == 1:
            points = points[:, None]
        target = MetricTarget.euclidean()
        mind = np.full(len(points), np.inf)
        for c, r in report.cover:
            mind = np.minimum(mind, target.distance(points, np.asarray(c)[None]) - r)
        uncovered = int(np.count_nonzero(mind > 1e-12)) if len(points) else 0
    return {
        "value": report.value,
        "recomputed": recomputed,
        "value_ok": bool(value_ok),
        "uncovered": uncovered,
        "ok": bool(value_ok and uncovered == 0),
    }
