"""Pullback length metric, the quotient space it induces, and tree certificates.

On the grid graph with edge weights ``d_Y(f(u), f(v))`` the shortest-path
distance ``d_f`` is the discrete infimum of image lengths of curves.  The
quotient glues points at ``d_f``-distance zero (here: edges lighter than
``epsilon``) and keeps the shortest-path metric of the contracted graph,
so ``f = phi o psi`` with ``psi`` the class map and ``phi`` the image of a
class representative.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np
import scipy.sparse as sp
from scipy.sparse.csgraph import connected_components, dijkstra

from .curves import Curve, oriented_area
from .sampled_map import SampledMap

__all__ = [
    "PullbackMetric",
    "QuotientSpace",
    "FourPointResult",
    "LoopAreaResult",
    "TreeCertificate",
    "pullback_metric",
    "quotient",
    "factor_check",
    "four_point_defect",
    "defect_of_matrix",
    "rectangle_loops",
    "loop_area_test",
    "tree_certificate",
    "directional_agreement",
]

ALL_PAIRS_CAP = 4096
_ROW_CHUNK = 256


def _rows(graph: sp.csr_matrix, sources, limit: float = np.inf) -> np.ndarray:
    sources = np.atleast_1d(np.asarray(sources, dtype=int))
    out = [dijkstra(graph, directed=False, indices=sources[i : i + _ROW_CHUNK], limit=limit) for i in range(0, len(sources), _ROW_CHUNK)]
    if not out:
        return np.zeros((0, graph.shape[0]))
    return np.vstack(out)


@dataclass
class PullbackMetric:
    f: SampledMap
    edge_u: np.ndarray
    edge_v: np.ndarray
    edge_w: np.ndarray
    graph: sp.csr_matrix
    all_pairs_cap: int = ALL_PAIRS_CAP
    _all: np.ndarray | None = field(default=None, repr=False)

    @property
    def size(self) -> int:
        return self.graph.shape[0]

    def distances_from(self, sources) -> np.ndarray:
        if self._all is not None:
            return self._all[np.atleast_1d(sources)]
        return _rows(self.graph, sources)

    def distance(self, a: int, b: int) -> float:
        return float(self.distances_from([a])[0, b])

    def all_pairs(self) -> np.ndarray:
        if self.size > self.all_pairs_cap:
            raise MemoryError(f"{self.size} vertices exceed the all-pairs cap {self.all_pairs_cap}")
        if self._all is None:
            self._all = dijkstra(self.graph, directed=False)
        return self._all


def _graph(n: int, u, v, w) -> sp.csr_matrix:
    # explicit zero weights stay in the structure and count as edges
    return sp.csr_matrix((np.asarray(w, dtype=float), (u, v)), shape=(n, n))


def pullback_metric(f: SampledMap, all_pairs_cap: int = ALL_PAIRS_CAP) -> PullbackMetric:
    u, v = f.domain.edges()
    w = np.asarray(f.target.distance(f.values[u], f.values[v]), dtype=float)
    return PullbackMetric(f, u, v, w, _graph(f.domain.size, u, v, w), all_pairs_cap)


@dataclass
class QuotientSpace:
    """Contracted grid graph with its shortest-path metric.

    ``psi[v]`` is the class of grid vertex ``v``; ``reps[c]`` the smallest
    vertex of class ``c``; ``phi(c) = f(reps[c])``.
    """

    f: SampledMap
    psi: np.ndarray
    reps: np.ndarray
    edges: np.ndarray
    weights: np.ndarray
    graph: sp.csr_matrix
    epsilon: float
    all_pairs_cap: int = ALL_PAIRS_CAP
    _all: np.ndarray | None = field(default=None, repr=False)

    @property
    def n_classes(self) -> int:
        return len(self.reps)

    def phi(self, classes) -> np.ndarray:
        return self.f.values[self.reps[np.asarray(classes)]]

    def distances_from(self, classes) -> np.ndarray:
        if self._all is not None:
            return self._all[np.atleast_1d(classes)]
        return _rows(self.graph, classes)

    def distance(self, a: int, b: int) -> float:
        return float(self.distances_from([a])[0, b])

    def all_pairs(self) -> np.ndarray:
        if self.n_classes > self.all_pairs_cap:
            raise MemoryError(f"{self.n_classes} classes exceed the all-pairs cap {self.all_pairs_cap}")
        if self._all is None:
            self._all = dijkstra(self.graph, directed=False)
        return self._all

    def class_sizes(self) -> np.ndarray:
        return np.bincount(self.psi, minlength=self.n_classes)

    def class_table(self) -> list[tuple[int, int]]:
        return [(int(v), int(c)) for v, c in enumerate(self.psi)]

    def edge_list(self) -> list[tuple[int, int, float]]:
        return [(int(a), int(b), float(w)) for (a, b), w in zip(self.edges, self.weights)]


def default_epsilon(f: SampledMap) -> float:
    """``h^2 L``: glues edges of slope below ``h L``, so gluing moves a
    difference quotient by at most ``h L``."""
    return f.h * f.h * f.lipschitz


def quotient(pm: PullbackMetric, epsilon: float | None = None) -> QuotientSpace:
    """Glue grid neighbours whose image distance is ``<= epsilon``, then contract.

    Gluing follows graph edges, so zero-weight chains collapse completely
    while edges of genuine length survive; ``epsilon`` defaults to ``h^2 L``.
    """
    f = pm.f
    eps = default_epsilon(f) if epsilon is None else float(epsilon)
    if eps < 0:
        raise ValueError("epsilon must be nonnegative")
    n = pm.size
    glue = pm.edge_w <= eps
    gl = sp.csr_matrix((np.ones(int(glue.sum())), (pm.edge_u[glue], pm.edge_v[glue])), shape=(n, n))
    _, labels = connected_components(gl, directed=False)
    # relabel classes by their smallest vertex
    first = np.full(labels.max() + 1, n, dtype=int)
    np.minimum.at(first, labels, np.arange(n))
    order = np.argsort(first, kind="stable")
    relabel = np.empty_like(order)
    relabel[order] = np.arange(len(order))
    psi = relabel[labels]
    reps = first[order]

    a, b, w = psi[pm.edge_u], psi[pm.edge_v], pm.edge_w
    keep = a != b
    lo, hi, w = np.minimum(a, b)[keep], np.maximum(a, b)[keep], w[keep]
    order = np.lexsort((w, hi, lo))
    lo, hi, w = lo[order], hi[order], w[order]
    if len(lo):
        first_of = np.ones(len(lo), dtype=bool)
        first_of[1:] = (lo[1:] != lo[:-1]) | (hi[1:] != hi[:-1])
        lo, hi, w = lo[first_of], hi[first_of], w[first_of]
    C = len(reps)
    graph = _graph(C, lo, hi, w)
    edges = np.stack([lo, hi], axis=1) if len(lo) else np.zeros((0, 2), dtype=int)
    return QuotientSpace(f, psi, reps, edges, w, graph, eps, pm.all_pairs_cap)


def factor_check(f: SampledMap, Z: QuotientSpace, tol: float | None = None, sources: int = 64, seed: int = 0) -> dict:
    """Check ``psi`` is L-Lipschitz (w.r.t. the grid l1 distance), ``phi`` is
    1-Lipschitz up to class spread, and ``phi o psi`` reproduces ``f``."""
    tol = 4.0 * f.h * max(f.lipschitz, 1.0) if tol is None else tol
    dom = f.domain
    P = dom.size
    rng = np.random.default_rng(seed)
    src = np.unique(rng.choice(P, size=min(sources, P), replace=False))
    src_cls = Z.psi[src]
    DZ = Z.distances_from(src_cls)[:, Z.psi]  # (S, P)
    idx = dom.index_array()
    l1 = np.abs(idx[src][:, None, :] - idx[None, :, :]).sum(axis=2) * dom.h
    L = f.lipschitz

    mask = l1 > 0
    psi_ratio = 0.0
    if L > 0 and np.any(mask):
        psi_ratio = float(np.max(DZ[mask] / (L * l1[mask])))
    elif L == 0:
        psi_ratio = 0.0 if np.all(DZ == 0) else math.inf

    spread = np.asarray(f.target.distance(f.values, Z.phi(Z.psi)), dtype=float)
    class_spread = np.zeros(Z.n_classes)
    np.maximum.at(class_spread, Z.psi, spread)

    all_cls = np.arange(Z.n_classes)
    DC = Z.distances_from(np.unique(src_cls))
    ucls = np.unique(src_cls)
    dy = np.stack([f.target.distance(Z.phi(all_cls), Z.phi(c)[None]) for c in ucls])
    excess = dy - DC - (class_spread[ucls][:, None] + class_spread[None, :])
    phi_excess = float(np.max(excess)) if excess.size else 0.0

    reproduce = float(np.max(spread)) if spread.size else 0.0
    return {
        "tolerance": tol,
        "psi_lipschitz_ratio": psi_ratio,
        "psi_ok": bool(psi_ratio <= 1.0 + tol),
        "phi_excess": phi_excess,
        "phi_ok": bool(phi_excess <= tol),
        "reproduction_error": reproduce,
        "representatives_exact": bool(np.all(spread[Z.reps] == 0.0)),
        "reproduce_ok": bool(reproduce <= tol),
        "ok": bool(psi_ratio <= 1.0 + tol and phi_excess <= tol and reproduce <= tol),
    }


@dataclass
class FourPointResult:
    defect: float
    witness: tuple[int, ...] | None
    sums: tuple[float, float, float] | None
    quadruples: int
    exhaustive: bool
    noise_floor: float

    def to_dict(self) -> dict:
        return {
            "defect": self.defect,
            "witness": list(self.witness) if self.witness else None,
            "sums": list(self.sums) if self.sums else None,
            "quadruples": self.quadruples,
            "exhaustive": self.exhaustive,
            "noise_floor": self.noise_floor,
        }


def _quad_defects(D: np.ndarray, q: np.ndarray):
    x, y, z, w = q.T
    s = np.stack([D[x, y] + D[z, w], D[x, z] + D[y, w], D[x, w] + D[y, z]], axis=1)
    s.sort(axis=1)
    return s[:, 2] - s[:, 1], s


def defect_of_matrix(D: np.ndarray, budget: int = 100_000, seed: int = 0) -> tuple[float, tuple | None, tuple | None, int, bool]:
    """Largest four-point defect of a distance matrix (exhaustive if ``C^4 <= budget``)."""
    C = len(D)
    if C < 4:
        return 0.0, None, None, 0, True
    exhaustive = C**4 <= budget
    if exhaustive:
        q = np.asarray(list(itertools.combinations(range(C), 4)), dtype=int)
    else:
        rng = np.random.default_rng(seed)
        head = np.asarray(list(itertools.combinations(range(min(C, 8)), 4)), dtype=int).reshape(-1, 4)
        drawn = rng.integers(0, C, size=(budget, 4))
        drawn = drawn[np.all(np.diff(np.sort(drawn, axis=1), axis=1) > 0, axis=1)]
        q = np.vstack([head, drawn])
    defects, sums = _quad_defects(D, q)
    i = int(np.argmax(defects))
    return float(defects[i]), tuple(int(v) for v in q[i]), tuple(float(v) for v in sums[i]), len(q), exhaustive


def _landmarks(Z: QuotientSpace, K: int) -> list[int]:
    chosen = [0]
    mind = Z.distances_from([0])[0]
    for _ in range(K - 1):
        nxt = int(np.argmax(mind))
        if not np.isfinite(mind[nxt]) or mind[nxt] <= 0:
            break
        chosen.append(nxt)
        mind = np.minimum(mind, Z.distances_from([nxt])[0])
    return chosen


def four_point_defect(Z: QuotientSpace, budget: int = 100_000, seed: int = 0, pool: int = 128) -> FourPointResult:
    """Max of ``(largest - middle)`` of the three pair sums over quadruples of classes.

    Exhaustive when ``C^4 <= budget``; otherwise quadruples are drawn from a
    pool of farthest-point landmarks plus seeded random classes.  Defects at
    the accumulated rounding level of shortest-path sums are reported as 0.
    """
    if budget < 1:
        raise ValueError("budget must be positive")
    C = Z.n_classes
    if C < 4:
        return FourPointResult(0.0, None, None, 0, True, 0.0)
    if C**4 <= budget:
        members = np.arange(C)
    else:
        k = min(C, pool)
        marks = _landmarks(Z, max(4, k // 2))
        rng = np.random.default_rng(seed)
        rest = np.setdiff1d(np.arange(C), marks)
        extra = rng.choice(rest, size=min(len(rest), k - len(marks)), replace=False)
        members = np.asarray(list(marks) + sorted(int(e) for e in extra), dtype=int)
    D = Z.distances_from(members)[:, members]
    defect, wit, sums, count, _ = defect_of_matrix(D, budget, seed)
    exhaustive = C**4 <= budget
    finite = D[np.isfinite(D)]
    floor = 4.0 * np.finfo(float).eps * C * (2.0 * float(finite.max()) if finite.size else 0.0)
    if defect <= floor:
        defect = 0.0
    witness = tuple(int(members[i]) for i in wit) if wit else None
    return FourPointResult(defect, witness, sums, count, exhaustive, floor)


def rectangle_loops(f: SampledMap, count: int = 32, seed: int = 0) -> list[np.ndarray]:
    """Closed grid paths: the boundary of the central square slice plus random sub-rectangles."""
    dom = f.domain
    if dom.d < 2:
        return []
    N = dom.N
    rng = np.random.default_rng(seed)
    mid = N // 2

    def boundary(ax0, ax1, lo0, hi0, lo1, hi1, base):
        path = []
        for i in range(lo0, hi0):
            path.append((i, lo1))
        for j in range(lo1, hi1):
            path.append((hi0, j))
        for i in range(hi0, lo0, -1):
            path.append((i, hi1))
        for j in range(hi1, lo1, -1):
            path.append((lo0, j))
        path.append((lo0, lo1))
        idx = np.tile(base, (len(path), 1))
        idx[:, ax0] = [p[0] for p in path]
        idx[:, ax1] = [p[1] for p in path]
        return dom.flat_index(idx)

    base = np.full(dom.d, mid)
    loops = [boundary(0, 1, 0, N - 1, 0, N - 1, base)]
    for _ in range(count):
        ax0, ax1 = sorted(rng.choice(dom.d, size=2, replace=False))
        lo0, hi0 = sorted(rng.choice(N, size=2, replace=False))
        lo1, hi1 = sorted(rng.choice(N, size=2, replace=False))
        b = rng.integers(0, N, size=dom.d)
        loops.append(boundary(ax0, ax1, lo0, hi0, lo1, hi1, b))
    return loops


@dataclass
class LoopAreaResult:
    area_max: float
    loop: int | None
    projection: tuple[int, int] | None
    loops_tested: int

    def to_dict(self) -> dict:
        return {
            "area_max": self.area_max,
            "loop": self.loop,
            "projection": list(self.projection) if self.projection else None,
            "loops_tested": self.loops_tested,
        }


def loop_area_test(
    f: SampledMap,
    Z: QuotientSpace,
    loops: Sequence[Sequence[int]] | None = None,
    projections: Sequence[tuple[int, int]] | None = None,
    budget: int = 32,
    seed: int = 0,
    landmarks: int = 4,
) -> LoopAreaResult:
    """Largest ``|A(pi o psi o gamma)|`` over grid loops ``gamma`` and projections
    ``pi = (d_Z(., p), d_Z(., q))`` to the plane."""
    loops = rectangle_loops(f, budget, seed) if loops is None else [np.asarray(l, dtype=int) for l in loops]
    for i, l in enumerate(loops):
        if len(l) < 2 or l[0] != l[-1]:
            raise ValueError(f"loop {i} is not closed")
    if projections is None:
        marks = _landmarks(Z, landmarks)
        projections = list(itertools.combinations(marks, 2))
    best = LoopAreaResult(0.0, None, None, len(loops))
    if not loops or not projections:
        return best
    needed = sorted({int(c) for pq in projections for c in pq})
    rows = dict(zip(needed, Z.distances_from(needed)))
    for p, q in projections:
        for i, l in enumerate(loops):
            cls = Z.psi[l]
            pts = np.stack([rows[p][cls], rows[q][cls]], axis=1)
            a = oriented_area(Curve(np.arange(len(pts), dtype=float), pts, closed=True))
            if abs(a) > abs(best.area_max):
                best = LoopAreaResult(a, i, (int(p), int(q)), len(loops))
    return LoopAreaResult(abs(best.area_max), best.loop, best.projection, len(loops))


@dataclass
class TreeCertificate:
    four_point: FourPointResult
    loop_area: LoopAreaResult
    defect_tol: float
    area_tol: float

    @property
    def four_point_defect(self) -> float:
        return self.four_point.defect

    @property
    def loop_area_max(self) -> float:
        return self.loop_area.area_max

    @property
    def verdict(self) -> str:
        if self.four_point.defect <= self.defect_tol and self.loop_area.area_max <= self.area_tol:
            return "tree-within-tol"
        return "not-tree"

    @property
    def witness(self) -> dict | None:
        if self.verdict == "tree-within-tol":
            return None
        if self.four_point.defect > self.defect_tol:
            return {"quadruple": list(self.four_point.witness), "sums": list(self.four_point.sums)}
        return {"loop": self.loop_area.loop, "projection": list(self.loop_area.projection)}

    def to_dict(self) -> dict:
        return {
            "verdict": self.verdict,
            "four_point_defect": self.four_point_defect,
            "loop_area_max": self.loop_area_max,
            "defect_tol": self.defect_tol,
            "area_tol": self.area_tol,
            "witness": self.witness,
            "four_point": self.four_point.to_dict(),
            "loop_area": self.loop_area.to_dict(),
        }


def tree_certificate(
    f: SampledMap,
    Z: QuotientSpace,
    budget: int = 100_000,
    loop_budget: int = 32,
    seed: int = 0,
    defect_tol: float | None = None,
    area_tol: float | None = None,
) -> TreeCertificate:
    L = max(f.lipschitz, 0.0)
    defect_tol = 8.0 * f.h * L if defect_tol is None else defect_tol
    area_tol = 8.0 * f.h * L * L if area_tol is None else area_tol
    fp = four_point_defect(Z, budget, seed)
    la = loop_area_test(f, Z, budget=loop_budget, seed=seed)
    return TreeCertificate(fp, la, defect_tol, area_tol)


def directional_agreement(f: SampledMap, Z: QuotientSpace, tol: float | None = None) -> dict:
    """Compare ``d_Z(psi(x+he), psi(x-he))`` with ``d_Y(f(x+he), f(x-he))`` at interior points."""
    dom = f.domain
    tol = 10.0 * f.h * f.lipschitz if tol is None else tol
    interior = np.flatnonzero(dom.interior_mask())
    idx = dom.index_array()[interior]
    limit = 2.0 * f.h * f.lipschitz * (1 + 1e-9) + 1e-300
    gaps = []
    for k in range(dom.d):
        plus = idx.copy()
        minus = idx.copy()
        plus[:, k] += 1
        minus[:, k] -= 1
        a = dom.flat_index(plus)
        b = dom.flat_index(minus)
        ca, cb = Z.psi[a], Z.psi[b]
        dz = np.empty(len(a))
        for start in range(0, len(a), _ROW_CHUNK):
            sl = slice(start, start + _ROW_CHUNK)
            uniq, inv = np.unique(ca[sl], return_inverse=True)
            rows = _rows(Z.graph, uniq, limit=limit)
            dz[sl] = rows[inv, cb[sl]]
        dy = np.asarray(f.target.distance(f.values[a], f.values[b]), dtype=float)
        gaps.append(np.abs(dz - dy) / (2 * f.h))
    gaps = np.stack(gaps, axis=1) if gaps else np.zeros((0, 0))
    worst = gaps.max(axis=1) if gaps.size else np.zeros(0)
    return {
        "tolerance": tol,
        "max_gap": float(worst.max()) if worst.size else 0.0,
        "fraction_within": float(np.mean(worst <= tol)) if worst.size else 1.0,
    }
