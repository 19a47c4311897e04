"""Numerical checks of area-type identities on sampled maps.

* ``stokes_check``: boundary oriented area vs. the integral of ``det`` of a
  piecewise-linear extension over a triangulated disk.
* ``area_formula_check``: ``int g J(md f)`` vs. the multiplicity integral
  over the image.
* ``coarea_check``: ``int |J_F|`` vs. ``int H^m(F^{-1}(y)) dy`` for scalar ``F``.
* ``length_preserving_check``: a post-map that preserves lengths of grid
  curves preserves directional metric derivatives and Jacobian integrals.

Domain integrals are midpoint sums over grid cells, with the cell-centre
derivative taken from the cell's corner values.
"""

from __future__ import annotations

import itertools
import math
from typing import Callable, NamedTuple

import numpy as np
import scipy.sparse as sp
from scipy.sparse.csgraph import connected_components
from scipy.spatial import cKDTree
from skimage import measure

from . import heisenberg
from .curves import Curve, length, oriented_area, speed  # noqa: F401  (re-exported)
from .sampled_map import MetricTarget, SampledMap, cell_gradient_field, compose, seminorm_rows
from .seminorm import Seminorm, ball_volume_exact, jacobian, unit_ball_volume

__all__ = [
    "Curve",
    "length",
    "speed",
    "oriented_area",
    "AreaCheck",
    "disk_mesh",
    "stokes_check",
    "cell_jacobians",
    "area_formula_check",
    "coarea_check",
    "length_preserving_check",
]


class AreaCheck(NamedTuple):
    lhs: float
    rhs: float
    gap: float


def disk_mesh(angles: np.ndarray, rings: int) -> tuple[np.ndarray, np.ndarray]:
    """Polar triangulation of the unit disk with boundary vertices at ``angles``.

    Returns vertices ``(V, 2)`` and counter-clockwise triangles ``(T, 3)``.
    """
    k = len(angles)
    radii = np.arange(1, rings + 1) / rings
    ring_pts = radii[:, None, None] * np.stack([np.cos(angles), np.sin(angles)], axis=1)[None]
    verts = np.vstack([np.zeros((1, 2)), ring_pts.reshape(-1, 2)])

    def vid(ring, j):
        return 1 + ring * k + (j % k)

    tris = [(0, vid(0, j), vid(0, j + 1)) for j in range(k)]
    for r in range(rings - 1):
        for j in range(k):
            a, b = vid(r, j), vid(r, j + 1)
            c, e = vid(r + 1, j), vid(r + 1, j + 1)
            tris.append((a, c, e))
            tris.append((a, e, b))
    return verts, np.asarray(tris, dtype=int)


def stokes_check(
    gamma: Callable[[np.ndarray], np.ndarray],
    boundary: Curve,
    rings: int = 64,
    tol: float = 1e-9,
) -> AreaCheck:
    """``A(boundary)`` vs. ``sum`` of signed image areas of a triangulated disk.

    ``boundary.params`` are the angles of the boundary vertices in
    ``[0, 2 pi]``; ``gamma`` maps ``(k, 2)`` disk points to the plane and
    must agree with ``boundary`` on the unit circle.
    """
    if not boundary.closed:
        raise ValueError("boundary must be a closed curve")
    angles = boundary.params[:-1]
    verts, tris = disk_mesh(angles, rings)
    img = np.asarray(gamma(verts), dtype=float)
    outer = img[-len(angles) :]
    mismatch = float(np.max(np.linalg.norm(outer - boundary.points[:-1], axis=1)))
    if mismatch > tol * max(1.0, float(np.max(np.abs(boundary.points)))):
        raise ValueError(f"extension disagrees with the boundary curve by {mismatch:.3g}")
    a, b, c = img[tris[:, 0]], img[tris[:, 1]], img[tris[:, 2]]
    cross = (b[:, 0] - a[:, 0]) * (c[:, 1] - a[:, 1]) - (b[:, 1] - a[:, 1]) * (c[:, 0] - a[:, 0])
    interior = 0.5 * math.fsum(cross)
    bnd = oriented_area(boundary)
    return AreaCheck(bnd, interior, abs(bnd - interior))


def cell_jacobians(f: SampledMap, samples: int = 20_000, seed: int = 0) -> np.ndarray:
    """``J_d(md(f, c))`` at every cell centre ``c``.

    Euclidean targets use ``sqrt(det(Df^T Df))``; other targets go through
    the polyhedral seminorm of the metric derivative.
    """
    grads = cell_gradient_field(f.grid_values(), f.h)
    d = f.domain.d
    target = f.target
    if target.kind == "heisenberg":
        grads = grads[:, :-1, :]
        target = MetricTarget.euclidean()
    if target.kind == "embedded" and target.norm == "euclidean":
        gram = np.einsum("pmi,pmj->pij", grads, grads)
        return np.sqrt(np.clip(np.linalg.det(gram), 0.0, None))
    rows = seminorm_rows(grads, target)
    out = np.zeros(len(rows))
    omega = unit_ball_volume(d)
    for i, r in enumerate(rows):
        s = Seminorm(r, d)
        if s.rank() < d:
            continue
        if d == 1:
            out[i] = float(np.max(np.abs(r)))
        elif d <= 3:
            out[i] = omega / ball_volume_exact(s)
        else:
            out[i] = jacobian(s, samples, seed + i)
    return out


def _cell_centres(f: SampledMap) -> np.ndarray:
    d, N = f.domain.d, f.domain.N
    idx = np.indices((N - 1,) * d).reshape(d, -1).T
    return (idx + 0.5) * f.h


def _cell_mask(f: SampledMap, E) -> np.ndarray:
    """Cells whose corners all lie in ``E``."""
    d = f.domain.d
    if E is None:
        return np.ones((f.domain.N - 1) ** d, dtype=bool)
    E = np.asarray(E, dtype=bool).reshape(f.domain.shape)
    out = E
    for ax in range(d):
        lo = [slice(None)] * d
        hi = [slice(None)] * d
        lo[ax] = slice(0, -1)
        hi[ax] = slice(1, None)
        out = out[tuple(lo)] & out[tuple(hi)]
    return out.ravel()


def _components(ids: np.ndarray, shape: tuple[int, ...]) -> list[np.ndarray]:
    """Connected components of a set of grid points under axis adjacency."""
    ids = np.sort(ids)
    if len(ids) == 0:
        return []
    if len(shape) == 1:
        breaks = np.flatnonzero(np.diff(ids) > 1)
        return np.split(ids, breaks + 1)
    multi = np.stack(np.unravel_index(ids, shape), axis=1)
    us, vs = [], []
    for k in range(len(shape)):
        nb = multi.copy()
        nb[:, k] += 1
        ok = nb[:, k] < shape[k]
        nb_flat = np.ravel_multi_index(tuple(nb[ok].T), shape)
        pos = np.searchsorted(ids, nb_flat)
        pos = np.minimum(pos, len(ids) - 1)
        hit = ids[pos] == nb_flat
        src = np.flatnonzero(ok)[hit]
        us.append(src)
        vs.append(pos[hit])
    u = np.concatenate(us)
    v = np.concatenate(vs)
    g = sp.csr_matrix((np.ones(len(u)), (u, v)), shape=(len(ids), len(ids)))
    ncomp, labels = connected_components(g, directed=False)
    return [ids[labels == c] for c in range(ncomp)]


def _kuhn_simplices(shape: tuple[int, ...]) -> np.ndarray:
    """Vertex ids ``(S, d+1)`` of the Kuhn triangulation of the grid cells."""
    d = len(shape)
    base = np.indices(tuple(n - 1 for n in shape)).reshape(d, -1).T
    out = []
    for perm in itertools.permutations(range(d)):
        corner = base.copy()
        verts = [np.ravel_multi_index(tuple(corner.T), shape)]
        for ax in perm:
            corner = corner.copy()
            corner[:, ax] += 1
            verts.append(np.ravel_multi_index(tuple(corner.T), shape))
        out.append(np.stack(verts, axis=1))
    return np.concatenate(out)


def _in_pl_image(f: SampledMap, ys: np.ndarray, chunk: int = 4096) -> np.ndarray:
    """Whether each ``y`` lies in the image of the piecewise-linear interpolant of ``f``."""
    d = f.domain.d
    simp = _kuhn_simplices(f.domain.shape)
    V = f.values[simp]  # (S, d+1, d)
    T = np.transpose(V[:, 1:, :] - V[:, :1, :], (0, 2, 1))  # columns are edge vectors
    det = np.linalg.det(T)
    scale = np.max(np.abs(V[:, 1:, :] - V[:, :1, :]), axis=(1, 2)) ** d
    ok = np.abs(det) > 1e-12 * np.maximum(scale, 1e-300)
    V, T = V[ok], T[ok]
    if len(V) == 0:
        return np.zeros(len(ys), dtype=bool)
    Tinv = np.linalg.inv(T)
    centroid = V.mean(axis=1)
    reach = float(np.max(np.linalg.norm(V - centroid[:, None, :], axis=2)))
    tree = cKDTree(centroid)
    inside = np.zeros(len(ys), dtype=bool)
    for start in range(0, len(ys), chunk):
        block = ys[start : start + chunk]
        cands = tree.query_ball_point(block, reach * (1 + 1e-9))
        for i, c in enumerate(cands):
            if not c:
                continue
            c = np.asarray(c)
            lam = np.einsum("sij,sj->si", Tinv[c], block[i] - V[c, 0])
            bary = np.concatenate([1.0 - lam.sum(axis=1, keepdims=True), lam], axis=1)
            inside[start + i] = bool(np.any(np.all(bary >= -1e-12, axis=1)))
    return inside


def area_formula_check(
    f: SampledMap,
    g: Callable[[np.ndarray], np.ndarray] | None = None,
    rho: float | None = None,
    spacing: float | None = None,
) -> AreaCheck:
    """``int g J(md f)`` against ``int_Y sum_{x in f^{-1}(y)} g(x) dy``.

    Top-dimensional case only: the target is R^d.  Preimages of an image
    point ``y`` are the connected grid clusters of ``{x : |f(x) - y| <= rho}``;
    ``rho`` defaults to ``3 h L`` and may not drop below ``h L``.  Image points
    are the ``y`` on a regular grid that lie in the image of the piecewise-linear
    interpolant of ``f`` on the Kuhn triangulation of the cells.
    """
    d = f.domain.d
    if f.target.kind != "embedded" or f.M != d:
        raise ValueError("area_formula_check needs an embedded target of the domain dimension")
    L, h = f.lipschitz, f.h
    rho = 3.0 * h * L if rho is None else rho
    if L > 0 and rho < h * L:
        raise ValueError(f"rho = {rho:.3g} is below the image resolution h L = {h * L:.3g}")
    if g is None:
        g = lambda p: np.ones(len(p))  # noqa: E731
    pts = f.domain.points()
    centres = _cell_centres(f)
    lhs = math.fsum(np.asarray(g(centres)) * cell_jacobians(f) * h**d)
    if L == 0:
        return AreaCheck(lhs, 0.0, abs(lhs))

    spacing = rho / 3.0 if spacing is None else spacing
    gv = np.asarray(g(pts), dtype=float)
    img = f.values
    lo, hi = img.min(axis=0), img.max(axis=0)
    counts = np.maximum(1, np.ceil((hi - lo) / spacing).astype(int))
    ys = np.indices(tuple(counts)).reshape(d, -1).T * spacing + lo + spacing / 2
    tree = cKDTree(img)
    ys = ys[_in_pl_image(f, ys)]
    cand = tree.query_ball_point(ys, rho)
    terms = []
    for y, ids in zip(ys, cand):
        comps = _components(np.asarray(ids, dtype=int), f.domain.shape)
        total = 0.0
        for comp in comps:
            j = comp[np.argmin(np.linalg.norm(img[comp] - y, axis=1))]
            total += gv[j]
        terms.append(total)
    rhs = math.fsum(terms) * spacing**d
    return AreaCheck(lhs, rhs, abs(lhs - rhs))


def _fiber_measure(Fgrid: np.ndarray, y: float, h: float, mask: np.ndarray | None) -> float:
    m = Fgrid.ndim - 1
    if m == 0:
        a, b = Fgrid[:-1] - y, Fgrid[1:] - y
        cross = (a * b < 0) | ((a == 0) & (b != 0))
        if mask is not None:
            cross &= mask[:-1] & mask[1:]
        return float(np.count_nonzero(cross))
    if m == 1:
        total = 0.0
        for c in measure.find_contours(Fgrid, y, mask=mask):
            total += float(np.sum(np.linalg.norm(np.diff(c, axis=0), axis=1)))
        return total * h
    if m == 2:
        if not (Fgrid.min() < y < Fgrid.max()):
            return 0.0
        verts, faces, _, _ = measure.marching_cubes(Fgrid, level=y, spacing=(h, h, h), mask=mask)
        return float(measure.mesh_surface_area(verts, faces))
    raise ValueError("fiber measures are only implemented for m <= 2")


def coarea_check(F: SampledMap, E=None, levels: int | None = None) -> AreaCheck:
    """``int_E |J_F|`` against ``int H^m(F^{-1}(y) cap E) dy`` for scalar ``F``.

    Fibers are level sets extracted by linear interpolation on the grid
    (crossing counts for ``m = 0``, marching squares for ``m = 1``,
    marching cubes for ``m = 2``).
    """
    if F.target.kind != "embedded" or F.M != 1:
        raise ValueError("coarea_check supports scalar targets (n = 1) only")
    d = F.domain.d
    if d > 3:
        raise ValueError("coarea_check supports m = d - 1 <= 2")
    h = F.h
    grads = cell_gradient_field(F.grid_values(), h)[:, 0, :]
    cells = _cell_mask(F, E)
    lhs = math.fsum(np.linalg.norm(grads, axis=1)[cells] * h**d)
    Fgrid = F.grid_values()[..., 0]
    lo, hi = float(Fgrid.min()), float(Fgrid.max())
    if hi <= lo:
        return AreaCheck(lhs, 0.0, abs(lhs))
    levels = 4 * (F.domain.N - 1) if levels is None else levels
    dy = (hi - lo) / levels
    mask = None if E is None else np.asarray(E, dtype=bool).reshape(F.domain.shape)
    ys = lo + (np.arange(levels) + 0.5) * dy
    rhs = math.fsum(_fiber_measure(Fgrid, y, h, mask) for y in ys) * dy
    return AreaCheck(lhs, rhs, abs(lhs - rhs))


def _line_curves(f: SampledMap, axis: int):
    grid = f.grid_values()
    moved = np.moveaxis(grid, axis, -2)
    return moved.reshape(-1, f.domain.N, f.M)


def _line_lengths(values_lines: np.ndarray, target: MetricTarget, params: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Lengths of grid-line curves and, for Heisenberg targets, their horizontality defects."""
    seg = target.distance(values_lines[:, :-1], values_lines[:, 1:])
    lengths = np.sum(seg, axis=1)
    if target.kind != "heisenberg":
        return lengths, np.zeros(len(lengths))
    defects = np.array([heisenberg.horizontality_defect(Curve(params, line)) for line in values_lines])
    return lengths, defects


def length_preserving_check(
    post: Callable[[np.ndarray], np.ndarray],
    f: SampledMap,
    post_target: MetricTarget | None = None,
    rel_tol: float | None = None,
    md_tol: float | None = None,
) -> dict:
    """Check that ``post`` preserves lengths of axis curves of ``f`` and, if so,
    that directional metric derivatives and Jacobian integrals agree."""
    post_target = MetricTarget.euclidean() if post_target is None else post_target
    g = compose(post, f, post_target)
    h, L = f.h, f.lipschitz
    rel_tol = 10.0 * h if rel_tol is None else rel_tol
    md_tol = 10.0 * h * L if md_tol is None else md_tol
    params = np.linspace(0.0, 1.0, f.domain.N)

    ratios = []
    horizontal = True
    for k in range(f.domain.d):
        lx, defects = _line_lengths(_line_curves(f, k), f.target, params)
        ly, _ = _line_lengths(_line_curves(g, k), post_target, params)
        if f.target.kind == "heisenberg" and np.any(defects > 1e-6):
            horizontal = False
        ok = lx > 0
        ratios.append(np.where(ok, ly / np.where(ok, lx, 1.0), np.where(ly > 0, np.inf, 1.0)))
    ratios = np.concatenate(ratios)
    worst = float(np.max(np.abs(ratios - 1.0)))
    hypothesis = bool(worst <= rel_tol and horizontal)
    report = {
        "hypothesis_holds": hypothesis,
        "hypothesis_fails": not hypothesis,
        "length_ratio_min": float(ratios.min()),
        "length_ratio_max": float(ratios.max()),
        "horizontal": horizontal,
        "rel_tol": rel_tol,
        "md_tol": md_tol,
        "conclusion_asserted": False,
    }
    if not hypothesis:
        return report

    dom = f.domain
    idx = dom.index_array()[dom.interior_mask()]
    gaps = []
    for k in range(dom.d):
        plus, minus = idx.copy(), idx.copy()
        plus[:, k] += 1
        minus[:, k] -= 1
        a, b = dom.flat_index(plus), dom.flat_index(minus)
        mx = f.target.distance(f.values[a], f.values[b]) / (2 * h)
        my = post_target.distance(g.values[a], g.values[b]) / (2 * h)
        gaps.append(np.abs(mx - my))
    worst_gap = np.max(np.stack(gaps, axis=1), axis=1)
    frac = float(np.mean(worst_gap <= md_tol)) if worst_gap.size else 1.0
    jf = math.fsum(cell_jacobians(f) * h**dom.d)
    jg = math.fsum(cell_jacobians(g) * h**dom.d)
    report.update(
        conclusion_asserted=True,
        md_fraction_within=frac,
        md_max_gap=float(worst_gap.max()) if worst_gap.size else 0.0,
        jacobian_integral_f=jf,
        jacobian_integral_post=jg,
        jacobian_integral_gap=abs(jf - jg),
        conclusion_holds=bool(frac >= 0.99 and abs(jf - jg) <= rel_tol * max(1.0, jf)),
    )
    return report
