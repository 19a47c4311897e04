"""Lipschitz maps ``[0,1]^d -> X`` sampled on regular grids.

Grid points are stored in row-major (C) order of their multi-indices, so
the last axis varies fastest.  Target points are rows of ``values``.
"""

from __future__ import annotations

import json
import struct
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Sequence

import numpy as np

from . import heisenberg
from .seminorm import Seminorm, ball_volume_exact, jacobian, unit_ball_volume

__all__ = [
    "GridDomain",
    "MetricTarget",
    "SampledMap",
    "MetricDerivativeField",
    "from_function",
    "from_values",
    "compose",
    "componentwise_gradient",
    "gradient_field",
    "cell_gradient_field",
    "farthest_point_sampling",
    "kuratowski_embed",
    "metric_derivative",
    "seminorm_rows",
    "rank_field",
    "write_map",
    "read_map",
    "read_landmarks",
    "write_landmarks",
]

FORMAT_VERSION = 1
_BINARY_MAGIC = b"LIPGRID\x01"
_TEXT_TAG = "# lipfactor-grid "


@dataclass(frozen=True)
class GridDomain:
    d: int
    N: int

    def __post_init__(self):
        if self.d < 1:
            raise ValueError("d must be positive")
        if self.N < 3:
            raise ValueError("N must be at least 3")

    @property
    def h(self) -> float:
        return 1.0 / (self.N - 1)

    @property
    def shape(self) -> tuple[int, ...]:
        return (self.N,) * self.d

    @property
    def size(self) -> int:
        return self.N**self.d

    def multi_index(self, flat) -> np.ndarray:
        return np.stack(np.unravel_index(np.asarray(flat), self.shape), axis=-1)

    def flat_index(self, idx) -> int | np.ndarray:
        idx = np.asarray(idx)
        return np.ravel_multi_index(tuple(np.moveaxis(idx, -1, 0)), self.shape)

    def index_array(self) -> np.ndarray:
        """``(N^d, d)`` integer multi-indices in storage order."""
        return np.indices(self.shape).reshape(self.d, -1).T

    def points(self) -> np.ndarray:
        return self.index_array() * self.h

    def interior_mask(self) -> np.ndarray:
        idx = self.index_array()
        return np.all((idx > 0) & (idx < self.N - 1), axis=1)

    def is_interior(self, idx) -> bool:
        idx = np.asarray(idx)
        return bool(np.all((idx > 0) & (idx < self.N - 1)))

    def edges(self) -> tuple[np.ndarray, np.ndarray]:
        """Axis-adjacent pairs ``(u, v)`` with ``v = u + e_k``."""
        ids = np.arange(self.size).reshape(self.shape)
        us, vs = [], []
        for k in range(self.d):
            lo = [slice(None)] * self.d
            hi = [slice(None)] * self.d
            lo[k] = slice(0, -1)
            hi[k] = slice(1, None)
            us.append(ids[tuple(lo)].ravel())
            vs.append(ids[tuple(hi)].ravel())
        return np.concatenate(us), np.concatenate(vs)


def _embedded_distance(norm: str):
    if norm == "euclidean":
        return lambda a, b: np.linalg.norm(np.asarray(a) - np.asarray(b), axis=-1)
    if norm == "sup":
        return lambda a, b: np.max(np.abs(np.asarray(a) - np.asarray(b)), axis=-1)
    raise ValueError(f"unknown norm {norm!r}")


@dataclass(frozen=True)
class MetricTarget:
    """Target metric space.

    ``embedded`` targets are R^M with the euclidean or sup norm;
    ``oracle`` targets carry a vectorized distance callback on rows of
    points; ``heisenberg`` targets are H^n with lengths measured through
    the projection (valid for horizontal data).
    """

    kind: str = "embedded"
    norm: str = "euclidean"
    oracle: Callable[[np.ndarray, np.ndarray], np.ndarray] | None = None
    n: int | None = None

    def __post_init__(self):
        if self.kind not in ("embedded", "oracle", "heisenberg"):
            raise ValueError(f"unknown target kind {self.kind!r}")
        if self.kind == "embedded":
            _embedded_distance(self.norm)
        if self.kind == "oracle" and self.oracle is None:
            raise ValueError("oracle targets need a distance callback")

    @classmethod
    def euclidean(cls) -> MetricTarget:
        return cls("embedded", "euclidean")

    @classmethod
    def sup(cls) -> MetricTarget:
        return cls("embedded", "sup")

    def distance(self, a, b) -> np.ndarray:
        if self.kind == "embedded":
            return _embedded_distance(self.norm)(a, b)
        if self.kind == "heisenberg":
            return heisenberg.projected_distance(a, b)
        a = np.asarray(a, dtype=float)
        b = np.asarray(b, dtype=float)
        a2, b2 = np.broadcast_arrays(np.atleast_2d(a), np.atleast_2d(b))
        out = np.asarray(self.oracle(a2, b2), dtype=float).reshape(a2.shape[0])
        return out if a.ndim > 1 or b.ndim > 1 else out[0]

    def describe(self) -> dict:
        out = {"kind": self.kind}
        if self.kind == "embedded":
            out["norm"] = self.norm
        if self.kind == "heisenberg":
            out["n"] = self.n
        return out


def check_triangle(target: MetricTarget, values: np.ndarray, trials: int = 1000, seed: int = 0) -> None:
    """Spot-check symmetry, positivity and the triangle inequality."""
    rng = np.random.default_rng(seed)
    i, j, k = rng.integers(0, len(values), size=(3, trials))
    a, b, c = values[i], values[j], values[k]
    dab, dba = target.distance(a, b), target.distance(b, a)
    dbc, dac = target.distance(b, c), target.distance(a, c)
    scale = max(1.0, float(np.max(np.abs(dac))))
    slack = 1e-9 * scale
    if np.any(dab < 0) or np.any(np.abs(dab - dba) > slack):
        raise ValueError("oracle distance is not symmetric and nonnegative")
    if np.any(np.abs(target.distance(a, a)) > slack):
        raise ValueError("oracle distance does not vanish on the diagonal")
    bad = dac > dab + dbc + slack
    if np.any(bad):
        w = int(np.flatnonzero(bad)[0])
        raise ValueError(f"triangle inequality fails on sample triple {(int(i[w]), int(j[w]), int(k[w]))}")


@dataclass(frozen=True)
class SampledMap:
    domain: GridDomain
    target: MetricTarget
    values: np.ndarray
    lipschitz: float
    meta: dict = field(default_factory=dict, compare=False)

    @property
    def h(self) -> float:
        return self.domain.h

    @property
    def M(self) -> int:
        return self.values.shape[1]

    def grid_values(self) -> np.ndarray:
        return self.values.reshape(self.domain.shape + (self.M,))

    def distance(self, u, v) -> np.ndarray:
        """Target distance between the images of grid points ``u`` and ``v`` (flat ids)."""
        return self.target.distance(self.values[u], self.values[v])


def _lipschitz(domain: GridDomain, target: MetricTarget, values: np.ndarray) -> float:
    u, v = domain.edges()
    return float(np.max(target.distance(values[u], values[v]))) / domain.h


def from_values(domain: GridDomain, values, target: MetricTarget | None = None, meta: dict | None = None) -> SampledMap:
    target = MetricTarget.euclidean() if target is None else target
    values = np.asarray(values, dtype=float)
    if values.ndim == 1:
        values = values[:, None]
    if values.shape[0] != domain.size:
        raise ValueError(f"expected {domain.size} values, got {values.shape[0]}")
    if not np.all(np.isfinite(values)):
        raise ValueError("map values must be finite")
    if target.kind == "heisenberg" and values.shape[1] % 2 != 1:
        raise ValueError("Heisenberg values need 2n+1 coordinates")
    if target.kind == "oracle":
        check_triangle(target, values)
    values = values.copy()
    values.setflags(write=False)
    L = _lipschitz(domain, target, values)
    return SampledMap(domain, target, values, L, dict(meta or {}))


def from_function(
    d: int,
    N: int,
    fn: Callable[[np.ndarray], np.ndarray],
    target: MetricTarget | str | None = None,
    vectorized: bool = True,
) -> SampledMap:
    """Sample ``fn`` on the grid ``{0, h, ..., 1}^d``.

    With ``vectorized=True`` (default) ``fn`` receives all grid points as
    an ``(N^d, d)`` array and returns ``(N^d,)`` or ``(N^d, M)``.
    """
    if isinstance(target, str):
        target = MetricTarget("embedded", target)
    domain = GridDomain(d, N)
    pts = domain.points()
    if vectorized:
        values = np.asarray(fn(pts), dtype=float)
    else:
        values = np.asarray([np.atleast_1d(fn(p)) for p in pts], dtype=float)
    if values.ndim == 1:
        values = values[:, None]
    return from_values(domain, values, target)


def compose(post: Callable[[np.ndarray], np.ndarray], f: SampledMap, target: MetricTarget | None = None) -> SampledMap:
    """The sampled map ``post o f`` (``post`` acts on rows of target points)."""
    return from_values(f.domain, post(f.values), target)


def _as_multi_index(f: SampledMap, x) -> np.ndarray:
    x = np.asarray(x)
    if x.ndim == 0:
        return f.domain.multi_index(int(x))
    if x.shape != (f.domain.d,):
        raise ValueError(f"grid point must be a flat id or a {f.domain.d}-index")
    return x.astype(int)


def componentwise_gradient(f: SampledMap, x) -> np.ndarray:
    """Central-difference Jacobian ``(M, d)`` of embedded data at an interior grid point."""
    if f.target.kind == "oracle":
        raise ValueError("componentwise derivatives need coordinates; use kuratowski_embed first")
    idx = _as_multi_index(f, x)
    if not f.domain.is_interior(idx):
        raise ValueError(f"grid point {tuple(idx)} is on the boundary")
    grid = f.grid_values()
    out = np.empty((f.M, f.domain.d))
    for k in range(f.domain.d):
        hi, lo = idx.copy(), idx.copy()
        hi[k] += 1
        lo[k] -= 1
        out[:, k] = (grid[tuple(hi)] - grid[tuple(lo)]) / (2 * f.h)
    return out


def gradient_field(values_grid: np.ndarray, h: float) -> np.ndarray:
    """Central differences at all interior points: shape ``(P_int, M, d)``."""
    d = values_grid.ndim - 1
    inner = tuple(slice(1, -1) for _ in range(d))
    grads = []
    for k in range(d):
        hi = list(inner)
        lo = list(inner)
        hi[k] = slice(2, None)
        lo[k] = slice(0, -2)
        grads.append((values_grid[tuple(hi)] - values_grid[tuple(lo)]) / (2 * h))
    g = np.stack(grads, axis=-1)
    return g.reshape(-1, values_grid.shape[-1], d)


def cell_gradient_field(values_grid: np.ndarray, h: float) -> np.ndarray:
    """Gradients at cell centres (average of the 2^(d-1) parallel edge differences).

    Shape ``((N-1)^d, M, d)``; second-order accurate at the centres.
    """
    d = values_grid.ndim - 1
    grads = []
    for k in range(d):
        hi = [slice(None)] * d
        lo = [slice(None)] * d
        hi[k] = slice(1, None)
        lo[k] = slice(0, -1)
        diff = (values_grid[tuple(hi)] - values_grid[tuple(lo)]) / h
        for j in range(d):
            if j != k:
                a = [slice(None)] * d
                b = [slice(None)] * d
                a[j] = slice(1, None)
                b[j] = slice(0, -1)
                diff = 0.5 * (diff[tuple(a)] + diff[tuple(b)])
        grads.append(diff)
    g = np.stack(grads, axis=-1)
    return g.reshape(-1, values_grid.shape[-1], d)


def _dual_directions(M: int, count: int = 64) -> np.ndarray:
    """Unit functionals whose sup approximates the Euclidean norm on R^M."""
    if M == 1:
        return np.ones((1, 1))
    if M == 2:
        ang = np.pi * np.arange(count) / count
        return np.stack([np.cos(ang), np.sin(ang)], axis=1)
    rng = np.random.default_rng(12345)
    u = rng.standard_normal((count * M, M))
    u /= np.linalg.norm(u, axis=1, keepdims=True)
    return np.vstack([np.eye(M), u])


def seminorm_rows(grad: np.ndarray, target: MetricTarget, directions: np.ndarray | None = None) -> np.ndarray:
    """Seminorm rows for a stack of Jacobians ``(P, M, d)``.

    Sup targets use the Jacobian rows directly.  Euclidean targets use
    ``u . Df`` over a fixed set of unit functionals ``u`` together with the
    left singular vectors and the normalized images of the axis vectors,
    so axis and singular directions are evaluated exactly.
    """
    if target.kind == "oracle":
        raise ValueError("oracle targets need kuratowski_embed before differentiation")
    if target.kind == "heisenberg":
        grad = grad[:, :-1, :]
    if target.kind == "embedded" and target.norm == "sup":
        return grad
    P, M, d = grad.shape
    if M == 1:
        return grad
    u = _dual_directions(M) if directions is None else np.asarray(directions, dtype=float)
    fixed = np.einsum("km,pmd->pkd", u, grad)
    left, _, _ = np.linalg.svd(grad, full_matrices=False)
    sing = np.einsum("pmk,pmd->pkd", left, grad)
    cols = np.swapaxes(grad, 1, 2)
    norms = np.linalg.norm(cols, axis=2, keepdims=True)
    unit = np.divide(cols, norms, out=np.zeros_like(cols), where=norms > 0)
    axis = np.einsum("pkm,pmd->pkd", unit, grad)
    return np.concatenate([fixed, sing, axis], axis=1)


def metric_derivative(f: SampledMap, x, rank_tol: float | None = None) -> Seminorm:
    """Finite-difference metric derivative at an interior grid point."""
    grad = componentwise_gradient(f, x)
    rows = seminorm_rows(grad[None], f.target)[0]
    return Seminorm(rows, f.domain.d, rank_tol)


def farthest_point_sampling(f: SampledMap, K: int, start: int = 0) -> np.ndarray:
    """Greedy farthest-point landmarks among grid points (flat ids), in selection order."""
    K = min(K, f.domain.size)
    chosen = [start]
    mind = np.asarray(f.target.distance(f.values, f.values[start][None]), dtype=float)
    for _ in range(K - 1):
        nxt = int(np.argmax(mind))
        if mind[nxt] <= 0:
            break
        chosen.append(nxt)
        mind = np.minimum(mind, f.target.distance(f.values, f.values[nxt][None]))
    return np.asarray(chosen, dtype=int)


def kuratowski_embed(f: SampledMap, landmarks: Sequence[int] | None = None, K: int = 64) -> SampledMap:
    """Embed into (R^K, sup) by ``x -> (d(f(x), f(p_j)))_j``.

    Each coordinate is 1-Lipschitz, so sup distances never exceed the
    original ones; with every grid point as a landmark the embedding is
    isometric on the sample.
    """
    if landmarks is None:
        landmarks = farthest_point_sampling(f, K)
    landmarks = np.asarray(landmarks, dtype=int)
    if landmarks.size == 0:
        raise ValueError("need at least one landmark")
    cols = [f.target.distance(f.values, f.values[p][None]) for p in landmarks]
    values = np.stack(cols, axis=1)
    meta = {"landmarks": landmarks.tolist(), "source_target": f.target.describe()}
    return from_values(f.domain, values, MetricTarget.sup(), meta)


@dataclass(frozen=True)
class MetricDerivativeField:
    """Per-interior-point metric derivatives of a sampled map."""

    points: np.ndarray
    rows: np.ndarray
    singular_values: np.ndarray
    ranks: np.ndarray
    jacobians: np.ndarray
    tau: float
    lipschitz: float
    h: float
    lipschitz_slack: float

    @property
    def strata(self) -> dict[int, np.ndarray]:
        return {int(k): self.points[self.ranks == k] for k in np.unique(self.ranks)}

    def fraction_by_rank(self) -> dict[int, float]:
        total = len(self.ranks)
        if total == 0:
            return {}
        ks, counts = np.unique(self.ranks, return_counts=True)
        return {int(k): float(c / total) for k, c in zip(ks, counts)}

    def seminorm(self, i: int) -> Seminorm:
        return Seminorm(self.rows[i], self.rows.shape[2], self.tau)

    def summary(self) -> dict:
        return {
            "tau": self.tau,
            "lipschitz": self.lipschitz,
            "h": self.h,
            "lipschitz_slack_c": self.lipschitz_slack,
            "interior_points": int(len(self.ranks)),
            "fraction_by_rank": {str(k): v for k, v in self.fraction_by_rank().items()},
        }


def _field_jacobians(rows: np.ndarray, ranks: np.ndarray, d: int, samples: int, seed: int) -> np.ndarray:
    jac = np.zeros(len(ranks))
    full = np.flatnonzero(ranks == d)
    if d == 1:
        jac[full] = np.max(np.abs(rows[full, :, 0]), axis=1)
        return jac
    omega = unit_ball_volume(d)
    for i in full:
        s = Seminorm(rows[i], d, 0.0)
        if d <= 3:
            jac[i] = omega / ball_volume_exact(s)
        else:
            jac[i] = jacobian(s, samples, seed + int(i))
    return jac


def rank_field(
    f: SampledMap,
    tau: float | None = None,
    jacobian_samples: int = 20_000,
    seed: int = 0,
    with_jacobians: bool = True,
) -> MetricDerivativeField:
    """Metric derivative, numerical rank and Jacobian at every interior point.

    ``tau`` defaults to ``10 h L``; singular values above it count toward the rank.
    """
    if tau is None:
        tau = 10.0 * f.h * f.lipschitz
    grads = gradient_field(f.grid_values(), f.h)
    rows = seminorm_rows(grads, f.target)
    sv = np.linalg.svd(rows, compute_uv=False)
    ranks = np.sum(sv > tau, axis=1)
    d = f.domain.d
    if with_jacobians:
        jac = _field_jacobians(rows, ranks, d, jacobian_samples, seed)
    else:
        jac = np.full(len(ranks), np.nan)
    axis_evals = np.max(np.abs(rows), axis=1)
    L = f.lipschitz
    slack = 0.0
    if L > 0 and axis_evals.size:
        slack = max(0.0, float(np.max(axis_evals)) / L - 1.0) / f.h
    points = np.flatnonzero(f.domain.interior_mask())
    return MetricDerivativeField(points, rows, sv, ranks, jac, float(tau), L, f.h, slack)


# -- file formats -----------------------------------------------------------


def _header(f: SampledMap) -> dict:
    if f.target.kind == "oracle":
        raise ValueError("oracle targets carry a callback and cannot be serialized")
    head = {"version": FORMAT_VERSION, "d": f.domain.d, "N": f.domain.N, "kind": f.target.kind}
    if f.target.kind == "embedded":
        head.update(norm=f.target.norm, M=f.M)
    else:
        head["n"] = (f.M - 1) // 2
    return head


def _target_from_header(head: dict) -> tuple[MetricTarget, int]:
    if head.get("version") != FORMAT_VERSION:
        raise ValueError(f"unsupported grid file version {head.get('version')!r}")
    if head["kind"] == "embedded":
        return MetricTarget("embedded", head.get("norm", "euclidean")), int(head["M"])
    if head["kind"] == "heisenberg":
        n = int(head["n"])
        return MetricTarget("heisenberg", n=n), 2 * n + 1
    raise ValueError(f"cannot load target kind {head['kind']!r} from file")


def write_map(f: SampledMap, path, binary: bool = False) -> None:
    """Write the header and ``N^d`` records in row-major grid order."""
    head = _header(f)
    path = Path(path)
    if binary:
        blob = json.dumps(head, sort_keys=True).encode()
        with path.open("wb") as fh:
            fh.write(_BINARY_MAGIC)
            fh.write(struct.pack("<I", len(blob)))
            fh.write(blob)
            fh.write(np.ascontiguousarray(f.values, dtype="<f8").tobytes())
    else:
        with path.open("w") as fh:
            fh.write(_TEXT_TAG + json.dumps(head, sort_keys=True) + "\n")
            np.savetxt(fh, f.values, fmt="%.17g")


def read_map(path) -> SampledMap:
    path = Path(path)
    raw = path.read_bytes()
    if raw.startswith(_BINARY_MAGIC):
        off = len(_BINARY_MAGIC)
        (hlen,) = struct.unpack("<I", raw[off : off + 4])
        head = json.loads(raw[off + 4 : off + 4 + hlen])
        target, M = _target_from_header(head)
        values = np.frombuffer(raw[off + 4 + hlen :], dtype="<f8").reshape(-1, M)
    else:
        text = raw.decode()
        first, _, body = text.partition("\n")
        if not first.startswith(_TEXT_TAG):
            raise ValueError(f"{path} is not a lipfactor grid file")
        head = json.loads(first[len(_TEXT_TAG) :])
        target, M = _target_from_header(head)
        values = np.loadtxt(body.splitlines(), ndmin=2) if body.strip() else np.zeros((0, M))
        values = values.reshape(-1, M)
    domain = GridDomain(int(head["d"]), int(head["N"]))
    return from_values(domain, values, target)


def read_landmarks(path) -> np.ndarray:
    text = Path(path).read_text().split()
    return np.asarray([int(t) for t in text], dtype=int)


def write_landmarks(landmarks, path) -> None:
    Path(path).write_text("".join(f"{int(i)}\n" for i in landmarks))
