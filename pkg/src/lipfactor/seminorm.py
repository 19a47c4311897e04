"""Polyhedral seminorms ``sigma(v) = max_i |a_i . v|``.

A metric derivative of a Lipschitz map into a sup-normed target is a
seminorm of exactly this form, one row per coordinate function.  This
module evaluates such seminorms, computes their numerical rank and null
space, and estimates the Jacobian ``J_n(sigma) = omega_n / |{sigma <= 1}|``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.spatial import ConvexHull, HalfspaceIntersection

__all__ = [
    "Seminorm",
    "unit_ball_volume",
    "ball_volume_mc",
    "ball_volume_exact",
    "jacobian",
    "jacobian_exact",
]

_MC_CHUNK = 1 << 16


def unit_ball_volume(n: float) -> float:
    """Volume ``omega_n`` of the Euclidean unit ball in R^n."""
    return math.pi ** (n / 2) / math.gamma(n / 2 + 1)


@dataclass(frozen=True)
class Seminorm:
    """Seminorm on R^dim given by the rows of an ``m x dim`` matrix.

    ``rank_tol`` overrides the default numerical-rank threshold
    ``max(m, n) * eps * s_max``.
    """

    rows: np.ndarray
    dim: int
    rank_tol: float | None = field(default=None, compare=False)

    def __post_init__(self):
        rows = np.asarray(self.rows, dtype=float)
        if rows.size == 0:
            rows = rows.reshape(0, self.dim)
        if rows.ndim != 2 or rows.shape[1] != self.dim:
            raise ValueError(f"rows must have shape (m, {self.dim}), got {rows.shape}")
        if self.dim < 1:
            raise ValueError("dim must be positive")
        rows = rows.copy()
        rows.setflags(write=False)
        object.__setattr__(self, "rows", rows)

    @classmethod
    def from_rows(cls, rows, dim: int | None = None, rank_tol: float | None = None) -> Seminorm:
        rows = np.asarray(rows, dtype=float)
        if dim is None:
            if rows.ndim != 2:
                raise ValueError("dim is required for empty row sets")
            dim = rows.shape[1]
        return cls(rows, dim, rank_tol)

    @property
    def m(self) -> int:
        return self.rows.shape[0]

    def __call__(self, v) -> float:
        return self.eval(v)

    def eval(self, v) -> float:
        v = np.asarray(v, dtype=float)
        if v.shape != (self.dim,):
            raise ValueError(f"expected a vector of length {self.dim}, got shape {v.shape}")
        if self.m == 0:
            return 0.0
        return float(np.max(np.abs(self.rows @ v)))

    def eval_many(self, vs) -> np.ndarray:
        """Evaluate on the rows of a ``k x dim`` array."""
        vs = np.asarray(vs, dtype=float)
        if vs.ndim != 2 or vs.shape[1] != self.dim:
            raise ValueError(f"expected shape (k, {self.dim}), got {vs.shape}")
        if self.m == 0:
            return np.zeros(vs.shape[0])
        return np.max(np.abs(vs @ self.rows.T), axis=1)

    def singular_values(self) -> np.ndarray:
        if self.m == 0:
            return np.zeros(0)
        return np.linalg.svd(self.rows, compute_uv=False)

    def threshold(self) -> float:
        if self.rank_tol is not None:
            return float(self.rank_tol)
        sv = self.singular_values()
        if sv.size == 0:
            return 0.0
        return max(self.m, self.dim) * np.finfo(float).eps * float(sv[0])

    def rank(self) -> int:
        sv = self.singular_values()
        if sv.size == 0:
            return 0
        return int(np.sum(sv > self.threshold()))

    def kernel_basis(self) -> list[np.ndarray]:
        """Orthonormal basis of the numerical null space ``N_sigma``."""
        if self.m == 0:
            return [e for e in np.eye(self.dim)]
        _, _, vt = np.linalg.svd(self.rows, full_matrices=True)
        r = self.rank()
        return [vt[i].copy() for i in range(r, self.dim)]

    def with_row(self, row) -> Seminorm:
        row = np.asarray(row, dtype=float).reshape(1, self.dim)
        return Seminorm(np.vstack([self.rows, row]), self.dim, self.rank_tol)


def _box_rows(s: Seminorm) -> np.ndarray:
    """Pick ``dim`` independent rows, highest leverage first."""
    a = s.rows
    u, sv, _ = np.linalg.svd(a, full_matrices=False)
    r = int(np.sum(sv > s.threshold()))
    leverage = np.sum(u[:, :r] ** 2, axis=1)
    order = np.argsort(-leverage, kind="stable")
    chosen: list[int] = []
    for i in order:
        trial = a[chosen + [int(i)]]
        if np.linalg.matrix_rank(trial) == len(chosen) + 1:
            chosen.append(int(i))
        if len(chosen) == s.dim:
            break
    return a[chosen]


def ball_volume_mc(s: Seminorm, samples: int, seed: int) -> tuple[float, float]:
    """Monte-Carlo volume of ``{sigma <= 1}`` and its standard error.

    Samples are drawn uniformly from the parallelepiped ``{|B v|_inf <= 1}``
    spanned by ``dim`` independent rows ``B``; it contains the unit ball
    because every row of ``B`` is one of the seminorm's rows.
    """
    if samples <= 0:
        raise ValueError("samples must be positive")
    if s.rank() < s.dim:
        return math.inf, 0.0
    b = _box_rows(s)
    binv = np.linalg.inv(b)
    box_volume = 2.0**s.dim / abs(np.linalg.det(b))
    rng = np.random.default_rng(seed)
    hits = 0
    done = 0
    while done < samples:
        k = min(_MC_CHUNK, samples - done)
        u = rng.uniform(-1.0, 1.0, size=(k, s.dim))
        v = u @ binv.T
        hits += int(np.count_nonzero(s.eval_many(v) <= 1.0))
        done += k
    p = hits / samples
    return box_volume * p, box_volume * math.sqrt(p * (1.0 - p) / samples)


def ball_volume_exact(s: Seminorm) -> float:
    """Exact volume of ``{sigma <= 1}`` by half-space intersection, ``dim <= 3``."""
    n = s.dim
    if n > 3:
        raise ValueError("exact ball volume is only provided for dim <= 3")
    if s.rank() < n:
        return math.inf
    a = s.rows[np.linalg.norm(s.rows, axis=1) > 0]
    if n == 1:
        return 2.0 / float(np.max(np.abs(a)))
    # each row gives a.v - 1 <= 0 and -a.v - 1 <= 0
    halfspaces = np.vstack([np.hstack([a, -np.ones((len(a), 1))]), np.hstack([-a, -np.ones((len(a), 1))])])
    hs = HalfspaceIntersection(halfspaces, np.zeros(n))
    return float(ConvexHull(hs.intersections).volume)


def jacobian(s: Seminorm, samples: int = 100_000, seed: int = 0) -> float:
    """``omega_n / vol{sigma <= 1}`` with a Monte-Carlo volume; exactly 0 if rank < n."""
    if samples <= 0:
        raise ValueError("samples must be positive")
    if s.rank() < s.dim:
        return 0.0
    vol, _ = ball_volume_mc(s, samples, seed)
    if vol == 0.0:
        raise ArithmeticError("no Monte-Carlo sample fell inside the unit ball; increase samples")
    return unit_ball_volume(s.dim) / vol


def jacobian_exact(s: Seminorm) -> float:
    if s.rank() < s.dim:
        return 0.0
    return unit_ball_volume(s.dim) / ball_volume_exact(s)
