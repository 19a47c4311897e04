"""Experiment configuration and the six-condition tree dashboard.

For ``f: [0,1]^d -> X`` with ``d >= 2`` the dashboard evaluates sampled
evidence for six conditions that are equivalent for Lipschitz maps:

(a) f factors through a metric tree,
(b) rank md(f, x) <= 1 almost everywhere,
(c) the upper 2-density vanishes almost everywhere,
(d) the lower 2-density vanishes almost everywhere,
(e) the dyadic mapping content H^{2,d-2}_inf(f, Q) is zero,
(f) the unrestricted mapping content is zero.

Each condition gets a boolean verdict ("holds within tolerance") plus the
numbers and parameters behind it.  A consistent run has all verdicts equal.
"""

from __future__ import annotations

import math
import os
from dataclasses import asdict, dataclass, field, fields, replace

import numpy as np

from .builtins import BUILTINS, make_builtin
from .content import density, hat_content_bounds, mapping_content_dp
from .quotient import pullback_metric, quotient, tree_certificate
from .sampled_map import SampledMap, from_values, GridDomain, rank_field, read_map

__all__ = [
    "ConfigError",
    "ExperimentConfig",
    "load_config",
    "build_map",
    "DashboardReport",
    "run_dashboard",
    "subsample",
    "density_bound_constant",
]


class ConfigError(ValueError):
    """Invalid experiment configuration."""


@dataclass(frozen=True)
class ExperimentConfig:
    """Parameters of one run.

    ``map`` names a builtin unless ``data`` points at a grid file.  Builtin
    parameters go in ``params``.  ``None`` for ``epsilon``, ``tau`` or
    ``rho`` selects the module default.  ``oracle`` is ``auto`` (exact
    per-cube contents when the builtin has them), ``on`` (required) or
    ``off`` (sampled estimator).
    """

    map: str = "sine"
    data: str | None = None
    d: int | None = None
    params: dict = field(default_factory=dict)
    grid: int = 33
    depth: int = 4
    epsilon: float | None = None
    tau: float | None = None
    rho: float | None = None
    budget: int = 100_000
    seed: int = 0
    oracle: str = "auto"
    out: str = "out"
    density_points: int = 16
    radii: tuple = (0.25, 0.2, 0.15)
    rank_tol: float = 0.05
    density_tol: float = 0.5
    content_tol: float = 0.05
    defect_levels: int = 3

    def validate(self) -> ExperimentConfig:
        if self.data is not None:
            if not os.path.isfile(self.data):
                raise ConfigError(f"data file {self.data!r} does not exist")
        elif self.map not in BUILTINS:
            raise ConfigError(f"unknown builtin {self.map!r}; choose from {sorted(BUILTINS)}")
        if not 3 <= self.grid <= 100_001:
            raise ConfigError(f"grid must be in [3, 100001], got {self.grid}")
        if not 0 <= self.depth <= 12:
            raise ConfigError(f"depth must be in [0, 12], got {self.depth}")
        for name in ("epsilon", "tau", "rho"):
            v = getattr(self, name)
            if v is not None and not (math.isfinite(v) and v >= 0):
                raise ConfigError(f"{name} must be a finite non-negative number, got {v}")
        if self.budget < 1 or self.density_points < 1 or self.defect_levels < 1:
            raise ConfigError("budget, density_points and defect_levels must be positive")
        r = np.asarray(self.radii, dtype=float)
        if r.size == 0 or np.any(r <= 0) or np.any(r >= 0.5) or np.any(np.diff(r) >= 0):
            raise ConfigError(f"radii must be strictly decreasing in (0, 0.5), got {self.radii}")
        if self.oracle not in ("auto", "on", "off"):
            raise ConfigError(f"oracle must be auto, on or off, got {self.oracle!r}")
        for name in ("rank_tol", "density_tol", "content_tol"):
            if getattr(self, name) < 0:
                raise ConfigError(f"{name} must be non-negative")
        return self

    def to_dict(self) -> dict:
        out = asdict(self)
        out["radii"] = list(self.radii)
        return out


_INT = {"d", "grid", "depth", "budget", "seed", "density_points", "defect_levels"}
_FLOAT = {"epsilon", "tau", "rho", "rank_tol", "density_tol", "content_tol"}


def _coerce(key: str, raw: str):
    raw = raw.strip()
    if key in _INT:
        return int(raw)
    if key in _FLOAT:
        return None if raw.lower() in ("", "none", "default") else float(raw)
    if key == "oracle":
        v = raw.lower()
        aliases = {"true": "on", "yes": "on", "1": "on", "false": "off", "no": "off", "0": "off"}
        v = aliases.get(v, v)
        if v not in ("auto", "on", "off"):
            raise ValueError(f"expected auto, on or off, got {raw!r}")
        return v
    if key == "radii":
        return tuple(float(v) for v in raw.replace(",", " ").split())
    if key == "data":
        return raw or None
    return raw


def parse_settings(pairs: dict, base: ExperimentConfig | None = None) -> ExperimentConfig:
    """Apply ``key -> string`` settings (``param.<name>`` for builtin parameters)."""
    base = ExperimentConfig() if base is None else base
    known = {f.name for f in fields(ExperimentConfig)} - {"params"}
    updates: dict = {}
    params = dict(base.params)
    for key, raw in pairs.items():
        if key.startswith("param."):
            try:
                params[key[6:]] = float(raw)
            except ValueError:
                raise ConfigError(f"builtin parameter {key} needs a number, got {raw!r}") from None
            continue
        if key not in known:
            raise ConfigError(f"unknown config key {key!r}")
        try:
            updates[key] = _coerce(key, raw)
        except ValueError as exc:
            raise ConfigError(f"bad value for {key}: {exc}") from None
    return replace(base, params=params, **updates)


def load_config(path: str, overrides: dict | None = None) -> ExperimentConfig:
    """Read a ``key = value`` file (``#`` starts a comment), then apply overrides."""
    pairs: dict = {}
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, 1):
            line = line.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" not in line:
                raise ConfigError(f"{path}:{lineno}: expected key = value")
            key, value = line.split("=", 1)
            pairs[key.strip()] = value.strip()
    cfg = parse_settings(pairs)
    if overrides:
        cfg = parse_settings(overrides, cfg)
    return cfg


def build_map(cfg: ExperimentConfig):
    """The sampled map and its oracle factory (``None`` for data files)."""
    if cfg.data is not None:
        return read_map(cfg.data), None
    try:
        return make_builtin(cfg.map, cfg.grid, cfg.d, **cfg.params)
    except ValueError as exc:
        raise ConfigError(str(exc)) from None


def subsample(f: SampledMap, step: int = 2) -> SampledMap:
    """Every ``step``-th grid point along each axis; needs ``step | N-1``."""
    N = f.domain.N
    if (N - 1) % step:
        raise ValueError(f"cannot subsample N={N} by {step}")
    sl = (slice(None, None, step),) * f.domain.d
    vals = f.grid_values()[sl].reshape(-1, f.M)
    return from_values(GridDomain(f.domain.d, (N - 1) // step + 1), vals, f.target, f.meta)


def density_bound_constant(n: int, m: int) -> float:
    """Constant ``C`` in ``H^{n,m} <= C int Theta_*``: a cube of side ``s``
    carries a ball of radius ``s/2`` around its centre, and ``(2 sqrt(n+m))^{n+m}``
    bounds the cover overlap and diameter factors."""
    k = n + m
    return (2.0 * math.sqrt(k)) ** k


def _density_centres(f: SampledMap, r_max: float, count: int, seed: int) -> np.ndarray:
    dom = f.domain
    lo = int(math.ceil(r_max / dom.h - 1e-9))
    hi = dom.N - 1 - lo
    if hi < lo:
        raise ConfigError(f"radius {r_max} leaves no admissible centre at N={dom.N}")
    rng = np.random.default_rng(seed)
    idx = rng.integers(lo, hi + 1, size=(count, dom.d))
    return np.unique(dom.flat_index(idx))


@dataclass
class DashboardReport:
    config: dict
    map_info: dict
    conditions: dict
    consistency: dict
    density_bound: dict
    series: dict

    @property
    def consistent(self) -> bool:
        return bool(self.consistency["consistent"])

    def to_dict(self) -> dict:
        return {
            "config": self.config,
            "map": self.map_info,
            "conditions": self.conditions,
            "consistency": self.consistency,
            "density_bound": self.density_bound,
            "series": self.series,
        }


class StageError(RuntimeError):
    """A dashboard stage failed; ``stage`` names it."""

    def __init__(self, stage: str, exc: Exception):
        super().__init__(f"stage {stage!r} failed: {exc}")
        self.stage = stage


def _stage(name, fn, *args, **kw):
    try:
        return fn(*args, **kw)
    except ConfigError:
        raise
    except Exception as exc:  # noqa: BLE001
        raise StageError(name, exc) from exc


def _tree_stage(f: SampledMap, cfg: ExperimentConfig):
    Z = quotient(pullback_metric(f), cfg.epsilon)
    cert = tree_certificate(f, Z, budget=cfg.budget, seed=cfg.seed)
    return Z, cert


def _defect_series(f: SampledMap, cfg: ExperimentConfig, top) -> dict:
    hs, defects = [f.h], [top.four_point_defect]
    g = f
    for _ in range(cfg.defect_levels - 1):
        if (g.domain.N - 1) % 2 or g.domain.N < 9:
            break
        g = subsample(g)
        _, cert = _tree_stage(g, cfg)
        hs.append(g.h)
        defects.append(cert.four_point_defect)
    return {"h": hs[::-1], "defect": defects[::-1]}


def run_dashboard(cfg: ExperimentConfig) -> DashboardReport:
    cfg.validate()
    f, oracles = _stage("load", build_map, cfg)
    d = f.domain.d
    if d < 2:
        raise ConfigError("the dashboard needs a domain of dimension >= 2")
    n, m = 2, d - 2
    depth = cfg.depth
    if (1 << depth) > f.domain.N - 1:
        raise ConfigError(f"depth {depth} needs N-1 >= {1 << depth}, got N={f.domain.N}")
    oracle = None
    if cfg.oracle != "off":
        oracle = oracles(n) if oracles is not None else None
        if oracle is None and cfg.oracle == "on":
            raise ConfigError(f"no exact content oracle for {cfg.map!r} with n={n}")

    # (b) rank field
    field_ = _stage("rank_field", rank_field, f, cfg.tau, seed=cfg.seed, with_jacobians=False)
    fractions = field_.fraction_by_rank()
    high = float(sum(v for k, v in fractions.items() if k >= 2))
    cond_b = {
        "holds": high <= cfg.rank_tol,
        "fraction_rank_ge_2": high,
        "fraction_rank_le_1": 1.0 - high,
        "fraction_by_rank": {str(k): v for k, v in fractions.items()},
        "parameters": {"tau": field_.tau, "rank_tol": cfg.rank_tol},
    }

    # (c), (d) densities
    radii = tuple(float(r) for r in cfg.radii)
    centres = _density_centres(f, radii[0], cfg.density_points, cfg.seed)
    estimates = [_stage("density", density, f, int(c), n, radii) for c in centres]
    uppers = np.array([e.upper for e in estimates])
    lowers = np.array([e.lower for e in estimates])
    dens_params = {"radii": list(radii), "points": centres.tolist(), "density_tol": cfg.density_tol,
                   "ladder": "resolution", "summary": "median"}
    cond_c = {
        "holds": float(np.median(uppers)) <= cfg.density_tol,
        "median": float(np.median(uppers)),
        "mean": float(np.mean(uppers)),
        "max": float(np.max(uppers)),
        "values": uppers.tolist(),
        "parameters": dens_params,
    }
    cond_d = {
        "holds": float(np.median(lowers)) <= cfg.density_tol,
        "median": float(np.median(lowers)),
        "mean": float(np.mean(lowers)),
        "max": float(np.max(lowers)),
        "values": lowers.tolist(),
        "parameters": dens_params,
    }

    # (e), (f) mapping contents
    dp_series = []
    for k in range(depth + 1):
        rep = _stage("mapping_content_dp", mapping_content_dp, f, None, n, m, k, oracle)
        dp_series.append(rep.value)
    dp = rep
    cond_e = {
        "holds": dp.value <= cfg.content_tol,
        "value": dp.value,
        "bound_kind": dp.bound_kind,
        "cover_size": len(dp.cover),
        "parameters": {**dp.parameters, "content_tol": cfg.content_tol},
    }
    lower, hat = _stage("hat_content", hat_content_bounds, f, None, n, m, depth, oracle)
    cond_f = {
        "holds": hat.value <= cfg.content_tol,
        "lower": lower,
        "upper": hat.value,
        "parameters": {**hat.parameters, "content_tol": cfg.content_tol},
    }

    # (a) quotient and tree certificate
    Z, cert = _stage("tree_certificate", _tree_stage, f, cfg)
    cond_a = {
        "holds": cert.verdict == "tree-within-tol",
        "classes": Z.n_classes,
        "epsilon": Z.epsilon,
        **cert.to_dict(),
        "parameters": {"epsilon": Z.epsilon, "tau": cfg.tau, "budget": cfg.budget, "seed": cfg.seed},
    }
    defects = _stage("defect_series", _defect_series, f, cfg, cert)

    conditions = {"a": cond_a, "b": cond_b, "c": cond_c, "d": cond_d, "e": cond_e, "f": cond_f}
    for c in conditions.values():
        c["holds"] = bool(c["holds"])
    keys = sorted(conditions)
    matrix = [[conditions[i]["holds"] == conditions[j]["holds"] for j in keys] for i in keys]
    consistency = {
        "keys": keys,
        "agree": matrix,
        "consistent": all(all(row) for row in matrix),
        "verdict": "tree" if all(conditions[k]["holds"] for k in keys)
        else "not-tree" if not any(conditions[k]["holds"] for k in keys) else "mixed",
    }

    C = density_bound_constant(n, m)
    rhs = C * float(np.mean(lowers))
    bound = {"lhs": dp.value, "rhs": rhs, "C": C, "mean_lower_density": float(np.mean(lowers)),
             "measure_E": 1.0, "holds": bool(dp.value <= rhs + 1e-12)}
    series = {
        "density": {"radii": list(radii), "ratios": [e.ratios.tolist() for e in estimates]},
        "dp": {"depth": list(range(depth + 1)), "value": dp_series},
        "defect": defects,
    }
    info = {"d": d, "N": f.domain.N, "M": f.M, "h": f.h, "lipschitz": f.lipschitz,
            "target": f.target.describe(), "builtin": f.meta.get("builtin"), "params": f.meta.get("params")}
    return DashboardReport(cfg.to_dict(), info, conditions, consistency, bound, series)
