"""Builtin maps with closed-form content oracles.

Each builtin is sampled on ``[0,1]^d`` and, where the images of dyadic
cubes have an elementary n-content, carries an ``oracle(n)`` factory
returning the per-cube content used by the mapping-content program.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .content import DyadicCube
from .curves import Curve
from .heisenberg import horizontal_lift
from .sampled_map import MetricTarget, SampledMap, from_function, from_values, GridDomain

__all__ = ["Builtin", "BUILTINS", "make_builtin", "builtin_names"]


@dataclass(frozen=True)
class Builtin:
    name: str
    default_d: int
    build: Callable[[int, int, dict], SampledMap]
    oracle: Callable[[int, int, dict], Callable[[DyadicCube], float] | None] = lambda n, d, p: None
    description: str = ""
    defaults: dict = field(default_factory=dict)


def _zero_oracle(n, d, p):
    # images are points or segments: no n-content for n >= 2
    return (lambda cube: 0.0) if n >= 2 else None


def _constant(d, N, p):
    return from_function(d, N, lambda x: np.full(len(x), float(p["value"])))


def _coordinate(d, N, p):
    k = int(p["axis"])
    if not 0 <= k < d:
        raise ValueError(f"axis {k} outside 0..{d - 1}")
    return from_function(d, N, lambda x: x[:, k])


def _projection(d, N, p):
    if d < 2:
        raise ValueError("projection needs d >= 2")
    return from_function(d, N, lambda x: x[:, :2])


def _projection_oracle(n, d, p):
    if n != 2:
        return None
    # the image of a dyadic cube is a square; its 2-content is its area
    return lambda cube: cube.side**2


def _identity(d, N, p):
    return from_function(d, N, lambda x: x.copy())


def _identity_oracle(n, d, p):
    if n != d:
        return None
    return lambda cube: cube.side**d


def _sine(d, N, p):
    w = float(p["freq"])
    return from_function(d, N, lambda x: np.sin(w * x[:, 0]))


def _fold(d, N, p):
    return from_function(d, N, lambda x: np.abs(2.0 * x[:, 0] - 1.0))


def _example_plateau(d, N, p):
    def fn(x):
        s = 3.0 * x[:, 0]
        return np.where(s <= 1, s, np.where(s <= 2, 1.0, s - 1.0))

    return from_function(d, N, fn)


def _spiral(d, N, p):
    if d != 1:
        raise ValueError("the spiral lift is a curve (d = 1)")
    s = np.linspace(0.0, 1.0, N)
    r = 0.2 + 0.6 * s
    a = 2.0 * np.pi * float(p["turns"]) * s
    xy = float(p["scale"]) * np.column_stack([r * np.cos(a), r * np.sin(a)])
    lifted = horizontal_lift(Curve(s, xy))
    return from_values(GridDomain(1, N), lifted.points, MetricTarget("heisenberg", n=1))


BUILTINS: dict[str, Builtin] = {
    b.name: b
    for b in [
        Builtin("constant", 2, _constant, _zero_oracle, "f(x) = c", {"value": 0.0}),
        Builtin("coordinate", 3, _coordinate, _zero_oracle, "f(x) = x_k", {"axis": 0}),
        Builtin("projection", 3, _projection, _projection_oracle, "f(x) = (x_1, x_2)"),
        Builtin("identity", 2, _identity, _identity_oracle, "f(x) = x"),
        Builtin("sine", 3, _sine, _zero_oracle, "f(x) = sin(w x_1)", {"freq": 3.0}),
        Builtin("fold", 1, _fold, _zero_oracle, "f(x) = |2 x_1 - 1|"),
        Builtin("plateau", 1, _example_plateau, _zero_oracle, "ramp, flat, ramp on [0,3] rescaled to [0,1]"),
        Builtin("spiral", 1, _spiral, lambda n, d, p: None, "horizontal lift of a planar spiral into H^1",
                {"turns": 3.0, "scale": 1.0}),
    ]
}


def builtin_names() -> list[str]:
    return sorted(BUILTINS)


def make_builtin(name: str, N: int, d: int | None = None, **params):
    """Sample builtin ``name`` at ``N`` points per axis.

    Returns ``(f, oracle)`` where ``oracle(n)`` gives the exact per-cube
    n-content callback or ``None`` when no closed form is known.
    """
    if name not in BUILTINS:
        raise ValueError(f"unknown builtin {name!r}; choose from {builtin_names()}")
    b = BUILTINS[name]
    d = b.default_d if d is None else int(d)
    unknown = set(params) - set(b.defaults)
    if unknown:
        raise ValueError(f"builtin {name!r} takes no parameters {sorted(unknown)}")
    p = {**b.defaults, **params}
    f = b.build(d, N, p)
    f.meta.update({"builtin": name, "params": p})
    return f, (lambda n: b.oracle(n, d, p))
