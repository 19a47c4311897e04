"""Byte-deterministic JSON, CSV and SVG output."""

from __future__ import annotations

import csv
import io
import json
import math
import os

import numpy as np

__all__ = ["DASHBOARD_SCHEMA", "to_jsonable", "write_json", "write_csv", "emit_reports", "line_plot_svg"]

_NUM = {"type": "number"}
_CONDITION = {
    "type": "object",
    "required": ["holds", "parameters"],
    "properties": {"holds": {"type": "boolean"}, "parameters": {"type": "object"}},
}

DASHBOARD_SCHEMA = {
    "$schema": "https://json-schema.org/draft/2020-12/schema",
    "title": "lipfactor dashboard report",
    "type": "object",
    "required": ["config", "map", "conditions", "consistency", "density_bound", "series"],
    "properties": {
        "config": {"type": "object"},
        "map": {
            "type": "object",
            "required": ["d", "N", "h", "lipschitz"],
            "properties": {"d": {"type": "integer"}, "N": {"type": "integer"}, "h": _NUM, "lipschitz": _NUM},
        },
        "conditions": {
            "type": "object",
            "required": list("abcdef"),
            "properties": {
                "a": {**_CONDITION, "required": ["holds", "four_point_defect", "loop_area_max", "verdict"]},
                "b": {**_CONDITION, "required": ["holds", "parameters", "fraction_rank_ge_2"]},
                "c": {**_CONDITION, "required": ["holds", "parameters", "median", "values"]},
                "d": {**_CONDITION, "required": ["holds", "parameters", "median", "values"]},
                "e": {**_CONDITION, "required": ["holds", "parameters", "value", "bound_kind"]},
                "f": {**_CONDITION, "required": ["holds", "parameters", "lower", "upper"]},
            },
        },
        "consistency": {
            "type": "object",
            "required": ["keys", "agree", "consistent", "verdict"],
            "properties": {
                "verdict": {"enum": ["tree", "not-tree", "mixed"]},
                "consistent": {"type": "boolean"},
            },
        },
        "density_bound": {"type": "object", "required": ["lhs", "rhs", "C", "holds"]},
        "series": {"type": "object", "required": ["density", "dp", "defect"]},
    },
}


def to_jsonable(obj):
    """Plain Python containers; non-finite floats become strings."""
    if isinstance(obj, dict):
        return {str(k): to_jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [to_jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return to_jsonable(obj.tolist())
    if isinstance(obj, (np.bool_, bool)):
        return bool(obj)
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, (float, np.floating)):
        v = float(obj)
        return v if math.isfinite(v) else repr(v)
    return obj


def _write_bytes(path: str, data: bytes) -> str:
    with open(path, "wb") as fh:
        fh.write(data)
    return path


def write_json(path: str, payload) -> str:
    text = json.dumps(to_jsonable(payload), sort_keys=True, indent=2) + "\n"
    return _write_bytes(path, text.encode("utf-8"))


def write_csv(path: str, header: list[str], rows) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    for row in rows:
        w.writerow([repr(float(v)) if isinstance(v, (float, np.floating)) else v for v in row])
    return _write_bytes(path, buf.getvalue().encode("utf-8"))


def line_plot_svg(path: str, series: list[tuple[str, np.ndarray, np.ndarray]], xlabel: str, ylabel: str,
                  title: str, logx: bool = False) -> str:
    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    with matplotlib.rc_context({"svg.hashsalt": "lipfactor", "svg.fonttype": "none"}):
        fig, ax = plt.subplots(figsize=(5, 3.5))
        for label, x, y in series:
            ax.plot(x, y, marker="o", label=label)
        if logx:
            ax.set_xscale("log")
        ax.set_xlabel(xlabel)
        ax.set_ylabel(ylabel)
        ax.set_title(title)
        if len(series) > 1 and len(series) <= 10:
            ax.legend(fontsize="small")
        fig.tight_layout()
        buf = io.BytesIO()
        fig.savefig(buf, format="svg", metadata={"Date": None})
        plt.close(fig)
    return _write_bytes(path, buf.getvalue())


def emit_reports(report, directory: str) -> list[str]:
    """Write ``dashboard.json``, its schema, ``conditions.csv`` and three SVG plots."""
    os.makedirs(directory, exist_ok=True)
    data = report.to_dict()
    join = lambda name: os.path.join(directory, name)  # noqa: E731
    files = [
        write_json(join("dashboard.json"), data),
        write_json(join("dashboard.schema.json"), DASHBOARD_SCHEMA),
    ]
    rows = []
    for key in sorted(data["conditions"]):
        c = data["conditions"][key]
        evidence = {"a": "four_point_defect", "b": "fraction_rank_ge_2", "c": "median", "d": "median",
                    "e": "value", "f": "upper"}[key]
        rows.append([key, c["holds"], c[evidence], evidence])
    files.append(write_csv(join("conditions.csv"), ["condition", "holds", "evidence", "quantity"], rows))

    s = data["series"]
    radii = np.asarray(s["density"]["radii"])
    dens = [(f"x{i}", radii, np.asarray(r)) for i, r in enumerate(s["density"]["ratios"])]
    files.append(line_plot_svg(join("density_vs_radius.svg"), dens, "radius r", "content / (omega_2 r^2)",
                               "density ratios"))
    files.append(line_plot_svg(join("dp_vs_depth.svg"), [("DP", np.asarray(s["dp"]["depth"]),
                                                          np.asarray(s["dp"]["value"]))],
                               "depth", "mapping content", "dyadic DP value"))
    files.append(line_plot_svg(join("defect_vs_h.svg"), [("defect", np.asarray(s["defect"]["h"]),
                                                          np.asarray(s["defect"]["defect"]))],
                               "h", "four-point defect", "defect vs grid spacing", logx=True))
    return files
