"""Command-line interface.

Every subcommand reads an optional ``key = value`` config file, applies
command-line overrides, writes its JSON (and CSV/SVG where relevant)
into ``--out`` and prints a one-line summary.

Exit codes: 0 success, 2 invalid configuration, 3 numeric failure, 4 IO error.
"""

from __future__ import annotations

import argparse
import csv
import json
import os
import sys
import warnings

import numpy as np

from . import area, content, heisenberg, quotient
from .curves import Curve
from .dashboard import ConfigError, ExperimentConfig, StageError, build_map, load_config, parse_settings, run_dashboard
from .reports import emit_reports, write_csv, write_json
from .sampled_map import rank_field

EXIT_OK, EXIT_CONFIG, EXIT_NUMERIC, EXIT_IO = 0, 2, 3, 4


class NumericFailure(RuntimeError):
    """A check ran but its result is outside tolerance."""


def _common(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", help="key = value config file")
    p.add_argument("--map", help="builtin map name")
    p.add_argument("--data", help="grid file (overrides --map)")
    p.add_argument("--dim", dest="d", help="domain dimension for builtins")
    p.add_argument("--param", action="append", default=[], metavar="NAME=VALUE", help="builtin parameter")
    p.add_argument("--set", action="append", default=[], metavar="KEY=VALUE", help="any config key")
    p.add_argument("--grid", help="points per axis N")
    p.add_argument("--depth", help="dyadic depth")
    p.add_argument("--epsilon", help="gluing threshold for the quotient")
    p.add_argument("--tau", help="rank threshold")
    p.add_argument("--rho", help="preimage radius for the area formula")
    p.add_argument("--seed", help="random seed")
    p.add_argument("--oracle", help="auto, on or off")
    p.add_argument("--out", help="output directory")


def _pairs(items: list[str], prefix: str = "") -> dict:
    out = {}
    for item in items:
        if "=" not in item:
            raise ConfigError(f"expected NAME=VALUE, got {item!r}")
        k, v = item.split("=", 1)
        out[prefix + k.strip()] = v.strip()
    return out


def config_from_args(args) -> ExperimentConfig:
    overrides = _pairs(args.set)
    overrides.update(_pairs(args.param, "param."))
    for key in ("map", "data", "d", "grid", "depth", "epsilon", "tau", "rho", "seed", "oracle", "out"):
        v = getattr(args, key, None)
        if v is not None:
            overrides[key] = str(v)
    if args.config:
        cfg = load_config(args.config, overrides)
    else:
        cfg = parse_settings(overrides)
    return cfg.validate()


def _out(cfg: ExperimentConfig, name: str) -> str:
    os.makedirs(cfg.out, exist_ok=True)
    return os.path.join(cfg.out, name)


def _oracle(cfg, oracles, n):
    if cfg.oracle == "off" or oracles is None:
        if cfg.oracle == "on":
            raise ConfigError("data files have no exact content oracle")
        return None
    o = oracles(n)
    if o is None and cfg.oracle == "on":
        raise ConfigError(f"no exact content oracle for {cfg.map!r} with n={n}")
    return o


# -- subcommands ------------------------------------------------------------


def cmd_md_field(args, cfg):
    f, _ = build_map(cfg)
    fld = rank_field(f, cfg.tau, seed=cfg.seed)
    write_json(_out(cfg, "md_field.json"), {"config": cfg.to_dict(), "summary": fld.summary()})
    sv = fld.singular_values
    rows = [[int(p), int(r), float(j), *map(float, s)] for p, r, j, s in zip(fld.points, fld.ranks, fld.jacobians, sv)]
    header = ["point", "rank", "jacobian"] + [f"sigma{k}" for k in range(sv.shape[1])]
    write_csv(_out(cfg, "md_field.csv"), header, rows)
    return f"rank fractions {fld.summary()['fraction_by_rank']}"


def cmd_content(args, cfg):
    f, oracles = build_map(cfg)
    if args.kind == "hausdorff":
        diam = float(np.max(np.ptp(f.values, axis=0))) * np.sqrt(f.M)
        top = max(diam, 1e-300)
        rep = content.hausdorff_content(f.values, args.n, content.geometric_ladder(top), f.target)
    else:
        m = f.domain.d - args.n
        rep = content.mapping_content_dp(f, None, args.n, m, cfg.depth, _oracle(cfg, oracles, args.n))
    write_json(_out(cfg, "content.json"), {"config": cfg.to_dict(), "report": rep.to_dict()})
    return f"{rep.kind} content {rep.value!r} ({rep.bound_kind}, {len(rep.cover)} pieces)"


def cmd_verify_cover(args, cfg):
    with open(args.report, encoding="utf-8") as fh:
        data = json.load(fh)
    rep = content.ContentReport.from_dict(data.get("report", data))
    if rep.kind == "mapping":
        f, _ = build_map(cfg)
        res = content.verify_cover(rep, f)
    else:
        f, _ = build_map(cfg)
        res = content.verify_cover(rep, points=f.values)
    write_json(_out(cfg, "verify.json"), {"config": cfg.to_dict(), "report_file": args.report, "result": res})
    if not res["ok"]:
        raise NumericFailure(f"cover check failed: {res}")
    return f"cover ok, value {res['value']!r}"


def cmd_factorize(args, cfg):
    f, _ = build_map(cfg)
    Z = quotient.quotient(quotient.pullback_metric(f), cfg.epsilon)
    checks = quotient.factor_check(f, Z, seed=cfg.seed)
    write_json(_out(cfg, "factorize.json"), {
        "config": cfg.to_dict(), "classes": Z.n_classes, "epsilon": Z.epsilon, "checks": checks})
    write_csv(_out(cfg, "classes.csv"), ["vertex", "class"], Z.class_table())
    write_csv(_out(cfg, "quotient_edges.csv"), ["u", "v", "weight"], Z.edge_list())
    if not checks["ok"]:
        raise NumericFailure(f"factorization checks failed: {checks}")
    return f"{Z.n_classes} classes, factorization ok"


def cmd_tree_check(args, cfg):
    f, _ = build_map(cfg)
    Z = quotient.quotient(quotient.pullback_metric(f), cfg.epsilon)
    cert = quotient.tree_certificate(f, Z, budget=cfg.budget, seed=cfg.seed)
    write_json(_out(cfg, "tree.json"), {"config": cfg.to_dict(), "classes": Z.n_classes, "certificate": cert.to_dict()})
    return f"{cert.verdict}: defect {cert.four_point_defect!r}, loop area {cert.loop_area_max!r}"


def _numeric_check(res, tol, what):
    rel = res.gap / max(abs(res.rhs), 1e-300) if res.rhs else res.gap
    if rel > tol:
        raise NumericFailure(f"{what}: relative gap {rel:.3g} > {tol}")
    return rel


def cmd_area_check(args, cfg):
    f, _ = build_map(cfg)
    res = area.area_formula_check(f, None, cfg.rho)
    rel = res.gap / res.rhs if res.rhs else res.gap
    write_json(_out(cfg, "area.json"), {"config": cfg.to_dict(), "lhs": res.lhs, "rhs": res.rhs,
                                        "gap": res.gap, "relative_gap": rel, "tolerance": args.tol})
    _numeric_check(res, args.tol, "area formula")
    return f"area formula lhs {res.lhs!r} rhs {res.rhs!r}"


def cmd_coarea_check(args, cfg):
    f, _ = build_map(cfg)
    res = area.coarea_check(f)
    write_json(_out(cfg, "coarea.json"), {"config": cfg.to_dict(), "lhs": res.lhs, "rhs": res.rhs,
                                          "gap": res.gap, "tolerance": args.tol})
    if res.gap > args.tol:
        raise NumericFailure(f"coarea gap {res.gap:.3g} > {args.tol}")
    return f"coarea lhs {res.lhs!r} rhs {res.rhs!r}"


def read_curve_csv(path: str, closed: bool = False) -> Curve:
    """CSV with a header; first column the parameter, the rest coordinates."""
    arr = np.loadtxt(path, delimiter=",", skiprows=1, ndmin=2)
    if arr.shape[1] < 2:
        raise ValueError(f"{path}: need a parameter column and coordinates")
    return Curve(arr[:, 0], arr[:, 1:], closed)


def _write_curve(path: str, c: Curve) -> None:
    k = c.points.shape[1]
    n = (k - 1) // 2
    names = [f"x{j}" for j in range(n)] + [f"y{j}" for j in range(n)] + ["t"]
    write_csv(path, ["s"] + names, ([float(s), *map(float, p)] for s, p in zip(c.params, c.points)))


def cmd_heisenberg(args, cfg):
    if not args.curve:
        raise ConfigError("heisenberg needs at least one --curve CSV")
    curves = [read_curve_csv(p, args.closed) for p in args.curve]
    if args.action == "lift":
        out = []
        for i, c in enumerate(curves):
            lifted = heisenberg.horizontal_lift(c, args.t0)
            name = f"lift_{i}.csv"
            _write_curve(_out(cfg, name), lifted)
            out.append({"file": name, "delta_t": float(lifted.points[-1, -1] - lifted.points[0, -1])})
        write_json(_out(cfg, "heisenberg_lift.json"), {"config": cfg.to_dict(), "curves": out})
        return f"lifted {len(out)} curve(s)"
    if args.action == "check":
        out = []
        with warnings.catch_warnings():
            warnings.simplefilter("ignore", heisenberg.HorizontalityWarning)
            for c in curves:
                r = heisenberg.cc_length(c, args.tol)
                out.append({"cc_length": r.value, "defect": r.defect, "horizontal": r.horizontal})
        write_json(_out(cfg, "heisenberg_check.json"), {"config": cfg.to_dict(), "curves": out})
        if not all(o["horizontal"] for o in out):
            raise NumericFailure("a curve is not horizontal")
        return f"cc lengths {[o['cc_length'] for o in out]}"
    rho = 1e-3 if cfg.rho is None else cfg.rho
    res = heisenberg.projection_area_formula_check(curves, rho=rho, tol=args.tol)
    write_json(_out(cfg, "heisenberg_area.json"), {"config": cfg.to_dict(), "lhs": res.lhs, "rhs": res.rhs,
                                                   "gap": res.gap, "rho": rho})
    return f"projection area formula lhs {res.lhs!r} rhs {res.rhs!r}"


def cmd_dashboard(args, cfg):
    report = run_dashboard(cfg)
    emit_reports(report, cfg.out)
    return f"verdict {report.consistency['verdict']} (consistent: {report.consistent})"


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="lipfactor", description=__doc__.split("\n")[0])
    sub = parser.add_subparsers(dest="command", required=True)

    def add(name, fn, help_):
        p = sub.add_parser(name, help=help_)
        _common(p)
        p.set_defaults(func=fn)
        return p

    add("md-field", cmd_md_field, "metric derivative ranks and Jacobians")
    p = add("content", cmd_content, "mapping content by dyadic DP, or Hausdorff content of the image")
    p.add_argument("--n", type=int, default=2, help="image dimension n (m = d - n)")
    p.add_argument("--kind", choices=["mapping", "hausdorff"], default="mapping")
    p = add("verify-cover", cmd_verify_cover, "re-check a content.json certificate")
    p.add_argument("--report", required=True)
    add("factorize", cmd_factorize, "quotient space and factor checks")
    add("tree-check", cmd_tree_check, "four-point and loop-area tree certificate")
    p = add("area-check", cmd_area_check, "area formula with multiplicity")
    p.add_argument("--tol", type=float, default=1e-2, help="relative tolerance")
    p = add("coarea-check", cmd_coarea_check, "coarea formula for a scalar map")
    p.add_argument("--tol", type=float, default=1e-2)
    p = add("heisenberg", cmd_heisenberg, "horizontal lifts, cc lengths, projection area formula")
    p.add_argument("action", choices=["lift", "check", "area"])
    p.add_argument("--curve", action="append", default=[], help="CSV: s, coordinates")
    p.add_argument("--closed", action="store_true")
    p.add_argument("--t0", type=float, default=0.0)
    p.add_argument("--tol", type=float, default=None, help="horizontality tolerance")
    add("dashboard", cmd_dashboard, "six-condition tree dashboard")
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        cfg = config_from_args(args)
        msg = args.func(args, cfg)
    except ConfigError as exc:
        print(f"invalid configuration: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except OSError as exc:
        print(f"io error: {exc}", file=sys.stderr)
        return EXIT_IO
    except (NumericFailure, StageError, ValueError, ArithmeticError, np.linalg.LinAlgError) as exc:
        print(f"numeric failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    print(msg)
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
