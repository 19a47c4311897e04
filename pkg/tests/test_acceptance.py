"""Acceptance criteria 1-12, one PASS/FAIL line each.

Run under pytest (lines are printed even when output is captured) or as a
script: ``python3 tests/test_acceptance.py``.
"""

import math
import os
import sys
import tempfile
import time

import numpy as np
import pytest

from lipfactor import heisenberg as H
from lipfactor.area import area_formula_check, coarea_check, length_preserving_check, oriented_area, stokes_check
from lipfactor.builtins import make_builtin
from lipfactor.cli import main
from lipfactor.content import mapping_content_dp
from lipfactor.curves import Curve
from lipfactor.quotient import factor_check, pullback_metric, quotient, tree_certificate
from lipfactor.sampled_map import from_function
from lipfactor.seminorm import Seminorm, ball_volume_exact, ball_volume_mc, jacobian

sys.path.insert(0, os.path.dirname(__file__))
from test_content import brute_force, random_map  # noqa: E402


def criterion_1():
    f, oracle = make_builtin("projection", 33, 3)
    errs = []
    t5 = 0.0
    for depth in range(6):
        t = time.perf_counter()
        v = mapping_content_dp(f, None, 2, 1, depth, oracle(2)).value
        t5 = time.perf_counter() - t
        errs.append(abs(v - math.sqrt(3)))
    ok = max(errs) <= 1e-12 and t5 < 5
    return ok, f"max |value - sqrt3| = {max(errs):.2e} over depths 0..5, depth-5 time {t5:.2f}s"


def criterion_2():
    f, oracle = make_builtin("coordinate", 33, 3)
    exact = [mapping_content_dp(f, None, 2, 1, k, oracle(2)).value for k in range(5)]
    sampled = mapping_content_dp(f, None, 2, 1, 4).value
    ok = all(v == 0.0 for v in exact) and sampled <= 0.05
    return ok, f"oracle values {exact}, sampled depth-4 value {sampled:.4f} (<= 0.05)"


def criterion_3():
    checked = 0
    ok = True
    for d in (2, 3):
        rng = np.random.default_rng(100 + d)
        for trial in range(20):
            f = random_map(rng, d, 5 if trial % 2 else 9)
            for depth in (0, 1, 2):
                ok &= mapping_content_dp(f, None, 2, d - 2, depth).value == brute_force(f, 2, d - 2, depth)
                checked += 1
    return bool(ok), f"{checked} DP values equal exhaustive enumeration exactly"


def criterion_4():
    N = 3001
    f, _ = make_builtin("plateau", N)
    Z = quotient(pullback_metric(f))
    target = 2 * N / 3 + 1
    cls_err = abs(Z.n_classes - target) / target
    dz = Z.distance(Z.psi[0], Z.psi[-1])
    cert = tree_certificate(f, Z)
    ok = cls_err <= 0.01 and abs(dz - 2) <= 5e-3 and cert.four_point_defect <= 1e-3 and factor_check(f, Z)["ok"]
    return ok, (f"{Z.n_classes} classes (target {target:.0f}, rel err {cls_err:.1e}), d_Z = {dz:.6f}, "
                f"defect {cert.four_point_defect:.1e}")


def criterion_5():
    defects, times, ok = [], [], True
    for N in (17, 33, 65):
        t = time.perf_counter()
        f, _ = make_builtin("sine", N, 2)
        cert = tree_certificate(f, quotient(pullback_metric(f)))
        defects.append(cert.four_point_defect)
        ok &= cert.four_point_defect <= 8 * f.h
        g, _ = make_builtin("identity", N, 2)
        neg = tree_certificate(g, quotient(pullback_metric(g)))
        ok &= neg.four_point_defect >= 0.5 and neg.loop_area_max >= 0.5
        times.append(time.perf_counter() - t)
    ok &= all(b <= a / 1.8 for a, b in zip(defects, defects[1:]))
    ok &= max(times) < 30
    return bool(ok), (f"sine defects {defects} at N=17,33,65, identity defect and loop area >= 0.5, "
                      f"max time {max(times):.2f}s")


def criterion_6():
    f, _ = make_builtin("fold", 10_000)
    res = area_formula_check(f, rho=3 * f.h * f.lipschitz)
    gap = abs(res.lhs - res.rhs) / res.rhs
    return gap <= 1e-2, f"lhs {res.lhs:.6f}, rhs {res.rhs:.6f}, relative gap {gap:.1e}"


def criterion_7():
    res = coarea_check(from_function(2, 201, lambda p: p[:, 0] ** 2))
    gap = abs(res.lhs - res.rhs)
    return gap <= 1e-2, f"lhs {res.lhs:.6f}, rhs {res.rhs:.6f}, gap {gap:.1e}"


def criterion_8():
    j = jacobian(Seminorm(np.eye(2), 2), 1_000_000, seed=0)
    rel = abs(j - math.pi / 4) / (math.pi / 4)
    rng = np.random.default_rng(11)
    worst = 0.0
    for k in range(10):
        n = 2 + k % 2
        s = Seminorm(rng.normal(size=(n + 3, n)), n)
        vol, err = ball_volume_mc(s, 200_000, seed=k)
        exact = ball_volume_exact(s)
        worst = max(worst, abs(vol - exact) / (err if err > 0 else math.inf))
    return rel <= 1e-2 and worst <= 3, f"MC J = {j:.5f} (rel err {rel:.1e}), worst exact-vs-MC {worst:.2f} sigma"


def criterion_9():
    s = np.linspace(0, 2 * np.pi, 10_001)
    xy = 0.5 * np.column_stack([np.cos(s), np.sin(s)])
    xy[-1] = xy[0]
    c = H.horizontal_lift(Curve(s, xy))
    dt = c.points[-1, -1] - c.points[0, -1]
    L = H.cc_length(c).value
    u = np.linspace(0, 1, 1001)
    seg = Curve(u, np.column_stack([u, 0 * u]))
    res = H.projection_area_formula_check([H.horizontal_lift(seg, 0.0), H.horizontal_lift(seg, 1.0)])
    ok = abs(dt + math.pi) <= 1e-6 and abs(L - math.pi) <= 1e-6 and abs(res.lhs - res.rhs) <= 1e-3
    return ok, f"delta t = {dt:.9f}, cc length = {L:.9f}, doubled segment lhs {res.lhs:.4f} rhs {res.rhs:.4f}"


def criterion_10():
    f, _ = make_builtin("spiral", 2001)
    pos = length_preserving_check(H.project, f)
    neg = length_preserving_check(lambda q: 2 * H.project(q), f)
    ok = pos["conclusion_holds"] and pos["md_fraction_within"] >= 0.99 and neg["hypothesis_fails"]
    return bool(ok), (f"md agreement at {100 * pos['md_fraction_within']:.2f}% of points, "
                      f"control length ratio {neg['length_ratio_min']:.3f} flagged")


def criterion_11():
    th = np.linspace(0, 2 * np.pi, 10_001)
    pts = np.column_stack([np.cos(th), np.sin(th)])
    pts[-1] = pts[0]
    a = oriented_area(Curve(th, pts, closed=True))
    eight = np.column_stack([np.sin(th), np.sin(th) * np.cos(th)])
    eight[-1] = eight[0]
    a8 = oriented_area(Curve(th, eight, closed=True))

    def gamma(v):
        u = np.sin(3 * v[:, 0]) + v[:, 0] * v[:, 1]
        return np.column_stack([u, 2 * u])

    b = np.linspace(0, 2 * np.pi, 2001)
    disk = np.column_stack([np.cos(b), np.sin(b)])
    disk[-1] = disk[0]
    res = stokes_check(gamma, Curve(b, gamma(disk), closed=True))
    ok = abs(a - math.pi) <= 1e-6 and abs(a8) <= 1e-4 and res.rhs == 0.0
    return ok, f"circle {a:.9f}, figure-eight {a8:.1e}, rank-1 interior area {res.rhs}"


def criterion_12():
    with tempfile.TemporaryDirectory() as tmp:
        s = np.linspace(0, 2 * np.pi, 201)
        curve = os.path.join(tmp, "c.csv")
        np.savetxt(curve, np.column_stack([s, np.cos(s), np.sin(s)]), delimiter=",", header="s,x,y", comments="")
        commands = [
            ["md-field", "--map", "sine", "--grid", "9"],
            ["content", "--map", "projection", "--grid", "17", "--depth", "3"],
            ["content", "--map", "identity", "--grid", "9", "--kind", "hausdorff"],
            ["factorize", "--map", "plateau", "--grid", "31"],
            ["tree-check", "--map", "identity", "--grid", "9"],
            ["area-check", "--map", "fold", "--grid", "1001"],
            ["coarea-check", "--map", "coordinate", "--dim", "2", "--grid", "21"],
            ["heisenberg", "lift", "--curve", curve],
            ["dashboard", "--map", "sine", "--grid", "17", "--depth", "3"],
        ]
        bad = []
        for k, argv in enumerate(commands):
            out = os.path.join(tmp, f"run{k}")
            snaps = []
            for _ in range(2):
                if main(argv + ["--out", out, "--seed", "7"]) != 0:
                    bad.append(argv[0])
                snaps.append({n: open(os.path.join(out, n), "rb").read() for n in sorted(os.listdir(out))})
            if snaps[0] != snaps[1] or not snaps[0]:
                bad.append(argv[0])
    return not bad, f"{len(commands)} commands rerun byte-identical" if not bad else f"differing: {bad}"


CRITERIA = [criterion_1, criterion_2, criterion_3, criterion_4, criterion_5, criterion_6,
            criterion_7, criterion_8, criterion_9, criterion_10, criterion_11, criterion_12]


def _line(k, ok, detail):
    return f"{'PASS' if ok else 'FAIL'} criterion {k}: {detail}"


@pytest.mark.parametrize("k", range(1, 13))
def test_criterion(k, capsys):
    ok, detail = CRITERIA[k - 1]()
    with capsys.disabled():
        print("\n" + _line(k, ok, detail))
    assert ok, detail


if __name__ == "__main__":
    results = [(k, *fn()) for k, fn in enumerate(CRITERIA, start=1)]
    for k, ok, detail in results:
        print(_line(k, ok, detail))
    sys.exit(0 if all(ok for _, ok, _ in results) else 1)
