"""Acceptance criteria, each at its stated tolerance.

A one-line PASS/FAIL summary per criterion is printed at the end of the
pytest run (see ``pytest_terminal_summary`` in conftest).
"""

import io
import json
import math
import subprocess
import sys
import time
from contextlib import redirect_stdout

import numpy as np
import pytest

from repeller.cli import main
from repeller.construction import Params, build_scales, eval_f
from repeller.dimension import ceiling, closed_form_bound, cover_ratios, bowen_zero_of_tree, default_t_grid, pressure_sum
from repeller.dynamics import iterate
from repeller.inverse import annulus_region, argument_change, preimages, residual
from repeller.verifier import run_all
from repeller.xnum import ONE, XComplex, XReal, xc_polar, xlog2, xmul

from conftest import record

GROWTH_CHECKS = {"growth_power", "growth_linear"}


def _cli_json(*argv):
    buf = io.StringIO()
    with redirect_stdout(buf):
        code = main(list(argv))
    return code, json.loads(buf.getvalue())


# --- 1 -----------------------------------------------------------------------------


def test_1a_flagship_verify_passes_quickly():
    t0 = time.perf_counter()
    code, doc = _cli_json("verify", "--C", "2000", "--N", "5", "--samples", "256")
    elapsed = time.perf_counter() - t0
    worst = min(c["margin_log2"] for c in doc["checks"])
    ok = code == 0 and doc["all_pass"] and worst > 0 and elapsed < 60
    record(1, "verify C=2000 N=5", ok, f"{len(doc['checks'])} checks, min margin {worst:.3g} bits, {elapsed:.1f}s")
    assert ok


def test_1b_small_c_fails_exactly_growth_checks():
    with pytest.warns(UserWarning):
        p = Params(C=50.0, N=3)
    rep = run_all(p)
    failed = sorted({(c.name, c.k) for c in rep.failures()})
    names = {n for n, _ in failed}
    ok = bool(failed) and names <= GROWTH_CHECKS and names & GROWTH_CHECKS
    record(1, "C=50 fails only growth", ok, "failed " + ", ".join(f"{n}[{k}]" for n, k in failed))
    assert ok, failed


def test_1c_margins_monotone_in_c():
    reps = [{(c.name, c.k): c.margin_log2 for c in run_all(Params(C=C, N=3)).checks} for C in (2000.0, 4000.0, 8000.0)]
    bad = []
    for key in reps[0]:
        m = [r[key] for r in reps]
        d = np.diff(m)
        if not (np.all(d >= -1e-12) or np.all(d <= 1e-12)):
            bad.append(key)
    record(1, "margins monotone in C", not bad, f"{len(reps[0])} checks, {len(bad)} non-monotone")
    assert not bad


# --- 2 -----------------------------------------------------------------------------


def test_2_preimage_counts(p2000, sc2000):
    rng = np.random.default_rng(2024)
    ks = [1, 2, 3, 1, 3]
    worst_res, worst_wind, errors = 0.0, 0.0, []
    for k in ks:
        lo, hi = sc2000.log2_r(k), sc2000.log2_s(k)
        a = XComplex.from_polar(float(rng.uniform(lo, hi)), float(rng.uniform(-np.pi, np.pi)))
        sols, counts = preimages(p2000, sc2000, a)
        for j in range(p2000.N + 1):
            turns = argument_change(p2000, sc2000, annulus_region(sc2000, j), a) / (2 * math.pi)
            worst_wind = max(worst_wind, abs(turns - round(turns)))
        if sum(counts) != p2000.N + 1 or len(sols) != p2000.N + 1:
            errors.append(f"k={k} total {sum(counts)}")
        if any(counts[j] != 1 for j in range(k, p2000.N + 1)):
            errors.append(f"k={k} counts {counts}")
        if any(counts[j] != 0 for j in range(0, k - 1)):
            errors.append(f"k={k} counts {counts}")
        worst_res = max([worst_res] + [residual(p2000, sc2000, b, a) for b, _ in sols])
    ok = not errors and worst_wind < 1e-3 and worst_res < 1e-10
    record(2, "five base points", ok,
           f"max residual {worst_res:.2e}, max winding defect {worst_wind:.2e} turns" + (f", {errors}" if errors else ""))
    assert ok


# --- 3 -----------------------------------------------------------------------------


def test_3_pressure_ceiling(tree5, p2000):
    worst = -math.inf
    for t in default_t_grid(20):
        lhs = xlog2(pressure_sum(tree5, float(t)))
        rhs = 5 * math.log2(ceiling(p2000.L, float(t))) + math.log2(1 + 1e-9)
        worst = max(worst, lhs - rhs)
    ok = worst <= 0 and not tree5.partial
    record(3, "depth-5 tree, 20 t values", ok, f"max log2(S_5 / ceiling^5) = {worst:.3f}")
    assert ok


# --- 4 -----------------------------------------------------------------------------


def test_4_dimension_bounds(tree5):
    t2000, t1e5 = closed_form_bound(2000.0), closed_form_bound(1e5)
    seq = [closed_form_bound(C) for C in (1e3, 1e5, 1e9)]
    t5 = bowen_zero_of_tree(tree5)
    ok = 0.29 < t2000 < 0.33 and 0.20 < t1e5 < 0.23 and seq[0] > seq[1] > seq[2] and t5 <= t2000 + 0.02
    record(4, "closed form and Bowen zero", ok,
           f"t*(2000)={t2000:.4f}, t*(1e5)={t1e5:.4f}, t*(1e3,1e5,1e9)=({seq[0]:.4f}, {seq[1]:.4f}, {seq[2]:.4f}), "
           f"t_5={t5:.4f}")
    assert ok


# --- 5 -----------------------------------------------------------------------------


def test_5_escape_certification(p2000, sc2000):
    rng = np.random.default_rng(5)
    bad = 0
    for _ in range(1000):
        k = int(rng.integers(1, 5))
        lo, hi = sc2000.log2_s(k), sc2000.log2_r(k + 1)
        rho = lo + (hi - lo) * rng.uniform(1e-9, 1 - 1e-9)
        z = XComplex.from_polar(float(rho), float(rng.uniform(-np.pi, np.pi)))
        rec = iterate(p2000, sc2000, z)
        v = rec.verdict
        if v.kind != "EscapeCertified" or v.entry_step != 0 or v.entry_k != k:
            bad += 1
            continue
        tail = rec.itinerary[v.entry_step:]
        gaps = [r for r in tail if r.kind == "B"]
        climbing = all(b.k == a.k + 1 for a, b in zip(gaps, gaps[1:]))
        only_beyond_after = all(r.kind == "BeyondTop" for r in tail[len(gaps):])
        if not (climbing and only_beyond_after and len(gaps) >= 2):
            bad += 1
    record(5, "1000 gap points", bad == 0, f"{bad} exceptions")
    assert bad == 0


# --- 6 -----------------------------------------------------------------------------


def test_6_covering_decay(tree5):
    t_star = closed_form_bound(2000.0)
    rows = cover_ratios(tree5, [t_star + 0.05, 1.0])
    ok = all(r["ratio"] <= r["ceiling"] + 1e-9 and r["ratio"] < 1 for r in rows)
    record(6, "depth 4 to 5 ratios", ok,
           ", ".join(f"t={r['t']:.3f}: {r['ratio']:.4f} <= {r['ceiling']:.4f}" for r in rows))
    assert ok


# --- 7 -----------------------------------------------------------------------------


def test_7a_product_chains():
    rng = np.random.default_rng(7)
    worst = 0.0
    for _ in range(20):
        sig = rng.uniform(1.0, 2.0, 1000)
        exp = rng.integers(-10 ** 6, 10 ** 6 + 1, 1000)
        acc = ONE
        for s, e in zip(sig, exp):
            acc = xmul(acc, XReal(1, float(s), int(e)))
        oracle = math.fsum(np.log2(sig)) + int(exp.sum())
        worst = max(worst, abs(xlog2(acc) - oracle))
    record(7, "product chains", worst < 1e-9, f"max |log2 error| {worst:.2e}")
    assert worst < 1e-9


def test_7b_truncation_within_reported_error():
    # M = 9 factors against 18; twice the default N + 8 overflows the exponent range
    p, p2 = Params(C=2000.0, N=3, M=9), Params(C=2000.0, N=3, M=18)
    sc, sc2 = build_scales(p), build_scales(p2)
    rng = np.random.default_rng(77)
    bad, worst = 0, -math.inf
    for rho, th in zip(rng.uniform(-12.0, sc.log2_s(3), 100), rng.uniform(-np.pi, np.pi, 100)):
        z = XComplex.from_polar(float(rho), float(th))
        fa, fb = eval_f(p, sc, z), eval_f(p2, sc2, z)
        diff = fa.value - fb.value
        if diff.is_zero():
            continue
        gap = xc_polar(diff)[0] - xc_polar(fb.value)[0] - math.log2(fa.rel_err)
        worst = max(worst, gap)
        bad += gap >= 0
    record(7, "M vs 2M truncation", bad == 0, f"max log2(difference / rel_err) = {worst:.2f}")
    assert bad == 0


# --- 8 -----------------------------------------------------------------------------


@pytest.mark.parametrize("argv", [
    ["verify", "--C", "2000", "--N", "3", "--seed", "11"],
    ["dimension", "--C", "2000", "--N", "3", "--depth", "3"],
    ["render", "--C", "2000", "--N", "3", "--res", "48,96"],
])
def test_8_determinism(tmp_path, argv):
    blobs = []
    for run in range(2):
        out = tmp_path / f"run{run}.out"
        res = subprocess.run([sys.executable, "-m", "repeller", *argv, "--out", str(out)], capture_output=True)
        assert res.returncode == 0, res.stderr
        blob = out.read_bytes()
        blobs.append(blob.replace(str(out).encode(), b"OUT"))
    ok = blobs[0] == blobs[1]
    record(8, argv[0], ok, f"{len(blobs[0])} bytes")
    assert ok
