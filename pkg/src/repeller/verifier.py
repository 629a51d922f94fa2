"""Numerical check of every inequality used to build the annulus scheme.

Each check is reported as a signed log2 margin in the direction the
inequality asserts, so ``pass`` is simply ``margin_log2 > 0``.  Non-strict
inequalities that hold with equality (``a_2/a_1 = 8C`` exactly) get a slack
of ``EQ_SLACK`` bits.

These are high-precision numerical checks at finitely many sample points,
not interval-arithmetic proofs.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field

import numpy as np

from .construction import (
    Params,
    Scales,
    build_scales,
    eval_f_batch,
    eval_f_prime,
    log_derivative,
)
from .errors import ConstructionError, XDomainError, XRangeError
from .xnum import XCArray, XComplex, XReal, xdiv, xlog2, xmul

EQ_SLACK = 1e-9
LOGDERIV_TOL = 1e-6
ZERO_FREE_GRID = 128
INTERIOR_SAMPLES = 64
# finite stand-in for log2 of a value with the wrong sign
_WRONG_SIGN = -1074.0

_STREAM_GAPS = 1
_STREAM_DERIV = 2


@dataclass
class CheckResult:
    name: str
    k: int
    lhs_log2: float
    rhs_log2: float
    margin_log2: float
    passed: bool
    reason: str = ""

    def to_dict(self) -> dict:
        return {
            "name": self.name,
            "k": self.k,
            "lhs_log2": self.lhs_log2,
            "rhs_log2": self.rhs_log2,
            "margin_log2": self.margin_log2,
            "pass": self.passed,
            "reason": self.reason,
        }


@dataclass
class VerificationReport:
    params: Params
    seed: int
    checks: list = field(default_factory=list)
    error: str = ""

    @property
    def all_pass(self) -> bool:
        return bool(self.checks) and all(c.passed for c in self.checks) and not self.error

    def failures(self) -> list:
        return [c for c in self.checks if not c.passed]

    def to_dict(self) -> dict:
        doc = {
            "params": self.params.to_dict(),
            "seed": self.seed,
            "checks": [c.to_dict() for c in self.checks],
            "all_pass": self.all_pass,
        }
        if self.error:
            doc["error"] = self.error
        return doc

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2) + "\n"


def _result(name, k, lhs, rhs, direction, strict=True, reason=""):
    margin = lhs - rhs if direction == ">" else rhs - lhs
    if not strict:
        margin += EQ_SLACK
    return CheckResult(name, k, float(lhs), float(rhs), float(margin), margin > 0 and not reason, reason)


def _log2x(x: XReal) -> float:
    return xlog2(x)


def _rng(seed: int, stream: int) -> np.random.Generator:
    return np.random.default_rng([seed, stream])


# ---------------------------------------------------------------------------


def check_growth(sc: Scales, N: int) -> list[CheckResult]:
    """``a_{k+1}/a_k >= (8C)^k`` and ``a_{k+1}/a_k > 320 e (k+1)`` for k = 1..N+1."""
    out = []
    log2_8c = math.log2(8.0 * sc.C)
    for k in range(1, N + 2):
        ratio = _log2x(sc.a[k + 1]) - _log2x(sc.a[k])
        out.append(_result("growth_power", k, ratio, k * log2_8c, ">", strict=False))
        out.append(_result("growth_linear", k, ratio, math.log2(320 * math.e * (k + 1)), ">"))
    return out


def check_tails(sc: Scales, N: int) -> list[CheckResult]:
    """Products of ``1 +- 10 a_k/a_j`` over j > k, including the analytic tail past M."""
    out = []
    geo = 1.0 / (1.0 - 1.0 / (8.0 * sc.C))
    for k in range(1, N + 1):
        ten_ak = xmul(sc.a[k], XReal.from_float(10.0))
        xs = [float(xdiv(ten_ak, sc.a[j])) for j in range(k + 1, sc.M + 1)]
        tail = float(xdiv(ten_ak, sc.a_next)) * geo
        upper = (sum(math.log1p(x) for x in xs) + tail) / math.log(2)
        lower = (sum(math.log1p(-x) for x in xs) + math.log1p(-tail)) / math.log(2)
        out.append(_result("tail_upper", k, upper, 1.0, "<", strict=False))
        out.append(_result("tail_lower", k, lower, math.log2(0.9), ">", strict=False))
    return out


def _circle(radius: XReal, n: int) -> XCArray:
    theta = 2.0 * np.pi * np.arange(n) / n
    return XCArray(radius.sig * np.cos(theta), radius.sig * np.sin(theta), np.full(n, radius.exp))


def _image_extremes(p: Params, sc: Scales, z: XCArray) -> tuple[float, float, str]:
    val, rel = eval_f_batch(p, sc, z)
    mags = val.log2abs()
    reason = "inconclusive" if float(rel.max()) > p.tail_tol else ""
    return float(mags.min()), float(mags.max()), reason


def check_circle_maps(p: Params, sc: Scales, N: int, seed: int = 0) -> list[CheckResult]:
    """Images of the circles ``|z| = r_k`` and ``|z| = s_k`` and of gap interiors.

    On ``|z| = r_k`` (k >= 1) the image must lie in ``B_k``; on ``|z| = s_k``
    (k >= 0) in ``B_{k+1}``.  The intermediate analytic bounds of the argument
    are recorded as separate checks.  Interior points of ``B_k`` (k >= 1) are
    sampled to test ``f(B_k) in B_{k+1}`` directly.
    """
    n = p.samples_per_circle
    out = []
    for k in range(1, N + 1):
        lo, hi, why = _image_extremes(p, sc, _circle(sc.r[k], n))
        a_next = _log2x(sc.a[k + 1])
        floor = a_next - math.log2(32 * math.e * (k + 1))
        out.append(_result("r_circle_above_s", k, lo, sc.log2_s(k), ">", reason=why))
        out.append(_result("r_circle_below_next_r", k, hi, sc.log2_r(k + 1), "<", reason=why))
        out.append(_result("r_circle_max_bound", k, hi, a_next - 1.0, "<", strict=False, reason=why))
        out.append(_result("r_circle_min_floor", k, lo, floor, ">", strict=False, reason=why))
        out.append(_result("r_floor_above_s", k, floor, sc.log2_s(k), ">"))
    for k in range(0, N + 1):
        lo, hi, why = _image_extremes(p, sc, _circle(sc.s[k], n))
        out.append(_result("s_circle_above_next_s", k, lo, sc.log2_s(k + 1), ">", reason=why))
        out.append(_result("s_circle_below_r", k, hi, sc.log2_r(k + 2), "<", reason=why))
        if k == 0:
            bound = math.log2(16.0 * 9.0 / 10.0)
        else:
            bound = (k + 1) * math.log2(9.0) + _log2x(sc.a[k + 1]) - 3.0
        out.append(_result("s_circle_min_bound", k, lo, bound, ">", strict=False, reason=why))
        out.append(_result("s_bound_above_next_s", k, bound, sc.log2_s(k + 1), ">"))
    rng = _rng(seed, _STREAM_GAPS)
    for k in range(1, N + 1):
        u = rng.random(INTERIOR_SAMPLES)
        theta = rng.uniform(-np.pi, np.pi, INTERIOR_SAMPLES)
        lo_r, hi_r = sc.log2_s(k), sc.log2_r(k + 1)
        rho = lo_r + (hi_r - lo_r) * (0.001 + 0.998 * u)
        lo, hi, why = _image_extremes(p, sc, XCArray.from_polar(rho, theta))
        out.append(_result("gap_interior_above_next_s", k, lo, sc.log2_s(k + 1), ">", reason=why))
        out.append(_result("gap_interior_below_r", k, hi, sc.log2_r(k + 2), "<", reason=why))
    return out


def _geometric(lo: XReal, hi: XReal, n: int, include_lo: bool) -> list[XReal]:
    llo, lhi = xlog2(lo), xlog2(hi)
    steps = range(0, n) if include_lo else range(1, n + 1)
    pts = []
    for i in steps:
        t = i / n
        pts.append(xmul(lo, _pow2(t * (lhi - llo))))
    return pts


def _pow2(y: float) -> XReal:
    e = math.floor(y)
    return XReal(1, 2.0 ** (y - e), e)


def check_zero_free(p: Params, sc: Scales, N: int) -> list[CheckResult]:
    """Sign of ``x f'(x)/f(x)`` on both sides of each zero ``a_k``.

    ``<= -2`` on ``[r_k, a_k)`` and ``>= 1/2`` on ``(a_k, s_k]`` (for k = 0 the
    interval is ``(0, s_0]``), so f' has no zero on ``[r_k, s_k]``.
    """
    out = []
    for k in range(0, N + 1):
        if k >= 1:
            vals = [log_derivative(p, sc, x) for x in _geometric(sc.r[k], sc.a[k], ZERO_FREE_GRID, True)]
            worst = max(vals)
            lhs = math.log2(-worst) if worst < 0 else _WRONG_SIGN
            out.append(_result("logderiv_inner", k, lhs, math.log2(2.0 - LOGDERIV_TOL), ">"))
            left = sc.a[k]
        else:
            left = xmul(sc.s[0], _pow2(-64.0))
        vals = [log_derivative(p, sc, x) for x in _geometric(left, sc.s[k], ZERO_FREE_GRID, k == 0)]
        worst = min(vals)
        lhs = math.log2(worst) if worst > 0 else _WRONG_SIGN
        out.append(_result("logderiv_outer", k, lhs, math.log2(0.5 - LOGDERIV_TOL), ">"))
    return out


def _fprime_log2(p: Params, sc: Scales, z: XComplex) -> tuple[float, bool]:
    fv = eval_f_prime(p, sc, z)
    return xlog2(fv.value.abs()), fv.flagged


def check_derivative_floor(p: Params, sc: Scales, N: int, seed: int = 0,
                           zero_free: list[CheckResult] | None = None) -> list[CheckResult]:
    """``|f'| >= 2^k L`` on ``A_k``: at the interval endpoints and at random points.

    The endpoint check relies on the zero-free check; when that failed for
    some k the endpoint result is reported as a precondition failure.
    """
    out = []
    bad_k = {c.k for c in (zero_free or []) if not c.passed}
    log2_L = xlog2(sc.L)
    rng = _rng(seed, _STREAM_DERIV)
    for k in range(0, N + 1):
        rhs = k + log2_L
        ends = [sc.s[k]] if k == 0 else [sc.r[k], sc.s[k]]
        vals, flagged = [], False
        if k == 0:
            vals.append(math.log2(p.C))  # f'(0) = C exactly
        for x in ends:
            v, fl = _fprime_log2(p, sc, XComplex(x))
            vals.append(v)
            flagged |= fl
        reason = "precondition" if k in bad_k else ("inconclusive" if flagged else "")
        out.append(_result("deriv_floor_endpoints", k, min(vals), rhs, ">", strict=False, reason=reason))

        u = rng.random(INTERIOR_SAMPLES)
        theta = rng.uniform(-np.pi, np.pi, INTERIOR_SAMPLES)
        hi_r = sc.log2_s(k)
        lo_r = hi_r - 20.0 if k == 0 else sc.log2_r(k)
        vals, flagged = [], False
        for rho, th in zip(lo_r + (hi_r - lo_r) * u, theta):
            v, fl = _fprime_log2(p, sc, XComplex.from_polar(float(rho), float(th)))
            vals.append(v)
            flagged |= fl
        out.append(_result("deriv_floor_interior", k, min(vals), rhs, ">", strict=False,
                           reason="inconclusive" if flagged else ""))
    return out


def run_all(p: Params, seed: int = 0) -> VerificationReport:
    report = VerificationReport(params=p, seed=seed)
    try:
        sc = build_scales(p)
    except (ConstructionError, XRangeError, XDomainError) as exc:
        report.error = f"{type(exc).__name__}: {exc}"
        return report
    N = p.N
    report.checks.extend(check_growth(sc, N))
    report.checks.extend(check_tails(sc, N))
    report.checks.extend(check_circle_maps(p, sc, N, seed))
    zf = check_zero_free(p, sc, N)
    report.checks.extend(zf)
    report.checks.extend(check_derivative_floor(p, sc, N, seed, zf))
    return report
