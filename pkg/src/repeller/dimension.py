"""Pressure sums over preimage trees, the finite-depth Bowen zero, the
closed-form dimension ceiling and covering sums.

All sums are reduced with ``xsum`` (fixed balanced tree over leaves in
canonical order), so results are bit-identical across runs.
"""

from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass, field

import numpy as np

from .construction import Params, Scales
from .errors import BracketError, PartialTreeError, XDomainError
from .inverse import PreimageTree, build_tree
from .xnum import XComplex, XReal, render_decimal, render_exact, xlog2, xpow2, xsum

BOWEN_WIDTH = 1e-4
CLOSED_FORM_WIDTH = 1e-6
DEFAULT_T_RANGE = (1e-3, 1.5)


def _usable(tree: PreimageTree, t: float, depth: int | None) -> int:
    if tree.partial:
        raise PartialTreeError("tree is partial; some preimage solves failed")
    if not t > 0:
        raise XDomainError("t must be positive")
    d = tree.depth if depth is None else depth
    if not 0 <= d <= tree.depth:
        raise XDomainError(f"depth {d} outside 0..{tree.depth}")
    return d


def pressure_sum(tree: PreimageTree, t: float, depth: int | None = None) -> XReal:
    """``S_n(t) = sum over level-n nodes of |(F^n)'|^-t``."""
    d = _usable(tree, t, depth)
    return xsum(xpow2(-t * la) for la in tree.log2_acc(d))


def cover_sum(tree: PreimageTree, t: float, depth: int | None = None) -> XReal:
    """``sum (2 / |(F^n)'|)^t``: covering sum up to a depth-independent constant."""
    d = _usable(tree, t, depth)
    return xsum(xpow2(t * (1.0 - la)) for la in tree.log2_acc(d))


def ceiling(L: float, t: float) -> float:
    """Per-level bound ``L^-t / (1 - 2^-t)`` on the pressure sum."""
    return L ** -t / -math.expm1(-t * math.log(2))


def log_ceiling(L: float, t: float) -> float:
    return -t * math.log(L) - math.log(-math.expm1(-t * math.log(2)))


@dataclass
class PressureCurve:
    t_values: list
    S_n: list
    P_n: list
    depth: int
    base_point: XComplex
    L: float = math.nan

    def rows(self) -> list[dict]:
        out = []
        for t, s, pn in zip(self.t_values, self.S_n, self.P_n):
            out.append({
                "t": t,
                "S_n": {"decimal": render_decimal(s), "exact": render_exact(s)},
                "P_n": pn,
                "log_ceiling": log_ceiling(self.L, t),
            })
        return out

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["t", "log2_S_n", "P_n", "log_ceiling"])
        for t, s, pn in zip(self.t_values, self.S_n, self.P_n):
            w.writerow([repr(t), repr(xlog2(s)), repr(pn), repr(log_ceiling(self.L, t))])
        return buf.getvalue()


def pressure_curve(tree: PreimageTree, t_values, depth: int | None = None) -> PressureCurve:
    """``S_n`` and ``P_n = ln(S_n)/n`` at each t."""
    d = tree.depth if depth is None else depth
    if d < 1:
        raise XDomainError("pressure curve needs depth >= 1")
    ts = [float(t) for t in t_values]
    if any(not 0 < t <= 2 for t in ts):
        raise XDomainError("t values must lie in (0, 2]")
    sums = [pressure_sum(tree, t, d) for t in ts]
    pn = [xlog2(s) * math.log(2) / d for s in sums]
    return PressureCurve(ts, sums, pn, d, tree.root, tree.params.L)


def _bisect_decreasing(h, lo: float, hi: float, width: float) -> float:
    # h(lo) > 0 > h(hi), h decreasing
    while hi - lo > width:
        mid = 0.5 * (lo + hi)
        if h(mid) > 0:
            lo = mid
        else:
            hi = mid
    return 0.5 * (lo + hi)


def bowen_zero_of_tree(tree: PreimageTree, t_range=DEFAULT_T_RANGE, depth: int | None = None) -> float:
    """Root of ``S_n(t) = 1`` (equivalently ``P_n(t) = 0``) by bisection."""
    t_lo, t_hi = t_range

    def h(t):
        return xlog2(pressure_sum(tree, t, depth))

    if not (h(t_lo) > 0 > h(t_hi)):
        raise BracketError(
            f"P_n does not change sign on [{t_lo}, {t_hi}]; widen or shift the t range")
    return _bisect_decreasing(h, t_lo, t_hi, BOWEN_WIDTH)


def bowen_zero(p: Params, sc: Scales, a: XComplex, n: int, t_range=DEFAULT_T_RANGE,
               tree: PreimageTree | None = None) -> float:
    """Finite-depth Bowen zero ``t_n``: an estimate of the dimension of ``K_N``."""
    if tree is None:
        tree = build_tree(p, sc, a, n)
    return bowen_zero_of_tree(tree, t_range, n)


def closed_form_bound(C: float) -> float:
    """Root ``t*`` of ``L^-t = 1 - 2^-t`` with ``L = C/(4e)``.

    For every ``t > t*`` the pressure is negative, so ``t*`` bounds the
    dimension of every ``K_N`` at once (it does not depend on N).
    """
    L = C / (4.0 * math.e)
    if not L > 1:
        raise XDomainError(f"L = C/(4e) = {L:.6g} must exceed 1")
    lnL, ln2 = math.log(L), math.log(2)

    def h(t):
        # log of L^-t / (1 - 2^-t); positive below the root
        return -t * lnL - math.log(-math.expm1(-t * ln2))

    hi = 1.0
    while h(hi) > 0:
        hi *= 2
    return _bisect_decreasing(h, 0.0, hi, CLOSED_FORM_WIDTH)


def cover_ratios(tree: PreimageTree, t_values) -> list[dict]:
    """``cover_sum(n) / cover_sum(n-1)`` at the deepest two levels."""
    n = tree.depth
    if n < 2:
        raise XDomainError("cover ratios need depth >= 2")
    out = []
    for t in t_values:
        lr = xlog2(cover_sum(tree, t, n)) - xlog2(cover_sum(tree, t, n - 1))
        out.append({"t": float(t), "ratio": 2.0 ** lr, "ceiling": ceiling(tree.params.L, t)})
    return out


def default_t_grid(count: int = 20, lo: float = 0.05, hi: float = 1.5) -> np.ndarray:
    return np.linspace(lo, hi, count)
