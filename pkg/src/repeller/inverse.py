"""Preimages under f inside the annuli A_0..A_N.

Solutions of ``f(z) = a`` are counted by tracking the continuous argument of
``f(z) - a`` along region boundaries (exponent-free, so huge moduli are
harmless), isolated by bisection in log-polar coordinates, and polished by
Newton's method.  ``build_tree`` repeats this to depth n and accumulates
``|(F^n)'|`` along every branch.
"""

from __future__ import annotations

import json
import math
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .construction import (
    Params,
    RegionIndex,
    Scales,
    cached_scales,
    eval_f_batch,
    anchored_point,
    eval_f_anchored,
    eval_f_prime_anchored,
)
from .errors import BudgetError, GeometryError, NumericalFailure, XDomainError
from .xnum import ONE, XCArray, XComplex, XReal, render_decimal, render_exact, xc_polar, xlog2, xmul

TWO_PI = 2.0 * math.pi
# full sectors start here so that neither real half-axis is ever an edge
SEAM = -math.pi + 0.0917
WINDING_TOL = 1e-3
ISOLATION_DIAMETER = 1e-3
DISTINCT = 1e-8
RESIDUAL_TOL = 1e-10
NEWTON_STEPS = 64
MAX_BISECT_DEPTH = 80
DEFAULT_BUDGET = 10 ** 6

_ARG_STEP = math.pi / 2
_LOG2_STEP = 4.0
_MIN_PARAM_GAP = 1e-13
_MAX_POINTS = 1 << 16


class _BoundaryZero(Exception):
    pass


@dataclass(frozen=True)
class SectorRegion:
    """``{2^lo <= |z| <= 2^hi, theta_lo <= arg z <= theta_hi}``; ``lo = -inf`` is a disk."""

    log2_r_lo: float
    log2_r_hi: float
    theta_lo: float
    theta_hi: float

    def __post_init__(self):
        if not self.log2_r_lo < self.log2_r_hi:
            raise XDomainError("sector needs log2_r_lo < log2_r_hi")
        width = self.theta_hi - self.theta_lo
        if not (0 < width <= TWO_PI + 1e-12):
            raise XDomainError("sector needs 0 < theta_hi - theta_lo <= 2 pi")
        if self.is_disk and not self.is_full:
            raise XDomainError("disk sectors are not supported")

    @property
    def is_full(self) -> bool:
        return self.theta_hi - self.theta_lo >= TWO_PI - 1e-12

    @property
    def is_disk(self) -> bool:
        return self.log2_r_lo == -math.inf

    def diameter(self) -> float:
        """Diameter in the conformal log-polar metric (natural log-radius, angle)."""
        if self.is_disk:
            return math.inf
        return math.hypot(math.log(2) * (self.log2_r_hi - self.log2_r_lo), self.theta_hi - self.theta_lo)

    def center(self) -> XComplex:
        if self.is_disk:
            return XComplex(XReal(0, 1.0, 0))
        return XComplex.from_polar(0.5 * (self.log2_r_lo + self.log2_r_hi), 0.5 * (self.theta_lo + self.theta_hi))

    def contains(self, z: XComplex) -> bool:
        if z.is_zero():
            return self.is_disk
        rho, theta = xc_polar(z)
        if rho > self.log2_r_hi or (not self.is_disk and rho < self.log2_r_lo):
            return False
        if self.is_full:
            return True
        t = self.theta_lo + (theta - self.theta_lo) % TWO_PI
        return t <= self.theta_hi

    def shifted(self, d_log2_r: float) -> "SectorRegion":
        return SectorRegion(self.log2_r_lo + d_log2_r, self.log2_r_hi + d_log2_r, self.theta_lo, self.theta_hi)

    def edges(self) -> list[tuple[float, float, float, float]]:
        """Boundary pieces ``(rho0, rho1, theta0, theta1)``, positively oriented."""
        lo, hi, t0, t1 = self.log2_r_lo, self.log2_r_hi, self.theta_lo, self.theta_hi
        if self.is_disk:
            return [(hi, hi, t0, t0 + TWO_PI)]
        if self.is_full:
            return [(hi, hi, t0, t0 + TWO_PI), (lo, lo, t0 + TWO_PI, t0)]
        return [(hi, hi, t0, t1), (hi, lo, t1, t1), (lo, lo, t1, t0), (lo, hi, t0, t0)]


def annulus_region(sc: Scales, j: int) -> SectorRegion:
    """The full annulus ``A_j`` (a disk for j = 0)."""
    lo = -math.inf if j == 0 else sc.log2_r(j)
    return SectorRegion(lo, sc.log2_s(j), SEAM, SEAM + TWO_PI)


# ---------------------------------------------------------------------------
# argument principle


def _g_batch(p, sc, rho, theta, a_arr_one: XCArray):
    z = XCArray.from_polar(rho, theta)
    fz, _ = eval_f_batch(p, sc, z)
    n = len(z)
    a_rep = XCArray(np.repeat(a_arr_one.re, n), np.repeat(a_arr_one.im, n),
                    np.repeat(a_arr_one.exp, n), normalize=False)
    g = fz.sub(a_rep)
    return g.arg(), g.log2abs(), g.is_zero()


def _wrap(d):
    return (d + np.pi) % TWO_PI - np.pi


def _arg_change(p: Params, sc: Scales, region: SectorRegion, a: XComplex) -> float:
    a_arr = XCArray.from_xcomplex([a])
    a_log2 = xc_polar(a)[0] if not a.is_zero() else -math.inf
    edges = region.edges()
    params = []
    for rho0, rho1, t0, t1 in edges:
        n0 = 16 if rho0 != rho1 else max(16, int(math.ceil(32 * abs(t1 - t0) / TWO_PI)))
        params.append(np.linspace(0.0, 1.0, n0 + 1))

    def evaluate(edge_params):
        rhos, thetas, owner = [], [], []
        for e, s in enumerate(edge_params):
            rho0, rho1, t0, t1 = edges[e]
            rhos.append(rho0 + (rho1 - rho0) * s)
            thetas.append(t0 + (t1 - t0) * s)
            owner.append(np.full(len(s), e))
        if not rhos or sum(len(r) for r in rhos) == 0:
            return []
        arg, lg, zero = _g_batch(p, sc, np.concatenate(rhos), np.concatenate(thetas), a_arr)
        if zero.any() or (a_log2 > -math.inf and float(np.min(lg)) < a_log2 - 40):
            raise _BoundaryZero
        owner = np.concatenate(owner)
        return [(arg[owner == e], lg[owner == e]) for e in range(len(edges))]

    vals = evaluate(params)
    while True:
        new_params = []
        any_new = False
        for e, s in enumerate(params):
            arg, lg = vals[e]
            bad = (np.abs(_wrap(np.diff(arg))) >= _ARG_STEP) | (np.abs(np.diff(lg)) > _LOG2_STEP)
            if bad.any():
                widths = np.diff(s)[bad]
                if widths.min() < _MIN_PARAM_GAP:
                    raise _BoundaryZero
                mids = s[:-1][bad] + 0.5 * widths
                new_params.append(mids)
                any_new = True
            else:
                new_params.append(np.empty(0))
        if not any_new:
            break
        new_vals = evaluate(new_params)
        for e in range(len(edges)):
            if len(new_params[e]) == 0:
                continue
            s = np.concatenate([params[e], new_params[e]])
            order = np.argsort(s, kind="stable")
            params[e] = s[order]
            vals[e] = (np.concatenate([vals[e][0], new_vals[e][0]])[order],
                       np.concatenate([vals[e][1], new_vals[e][1]])[order])
            if len(params[e]) > _MAX_POINTS:
                raise NumericalFailure("argument tracking exceeded its sample budget")
    return float(sum(_wrap(np.diff(vals[e][0])).sum() for e in range(len(edges))))


def argument_change(p: Params, sc: Scales, region: SectorRegion, a: XComplex) -> float:
    """Total continuous change of ``arg(f(z) - a)`` around the region boundary (radians)."""
    return _arg_change(p, sc, region, a)


def _count(change: float) -> int:
    w = change / TWO_PI
    n = round(w)
    if abs(w - n) > WINDING_TOL:
        raise NumericalFailure(f"non-integer winding {w:.6f}")
    return int(n)


def winding_count(p: Params, sc: Scales, region: SectorRegion, a: XComplex) -> int:
    """Number of solutions of ``f(z) = a`` inside ``region`` (argument principle).

    A zero of ``f - a`` on the boundary is detected from the sampling and the
    region is nudged outward by 1e-6 in log2-radius; if that keeps happening a
    ``GeometryError`` is raised.
    """
    for attempt in range(4):
        try:
            return _count(_arg_change(p, sc, region, a))
        except _BoundaryZero:
            region = region.shifted(1e-6 * (attempt + 1))
    raise GeometryError("f - a keeps vanishing on the region boundary")


# ---------------------------------------------------------------------------
# isolation and polishing


@dataclass(frozen=True)
class Preimage:
    """A solved point, kept as ``a_anchor + offset`` so it stays exact near a zero of f."""

    point: XComplex
    anchor: int
    offset: XComplex


def anchor_for(sc: Scales, z: XComplex) -> int:
    """Index of the zero of f nearest to ``z`` in log-radius (0 for the zero at the origin)."""
    if z.is_zero():
        return 0
    rho = xc_polar(z)[0]
    if rho < -1.0:
        return 0
    return min(range(1, sc.M + 1), key=lambda j: abs(sc.log2_a(j) - rho))


def _as_preimage(sc: Scales, z) -> Preimage:
    if isinstance(z, Preimage):
        return z
    j = anchor_for(sc, z)
    return Preimage(z, j, z if j == 0 else z - sc.a[j])


def residual(p: Params, sc: Scales, z, a: XComplex) -> float:
    """``|f(z) - a| / |a|``; for ``a = 0`` the scale ``|z f'(z)|`` is used instead."""
    b = _as_preimage(sc, z)
    g = eval_f_anchored(p, sc, b.anchor, b.offset).value - a
    if g.is_zero():
        return 0.0
    lg = xc_polar(g)[0]
    if a.is_zero():
        if b.point.is_zero():
            return 0.0
        d = eval_f_prime_anchored(p, sc, b.anchor, b.offset).value * b.point
        return 2.0 ** (lg - xc_polar(d)[0])
    return 2.0 ** (lg - xc_polar(a)[0])


def newton(p: Params, sc: Scales, a: XComplex, z0: XComplex, steps: int = NEWTON_STEPS,
           anchor: int | None = None) -> Preimage | None:
    """Newton iteration for ``f(z) = a``; ``None`` unless the residual drops below 1e-10.

    The iteration runs on the offset from the zero ``a_anchor`` (nearest zero
    by default) so that points extremely close to a zero are resolved.
    """
    j = anchor_for(sc, z0) if anchor is None else anchor
    u = z0 if j == 0 else z0 - sc.a[j]
    for _ in range(steps):
        g = eval_f_anchored(p, sc, j, u).value - a
        if g.is_zero():
            break
        d = eval_f_prime_anchored(p, sc, j, u).value
        if d.is_zero():
            return None
        step = g / d
        u = u - step
        if u.is_zero() or xc_polar(step)[0] - xc_polar(u)[0] < -50:
            break
    b = Preimage(anchored_point(sc, j, u), j, u)
    return b if residual(p, sc, b, a) < RESIDUAL_TOL else None


def _split(region: SectorRegion, depth: int, frac: float) -> list[SectorRegion]:
    lo, hi, t0, t1 = region.log2_r_lo, region.log2_r_hi, region.theta_lo, region.theta_hi
    if region.is_disk:
        cut = hi - 1.0 - frac
        return [SectorRegion(-math.inf, cut, t0, t1), SectorRegion(cut, hi, t0, t1)]
    if depth % 2 == 0:
        cut = t0 + frac * (t1 - t0)
        return [SectorRegion(lo, hi, t0, cut), SectorRegion(lo, hi, cut, t1)]
    cut = lo + frac * (hi - lo)
    return [SectorRegion(lo, cut, t0, t1), SectorRegion(cut, hi, t0, t1)]


def _children(p, sc, region, a, w, depth):
    for attempt in range(8):
        frac = 0.5 + 0.0371 * (attempt + 1) // 2 * (-1) ** attempt if attempt else 0.5
        kids = _split(region, depth, frac)
        try:
            counts = [_count(_arg_change(p, sc, k, a)) for k in kids]
        except (_BoundaryZero, NumericalFailure):
            continue
        if sum(counts) == w:
            return list(zip(kids, counts))
    raise GeometryError("could not split region cleanly")


def _logpolar_distance(u: XComplex, v: XComplex) -> float:
    if u.is_zero() or v.is_zero():
        return 0.0 if (u.is_zero() and v.is_zero()) else math.inf
    ru, tu = xc_polar(u)
    rv, tv = xc_polar(v)
    dt = abs((tu - tv + math.pi) % TWO_PI - math.pi)
    return math.hypot(math.log(2) * (ru - rv), dt)


def _sort_key(z: XComplex):
    if z.is_zero():
        return (-math.pi - 1, -math.inf)
    rho, theta = xc_polar(z)
    return (theta, rho)


def solve_in_region(p: Params, sc: Scales, region: SectorRegion, a: XComplex,
                    count: int | None = None) -> list[Preimage]:
    """All solutions of ``f(z) = a`` in ``region``, sorted by angle then log-radius.

    Pieces are bisected (alternating angle and log-radius) until each holds a
    single solution; Newton is started from the piece centre and its result
    is accepted only if it converges inside the piece.  A piece that still
    fails below the isolation diameter keeps being bisected up to a fixed
    depth, after which the failure is reported.
    """
    w0 = winding_count(p, sc, region, a) if count is None else count
    stack = [(region, w0, 0)]
    roots, failed = [], []
    while stack:
        reg, w, depth = stack.pop()
        if w == 0:
            continue
        if w == 1:
            z = newton(p, sc, a, reg.center())
            if z is not None and reg.contains(z.point):
                roots.append(z)
                continue
        if depth >= MAX_BISECT_DEPTH:
            failed.append(reg)
            continue
        try:
            kids = _children(p, sc, reg, a, w, depth)
        except GeometryError:
            failed.append(reg)
            continue
        stack.extend((k, c, depth + 1) for k, c in reversed(kids))
    for i in range(len(roots)):
        for j in range(i + 1, len(roots)):
            if _logpolar_distance(roots[i].point, roots[j].point) <= DISTINCT:
                raise NumericalFailure("two isolated pieces converged to the same solution")
    if failed:
        err = NumericalFailure(f"{len(failed)} piece(s) unresolved")
        err.pieces = failed
        err.found = roots
        raise err
    if len(roots) != w0:
        raise NumericalFailure(f"found {len(roots)} solutions, winding says {w0}")
    return sorted(roots, key=lambda b: _sort_key(b.point))


# ---------------------------------------------------------------------------
# trees


@dataclass
class TreeNode:
    point: XComplex
    parent: int
    depth: int
    region: RegionIndex | None
    fprime: XReal
    acc: XReal
    anchor: int = 0
    offset: XComplex | None = None

    @property
    def log2_acc(self) -> float:
        return xlog2(self.acc)


def _xjson(x: XReal) -> dict:
    return {"decimal": render_decimal(x), "exact": render_exact(x)}


@dataclass
class PreimageTree:
    """Level ``d`` holds ``F^{-d}(root)`` with ``|(F^d)'|`` accumulated per node.

    Nodes are ordered by parent, then region index, then angle, then
    log-radius.
    """

    params: Params
    root: XComplex
    depth: int
    levels: list = field(default_factory=list)
    counts: list = field(default_factory=list)  # per parent: solutions in A_0..A_N
    partial: bool = False

    def nodes(self, depth: int | None = None) -> list[TreeNode]:
        return self.levels[self.depth if depth is None else depth]

    def leaves(self) -> list[TreeNode]:
        return self.levels[self.depth]

    def log2_acc(self, depth: int | None = None) -> np.ndarray:
        return np.array([n.log2_acc for n in self.nodes(depth)])

    def to_jsonl(self) -> str:
        lines = []
        for d in range(1, self.depth + 1):
            for n in self.levels[d]:
                lines.append(json.dumps({
                    "depth": d,
                    "parent": n.parent,
                    "region": str(n.region),
                    "point": {"re": _xjson(n.point.re), "im": _xjson(n.point.im)},
                    "anchor": n.anchor,
                    "offset": {"re": _xjson(n.offset.re), "im": _xjson(n.offset.im)},
                    "log2_acc_derivative": n.log2_acc,
                }))
        return "\n".join(lines) + "\n"


def preimages(p: Params, sc: Scales, a: XComplex) -> tuple[list[tuple[Preimage, int]], list[int]]:
    """All preimages of ``a`` in ``A_0..A_N`` with their annulus index, and the per-annulus counts."""
    out, counts = [], []
    for j in range(p.N + 1):
        reg = annulus_region(sc, j)
        w = winding_count(p, sc, reg, a)
        counts.append(w)
        for b in solve_in_region(p, sc, reg, a, count=w):
            out.append((b, j))
    return out, counts


def _preimages_worker(args, sc=None):
    p, a = args
    sc = cached_scales(p) if sc is None else sc
    try:
        sols, counts = preimages(p, sc, a)
    except (NumericalFailure, GeometryError) as exc:
        return None, str(exc)
    return [(b, j, eval_f_prime_anchored(p, sc, b.anchor, b.offset).value.abs()) for b, j in sols], counts


def default_threads() -> int:
    try:
        return max(1, int(os.environ.get("REPELLER_THREADS", "1")))
    except ValueError:
        return 1


def build_tree(p: Params, sc: Scales, a: XComplex, n: int, budget: int = DEFAULT_BUDGET,
               threads: int | None = None) -> PreimageTree:
    """Depth-``n`` tree of preimages of ``a`` under F.

    Raises ``BudgetError`` up front when ``(N+1)^n`` leaves exceed the budget.
    Nodes whose preimage solve fails make the tree ``partial``.  With more
    than one thread the nodes of a level are solved in worker processes;
    results are collected in submission order, so the tree does not depend
    on scheduling.
    """
    if n < 1:
        raise XDomainError("depth must be >= 1")
    if (p.N + 1) ** n > budget:
        raise BudgetError(f"{(p.N + 1) ** n} leaves exceed the budget of {budget}")
    threads = default_threads() if threads is None else threads
    root = TreeNode(point=a, parent=-1, depth=0, region=None, fprime=ONE, acc=ONE,
                    anchor=0, offset=a)
    tree = PreimageTree(params=p, root=a, depth=n, levels=[[root]])
    pool = ProcessPoolExecutor(max_workers=threads) if threads > 1 else None
    try:
        for d in range(1, n + 1):
            parents = tree.levels[d - 1]
            jobs = [(p, node.point) for node in parents]
            if pool is not None:
                chunk = max(1, len(jobs) // (4 * threads))
                results = list(pool.map(_preimages_worker, jobs, chunksize=chunk))
            else:
                results = [_preimages_worker(job, sc) for job in jobs]
            level, level_counts = [], []
            for idx, (sols, counts) in enumerate(results):
                if sols is None or len(sols) != p.N + 1:
                    tree.partial = True
                level_counts.append(counts if sols is not None else None)
                for b, j, fp in sols or []:
                    level.append(TreeNode(point=b.point, parent=idx, depth=d, region=RegionIndex("A", j),
                                          fprime=fp, acc=xmul(parents[idx].acc, fp),
                                          anchor=b.anchor, offset=b.offset))
            tree.levels.append(level)
            tree.counts.append(level_counts)
    finally:
        if pool is not None:
            pool.shutdown()
    return tree
