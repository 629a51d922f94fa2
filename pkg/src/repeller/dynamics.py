"""Orbits, itineraries over the annulus/gap alphabet, and orbit verdicts.

A single orbit and a whole grid are run through the same vectorised kernel,
so a one-cell grid reproduces ``iterate`` exactly.
"""

from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass, field

import numpy as np

from .construction import (
    KIND_A,
    KIND_B,
    KIND_BEYOND,
    Params,
    RegionIndex,
    Scales,
    eval_f_batch,
    regions_batch,
)
from .errors import XDomainError, XRangeError
from .xnum import XCArray, XComplex

BOUNDED, ESCAPED, UNDECIDED = 0, 1, 2
VERDICT_NAMES = {BOUNDED: "BoundedWitness", ESCAPED: "EscapeCertified", UNDECIDED: "Undecided"}
DEFAULT_MAX_ITER = 100


@dataclass(frozen=True)
class Verdict:
    kind: str
    N: int | None = None
    entry_step: int | None = None
    entry_k: int | None = None
    flag: str = ""

    @property
    def code(self) -> int:
        return {v: k for k, v in VERDICT_NAMES.items()}[self.kind]


@dataclass
class OrbitRecord:
    start: XComplex
    points: list = field(default_factory=list)
    itinerary: list = field(default_factory=list)
    verdict: Verdict | None = None


@dataclass(frozen=True)
class LogPolarWindow:
    """Rectangle in (log2 |z|, arg z)."""

    log2_r_lo: float
    log2_r_hi: float
    theta_lo: float = -math.pi
    theta_hi: float = math.pi

    def __post_init__(self):
        if not (self.log2_r_lo < self.log2_r_hi and self.theta_lo < self.theta_hi):
            raise XDomainError("empty log-polar window")

    def centers(self, nr: int, nt: int) -> tuple[np.ndarray, np.ndarray]:
        rho = self.log2_r_lo + (np.arange(nr) + 0.5) * (self.log2_r_hi - self.log2_r_lo) / nr
        theta = self.theta_lo + (np.arange(nt) + 0.5) * (self.theta_hi - self.theta_lo) / nt
        return rho, theta


def _allowed_bounded(kind, k, N):
    ok = (kind == KIND_A) & (k <= N)
    if N >= 1:
        ok |= (kind == KIND_B) & (k == 0)
    return ok


def _run(p: Params, sc: Scales, z: XCArray, max_iter: int, follow_escape: bool,
         keep_path: bool):
    """Iterate a batch of starts; returns verdict arrays (and paths when asked)."""
    n = len(z)
    top = sc.top
    code = np.full(n, UNDECIDED, dtype=np.int8)
    escaped = np.zeros(n, dtype=bool)
    left = np.zeros(n, dtype=bool)
    entry_step = np.full(n, -1, dtype=np.int64)
    entry_k = np.full(n, -1, dtype=np.int64)
    flags = np.zeros(n, dtype=np.int8)  # 1 = overflow outside a gap
    active = np.arange(n)
    cur = z
    paths = [[] for _ in range(n)] if keep_path else None

    for step in range(max_iter + 1):
        kind, k = regions_batch(sc, top, cur)
        if keep_path:
            pts = cur.to_xcomplex()
            for i, idx in enumerate(active):
                paths[idx].append((pts[i], int(kind[i]), int(k[i])))
        new_escape = ~escaped[active] & (kind == KIND_B) & (k >= 1)
        entry_step[active[new_escape]] = step
        entry_k[active[new_escape]] = k[new_escape]
        escaped[active[new_escape]] = True
        left[active[~_allowed_bounded(kind, k, p.N)]] = True

        stop = kind == KIND_BEYOND
        if not follow_escape:
            stop |= escaped[active]
        if step == max_iter:
            break
        keep = ~stop
        active, cur = active[keep], cur.take(keep)
        if len(active) == 0:
            break
        try:
            cur, _ = eval_f_batch(p, sc, cur)
        except XRangeError:
            cur, active = _eval_with_overflow(p, sc, cur, active, escaped, flags)
            if len(active) == 0:
                break

    code[escaped] = ESCAPED
    code[~escaped & ~left & (flags == 0)] = BOUNDED
    return code, entry_step, entry_k, flags, paths


def _eval_with_overflow(p, sc, cur, active, escaped, flags):
    # per-element fallback: overflow inside the escape chain is itself an escape
    vals, keep = [], []
    for i in range(len(active)):
        try:
            v, _ = eval_f_batch(p, sc, cur.take([i]))
        except XRangeError:
            if not escaped[active[i]]:
                flags[active[i]] = 1
            continue
        vals.append(v)
        keep.append(i)
    if not keep:
        return cur.take([]), active[[]]
    re = np.concatenate([v.re for v in vals])
    im = np.concatenate([v.im for v in vals])
    ex = np.concatenate([v.exp for v in vals])
    return XCArray(re, im, ex, normalize=False), active[keep]


def _region(kind: int, k: int) -> RegionIndex:
    return RegionIndex({KIND_A: "A", KIND_B: "B", KIND_BEYOND: "BeyondTop"}[kind], k)


def iterate(p: Params, sc: Scales, z: XComplex, max_iter: int = DEFAULT_MAX_ITER,
            follow_escape: bool = True) -> OrbitRecord:
    """Iterate f from ``z`` and classify the orbit.

    Entering a gap ``B_k`` with ``k >= 1`` certifies escape, since each such
    gap maps into the next.  With ``follow_escape`` the orbit is followed
    along the gap chain until it leaves the tracked scales or the budget
    runs out, so the itinerary shows the chain itself.  Itineraries are
    labelled over all tracked annuli (indices up to ``M - 1``), not only
    those up to ``N``.
    """
    if max_iter < 1:
        raise XDomainError("max_iter must be >= 1")
    code, es, ek, flags, paths = _run(p, sc, XCArray.from_xcomplex([z]), max_iter,
                                      follow_escape, keep_path=True)
    rec = OrbitRecord(start=z)
    for pt, kind, k in paths[0]:
        rec.points.append(pt)
        rec.itinerary.append(_region(kind, k))
    c = int(code[0])
    if c == ESCAPED:
        rec.verdict = Verdict("EscapeCertified", entry_step=int(es[0]), entry_k=int(ek[0]))
    elif c == BOUNDED:
        rec.verdict = Verdict("BoundedWitness", N=p.N)
    else:
        rec.verdict = Verdict("Undecided", flag="overflow" if flags[0] else "")
    return rec


def classify_points(p: Params, sc: Scales, z: XCArray, max_iter: int = DEFAULT_MAX_ITER) -> np.ndarray:
    code, *_ = _run(p, sc, z, max_iter, follow_escape=False, keep_path=False)
    return code


def classify_grid(p: Params, sc: Scales, window: LogPolarWindow, resolution: tuple[int, int],
                  max_iter: int = DEFAULT_MAX_ITER) -> np.ndarray:
    """Verdict codes at the centres of a log-polar grid, shape ``(nr, ntheta)``.

    Rows run over log-radius (lowest first), columns over angle.
    """
    nr, nt = resolution
    if nr < 1 or nt < 1:
        raise XDomainError("resolution must be positive")
    if window.log2_r_lo < -40 or window.log2_r_hi > sc.log2_s(p.N) + 1e-9:
        raise XDomainError("window must lie within magnitudes [2^-40, s_N]")
    rho, theta = window.centers(nr, nt)
    R, T = np.meshgrid(rho, theta, indexing="ij")
    z = XCArray.from_polar(R.ravel(), T.ravel())
    return classify_points(p, sc, z, max_iter).reshape(nr, nt)


def grid_to_csv(window: LogPolarWindow, codes: np.ndarray) -> str:
    nr, nt = codes.shape
    rho, theta = window.centers(nr, nt)
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["i", "j", "log2_r", "theta", "code"])
    for i in range(nr):
        for j in range(nt):
            w.writerow([i, j, repr(float(rho[i])), repr(float(theta[j])), int(codes[i, j])])
    return buf.getvalue()
