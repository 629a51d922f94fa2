"""Scale sequence, radii, annuli and evaluation of f and f'.

The entire function is

    f(z) = C z prod_{k>=1} (1 - z/a_k),    a_1 = 1,
    a_{k+1} = 8 C a_k prod_{j<k} (a_k / a_j),

truncated after ``M`` factors.  The omitted factors are controlled by
``tail_bound``; every evaluation reports a relative error estimate that
includes this bound.
"""

from __future__ import annotations

import functools
import json
import math
import warnings
from dataclasses import asdict, dataclass, field
from typing import NamedTuple

import numpy as np

from .errors import ConstructionError, PoleError, XDomainError, XRangeError
from .xnum import (
    ONE,
    ULP,
    ZERO,
    XCArray,
    XComplex,
    XReal,
    render_decimal,
    render_exact,
    xadd,
    xc_polar,
    xdiv,
    xlog2,
    xmul,
    xnormalize,
)

# relative distance to a zero of f below which f' switches to the product rule
NEAR_ZERO = 1e-9
POLE_TOL = 1e-12
# a single factor costs at most this many rounding units
_ULPS_PER_FACTOR = 4.0


@dataclass(frozen=True)
class Params:
    """Parameters of one member of the function family.

    ``M`` defaults to ``N + 8`` factors.
    """

    C: float
    N: int
    M: int | None = None
    tail_tol: float = 1e-12
    samples_per_circle: int = 256

    def __post_init__(self):
        if not (math.isfinite(self.C) and self.C > 0):
            raise XDomainError(f"C must be a positive real, got {self.C!r}")
        if int(self.N) != self.N or self.N < 0:
            raise XDomainError(f"N must be a nonnegative integer, got {self.N!r}")
        object.__setattr__(self, "N", int(self.N))
        if self.M is None:
            object.__setattr__(self, "M", self.N + 8)
        if int(self.M) != self.M or self.M < self.N + 2:
            raise XDomainError(f"truncation M={self.M} must be an integer >= N + 2")
        object.__setattr__(self, "M", int(self.M))
        if not (0 < self.tail_tol <= 1e-6):
            raise XDomainError(f"tail_tol must lie in (0, 1e-6], got {self.tail_tol!r}")
        if int(self.samples_per_circle) != self.samples_per_circle or self.samples_per_circle < 1:
            raise XDomainError("samples_per_circle must be a positive integer")
        if self.C < 250:
            warnings.warn(
                f"C={self.C} is below 250; the mapping inequalities are expected to fail",
                stacklevel=3,
            )

    @property
    def L(self) -> float:
        return self.C / (4.0 * math.e)

    def to_dict(self) -> dict:
        return asdict(self)


@dataclass(frozen=True, eq=False)
class Scales:
    """Zeros ``a``, radii ``r``/``s`` and the expansion constant ``L``.

    ``a``, ``r`` and ``s`` are indexed ``0..M`` with ``a[0] = r[0] = 0``;
    ``a_next`` is ``a_{M+1}``, used only by the tail bound.
    """

    params: Params
    a: tuple
    r: tuple
    s: tuple
    L: XReal
    a_next: XReal
    _arrays: dict = field(default_factory=dict, repr=False)

    @property
    def C(self) -> float:
        return self.params.C

    @property
    def N(self) -> int:
        return self.params.N

    @property
    def M(self) -> int:
        return self.params.M

    @property
    def top(self) -> int:
        """Largest annulus index whose gap ``B_top`` is fully described by the scales."""
        return self.M - 1

    def log2_a(self, k: int) -> float:
        return xlog2(self.a[k])

    def log2_r(self, k: int) -> float:
        return -math.inf if k == 0 else xlog2(self.r[k])

    def log2_s(self, k: int) -> float:
        return xlog2(self.s[k])

    def arrays(self) -> dict:
        """Significand/exponent arrays for the vectorised evaluators (cached)."""
        if not self._arrays:
            def split(vals):
                return (np.array([v.sig for v in vals]), np.array([v.exp for v in vals], dtype=np.int64))

            self._arrays["a_sig"], self._arrays["a_exp"] = split(self.a[1:])
            self._arrays["r_sig"], self._arrays["r_exp"] = split(self.r[1:])
            self._arrays["s_sig"], self._arrays["s_exp"] = split(self.s)
        return self._arrays

    def to_json(self) -> str:
        rows = []
        for k in range(self.M + 1):
            rows.append({
                "k": k,
                "a": {"decimal": render_decimal(self.a[k]), "exact": render_exact(self.a[k])},
                "r": {"decimal": render_decimal(self.r[k]), "exact": render_exact(self.r[k])},
                "s": {"decimal": render_decimal(self.s[k]), "exact": render_exact(self.s[k])},
            })
        doc = {
            "params": self.params.to_dict(),
            "L": {"decimal": render_decimal(self.L), "exact": render_exact(self.L)},
            "scales": rows,
        }
        return json.dumps(doc, indent=2) + "\n"


def build_scales(p: Params) -> Scales:
    eight_c = XReal.from_float(8.0 * p.C)
    a = [ZERO, ONE]
    for k in range(1, p.M + 1):
        try:
            prod = a[k]
            for j in range(1, k):
                prod = xmul(prod, xdiv(a[k], a[j]))
            a.append(xmul(eight_c, prod))
        except XRangeError as exc:
            raise XRangeError(f"a_{k + 1} overflows the exponent range: {exc}") from None

    r = [ZERO] + [xmul(a[k], XReal.from_float((2 * k + 1) / (2 * k + 2))) for k in range(1, p.M + 1)]
    s = [XReal.from_float(16.0 / p.C)] + [xmul(a[k], XReal.from_float(10.0)) for k in range(1, p.M + 1)]
    L = XReal.from_float(p.C / (4.0 * math.e))

    log2_8c = math.log2(8.0 * p.C)
    for k in range(1, p.M + 1):
        if not a[k + 1] > a[k]:
            raise ConstructionError(f"a_{k + 1} <= a_{k}")
        if xlog2(a[k + 1]) - xlog2(a[k]) < k * log2_8c - 1e-9:
            raise ConstructionError(f"a_{k + 1}/a_{k} < (8C)^{k}")
    for k in range(p.M):
        if k >= 1 and not (r[k] < a[k] < s[k]):
            raise ConstructionError(f"r_{k} < a_{k} < s_{k} fails")
        if not s[k] < r[k + 1]:
            raise ConstructionError(f"s_{k} < r_{k + 1} fails (C={p.C} too small)")

    return Scales(params=p, a=tuple(a[: p.M + 1]), r=tuple(r), s=tuple(s), L=L, a_next=a[p.M + 1])


# ---------------------------------------------------------------------------
# truncation tail


def _tail_eta(sc: Scales, M: int, R: XReal) -> XReal:
    if R.sign == 0:
        return ZERO
    if M == sc.M:
        a_next = sc.a_next
    elif 1 <= M < sc.M:
        a_next = sc.a[M + 1]
    else:
        raise XDomainError(f"tail beyond M={M} needs a_{M + 1}, which was not built")
    geo = XReal.from_float(1.0 / (1.0 - 1.0 / (8.0 * sc.C)))
    S = xmul(xdiv(R, a_next), geo)
    if S <= ONE:
        return xmul(S, xadd(ONE, S))  # expm1(S) <= S + S^2 on [0, 1]
    return XReal.from_float(math.expm1(float(S))) if float(S) < 700 else XReal(1, 1.0, int(float(S) / math.log(2)) + 1)


def tail_bound(sc: Scales, M: int, R: XReal) -> XReal:
    """Relative perturbation bound for the factors beyond ``M`` on ``|z| <= R``.

    Uses ``sum_{j>M} R/a_j <= (R/a_{M+1}) / (1 - 1/(8C))`` and
    ``|prod(1 - w_j) - 1| <= exp(sum |w_j|) - 1``.  Returned as an extended
    real because it is routinely far below the double range.
    """
    R = R if isinstance(R, XReal) else XReal.from_float(R)
    if R > sc.s[sc.N]:
        raise XDomainError("tail_bound requires R <= s_N")
    if M < sc.N + 2:
        raise XDomainError("tail_bound requires M >= N + 2")
    return _tail_eta(sc, M, R)


# ---------------------------------------------------------------------------
# scalar evaluation


class FValue(NamedTuple):
    value: XComplex
    rel_err: float
    flagged: bool


_CZERO = XComplex(ZERO, ZERO)


def _factor(z: XComplex, a_j: XReal) -> XComplex:
    # (a_j - z)/a_j: the subtraction is exact when z is close to a_j
    return XComplex(xdiv(xadd(a_j, -z.re), a_j), xdiv(-z.im, a_j))


def _factors(p: Params, sc: Scales, z: XComplex, anchor: int = -1, u: XComplex | None = None) -> list:
    # g_0 = z, g_i = (a_i - z)/a_i; with an anchor j the point is a_j + u and
    # g_j = -u/a_j is formed from the offset directly
    g = [z]
    for i in range(1, p.M + 1):
        if i == anchor:
            g.append(XComplex(xdiv(-u.re, sc.a[i]), xdiv(-u.im, sc.a[i])))
        else:
            g.append(_factor(z, sc.a[i]))
    return g


def _product(p: Params, sc: Scales, z: XComplex, g: list) -> FValue:
    acc = XComplex(XReal.from_float(p.C))
    for fac in g:
        if fac.is_zero():
            return FValue(_CZERO, 0.0, False)
        acc = acc * fac
    rel = float(_tail_eta(sc, p.M, z.abs())) + (_ULPS_PER_FACTOR * p.M + 2) * ULP
    return FValue(acc, rel, rel > p.tail_tol)


def eval_f(p: Params, sc: Scales, z: XComplex) -> FValue:
    """``C z prod_{j<=M} (1 - z/a_j)`` in extended arithmetic."""
    if z.is_zero():
        return FValue(_CZERO, 0.0, False)
    return _product(p, sc, z, _factors(p, sc, z))


def anchored_point(sc: Scales, anchor: int, u: XComplex) -> XComplex:
    """``a_anchor + u`` rounded to an ordinary XComplex (``a_0 = 0``)."""
    return u if anchor == 0 else u + sc.a[anchor]


def eval_f_anchored(p: Params, sc: Scales, anchor: int, u: XComplex) -> FValue:
    """f at ``a_anchor + u`` without rounding the offset away.

    Points very close to a zero ``a_j`` cannot be stored as ordinary
    numbers to the precision f needs there (``|z f'(z)|`` can exceed
    ``2^100`` on ``A_3``), so they are carried as the pair ``(j, u)``.
    """
    z = anchored_point(sc, anchor, u)
    if z.is_zero():
        return FValue(_CZERO, 0.0, False)
    return _product(p, sc, z, _factors(p, sc, z, anchor, u))


def eval_f_prime_anchored(p: Params, sc: Scales, anchor: int, u: XComplex) -> FValue:
    """f' at ``a_anchor + u`` by the product rule."""
    z = anchored_point(sc, anchor, u)
    return _fprime_from_factors(p, sc, z, _factors(p, sc, z, anchor, u))


def _near_zero(sc: Scales, z: XComplex) -> bool:
    if z.is_zero():
        return True
    m = z.abs()
    if m < XReal.from_float(NEAR_ZERO):
        return True
    for j in range(1, sc.M + 1):
        d = (z - sc.a[j]).abs()
        if d <= xmul(sc.a[j], XReal.from_float(NEAR_ZERO)):
            return True
    return False


def _fprime_logderiv(p: Params, sc: Scales, z: XComplex) -> FValue:
    fv = eval_f(p, sc, z)
    g = 1.0 + 0.0j
    mag = 1.0
    for j in range(1, p.M + 1):
        t = (z / (z - sc.a[j])).to_complex()
        g += t
        mag += abs(t)
    value = fv.value * XComplex.from_complex(g) / z
    cond = mag / abs(g) if g != 0 else math.inf
    rel = fv.rel_err + (2 * p.M + 4) * ULP * cond
    return FValue(value, rel, rel > p.tail_tol)


def _fprime_product(p: Params, sc: Scales, z: XComplex) -> FValue:
    return _fprime_from_factors(p, sc, z, _factors(p, sc, z))


def _fprime_from_factors(p: Params, sc: Scales, z: XComplex, g: list) -> FValue:
    # f = C * prod_{i=0..M} g_i, so f' = C * sum_i g_i' * prod_{l != i} g_l
    dg = [XComplex(ONE, ZERO)] + [XComplex(xdiv(-ONE, sc.a[i]), ZERO) for i in range(1, p.M + 1)]
    n = len(g)
    prefix = [XComplex(ONE, ZERO)]
    for i in range(n - 1):
        prefix.append(prefix[-1] * g[i])
    suffix = [XComplex(ONE, ZERO)] * n
    for i in range(n - 2, -1, -1):
        suffix[i] = suffix[i + 1] * g[i + 1]
    terms = [dg[i] * prefix[i] * suffix[i] for i in range(n)]
    total = _CZERO
    for t in terms:
        total = total + t
    value = total * XReal.from_float(p.C)
    if total.is_zero():
        return FValue(value, math.inf, True)
    lt = xc_polar(total)[0]
    lmax = max(xc_polar(t)[0] for t in terms if not t.is_zero())
    cond = 2.0 ** (lmax - lt) * n
    rel = float(_tail_eta(sc, p.M, z.abs())) + (_ULPS_PER_FACTOR * p.M + 4) * ULP * cond
    return FValue(value, rel, rel > p.tail_tol)


def eval_f_prime(p: Params, sc: Scales, z: XComplex, method: str = "auto") -> FValue:
    """f'(z).

    Away from the zeros of f this is ``f(z) * (1/z + sum 1/(z - a_j))``; within
    relative distance 1e-9 of a zero the product rule with prefix/suffix
    partial products is used instead, which stays finite at the zeros.
    ``method`` may force ``"logderiv"`` or ``"product"``.
    """
    if method == "auto":
        method = "product" if _near_zero(sc, z) else "logderiv"
    if method == "product":
        return _fprime_product(p, sc, z)
    if method == "logderiv":
        return _fprime_logderiv(p, sc, z)
    raise ValueError(f"unknown method {method!r}")


def log_derivative(p: Params, sc: Scales, x: XReal) -> float:
    """``x f'(x) / f(x) = 1 + sum_j x/(x - a_j)`` for real ``x > 0``."""
    x = x if isinstance(x, XReal) else XReal.from_float(x)
    if x.sign <= 0:
        raise XDomainError("log_derivative needs x > 0")
    total = 1.0
    for j in range(1, p.M + 1):
        d = xadd(x, -sc.a[j])
        if d.sign == 0 or abs(d) <= xmul(sc.a[j], XReal.from_float(POLE_TOL)):
            raise PoleError(f"x is at the zero a_{j}")
        total += float(xdiv(x, d))
    return total


# ---------------------------------------------------------------------------
# regions


@dataclass(frozen=True, order=True)
class RegionIndex:
    """``A_k`` (closed annulus), ``B_k`` (open gap) or ``BeyondTop``."""

    kind: str
    k: int

    def __str__(self) -> str:
        return "Beyond" if self.kind == "BeyondTop" else f"{self.kind}{self.k}"

    @property
    def is_gap(self) -> bool:
        return self.kind == "B"


def region_of(sc: Scales, N: int, z) -> RegionIndex:
    """Locate ``|z|`` among ``r_0 = 0 <= s_0 < r_1 <= s_1 < ...``.

    Ties resolve to the closed annulus.  Anything with ``|z| >= r_{N+1}`` is
    ``BeyondTop``.
    """
    m = z if isinstance(z, XReal) else z.abs()
    # reaching step k means m >= r_k
    for k in range(N + 1):
        if m <= sc.s[k]:
            return RegionIndex("A", k)
        if m < sc.r[k + 1]:
            return RegionIndex("B", k)
    return RegionIndex("BeyondTop", N + 1)


# ---------------------------------------------------------------------------
# vectorised evaluation

KIND_A, KIND_B, KIND_BEYOND = 0, 1, 2


def _factor_batch(z: XCArray, a_sig: float, a_exp: int) -> XCArray:
    # a_j - z with exponent alignment, then divide by a_j
    za = ~z.is_zero()
    e = np.maximum(np.where(za, z.exp, a_exp), a_exp)
    dz = np.clip(z.exp - e, -1100, 0)
    da = np.clip(a_exp - e, -1100, 0)
    re = np.ldexp(np.full_like(z.re, a_sig), da) - np.ldexp(z.re, dz)
    im = -np.ldexp(z.im, dz)
    return XCArray(re / a_sig, im / a_sig, e - a_exp)


def eval_f_batch(p: Params, sc: Scales, z: XCArray) -> tuple[XCArray, np.ndarray]:
    """Vectorised ``eval_f``: values and per-element relative error estimates."""
    arr = sc.arrays()
    c = XReal.from_float(p.C)
    acc = z.scale(c)
    for j in range(p.M):
        acc = acc.mul(_factor_batch(z, float(arr["a_sig"][j]), int(arr["a_exp"][j])))
    log2S = z.log2abs() - xlog2(sc.a_next) - math.log2(1.0 - 1.0 / (8.0 * p.C))
    with np.errstate(over="ignore", invalid="ignore"):
        S = np.exp2(np.minimum(log2S, 1e4))
        eta = np.where(S <= 1.0, S * (1.0 + S), np.expm1(np.minimum(S, 1e4)))
    rel = np.where(acc.is_zero(), 0.0, eta + (_ULPS_PER_FACTOR * p.M + 2) * ULP)
    return acc, rel


def regions_batch(sc: Scales, top: int, z: XCArray) -> tuple[np.ndarray, np.ndarray]:
    """Vectorised ``region_of``: kind codes (A=0, B=1, Beyond=2) and indices."""
    arr = sc.arrays()
    sig, exp = z.abs_parts()
    zero = z.is_zero()

    def ge(bs, be):
        return ~zero & ((exp > be) | ((exp == be) & (sig >= bs)))

    def gt(bs, be):
        return ~zero & ((exp > be) | ((exp == be) & (sig > bs)))

    cr = np.ones(sig.shape, dtype=np.int64)  # r_0 = 0 <= |z|
    for k in range(1, top + 1):
        cr += ge(arr["r_sig"][k - 1], arr["r_exp"][k - 1])
    cs = np.zeros(sig.shape, dtype=np.int64)
    for k in range(top + 1):
        cs += gt(arr["s_sig"][k], arr["s_exp"][k])
    beyond = ge(arr["r_sig"][top], arr["r_exp"][top])
    kind = np.where(beyond, KIND_BEYOND, np.where(cr == cs + 1, KIND_A, KIND_B))
    k = np.where(beyond, top + 1, np.where(cr == cs + 1, cr - 1, cs - 1))
    return kind.astype(np.int8), k


def xreal_from_parts(sig: float, exp: int) -> XReal:
    return xnormalize(1, sig, exp) if sig else ZERO


@functools.lru_cache(maxsize=32)
def cached_scales(p: Params) -> Scales:
    """``build_scales`` memoised on the (hashable, frozen) parameters."""
    return build_scales(p)
