"""Extended-exponent real and complex arithmetic.

A value is ``sign * significand * 2**exponent`` with a binary64 significand
in ``[1, 2)`` and an unbounded Python-int exponent that is range-checked
against ``+-2**62``.  This is enough to hold the scale sequence of the
construction (``a_6 ~ 1e643`` at ``C = 2000``, and far larger for deeper
truncations) without any arbitrary-precision significand.

Two layers live here:

* ``XReal`` / ``XComplex``: immutable scalar values used for the public API,
  reports and everything that needs exact comparisons.
* ``XCArray``: a numpy-backed vector of extended complex values used by the
  hot loops (boundary sampling, orbit grids).  Only the four correctly rounded
  IEEE operations plus ``frexp``/``ldexp`` touch the mantissas, so an element's
  result never depends on the length of the batch it is computed in.
"""

from __future__ import annotations

import math
import re
from decimal import Decimal, localcontext

import numpy as np

from .errors import XDomainError, XRangeError

EXP_LIMIT = 1 << 62
ULP = 2.0 ** -52
STICKY_GAP = 64

# exponents for which sig * 2**exp is an ordinary double
_FLOAT_SAFE = 1000

with localcontext() as _ctx:
    _ctx.prec = 60
    _LOG10_2 = Decimal(2).log10()


class XReal:
    """Extended-range real number ``sign * sig * 2**exp``.

    Instances are canonical: ``sig`` lies in ``[1, 2)`` for nonzero values and
    zero is always ``(0, 1.0, 0)``.  Treat them as immutable.
    """

    __slots__ = ("sign", "sig", "exp")

    def __init__(self, sign: int, sig: float, exp: int):
        z = xnormalize(sign, sig, exp)
        object.__setattr__(self, "sign", z.sign)
        object.__setattr__(self, "sig", z.sig)
        object.__setattr__(self, "exp", z.exp)

    def __setattr__(self, name, value):
        raise AttributeError("XReal is immutable")

    def __reduce__(self):
        return (XReal, (self.sign, self.sig, self.exp))

    # -- conversions -----------------------------------------------------
    @classmethod
    def from_float(cls, x: float) -> "XReal":
        if not math.isfinite(x):
            raise XDomainError(f"non-finite value {x!r}")
        if x == 0.0:
            return ZERO
        m, e = math.frexp(abs(x))
        return _raw(1 if x > 0 else -1, 2.0 * m, e - 1)

    def __float__(self) -> float:
        if self.sign == 0:
            return 0.0
        if self.exp > 1023:
            return math.copysign(math.inf, self.sign)
        if self.exp < -1100:
            return 0.0 * self.sign
        return self.sign * math.ldexp(self.sig, self.exp)

    def __repr__(self) -> str:
        return f"XReal({render_exact(self)})"

    def __str__(self) -> str:
        return render_decimal(self)

    # -- arithmetic ------------------------------------------------------
    def __neg__(self) -> "XReal":
        return _raw(-self.sign, self.sig, self.exp)

    def __abs__(self) -> "XReal":
        return _raw(abs(self.sign), self.sig, self.exp)

    def __add__(self, other) -> "XReal":
        return xadd(self, _coerce(other))

    __radd__ = __add__

    def __sub__(self, other) -> "XReal":
        return xadd(self, -_coerce(other))

    def __rsub__(self, other) -> "XReal":
        return xadd(_coerce(other), -self)

    def __mul__(self, other) -> "XReal":
        return xmul(self, _coerce(other))

    __rmul__ = __mul__

    def __truediv__(self, other) -> "XReal":
        return xdiv(self, _coerce(other))

    def __rtruediv__(self, other) -> "XReal":
        return xdiv(_coerce(other), self)

    # -- ordering --------------------------------------------------------
    def _cmp(self, other) -> int:
        other = _coerce(other)
        if self.sign != other.sign:
            return -1 if self.sign < other.sign else 1
        if self.sign == 0:
            return 0
        if self.exp != other.exp:
            c = -1 if self.exp < other.exp else 1
        elif self.sig != other.sig:
            c = -1 if self.sig < other.sig else 1
        else:
            return 0
        return c * self.sign

    def __eq__(self, other) -> bool:
        if not isinstance(other, (XReal, int, float)):
            return NotImplemented
        return self._cmp(other) == 0

    def __lt__(self, other) -> bool:
        return self._cmp(other) < 0

    def __le__(self, other) -> bool:
        return self._cmp(other) <= 0

    def __gt__(self, other) -> bool:
        return self._cmp(other) > 0

    def __ge__(self, other) -> bool:
        return self._cmp(other) >= 0

    def __hash__(self) -> int:
        return hash((self.sign, self.sig, self.exp))

    def __bool__(self) -> bool:
        return self.sign != 0


def _raw(sign: int, sig: float, exp: int) -> XReal:
    # caller guarantees canonical form
    x = object.__new__(XReal)
    object.__setattr__(x, "sign", sign)
    object.__setattr__(x, "sig", sig)
    object.__setattr__(x, "exp", exp)
    return x


ZERO = _raw(0, 1.0, 0)
ONE = _raw(1, 1.0, 0)


def _coerce(x) -> XReal:
    if isinstance(x, XReal):
        return x
    if isinstance(x, (int, float)):
        return XReal.from_float(float(x))
    raise TypeError(f"cannot mix XReal with {type(x).__name__}")


def _check_exp(exp: int) -> int:
    if exp > EXP_LIMIT or exp < -EXP_LIMIT:
        raise XRangeError(f"binary exponent {exp} outside +-2**62")
    return exp


def xnormalize(sign: int, significand: float, exponent: int) -> XReal:
    """Canonical ``XReal`` for ``sign * significand * 2**exponent``."""
    if not math.isfinite(significand):
        raise XDomainError(f"non-finite significand {significand!r}")
    if significand < 0:
        raise XDomainError("significand must be nonnegative; pass the sign separately")
    if sign == 0 or significand == 0.0:
        return ZERO
    m, e = math.frexp(significand)
    return _raw(1 if sign > 0 else -1, 2.0 * m, _check_exp(int(exponent) + e - 1))


def xmul(a: XReal, b: XReal) -> XReal:
    if a.sign == 0 or b.sign == 0:
        return ZERO
    s = a.sig * b.sig
    e = a.exp + b.exp
    if s >= 2.0:
        s *= 0.5
        e += 1
    return _raw(a.sign * b.sign, s, _check_exp(e))


def xdiv(a: XReal, b: XReal) -> XReal:
    if b.sign == 0:
        raise XDomainError("division by zero")
    if a.sign == 0:
        return ZERO
    s = a.sig / b.sig
    e = a.exp - b.exp
    if s < 1.0:
        s *= 2.0
        e -= 1
    return _raw(a.sign * b.sign, s, _check_exp(e))


def xadd(a: XReal, b: XReal) -> XReal:
    """Sum of two extended reals.

    When the exponents differ by more than 64 the smaller operand is dropped
    and the larger one returned unchanged.
    """
    if a.sign == 0:
        return b
    if b.sign == 0:
        return a
    if a.exp < b.exp:
        a, b = b, a
    gap = a.exp - b.exp
    if gap > STICKY_GAP:
        return a
    s = a.sign * a.sig + b.sign * math.ldexp(b.sig, -gap)
    if s == 0.0:
        return ZERO
    m, e = math.frexp(abs(s))
    return _raw(1 if s > 0 else -1, 2.0 * m, _check_exp(a.exp + e - 1))


def xsub(a: XReal, b: XReal) -> XReal:
    return xadd(a, -b)


def xlog2(a: XReal) -> float:
    if a.sign <= 0:
        raise XDomainError("log2 of a nonpositive value")
    return a.exp + math.log2(a.sig)


def xpow2(y: float) -> XReal:
    """``2**y`` for an ordinary real ``y`` (any magnitude the exponent range allows)."""
    if not math.isfinite(y):
        raise XDomainError(f"non-finite exponent {y!r}")
    e = math.floor(y)
    return xnormalize(1, 2.0 ** (y - e), int(e))


def xpow(a: XReal, t: float) -> XReal:
    """``a**t`` for positive ``a``, via the log2 representation."""
    if a.sign <= 0:
        raise XDomainError("real power of a nonpositive value")
    if t == 0:
        return ONE
    return xpow2(t * xlog2(a))


def xsum(values) -> XReal:
    """Pairwise (balanced-tree) sum; the reduction order depends only on ``len(values)``."""
    vals = list(values)
    if not vals:
        return ZERO
    while len(vals) > 1:
        nxt = [xadd(vals[i], vals[i + 1]) for i in range(0, len(vals) - 1, 2)]
        if len(vals) % 2:
            nxt.append(vals[-1])
        vals = nxt
    return vals[0]


# ---------------------------------------------------------------------------
# rendering


def render_exact(x: XReal) -> str:
    """Exact ``+m*2^e`` form; ``m`` is the shortest repr that round-trips."""
    if x.sign == 0:
        return "0*2^0"
    return f"{'+' if x.sign > 0 else '-'}{x.sig!r}*2^{x.exp}"


_EXACT_RE = re.compile(r"^([+-]?)([0-9.eE+-]+)\*2\^(-?\d+)$")


def parse_exact(text: str) -> XReal:
    m = _EXACT_RE.match(text.strip())
    if not m:
        raise XDomainError(f"not an exact extended real: {text!r}")
    sign = -1 if m.group(1) == "-" else 1
    return xnormalize(sign, float(m.group(2)), int(m.group(3)))


def render_decimal(x: XReal, digits: int = 6) -> str:
    """Base-10 scientific rendering ``+d.dddddde+E``."""
    if x.sign == 0:
        return "+" + format(0.0, f".{digits}e")
    sign = "+" if x.sign > 0 else "-"
    if abs(x.exp) < _FLOAT_SAFE:
        return sign + format(math.ldexp(x.sig, x.exp), f".{digits}e")
    with localcontext() as ctx:
        ctx.prec = 60
        l10 = Decimal(x.exp) * _LOG10_2 + Decimal(math.log10(x.sig))
        e10 = int(l10.to_integral_value(rounding="ROUND_FLOOR"))
        frac = float(l10 - e10)
    mant = format(10.0 ** frac, f".{digits}f")
    if mant.startswith("10"):
        e10 += 1
        mant = format(10.0 ** (frac - 1.0), f".{digits}f")
    return f"{sign}{mant}e{e10:+03d}"


# ---------------------------------------------------------------------------
# complex


class XComplex:
    """Extended complex value with independent extended real and imaginary parts."""

    __slots__ = ("re", "im")

    def __init__(self, re: XReal, im: XReal = ZERO):
        object.__setattr__(self, "re", _coerce(re))
        object.__setattr__(self, "im", _coerce(im))

    def __setattr__(self, name, value):
        raise AttributeError("XComplex is immutable")

    def __reduce__(self):
        return (XComplex, (self.re, self.im))

    @classmethod
    def from_complex(cls, z: complex) -> "XComplex":
        z = complex(z)
        return cls(XReal.from_float(z.real), XReal.from_float(z.imag))

    @classmethod
    def from_polar(cls, log2_r: float, theta: float) -> "XComplex":
        e = math.floor(log2_r)
        m = 2.0 ** (log2_r - e)
        c, s = math.cos(theta), math.sin(theta)
        return cls(
            xnormalize(1 if c >= 0 else -1, abs(m * c), e),
            xnormalize(1 if s >= 0 else -1, abs(m * s), e),
        )

    def to_complex(self) -> complex:
        return complex(float(self.re), float(self.im))

    def is_zero(self) -> bool:
        return self.re.sign == 0 and self.im.sign == 0

    def conj(self) -> "XComplex":
        return XComplex(self.re, -self.im)

    def __neg__(self) -> "XComplex":
        return XComplex(-self.re, -self.im)

    def __add__(self, other) -> "XComplex":
        o = _ccoerce(other)
        return XComplex(xadd(self.re, o.re), xadd(self.im, o.im))

    __radd__ = __add__

    def __sub__(self, other) -> "XComplex":
        o = _ccoerce(other)
        return XComplex(xadd(self.re, -o.re), xadd(self.im, -o.im))

    def __rsub__(self, other) -> "XComplex":
        return _ccoerce(other) - self

    def __mul__(self, other) -> "XComplex":
        if isinstance(other, (XReal, int, float)):
            r = _coerce(other)
            return XComplex(xmul(self.re, r), xmul(self.im, r))
        o = _ccoerce(other)
        return XComplex(
            xadd(xmul(self.re, o.re), -xmul(self.im, o.im)),
            xadd(xmul(self.re, o.im), xmul(self.im, o.re)),
        )

    __rmul__ = __mul__

    def __truediv__(self, other) -> "XComplex":
        if isinstance(other, (XReal, int, float)):
            r = _coerce(other)
            return XComplex(xdiv(self.re, r), xdiv(self.im, r))
        o = _ccoerce(other)
        if o.is_zero():
            raise XDomainError("division by zero")
        # scale the divisor to O(1) first so |o|^2 never loses range
        e = max(p.exp for p in (o.re, o.im) if p.sign != 0)
        shift = _raw(1, 1.0, -e)
        dr, di = xmul(o.re, shift), xmul(o.im, shift)
        den = xadd(xmul(dr, dr), xmul(di, di))
        num = self * XComplex(dr, -di)
        return XComplex(xdiv(xmul(num.re, shift), den), xdiv(xmul(num.im, shift), den))

    def __rtruediv__(self, other) -> "XComplex":
        return _ccoerce(other) / self

    def __eq__(self, other) -> bool:
        if not isinstance(other, XComplex):
            return NotImplemented
        return self.re == other.re and self.im == other.im

    def __hash__(self) -> int:
        return hash((self.re, self.im))

    def __repr__(self) -> str:
        return f"XComplex({render_exact(self.re)}, {render_exact(self.im)})"

    def abs(self) -> XReal:
        """Modulus via exponent-aligned hypot."""
        if self.is_zero():
            return ZERO
        e, mr, mi = _aligned(self)
        return xnormalize(1, math.hypot(mr, mi), e)


def _ccoerce(x) -> XComplex:
    if isinstance(x, XComplex):
        return x
    if isinstance(x, XReal):
        return XComplex(x, ZERO)
    if isinstance(x, (int, float, complex)):
        return XComplex.from_complex(complex(x))
    raise TypeError(f"cannot mix XComplex with {type(x).__name__}")


def _aligned(z: XComplex) -> tuple[int, float, float]:
    e = max(p.exp for p in (z.re, z.im) if p.sign != 0)

    def shifted(p: XReal) -> float:
        if p.sign == 0:
            return 0.0
        return p.sign * math.ldexp(p.sig, max(p.exp - e, -1100))

    return e, shifted(z.re), shifted(z.im)


def xc_polar(z: XComplex) -> tuple[float, float]:
    """``(log2|z|, arg z)`` with ``arg`` in ``(-pi, pi]``.

    Both components are aligned to the larger exponent before ``hypot`` and
    ``atan2`` so the common exponent never enters the angle.
    """
    if z.is_zero():
        raise XDomainError("polar form of zero")
    e, mr, mi = _aligned(z)
    if mi == 0.0:
        mi = 0.0  # drop a negative zero so the axis maps to +pi, not -pi
    return e + math.log2(math.hypot(mr, mi)), math.atan2(mi, mr)


# ---------------------------------------------------------------------------
# vectorised complex


_NEG_SENTINEL = np.int64(-(1 << 62) - 4096)


class XCArray:
    """Vector of extended complex numbers ``(re + i*im) * 2**exp``.

    After normalisation ``max(|re|, |im|)`` lies in ``[0.5, 1)``; zeros carry
    ``exp == 0``.
    """

    __slots__ = ("re", "im", "exp")

    def __init__(self, re, im, exp, normalize: bool = True):
        self.re = np.asarray(re, dtype=np.float64)
        self.im = np.asarray(im, dtype=np.float64)
        self.exp = np.asarray(exp, dtype=np.int64)
        if normalize:
            self._normalize()

    def _normalize(self) -> None:
        m = np.maximum(np.abs(self.re), np.abs(self.im))
        _, x = np.frexp(m)
        x = x.astype(np.int64)
        self.re = np.ldexp(self.re, -x)
        self.im = np.ldexp(self.im, -x)
        self.exp = np.where(m == 0.0, 0, self.exp + x)
        if self.exp.size and int(np.abs(self.exp).max()) > EXP_LIMIT:
            raise XRangeError("binary exponent outside +-2**62 in vector operation")

    def __len__(self) -> int:
        return self.re.shape[0]

    @classmethod
    def from_xcomplex(cls, values) -> "XCArray":
        values = list(values)
        n = len(values)
        re, im = np.zeros(n), np.zeros(n)
        exp = np.zeros(n, dtype=np.int64)
        for i, z in enumerate(values):
            if z.is_zero():
                continue
            e, mr, mi = _aligned(z)
            re[i], im[i], exp[i] = mr, mi, e
        return cls(re, im, exp)

    @classmethod
    def from_polar(cls, log2_r, theta) -> "XCArray":
        log2_r = np.asarray(log2_r, dtype=np.float64)
        theta = np.asarray(theta, dtype=np.float64)
        e = np.floor(log2_r)
        m = np.exp2(log2_r - e)
        return cls(m * np.cos(theta), m * np.sin(theta), e.astype(np.int64))

    def to_xcomplex(self) -> list[XComplex]:
        out = []
        for r, i, e in zip(self.re.tolist(), self.im.tolist(), self.exp.tolist()):
            out.append(XComplex(
                xnormalize(1 if r >= 0 else -1, abs(r), e),
                xnormalize(1 if i >= 0 else -1, abs(i), e),
            ))
        return out

    def take(self, idx) -> "XCArray":
        return XCArray(self.re[idx], self.im[idx], self.exp[idx], normalize=False)

    def is_zero(self) -> np.ndarray:
        return (self.re == 0.0) & (self.im == 0.0)

    def mul(self, other: "XCArray") -> "XCArray":
        re = self.re * other.re - self.im * other.im
        im = self.re * other.im + self.im * other.re
        return XCArray(re, im, self.exp + other.exp)

    def scale(self, x: XReal) -> "XCArray":
        """Multiply by an extended real scalar."""
        s = x.sign * x.sig
        return XCArray(self.re * s, self.im * s, self.exp + x.exp)

    def add(self, other: "XCArray") -> "XCArray":
        ea = np.where(self.is_zero(), _NEG_SENTINEL, self.exp)
        eb = np.where(other.is_zero(), _NEG_SENTINEL, other.exp)
        e = np.maximum(ea, eb)
        da = np.clip(ea - e, -1100, 0)
        db = np.clip(eb - e, -1100, 0)
        re = np.ldexp(self.re, da) + np.ldexp(other.re, db)
        im = np.ldexp(self.im, da) + np.ldexp(other.im, db)
        return XCArray(re, im, np.where(e == _NEG_SENTINEL, 0, e))

    def sub(self, other: "XCArray") -> "XCArray":
        return self.add(XCArray(-other.re, -other.im, other.exp, normalize=False))

    def log2abs(self) -> np.ndarray:
        with np.errstate(divide="ignore"):
            return np.log2(np.hypot(self.re, self.im)) + self.exp

    def arg(self) -> np.ndarray:
        return np.arctan2(self.im + 0.0, self.re)

    def abs_parts(self) -> tuple[np.ndarray, np.ndarray]:
        """``|z|`` as canonical ``(significand in [1,2), exponent)`` arrays; zeros give (0, 0)."""
        h = np.hypot(self.re, self.im)
        m, x = np.frexp(h)
        sig = 2.0 * m
        exp = np.where(h == 0.0, 0, self.exp + x.astype(np.int64) - 1)
        return sig, exp

    def to_complex(self) -> np.ndarray:
        e = np.clip(self.exp, -1100, 1100)
        return np.ldexp(self.re, e) + 1j * np.ldexp(self.im, e)
