import math
import pickle
from fractions import Fraction

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from repeller.errors import XDomainError, XRangeError
from repeller.xnum import (
    EXP_LIMIT,
    ONE,
    ZERO,
    XCArray,
    XComplex,
    XReal,
    parse_exact,
    render_decimal,
    render_exact,
    xadd,
    xc_polar,
    xdiv,
    xlog2,
    xmul,
    xnormalize,
    xpow,
    xpow2,
    xsub,
    xsum,
)

sigs = st.floats(min_value=1.0, max_value=2.0, exclude_max=True)
small_exps = st.integers(min_value=-200, max_value=200)
huge_exps = st.integers(min_value=-10 ** 6, max_value=10 ** 6)
signs = st.sampled_from([-1, 1])


@st.composite
def xreals(draw, exps=small_exps):
    return XReal(draw(signs), draw(sigs), draw(exps))


def exact(x: XReal) -> Fraction:
    return x.sign * Fraction(x.sig) * Fraction(2) ** x.exp


def rel_close(x: XReal, q: Fraction, tol: float) -> bool:
    if q == 0:
        return x.sign == 0
    return abs(exact(x) - q) <= abs(q) * Fraction(tol)


# --- normalisation -----------------------------------------------------------


def test_normalize_canonical_examples():
    z = xnormalize(1, 3.0, 4)
    assert (z.sign, z.sig, z.exp) == (1, 1.5, 5)
    z = xnormalize(-1, 0.75, 0)
    assert (z.sign, z.sig, z.exp) == (-1, 1.5, -1)
    assert xnormalize(1, 0.0, 99) == ZERO
    assert (ZERO.sign, ZERO.sig, ZERO.exp) == (0, 1.0, 0)


def test_normalize_rejects_out_of_range_exponent():
    with pytest.raises(XRangeError):
        xnormalize(1, 1.0, EXP_LIMIT + 1)
    with pytest.raises(XRangeError):
        xmul(XReal(1, 1.5, EXP_LIMIT - 1), XReal(1, 1.5, 10))


def test_from_float_rejects_non_finite():
    for bad in (math.inf, -math.inf, math.nan):
        with pytest.raises(XDomainError):
            XReal.from_float(bad)


def test_immutable_and_picklable():
    x = XReal(1, 1.25, 7)
    with pytest.raises(AttributeError):
        x.exp = 3
    assert pickle.loads(pickle.dumps(x)) == x
    z = XComplex(x, -x)
    assert pickle.loads(pickle.dumps(z)) == z


@given(st.floats(allow_nan=False, allow_infinity=False))
def test_float_round_trip(x):
    assert float(XReal.from_float(x)) == x


# --- arithmetic against exact rationals ---------------------------------------


@given(xreals(), xreals())
def test_mul_div_exact_oracle(a, b):
    assert rel_close(xmul(a, b), exact(a) * exact(b), 2.0 ** -52)
    assert rel_close(xdiv(a, b), exact(a) / exact(b), 2.0 ** -52)


@given(xreals(st.integers(-40, 40)), xreals(st.integers(-40, 40)))
def test_add_exact_oracle(a, b):
    q = exact(a) + exact(b)
    got = xadd(a, b)
    # one rounding of the aligned sum, relative to the larger operand
    assert abs(exact(got) - q) <= max(abs(exact(a)), abs(exact(b))) * Fraction(2.0 ** -52)


def test_add_drops_operand_beyond_sticky_gap():
    big = XReal(1, 1.0, 100)
    tiny = XReal(1, 1.0, 100 - 65)
    assert xadd(big, tiny) == big
    assert xadd(tiny, big) == big
    assert xsub(big, big) == ZERO


def test_add_exact_cancellation():
    a = XReal(1, 1.0, 40)
    b = XReal(1, 1.0 + 2.0 ** -52, 40)
    assert xsub(b, a) == XReal(1, 1.0, 40 - 52)


@given(xreals(), xreals())
def test_ordering_matches_rationals(a, b):
    qa, qb = exact(a), exact(b)
    assert (a < b) == (qa < qb)
    assert (a == b) == (qa == qb)
    assert (a >= b) == (qa >= qb)


@given(xreals(huge_exps))
def test_log2_and_pow2_round_trip(x):
    x = abs(x)
    assert math.isclose(xlog2(xpow2(xlog2(x))), xlog2(x), rel_tol=1e-15, abs_tol=1e-12)


def test_pow_and_log_known_values():
    assert xlog2(XReal(1, 1.0, 10 ** 6)) == 10 ** 6
    assert xpow(XReal(1, 1.0, 4), 0.5) == XReal(1, 1.0, 2)
    assert xpow(XReal(1, 1.5, 3), 0) == ONE
    with pytest.raises(XDomainError):
        xlog2(ZERO)
    with pytest.raises(XDomainError):
        xpow(XReal(-1, 1.0, 0), 0.5)


def test_sum_order_depends_only_on_length():
    vals = [XReal(1, 1.0 + i / 16, i) for i in range(13)]
    assert xsum(vals) == xsum(list(vals))
    assert xsum([]) == ZERO
    assert float(xsum([XReal.from_float(v) for v in (1.0, 2.0, 3.0)])) == 6.0


@settings(max_examples=30)
@given(st.lists(st.tuples(sigs, st.integers(-10 ** 6, 10 ** 6)), min_size=1, max_size=1000))
def test_product_chain_matches_log_domain(factors):
    acc = ONE
    for s, e in factors:
        acc = xmul(acc, XReal(1, s, e))
    oracle = math.fsum(math.log2(s) for s, _ in factors) + sum(e for _, e in factors)
    assert abs(xlog2(acc) - oracle) <= 1e-9


# --- rendering -----------------------------------------------------------------


@given(xreals(huge_exps))
def test_exact_rendering_round_trips(x):
    assert parse_exact(render_exact(x)) == x


def test_render_examples():
    assert render_exact(XReal.from_float(16000.0)) == "+1.953125*2^13"
    assert render_exact(ZERO) == "0*2^0"
    assert render_decimal(XReal.from_float(16000.0)) == "+1.600000e+04"
    assert render_decimal(XReal(1, 1.0, 3000)) == "+1.230232e+903"  # 2^3000 = 1.2302319...e903
    assert render_decimal(XReal(-1, 1.0, -3000)) == "-8.128549e-904"


def test_parse_rejects_garbage():
    with pytest.raises(XDomainError):
        parse_exact("1.5e3")


# --- complex -------------------------------------------------------------------

complexes = st.complex_numbers(max_magnitude=1e100, min_magnitude=1e-100, allow_nan=False, allow_infinity=False)


@given(complexes, complexes)
def test_complex_ops_match_python(u, v):
    xu, xv = XComplex.from_complex(u), XComplex.from_complex(v)
    assert abs((xu * xv).to_complex() - u * v) <= 1e-14 * abs(u * v)
    assert abs((xu / xv).to_complex() - u / v) <= 1e-14 * abs(u / v)
    assert abs((xu + xv).to_complex() - (u + v)) <= 1e-14 * (abs(u) + abs(v))
    assert abs((xu - xv).to_complex() - (u - v)) <= 1e-14 * (abs(u) + abs(v))


@given(st.floats(-1e5, 1e5), st.floats(-math.pi + 1e-9, math.pi))
def test_polar_round_trip(rho, theta):
    z = XComplex.from_polar(rho, theta)
    r2, t2 = xc_polar(z)
    assert math.isclose(r2, rho, abs_tol=1e-9)
    assert abs((t2 - theta + math.pi) % (2 * math.pi) - math.pi) < 1e-12


def test_complex_abs_beyond_double_range():
    z = XComplex(XReal(1, 1.5, 5000), XReal(-1, 1.5, 5000))
    assert math.isclose(xlog2(z.abs()), 5000 + math.log2(1.5 * math.sqrt(2)), rel_tol=1e-15)
    assert xc_polar(z)[1] == pytest.approx(-math.pi / 4)


def test_negative_zero_imag_does_not_flip_angle():
    z = XComplex.from_complex(complex(-2.0, -0.0))
    assert xc_polar(z)[1] == pytest.approx(math.pi)


def test_complex_division_by_zero():
    with pytest.raises(XDomainError):
        XComplex.from_complex(1 + 1j) / XComplex(ZERO, ZERO)


# --- arrays --------------------------------------------------------------------


@given(st.lists(st.tuples(st.floats(-300, 300), st.floats(-math.pi, math.pi)), min_size=1, max_size=40),
       st.lists(st.tuples(st.floats(-300, 300), st.floats(-math.pi, math.pi)), min_size=1, max_size=40))
def test_array_ops_match_scalar_ops(pa, pb):
    n = min(len(pa), len(pb))
    pa, pb = pa[:n], pb[:n]
    A = XCArray.from_polar(np.array([r for r, _ in pa]), np.array([t for _, t in pa]))
    B = XCArray.from_polar(np.array([r for r, _ in pb]), np.array([t for _, t in pb]))
    sa, sb = A.to_xcomplex(), B.to_xcomplex()
    prod = A.mul(B).to_xcomplex()
    summ = A.add(B).to_xcomplex()
    for i in range(n):
        want = sa[i] * sb[i]
        assert math.isclose(xc_polar(prod[i])[0], xc_polar(want)[0], abs_tol=1e-12)
        s_want = sa[i] + sb[i]
        if not s_want.is_zero():
            scale = max(xlog2(sa[i].abs()), xlog2(sb[i].abs()))
            diff = summ[i] - s_want
            assert diff.is_zero() or xlog2(diff.abs()) < scale - 50


def test_array_elementwise_independent_of_batch():
    rho = np.linspace(-50, 50, 17)
    theta = np.linspace(-3, 3, 17)
    full = XCArray.from_polar(rho, theta)
    sq = full.mul(full)
    for i in (0, 5, 16):
        one = XCArray.from_polar(rho[i:i + 1], theta[i:i + 1])
        single = one.mul(one)
        assert single.re[0] == sq.re[i] and single.im[0] == sq.im[i] and single.exp[0] == sq.exp[i]


def test_array_scale_log2abs_and_zero():
    z = XCArray.from_xcomplex([XComplex.from_complex(3 + 4j), XComplex(ZERO, ZERO)])
    assert z.is_zero().tolist() == [False, True]
    big = z.scale(XReal(1, 1.0, 10 ** 5))
    assert big.log2abs()[0] == pytest.approx(10 ** 5 + math.log2(5.0))
    sig, exp = big.abs_parts()
    assert 1.0 <= sig[0] < 2.0 and exp[0] == 10 ** 5 + 2
