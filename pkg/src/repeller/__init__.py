"""Numerical toolkit for an entire function whose bounded orbits form a
family of conformal repellers of arbitrarily small dimension.

Modules: ``xnum`` (extended-exponent arithmetic), ``construction`` (scales
and evaluation of f), ``verifier`` (mapping inequalities), ``dynamics``
(orbits and escape certificates), ``inverse`` (preimage trees),
``dimension`` (pressure and dimension estimates), ``render`` and ``cli``.
"""

from .construction import Params, Scales, build_scales, eval_f, eval_f_prime, region_of
from .xnum import XCArray, XComplex, XReal

__all__ = [
    "Params",
    "Scales",
    "XCArray",
    "XComplex",
    "XReal",
    "build_scales",
    "eval_f",
    "eval_f_prime",
    "region_of",
]
__version__ = "0.1.0"
