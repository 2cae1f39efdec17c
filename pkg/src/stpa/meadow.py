"""Exact scalar arithmetic for times, periods and coordinates.

Scalars are arbitrary-precision rationals in canonical reduced form
(``fractions.Fraction``), closed under addition, multiplication, additive
inverse, the totalized multiplicative inverse (0 ** -1 = 0), signum, and a
totalized square root that is exact-or-error: a radicand whose absolute
value is not the square of a rational raises :class:`NotRepresentable`.

The order predicates and min/max are computed from signum, not from native
comparison: ``u < v`` iff ``sign(u - v) = -1``, ``u <= v`` iff
``sign(sign(u - v) - 1) = -1``, and min/max use the self-division trick
(0/0 = 0 in a meadow) to select the branch without conditionals.

A distinguished infinity extends scalars where the algebra allows it
(inaction times, receive-window upper bounds); it never enters plain
scalar arithmetic.
"""

from __future__ import annotations

import random
from fractions import Fraction
from math import isqrt
from typing import NamedTuple, Union

Scalar = Fraction

ZERO = Fraction(0)
ONE = Fraction(1)


class NotRepresentable(ValueError):
    """A requested value has no exact rational representation."""


class Infinity:
    """The single point at infinity used by ExtScalar."""

    _instance = None

    def __new__(cls):
        if cls._instance is None:
            cls._instance = super().__new__(cls)
        return cls._instance

    def __repr__(self):
        return "inf"

    def __hash__(self):
        return hash("stpa-infinity")


INF = Infinity()

ExtScalar = Union[Fraction, Infinity]


def scalar(value) -> Fraction:
    """Build a Scalar from an int, a string like '3/4', or another Scalar."""
    if isinstance(value, Infinity):
        raise ValueError("infinity is not a Scalar")
    return Fraction(value)


def is_inf(x: ExtScalar) -> bool:
    return isinstance(x, Infinity)


def inv(x: Fraction) -> Fraction:
    """Totalized multiplicative inverse: the inverse of zero is zero."""
    if x == 0:
        return ZERO
    return 1 / x


def signum(x: Fraction) -> Fraction:
    if x > 0:
        return ONE
    if x < 0:
        return -ONE
    return ZERO


def sqrt_total(x: Fraction) -> Fraction:
    """Totalized square root: sqrt(u) = -sqrt(-u) below zero, exact or error."""
    if x < 0:
        return -sqrt_total(-x)
    num, den = x.numerator, x.denominator
    rn, rd = isqrt(num), isqrt(den)
    if rn * rn != num or rd * rd != den:
        raise NotRepresentable(f"{x} is not the square of a rational")
    return Fraction(rn, rd)


def _mdiv(a: Fraction, b: Fraction) -> Fraction:
    # meadow division: a / 0 = 0
    return a * inv(b)


def lt(x: Fraction, y: Fraction) -> bool:
    return signum(x - y) == -ONE


def le(x: Fraction, y: Fraction) -> bool:
    return signum(signum(x - y) - ONE) == -ONE


def min2(u: Fraction, v: Fraction) -> Fraction:
    q = signum(signum(u - v) - ONE)
    return _mdiv(q, q) * (u - v) + v


def max2(u: Fraction, v: Fraction) -> Fraction:
    q = signum(signum(u - v) + ONE)
    return _mdiv(q, q) * (u - v) + v


def ext_lt(a: ExtScalar, b: ExtScalar) -> bool:
    """t < inf for finite t; inf < nothing."""
    if is_inf(a):
        return False
    if is_inf(b):
        return True
    return lt(a, b)


def ext_le(a: ExtScalar, b: ExtScalar) -> bool:
    """t <= inf for all t including inf; inf <= no finite t."""
    if is_inf(a):
        return is_inf(b)
    if is_inf(b):
        return True
    return le(a, b)


def ext_add(a: ExtScalar, b: ExtScalar) -> ExtScalar:
    if is_inf(a) or is_inf(b):
        return INF
    return a + b


def ext_max(a: ExtScalar, b: ExtScalar) -> ExtScalar:
    return b if ext_le(a, b) else a


def ext_min(a: ExtScalar, b: ExtScalar) -> ExtScalar:
    return a if ext_le(a, b) else b


def fmt_scalar(x: ExtScalar) -> str:
    """Render a scalar (or infinity) in the CLI syntax."""
    if is_inf(x):
        return "inf"
    if x.denominator == 1:
        return str(x.numerator)
    return f"{x.numerator}/{x.denominator}"


class Point(NamedTuple):
    """A point in space with three exact rational coordinates."""

    u: Fraction
    v: Fraction
    w: Fraction

    def __repr__(self):
        return f"({fmt_scalar(self.u)},{fmt_scalar(self.v)},{fmt_scalar(self.w)})"


def point(u, v, w) -> Point:
    return Point(scalar(u), scalar(v), scalar(w))


ORIGIN = point(0, 0, 0)


def dist(p: Point, q: Point) -> Fraction:
    """Euclidean distance; NotRepresentable if the squared distance is not a rational square."""
    sq = (q.u - p.u) ** 2 + (q.v - p.v) ** 2 + (q.w - p.w) ** 2
    return sqrt_total(sq)


# ---------------------------------------------------------------------------
# Law suite: every equation of the signed-meadow-with-square-root table,
# checkable on random rational instances.  Shared by the test suite and the
# `meadow-selftest` CLI command.

def _rand_scalar(rng: random.Random) -> Fraction:
    return Fraction(rng.randint(-50, 50), rng.randint(1, 12))


def _rand_square(rng: random.Random) -> Fraction:
    base = Fraction(rng.randint(-12, 12), rng.randint(1, 6))
    return base * base * (1 if rng.random() < 0.5 else -1)


def _sq(u):
    return u * u


_LAWS = [
    ("add-assoc", 3, lambda u, v, w: (u + v) + w == u + (v + w)),
    ("add-comm", 2, lambda u, v: u + v == v + u),
    ("add-zero", 1, lambda u: u + ZERO == u),
    ("add-inverse", 1, lambda u: u + (-u) == ZERO),
    ("mul-assoc", 3, lambda u, v, w: (u * v) * w == u * (v * w)),
    ("mul-comm", 2, lambda u, v: u * v == v * u),
    ("mul-one", 1, lambda u: u * ONE == u),
    ("mul-dist", 3, lambda u, v, w: u * (v + w) == u * v + u * w),
    ("inv-invol", 1, lambda u: inv(inv(u)) == u),
    ("restricted-inverse", 1, lambda u: u * (u * inv(u)) == u),
    ("sign-self-div", 1, lambda u: signum(_mdiv(u, u)) == _mdiv(u, u)),
    ("sign-one-minus", 1, lambda u: signum(ONE - _mdiv(u, u)) == ONE - _mdiv(u, u)),
    ("sign-minus-one", 0, lambda: signum(-ONE) == -ONE),
    ("sign-inv", 1, lambda u: signum(inv(u)) == signum(u)),
    ("sign-mul", 2, lambda u, v: signum(u * v) == signum(u) * signum(v)),
    (
        "sign-add",
        2,
        lambda u, v: (ONE - _mdiv(signum(u) - signum(v), signum(u) - signum(v)))
        * (signum(u + v) - signum(u))
        == ZERO,
    ),
]

# (law, arity, draw-squares?, check); sqrt-sign-square holds for every
# rational u since u^2 * sign(u) is always a signed square.
_SQRT_LAWS = [
    ("sqrt-inv", 1, True, lambda u: sqrt_total(inv(u)) == inv(sqrt_total(u))),
    (
        "sqrt-mul",
        2,
        True,
        lambda u, v: sqrt_total(u * v) == sqrt_total(u) * sqrt_total(v),
    ),
    ("sqrt-sign-square", 1, False, lambda u: sqrt_total(_sq(u) * signum(u)) == u),
    (
        "sqrt-order",
        2,
        True,
        lambda u, v: signum(sqrt_total(u) - sqrt_total(v)) == signum(u - v),
    ),
    ("sqrt-odd", 1, True, lambda u: sqrt_total(u) == -sqrt_total(-u)),
]

_DERIVED = [
    ("inv-zero", 0, lambda: inv(ZERO) == ZERO),
]


def law_suite(samples: int = 1000, seed: int = 0) -> list:
    """Check every arithmetic law on random rationals.

    Square-root laws draw representable radicands only.  Returns a list of
    (law name, ok, checked-count) triples.
    """
    rng = random.Random(seed)
    results = []
    for name, arity, law in _LAWS + _DERIVED:
        ok, n = True, 0
        for _ in range(samples if arity else 1):
            args = [_rand_scalar(rng) for _ in range(arity)]
            n += 1
            if not law(*args):
                ok = False
                break
        results.append((name, ok, n))
    for name, arity, squares, law in _SQRT_LAWS:
        ok, n = True, 0
        draw = _rand_square if squares else _rand_scalar
        for _ in range(samples):
            args = [draw(rng) for _ in range(arity)]
            n += 1
            try:
                if not law(*args):
                    ok = False
                    break
            except NotRepresentable:
                ok = False
                break
        results.append((name, ok, n))
    return results
