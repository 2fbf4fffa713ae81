"""Exact arithmetic on the circle group.

Points of the circle are stored as rational angles ``t`` in ``[0, 1)`` standing
for ``exp(2*pi*i*t)``.  Group arithmetic is exact.  Chord distances
``|exp(2*pi*i*a) - exp(2*pi*i*b)| = 2*sin(pi*d)`` (``d`` the arc distance) are
only ever *compared* against thresholds, using MPFR directed rounding through
gmpy2 and doubling the working precision until the comparison is unambiguous.
"""

from __future__ import annotations

import bisect
from dataclasses import dataclass
from fractions import Fraction
from functools import lru_cache
from typing import Iterable, Union

import gmpy2

DEFAULT_PRECISION = 64
MAX_PRECISION = 1 << 16

Rational = Union[Fraction, int]


class BoundaryUnresolved(ArithmeticError):
    """A chord comparison could not be separated at the precision cap."""


@dataclass(frozen=True, order=True)
class Angle:
    """A point of the circle, ``exp(2*pi*i*value)`` with ``0 <= value < 1``."""

    value: Fraction

    def __post_init__(self):
        v = self.value if isinstance(self.value, Fraction) else Fraction(self.value)
        object.__setattr__(self, "value", v - (v.numerator // v.denominator))

    @classmethod
    def parse(cls, text: str) -> "Angle":
        return cls(Fraction(text.strip()))

    @property
    def denominator(self) -> int:
        return self.value.denominator

    @property
    def numerator(self) -> int:
        return self.value.numerator

    def is_identity(self) -> bool:
        return self.value == 0

    def __add__(self, other: "Angle") -> "Angle":
        return Angle(self.value + other.value)

    def __sub__(self, other: "Angle") -> "Angle":
        return Angle(self.value - other.value)

    def __neg__(self) -> "Angle":
        return Angle(-self.value)

    def __mul__(self, n: int) -> "Angle":
        return Angle(self.value * n)

    __rmul__ = __mul__

    def __str__(self) -> str:
        return f"{self.value.numerator}/{self.value.denominator}"

    def __repr__(self) -> str:
        return f"Angle({self})"


IDENTITY = Angle(Fraction(0))


def angle_combine(a: Angle, b: Angle) -> Angle:
    return a + b


def angle_inverse(a: Angle) -> Angle:
    return -a


def arc_distance(a: Angle, b: Angle) -> Fraction:
    """Arc distance in turns, a rational in ``[0, 1/2]``."""
    d = (a - b).value
    return min(d, 1 - d)


@dataclass(frozen=True)
class RootsOfUnity:
    """``R_n``, the ``n``-th roots of unity, as the angles ``k/n``."""

    n: int

    def __post_init__(self):
        if self.n < 1:
            raise ValueError(f"roots of unity need n >= 1, got {self.n}")

    def __contains__(self, a: Angle) -> bool:
        return (a.value * self.n).denominator == 1

    def angles(self) -> list[Angle]:
        return [Angle(Fraction(k, self.n)) for k in range(self.n)]


@dataclass(frozen=True)
class ValueRange:
    """Closure of the set of character values: the full circle or some ``R_m``."""

    roots: int | None = None

    @classmethod
    def full(cls) -> "ValueRange":
        return cls(None)

    @property
    def is_full(self) -> bool:
        return self.roots is None

    def __contains__(self, a: Angle) -> bool:
        return self.roots is None or a in RootsOfUnity(self.roots)

    def __str__(self) -> str:
        return "FullCircle" if self.roots is None else f"Roots({self.roots})"


FULL_CIRCLE = ValueRange(None)


@dataclass(frozen=True)
class PiMultiple:
    """The irrational threshold ``pi * factor``."""

    factor: Fraction


Threshold = Union[Fraction, int, PiMultiple]


# --- certified enclosures -------------------------------------------------

@lru_cache(maxsize=32)
def _contexts(prec: int):
    return (gmpy2.context(precision=prec, round=gmpy2.RoundDown),
            gmpy2.context(precision=prec, round=gmpy2.RoundUp))


def _to_fraction(x) -> Fraction:
    q = gmpy2.mpq(x)
    return Fraction(int(q.numerator), int(q.denominator))


def sin_pi_bounds(d: Fraction, prec: int = DEFAULT_PRECISION):
    """MPFR bounds on ``sin(pi*d)`` for ``0 <= d <= 1/2``."""
    down, up = _contexts(prec)
    if d == 0:
        return gmpy2.mpfr(0), gmpy2.mpfr(0)
    if d * 2 == 1:
        return gmpy2.mpfr(1), gmpy2.mpfr(1)
    q = gmpy2.mpq(d.numerator, d.denominator)
    lo = down.sin(down.mul(down.const_pi(), q))
    arg_hi = up.mul(up.const_pi(), q)
    if arg_hi <= down.div(down.const_pi(), 2):
        hi = up.sin(arg_hi)
    else:
        hi = gmpy2.mpfr(1)
    return lo, hi


def chord_bounds(d: Fraction, prec: int = DEFAULT_PRECISION) -> tuple[Fraction, Fraction]:
    """Rational enclosure of the chord ``2*sin(pi*d)`` for an arc distance ``d``."""
    lo, hi = sin_pi_bounds(d, prec)
    return 2 * _to_fraction(lo), 2 * _to_fraction(hi)


def chord_upper(a: Angle, b: Angle, prec: int = DEFAULT_PRECISION) -> Fraction:
    return chord_bounds(arc_distance(a, b), prec)[1]


def unit_box(num: int, den: int, prec: int = DEFAULT_PRECISION):
    """Bounds ``(cos_lo, cos_hi, sin_lo, sin_hi)`` of ``exp(2*pi*i*num/den)``.

    ``num/den`` need not be reduced or lie in ``[0, 1)``.
    """
    return _unit_box(num % den, den, prec)


@lru_cache(maxsize=4096)
def _pi_bounds(prec: int):
    down, up = _contexts(prec)
    return down.const_pi(), up.const_pi(), down.div(down.const_pi(), 2)


@lru_cache(maxsize=4096)
def _unit_box(num: int, den: int, prec: int):
    quarter, rem = divmod(4 * num, den)
    down, up = _contexts(prec)
    # offset inside the quadrant is rem/(4*den) turns, i.e. pi*rem/(2*den) radians
    if rem == 0:
        c_lo = c_hi = gmpy2.mpfr(1)
        s_lo = s_hi = gmpy2.mpfr(0)
    else:
        pi_lo, pi_hi, half_pi_lo = _pi_bounds(prec)
        u = gmpy2.mpq(rem, 2 * den)
        arg_lo = down.mul(pi_lo, u)
        arg_hi = up.mul(pi_hi, u)
        s_lo = down.sin(arg_lo)
        c_hi = up.cos(arg_lo)
        c_lo = down.cos(arg_hi)
        if arg_hi <= half_pi_lo:
            s_hi = up.sin(arg_hi)
        else:
            s_hi = gmpy2.mpfr(1)
    if quarter == 0:
        return c_lo, c_hi, s_lo, s_hi
    neg = down.minus  # exact at equal precision
    if quarter == 1:
        return neg(s_hi), neg(s_lo), c_lo, c_hi
    if quarter == 2:
        return neg(c_hi), neg(c_lo), neg(s_hi), neg(s_lo)
    return s_lo, s_hi, neg(c_hi), neg(c_lo)


# chord^2 = 2 - 2*cos(2*pi*d) is rational exactly at these arc distances
_RATIONAL_CHORD_SQUARED = {
    Fraction(0): Fraction(0),
    Fraction(1, 6): Fraction(1),
    Fraction(1, 4): Fraction(2),
    Fraction(1, 3): Fraction(3),
    Fraction(1, 2): Fraction(4),
}


def _threshold_bounds(eps: Threshold, prec: int) -> tuple[Fraction, Fraction]:
    if isinstance(eps, PiMultiple):
        down, up = _contexts(prec)
        f = gmpy2.mpq(eps.factor.numerator, eps.factor.denominator)
        return (_to_fraction(down.mul(down.const_pi(), f)),
                _to_fraction(up.mul(up.const_pi(), f)))
    e = Fraction(eps)
    return e, e


def compare_chord(d: Fraction, eps: Threshold, prec: int = DEFAULT_PRECISION) -> int:
    """Sign of ``2*sin(pi*d) - eps`` for an arc distance ``0 <= d <= 1/2``.

    Exact: special angles are settled symbolically, everything else by
    refining interval enclosures.  For rational ``d`` off the special set the
    chord is irrational, so a rational ``eps`` is never hit and refinement
    terminates; ``pi``-multiples are transcendental and likewise separate.
    """
    d = Fraction(d)
    if not 0 <= d <= Fraction(1, 2):
        raise ValueError(f"arc distance must lie in [0, 1/2], got {d}")
    if isinstance(eps, PiMultiple):
        if eps.factor < 0:
            raise ValueError("threshold must be nonnegative")
        if d == 0 or eps.factor == 0:
            return (d > 0) - (eps.factor > 0)
    else:
        eps = Fraction(eps)
        if eps < 0:
            raise ValueError("threshold must be nonnegative")
        sq = _RATIONAL_CHORD_SQUARED.get(d)
        if sq is not None:
            return (sq > eps * eps) - (sq < eps * eps)
    while prec <= MAX_PRECISION:
        c_lo, c_hi = chord_bounds(d, prec)
        e_lo, e_hi = _threshold_bounds(eps, prec)
        if c_hi < e_lo:
            return -1
        if c_lo > e_hi:
            return 1
        prec *= 2
    raise BoundaryUnresolved(f"chord at arc distance {d} vs {eps}")


def chord_leq(a: Angle, b: Angle, eps: Threshold, prec: int = DEFAULT_PRECISION) -> bool:
    """``|exp(2*pi*i*a) - exp(2*pi*i*b)| <= eps``, decided exactly."""
    return compare_chord(arc_distance(a, b), eps, prec) <= 0


def chord_lt(a: Angle, b: Angle, eps: Threshold, prec: int = DEFAULT_PRECISION) -> bool:
    return compare_chord(arc_distance(a, b), eps, prec) < 0


def _within(d: Fraction, eps: Threshold, strict: bool) -> bool:
    c = compare_chord(d, eps)
    return c < 0 if strict else c <= 0


def neighborhood_covers(S: Iterable[Angle], eps: Threshold, target: ValueRange,
                        strict: bool = False) -> bool:
    """Whether every point of ``target`` lies within chord ``eps`` of ``S``.

    Closed comparison by default; ``strict=True`` gives the open neighborhood.
    """
    pts = sorted(set(S))
    if not pts:
        raise ValueError("neighborhood_covers needs a nonempty set")
    if target.is_full:
        vals = [p.value for p in pts]
        gaps = [b - a for a, b in zip(vals, vals[1:])] + [vals[0] + 1 - vals[-1]]
        # the worst point of each gap is its midpoint
        return _within(max(gaps) / 2, eps, strict)
    vals = [p.value for p in pts]
    for r in RootsOfUnity(target.roots).angles():
        i = bisect.bisect_left(vals, r.value)
        nearest = min(arc_distance(r, pts[i % len(pts)]), arc_distance(r, pts[i - 1]))
        if not _within(nearest, eps, strict):
            return False
    return True


@dataclass(frozen=True)
class Coset:
    """The finite set ``offset + R_order``."""

    offset: Angle
    order: int

    def angles(self) -> list[Angle]:
        return [self.offset + a for a in RootsOfUnity(self.order).angles()]

    def distance_to(self, a: Angle) -> Fraction:
        t = ((a - self.offset).value * self.order) % 1
        return min(t, 1 - t) / self.order


@dataclass(frozen=True)
class Arc:
    """The open arc from ``start`` of length ``length`` turns."""

    start: Angle
    length: Fraction

    def distance_to(self, a: Angle) -> Fraction:
        if self.length >= 1:
            return Fraction(0)
        t = (a - self.start).value
        if t <= self.length:
            return Fraction(0)
        return min(t - self.length, 1 - t)


def image_covers(image: Union[Coset, Arc], eps: Threshold, target: ValueRange,
                 strict: bool = True) -> bool:
    """Coverage test for a coset of roots of unity or an open arc.

    Distances are to the closure of ``image``, which is what the open
    neighborhood of an open arc needs.
    """
    if target.is_full:
        if isinstance(image, Coset):
            worst = Fraction(1, 2 * image.order)
        elif image.length >= 1:
            return True
        else:
            worst = (1 - image.length) / 2
        return _within(worst, eps, strict)
    return all(_within(image.distance_to(r), eps, strict)
               for r in RootsOfUnity(target.roots).angles())


def arc_radius_bounds(eps: Threshold, prec: int = DEFAULT_PRECISION) -> tuple[Fraction, Fraction]:
    """Rational ``lo <= d* <= hi`` for the arc distance ``d*`` whose chord is ``eps``."""
    down, up = _contexts(prec)
    e_lo, e_hi = _threshold_bounds(eps, prec)
    if e_lo >= 2:
        return Fraction(1, 2), Fraction(1, 2)
    lo = down.div(down.asin(down.div(gmpy2.mpq(e_lo.numerator, e_lo.denominator), 2)), up.const_pi())
    half_hi = up.div(gmpy2.mpq(e_hi.numerator, e_hi.denominator), 2)
    hi = up.div(up.asin(half_hi), down.const_pi()) if half_hi < 1 else gmpy2.mpfr(0.5)
    return max(Fraction(0), _to_fraction(lo)), min(Fraction(1, 2), _to_fraction(hi))


class ChordBall:
    """Fast exact test ``chord(d) <= eps`` (or ``<``) for many arc distances.

    Distances clear of the certified radius bracket are settled by a rational
    comparison; only those inside the bracket fall back to ``compare_chord``.
    """

    def __init__(self, eps: Threshold, strict: bool = False):
        self.eps = eps
        self.strict = strict
        self.lo, self.hi = arc_radius_bounds(eps)

    def within(self, d: Fraction) -> bool:
        if d < self.lo:
            return True
        if d > self.hi:
            return False
        return _within(d, self.eps, self.strict)

    def __contains__(self, d: Fraction) -> bool:
        return self.within(d)
