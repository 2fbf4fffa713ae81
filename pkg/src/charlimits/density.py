"""Asymptotic density of index sets, Cesaro averages, density-one prefixes."""

from __future__ import annotations

import ast
import math
from dataclasses import dataclass
from fractions import Fraction
from itertools import count, islice
from typing import Callable, Iterator, Sequence, Union

import gmpy2

from .circle import DEFAULT_PRECISION, Angle, _contexts, _to_fraction, chord_upper, unit_box
from .verdict import Verdict, VerdictKind, inconclusive


def _is_square(n: int) -> bool:
    return n >= 0 and math.isqrt(n) ** 2 == n


def _is_factorial(n: int) -> bool:
    f, k = 1, 1
    while f < n:
        k += 1
        f *= k
    return f == n


@dataclass(frozen=True)
class IndexSet:
    """A subset of the naturals given by a membership predicate.

    ``density`` is the asymptotic density when a closed form proves it and
    ``None`` otherwise; only tagged sets are accepted as density one without a
    prefix check.
    """

    name: str
    predicate: Callable[[int], bool]
    density: Fraction | None = None

    def __contains__(self, n: int) -> bool:
        return n >= 0 and self.predicate(n)

    def __iter__(self) -> Iterator[int]:
        return (n for n in count() if self.predicate(n))

    def members(self, limit: int) -> list[int]:
        """Members below ``limit``."""
        return [n for n in range(limit) if self.predicate(n)]

    def first(self, k: int) -> list[int]:
        return list(islice(iter(self), k))

    def complement(self) -> "IndexSet":
        name = self.name[:-len("-complement")] if self.name.endswith("-complement") \
            else self.name + "-complement"
        d = None if self.density is None else 1 - self.density
        pred = self.predicate
        return IndexSet(name, lambda n: not pred(n), d)

    def __str__(self) -> str:
        return self.name


def omega() -> IndexSet:
    return IndexSet("all", lambda n: True, Fraction(1))


def evens() -> IndexSet:
    return IndexSet("evens", lambda n: n % 2 == 0, Fraction(1, 2))


def odds() -> IndexSet:
    return IndexSet("odds", lambda n: n % 2 == 1, Fraction(1, 2))


def squares() -> IndexSet:
    return IndexSet("squares", _is_square, Fraction(0))


def factorials() -> IndexSet:
    return IndexSet("factorials", _is_factorial, Fraction(0))


def arithmetic_progression(a: int, b: int) -> IndexSet:
    """``{a, a+b, a+2b, ...}``."""
    if a < 0 or b < 1:
        raise ValueError(f"need a >= 0 and b >= 1, got {a},{b}")
    return IndexSet(f"ap:{a},{b}", lambda n: n >= a and (n - a) % b == 0, Fraction(1, b))


def explicit(indices: Sequence[int]) -> IndexSet:
    s = frozenset(int(i) for i in indices)
    return IndexSet("explicit:" + str(sorted(s)).replace(" ", ""), s.__contains__, Fraction(0))


def from_predicate(predicate: Callable[[int], bool], name: str = "custom") -> IndexSet:
    """An untagged set; density-one use goes through the prefix gate."""
    return IndexSet(name, predicate, None)


_NAMED = {
    "all": omega, "omega": omega, "evens": evens, "odds": odds,
    "squares": squares, "factorials": factorials,
}


def parse_index_set(text: str) -> IndexSet:
    """``evens``, ``squares-complement``, ``ap:a,b``, ``explicit:[...]`` and so on."""
    t = text.strip().replace(" ", "")
    if t.endswith("-complement"):
        return parse_index_set(t[:-len("-complement")]).complement()
    if t in _NAMED:
        return _NAMED[t]()
    if t.startswith("ap:"):
        a, b = t[3:].split(",")
        return arithmetic_progression(int(a), int(b))
    if t.startswith("explicit:"):
        return explicit(ast.literal_eval(t[9:]))
    raise ValueError(f"unknown index set {text!r}")


def density_prefix(E: IndexSet, n: int) -> Fraction:
    """``|E ∩ n| / n``."""
    if n < 1:
        raise ValueError("prefix length must be positive")
    return Fraction(sum(1 for m in range(n) if E.predicate(m)), n)


@dataclass(frozen=True)
class DensityEstimate:
    n: int
    count: int
    ratio: Fraction
    liminf: Fraction
    limsup: Fraction
    checkpoints: tuple[tuple[int, Fraction], ...]


def density_estimate(E: IndexSet, n: int) -> DensityEstimate:
    """Prefix ratio at ``n`` with running extremes over checkpoints ``2**k``."""
    if n < 1:
        raise ValueError("prefix length must be positive")
    marks = {2 ** k for k in range(n.bit_length()) if 2 ** k <= n} | {n}
    hits, points = 0, []
    for m in range(n):
        hits += bool(E.predicate(m))
        if m + 1 in marks:
            points.append((m + 1, Fraction(hits, m + 1)))
    ratios = [r for _, r in points]
    return DensityEstimate(n, hits, Fraction(hits, n), min(ratios), max(ratios), tuple(points))


# --- Cesaro averages -----------------------------------------------------

@dataclass(frozen=True)
class ComplexEnclosure:
    """A rectangle ``[re_lo, re_hi] x [im_lo, im_hi]`` with rational corners."""

    re_lo: Fraction
    re_hi: Fraction
    im_lo: Fraction
    im_hi: Fraction

    @property
    def width(self) -> Fraction:
        return max(self.re_hi - self.re_lo, self.im_hi - self.im_lo)

    def contains(self, re, im=0) -> bool:
        return self.re_lo <= re <= self.re_hi and self.im_lo <= im <= self.im_hi

    def modulus_squared_bounds(self) -> tuple[Fraction, Fraction]:
        return _square_bounds(self.re_lo, self.re_hi, self.im_lo, self.im_hi)

    def distance_squared_bounds(self, s: Angle, prec: int = DEFAULT_PRECISION):
        """Bounds on ``|w - exp(2*pi*i*s)|**2`` over the rectangle."""
        c_lo, c_hi, s_lo, s_hi = (_to_fraction(v) for v in unit_box(s.numerator, s.denominator, prec))
        return _square_bounds(self.re_lo - c_hi, self.re_hi - c_lo,
                              self.im_lo - s_hi, self.im_hi - s_lo)

    def to_json(self) -> dict:
        return {"re": [str(self.re_lo), str(self.re_hi)], "im": [str(self.im_lo), str(self.im_hi)]}


def _square_bounds(a_lo, a_hi, b_lo, b_hi) -> tuple[Fraction, Fraction]:
    def sq(lo, hi):
        top = max(lo * lo, hi * hi)
        return (Fraction(0) if lo <= 0 <= hi else min(lo * lo, hi * hi)), top
    x_lo, x_hi = sq(a_lo, a_hi)
    y_lo, y_hi = sq(b_lo, b_hi)
    return x_lo + y_lo, x_hi + y_hi


class CesaroState:
    """Running sum of ``exp(2*pi*i*r_n)`` kept as a directed-rounding box."""

    def __init__(self, precision: int = DEFAULT_PRECISION):
        self.precision = precision
        self.j = 0
        z = gmpy2.mpfr(0)
        self._sum = [z, z, z, z]  # re_lo, re_hi, im_lo, im_hi

    def push(self, a: Angle) -> None:
        self.push_ratio(a.numerator, a.denominator)

    def push_ratio(self, num: int, den: int) -> None:
        """Add the value at angle ``num/den`` (any integers, ``den > 0``)."""
        down, up = _contexts(self.precision)
        c_lo, c_hi, s_lo, s_hi = unit_box(num, den, self.precision)
        r = self._sum
        self._sum = [down.add(r[0], c_lo), up.add(r[1], c_hi),
                     down.add(r[2], s_lo), up.add(r[3], s_hi)]
        self.j += 1

    def extend(self, values) -> "CesaroState":
        for a in values:
            self.push(a)
        return self

    def average(self) -> ComplexEnclosure:
        if not self.j:
            raise ValueError("Cesaro average of an empty sequence")
        down, up = _contexts(self.precision)
        r = self._sum
        lo = lambda v: _to_fraction(down.div(v, self.j))  # noqa: E731
        hi = lambda v: _to_fraction(up.div(v, self.j))  # noqa: E731
        return ComplexEnclosure(lo(r[0]), hi(r[1]), lo(r[2]), hi(r[3]))


def cesaro_average(values: Sequence[Angle], precision: int = DEFAULT_PRECISION) -> ComplexEnclosure:
    """Enclosure of ``(1/j) * sum exp(2*pi*i*r_n)`` over the ``j`` given values."""
    if not len(values):
        raise ValueError("Cesaro average of an empty sequence")
    return CesaroState(precision).extend(values).average()


AngleStream = Union[Sequence[Angle], Callable[[int], Angle]]


def _take(values: AngleStream, n: int) -> list[Angle]:
    if callable(values):
        return [values(m) for m in range(n)]
    if len(values) < n:
        raise ValueError(f"need {n} values, got {len(values)}")
    return list(values[:n])


@dataclass(frozen=True)
class StatCesaroReport:
    verdict: Verdict
    average: ComplexEnclosure | None
    prefix_density: Fraction | None
    sup_deviation: Fraction | None
    bound: Fraction | None
    hypothesis_ok: bool

    def to_json(self) -> dict:
        return {
            "verdict": self.verdict.to_json(),
            "average": self.average.to_json() if self.average else None,
            "prefix_density": None if self.prefix_density is None else str(self.prefix_density),
            "sup_deviation": None if self.sup_deviation is None else str(self.sup_deviation),
            "bound": None if self.bound is None else str(self.bound),
            "hypothesis_ok": self.hypothesis_ok,
        }


def check_stat_cesaro(values: AngleStream, E: IndexSet, s: Angle, horizon: int, tol,
                      precision: int = DEFAULT_PRECISION) -> StatCesaroReport:
    """Whether the Cesaro average of the first ``horizon`` values is within ``tol`` of ``s``.

    Alongside it reports the prefix density of ``E``, the largest chord
    ``|r_n - s|`` over ``n`` in ``E`` below the horizon, and the bound
    ``sup + 2*(1 - density)`` that the average must respect.
    ``hypothesis_ok`` is false unless ``E`` is certified to have density one.
    """
    tol = Fraction(tol)
    hyp = E.density == 1
    if horizon < 10:
        return StatCesaroReport(inconclusive(horizon, tol, "horizon below 10"),
                                None, None, None, None, hyp)
    vals = _take(values, horizon)
    avg = cesaro_average(vals, precision)
    ratio = density_prefix(E, horizon)
    on_E = [chord_upper(v, s) for n, v in enumerate(vals) if E.predicate(n)]
    delta = max(on_E, default=Fraction(0))
    bound = delta + 2 * (1 - ratio)
    d_lo, d_hi = avg.distance_squared_bounds(s, precision)
    cert = {
        "distance_squared": [str(d_lo), str(d_hi)],
        "bound_respected": d_lo <= bound * bound,
        "hypothesis_ok": hyp,
    }
    if d_hi <= tol * tol:
        v = Verdict(VerdictKind.CONVERGED, horizon, tol, limit=s, certificate=cert)
    else:
        cert["reason"] = "average not within tol of s" if d_lo > tol * tol else "undecided at precision"
        v = Verdict(VerdictKind.INCONCLUSIVE, horizon, tol, certificate=cert)
    return StatCesaroReport(v, avg, ratio, delta, bound, hyp)


class DensityRejected(ValueError):
    def __init__(self, E: IndexSet, ratio: Fraction, needed):
        super().__init__(f"{E} has prefix density {ratio}, below {needed}")
        self.ratio = ratio


def density_one_restriction(E: IndexSet, seq_length: int) -> list[int]:
    """Indices below ``seq_length`` in ``E``, provided ``E`` has density one.

    Tagged sets are accepted or rejected by their certified density; untagged
    sets must reach prefix ratio ``1 - 1/log(seq_length)``.
    """
    if seq_length < 2:
        raise ValueError("sequence length must be at least 2")
    idx = E.members(seq_length)
    ratio = Fraction(len(idx), seq_length)
    if E.density is not None:
        if E.density != 1:
            raise DensityRejected(E, ratio, "density 1")
        return idx
    gate = 1 - 1 / math.log(seq_length)
    if ratio < gate:
        raise DensityRejected(E, ratio, f"1 - 1/log({seq_length})")
    return idx
