"""The stock compact groups, their duals, and exact character evaluation.

Five groups are supported:

* ``circle``  -- the circle group, dual ``Z`` (character ``z -> z**n``);
* ``primes``  -- ``prod Z_{p_n}`` over strictly increasing primes;
* ``zpw``     -- ``(Z_p)^omega`` for a fixed prime ``p``;
* ``padic``   -- the ``p``-adic integers, dual ``Z_{p^infinity}``;
* ``z4z2``    -- ``Z_4 x (Z_2)^omega``, the standard group that is not nice.

Points of the product-like groups are total coordinate functions (a finite
prefix with a constant tail, or a seeded pseudorandom stream, optionally
patched), so constructions can touch coordinates chosen on the fly.
"""

from __future__ import annotations

import ast
import math
import re
from dataclasses import dataclass, field
from enum import Enum
from fractions import Fraction
from functools import lru_cache
from itertools import count, product
from typing import Callable, Iterable, Iterator, Mapping, NamedTuple, Sequence

import numpy as np
import sympy

from .circle import FULL_CIRCLE, IDENTITY, Angle, Arc, Coset, ValueRange

STREAM_BLOCK = 256


class SpecMismatch(ValueError):
    """Objects from different groups were combined."""


class Kind(str, Enum):
    CIRCLE = "circle"
    DISTINCT_PRIMES = "primes"
    FIXED_PRIME = "zpw"
    PADIC = "padic"
    Z4Z2 = "z4z2"


COORDINATE_KINDS = (Kind.DISTINCT_PRIMES, Kind.FIXED_PRIME, Kind.PADIC, Kind.Z4Z2)


@dataclass(frozen=True)
class GroupSpec:
    kind: Kind
    p: int | None = None
    primes: tuple[int, ...] = ()

    def __post_init__(self):
        object.__setattr__(self, "kind", Kind(self.kind))
        if self.kind in (Kind.FIXED_PRIME, Kind.PADIC):
            if self.p is None or not sympy.isprime(self.p):
                raise ValueError(f"{self.kind.value} needs a prime p, got {self.p}")
        elif self.p is not None:
            raise ValueError(f"{self.kind.value} takes no p")
        if self.primes:
            if self.kind is not Kind.DISTINCT_PRIMES:
                raise ValueError("only 'primes' takes a prime list")
            if any(not sympy.isprime(q) for q in self.primes):
                raise ValueError(f"non-prime in {self.primes}")
            if any(a >= b for a, b in zip(self.primes, self.primes[1:])):
                raise ValueError(f"primes must be strictly increasing: {self.primes}")
        object.__setattr__(self, "primes", tuple(self.primes))

    @classmethod
    def circle(cls) -> "GroupSpec":
        return cls(Kind.CIRCLE)

    @classmethod
    def distinct_primes(cls, primes: Sequence[int] = ()) -> "GroupSpec":
        return cls(Kind.DISTINCT_PRIMES, primes=tuple(primes))

    @classmethod
    def fixed_prime(cls, p: int) -> "GroupSpec":
        return cls(Kind.FIXED_PRIME, p=p)

    @classmethod
    def padic(cls, p: int) -> "GroupSpec":
        return cls(Kind.PADIC, p=p)

    @classmethod
    def z4z2(cls) -> "GroupSpec":
        return cls(Kind.Z4Z2)

    @classmethod
    def parse(cls, text: str) -> "GroupSpec":
        """Parse ``circle``, ``z2w``, ``zpw:3``, ``padic:2``, ``primes``,
        ``primes:2,3,5`` or ``z4z2``."""
        t = text.strip().lower()
        if t in ("circle", "t"):
            return cls.circle()
        if t == "z4z2":
            return cls.z4z2()
        if t == "primes":
            return cls.distinct_primes()
        m = re.fullmatch(r"z(\d+)w", t)
        if m:
            return cls.fixed_prime(int(m.group(1)))
        head, _, arg = t.partition(":")
        if head == "zpw" and arg:
            return cls.fixed_prime(int(arg))
        if head == "padic" and arg:
            return cls.padic(int(arg))
        if head == "primes" and arg:
            return cls.distinct_primes([int(a) for a in arg.split(",")])
        raise ValueError(f"unknown group {text!r}")

    @property
    def name(self) -> str:
        if self.kind is Kind.FIXED_PRIME:
            return f"z{self.p}w"
        if self.kind is Kind.PADIC:
            return f"padic:{self.p}"
        if self.kind is Kind.DISTINCT_PRIMES and self.primes:
            return "primes:" + ",".join(map(str, self.primes))
        return self.kind.value

    def __str__(self) -> str:
        return self.name

    def to_json(self) -> dict:
        d: dict = {"kind": self.kind.value}
        if self.p is not None:
            d["p"] = self.p
        if self.primes:
            d["primes"] = list(self.primes)
        return d

    @classmethod
    def from_json(cls, d: Mapping) -> "GroupSpec":
        return cls(Kind(d["kind"]), p=d.get("p"), primes=tuple(d.get("primes", ())))

    def modulus(self, i: int) -> int:
        """Size of the cyclic factor at coordinate ``i`` (p-adic: digit base)."""
        if self.kind is Kind.DISTINCT_PRIMES:
            return _prime_at(self.primes, i)
        if self.kind in (Kind.FIXED_PRIME, Kind.PADIC):
            return self.p
        if self.kind is Kind.Z4Z2:
            return 2
        raise SpecMismatch("the circle has no coordinates")


@lru_cache(maxsize=None)
def _prime_table(primes: tuple[int, ...], upto: int) -> tuple[int, ...]:
    out = list(primes)
    while len(out) <= upto:
        out.append(sympy.nextprime(out[-1]) if out else 2)
    return tuple(out)


def _prime_at(primes: tuple[int, ...], i: int) -> int:
    if i < len(primes):
        return primes[i]
    if not primes:
        sympy.sieve.extend_to_no(i + 1)
        return int(sympy.sieve[i + 1])
    # grow in chunks so the cache stays small
    return _prime_table(primes, (i | 63))[i]


# --- characters ----------------------------------------------------------

@dataclass(frozen=True)
class Character:
    """An element of the dual group in canonical form.

    ``n`` is the circle exponent (or the ``Z_4`` part for ``z4z2``), ``terms``
    the nonzero ``(index, residue)`` pairs of product characters, and
    ``level`` the element ``a/p**k`` of ``Z_{p^infinity}``.
    """

    spec: GroupSpec
    n: int = 0
    terms: tuple[tuple[int, int], ...] = ()
    level: Fraction = Fraction(0)

    def __post_init__(self):
        kind = self.spec.kind
        if kind is Kind.CIRCLE:
            if self.terms or self.level:
                raise ValueError("circle characters are integers")
            return
        if kind is Kind.PADIC:
            lv = Fraction(self.level) % 1
            d = lv.denominator
            while d % self.spec.p == 0:
                d //= self.spec.p
            if d != 1 or self.n or self.terms:
                raise ValueError(f"p-adic characters are a/{self.spec.p}^k, got {self.level}")
            object.__setattr__(self, "level", lv)
            return
        if self.level:
            raise ValueError("product characters have no level")
        reduced: dict[int, int] = {}
        for i, r in self.terms:
            if i < 0:
                raise ValueError(f"negative coordinate {i}")
            reduced[i] = (reduced.get(i, 0) + r) % self.spec.modulus(i)
        object.__setattr__(self, "terms", tuple(sorted((i, r) for i, r in reduced.items() if r)))
        if kind is Kind.Z4Z2:
            object.__setattr__(self, "n", self.n % 4)
        elif self.n:
            raise ValueError("product characters have no exponent")

    @property
    def support(self) -> tuple[int, ...]:
        return tuple(i for i, _ in self.terms)

    @property
    def max_support(self) -> int:
        """Largest coordinate the character reads, ``-1`` if none."""
        return self.terms[-1][0] if self.terms else -1

    @property
    def padic_exponent(self) -> int:
        """``k`` with ``level = a/p**k`` reduced."""
        return _padic_exponent(self.level.denominator, self.spec.p)

    def is_identity(self) -> bool:
        return not (self.n or self.terms or self.level)

    def __mul__(self, other: "Character") -> "Character":
        if other.spec != self.spec:
            raise SpecMismatch(f"{self.spec} vs {other.spec}")
        return Character(self.spec, self.n + other.n, self.terms + other.terms,
                         self.level + other.level)

    def __pow__(self, k: int) -> "Character":
        return Character(self.spec, self.n * k, tuple((i, r * k) for i, r in self.terms),
                         self.level * k)

    def inverse(self) -> "Character":
        return self ** -1

    def order(self) -> int | None:
        """Order in the dual group; ``None`` for infinite order."""
        kind = self.spec.kind
        if kind is Kind.CIRCLE:
            return 1 if self.n == 0 else None
        if kind is Kind.PADIC:
            return self.level.denominator
        o = 1
        for i, r in self.terms:
            m = self.spec.modulus(i)
            o = math.lcm(o, m // math.gcd(r, m))
        if kind is Kind.Z4Z2:
            o = math.lcm(o, 4 // math.gcd(self.n, 4))
        return o

    def __str__(self) -> str:
        kind = self.spec.kind
        if kind is Kind.CIRCLE:
            return f"n={self.n}"
        if kind is Kind.PADIC:
            k = self.padic_exponent
            return f"{self.level.numerator}/{self.spec.p}^{k}"
        body = "[" + ",".join(f"({i},{r})" for i, r in self.terms) + "]"
        if kind is Kind.Z4Z2:
            return f"({self.n},{{{','.join(map(str, self.support))}}})"
        return body

    def to_json(self) -> str:
        return str(self)


def _padic_exponent(denominator: int, p: int) -> int:
    k = 0
    while denominator > 1:
        denominator //= p
        k += 1
    return k


def identity_character(spec: GroupSpec) -> Character:
    return Character(spec)


def circle_character(n: int) -> Character:
    return Character(GroupSpec.circle(), n=n)


def coordinate_character(spec: GroupSpec, i: int, residue: int = 1) -> Character:
    """``chi_i``: reads coordinate ``i`` (the ``(Z_2)^omega`` factor for z4z2)."""
    if spec.kind is Kind.CIRCLE:
        raise SpecMismatch("the circle has no coordinate characters")
    if spec.kind is Kind.PADIC:
        raise SpecMismatch("use padic_character for p-adic duals")
    return Character(spec, terms=((i, residue),))


def padic_character(spec: GroupSpec, a: int, k: int) -> Character:
    return Character(spec, level=Fraction(a, spec.p ** k))


def parse_character(spec: GroupSpec, text: str) -> Character:
    """Parse the canonical text forms (and ``chiN`` shorthands)."""
    t = text.strip().replace(" ", "")
    kind = spec.kind
    m = re.fullmatch(r"chi(\d+)", t)
    if m and kind not in (Kind.CIRCLE, Kind.PADIC):
        return coordinate_character(spec, int(m.group(1)))
    if kind is Kind.CIRCLE:
        return circle_character(int(t.removeprefix("n=")))
    if kind is Kind.PADIC:
        m = re.fullmatch(r"(\d+)/(\d+)\^(\d+)", t)
        if m:
            if int(m.group(2)) != spec.p:
                raise ValueError(f"p-adic character base {m.group(2)} != {spec.p}")
            return padic_character(spec, int(m.group(1)), int(m.group(3)))
        return Character(spec, level=Fraction(t))
    if kind is Kind.Z4Z2:
        m = re.fullmatch(r"\((-?\d+),\{([\d,]*)\}\)", t)
        if not m:
            raise ValueError(f"z4z2 characters look like (c,{{i,j}}), got {text!r}")
        supp = [int(s) for s in m.group(2).split(",") if s]
        return Character(spec, n=int(m.group(1)), terms=tuple((i, 1) for i in supp))
    pairs = ast.literal_eval(t) if t else []
    return Character(spec, terms=tuple((int(i), int(r)) for i, r in pairs))


def enumerate_characters(spec: GroupSpec) -> Iterator[Character]:
    """All characters in the fixed canonical order.

    circle: ``0, 1, -1, 2, -2, ...``; product kinds: by largest support index,
    then lexicographically in the residues ``(r_0, r_1, ...)``; p-adic: by
    level ``k``, then numerator.  For ``z4z2`` the ``Z_4`` part is block 0 and
    ``y_i`` is block ``i + 1``.
    """
    kind = spec.kind
    if kind is Kind.CIRCLE:
        yield circle_character(0)
        for n in count(1):
            yield circle_character(n)
            yield circle_character(-n)
    elif kind is Kind.PADIC:
        yield Character(spec)
        for k in count(1):
            q = spec.p ** k
            for a in range(1, q):
                if a % spec.p:
                    yield Character(spec, level=Fraction(a, q))
    elif kind is Kind.Z4Z2:
        yield Character(spec)
        for c in (1, 2, 3):
            yield Character(spec, n=c)
        for s in count(0):
            for c, *bits in product(range(4), *[range(2)] * s):
                terms = tuple((i, 1) for i, b in enumerate(bits) if b) + ((s, 1),)
                yield Character(spec, n=c, terms=terms)
    else:
        yield Character(spec)
        for s in count(0):
            yield from characters_with_max_support(spec, s)


def characters_with_max_support(spec: GroupSpec, s: int) -> Iterator[Character]:
    """Product-kind characters whose largest support index is ``s``, in order."""
    # lazy odometer in itertools.product order; product would materialise every range
    mods = [spec.modulus(i) for i in range(s + 1)]
    digits = [0] * s + [1]
    while True:
        yield Character(spec, terms=tuple((i, r) for i, r in enumerate(digits) if r))
        k = s
        while k >= 0:
            digits[k] += 1
            if digits[k] < mods[k]:
                break
            digits[k] = 1 if k == s else 0
            k -= 1
        if k < 0:
            return


def count_max_support(spec: GroupSpec, s: int) -> int:
    return math.prod(spec.modulus(i) for i in range(s)) * (spec.modulus(s) - 1)


def generate_subgroup(gens: Iterable[Character]) -> list[Character]:
    """The finite subgroup generated by ``gens``, identity first."""
    gens = list(gens)
    if not gens:
        raise ValueError("need at least one generator (use the identity for {1})")
    spec = gens[0].spec
    for g in gens:
        if g.order() is None:
            raise ValueError(f"{g} has infinite order")
    seen = {identity_character(spec)}
    order = [identity_character(spec)]
    frontier = list(order)
    while frontier:
        nxt = []
        for a in frontier:
            for g in gens:
                b = a * g
                if b not in seen:
                    seen.add(b)
                    order.append(b)
                    nxt.append(b)
        frontier = nxt
    return order


# --- points --------------------------------------------------------------

@dataclass(frozen=True)
class PrefixTail:
    prefix: tuple[int, ...]
    tail: int = 0

    def coord(self, i: int) -> int:
        return self.prefix[i] if i < len(self.prefix) else self.tail

    def to_json(self) -> dict:
        return {"prefix": list(self.prefix), "tail": self.tail}


@lru_cache(maxsize=4096)
def _stream_block(seed: int, block: int, highs: tuple[int, ...]) -> tuple[int, ...]:
    rng = np.random.default_rng([seed & ((1 << 64) - 1), block])
    return tuple(int(v) for v in rng.integers(0, np.array(highs, dtype=np.int64)))


@lru_cache(maxsize=256)
def _block_highs(spec: GroupSpec, block: int) -> tuple[int, ...]:
    return tuple(spec.modulus(j) for j in range(block * STREAM_BLOCK, (block + 1) * STREAM_BLOCK))


@dataclass(frozen=True)
class Stream:
    """Seeded uniform coordinates; coordinate ``i`` depends only on ``(seed, i)``."""

    seed: int
    spec: GroupSpec

    def coord(self, i: int) -> int:
        b, r = divmod(i, STREAM_BLOCK)
        return _stream_block(self.seed, b, _block_highs(self.spec, b))[r]

    def to_json(self) -> dict:
        return {"seed": self.seed}


@dataclass(frozen=True)
class Patched:
    base: object
    patch: tuple[tuple[int, int], ...]
    _lookup: dict = field(init=False, repr=False, compare=False, hash=False)

    def __post_init__(self):
        object.__setattr__(self, "_lookup", dict(self.patch))

    def coord(self, i: int) -> int:
        v = self._lookup.get(i)
        return self.base.coord(i) if v is None else v

    def to_json(self) -> dict:
        return {"base": self.base.to_json(), "patch": [[i, v] for i, v in self.patch]}


@dataclass(frozen=True, eq=False)
class Combined:
    """Coordinatewise sum (or difference) of two sources; carries for p-adics."""

    a: object
    b: object
    spec: GroupSpec
    sign: int = 1
    _digits: list = field(default_factory=list, init=False, repr=False)

    def coord(self, i: int) -> int:
        if self.spec.kind is not Kind.PADIC:
            return (self.a.coord(i) + self.sign * self.b.coord(i)) % self.spec.modulus(i)
        p = self.spec.p
        digits = self._digits
        carry = digits[-1][1] if digits else 0
        for j in range(len(digits), i + 1):
            carry, d = divmod(self.a.coord(j) + self.sign * self.b.coord(j) + carry, p)
            digits.append((d, carry))
        return digits[i][0]

    def to_json(self) -> dict:
        return {"op": "add" if self.sign == 1 else "sub",
                "a": self.a.to_json(), "b": self.b.to_json()}


_ZERO = PrefixTail(())


@dataclass(frozen=True, eq=False)
class Point:
    """An element of a stock group.

    Circle points carry ``angle``; ``z4z2`` points carry the ``Z_4`` part as
    ``z4`` in ``{0,1,2,3}`` (meaning ``i**z4``) plus ``(Z_2)^omega``
    coordinates in ``{0, 1}`` (meaning ``(-1)**y``).
    """

    spec: GroupSpec
    angle: Angle | None = None
    z4: int = 0
    source: object = _ZERO

    def coord(self, i: int) -> int:
        return self.source.coord(i)

    def prefix(self, n: int) -> list[int]:
        return [self.source.coord(i) for i in range(n)]

    def with_patch(self, patch: Mapping[int, int], z4: int | None = None) -> "Point":
        for i, v in patch.items():
            if not 0 <= v < self.spec.modulus(i):
                raise ValueError(f"coordinate {i} value {v} out of range")
        if isinstance(self.source, Patched):
            merged = dict(self.source.patch)
            merged.update(patch)
            src = Patched(self.source.base, tuple(sorted(merged.items())))
        elif patch:
            src = Patched(self.source, tuple(sorted(patch.items())))
        else:
            src = self.source
        return Point(self.spec, self.angle, self.z4 if z4 is None else z4 % 4, src)

    def combine(self, other: "Point") -> "Point":
        _same(self.spec, other.spec)
        if self.spec.kind is Kind.CIRCLE:
            return Point(self.spec, angle=self.angle + other.angle)
        return Point(self.spec, z4=(self.z4 + other.z4) % 4,
                     source=Combined(self.source, other.source, self.spec))

    def inverse(self) -> "Point":
        if self.spec.kind is Kind.CIRCLE:
            return Point(self.spec, angle=-self.angle)
        return Point(self.spec, z4=(-self.z4) % 4,
                     source=Combined(_ZERO, self.source, self.spec, sign=-1))

    def to_json(self) -> dict:
        d: dict = {"group": self.spec.name}
        if self.spec.kind is Kind.CIRCLE:
            d["angle"] = str(self.angle)
            return d
        if self.spec.kind is Kind.Z4Z2:
            d["z4"] = self.z4
        d["coords"] = self.source.to_json()
        return d

    def __repr__(self) -> str:
        if self.spec.kind is Kind.CIRCLE:
            return f"Point(circle, {self.angle})"
        head = "".join(map(str, self.prefix(12)))
        z = f"z4={self.z4}, " if self.spec.kind is Kind.Z4Z2 else ""
        return f"Point({self.spec}, {z}{head}...)"


def identity_point(spec: GroupSpec) -> Point:
    if spec.kind is Kind.CIRCLE:
        return Point(spec, angle=IDENTITY)
    return Point(spec)


def circle_point(value) -> Point:
    a = value if isinstance(value, Angle) else Angle(Fraction(value))
    return Point(GroupSpec.circle(), angle=a)


def prefix_point(spec: GroupSpec, prefix: Sequence[int], tail: int = 0, z4: int = 0) -> Point:
    if spec.kind is Kind.CIRCLE:
        raise SpecMismatch("circle points are angles")
    for i, v in enumerate(prefix):
        if not 0 <= v < spec.modulus(i):
            raise ValueError(f"coordinate {i} value {v} out of range")
    return Point(spec, z4=z4 % 4, source=PrefixTail(tuple(prefix), tail))


def parse_point(spec: GroupSpec, text: str) -> Point:
    """``1/3`` (circle), ``identity``, ``seed:N``, ``prefix:[1,0,1]`` with
    optional ``;z4=k`` for z4z2 (or just ``z4=k``)."""
    t = text.strip().replace(" ", "")
    if t == "identity":
        return identity_point(spec)
    if spec.kind is Kind.CIRCLE:
        return circle_point(Fraction(t))
    z4 = 0
    if t.startswith("z4="):
        t = "prefix:[];" + t
    if ";z4=" in t:
        t, _, z = t.partition(";z4=")
        z4 = int(z)
    if t.startswith("seed:"):
        return Point(spec, z4=z4 % 4, source=Stream(int(t[5:]), spec))
    if t.startswith("prefix:"):
        return prefix_point(spec, ast.literal_eval(t[7:]), z4=z4)
    raise ValueError(f"cannot parse point {text!r}")


def _same(a: GroupSpec, b: GroupSpec):
    if a != b:
        raise SpecMismatch(f"{a} vs {b}")


# --- evaluation ----------------------------------------------------------

def evaluate(c: Character, x: Point) -> Angle:
    """``c(x)`` as an exact angle."""
    _same(c.spec, x.spec)
    kind = c.spec.kind
    if kind is Kind.CIRCLE:
        return x.angle * c.n
    if kind is Kind.PADIC:
        k = c.padic_exponent
        p = c.spec.p
        residue = sum(x.coord(i) * p ** i for i in range(k))
        return Angle(c.level * residue)
    total = Fraction(0)
    if kind is Kind.Z4Z2:
        total = Fraction(c.n * x.z4, 4) + Fraction(sum(x.coord(i) for i in c.support), 2)
        return Angle(total)
    for i, r in c.terms:
        total += Fraction(r * x.coord(i), c.spec.modulus(i))
    return Angle(total)


def value_range(spec: GroupSpec) -> ValueRange:
    """Closure of the set of all character values."""
    if spec.kind is Kind.FIXED_PRIME:
        return ValueRange(spec.p)
    if spec.kind is Kind.Z4Z2:
        return ValueRange(4)
    return FULL_CIRCLE


class Distance(NamedTuple):
    """A base-metric value; unresolved when no difference was seen by ``depth``,
    in which case the true distance lies in ``[0, bound]``."""

    value: Fraction
    resolved: bool
    bound: Fraction


def base_metric(x: Point, y: Point, depth: int = 64) -> Distance:
    """Arc distance on the circle; ``2**-m`` at the first differing block
    elsewhere (for z4z2 the ``Z_4`` part is block 0, ``y_i`` block ``i+1``)."""
    _same(x.spec, y.spec)
    if x.spec.kind is Kind.CIRCLE:
        d = x.angle - y.angle
        v = min(d.value, 1 - d.value)
        return Distance(v, True, v)
    shift = 0
    if x.spec.kind is Kind.Z4Z2:
        if x.z4 != y.z4:
            return Distance(Fraction(1), True, Fraction(1))
        shift = 1
    for i in range(depth):
        if x.coord(i) != y.coord(i):
            v = Fraction(1, 2 ** (i + shift))
            return Distance(v, True, v)
    return Distance(Fraction(0), False, Fraction(1, 2 ** (depth + shift)))


# --- sampling ------------------------------------------------------------

DEFAULT_RESOLUTION = 61


@lru_cache(maxsize=None)
def circle_denominator(resolution: int, policy: str = "prime") -> int:
    """Denominator used by the circle sampler.

    ``prime``: the least prime ``>= 2**resolution``; ``dyadic``:
    ``2**resolution`` (kept for demonstrating the degeneracy guard).
    """
    if resolution < 1:
        raise ValueError("resolution must be positive")
    if policy == "prime":
        return int(sympy.nextprime(2 ** resolution - 1))
    if policy == "dyadic":
        return 2 ** resolution
    raise ValueError(f"unknown sampling policy {policy!r}")


def _uniform_below(rng: np.random.Generator, q: int) -> int:
    nbytes = (q.bit_length() + 7) // 8 + 8
    limit = (256 ** nbytes // q) * q
    while True:
        v = int.from_bytes(rng.bytes(nbytes), "little")
        if v < limit:
            return v % q


def haar_sample(spec: GroupSpec, seed: int, resolution: int = DEFAULT_RESOLUTION,
                policy: str = "prime") -> Point:
    """A Haar-random point, deterministic in ``(seed, resolution, policy)``."""
    seed &= (1 << 64) - 1
    if spec.kind is Kind.CIRCLE:
        q = circle_denominator(resolution, policy)
        rng = np.random.default_rng([seed, resolution, 0])
        return circle_point(Fraction(_uniform_below(rng, q), q))
    z4 = 0
    if spec.kind is Kind.Z4Z2:
        z4 = int(np.random.default_rng([seed, 1]).integers(0, 4))
    return Point(spec, z4=z4, source=Stream(seed, spec))


# --- open sets and their images ------------------------------------------

@dataclass(frozen=True)
class Cylinder:
    """Points with prescribed coordinates (and optionally a fixed ``Z_4`` part).

    For p-adic groups the fixed coordinates must be the first digits, making
    the cylinder a ball.
    """

    fixed: tuple[tuple[int, int], ...] = ()
    z4: int | None = None

    @classmethod
    def of(cls, mapping: Mapping[int, int] | None = None, z4: int | None = None) -> "Cylinder":
        return cls(tuple(sorted((mapping or {}).items())), z4)

    def contains(self, x: Point) -> bool:
        if self.z4 is not None and x.z4 != self.z4:
            return False
        return all(x.coord(i) == v for i, v in self.fixed)

    def to_json(self) -> dict:
        d: dict = {"fixed": [[i, v] for i, v in self.fixed]}
        if self.z4 is not None:
            d["z4"] = self.z4
        return d


def character_image(c: Character, U) -> Coset | Arc:
    """``c(U)`` for a cylinder (a coset of roots of unity) or an open arc."""
    kind = c.spec.kind
    if kind is Kind.CIRCLE:
        if not isinstance(U, Arc):
            raise SpecMismatch("circle open sets are arcs")
        if c.n == 0:
            return Coset(IDENTITY, 1)
        start = U.start * c.n if c.n > 0 else (U.start + Angle(U.length)) * c.n
        return Arc(start, U.length * abs(c.n))
    if not isinstance(U, Cylinder):
        raise SpecMismatch("product open sets are cylinders")
    fixed = dict(U.fixed)
    if kind is Kind.PADIC:
        depth = len(fixed)
        if sorted(fixed) != list(range(depth)):
            raise ValueError("p-adic cylinders must fix a prefix of digits")
        p = c.spec.p
        k = c.padic_exponent
        t = sum(fixed[i] * p ** i for i in range(depth))
        offset = Angle(c.level * t)
        return Coset(offset, p ** (k - depth) if k > depth else 1)
    offset = Fraction(0)
    order = 1
    if kind is Kind.Z4Z2 and c.n:
        if U.z4 is None:
            order = 4 // math.gcd(c.n, 4)
        else:
            offset += Fraction(c.n * U.z4, 4)
    for i, r in c.terms:
        m = c.spec.modulus(i)
        if i in fixed:
            offset += Fraction(r * fixed[i], m)
        else:
            order = math.lcm(order, m // math.gcd(r, m))
    return Coset(Angle(offset), order)


# --- exact cylinder measures ----------------------------------------------

class MeasureResult(NamedTuple):
    value: Fraction
    consistent: bool


def _valuation(a: int, p: int) -> int:
    v = 0
    while a % p == 0:
        a //= p
        v += 1
    return v


def _local_image(rows: list[list[int]], rhs: list[int], p: int, e: int) -> tuple[int, bool]:
    """Size of the column span of ``rows`` over ``Z/p^e`` and whether ``rhs``
    lies in it, by Smith reduction over the local ring."""
    q = p ** e
    A = [[c % q for c in row] for row in rows]
    b = [v % q for v in rhs]
    r = len(A)
    n = len(A[0]) if A else 0
    size = 1
    pivots: list[int] = []
    k = 0
    while k < min(r, n):
        best = None
        for i in range(k, r):
            for j in range(k, n):
                if A[i][j]:
                    v = _valuation(A[i][j], p)
                    if best is None or v < best[0]:
                        best = (v, i, j)
        if best is None:
            break
        v, i, j = best
        A[k], A[i] = A[i], A[k]
        b[k], b[i] = b[i], b[k]
        for row in A:
            row[k], row[j] = row[j], row[k]
        pv = p ** v
        inv = pow(A[k][k] // pv, -1, q)
        A[k] = [(x * inv) % q for x in A[k]]
        b[k] = (b[k] * inv) % q
        for i2 in range(r):
            if i2 != k and A[i2][k]:
                f = A[i2][k] // pv
                A[i2] = [(x - f * y) % q for x, y in zip(A[i2], A[k])]
                b[i2] = (b[i2] - f * b[k]) % q
        for j2 in range(n):
            if j2 != k and A[k][j2]:
                f = A[k][j2] // pv
                for row in A:
                    row[j2] = (row[j2] - f * row[k]) % q
        size *= p ** (e - v)
        pivots.append(v)
        k += 1
    ok = all(b[i] % p ** v == 0 for i, v in enumerate(pivots))
    ok = ok and all(b[i] == 0 for i in range(k, r))
    return size, ok


def _cyclic_variables(spec: GroupSpec, chars: Sequence[Character]):
    """Rewrite characters as ``sum coef_v * x_v / m_v`` over cyclic variables."""
    variables: dict[object, int] = {}
    rows: list[dict[object, int]] = []
    if spec.kind is Kind.PADIC:
        K = max((c.padic_exponent for c in chars), default=0)
        variables["t"] = spec.p ** K
        for c in chars:
            rows.append({"t": c.level.numerator * spec.p ** (K - c.padic_exponent)})
        return variables, rows
    for c in chars:
        row: dict[object, int] = {}
        if spec.kind is Kind.Z4Z2 and c.n:
            variables["z4"] = 4
            row["z4"] = c.n
        for i, r in c.terms:
            variables[i] = spec.modulus(i)
            row[i] = r
        rows.append(row)
    return variables, rows


def cylinder_measure(spec: GroupSpec, constraints: Sequence[tuple[Character, Angle]]) -> MeasureResult:
    """Exact Haar measure of ``{x : c(x) = v for every (c, v)}``."""
    for c, _ in constraints:
        _same(c.spec, spec)
    if spec.kind is Kind.CIRCLE:
        value = Fraction(1)
        for c, v in constraints:
            if c.n == 0:
                if not v.is_identity():
                    return MeasureResult(Fraction(0), False)
            else:
                value = Fraction(0)
        return MeasureResult(value, True)
    chars = [c for c, _ in constraints]
    variables, rows = _cyclic_variables(spec, chars)
    M = math.lcm(*variables.values()) if variables else 1
    keys = list(variables)
    int_rows, rhs = [], []
    for row, (_, v) in zip(rows, constraints):
        bM = v.value * M
        if bM.denominator != 1:
            return MeasureResult(Fraction(0), False)
        int_rows.append([row.get(key, 0) * (M // variables[key]) for key in keys])
        rhs.append(int(bM))
    if not keys:
        ok = all(b % M == 0 for b in rhs)
        return MeasureResult(Fraction(int(ok)), ok)
    value = Fraction(1)
    for p, e in sympy.factorint(M).items():
        size, ok = _local_image(int_rows, rhs, p, e)
        if not ok:
            return MeasureResult(Fraction(0), False)
        value /= size
    return MeasureResult(value, True)


# --- dual homomorphisms --------------------------------------------------

@dataclass(frozen=True)
class DualHom:
    """A homomorphism between duals, standing in for a quotient map.

    Sends characters of ``source`` to characters of ``target``; the point
    map it is dual to is never built.
    """

    source: GroupSpec
    target: GroupSpec
    image_of: Callable[[Character], Character]
    name: str = ""

    def __call__(self, c: Character) -> Character:
        _same(c.spec, self.source)
        out = self.image_of(c)
        _same(out.spec, self.target)
        return out

    @classmethod
    def identity(cls, spec: GroupSpec) -> "DualHom":
        return cls(spec, spec, lambda c: c, "identity")

    @classmethod
    def z2w_into_z4z2(cls) -> "DualHom":
        """``chi_n -> (0, {n})``: dual to dropping the ``Z_4`` factor."""
        src, dst = GroupSpec.fixed_prime(2), GroupSpec.z4z2()
        return cls(src, dst, lambda c: Character(dst, terms=c.terms), "z2w->z4z2")

    @classmethod
    def coordinate_shift(cls, spec: GroupSpec, k: int) -> "DualHom":
        """``chi_i -> chi_{i+k}`` on ``(Z_p)^omega``: dual to the left shift."""
        if spec.kind is not Kind.FIXED_PRIME:
            raise SpecMismatch("coordinate shifts are defined on (Z_p)^omega")
        return cls(spec, spec, lambda c: Character(spec, terms=tuple((i + k, r) for i, r in c.terms)),
                   f"shift+{k}")


def pullback(c: Character, h: DualHom) -> Character:
    """The character ``c`` composed with the quotient map behind ``h``."""
    return h(c)
