"""Nice partitions of the dual, the metrics ``rho_j``, thin sequences, and
the horizon-bounded niceness checker.

A plan's blocks are ranges of a rank function on characters (circle: ``|n|``;
product kinds: largest support index; p-adic: level ``k``), so a block with
astronomically many members is still a constant-size object.  The circle
also has a *lacunary* plan whose blocks are single powers of a base; it does
not exhaust the dual, but the perturbation property holds for every
character it does contain, which is all the witness constructions use.
"""

from __future__ import annotations

import bisect
from dataclasses import dataclass, field
from enum import Enum
from fractions import Fraction
from itertools import islice
from typing import Iterator, NamedTuple, Union

from .circle import (Angle, Arc, PiMultiple, arc_distance, chord_bounds, compare_chord,
                     image_covers)
from .groups import (Character, Cylinder, GroupSpec, Kind, Point, SpecMismatch, base_metric,
                     character_image, characters_with_max_support, circle_character,
                     enumerate_characters, evaluate, identity_character, value_range)

# 355/113 exceeds pi by less than 3e-7; used wherever a rational upper bound will do
PI_UPPER = Fraction(355, 113)
ENUMERATION_LIMIT = 4096
COVER_BIT_LIMIT = 1 << 22


class NotNice(ValueError):
    """The group admits no nice partition (the ``z4z2`` counterexample)."""


# --- blocks ----------------------------------------------------------------

def rank(c: Character) -> int:
    kind = c.spec.kind
    if kind is Kind.CIRCLE:
        return abs(c.n)
    if kind is Kind.PADIC:
        return c.padic_exponent
    if kind is Kind.Z4Z2:
        raise NotNice("z4z2 has no nice partition")
    return c.max_support


@dataclass(frozen=True)
class Block:
    """Characters of rank in ``(lo, hi]``, or an explicit tuple."""

    spec: GroupSpec
    lo: int
    hi: int
    explicit: tuple[Character, ...] | None = None

    def __contains__(self, c: Character) -> bool:
        if c.spec != self.spec:
            return False
        if self.explicit is not None:
            return c in self.explicit
        return self.lo < rank(c) <= self.hi

    def __iter__(self) -> Iterator[Character]:
        if self.explicit is not None:
            yield from self.explicit
            return
        spec = self.spec
        kind = spec.kind
        for r in range(self.lo + 1, self.hi + 1):
            if kind is Kind.CIRCLE:
                yield circle_character(r)
                if r:
                    yield circle_character(-r)
            elif kind is Kind.PADIC:
                if r == 0:
                    yield identity_character(spec)
                    continue
                q = spec.p ** r
                for a in range(1, q):
                    if a % spec.p:
                        yield Character(spec, level=Fraction(a, q))
            elif r == -1:
                yield identity_character(spec)
            else:
                yield from characters_with_max_support(spec, r)

    @property
    def size(self) -> int:
        if self.explicit is not None:
            return len(self.explicit)
        kind = self.spec.kind
        if kind is Kind.CIRCLE:
            return 2 * self.hi + 1 if self.lo < 0 else 2 * (self.hi - self.lo)
        if kind is Kind.PADIC:
            p = self.spec.p
            return p ** self.hi - (p ** self.lo if self.lo >= 0 else 0)
        # counts telescope to products of moduli
        return _modulus_product(self.spec, self.hi) - _modulus_product(self.spec, self.lo)

    def first(self) -> Character:
        return next(iter(self))

    def pick(self, rule: Union[str, int] = "first") -> Character:
        if rule == "first":
            return self.first()
        if isinstance(rule, int):
            try:
                return next(islice(iter(self), rule, None))
            except StopIteration:
                raise IndexError(f"block has no element {rule}") from None
        raise ValueError(f"unknown offset rule {rule!r}")

    def to_json(self, limit: int = 16) -> dict:
        d: dict = {"size": self.size}
        if self.explicit is None:
            d["rank_range"] = [self.lo, self.hi]
        d["characters"] = [str(c) for c in islice(iter(self), limit)]
        if self.size > limit:
            d["truncated"] = True
        return d


def _modulus_product(spec: GroupSpec, s: int) -> int:
    if s < -1:
        return 0
    out = 1
    for i in range(s + 1):
        out *= spec.modulus(i)
    return out


# --- plans -----------------------------------------------------------------

@dataclass(frozen=True)
class PartitionPlan:
    """Blocks ``Phi_0 .. Phi_J`` with one certificate per block."""

    spec: GroupSpec
    blocks: tuple[Block, ...]
    certificates: tuple[dict, ...]
    rule: str
    covers_dual: bool = True
    _his: tuple[int, ...] = field(init=False, repr=False, compare=False)
    _explicit: dict = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        object.__setattr__(self, "_his", tuple(b.hi for b in self.blocks))
        lookup = {}
        for j, b in enumerate(self.blocks):
            for c in b.explicit or ():
                lookup[c] = j
        object.__setattr__(self, "_explicit", lookup)

    @property
    def depth(self) -> int:
        return len(self.blocks) - 1

    def block(self, j: int) -> Block:
        return self.blocks[j]

    def block_index(self, c: Character) -> int | None:
        """Index of the block holding ``c``; ``None`` beyond the plan."""
        if c.spec != self.spec:
            raise SpecMismatch(f"{c.spec} vs {self.spec}")
        if self._explicit:
            return self._explicit.get(c)
        j = bisect.bisect_left(self._his, rank(c))
        return j if j < len(self.blocks) else None

    def characters_through(self, j: int) -> Iterator[Character]:
        for b in self.blocks[:j + 1]:
            yield from b

    def count_through(self, j: int) -> int:
        return sum(b.size for b in self.blocks[:j + 1])

    def reads_below(self, j: int) -> int:
        """Coordinates (digits) ``>=`` this bound are invisible to ``Phi_0..Phi_j``."""
        if self.spec.kind is Kind.CIRCLE:
            raise SpecMismatch("circle characters have no coordinates")
        if self.spec.kind is Kind.PADIC:
            return self.blocks[j].hi
        return self.blocks[j].hi + 1

    def to_json(self) -> dict:
        return {
            "group": self.spec.name,
            "rule": self.rule,
            "covers_dual": self.covers_dual,
            "blocks": [dict(b.to_json(), certificate=c)
                       for b, c in zip(self.blocks, self.certificates)],
        }


def build_nice_partition(spec: GroupSpec, depth: int, circle_mode: str = "cover",
                         lacunary_base: int = 4) -> PartitionPlan:
    """Blocks ``Phi_0 .. Phi_depth`` with the perturbation property.

    For each ``j`` and every character in a block ``>= j+2`` the structural
    witness of :func:`verify_partition_condition` moves any point by less
    than ``2**-j`` in ``rho_j`` while bringing the character's value within
    ``2**-j`` of any target.  ``Phi_0`` is always the identity.
    """
    if depth < 0:
        raise ValueError("depth must be nonnegative")
    kind = spec.kind
    if kind is Kind.Z4Z2:
        raise NotNice("Z4 x (Z2)^omega is not nice: every character maps "
                      "{x = i} into {i, -i} or a point")
    if kind is Kind.CIRCLE:
        if circle_mode == "cover":
            return _circle_cover_plan(spec, depth)
        if circle_mode == "lacunary":
            return _circle_lacunary_plan(spec, depth, lacunary_base)
        raise ValueError(f"unknown circle mode {circle_mode!r}")
    if kind is Kind.PADIC:
        return _padic_plan(spec, depth)
    return _support_plan(spec, depth)


def _circle_cover_plan(spec: GroupSpec, depth: int) -> PartitionPlan:
    # y = x + t with |t| <= 1/(2|n|) reaches every target exactly; it moves rho_j by
    # at most |t| * (1 + 2*pi*M_j*(M_j + 1)), so every |n| > 2**(j-1) * K_j is usable
    his, certs = [0], [{"rule": "identity"}]
    for j in range(depth):
        M = his[-1]
        K = 1 + 2 * PI_UPPER * M * (M + 1)
        need = int(Fraction(2) ** (j - 1) * K)
        nxt = max(M + 1, need)
        if nxt.bit_length() > COVER_BIT_LIMIT:
            raise ValueError(f"circle cover plan too large at depth {j + 1}; use circle_mode='lacunary'")
        his.append(nxt)
        certs.append({"rule": "exponent-range", "mesh_constant": str(K),
                      "usable_from_level": j, "usable_exponent_above": nxt})
    blocks = [Block(spec, -1, 0)] + [Block(spec, a, b) for a, b in zip(his, his[1:])]
    return PartitionPlan(spec, tuple(blocks), tuple(certs), "circle-cover")


def _circle_lacunary_plan(spec: GroupSpec, depth: int, base: int) -> PartitionPlan:
    if base < 2:
        raise ValueError("lacunary base must be at least 2")
    exps = [0, 1]
    certs = [{"rule": "identity"}, {"rule": "lacunary", "exponent": 1}]
    while len(exps) <= depth:
        k = len(exps)
        j = k - 2
        K = 1 + 2 * PI_UPPER * sum(exps[:j + 1])
        need = Fraction(2) ** (j - 1) * K
        e = exps[-1] * base
        while e <= need:
            e *= base
        exps.append(e)
        certs.append({"rule": "lacunary", "exponent": e, "mesh_constant": str(K),
                      "usable_from_level": j})
    blocks = tuple(Block(spec, 0, 0, explicit=(circle_character(e),)) for e in exps[:depth + 1])
    return PartitionPlan(spec, blocks, tuple(certs[:depth + 1]), f"circle-lacunary:{base}",
                         covers_dual=False)


def _first_index_above(spec: GroupSpec, j: int) -> int:
    """Least ``i`` with ``chord(1/(2*p_i)) < 2**-j``."""
    i = 0
    while compare_chord(Fraction(1, 2 * spec.modulus(i)), Fraction(1, 2 ** j)) >= 0:
        i = 2 * i + 1 if i else 1
    lo, hi = i // 2, i
    while lo < hi:
        mid = (lo + hi) // 2
        if compare_chord(Fraction(1, 2 * spec.modulus(mid)), Fraction(1, 2 ** j)) < 0:
            hi = mid
        else:
            lo = mid + 1
    return lo


def _support_plan(spec: GroupSpec, depth: int) -> PartitionPlan:
    # a character of max support > max(j, s_j) can be steered through that one
    # coordinate without disturbing rho_j; distinct-prime factors also need the
    # coset of reachable values to be 2**-j dense
    his, certs = [-1], [{"rule": "identity"}]
    for j in range(depth):
        s = his[-1]
        nxt = max(s + 1, j)
        cert = {"rule": "max-support", "usable_from_level": j,
                "invisible_from_coordinate": max(j, s) + 1}
        if spec.kind is Kind.DISTINCT_PRIMES:
            nxt = max(nxt, _first_index_above(spec, j) - 1)
            cert["min_modulus_after"] = spec.modulus(nxt + 1)
        his.append(nxt)
        certs.append(cert)
    blocks = [Block(spec, -2, -1)] + [Block(spec, a, b) for a, b in zip(his, his[1:])]
    return PartitionPlan(spec, tuple(blocks), tuple(certs), "max-support")


def _padic_plan(spec: GroupSpec, depth: int) -> PartitionPlan:
    p = spec.p
    his, certs = [0], [{"rule": "identity"}]
    for j in range(depth):
        L = his[-1]
        c = max(j + 1, L)
        # smallest e >= 1 with chord(1/(2 p^e)) < 2^-j, then L' + 1 - c >= e
        e = 1
        while compare_chord(Fraction(1, 2 * p ** e), Fraction(1, 2 ** j)) >= 0:
            e += 1
        nxt = max(L + 1, c + e - 1)
        his.append(nxt)
        certs.append({"rule": "level", "usable_from_level": j, "free_digits_from": c,
                      "coset_order_at_least": p ** (nxt + 1 - c)})
    blocks = [Block(spec, -1, 0)] + [Block(spec, a, b) for a, b in zip(his, his[1:])]
    return PartitionPlan(spec, tuple(blocks), tuple(certs), "padic-level")


# --- the metrics rho_j -------------------------------------------------------

class Bounds(NamedTuple):
    lo: Fraction
    hi: Fraction


def rho_j(x: Point, y: Point, plan: PartitionPlan, j: int, limit: int = ENUMERATION_LIMIT) -> Bounds:
    """Enclosure of ``rho(x,y) + sum |phi(x) - phi(y)|`` over ``Phi_0 .. Phi_j``."""
    if not 0 <= j <= plan.depth:
        raise ValueError(f"j = {j} outside plan depth {plan.depth}")
    spec = plan.spec
    if x.angle == y.angle and x.z4 == y.z4 and x.source == y.source:
        return Bounds(Fraction(0), Fraction(0))
    circle = spec.kind is Kind.CIRCLE
    depth = max(64, j + 2) if circle else max(64, j + 2, plan.reads_below(j) + 1)
    base = base_metric(x, y, depth)
    lo = base.value if base.resolved else Fraction(0)
    hi = base.value if base.resolved else base.bound
    if circle:
        d = arc_distance(x.angle, y.angle)
        if d == 0:
            return Bounds(lo, hi)
    elif all(x.coord(i) == y.coord(i) for i in range(plan.reads_below(j))) and x.z4 == y.z4:
        return Bounds(lo, hi)
    n = plan.count_through(j)
    if n <= limit:
        for c in plan.characters_through(j):
            c_lo, c_hi = chord_bounds(arc_distance(evaluate(c, x), evaluate(c, y)))
            lo += c_lo
            hi += c_hi
        return Bounds(lo, hi)
    if circle:
        M = plan.blocks[j].hi
        # chord(m x, m y) <= 2*pi*|m|*d, summed over |m| <= M
        return Bounds(lo, hi + min(2 * n, 2 * PI_UPPER * d * M * (M + 1)))
    return Bounds(lo, hi + 2 * n)


# --- the perturbation property --------------------------------------------------

class ConditionResult(NamedTuple):
    ok: bool
    y: Point | None
    rho_upper: Fraction | None
    chord_upper: Fraction | None
    method: str


def _signed(v: Fraction) -> Fraction:
    """Representative of ``v mod 1`` in ``(-1/2, 1/2]``."""
    v %= 1
    return v - 1 if v > Fraction(1, 2) else v


def _nearest_step(w: Fraction, m: int) -> int:
    """``k mod m`` with ``k/m`` nearest to ``w`` on the circle."""
    return round(w * m) % m


def _structural_witness(plan: PartitionPlan, j: int, phi: Character, x: Point, z: Angle):
    spec = plan.spec
    kind = spec.kind
    if kind is Kind.CIRCLE:
        n = phi.n
        delta = _signed((z - x.angle * n).value)
        return [Point(spec, angle=x.angle + Angle(delta / n))], "solve n*t = z - n*x"
    w = (z - evaluate(phi, x)).value
    if kind is Kind.PADIC:
        p = spec.p
        k = phi.padic_exponent
        c = max(j + 1, plan.reads_below(j))
        if k <= c:
            return [], "no free digits"
        a = phi.level.numerator
        m = p ** (k - c)
        old = sum(x.coord(i) * p ** (i - c) for i in range(c, k))
        # phi(y) - phi(x) = a*(u - old)/m for the new high digits u
        u = (old + _nearest_step(w, m) * pow(a, -1, m)) % m
        patch = {c + i: (u // p ** i) % p for i in range(k - c)}
        return [x.with_patch(patch)], "rewrite digits beyond rho_j"
    i = phi.max_support
    if i <= max(j, plan.reads_below(j) - 1):
        return [], "support visible to rho_j"
    m = spec.modulus(i)
    r = dict(phi.terms)[i]
    v = (x.coord(i) + _nearest_step(w, m) * pow(r, -1, m)) % m
    return [x.with_patch({i: v})], "rewrite one coordinate beyond rho_j"


def verify_partition_condition(plan: PartitionPlan, j: int, phi: Character, x: Point, z: Angle,
                               budget: int = 64) -> ConditionResult:
    """Find ``y`` with ``rho_j(x, y) < 2**-j`` and ``|phi(y) - z| < 2**-j``.

    The structural rule changes ``x`` only where ``rho_j`` cannot see; on the
    circle, further lifts of the solution are tried up to ``budget``.  A
    failed result means the search gave up, not that no ``y`` exists.
    """
    if phi.spec != plan.spec or x.spec != plan.spec:
        raise SpecMismatch("plan, character and point must share a group")
    if not 0 <= j <= plan.depth:
        raise ValueError(f"j = {j} outside plan depth {plan.depth}")
    k = plan.block_index(phi)
    # characters past a range plan sit in later blocks; the bounds are certified below anyway
    past_plan = k is None and plan.covers_dual
    if not past_plan and (k is None or k < j + 2):
        raise ValueError(f"{phi} must lie in a block >= {j + 2}, found {k}")
    if z not in value_range(plan.spec):
        raise ValueError(f"target {z} is not a character value")
    eps = Fraction(1, 2 ** j)
    if evaluate(phi, x) == z:
        return ConditionResult(True, x, Fraction(0), Fraction(0), "already there")
    candidates, method = _structural_witness(plan, j, phi, x, z)
    if plan.spec.kind is Kind.CIRCLE:
        t = (candidates[0].angle - x.angle).value
        n = abs(phi.n)
        extra = sorted(range(-budget, budget + 1), key=abs)[1:]
        candidates += [Point(plan.spec, angle=x.angle + Angle(_signed(t) + Fraction(s, n)))
                       for s in extra]
    for y in candidates:
        rho = rho_j(x, y, plan, j)
        d = arc_distance(evaluate(phi, y), z)
        ch = chord_bounds(d)[1] if d else Fraction(0)
        if rho.hi < eps and compare_chord(d, eps) < 0:
            return ConditionResult(True, y, rho.hi, ch, method)
    return ConditionResult(False, None, None, None, "budget exhausted")


# --- thin sequences -------------------------------------------------------------

@dataclass(frozen=True)
class ThinSequence:
    """Characters ``phi_n`` in blocks ``j_n`` with ``j_{n+1} >= j_n + 2``."""

    plan: PartitionPlan
    characters: tuple[Character, ...]
    indices: tuple[int, ...]

    def __post_init__(self):
        if len(self.characters) != len(self.indices):
            raise ValueError("one block index per character")
        for a, b in zip(self.indices, self.indices[1:]):
            if b < a + 2:
                raise ValueError(f"block indices {a}, {b} are not thin")
        for c, j in zip(self.characters, self.indices):
            if self.plan.block_index(c) != j:
                raise ValueError(f"{c} is not in block {j}")

    def __len__(self) -> int:
        return len(self.characters)

    def __getitem__(self, n: int) -> Character:
        return self.characters[n]

    def to_json(self) -> dict:
        return {"characters": [str(c) for c in self.characters], "blocks": list(self.indices)}


def thin_select(plan: PartitionPlan, stride: int = 3, length: int | None = None,
                offset_rule: Union[str, int] = "first") -> ThinSequence:
    """One character from each of ``Phi_0, Phi_stride, Phi_2*stride, ...``."""
    if stride < 2:
        raise ValueError("thin sequences need stride >= 2")
    if length is None:
        length = plan.depth // stride + 1
    if stride * (length - 1) > plan.depth:
        raise ValueError(f"plan depth {plan.depth} < {stride * (length - 1)} needed")
    js = tuple(stride * n for n in range(length))
    return ThinSequence(plan, tuple(plan.block(j).pick(offset_rule) for j in js), js)


# --- niceness -----------------------------------------------------------------

class NicenessVerdict(str, Enum):
    SUPPORTED = "supported"
    REFUTED = "refuted"
    INCONCLUSIVE = "inconclusive"


@dataclass(frozen=True)
class NicenessReport:
    verdict: NicenessVerdict
    open_set: str
    eps: Fraction
    horizon: int
    scanned: int
    failing: tuple[Character, ...]
    failing_indices: tuple[int, ...]
    initial_segment: int | None = None

    def to_json(self) -> dict:
        return {
            "verdict": self.verdict.value, "open_set": self.open_set, "eps": str(self.eps),
            "horizon": self.horizon, "scanned": self.scanned,
            "failing": [str(c) for c in self.failing],
            "failing_indices": list(self.failing_indices),
            "initial_segment": self.initial_segment,
        }


def describe_open_set(U) -> str:
    if isinstance(U, Arc):
        return f"arc:{U.start},{U.length}"
    parts = [f"{i}={v}" for i, v in U.fixed]
    if U.z4 is not None:
        parts.insert(0, f"z4={U.z4}")
    return "cyl:" + ",".join(parts)


def parse_open_set(spec: GroupSpec, text: str):
    """``arc:start,length`` on the circle; ``cyl:0=1,3=0`` (and ``z4=k``) elsewhere."""
    t = text.strip().replace(" ", "")
    head, _, body = t.partition(":")
    if head == "arc":
        start, length = body.split(",")
        return Arc(Angle(Fraction(start)), Fraction(length))
    if head == "cyl":
        fixed, z4 = {}, None
        for item in filter(None, body.split(",")):
            k, v = item.split("=")
            if k == "z4":
                z4 = int(v) % 4
            else:
                fixed[int(k)] = int(v)
        return Cylinder.of(fixed, z4)
    raise ValueError(f"cannot parse open set {text!r}")


def check_niceness(spec: GroupSpec, U, eps, horizon: int, scan_factor: int = 4) -> NicenessReport:
    """Test ``cl(values) ⊆ N_eps(phi(U))`` over the first characters.

    Supported: no failure in the second half of the first ``horizon``
    characters.  Refuted: scanning ``scan_factor * horizon`` characters finds
    at least ``horizon`` failures, still occurring in the last quarter.
    Coverage uses the open neighbourhood, decided exactly.
    """
    if horizon < 2:
        raise ValueError("horizon must be at least 2")
    eps = Fraction(eps) if not isinstance(eps, PiMultiple) else eps
    target = value_range(spec)
    limit = scan_factor * horizon
    chars = list(islice(enumerate_characters(spec), limit))
    failing: list[int] = []
    for idx, c in enumerate(chars[:horizon]):
        if not image_covers(character_image(c, U), eps, target, strict=True):
            failing.append(idx)
    desc = describe_open_set(U)

    def report(verdict, fails, scanned, initial=None):
        return NicenessReport(verdict, desc, eps, horizon, scanned,
                              tuple(chars[i] for i in fails), tuple(fails), initial)

    if not failing or failing[-1] < horizon // 2:
        return report(NicenessVerdict.SUPPORTED, failing, horizon,
                      failing[-1] + 1 if failing else 0)
    for idx in range(horizon, len(chars)):
        if not image_covers(character_image(chars[idx], U), eps, target, strict=True):
            failing.append(idx)
    if len(failing) >= horizon and failing[-1] >= len(chars) - len(chars) // 4:
        return report(NicenessVerdict.REFUTED, failing, len(chars))
    return report(NicenessVerdict.INCONCLUSIVE, failing, len(chars))


__all__ = [
    "Block", "Bounds", "ConditionResult", "NicenessReport", "NicenessVerdict", "NotNice",
    "PartitionPlan", "ThinSequence", "build_nice_partition", "check_niceness",
    "describe_open_set", "parse_open_set", "rank", "rho_j", "thin_select",
    "verify_partition_condition",
]
