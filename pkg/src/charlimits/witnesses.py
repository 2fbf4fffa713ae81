"""Witness points for prescribed limit behaviour, and finite-stage membership
verdicts for ``C_B``, ``wC_B`` and ``D_F``.

The iterative constructions keep every iterate with its certified step
bounds, so a :class:`WitnessTrace` can be re-checked from scratch.  Within
the trace, ``n`` indexes the thin sequence and the step that fixes
``phi_n`` moves the previous iterate by less than ``2**-n`` in the metric
``rho_{j_{n-1}}``.
"""

from __future__ import annotations

import bisect
import math
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Sequence

from .circle import (IDENTITY, Angle, Arc, ChordBall, Coset, PiMultiple, arc_distance,
                     chord_bounds, compare_chord)
from .density import IndexSet, explicit
from .groups import (Character, Cylinder, GroupSpec, Kind, Point, SpecMismatch, base_metric,
                     character_image, evaluate, identity_point, value_range)
from .partitions import PartitionPlan, ThinSequence, rho_j, verify_partition_condition
from .verdict import Cluster, Verdict, VerdictKind, inconclusive


class UnreachableTarget(ValueError):
    """A target angle is not in the closure of the character values."""


class ScheduleError(ValueError):
    """An adversary prefix is too short for the requested depth."""


def _pow2(n: int) -> Fraction:
    return Fraction(1, 2 ** n) if n >= 0 else Fraction(2 ** -n)


# --- traces ------------------------------------------------------------------

@dataclass(frozen=True)
class StepRecord:
    n: int
    j_prev: int
    target: Angle
    rho_upper: Fraction
    chord_upper: Fraction
    method: str

    def to_json(self) -> dict:
        return {"n": self.n, "j_prev": self.j_prev, "target": str(self.target),
                "rho_upper": str(self.rho_upper), "chord_upper": str(self.chord_upper),
                "method": self.method}


@dataclass
class WitnessTrace:
    """Iterates ``x_0 .. x_N`` with the bounds certified at each step.

    ``first_step`` is the first ``n`` at which an iterate was moved; the
    telescoping guarantee is asserted from ``guarantee_from`` on.
    """

    thin: ThinSequence
    targets: tuple[Angle, ...]
    iterates: list[Point]
    steps: list[StepRecord]
    first_step: int
    guarantee_from: int
    failure: int | None = None
    extra: dict = field(default_factory=dict)

    @property
    def final(self) -> Point:
        return self.iterates[-1]

    @property
    def depth(self) -> int:
        return len(self.iterates) - 1

    def step_bound(self, step: StepRecord) -> Fraction:
        # for n >= 2 thinness gives j_{n-1} >= n; the first step only has 2**-j_0
        return _pow2(step.n) if step.n >= 2 else _pow2(step.j_prev)

    def recheck(self) -> bool:
        """Recompute every stored bound from the iterates."""
        plan = self.thin.plan
        for s in self.steps:
            prev, cur = self.iterates[s.n - 1], self.iterates[s.n]
            rho = rho_j(prev, cur, plan, s.j_prev)
            d = arc_distance(evaluate(self.thin[s.n], cur), s.target)
            ch = chord_bounds(d)[1] if d else Fraction(0)
            bound = self.step_bound(s)
            if rho.hi > s.rho_upper or ch > s.chord_upper:
                return False
            if not (s.rho_upper < bound and compare_chord(d, bound) < 0):
                return False
        return True

    def final_distances(self) -> list[Fraction]:
        """Arc distances ``|phi_n(x) - target_n|`` at the final point, ``n <= N``."""
        x = self.final
        return [arc_distance(evaluate(self.thin[n], x), self.targets[n])
                for n in range(self.depth + 1)]

    def telescoping_holds(self) -> bool:
        """``chord(phi_n(x), target_n) <= 2**(-n+1)`` for every guaranteed ``n``."""
        dists = self.final_distances()
        return all(compare_chord(dists[n], _pow2(n - 1)) <= 0
                   for n in range(self.guarantee_from, self.depth + 1))

    def to_json(self) -> dict:
        d = {
            "group": self.thin.plan.spec.name,
            "thin": self.thin.to_json(),
            "targets": [str(t) for t in self.targets],
            "steps": [s.to_json() for s in self.steps],
            "first_step": self.first_step,
            "guarantee_from": self.guarantee_from,
            "final": self.final.to_json(),
            "failure": self.failure,
        }
        if self.failure is None:
            d["final_chord_upper"] = [str(chord_bounds(a)[1]) for a in self.final_distances()]
        d.update(self.extra)
        return d


def _iterate(thin: ThinSequence, targets: Sequence[Angle], start: Point, first: int,
             guarantee_from: int, depth: int, budget: int) -> WitnessTrace:
    iterates = [start] * first
    steps: list[StepRecord] = []
    trace = WitnessTrace(thin, tuple(targets), iterates, steps, first, guarantee_from)
    plan = thin.plan
    x = start
    for n in range(first, depth + 1):
        j_prev = thin.indices[n - 1]
        res = verify_partition_condition(plan, j_prev, thin[n], x, targets[n], budget)
        if not res.ok:
            trace.failure = n
            return trace
        steps.append(StepRecord(n, j_prev, targets[n], res.rho_upper, res.chord_upper, res.method))
        x = res.y
        iterates.append(x)
    return trace


def _check_thin(thin: ThinSequence, depth: int):
    if depth < 1:
        raise ValueError("depth must be at least 1")
    if len(thin) < depth + 1:
        raise ValueError(f"thin sequence has {len(thin)} terms, depth {depth} needs {depth + 1}")


def split_witness(thin: ThinSequence, A: IndexSet, B: IndexSet, a: Angle, b: Angle, depth: int,
                  budget: int = 64) -> tuple[Point, WitnessTrace]:
    """A point whose values along ``thin`` tend to ``a`` on ``A`` and to ``b`` on ``B``.

    ``x_0`` is the identity; every later iterate, ``x_1`` included, is
    produced by the perturbation step, so the stored bounds cover ``n >= 1``.
    On failure the trace ends early and ``trace.failure`` names the step.
    """
    _check_thin(thin, depth)
    spec = thin.plan.spec
    vr = value_range(spec)
    for t in (a, b):
        if t not in vr:
            raise UnreachableTarget(f"{t} is not in the closure of the values ({vr})")
    targets = []
    for n in range(depth + 1):
        in_a, in_b = n in A, n in B
        if in_a == in_b:
            raise ValueError(f"A and B must partition the indices; {n} is in {'both' if in_a else 'neither'}")
        targets.append(a if in_a else b)
    trace = _iterate(thin, targets, identity_point(spec), 1, 2, depth, budget)
    return trace.final, trace


def dense_witness(thin: ThinSequence, q: Point, r: int, depth: int,
                  budget: int = 64) -> tuple[Point, WitnessTrace]:
    """A point within ``2**-r`` of ``q`` whose values along ``thin`` tend to 1."""
    _check_thin(thin, depth)
    if not 1 <= r <= depth:
        raise ValueError("need 1 <= r <= depth")
    if q.spec != thin.plan.spec:
        raise SpecMismatch(f"{q.spec} vs {thin.plan.spec}")
    targets = [IDENTITY] * (depth + 1)
    trace = _iterate(thin, targets, q, r + 1, r + 1, depth, budget)
    dist = base_metric(trace.final, q, depth=max(64, thin.indices[-1] + 2))
    upper = dist.value if dist.resolved else dist.bound
    trace.extra["ball"] = {"radius": str(_pow2(r)), "distance_upper": str(upper),
                           "certified": upper <= _pow2(r)}
    return trace.final, trace


# --- diagonal evasion -----------------------------------------------------------

@dataclass(frozen=True)
class EvasionProblem:
    thin: ThinSequence
    adversaries: tuple[tuple[Character, ...], ...]
    z: Angle
    depth: int

    def __post_init__(self):
        if self.z.is_identity():
            raise ValueError("the oscillation target must differ from 1")
        if self.z not in value_range(self.thin.plan.spec):
            raise UnreachableTarget(f"{self.z} is not a character value")
        for ell, B in enumerate(self.adversaries):
            if len(set(B)) != len(B):
                raise ValueError(f"adversary {ell} repeats a character")
        if len(self.thin) < self.depth + 1:
            raise ValueError("thin sequence shorter than the depth")
        if any(j != 3 * n for n, j in enumerate(self.thin.indices[:self.depth + 1])):
            raise ValueError("the base sequence must take phi_n from block 3n")


@dataclass
class EvasionResult:
    x: Point
    phi_prime: ThinSequence
    E: IndexSet
    F: IndexSet
    slots: list[tuple[int, int, str]]
    trace: WitnessTrace
    certificates: dict

    def to_json(self) -> dict:
        return {"x": self.x.to_json(), "phi_prime": self.phi_prime.to_json(),
                "slots": [{"n": n, "adversary": ell, "side": side} for n, ell, side in self.slots],
                "certificates": self.certificates, "trace": self.trace.to_json()}


def evasion_slots(depth: int) -> list[int]:
    """Indices ``k**2`` past ``sqrt(depth)``: sparse enough for density ``1 - 1/sqrt(N)``,
    late enough that the values there are within ``2**-floor(sqrt(N))`` of their targets."""
    start = math.isqrt(depth) + 1
    return [k * k for k in range(1, math.isqrt(depth) + 1) if k * k >= start]


def diagonal_evade(problem: EvasionProblem, budget: int = 64) -> EvasionResult:
    """A point in the density-one convergence class of ``thin`` that oscillates
    on every adversary.

    Exceptional slots are handed round-robin to the pairs ``(adversary, E)``
    and ``(adversary, F)``; at slot ``n`` the base character is replaced by an
    adversary character from block ``3n-1``, ``3n`` or ``3n+1``, which keeps the
    modified sequence thin.  Slots on the ``F`` side are steered to ``z``,
    everything else to 1.
    """
    thin, N = problem.thin, problem.depth
    plan = thin.plan
    L = len(problem.adversaries)
    by_block: list[dict[int, Character]] = []
    for B in problem.adversaries:
        table: dict[int, Character] = {}
        for c in B:
            k = plan.block_index(c)
            if k is not None and k not in table:
                table[k] = c
        by_block.append(table)
    chars = list(thin.characters[:N + 1])
    idx = list(thin.indices[:N + 1])
    F: set[int] = set()
    slots: list[tuple[int, int, str]] = []
    if L:
        for i, n in enumerate(evasion_slots(N)):
            ell, side = (i // 2) % L, "EF"[i % 2]
            table = by_block[ell]
            k = next((k for k in (3 * n, 3 * n - 1, 3 * n + 1) if k in table), None)
            if k is None:
                raise ScheduleError(
                    f"adversary {ell} has no character in blocks {3 * n - 1}..{3 * n + 1} "
                    f"(slot {n}); its prefix must reach block {3 * N + 1}")
            chars[n], idx[n] = table[k], k
            if side == "F":
                F.add(n)
            slots.append((n, ell, side))
    phi_prime = ThinSequence(plan, tuple(chars), tuple(idx))
    F_set = explicit(sorted(F))
    E_set = F_set.complement()
    x, trace = split_witness(phi_prime, E_set, F_set, IDENTITY, problem.z, N, budget)
    total = N + 1
    agree = sum(1 for n in range(total) if chars[n] == thin.characters[n])
    hits = {ell: {"E": 0, "F": 0} for ell in range(L)}
    for n, ell, side in slots:
        hits[ell][side] += 1
    floor = 1 - 1 / Fraction(math.isqrt(N)) if math.isqrt(N) ** 2 == N else None
    certs = {
        "depth": N,
        "agreement_density": str(Fraction(agree, total)),
        "E_density": str(Fraction(total - len(F), total)),
        "density_floor": str(floor) if floor is not None else f"1 - 1/sqrt({N})",
        "hits": {str(k): v for k, v in hits.items()},
        "gap": str(chord_bounds(arc_distance(IDENTITY, problem.z))[0]),
        "min_block_gap": min((b - a for a, b in zip(idx, idx[1:])), default=None),
        "trace_ok": trace.failure is None and trace.recheck(),
    }
    return EvasionResult(x, phi_prime, E_set, F_set, slots, trace, certs)


# --- C_B trees ---------------------------------------------------------------------

@dataclass(frozen=True)
class CBLevel:
    """Level ``n``: the character ``phi_n`` and how the nodes of depth ``n`` are cut.

    Coordinate groups: every node of this level fixes ``zeros`` to 0 and the
    ``split`` coordinate to its path bit.  Circle: ``arcs`` maps each path to
    its open arc.
    """

    n: int
    character: Character
    zeros: tuple[int, ...] = ()
    split: int | None = None
    arcs: dict | None = None


@dataclass
class CBTree:
    spec: GroupSpec
    levels: list[CBLevel]

    @property
    def depth(self) -> int:
        return len(self.levels)

    def node(self, s: Sequence[int]):
        """The open set ``U_s`` (``s`` a 0-1 path)."""
        s = tuple(s)
        if len(s) > self.depth:
            raise ValueError("path longer than the tree")
        if self.spec.kind is Kind.CIRCLE:
            if not s:
                return Arc(IDENTITY, Fraction(1))
            return self.levels[len(s) - 1].arcs[s]
        fixed: dict[int, int] = {}
        for lvl, bit in zip(self.levels, s):
            fixed.update({i: 0 for i in lvl.zeros})
            fixed[lvl.split] = bit
        return Cylinder.of(fixed)

    def paths(self, n: int):
        for k in range(2 ** n):
            yield tuple((k >> (n - 1 - i)) & 1 for i in range(n))

    def leaves(self) -> list:
        return [self.node(s) for s in self.paths(self.depth)]

    def to_json(self, max_nodes: int = 64) -> dict:
        out = []
        for lvl in self.levels:
            d: dict = {"n": lvl.n, "character": str(lvl.character)}
            if lvl.arcs is not None:
                if len(lvl.arcs) <= max_nodes:
                    d["arcs"] = {"".join(map(str, s)): [str(a.start), str(a.length)]
                                 for s, a in lvl.arcs.items()}
            else:
                d["zeros"] = list(lvl.zeros)
                d["split"] = lvl.split
            out.append(d)
        return {"group": self.spec.name, "levels": out}


@dataclass
class CBResult:
    characters: list[Character]
    tree: CBTree
    failure_level: int | None = None
    certificates: dict = field(default_factory=dict)

    def to_json(self) -> dict:
        return {"characters": [str(c) for c in self.characters], "tree": self.tree.to_json(),
                "failure_level": self.failure_level, "certificates": self.certificates}


def _gf_kernel(rows: list[list[int]], p: int) -> list[int] | None:
    """A nonzero kernel vector of ``rows`` over ``GF(p)``."""
    ncols = len(rows[0]) if rows else 0
    A = [[v % p for v in r] for r in rows]
    pivots: list[int] = []
    r = 0
    for c in range(ncols):
        piv = next((i for i in range(r, len(A)) if A[i][c]), None)
        if piv is None:
            continue
        A[r], A[piv] = A[piv], A[r]
        inv = pow(A[r][c], -1, p)
        A[r] = [(v * inv) % p for v in A[r]]
        for i in range(len(A)):
            if i != r and A[i][c]:
                f = A[i][c]
                A[i] = [(a - f * b) % p for a, b in zip(A[i], A[r])]
        pivots.append(c)
        r += 1
    free = [c for c in range(ncols) if c not in pivots]
    if not free:
        return None
    f = free[0]
    v = [0] * ncols
    v[f] = 1
    for i, c in enumerate(pivots):
        v[c] = (-A[i][f]) % p
    return v


def _cb_fixed_modulus(spec: GroupSpec, Q: Sequence[Point], depth: int) -> CBTree:
    p = 2 if spec.kind is Kind.Z4Z2 else spec.p
    levels: list[CBLevel] = []
    nxt = 0
    for n in range(1, depth + 1):
        fresh = list(range(nxt, nxt + len(Q) + 1))
        v = _gf_kernel([[q.coord(i) for i in fresh] for q in Q], p) if Q else [1] + [0] * len(Q)
        terms = tuple((i, r) for i, r in zip(fresh, v) if r)
        phi = Character(spec, terms=terms)
        split = nxt + len(Q) + 1
        levels.append(CBLevel(n, phi, tuple(fresh), split))
        nxt = split + 1
    return CBTree(spec, levels)


def _cb_distinct_primes(spec: GroupSpec, Q: Sequence[Point], depth: int, budget: int) -> CBTree:
    levels: list[CBLevel] = []
    nxt = 0
    for n in range(1, depth + 1):
        ball = ChordBall(Fraction(1, n), strict=True)
        found = None
        for i in range(nxt, nxt + budget):
            m = spec.modulus(i)
            if all(q.coord(i) == 0 for q in Q):
                found = (i, 1)
                break
            # simultaneous approximation: some multiplier puts every q_i near 0
            for r in range(1, min(m, 1 << 15)):
                if all(ball.within(arc_distance(Angle(Fraction(r * q.coord(i), m)), IDENTITY))
                       for q in Q):
                    found = (i, r)
                    break
            if found:
                break
        if found is None:
            raise ScheduleError(f"no usable coordinate for level {n} within budget {budget}")
        i, r = found
        split = i + 1
        levels.append(CBLevel(n, Character(spec, terms=((i, r),)), (i,), split))
        nxt = split + 1
    return CBTree(spec, levels)


def _cb_circle(Q: Sequence[Point], depth: int) -> CBTree:
    spec = Q[0].spec if Q else GroupSpec.circle()
    L = math.lcm(*(q.angle.denominator for q in Q)) if Q else 1
    levels: list[CBLevel] = []
    parents = {(): Arc(IDENTITY, Fraction(1))}
    prev = 0
    for n in range(1, depth + 1):
        shortest = min(a.length for a in parents.values())
        # torsion points 1/e apart with two of them well inside every parent arc
        e = L * max(prev // L + 1, math.ceil(Fraction(8) / (shortest * L)))
        r = Fraction(1, 8 * n * e)
        arcs = {}
        for s, U in parents.items():
            first = math.ceil((U.start.value + U.length / 4) * e)
            for bit in (0, 1):
                c = Fraction(first + bit, e)
                arcs[s + (bit,)] = Arc(Angle(c - r), 2 * r)
        levels.append(CBLevel(n, Character(spec, n=e), arcs=arcs))
        parents = arcs
        prev = e
    return CBTree(spec, levels)


def _sup_identity_distance(image) -> tuple[Fraction, bool]:
    """Supremum of the arc distance to 1 over an image, and whether it is attained."""
    if isinstance(image, Coset):
        return max(arc_distance(a, IDENTITY) for a in image.angles()), True
    if image.length >= Fraction(1, 2):
        # long open arcs reach (or approach) -1
        return Fraction(1, 2), image.length >= 1
    a, b = image.start.value, image.start.value + image.length
    if a < Fraction(1, 2) < b:
        return Fraction(1, 2), True
    return max(arc_distance(image.start, IDENTITY),
               arc_distance(Angle(b), IDENTITY)), False


NODE_CHECK_LIMIT = 4096


def _sample_paths(n: int):
    """All-zero, all-one and alternating paths of length ``n``."""
    return {tuple([0] * n), tuple([1] * n), tuple(k % 2 for k in range(n)),
            tuple((k + 1) % 2 for k in range(n))}


def _coordinate_tree_uniform(tree: CBTree) -> bool:
    """Split coordinates are fresh: never in a character support, never fixed
    earlier.  Then a node's image under ``phi_n`` and its relation to its
    parent and sibling do not depend on the path."""
    seen: set[int] = set()
    for lvl in tree.levels:
        support = {i for i, _ in lvl.character.terms}
        if not support <= set(lvl.zeros) or lvl.split in seen or lvl.split in lvl.zeros:
            return False
        if seen & set(lvl.zeros):
            return False
        seen |= set(lvl.zeros) | {lvl.split}
    return True


def verify_cb_tree(tree: CBTree, Q: Sequence[Point]) -> dict:
    """Re-check both tree conditions and the values on ``Q`` exactly.

    Levels with more than ``NODE_CHECK_LIMIT`` nodes are checked on sample
    paths, which is only accepted for coordinate trees whose structure makes
    every node of a level equivalent.
    """
    chars = [lvl.character for lvl in tree.levels]
    report = {"distinct": len(set(chars)) == len(chars), "values_on_Q": True,
              "values_on_nodes": True, "nested_disjoint": True, "nodes": 0}
    sampled = False
    for lvl in tree.levels:
        n, phi = lvl.n, lvl.character
        eps = Fraction(1, n)
        for q in Q:
            if compare_chord(arc_distance(evaluate(phi, q), IDENTITY), eps) >= 0:
                report["values_on_Q"] = False
        if 2 ** n <= NODE_CHECK_LIMIT:
            paths = tree.paths(n)
        else:
            sampled = True
            paths = _sample_paths(n)
        for s in paths:
            U = tree.node(s)
            report["nodes"] += 1
            sup, attained = _sup_identity_distance(character_image(phi, U))
            c = compare_chord(sup, eps)
            if c > 0 or (c == 0 and attained):
                report["values_on_nodes"] = False
            parent = tree.node(s[:-1])
            sib = tree.node(s[:-1] + (1 - s[-1],))
            if not (_closure_inside(U, parent) and _closures_disjoint(U, sib)):
                report["nested_disjoint"] = False
    if sampled:
        report["uniform_structure"] = tree.spec.kind is not Kind.CIRCLE and _coordinate_tree_uniform(tree)
    leaves = 2 ** tree.depth
    if leaves <= 1024:
        ls = tree.leaves()
        report["leaves_pairwise_disjoint"] = all(
            _closures_disjoint(ls[i], ls[k]) for i in range(len(ls)) for k in range(i + 1, len(ls)))
    report["leaves"] = leaves
    report["ok"] = all(v for k, v in report.items() if isinstance(v, bool))
    return report


def _closure_inside(U, V) -> bool:
    if isinstance(U, Cylinder):
        fv = dict(V.fixed)
        return all(dict(U.fixed).get(i) == v for i, v in fv.items())
    if V.length >= 1:
        return True
    a = (U.start - V.start).value
    return 0 < a and a + U.length < V.length


def _closures_disjoint(U, V) -> bool:
    if isinstance(U, Cylinder):
        fu, fv = dict(U.fixed), dict(V.fixed)
        return any(i in fv and fv[i] != v for i, v in fu.items())
    a = (V.start - U.start).value
    return U.length < a and a + V.length < 1


def cb_builder(Q: Sequence[Point], depth: int, spec: GroupSpec | None = None,
               budget: int = 4096) -> CBResult:
    """Distinct ``phi_1..phi_N`` and a binary tree of open sets with
    ``|1 - phi_n(x)| < 1/n`` on ``Q`` and on every node of depth ``n``.

    Coordinate groups get exact values 1: ``phi_n`` lives on fresh coordinates
    where it kills every point of ``Q``, and the nodes of depth ``n`` fix its
    support to 0 while splitting on one more fresh coordinate.  On the circle
    the exponents are multiples of the common denominator of ``Q`` and the
    nodes are short arcs around torsion points of ``phi_n``.
    """
    if depth < 1:
        raise ValueError("depth must be at least 1")
    Q = list(Q)
    spec = spec or (Q[0].spec if Q else None)
    if spec is None:
        raise ValueError("give a group when Q is empty")
    for q in Q:
        if q.spec != spec:
            raise SpecMismatch(f"{q.spec} vs {spec}")
    kind = spec.kind
    if kind is Kind.CIRCLE:
        tree = _cb_circle(Q, depth)
    elif kind in (Kind.FIXED_PRIME, Kind.Z4Z2):
        tree = _cb_fixed_modulus(spec, Q, depth)
    elif kind is Kind.DISTINCT_PRIMES:
        tree = _cb_distinct_primes(spec, Q, depth, budget)
    else:
        raise SpecMismatch("p-adic C_B trees are not implemented; use a quotient with "
                           "coordinates")
    cert = verify_cb_tree(tree, Q)
    return CBResult([lvl.character for lvl in tree.levels], tree, None, cert)


# --- membership verdicts -------------------------------------------------------------

def _values(x: Point, B: Sequence[Character], horizon: int) -> list[Angle]:
    return [evaluate(c, x) for c in B[:horizon]]


def _covering_arc(vals: Sequence[Fraction]) -> tuple[Angle, Fraction]:
    """Centre and half-length of the shortest closed arc holding every value."""
    pts = sorted(set(vals))
    if len(pts) == 1:
        return Angle(pts[0]), Fraction(0)
    gaps = [(b - a, i + 1) for i, (a, b) in enumerate(zip(pts, pts[1:]))]
    gaps.append((pts[0] + 1 - pts[-1], 0))
    g, k = max(gaps)
    start = pts[k]
    half = (1 - g) / 2
    return Angle(start + half), half


def _count_within(sorted_vals: list[Fraction], center: Fraction, ball: ChordBall) -> list[int]:
    """Positions in ``sorted_vals`` within the ball around ``center``."""
    out = []
    lo, hi = center - ball.hi, center + ball.hi
    for shift in (-1, 0, 1):
        i = bisect.bisect_left(sorted_vals, lo + shift)
        j = bisect.bisect_right(sorted_vals, hi + shift)
        for pos in range(i, j):
            v = sorted_vals[pos]
            if pos not in out and ball.within(arc_distance(Angle(v), Angle(center))):
                out.append(pos)
    return out


def _oscillation(vals: list[Angle], tol: Fraction, horizon: int) -> Verdict | None:
    ball = ChordBall(tol)
    order = sorted(range(len(vals)), key=lambda m: vals[m].value)
    sv = [vals[m].value for m in order]
    sizes = {}
    for v in sorted(set(sv)):
        sizes[v] = len(_count_within(sv, v, ball))
    ranked = sorted(sizes, key=lambda v: (-sizes[v], v))
    if not ranked or sizes[ranked[0]] < 3:
        return None
    c1 = ranked[0]
    c2 = next((v for v in ranked[1:] if sizes[v] >= 3
               and compare_chord(arc_distance(Angle(v), Angle(c1)), 2 * tol) > 0), None)
    if c2 is None:
        return None
    clusters = []
    for c in (c1, c2):
        members = sorted(order[p] for p in _count_within(sv, c, ball))
        radius = max(arc_distance(vals[m], Angle(c)) for m in members)
        clusters.append((Angle(c), members, radius))
    other = sorted(vals[m].value for m in clusters[1][1])
    gap_arc = min(_nearest(other, vals[m].value) for m in clusters[0][1])
    gap = chord_bounds(gap_arc)[0]
    return Verdict(VerdictKind.OSCILLATION, horizon, tol,
                   clusters=tuple(Cluster(c, tuple(ms), chord_bounds(r)[1]) for c, ms, r in clusters),
                   gap=gap)


def _nearest(sorted_vals: list[Fraction], v: Fraction) -> Fraction:
    i = bisect.bisect_left(sorted_vals, v)
    cands = {sorted_vals[i % len(sorted_vals)], sorted_vals[i - 1]}
    return min(arc_distance(Angle(c), Angle(v)) for c in cands)


def membership(x: Point, B: Sequence[Character], mode: str = "cb", horizon: int = 64, tol=Fraction(1, 10),
               tail_start: int | None = None) -> Verdict:
    """Finite-stage test of ``x in C_B`` (``mode='cb'``) or ``x in wC_B`` (``'wcb'``).

    Convergence: every value from ``tail_start`` (default ``horizon // 2``) to
    the horizon lies within chord ``tol`` of the centre, which is 1 in ``cb``
    mode and the midpoint of the shortest arc holding the tail in ``wcb`` mode.
    ``slack`` is a certified upper bound on the chord from the centre to the
    tail values.  Oscillation: two value clusters over the whole prefix, each
    with at least three members, whose centres are more than ``2*tol`` apart.
    """
    tol = Fraction(tol)
    mode = mode.lower()
    if mode not in ("cb", "wcb"):
        raise ValueError(f"mode must be cb or wcb, got {mode!r}")
    if len(set(B[:horizon])) != len(B[:horizon]):
        raise ValueError("B must list distinct characters")
    H = min(horizon, len(B))
    if H < 8:
        return inconclusive(H, tol, "horizon below 8")
    vals = _values(x, B, H)
    t0 = H // 2 if tail_start is None else tail_start
    tail = vals[t0:]
    if mode == "cb":
        center, radius = IDENTITY, max(arc_distance(v, IDENTITY) for v in tail)
    else:
        center, radius = _covering_arc([v.value for v in tail])
    if compare_chord(radius, tol) <= 0:
        slack = chord_bounds(radius)[1] if radius else Fraction(0)
        cl = Cluster(center, tuple(range(t0, H)), slack)
        return Verdict(VerdictKind.CONVERGED, H, tol, limit=center, slack=slack,
                       clusters=(cl,), certificate={"tail_start": t0, "mode": mode})
    osc = _oscillation(vals, tol, H)
    if osc is not None:
        osc.certificate.update({"mode": mode})
        return osc
    return inconclusive(H, tol, "tail not within tol of a single centre and no two clusters",
                        mode=mode, tail_start=t0)


def df_membership(x: Point, phis: Sequence[Character], horizon: int, tol=Fraction(1, 4)) -> Verdict:
    """Finite-stage test of ``x in D_F``: along ``phis``, for each ``r`` of the
    ladder ``2 .. floor(1/tol)``, the share of indices ``m < n`` with
    ``|phi_m(x) - 1| <= pi/r`` is at least ``1 - 1/r`` at every ``n`` in
    ``(horizon/2, horizon]``.  The density certificate is the share at the
    horizon for the finest window."""
    H = min(horizon, len(phis))
    if len(set(phis[:H])) != H:
        raise ValueError("the sequence must list distinct characters")
    return df_verdict(_values(x, phis, H), tol)


def df_verdict(values: Sequence[Angle], tol=Fraction(1, 4)) -> Verdict:
    """The ``df_membership`` test on precomputed values ``phi_m(x)``, ``m < horizon``."""
    tol = Fraction(tol)
    H = len(values)
    if H < 8:
        return inconclusive(H, tol, "horizon below 8")
    arcs = [arc_distance(v, IDENTITY) for v in values]
    r_max = max(2, math.floor(1 / tol))
    worst: dict[str, str] = {}
    density = None
    for r in range(2, r_max + 1):
        ball = ChordBall(PiMultiple(Fraction(1, r)))
        inside = 0
        low = None
        need = 1 - Fraction(1, r)
        for n, d in enumerate(arcs, start=1):
            inside += ball.within(d)
            if n > H // 2:
                share = Fraction(inside, n)
                low = share if low is None else min(low, share)
                if share < need:
                    return inconclusive(H, tol, "density window failed", r=r, n=n,
                                        share=str(share), needed=str(need))
        worst[str(r)] = str(low)
        if r == r_max:
            density = Fraction(inside, H)
    cert = {"ladder": [2, r_max], "min_share": worst, "density": str(density)}
    return Verdict(VerdictKind.CONVERGED, H, tol, limit=IDENTITY, certificate=cert)
