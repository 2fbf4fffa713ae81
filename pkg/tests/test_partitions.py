import itertools
from fractions import Fraction

import pytest
from hypothesis import given
from hypothesis import strategies as st

from charlimits.circle import IDENTITY, Angle, Arc, compare_chord
from charlimits.groups import (GroupSpec, Kind, base_metric, circle_point, enumerate_characters,
                               evaluate, haar_sample, identity_point, prefix_point, value_range)
from charlimits.partitions import (NicenessVerdict, NotNice, ThinSequence, build_nice_partition,
                                   check_niceness, parse_open_set, rho_j, thin_select,
                                   verify_partition_condition)

Z2 = GroupSpec.parse("z2w")
Z3 = GroupSpec.parse("z3w")
PR = GroupSpec.parse("primes")
P2 = GroupSpec.parse("padic:2")
P3 = GroupSpec.parse("padic:3")
Z4 = GroupSpec.parse("z4z2")
C = GroupSpec.circle()
COORD = [Z2, Z3, PR, P2, P3]


def test_first_block_is_identity():
    for spec in COORD + [C]:
        plan = build_nice_partition(spec, 0)
        assert plan.depth == 0
        assert list(plan.block(0)) == [next(enumerate_characters(spec))]


def test_z4z2_has_no_nice_partition():
    with pytest.raises(NotNice):
        build_nice_partition(Z4, 4)


def test_circle_cover_thresholds():
    plan = build_nice_partition(C, 4)
    assert [b.hi for b in plan.blocks] == [0, 1, 13, 2289, 131741069]
    assert plan.covers_dual


def test_circle_lacunary_blocks_are_singletons():
    plan = build_nice_partition(C, 6, circle_mode="lacunary")
    ns = [plan.block(j).first().n for j in range(7)]
    assert ns[0] == 0 and all(b.size == 1 for b in plan.blocks)
    assert all(n > 0 and (n & (n - 1)) == 0 and n.bit_length() % 2 == 1 for n in ns[1:])
    assert ns == sorted(ns) and not plan.covers_dual


@pytest.mark.parametrize("spec", COORD, ids=lambda s: s.name)
def test_blocks_partition_enumeration_prefix(spec):
    plan = build_nice_partition(spec, 6)
    J = max(j for j in range(7) if plan.count_through(j) <= 5000)
    assert J >= 2
    total = plan.count_through(J)
    seen = list(itertools.islice(enumerate_characters(spec), total))
    # every enumerated character sits in exactly one of the first blocks
    idx = [plan.block_index(c) for c in seen]
    assert all(i is not None and i <= J for i in idx)
    listed = [c for j in range(J + 1) for c in plan.block(j)]
    assert len(listed) == len(set(listed)) == total
    assert set(listed) == set(seen)


def test_rho_examples():
    plan = build_nice_partition(Z2, 4)
    x = prefix_point(Z2, [0, 0])
    y = prefix_point(Z2, [0, 1])
    assert rho_j(x, x, plan, 3) == (0, 0)
    # Phi_0 = {1} does not see coordinate 1
    assert rho_j(x, y, plan, 0) == (Fraction(1, 2), Fraction(1, 2))
    # chi_0 in Phi_1 takes the values 1 and -1: base 1 plus the diameter 2
    u, v = prefix_point(Z2, [0]), prefix_point(Z2, [1])
    assert rho_j(u, v, plan, 1) == (3, 3)


@pytest.mark.parametrize("spec", [Z2, Z3, P2], ids=lambda s: s.name)
@given(st.integers(0, 2 ** 32), st.integers(0, 2 ** 32))
def test_rho_monotone_and_above_base(spec, s1, s2):
    plan = build_nice_partition(spec, 5)
    x, y = haar_sample(spec, s1), haar_sample(spec, s2)
    prev = base_metric(x, y, 80).value
    for j in range(6):
        r = rho_j(x, y, plan, j)
        assert r.lo <= r.hi
        assert r.hi >= prev
        prev = r.lo


@given(st.integers(1, 10 ** 6), st.integers(1, 10 ** 6))
def test_rho_circle_monotone(a, b):
    plan = build_nice_partition(C, 3)
    x, y = circle_point(Fraction(a, 10 ** 6 + 3)), circle_point(Fraction(b, 10 ** 6 + 3))
    rs = [rho_j(x, y, plan, j) for j in range(4)]
    assert all(r1.lo <= r2.hi for r1, r2 in zip(rs, rs[1:]))
    assert rs[0].hi >= base_metric(x, y).value


def _draw_instance(spec, data):
    plan = build_nice_partition(spec, 12)
    j = data.draw(st.integers(0, 8))
    block = plan.block(data.draw(st.integers(j + 2, 12)))
    phi = block.pick(data.draw(st.integers(0, 50)) % min(block.size, 51))
    x = haar_sample(spec, data.draw(st.integers(0, 2 ** 32)))
    return plan, j, phi, x


def _step(spec, phi):
    """The value grid a one-coordinate (or high-digit) rewrite moves along."""
    return spec.p if spec.kind is Kind.PADIC else spec.modulus(phi.max_support)


@pytest.mark.parametrize("spec", [Z2, Z3, PR, P2, P3], ids=lambda s: s.name)
@given(data=st.data())
def test_structural_witnesses_are_exact(spec, data):
    plan, j, phi, x = _draw_instance(spec, data)
    if phi.is_identity():
        return
    m = _step(spec, phi)
    z = evaluate(phi, x) + Angle(Fraction(data.draw(st.integers(0, m - 1)), m))
    res = verify_partition_condition(plan, j, phi, x, z)
    assert res.ok
    assert evaluate(phi, res.y) == z and res.chord_upper == 0
    assert rho_j(x, res.y, plan, j).hi < Fraction(1, 2 ** j)


@pytest.mark.parametrize("spec", [PR, P2, P3], ids=lambda s: s.name)
@given(data=st.data())
def test_structural_witnesses_any_target(spec, data):
    plan, j, phi, x = _draw_instance(spec, data)
    if phi.is_identity():
        return
    z = Angle(Fraction(data.draw(st.integers(0, 10 ** 6 - 1)), 10 ** 6))
    res = verify_partition_condition(plan, j, phi, x, z)
    assert res.ok
    eps = Fraction(1, 2 ** j)
    d = evaluate(phi, res.y) - z
    assert compare_chord(min(d.value, 1 - d.value), eps) < 0
    assert rho_j(x, res.y, plan, j).hi < eps


@given(data=st.data())
def test_circle_witnesses_meet_both_bounds(data):
    plan = build_nice_partition(C, 20, circle_mode="lacunary")
    j = data.draw(st.integers(0, 12))
    phi = plan.block(data.draw(st.integers(j + 2, 20))).first()
    x = circle_point(Fraction(data.draw(st.integers(0, 10 ** 9)), 10 ** 9 + 7))
    z = Angle(Fraction(data.draw(st.integers(0, 999)), 1000))
    res = verify_partition_condition(plan, j, phi, x, z)
    assert res.ok
    eps = Fraction(1, 2 ** j)
    assert rho_j(x, res.y, plan, j).hi < eps
    assert compare_chord(abs((evaluate(phi, res.y) - z).value), eps) < 0 or \
        compare_chord(1 - (evaluate(phi, res.y) - z).value, eps) < 0


def test_nothing_to_move():
    plan = build_nice_partition(Z2, 6)
    phi = plan.block(5).first()
    x = haar_sample(Z2, 3)
    res = verify_partition_condition(plan, 2, phi, x, evaluate(phi, x))
    assert res.ok and res.y is x and res.rho_upper == 0


def test_condition_preconditions():
    plan = build_nice_partition(Z2, 6)
    with pytest.raises(ValueError):
        verify_partition_condition(plan, 3, plan.block(4).first(), identity_point(Z2), IDENTITY)
    with pytest.raises(ValueError):
        verify_partition_condition(plan, 1, plan.block(4).first(), identity_point(Z2),
                                   Angle(Fraction(1, 3)))


def test_thin_select():
    plan = build_nice_partition(Z2, 12)
    t = thin_select(plan, 3, 5)
    assert t.indices == (0, 3, 6, 9, 12)
    t2 = thin_select(plan, 2)
    assert all(b - a == 2 for a, b in zip(t2.indices, t2.indices[1:]))
    assert thin_select(plan, 3, 5) == t
    with pytest.raises(ValueError):
        thin_select(plan, 1)
    with pytest.raises(ValueError):
        ThinSequence(plan, (plan.block(2).first(), plan.block(3).first()), (2, 3))


def test_niceness_examples():
    rep = check_niceness(Z4, parse_open_set(Z4, "cyl:z4=1"), 1, 50)
    assert rep.verdict is NicenessVerdict.REFUTED and len(rep.failing) >= 50
    rep = check_niceness(C, Arc(IDENTITY, Fraction(1, 10)), Fraction(1, 2), 50)
    assert rep.verdict is NicenessVerdict.SUPPORTED
    rep = check_niceness(Z2, parse_open_set(Z2, "cyl:0=1"), Fraction(1, 2), 50)
    assert rep.verdict is NicenessVerdict.SUPPORTED
    assert rep.initial_segment == 2     # only 1 and chi_0 are constant on U


@pytest.mark.parametrize("eps", [Fraction(1, 10), Fraction(1, 2), Fraction(1), Fraction(13, 10)])
@pytest.mark.parametrize("horizon", [10, 30])
def test_z4z2_refuted_for_small_eps(eps, horizon):
    rep = check_niceness(Z4, parse_open_set(Z4, "cyl:z4=1"), eps, horizon)
    assert rep.verdict is NicenessVerdict.REFUTED
