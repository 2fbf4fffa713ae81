import math
from functools import lru_cache
from fractions import Fraction

import pytest
from hypothesis import given
from hypothesis import strategies as st

from charlimits.circle import IDENTITY, Angle, arc_distance, compare_chord
from charlimits.density import evens, odds, omega, parse_index_set
from charlimits.groups import (Character, GroupSpec, base_metric, circle_character, circle_point,
                               evaluate, haar_sample, identity_point, parse_character,
                               prefix_point)
from charlimits.partitions import build_nice_partition, thin_select
from charlimits.sequences import parse_sequence
from charlimits.verdict import VerdictKind
from charlimits.witnesses import (EvasionProblem, ScheduleError, UnreachableTarget, cb_builder,
                                  df_membership, dense_witness, diagonal_evade, evasion_slots,
                                  membership, split_witness)

Z2 = GroupSpec.parse("z2w")
Z3 = GroupSpec.parse("z3w")
PR = GroupSpec.parse("primes")
P2 = GroupSpec.parse("padic:2")
C = GroupSpec.circle()
HALF = Angle(Fraction(1, 2))


@lru_cache(maxsize=None)
def thin(spec, length, stride=3):
    mode = "lacunary" if spec is C else "cover"
    return thin_select(build_nice_partition(spec, stride * (length - 1), circle_mode=mode),
                       stride, length)


def test_split_on_z2w_is_exact():
    t = thin(Z2, 21)
    x, trace = split_witness(t, evens(), odds(), IDENTITY, HALF, 20)
    assert trace.failure is None and trace.recheck() and trace.telescoping_holds()
    assert trace.final_distances() == [0] * 21
    for n in range(21):
        assert evaluate(t[n], x) == (IDENTITY if n % 2 == 0 else HALF)


def test_split_constant_targets_keep_identity():
    x, trace = split_witness(thin(Z2, 8), omega(), omega().complement(), IDENTITY, IDENTITY, 7)
    assert all(s.method == "already there" for s in trace.steps)
    assert x.prefix(40) == [0] * 40


def test_split_on_circle_telescopes():
    t = thin(C, 13)
    x, trace = split_witness(t, evens(), odds(), IDENTITY, HALF, 12)
    assert trace.failure is None and trace.recheck()
    d = trace.final_distances()
    for n in range(2, 13):
        assert compare_chord(d[n], Fraction(1, 2 ** (n - 1))) <= 0


def test_split_rejects_bad_input():
    with pytest.raises(UnreachableTarget):
        split_witness(thin(Z3, 5), evens(), odds(), IDENTITY, HALF, 4)
    with pytest.raises(ValueError):
        split_witness(thin(Z2, 5), evens(), evens(), IDENTITY, HALF, 4)
    with pytest.raises(ValueError):
        split_witness(thin(Z2, 5), evens(), odds(), IDENTITY, HALF, 9)


SPLIT_SPECS = [Z2, Z3, PR, P2]


@pytest.mark.parametrize("spec", SPLIT_SPECS, ids=lambda s: s.name)
@given(st.sampled_from(["evens", "odds", "squares", "ap:1,3", "factorials"]),
       st.integers(0, 11), st.integers(0, 11))
def test_split_traces_are_sound(spec, A, a, b):
    m = 3 if spec is Z3 else 2 if spec is Z2 else 12
    ta, tb = Angle(Fraction(a % m, m)), Angle(Fraction(b % m, m))
    E = parse_index_set(A)
    x, trace = split_witness(thin(spec, 7), E, E.complement(), ta, tb, 6)
    assert trace.failure is None
    assert trace.recheck()
    assert trace.telescoping_holds()


def test_dense_examples():
    t = thin(Z2, 11)
    q = prefix_point(Z2, [1, 0, 1, 1, 0, 1, 1, 1, 0, 1, 1])
    x, trace = dense_witness(t, q, 3, 10)
    assert trace.extra["ball"]["certified"]
    assert trace.recheck() and trace.telescoping_holds()
    assert base_metric(x, q, 80).value <= Fraction(1, 8)
    assert all(evaluate(t[n], x) == IDENTITY for n in range(4, 11))
    tc = thin(C, 13)
    q = circle_point(Fraction(1, 7))
    x, trace = dense_witness(tc, q, 4, 12)
    assert arc_distance(x.angle, q.angle) <= Fraction(1, 16)
    assert trace.telescoping_holds()
    x, trace = dense_witness(t, identity_point(Z2), 1, 10)
    assert x.prefix(40) == [0] * 40


@pytest.mark.parametrize("spec", SPLIT_SPECS, ids=lambda s: s.name)
@given(st.integers(0, 2 ** 32), st.integers(1, 6))
def test_dense_ball_certified(spec, seed, r):
    q = haar_sample(spec, seed)
    x, trace = dense_witness(thin(spec, 7), q, r, 6)
    assert trace.extra["ball"]["certified"]
    assert trace.recheck() and trace.telescoping_holds()


def test_evasion_slots_are_sparse_and_late():
    s = evasion_slots(900)
    assert s[0] >= 31 and s[-1] == 900
    assert all(b - a >= 2 for a, b in zip(s, s[1:]))
    assert len(s) <= 30


def _adversaries(plan, L):
    return tuple(tuple(plan.block(k).first() for k in range(ell, plan.depth + 1, L))
                 for ell in range(L))


def test_evasion_without_adversaries_converges():
    plan = build_nice_partition(Z2, 3 * 60)
    t = thin_select(plan, 3, 61)
    res = diagonal_evade(EvasionProblem(t, (), HALF, 60))
    assert res.slots == [] and res.phi_prime == t
    assert all(evaluate(t[n], res.x) == IDENTITY for n in range(61))


def test_evasion_single_adversary():
    N = 400
    plan = build_nice_partition(Z2, 3 * N + 1)
    t = thin_select(plan, 3, N + 1)
    B0 = tuple(Character(Z2, terms=((i, 1),)) for i in range(0, 3 * N + 2, 2))
    res = diagonal_evade(EvasionProblem(t, (B0,), HALF, N))
    c = res.certificates
    assert Fraction(c["E_density"]) >= Fraction(95, 100)
    assert c["hits"]["0"]["E"] >= 3 and c["hits"]["0"]["F"] >= 3
    assert c["trace_ok"] and c["min_block_gap"] >= 2
    vals = [evaluate(b, res.x) for b in B0]
    assert vals.count(IDENTITY) >= 3 and vals.count(HALF) >= 3
    v = membership(res.x, list(B0), "wcb", len(B0))
    assert v.kind is VerdictKind.OSCILLATION and v.gap == 2


def test_evasion_schedule_error():
    plan = build_nice_partition(Z2, 3 * 50 + 1)
    t = thin_select(plan, 3, 51)
    short = (tuple(Character(Z2, terms=((i, 1),)) for i in range(30)),)
    with pytest.raises(ScheduleError, match="block"):
        diagonal_evade(EvasionProblem(t, short, HALF, 50))
    with pytest.raises(ValueError):
        EvasionProblem(t, (), IDENTITY, 50)


def test_cb_builder_examples():
    res = cb_builder([identity_point(Z2)], 4)
    assert res.certificates["ok"] and len(set(res.characters)) == 4
    res = cb_builder([circle_point(Fraction(1, 2))], 5)
    assert all(c.n % 2 == 0 for c in res.characters)
    assert all(evaluate(c, circle_point(Fraction(1, 2))) == IDENTITY for c in res.characters)
    Q = [prefix_point(Z2, [1, 0, 1, 1]), prefix_point(Z2, [0, 1, 1])]
    res = cb_builder(Q, 5)
    assert res.certificates["leaves"] == 32 and res.certificates["leaves_pairwise_disjoint"]
    assert res.certificates["ok"]


@pytest.mark.parametrize("spec", [Z2, Z3, PR, C], ids=lambda s: s.name)
@given(st.lists(st.integers(0, 2 ** 32), min_size=1, max_size=3), st.integers(1, 5))
def test_cb_builder_certifies(spec, seeds, depth):
    if spec is C:
        Q = [circle_point(Fraction(s % 97, 97 + s % 5)) for s in seeds]
    else:
        Q = [prefix_point(spec, haar_sample(spec, s).prefix(6)) for s in seeds]
    res = cb_builder(Q, depth)
    assert res.certificates["ok"]
    for n, c in enumerate(res.characters, start=1):
        for q in Q:
            assert compare_chord(arc_distance(evaluate(c, q), IDENTITY), Fraction(1, n)) < 0


def test_cb_builder_padic_unsupported():
    with pytest.raises(ValueError):
        cb_builder([identity_point(P2)], 3)


B3 = parse_sequence(C, "3n").prefix(60)


@pytest.mark.parametrize("x", ["0", "1/3", "2/3"])
def test_cb_membership_at_third_roots(x):
    v = membership(circle_point(Fraction(x)), B3, "cb", 60)
    assert v.kind is VerdictKind.CONVERGED and v.limit == IDENTITY and v.slack == 0


@pytest.mark.parametrize("x", ["1/4", "1/5", "1/7"])
def test_cb_membership_oscillates_elsewhere(x):
    v = membership(circle_point(Fraction(x)), B3, "cb", 60)
    assert v.kind is VerdictKind.OSCILLATION
    a, b = v.clusters
    assert len(a.indices) >= 3 and len(b.indices) >= 3
    assert compare_chord(arc_distance(a.center, b.center), 2 * v.tol) > 0
    assert v.gap > 0


def test_wcb_membership():
    # 3n at 1/9 takes the values 1/3, 2/3, 0 forever
    v = membership(circle_point(Fraction(1, 9)), B3, "wcb", 60)
    assert v.kind is VerdictKind.OSCILLATION
    # odd exponents at 1/2 are constantly -1: a limit outside the identity
    odd = parse_sequence(C, "[" + ",".join(f"n={2 * k + 1}" for k in range(40)) + "]").prefix(40)
    v = membership(circle_point(HALF.value), odd, "wcb", 40)
    assert v.kind is VerdictKind.CONVERGED and v.limit == HALF
    assert membership(circle_point(HALF.value), odd, "cb", 40).kind is not VerdictKind.CONVERGED
    # 2n at 1/4 alternates between 0 and 1/2
    B2 = parse_sequence(C, "2n").prefix(40)
    v = membership(circle_point(Fraction(1, 4)), B2, "wcb", 40)
    assert v.kind is VerdictKind.OSCILLATION and v.gap == 2


def test_membership_edge_cases():
    for spec in (Z2, C, P2):
        B = parse_sequence(spec, "n").prefix(30)
        assert membership(identity_point(spec), B, "cb", 30).converged
    assert membership(circle_point(Fraction(1, 4)), B3, "cb", 7).kind is VerdictKind.INCONCLUSIVE
    with pytest.raises(ValueError):
        membership(circle_point(0), [circle_character(1)] * 10, "cb", 10)
    with pytest.raises(ValueError):
        membership(circle_point(0), B3, "xx", 10)


@given(st.integers(1, 20), st.integers(0, 19))
def test_df_membership_factorials_absorb_rationals(q, a):
    phis = parse_sequence(C, "n!").prefix(200)
    v = df_membership(circle_point(Fraction(a % q, q)), phis, 200)
    assert v.kind is VerdictKind.CONVERGED


def test_df_membership_generic_point_not_absorbed():
    phis = parse_sequence(C, "n!").prefix(200)
    for seed in range(5):
        x = haar_sample(C, seed)
        assert df_membership(x, phis, 200).kind is not VerdictKind.CONVERGED


def test_df_membership_density_certificate():
    phis = parse_sequence(Z2, "chi").prefix(100)
    x = prefix_point(Z2, [1 if k % 25 == 7 else 0 for k in range(100)])
    v = df_membership(x, phis, 100, Fraction(1, 10))
    assert v.converged and Fraction(v.certificate["density"]) == Fraction(96, 100)
    x = prefix_point(Z2, [k % 2 for k in range(100)])
    assert not df_membership(x, phis, 100).converged


def _convergent_point(spec, data, B_len):
    """A point whose coordinates vanish beyond a short prefix."""
    k = data.draw(st.integers(0, B_len // 3))
    m = spec.modulus
    return prefix_point(spec, [data.draw(st.integers(0, m(i) - 1)) for i in range(k)])


@pytest.mark.parametrize("spec", [Z2, Z3, PR], ids=lambda s: s.name)
@given(data=st.data())
def test_cb_subgroup_law_coordinates(spec, data):
    stride = data.draw(st.integers(1, 3))
    B = [Character(spec, terms=((stride * i, 1),)) for i in range(40)]
    x, y = _convergent_point(spec, data, 40), _convergent_point(spec, data, 40)
    vx, vy = membership(x, B, "cb", 40), membership(y, B, "cb", 40)
    assert vx.converged and vy.converged
    vxy = membership(x.combine(y), B, "cb", 40, tol=vx.slack + vy.slack)
    assert vxy.converged
    assert membership(x.inverse(), B, "cb", 40, tol=vx.slack).converged


@given(st.integers(0, 1000), st.integers(0, 1000))
def test_cb_subgroup_law_with_slack(a, b):
    # integers in Z_2 converge along 1/2^k with shrinking nonzero deviations;
    # a <= 1000 keeps a/2^k inside tol on the second half of the horizon
    B = [parse_character(P2, f"1/2^{k}") for k in range(1, 41)]
    x, y = prefix_point(P2, [(a >> i) & 1 for i in range(21)]), \
        prefix_point(P2, [(b >> i) & 1 for i in range(21)])
    tol = Fraction(1, 100)
    vx, vy = membership(x, B, "cb", 40, tol), membership(y, B, "cb", 40, tol)
    assert vx.converged and vy.converged
    assert membership(x.combine(y), B, "cb", 40, tol=vx.slack + vy.slack).converged
    assert membership(x.inverse(), B, "cb", 40, tol=vx.slack).converged
