"""Acceptance gate: one test per criterion, each with its own wall-clock budget."""

import math
import time
from contextlib import contextmanager
from fractions import Fraction

import numpy as np
import pytest

from charlimits.circle import IDENTITY, Angle, arc_distance, chord_bounds, compare_chord
from charlimits.density import evens, odds
from charlimits.groups import (Arc, Character, GroupSpec, base_metric, circle_point, evaluate,
                               generate_subgroup, haar_sample, identity_character,
                               parse_character, prefix_point)
from charlimits.measure import (ExperimentConfig, SamplerDegeneracy, df_null_experiment,
                                lem_measure_check, weyl_experiment)
from charlimits.partitions import (NicenessVerdict, build_nice_partition, check_niceness,
                                   parse_open_set, thin_select)
from charlimits.sequences import parse_sequence
from charlimits.verdict import VerdictKind
from charlimits.witnesses import (EvasionProblem, cb_builder, df_membership, dense_witness,
                                  diagonal_evade, membership, split_witness)

C = GroupSpec.circle()
Z2 = GroupSpec.parse("z2w")
Z3 = GroupSpec.parse("z3w")
HALF = Angle(Fraction(1, 2))


@contextmanager
def budget(seconds):
    t = time.perf_counter()
    yield
    took = time.perf_counter() - t
    print(f"runtime {took:.2f}s (limit {seconds}s)")
    assert took < seconds, f"took {took:.2f}s, limit {seconds}s"


def thin(spec, length):
    mode = "lacunary" if spec is C else "cover"
    return thin_select(build_nice_partition(spec, 3 * (length - 1), circle_mode=mode), 3, length)


def test_criterion_1_cb_oracle():
    with budget(1):
        B = parse_sequence(C, "3n").prefix(60)
        for x in ("0", "1/3", "2/3"):
            v = membership(circle_point(Fraction(x)), B, "cb", 60)
            assert v.kind is VerdictKind.CONVERGED and v.limit == IDENTITY, x
        for x in ("1/4", "1/5", "1/7"):
            v = membership(circle_point(Fraction(x)), B, "cb", 60)
            assert v.kind is VerdictKind.OSCILLATION, x


def test_criterion_2_subgroup_level_set_measure():
    with budget(1):
        coords = [parse_character(Z2, f"[({i},1)]") for i in range(3)]
        for k, size in enumerate((1, 2, 4, 8)):
            S = generate_subgroup(coords[:k] or [identity_character(Z2)])
            assert len(S) == size
            for seed in range(3):
                r = lem_measure_check(Z2, S, haar_sample(Z2, seed))
                assert r.value == Fraction(1, size) and r.equal


def test_criterion_3_split_certificate():
    with budget(5):
        t = thin(Z2, 21)
        x, trace = split_witness(t, evens(), odds(), IDENTITY, HALF, 20)
        assert trace.failure is None and trace.recheck()
        assert trace.final_distances() == [0] * 21
        t = thin(C, 13)
        x, trace = split_witness(t, evens(), odds(), IDENTITY, HALF, 12)
        assert trace.failure is None and trace.recheck()
        d = trace.final_distances()
        for n in range(2, 13):
            assert compare_chord(d[n], Fraction(1, 2 ** (n - 1))) <= 0, n


def test_criterion_4_dense_witness_ball():
    with budget(5):
        for spec, q in ((Z2, haar_sample(Z2, 11)), (C, haar_sample(C, 11)),
                        (C, circle_point(Fraction(1, 7)))):
            x, trace = dense_witness(thin(spec, 13), q, 4, 12)
            ball = trace.extra["ball"]
            assert ball["certified"] and Fraction(ball["distance_upper"]) <= Fraction(1, 16)
            assert base_metric(x, q, 80).value <= Fraction(1, 16)


def test_criterion_5_diagonal_evasion():
    with budget(30):
        N, L = 900, 3
        plan = build_nice_partition(Z2, 3 * N + 2)
        t = thin_select(plan, 3, N + 1)
        adv = tuple(tuple(plan.block(k).first() for k in range(ell, plan.depth + 1, L))
                    for ell in range(L))
        res = diagonal_evade(EvasionProblem(t, adv, HALF, N))
        phis = [res.phi_prime[n] for n in range(N + 1)]
        v = df_membership(res.x, phis, N + 1)
        assert v.converged
        assert Fraction(v.certificate["density"]) >= 1 - Fraction(1, math.isqrt(N))
        floor = chord_bounds(arc_distance(IDENTITY, HALF))[0] - Fraction(1, 2 ** (math.isqrt(N) - 1))
        for B in adv:
            w = membership(res.x, list(B), "wcb", len(B))
            assert w.kind is VerdictKind.OSCILLATION and w.gap >= floor


def test_criterion_6_niceness_reports():
    with budget(10):
        Z4 = GroupSpec.parse("z4z2")
        rep = check_niceness(Z4, parse_open_set(Z4, "cyl:z4=1"), 1, 50)
        assert rep.verdict is NicenessVerdict.REFUTED and len(rep.failing) >= 50
        rep = check_niceness(C, Arc(IDENTITY, Fraction(1, 10)), Fraction(1, 2), 50)
        assert rep.verdict is NicenessVerdict.SUPPORTED
        for spec, U in ((Z2, "cyl:0=1"), (Z3, "cyl:0=2,1=1")):
            rep = check_niceness(spec, parse_open_set(spec, U), Fraction(1, 2), 50)
            assert rep.verdict is NicenessVerdict.SUPPORTED, spec.name


def test_criterion_7_weyl_gate():
    with budget(60):
        circ = ExperimentConfig(C, "n", samples=1000, horizon=1000, seed=0)
        rep = weyl_experiment(circ)
        print("circle exceedance", rep.fraction)
        assert rep.fraction <= Fraction(5, 100)
        z2 = ExperimentConfig(Z2, "chi", samples=1000, horizon=1000, seed=0, beta=Fraction(1, 100))
        rep2 = weyl_experiment(z2)
        print("z2w exceedance", rep2.fraction)
        assert rep2.passed and rep2.fraction <= Fraction(1, 100)
        assert weyl_experiment(z2).dumps() == rep2.dumps()


def test_criterion_8_df_null_gate():
    with budget(60):
        cfg = ExperimentConfig(C, "n!", samples=500, horizon=200, seed=0, beta=Fraction(2, 100))
        rep = df_null_experiment(cfg)
        print("converged fraction", rep.fraction)
        assert rep.passed and rep.fraction <= Fraction(2, 100)
        with pytest.raises(SamplerDegeneracy):
            df_null_experiment(ExperimentConfig(C, "n!", samples=500, horizon=200, policy="dyadic"))


def _coordinate_case(rng, spec):
    stride = int(rng.integers(1, 4))
    B = [Character(spec, terms=((stride * i, 1),)) for i in range(40)]

    def point():
        k = int(rng.integers(0, 14))
        return prefix_point(spec, [int(rng.integers(0, spec.modulus(i))) for i in range(k)],
                            z4=int(rng.integers(0, 4)) if spec.name == "z4z2" else 0)
    return B, point(), point(), Fraction(1, 10)


def _padic_case(rng, spec):
    p = spec.p
    B = [parse_character(spec, f"1/{p}^{k}") for k in range(1, 41)]
    digits = int(math.log(1000, p))

    def point():
        return prefix_point(spec, [int(rng.integers(0, p)) for _ in range(digits)])
    return B, point(), point(), Fraction(1, 100)


def test_criterion_9_subgroup_property_suite():
    with budget(30):
        rng = np.random.default_rng(20261016)
        specs = [GroupSpec.parse(s) for s in ("z2w", "z3w", "primes", "z4z2", "padic:2", "padic:3")]
        failures = []
        for trial in range(200):
            spec = specs[trial % len(specs)]
            make = _padic_case if spec.name.startswith("padic") else _coordinate_case
            B, x, y, tol = make(rng, spec)
            vx, vy = membership(x, B, "cb", 40, tol), membership(y, B, "cb", 40, tol)
            if not (vx.converged and vy.converged):
                failures.append((trial, spec.name, "premise"))
                continue
            if not membership(x.combine(y), B, "cb", 40, tol=vx.slack + vy.slack).converged:
                failures.append((trial, spec.name, "product"))
            if not membership(x.inverse(), B, "cb", 40, tol=vx.slack).converged:
                failures.append((trial, spec.name, "inverse"))
        assert failures == []


def _check_cb(Q, N):
    res = cb_builder(Q, N)
    assert res.failure_level is None and res.certificates["ok"]
    for n, c in enumerate(res.characters, start=1):
        for q in Q:
            assert compare_chord(arc_distance(evaluate(c, q), IDENTITY), Fraction(1, n)) < 0
    return res


def test_criterion_10_cb_builder_stage():
    with budget(10):
        for spec in (Z2, Z3, GroupSpec.parse("primes")):
            Q = [prefix_point(spec, haar_sample(spec, s).prefix(8)) for s in (1, 2)]
            res = _check_cb(Q, 5)
            assert res.certificates["leaves"] == 32
            assert res.certificates["leaves_pairwise_disjoint"]
        res = _check_cb([circle_point(Fraction(2, 9)), circle_point(Fraction(5, 13))], 5)
        assert res.certificates["leaves"] == 32 and res.certificates["leaves_pairwise_disjoint"]
        Q = [prefix_point(Z2, haar_sample(Z2, s).prefix(24)) for s in (1, 2)]
        _check_cb(Q, 20)
