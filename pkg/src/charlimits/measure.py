"""Monte Carlo checks of the measure statements, plus the exact subgroup
measure check.

Every sample gets its own seed derived from ``(seed, index)``, so a run is
fully determined by its config and any single sample can be replayed alone.
"""

from __future__ import annotations

import csv
import io
import json
from dataclasses import asdict, dataclass, field
from fractions import Fraction
from typing import Sequence

import numpy as np

from .circle import Angle
from .density import CesaroState
from .groups import (DEFAULT_RESOLUTION, Character, GroupSpec, Kind, Point, circle_denominator,
                     cylinder_measure, evaluate, haar_sample)
from .sequences import CharacterSequence, parse_sequence
from .witnesses import df_membership, df_verdict


class SamplerDegeneracy(RuntimeError):
    """The sampler's denominator divides an exponent, so sampled values collapse to 1."""


class NotASubgroup(ValueError):
    pass


@dataclass(frozen=True)
class ExperimentConfig:
    spec: GroupSpec
    sequence: str
    samples: int = 1000
    horizon: int = 1000
    seed: int = 0
    resolution: int = DEFAULT_RESOLUTION
    tau: Fraction = Fraction(1, 10)
    beta: Fraction = Fraction(1, 20)
    policy: str = "prime"
    tol: Fraction = Fraction(1, 4)

    def __post_init__(self):
        if self.samples < 100:
            raise ValueError("samples must be at least 100")
        if self.horizon < 100:
            raise ValueError("horizon must be at least 100")
        for name in ("tau", "beta", "tol"):
            v = Fraction(getattr(self, name))
            if not 0 < v < 1:
                raise ValueError(f"{name} must lie in (0, 1)")
            object.__setattr__(self, name, v)

    def to_json(self) -> dict:
        d = asdict(self)
        d["spec"] = self.spec.name
        for k in ("tau", "beta", "tol"):
            d[k] = str(d[k])
        return d


def sample_seed(seed: int, i: int) -> int:
    return int(np.random.SeedSequence([seed, i]).generate_state(1, np.uint64)[0])


@dataclass
class ExperimentReport:
    experiment: str
    config: dict
    rows: list[dict]
    fraction: Fraction
    bound: Fraction
    extra: dict = field(default_factory=dict)

    @property
    def passed(self) -> bool:
        return self.fraction <= self.bound

    def to_json(self) -> dict:
        return {"experiment": self.experiment, "config": self.config,
                "fraction": str(self.fraction), "fraction_float": float(self.fraction),
                "bound": str(self.bound), "passed": self.passed, **self.extra,
                "samples": self.rows}

    def dumps(self) -> str:
        return json.dumps(self.to_json(), indent=2, sort_keys=True)

    def to_csv(self) -> str:
        buf = io.StringIO()
        if self.rows:
            w = csv.DictWriter(buf, fieldnames=list(self.rows[0]), lineterminator="\n")
            w.writeheader()
            w.writerows(self.rows)
        return buf.getvalue()


def _sequence(cfg: ExperimentConfig) -> CharacterSequence:
    return parse_sequence(cfg.spec, cfg.sequence)


def degeneracy_guard(spec: GroupSpec, seq: CharacterSequence, horizon: int, resolution: int,
                     policy: str) -> None:
    """Refuse circle samplers whose denominator divides one of the exponents."""
    if spec.kind is not Kind.CIRCLE or seq.exponent is None:
        return
    q = circle_denominator(resolution, policy)
    for n in range(horizon):
        if seq.exponent(n) % q == 0:
            raise SamplerDegeneracy(
                f"sampler denominator {q} ({policy}, resolution {resolution}) divides exponent "
                f"number {n} of {seq.descriptor}: every sampled value would be 1 from there on; "
                f"use the prime policy")


def _ratios(seq: CharacterSequence, phis: Sequence[Character], x: Point,
            q: int | None) -> list[tuple[int, int]]:
    """Values ``phi_n(x)`` as ``(num, den)`` angle pairs over the prefix ``phis``."""
    if q is not None and seq.exponent is not None:
        a = x.angle.numerator * (q // x.angle.denominator)
        return [(seq.exponent(n) % q * a % q, q) for n in range(len(phis))]
    spec = x.spec
    out = []
    for c in phis:
        if spec.kind in (Kind.DISTINCT_PRIMES, Kind.FIXED_PRIME) and len(c.terms) == 1:
            (i, r), = c.terms
            out.append((r * x.coord(i), spec.modulus(i)))
        else:
            v = evaluate(c, x)
            out.append((v.numerator, v.denominator))
    return out


def _angles(seq: CharacterSequence, phis: Sequence[Character], x: Point,
            q: int | None) -> list[Angle]:
    return [Angle(Fraction(a, b)) for a, b in _ratios(seq, phis, x, q)]


def weyl_experiment(cfg: ExperimentConfig, horizons: Sequence[int] = ()) -> ExperimentReport:
    """Share of Haar samples whose Cesaro average along the sequence has modulus above ``tau``.

    A sample counts as exceeding only when the lower bound of the enclosed
    modulus is above ``tau``.  Extra ``horizons`` (each at most ``cfg.horizon``)
    report the exceedance share of the same samples at earlier cut-offs.
    """
    seq = _sequence(cfg)
    degeneracy_guard(cfg.spec, seq, cfg.horizon, cfg.resolution, cfg.policy)
    q = circle_denominator(cfg.resolution, cfg.policy) if cfg.spec.kind is Kind.CIRCLE else None
    marks = sorted(set(h for h in horizons if 0 < h <= cfg.horizon) | {cfg.horizon})
    tau2 = cfg.tau * cfg.tau
    phis = seq.prefix(cfg.horizon)
    rows, exceed = [], {h: 0 for h in marks}
    for i in range(cfg.samples):
        s = sample_seed(cfg.seed, i)
        x = haar_sample(cfg.spec, s, cfg.resolution, cfg.policy)
        state = CesaroState()
        row: dict = {"index": i, "seed": s}
        for n, (num, den) in enumerate(_ratios(seq, phis, x, q), start=1):
            state.push_ratio(num, den)
            if n in exceed:
                lo, hi = state.average().modulus_squared_bounds()
                exceed[n] += lo > tau2
                if n == cfg.horizon:
                    row.update(modulus_sq_lo=str(lo), modulus_sq_hi=str(hi), exceeds=lo > tau2)
        rows.append(row)
    frac = Fraction(exceed[cfg.horizon], cfg.samples)
    extra = {"by_horizon": {str(h): str(Fraction(exceed[h], cfg.samples)) for h in marks}}
    return ExperimentReport("weyl", cfg.to_json(), rows, frac, cfg.beta, extra)


def df_null_experiment(cfg: ExperimentConfig, planted: Sequence[Point] = ()) -> ExperimentReport:
    """Share of Haar samples that ``df_membership`` calls convergent at the horizon.

    ``planted`` points are evaluated alongside but reported separately, so the
    share stays a Haar estimate.
    """
    seq = _sequence(cfg)
    degeneracy_guard(cfg.spec, seq, cfg.horizon, cfg.resolution, cfg.policy)
    q = circle_denominator(cfg.resolution, cfg.policy) if cfg.spec.kind is Kind.CIRCLE else None
    phis = seq.prefix(cfg.horizon)
    rows, hits = [], 0
    for i in range(cfg.samples):
        s = sample_seed(cfg.seed, i)
        x = haar_sample(cfg.spec, s, cfg.resolution, cfg.policy)
        v = df_membership(x, phis, cfg.horizon, cfg.tol) if q is None else \
            df_verdict(_angles(seq, phis, x, q), cfg.tol)
        hits += v.converged
        rows.append({"index": i, "seed": s, "verdict": v.kind.value})
    planted_rows = []
    for x in planted:
        v = df_membership(x, phis, cfg.horizon, cfg.tol)
        planted_rows.append({"point": x.to_json(), "verdict": v.kind.value,
                             "certificate": v.certificate})
    extra = {"planted": planted_rows,
             "planted_converged": sum(r["verdict"] == "converged" for r in planted_rows)}
    return ExperimentReport("dfnull", cfg.to_json(), rows, Fraction(hits, cfg.samples), cfg.beta, extra)


def lem_measure_check(spec: GroupSpec, S: Sequence[Character], u: Point) -> "LemMeasureResult":
    """Exact Haar measure of ``{x : c(x) = c(u) for c in S}`` against ``1/|S|``."""
    if spec.kind is Kind.CIRCLE:
        raise ValueError("needs a group with coordinates")
    members = set(S)
    if len(members) != len(S):
        raise ValueError("S lists a character twice")
    for a in S:
        if a.spec != spec:
            raise ValueError(f"{a} is not a character of {spec}")
        if a.inverse() not in members:
            raise NotASubgroup(f"S is not closed under inverses: ({a}, {a}) -> {a.inverse()}")
        for b in S:
            if a * b not in members:
                raise NotASubgroup(f"S is not closed under products: ({a}, {b}) -> {a * b}")
    res = cylinder_measure(spec, [(c, evaluate(c, u)) for c in S])
    expected = Fraction(1, len(S))
    return LemMeasureResult(res.value, expected, res.value == expected, len(S))


@dataclass(frozen=True)
class LemMeasureResult:
    value: Fraction
    expected: Fraction
    equal: bool
    size: int

    def to_json(self) -> dict:
        return {"measure": str(self.value), "expected": str(self.expected),
                "equal": self.equal, "subgroup_size": self.size}
