"""Finite-horizon convergence verdicts."""

from __future__ import annotations

from dataclasses import dataclass, field
from enum import Enum
from fractions import Fraction

from .circle import Angle


class VerdictKind(str, Enum):
    CONVERGED = "converged"
    OSCILLATION = "oscillation"
    INCONCLUSIVE = "inconclusive"


@dataclass(frozen=True)
class Cluster:
    """Indices whose values lie within chord ``radius`` of ``center``."""

    center: Angle
    indices: tuple[int, ...]
    radius: Fraction

    def to_json(self) -> dict:
        return {"center": str(self.center), "indices": list(self.indices),
                "radius": str(self.radius)}


@dataclass(frozen=True)
class Verdict:
    """What a finite prefix says about convergence.

    ``CONVERGED`` carries the limit and ``slack``, an upper bound on the chord
    distance of the tail values to it.  ``OSCILLATION`` carries two clusters
    of at least three members each and ``gap``, a lower bound on the chord
    distance between any member of one and any member of the other.
    """

    kind: VerdictKind
    horizon: int
    tol: Fraction
    limit: Angle | None = None
    slack: Fraction | None = None
    clusters: tuple[Cluster, ...] = ()
    gap: Fraction | None = None
    certificate: dict = field(default_factory=dict)

    @property
    def converged(self) -> bool:
        return self.kind is VerdictKind.CONVERGED

    @property
    def oscillating(self) -> bool:
        return self.kind is VerdictKind.OSCILLATION

    def to_json(self) -> dict:
        d: dict = {"kind": self.kind.value, "horizon": self.horizon, "tol": str(self.tol)}
        if self.limit is not None:
            d["limit"] = str(self.limit)
        if self.slack is not None:
            d["slack"] = str(self.slack)
        if self.clusters:
            d["clusters"] = [c.to_json() for c in self.clusters]
        if self.gap is not None:
            d["gap"] = str(self.gap)
        if self.certificate:
            d["certificate"] = self.certificate
        return d


def inconclusive(horizon: int, tol, reason: str, **extra) -> Verdict:
    return Verdict(VerdictKind.INCONCLUSIVE, horizon, Fraction(tol),
                   certificate={"reason": reason, **extra})
