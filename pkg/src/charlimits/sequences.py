"""Named character sequences: ``n``, ``3n``, ``n!``, ``4^n``, ``chi``, ``thin``, ``[...]``."""

from __future__ import annotations

import math
import re
from dataclasses import dataclass, field
from typing import Callable

from .groups import (Character, GroupSpec, Kind, circle_character, coordinate_character,
                     padic_character, parse_character)


@dataclass(frozen=True)
class CharacterSequence:
    """``term(m)`` for ``m = 0, 1, ...``; ``length`` is ``None`` for endless sequences."""

    spec: GroupSpec
    descriptor: str
    term: Callable[[int], Character] = field(compare=False)
    length: int | None = None
    exponent: Callable[[int], int] | None = field(default=None, compare=False)

    def __getitem__(self, m: int) -> Character:
        if m < 0 or (self.length is not None and m >= self.length):
            raise IndexError(m)
        return self.term(m)

    def __len__(self) -> int:
        if self.length is None:
            raise TypeError("endless sequence")
        return self.length

    def prefix(self, k: int) -> list[Character]:
        if self.length is not None:
            k = min(k, self.length)
        return [self.term(m) for m in range(k)]


def split_top_level(body: str) -> list[str]:
    """Split on commas not nested in brackets."""
    items, depth, cur = [], 0, []
    for ch in body:
        if ch in "([{":
            depth += 1
        elif ch in ")]}":
            depth -= 1
        if ch == "," and depth == 0:
            items.append("".join(cur))
            cur = []
        else:
            cur.append(ch)
    items.append("".join(cur))
    return [s for s in items if s.strip()]


def _explicit(spec: GroupSpec, body: str) -> CharacterSequence:
    items = split_top_level(body)
    chars = tuple(parse_character(spec, s) for s in items)
    if len(set(chars)) != len(chars):
        raise ValueError("explicit sequences must list distinct characters")
    expo = (lambda m: chars[m].n) if spec.kind is Kind.CIRCLE else None
    return CharacterSequence(spec, f"[{body}]", chars.__getitem__, len(chars), expo)


def parse_sequence(spec: GroupSpec, text: str) -> CharacterSequence:
    """Build a sequence from its descriptor.

    Circle exponents start at ``n = 1``: ``3n`` is ``3, 6, 9, ...``, ``n!`` is
    ``1!, 2!, ...``, ``4^n`` is ``4, 16, ...``.  On coordinate groups ``chi``
    (or ``n``) is ``chi_0, chi_1, ...`` and ``kn`` is ``chi_0, chi_k, ...``;
    on the p-adics ``n`` is ``1/p, 1/p^2, ...``.  ``thin:s`` picks the first
    character of every ``s``-th block of the nice partition.
    """
    t = text.strip().replace(" ", "")
    if t.startswith("[") and t.endswith("]"):
        return _explicit(spec, t[1:-1])
    if t.startswith("thin"):
        stride = int(t.partition(":")[2] or 3)
        return thin_sequence(spec, stride)
    kind = spec.kind
    if kind is Kind.CIRCLE:
        m = re.fullmatch(r"(\d*)n", t)
        if m:
            k = int(m.group(1) or 1)
            f = lambda i: k * (i + 1)  # noqa: E731
        elif t == "n!":
            f = lambda i: math.factorial(i + 1)  # noqa: E731
        elif re.fullmatch(r"\d+\^n", t):
            b = int(t.split("^")[0])
            f = lambda i: b ** (i + 1)  # noqa: E731
        else:
            raise ValueError(f"unknown circle sequence {text!r}")
        return CharacterSequence(spec, t, lambda i: circle_character(f(i)), None, f)
    if kind is Kind.PADIC:
        if t in ("n", "chi"):
            return CharacterSequence(spec, t, lambda i: padic_character(spec, 1, i + 1))
        raise ValueError(f"unknown p-adic sequence {text!r}")
    m = re.fullmatch(r"(\d*)n|chi", t)
    if not m:
        raise ValueError(f"unknown sequence {text!r}")
    k = int(m.group(1) or 1) if t != "chi" else 1
    return CharacterSequence(spec, t, lambda i: coordinate_character(spec, k * i))


def thin_sequence(spec: GroupSpec, stride: int = 3) -> CharacterSequence:
    """Endless thin sequence; the partition is rebuilt deeper on demand."""
    from .partitions import build_nice_partition

    cache: dict = {}
    mode = "lacunary" if spec.kind is Kind.CIRCLE else "cover"

    def term(i: int) -> Character:
        need = stride * i
        plan = cache.get("plan")
        if plan is None or plan.depth < need:
            plan = build_nice_partition(spec, max(need, 2 * (plan.depth if plan else 8)),
                                        circle_mode=mode)
            cache["plan"] = plan
        return plan.block(need).first()

    expo = (lambda i: term(i).n) if spec.kind is Kind.CIRCLE else None
    return CharacterSequence(spec, f"thin:{stride}", term, None, expo)
