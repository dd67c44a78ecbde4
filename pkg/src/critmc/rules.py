"""Bounded-size edge-choice rules.

A rule is a pair ``(K, F)`` with ``F`` a set of quadruples over the type
alphabet ``{1, ..., K, LARGE}``.  The type of a vertex is the size of its
component when that size is at most ``K`` and ``LARGE`` otherwise.  Given
four vertices ``(v1, v2, v3, v4)`` the first edge ``(v1, v2)`` is used when
the quadruple of their types is in ``F`` and the second edge ``(v3, v4)``
otherwise.
"""
from __future__ import annotations

import itertools
from dataclasses import dataclass, field

import numpy as np

#: Sentinel for the "large" type (component size exceeds K).
LARGE = "*"

FIRST = "first"
SECOND = "second"


class RuleError(ValueError):
    """Malformed rule text or invalid rule contents."""

    def __init__(self, message, line=None):
        self.line = line
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)


class UnknownRuleError(KeyError):
    pass


def classify(component_size: int, K: int):
    """Type of a vertex whose component has ``component_size`` vertices."""
    if component_size < 1:
        raise ValueError("component size must be >= 1")
    return component_size if component_size <= K else LARGE


def type_code(t, K: int) -> int:
    """Integer code of a type: ``1..K`` for small types, ``K + 1`` for LARGE."""
    return K + 1 if t == LARGE else int(t)


def _check_type(t, K):
    if t == LARGE:
        return LARGE
    if isinstance(t, (bool, np.bool_)) or not isinstance(t, (int, np.integer)):
        raise RuleError(f"invalid type {t!r}")
    if not 1 <= t <= K:
        raise RuleError(f"token out of range: {t} not in [1, {K}]")
    return int(t)


def _sort_key(t):
    # integers before LARGE
    return (1, 0) if t == LARGE else (0, t)


@dataclass(frozen=True)
class BoundedSizeRule:
    K: int
    F: frozenset = field(default_factory=frozenset)

    def __post_init__(self):
        if isinstance(self.K, bool) or int(self.K) != self.K or self.K < 0:
            raise RuleError(f"K must be a nonnegative integer, got {self.K!r}")
        object.__setattr__(self, "K", int(self.K))
        quads = set()
        for q in self.F:
            q = tuple(q)
            if len(q) != 4:
                raise RuleError(f"quadruple {q!r} does not have 4 entries")
            quads.add(tuple(_check_type(t, self.K) for t in q))
        object.__setattr__(self, "F", frozenset(quads))
        object.__setattr__(self, "_table", self._build_table())

    @property
    def types(self):
        """The type alphabet in canonical order."""
        return list(range(1, self.K + 1)) + [LARGE]

    @property
    def base(self) -> int:
        return self.K + 2

    def _build_table(self):
        b = self.base
        table = np.zeros(b ** 4, dtype=np.bool_)
        for q in self.F:
            table[self.encode(q)] = True
        table.setflags(write=False)
        return table

    @property
    def table(self) -> np.ndarray:
        """Membership table of ``F`` indexed by base-(K+2) quadruple codes."""
        return self._table

    def encode(self, quad) -> int:
        b, K = self.base, self.K
        c = 0
        for t in quad:
            c = c * b + type_code(t, K)
        return c

    def sorted_quadruples(self):
        return sorted(self.F, key=lambda q: tuple(_sort_key(t) for t in q))

    def serialize(self) -> str:
        lines = [f"K={self.K}"]
        for q in self.sorted_quadruples():
            lines.append(" ".join(str(t) for t in q))
        return "\n".join(lines) + "\n"

    def fingerprint(self) -> str:
        import hashlib

        return hashlib.sha256(self.serialize().encode()).hexdigest()[:16]

    def decide(self, types) -> str:
        return FIRST if self.table[self.encode(types)] else SECOND

    def __hash__(self):
        return hash((self.K, self.F))

    def __eq__(self, other):
        if not isinstance(other, BoundedSizeRule):
            return NotImplemented
        return self.K == other.K and self.F == other.F


def decide(rule: BoundedSizeRule, types) -> str:
    """Which edge the rule adds given the four vertex types."""
    return rule.decide(types)


def builtin_rule(name: str) -> BoundedSizeRule:
    if name == "erdos-renyi":
        return BoundedSizeRule(0, frozenset({(LARGE,) * 4}))
    if name == "bohman-frieze":
        om = [1, LARGE]
        return BoundedSizeRule(1, frozenset((1, 1, a, b) for a in om for b in om))
    raise UnknownRuleError(f"unknown rule: {name!r}")


BUILTIN_RULES = ("erdos-renyi", "bohman-frieze")


def parse_rule(text: str) -> BoundedSizeRule:
    """Parse the rule file format.

    The first non-blank, non-comment line is ``K=<int>``; every following
    line holds four whitespace-separated tokens, each an integer in
    ``[1, K]`` or ``*`` for LARGE.  ``#`` starts a comment.
    """
    K = None
    quads = set()
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if K is None:
            key, sep, val = line.partition("=")
            if not sep or key.strip() != "K":
                raise RuleError("malformed header, expected K=<int>", lineno)
            try:
                K = int(val.strip())
            except ValueError:
                raise RuleError("malformed header, expected K=<int>", lineno) from None
            if K < 0:
                raise RuleError("malformed header, K must be >= 0", lineno)
            continue
        tokens = line.split()
        if len(tokens) != 4:
            raise RuleError(f"wrong arity: expected 4 tokens, got {len(tokens)}", lineno)
        quad = []
        for tok in tokens:
            if tok == LARGE:
                quad.append(LARGE)
                continue
            try:
                v = int(tok)
            except ValueError:
                raise RuleError(f"invalid token {tok!r}", lineno) from None
            if not 1 <= v <= K:
                raise RuleError(f"token out of range: {v} not in [1, {K}]", lineno)
            quad.append(v)
        quads.add(tuple(quad))
    if K is None:
        raise RuleError("malformed header: missing K=<int>", 1)
    return BoundedSizeRule(K, frozenset(quads))


def load_rule(source: str) -> BoundedSizeRule:
    """Builtin rule name or path to a rule file."""
    if source in BUILTIN_RULES:
        return builtin_rule(source)
    try:
        with open(source) as fh:
            return parse_rule(fh.read())
    except FileNotFoundError:
        raise UnknownRuleError(f"unknown rule: {source!r}") from None


def random_rule(K: int, rng, density: float = 0.5) -> BoundedSizeRule:
    """Each quadruple of the alphabet is included independently."""
    alphabet = list(range(1, K + 1)) + [LARGE]
    F = [q for q in itertools.product(alphabet, repeat=4) if rng.random() < density]
    return BoundedSizeRule(K, frozenset(F))
