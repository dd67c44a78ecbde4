"""Continuous-time simulation of a bounded-size rule on ``n`` vertices.

Quadruple events arrive at total rate ``n/2``; each draws four vertices
uniformly with replacement and adds the edge picked by the rule.  The
component structure is kept in a union-find forest with size and surplus
carried on roots, together with incrementally maintained type counts and
susceptibility sums.  No edge list is retained.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numba
import numpy as np

from .rules import BoundedSizeRule, LARGE
from .seeding import make_rng

_BATCH = 1 << 16
_NO_LIMIT = np.iinfo(np.int64).max


@numba.njit(cache=True)
def _find(parent, v):
    r = v
    while parent[r] != r:
        r = parent[r]
    while parent[v] != r:
        nxt = parent[v]
        parent[v] = r
        v = nxt
    return r


@numba.njit(cache=True)
def _run_events(parent, size, surplus, X, stats, K, table, t, t_target,
                gaps, quads, pos, max_events):
    """Consume buffered events while the next arrival is <= t_target,
    processing at most ``max_events`` of them.

    ``stats`` holds [S2, S3, I, E, M] as float64.  Returns the new
    (t, pos); ``t`` is the time of the last event processed.
    """
    b = K + 2
    nbuf = gaps.shape[0]
    stop = nbuf
    if max_events < nbuf - pos:
        stop = pos + max_events
    r = np.empty(4, np.int64)
    while pos < stop:
        tn = t + gaps[pos]
        if tn > t_target:
            break
        t = tn
        code = 0
        for k in range(4):
            rk = _find(parent, quads[pos, k])
            r[k] = rk
            s = size[rk]
            tk = s if s <= K else K + 1
            code = code * b + tk
        if table[code]:
            ra = r[0]
            rb = r[1]
        else:
            ra = r[2]
            rb = r[3]
        pos += 1
        stats[3] += 1.0
        if ra == rb:
            surplus[ra] += 1
            continue
        sa = size[ra]
        sb = size[rb]
        if sa < sb:
            ra, rb = rb, ra
            sa, sb = sb, sa
        ns = sa + sb
        parent[rb] = ra
        size[ra] = ns
        surplus[ra] += surplus[rb]
        ta = sa if sa <= K else K + 1
        tb = sb if sb <= K else K + 1
        tn_ = ns if ns <= K else K + 1
        X[ta] -= sa
        X[tb] -= sb
        X[tn_] += ns
        fa = float(sa)
        fb = float(sb)
        stats[0] += 2.0 * fa * fb
        stats[1] += 3.0 * fa * fb * (fa + fb)
        if ns > stats[2]:
            stats[2] = ns
        stats[4] -= 1.0
    return t, pos


@dataclass
class ComponentStats:
    """Snapshot of the component structure.

    ``components`` is an ``(M, 2)`` integer array of (size, surplus) rows,
    sizes descending and, for equal sizes, surplus descending.
    """

    components: np.ndarray
    s2bar: float
    s3bar: float
    I: int
    t: float
    n: int
    X: np.ndarray = field(repr=False)
    E: int = 0

    @property
    def sizes(self):
        return self.components[:, 0]

    @property
    def surpluses(self):
        return self.components[:, 1]


class BsrProcess:
    """One trajectory of the bounded-size rule process."""

    def __init__(self, rule: BoundedSizeRule, n: int, seed):
        n = int(n)
        if n < 1:
            raise ValueError("n must be >= 1")
        self.rule = rule
        self.n = n
        self.K = rule.K
        self.t = 0.0
        self.rng = make_rng(seed)
        self.parent = np.arange(n, dtype=np.int64)
        self.size = np.ones(n, dtype=np.int64)
        self.surplus = np.zeros(n, dtype=np.int64)
        # X[1..K] small types, X[K+1] the large type; X[0] unused
        self.X = np.zeros(self.K + 2, dtype=np.int64)
        self.X[1 if self.K >= 1 else self.K + 1] = n
        self._stats = np.array([n, n, 1, 0, n], dtype=np.float64)
        self._table = rule.table
        self._gaps = np.empty(0)
        self._quads = np.empty((0, 4), dtype=np.int64)
        self._pos = 0
        self._clock = 0.0  # time of the last processed event

    # ledger accessors
    @property
    def S2(self) -> int:
        return int(self._stats[0])

    @property
    def S3(self) -> int:
        return int(self._stats[1])

    @property
    def I(self) -> int:
        return int(self._stats[2])

    @property
    def E(self) -> int:
        return int(self._stats[3])

    @property
    def M(self) -> int:
        return int(self._stats[4])

    @property
    def events(self) -> int:
        return self.E

    def x_large(self) -> float:
        return self.X[self.K + 1] / self.n

    def type_fractions(self) -> np.ndarray:
        """(x_1, ..., x_K, x_LARGE)."""
        return self.X[1:] / self.n

    def _refill(self):
        rest_g = self._gaps[self._pos:]
        rest_q = self._quads[self._pos:]
        m = min(_BATCH, max(64, self.n))
        g = self.rng.exponential(2.0 / self.n, size=m)
        q = self.rng.integers(0, self.n, size=(m, 4), dtype=np.int64)
        self._gaps = np.concatenate([rest_g, g])
        self._quads = np.concatenate([rest_q, q])
        self._pos = 0

    def advance_to(self, t_target: float) -> "BsrProcess":
        t_target = float(t_target)
        if t_target < self.t:
            raise ValueError(f"cannot go back in time: {t_target} < {self.t}")
        while True:
            if self._pos >= len(self._gaps):
                self._refill()
            self._clock, self._pos = _run_events(
                self.parent, self.size, self.surplus, self.X, self._stats,
                self.K, self._table, self._clock, t_target,
                self._gaps, self._quads, self._pos, _NO_LIMIT)
            if self._pos < len(self._gaps):
                break
        self.t = t_target
        return self

    def step(self) -> "BsrProcess":
        """Process exactly one event; ``t`` becomes its arrival time."""
        if self._pos >= len(self._gaps):
            self._refill()
        self._clock, self._pos = _run_events(
            self.parent, self.size, self.surplus, self.X, self._stats,
            self.K, self._table, self._clock, np.inf,
            self._gaps, self._quads, self._pos, 1)
        self.t = max(self.t, self._clock)
        return self

    def roots(self) -> np.ndarray:
        return np.flatnonzero(self.parent == np.arange(self.n))

    def snapshot(self) -> ComponentStats:
        r = self.roots()
        sz = self.size[r]
        sp = self.surplus[r]
        order = np.lexsort((-sp, -sz))
        comps = np.column_stack([sz[order], sp[order]])
        return ComponentStats(
            components=comps,
            s2bar=self._stats[0] / self.n,
            s3bar=self._stats[1] / self.n,
            I=self.I, t=self.t, n=self.n, X=self.X.copy(), E=self.E)

    def check_ledger(self):
        """Recompute every ledger quantity from scratch; raise on mismatch."""
        r = self.roots()
        sz = self.size[r].astype(np.float64)
        problems = []
        if self.X.sum() != self.n:
            problems.append("type counts do not sum to n")
        if self.surplus[r].sum() != self.E - (self.n - len(r)):
            problems.append("surplus total != E - (n - M)")
        if np.sum(sz ** 2) != self._stats[0]:
            problems.append("S2 mismatch")
        if np.sum(sz ** 3) != self._stats[1]:
            problems.append("S3 mismatch")
        if sz.max() != self._stats[2]:
            problems.append("I mismatch")
        if len(r) != self.M:
            problems.append("M mismatch")
        K = self.K
        X = np.zeros(K + 2, dtype=np.int64)
        for s in self.size[r]:
            X[s if s <= K else K + 1] += s
        if not np.array_equal(X, self.X):
            problems.append("type counts mismatch")
        if problems:
            raise AssertionError("; ".join(problems))


def new_process(rule: BoundedSizeRule, n: int, seed) -> BsrProcess:
    return BsrProcess(rule, n, seed)


def advance_to(process: BsrProcess, t_target: float) -> BsrProcess:
    return process.advance_to(t_target)


def snapshot(process: BsrProcess) -> ComponentStats:
    return process.snapshot()


@dataclass
class RescaledRecord:
    lam: float
    sizes: np.ndarray     # rescaled masses of the top_k components
    surpluses: np.ndarray
    mass_surplus_sum: float  # sum over all components of rescaled size * surplus


def rescale(stats: ComponentStats, constants, top_k: int) -> RescaledRecord:
    """Critical-window coordinates of a snapshot.

    lambda = (t - t_c) n^(1/3) / (alpha beta^(2/3)); sizes are scaled by
    beta^(1/3) n^(-2/3); surpluses are left as they are.
    """
    n = stats.n
    lam = (stats.t - constants.t_c) * n ** (1 / 3) / (constants.alpha * constants.beta ** (2 / 3))
    scale = constants.beta ** (1 / 3) * n ** (-2 / 3)
    comps = stats.components
    k = min(int(top_k), len(comps))
    sizes = comps[:k, 0] * scale
    surp = comps[:k, 1].copy()
    total = float(np.sum(comps[:, 0] * comps[:, 1]) * scale)
    return RescaledRecord(lam, sizes, surp, total)
