"""Finite-state augmented multiplicative coalescent.

A state is a finite list of blocks ``(mass, surplus)``.  Blocks ``i != j``
merge at rate ``x_i x_j`` (surpluses add) and block ``i`` gains one unit of
surplus at rate ``x_i**2 / 2``.
"""
from __future__ import annotations

import math

import numpy as np
from scipy.sparse import coo_matrix
from scipy.sparse.csgraph import connected_components

from .seeding import make_rng


class AugmentedState:
    """Blocks sorted by mass descending, equal masses by surplus descending.

    Remaining ties keep insertion order (the sort is stable).
    """

    __slots__ = ("masses", "surpluses")

    def __init__(self, masses=(), surpluses=None):
        m = np.asarray(masses, dtype=float).reshape(-1)
        if surpluses is None:
            s = np.zeros(len(m), dtype=np.int64)
        else:
            s = np.asarray(surpluses).reshape(-1)
            if len(s) != len(m):
                raise ValueError("masses and surpluses differ in length")
            if np.any(s < 0) or np.any(s != np.floor(s)):
                raise ValueError("surpluses must be nonnegative integers")
            s = s.astype(np.int64)
        if np.any(~(m > 0)) or np.any(~np.isfinite(m)):
            raise ValueError("masses must be finite and strictly positive")
        order = np.lexsort((-s, -m))
        self.masses = m[order]
        self.surpluses = s[order]

    @classmethod
    def from_pairs(cls, pairs):
        pairs = list(pairs)
        if not pairs:
            return cls()
        m, s = zip(*pairs)
        return cls(m, s)

    @classmethod
    def units(cls, k):
        return cls(np.ones(k))

    def pairs(self):
        return [(float(m), int(s)) for m, s in zip(self.masses, self.surpluses)]

    def __len__(self):
        return len(self.masses)

    def __repr__(self):
        return f"AugmentedState({self.pairs()!r})"

    def __eq__(self, other):
        if not isinstance(other, AugmentedState):
            return NotImplemented
        return (np.array_equal(self.masses, other.masses)
                and np.array_equal(self.surpluses, other.surpluses))

    @property
    def total_mass(self):
        return float(self.masses.sum())

    @property
    def total_surplus(self):
        return int(self.surpluses.sum())

    @property
    def sum_sq(self):
        return float(np.sum(self.masses ** 2))

    @property
    def mass_surplus(self):
        return float(np.sum(self.masses * self.surpluses))


def d_U(z: AugmentedState, zp: AugmentedState) -> float:
    n = max(len(z), len(zp))
    x = np.zeros(n)
    y = np.zeros(n)
    xp = np.zeros(n)
    yp = np.zeros(n)
    x[:len(z)], y[:len(z)] = z.masses, z.surpluses
    xp[:len(zp)], yp[:len(zp)] = zp.masses, zp.surpluses
    return float(np.sqrt(np.sum((x - xp) ** 2)) + np.sum(np.abs(x * y - xp * yp)))


def amc_run(z: AugmentedState, duration: float, seed, return_counts: bool = False):
    """Gillespie simulation of the coalescent for ``duration``.

    The total event rate is ``sum_{i<j} x_i x_j + sum_i x_i^2/2 = M^2/2``
    with ``M`` the (conserved) total mass, so it never changes.  An event
    picks two blocks independently with probability proportional to mass:
    the same block twice is a surplus event, distinct blocks merge.

    With ``return_counts`` the result is ``(state, merges, surplus_events)``.
    """
    if duration < 0:
        raise ValueError("duration must be nonnegative")
    rng = make_rng(seed)
    masses = list(map(float, z.masses))
    surp = list(map(int, z.surpluses))
    if not masses:
        return (AugmentedState(), 0, 0) if return_counts else AugmentedState()
    merges = loops = 0
    total = sum(masses)
    rate = total * total / 2.0
    t = rng.exponential(1.0 / rate)
    cum = np.cumsum(masses)
    while t <= duration:
        u = rng.random(2) * cum[-1]
        i, j = np.searchsorted(cum, u, side="right")
        i = min(i, len(masses) - 1)
        j = min(j, len(masses) - 1)
        if i == j:
            surp[i] += 1
            loops += 1
        else:
            merges += 1
            if i > j:
                i, j = j, i
            masses[i] += masses[j]
            surp[i] += surp[j]
            del masses[j]
            del surp[j]
            cum = np.cumsum(masses)
        t += rng.exponential(1.0 / rate)
    out = AugmentedState(masses, surp)
    return (out, merges, loops) if return_counts else out


_SMALL = 32


def _small_components(B, ii, jj):
    parent = list(range(B))

    def find(a):
        while parent[a] != a:
            parent[a] = parent[parent[a]]
            a = parent[a]
        return a

    for a, b in zip(ii.tolist(), jj.tolist()):
        ra, rb = find(a), find(b)
        if ra != rb:
            parent[rb] = ra
    roots = [find(a) for a in range(B)]
    relabel = {}
    label = np.array([relabel.setdefault(r, len(relabel)) for r in roots], dtype=np.int64)
    return len(relabel), label


def graphical_construction(z: AugmentedState, t: float, seed, return_counts: bool = False):
    """Poisson edge construction of the coalescent at time ``t``.

    Each pair of blocks gets Poisson(t x_i x_j) edges, each block
    Poisson(t x_i^2 / 2) self-loops; blocks are grouped by the connected
    components of the resulting multigraph.

    With ``return_counts`` the result is ``(state, merges, surplus_created)``
    where ``merges`` is the drop in the number of blocks.
    """
    if t < 0:
        raise ValueError("t must be nonnegative")
    rng = make_rng(seed)
    x = z.masses
    B = len(x)
    if B == 0:
        return (AugmentedState(), 0, 0) if return_counts else AugmentedState()
    iu, ju = np.triu_indices(B, k=1)
    pair_edges = rng.poisson(t * x[iu] * x[ju])
    loops = rng.poisson(t * x * x / 2.0)
    hit = pair_edges > 0
    if B <= _SMALL:
        ncomp, label = _small_components(B, iu[hit], ju[hit])
    else:
        g = coo_matrix((np.ones(hit.sum()), (iu[hit], ju[hit])), shape=(B, B))
        ncomp, label = connected_components(g, directed=False)
    mass = np.bincount(label, weights=x, minlength=ncomp)
    members = np.bincount(label, minlength=ncomp)
    edges = np.bincount(label[iu], weights=pair_edges, minlength=ncomp).astype(np.float64)
    edges += np.bincount(label, weights=loops, minlength=ncomp)
    surplus = np.bincount(label, weights=z.surpluses, minlength=ncomp)
    surplus = surplus + edges - (members - 1)
    out = AugmentedState(mass, np.rint(surplus).astype(np.int64))
    if return_counts:
        n_edges = int(pair_edges.sum() + loops.sum())
        return out, B - ncomp, n_edges - (B - ncomp)
    return out


def no_event_probability(z: AugmentedState, t: float) -> float:
    """P(no merge and no surplus event in [0, t]) = exp(-t M^2 / 2)."""
    return math.exp(-t * z.total_mass ** 2 / 2.0)
