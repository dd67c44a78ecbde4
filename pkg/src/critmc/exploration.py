"""Breadth-first exploration walk with surplus marks, reflection,
excursion extraction, and the excursion/mark sampler of the limit object.

Paths are piecewise linear with jumps.  A ``WalkPath`` stores strictly
increasing breakpoints with the value just after each breakpoint
(``values``) and the left limit just before it (``left``); between
breakpoints the path interpolates linearly from ``values[k]`` to
``left[k + 1]``.  Paths are right-continuous.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .coalescent import AugmentedState
from .seeding import derive_seed, make_rng


@dataclass
class WalkPath:
    times: np.ndarray
    values: np.ndarray
    left: np.ndarray = None

    def __post_init__(self):
        self.times = np.asarray(self.times, dtype=float)
        self.values = np.asarray(self.values, dtype=float)
        if self.left is None:
            self.left = self.values.copy()
        else:
            self.left = np.asarray(self.left, dtype=float)
        if not (len(self.times) == len(self.values) == len(self.left)):
            raise ValueError("times/values/left differ in length")
        if len(self.times) > 1 and np.any(np.diff(self.times) <= 0):
            raise ValueError("breakpoints must be strictly increasing")

    @property
    def length(self):
        return float(self.times[-1]) if len(self.times) else 0.0

    def __call__(self, t):
        """Right-continuous evaluation; constant after the last breakpoint."""
        t = np.asarray(t, dtype=float)
        k = np.searchsorted(self.times, t, side="right") - 1
        k = np.clip(k, 0, len(self.times) - 1)
        nxt = np.minimum(k + 1, len(self.times) - 1)
        t0, t1 = self.times[k], self.times[nxt]
        v0, v1 = self.values[k], self.left[nxt]
        span = np.where(t1 > t0, t1 - t0, 1.0)
        frac = np.clip((t - t0) / span, 0.0, 1.0)
        out = np.where(nxt > k, v0 + frac * (v1 - v0), v0)
        return out if out.ndim else float(out)

    def points(self):
        """Interleaved (time, value) sequence: left limit then value at each breakpoint."""
        T = np.repeat(self.times, 2)
        V = np.empty(2 * len(self.times))
        V[0::2] = self.left
        V[1::2] = self.values
        return T, V


@dataclass
class ExcursionRecord:
    start: float
    end: float
    area: float
    marks: int = 0

    @property
    def length(self):
        return self.end - self.start


def reflect(walk: WalkPath) -> WalkPath:
    """Subtract the running minimum.

    Linear pieces that fall below the previous minimum get an extra
    breakpoint where they cross it, so the output is exact.
    """
    t, v, w = walk.times, walk.values, walk.left
    N = len(t)
    if N == 0:
        return WalkPath(t, v, w)
    _, P = walk.points()
    cm = np.minimum.accumulate(P)
    rl = w - cm[0::2]
    rv = v - cm[1::2]
    if N == 1:
        return WalkPath(t, rv, rl)
    M = cm[1::2][:-1]
    a, bnext = v[:-1], w[1:]
    cross = (bnext < M) & (a > M)
    k = np.flatnonzero(cross)
    tc = t[k] + (a[k] - M[k]) / (a[k] - bnext[k]) * (t[k + 1] - t[k])
    ok = (tc > t[k]) & (tc < t[k + 1])
    k, tc = k[ok], tc[ok]
    if len(k) == 0:
        return WalkPath(t, rv, rl)
    times = np.concatenate([t, tc])
    vals = np.concatenate([rv, np.zeros(len(k))])
    lefts = np.concatenate([rl, np.zeros(len(k))])
    order = np.argsort(times, kind="stable")
    return WalkPath(times[order], vals[order], lefts[order])


def _excursion_arrays(reflected: WalkPath, min_length: float = 0.0):
    """(start, end, area) arrays of the positive runs, in time order."""
    T, V = reflected.points()
    empty = np.empty(0)
    if len(T) == 0:
        return empty, empty, empty
    pos = V > 0
    if not pos.any():
        return empty, empty, empty
    seg = np.diff(T) * (V[:-1] + V[1:]) / 2.0
    cs = np.concatenate([[0.0], np.cumsum(seg)])
    d = np.diff(pos.astype(np.int8))
    starts = np.flatnonzero(d == 1) + 1  # first positive point of a run
    ends = np.flatnonzero(d == -1)       # last positive point of a run
    if pos[0]:
        starts = np.concatenate([[0], starts])
    if pos[-1]:
        ends = np.concatenate([ends, [len(V) - 1]])
    lo = np.maximum(starts - 1, 0)
    hi = np.minimum(ends + 1, len(V) - 1)
    t0, t1 = T[lo], T[hi]
    area = cs[hi] - cs[lo]
    keep = (t1 - t0) > min_length
    return t0[keep], t1[keep], area[keep]


def extract_excursions(reflected: WalkPath, marks=(), min_length: float = 0.0):
    """Maximal intervals on which the path is strictly positive.

    Returns ExcursionRecords sorted by length (descending, ties by marks
    descending).  Marks are counted in ``(start, end]``.  An excursion
    still open at the last breakpoint ends there.
    """
    t0, t1, area = _excursion_arrays(reflected, min_length)
    m = np.sort(np.asarray(marks, dtype=float))
    cnt = np.searchsorted(m, t1, side="right") - np.searchsorted(m, t0, side="right")
    recs = [ExcursionRecord(float(a), float(b), float(ar), int(c))
            for a, b, ar, c in zip(t0, t1, area, cnt)]
    recs.sort(key=lambda r: (-r.length, -r.marks))
    return recs


@dataclass
class BfsWalk:
    """Output of ``bfs_walk_build``.

    ``walk`` credits each root's mass when its component starts, so it is
    nonnegative and vanishes exactly at component boundaries.  ``raw_walk``
    is the uncredited walk (drift -1, upward jumps on discovery only).
    ``rate_left``/``rate_right`` are the one-sided limits of the mark
    intensity at the breakpoints of ``walk``.
    """

    components: AugmentedState
    walk: WalkPath
    raw_walk: WalkPath
    marks: np.ndarray
    intervals: np.ndarray        # (n_comp, 2) start/end in exploration order
    comp_masses: np.ndarray      # exploration order
    comp_surplus: np.ndarray     # exploration order
    rate_left: np.ndarray = field(repr=False, default=None)
    rate_right: np.ndarray = field(repr=False, default=None)
    q: float = 1.0
    x_star: float = 0.0

    def rate(self, t, side="right"):
        """Mark intensity at time(s) t (one-sided limit at breakpoints)."""
        t = np.asarray(t, dtype=float)
        T = self.walk.times
        if side == "right":
            k = np.searchsorted(T, t, side="right") - 1
            return np.where(k >= 0, self.rate_right[np.maximum(k, 0)], 0.0)
        k = np.searchsorted(T, t, side="left")
        return np.where(k < len(T), self.rate_left[np.minimum(k, len(T) - 1)], 0.0)


def bfs_walk_build(masses, q: float, seed, noise: bool = True) -> BfsWalk:
    """Two-stage breadth-first construction of the random graph on blocks
    with the given masses (edges between blocks i, j at intensity
    ``q x_i x_j``, self-loops at ``q x_i^2 / 2``) and its exploration walk.

    With ``noise=False`` no arrivals occur at all (every block is its own
    component, no surplus).
    """
    x = np.asarray(masses, dtype=float)
    if x.ndim != 1 or len(x) == 0 or np.any(~(x > 0)):
        raise ValueError("masses must be a nonempty list of positive reals")
    if not q > 0:
        raise ValueError("q must be positive")
    rng = make_rng(seed)
    n = len(x)
    explored = np.zeros(n, dtype=bool)
    queued = np.zeros(n, dtype=bool)
    queue = []
    qhead = 0
    qmass = 0.0  # mass in the queue, excluding the vertex being explored

    times, vals, lefts, rl, rr, credit_l, credit_r = [], [], [], [], [], [], []
    marks = []
    comp_mass, comp_surp, intervals = [], [], []
    l = 0.0
    prev_end = 0.0      # credited walk value at the end of the previous step
    prev_rate = 0.0
    credit = 0.0        # cumulative root mass credited so far

    for _ in range(n):
        if qhead == len(queue):
            if comp_mass:
                intervals[-1][1] = l
            avail = np.flatnonzero(~explored)
            p = x[avail] / x[avail].sum()
            v = int(avail[rng.choice(len(avail), p=p)]) if len(avail) > 1 else int(avail[0])
            prev_credit = credit
            credit += x[v]
            start_val = x[v]
            comp_mass.append(0.0)
            comp_surp.append(0)
            intervals.append([l, l])
        else:
            v = queue[qhead]
            qhead += 1
            qmass -= x[v]
            prev_credit = credit
            start_val = prev_end
        explored[v] = True
        queued[v] = False
        xv = x[v]
        comp_mass[-1] += xv
        base_rate = q * (xv / 2.0 + max(qmass, 0.0))
        # breakpoint at the start of this vertex's interval
        times.append(l)
        lefts.append(prev_end)
        vals.append(start_val)
        credit_l.append(prev_credit)
        credit_r.append(credit)
        rl.append(prev_rate)
        rr.append(base_rate)

        cand = np.flatnonzero(~explored & ~queued)
        found, first, extra = [], np.empty(0), []
        if noise:
            k = rng.poisson(q * x[cand] * xv) if len(cand) else np.zeros(0, dtype=int)
            hit = k > 0
            found = cand[hit]
            kf = k[hit]
            # first of k uniform points on [0, xv]
            first = xv * (1.0 - rng.random(len(found)) ** (1.0 / kf))
            for m, kk in zip(first, kf):
                if kk > 1:
                    extra.append(rng.uniform(m, xv, size=kk - 1))
            nloop = rng.poisson(q * xv * xv / 2.0)
            extra.append(rng.uniform(0.0, xv, size=nloop))
            inq = np.asarray(queue[qhead:], dtype=np.int64)
            if len(inq):
                kq = rng.poisson(q * x[inq] * xv)
                extra.append(rng.uniform(0.0, xv, size=int(kq.sum())))
        extra = np.concatenate(extra) if len(extra) else np.empty(0)
        comp_surp[-1] += len(extra)
        marks.extend(l + extra)

        order = np.argsort(first, kind="stable")
        run = start_val
        last_u = 0.0
        rate = base_rate
        for idx in order:
            u = first[idx]
            j = int(found[idx])
            if not 0.0 < u < xv:
                u = min(max(u, np.nextafter(0.0, 1.0)), np.nextafter(xv, 0.0))
            run -= u - last_u
            last_u = u
            times.append(l + u)
            lefts.append(run)
            run += x[j]
            vals.append(run)
            credit_l.append(credit)
            credit_r.append(credit)
            rl.append(rate)
            rate += q * x[j]
            rr.append(rate)
            queue.append(j)
            queued[j] = True
            qmass += x[j]
        l += xv
        prev_end = qmass if qhead < len(queue) else 0.0
        prev_rate = rate
    intervals[-1][1] = l
    times.append(l)
    lefts.append(0.0)
    vals.append(0.0)
    credit_l.append(credit)
    credit_r.append(credit)
    rl.append(prev_rate)
    rr.append(0.0)

    times = np.asarray(times)
    lefts = np.asarray(lefts)
    vals = np.asarray(vals)
    walk = WalkPath(times, vals, lefts)
    raw = WalkPath(times, vals - np.asarray(credit_r), lefts - np.asarray(credit_l))
    comp_mass = np.asarray(comp_mass)
    comp_surp = np.asarray(comp_surp, dtype=np.int64)
    return BfsWalk(
        components=AugmentedState(comp_mass, comp_surp),
        walk=walk, raw_walk=raw, marks=np.sort(np.asarray(marks, dtype=float)),
        intervals=np.asarray(intervals), comp_masses=comp_mass, comp_surplus=comp_surp,
        rate_left=np.asarray(rl), rate_right=np.asarray(rr), q=float(q),
        x_star=float(x.max()))


def consistency_problems(res: BfsWalk, atol: float = 1e-9):
    """Compare excursions of the reflected walk with the components.

    Returns a list of human-readable mismatches (empty when consistent).
    """
    exc = extract_excursions(reflect(res.walk), res.marks)
    problems = []
    if len(exc) != len(res.comp_masses):
        return [f"{len(exc)} excursions but {len(res.comp_masses)} components"]
    by_time = sorted(exc, key=lambda e: e.start)
    for k, (e, m, s, iv) in enumerate(zip(by_time, res.comp_masses, res.comp_surplus, res.intervals)):
        if abs(e.length - m) > atol or abs(e.start - iv[0]) > atol:
            problems.append(f"component {k}: excursion length {e.length!r} vs mass {m!r}")
        if e.marks != s:
            problems.append(f"component {k}: {e.marks} marks vs surplus {s}")
    lengths = np.array([e.length for e in exc])
    if np.max(np.abs(lengths - res.components.masses)) > atol:
        problems.append("sorted excursion lengths differ from sorted component masses")
    return problems


def rate_bound_violation(res: BfsWalk) -> float:
    """Largest |r(t) - q (Z(t) - min_{s<=t} Z(s))| - 1.5 q x_* over the path
    (nonpositive means the bound holds).  Z is the uncredited walk."""
    R = reflect(res.raw_walk)
    T = R.times
    worst = 0.0
    for side, vals in (("left", R.left), ("right", R.values)):
        r = res.rate(T, side=side)
        worst = max(worst, float(np.max(np.abs(r - res.q * vals))))
    return worst - 1.5 * res.q * res.x_star


def limit_arrays(lam: float, step: float, horizon: float, seed, noise: bool = True):
    """Excursions of the reflected process W(t) + lam t - t^2/2 on a grid,
    each carrying Poisson(area) marks.

    W is a Brownian motion sampled by Gaussian increments of variance
    ``step``; excursions shorter than ``2 * step`` are dropped.  Returns
    ``(lengths, marks, areas, starts)`` sorted by length descending, ties
    by marks descending.
    """
    if not 0 < step <= 1e-2:
        raise ValueError("step must lie in (0, 1e-2]")
    if horizon < max(10.0, 4.0 * abs(lam)):
        raise ValueError("horizon must be >= max(10, 4 |lambda|)")
    rng = make_rng(seed)
    nstep = int(round(horizon / step))
    t = np.arange(nstep + 1) * step
    path = lam * t - t * t / 2.0
    if noise:
        inc = rng.normal(0.0, np.sqrt(step), size=nstep)
        path[1:] += np.cumsum(inc)
    t0, t1, area = _excursion_arrays(reflect(WalkPath(t, path)), min_length=2.0 * step)
    marks = rng.poisson(area)
    length = t1 - t0
    order = np.lexsort((-marks, -length))
    return length[order], marks[order], area[order], t0[order]


def limit_excursions(lam: float, step: float, horizon: float, seed, noise: bool = True):
    """As ``limit_arrays`` but as a list of ExcursionRecords."""
    L, Y, A, T0 = limit_arrays(lam, step, horizon, seed, noise)
    return [ExcursionRecord(float(a), float(a + l), float(ar), int(y))
            for l, y, ar, a in zip(L, Y, A, T0)]


def sample_limit(lam: float, step: float, horizon: float, seed, noise: bool = True) -> AugmentedState:
    """One draw of the (length, marks) excursion vector of the limit object."""
    L, Y, _, _ = limit_arrays(lam, step, horizon, seed, noise)
    return AugmentedState(L, Y)


def walk_diagnostics(masses, q: float, varsigma: float = 1.0, seed=0) -> dict:
    """Window-precondition quantities for (masses, q) and a pathwise check of
    the mark-intensity bound on one construction."""
    x = np.asarray(masses, dtype=float)
    s1, s2, s3 = (float(np.sum(x ** r)) for r in (1, 2, 3))
    x_star = float(x.max())
    res = bfs_walk_build(x, q, seed)
    return {
        "s1": s1, "s2": s2, "s3": s3, "x_star": x_star,
        "q_minus_inv_s2": q - 1.0 / s2,
        "ratio_s3_s2cubed": s3 / s2 ** 3,
        "x_star_over_s2": x_star / s2,
        "precondition_value": s1 * (x_star / s2) ** varsigma,
        "varsigma": varsigma,
        "r_bound_ok": rate_bound_violation(res) <= 1e-12,
    }


def fuzz_instance(seed, index):
    """Deterministic random input ``(masses, q)`` for the consistency checks:
    1 to 50 blocks, uniform or Pareto masses, q uniform on [0.1, 20]."""
    rng = np.random.default_rng(derive_seed(seed, "walk-fuzz", index))
    n = int(rng.integers(1, 51))
    if index % 2:
        masses = rng.uniform(0.01, 1.0, n)
    else:
        masses = (1.0 + rng.pareto(1.5, n)) * 0.05
    q = float(rng.uniform(0.1, 20.0))
    return masses, q
