"""Experiment harness: critical-window sampling, limit references,
two-sample comparison, and the subcritical / susceptibility checks."""
from __future__ import annotations

import math
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field

import numpy as np
from scipy import stats as sps

from .exploration import limit_arrays
from .fluid import CriticalConstants, RuleRates, integrate
from .graph_engine import new_process, rescale
from .rules import BoundedSizeRule
from .seeding import derive_seed

GAMMA_RANGE = (1 / 6, 1 / 5)
MIN_SAMPLES = 30


class ConfigError(ValueError):
    pass


def thread_count() -> int:
    env = os.environ.get("CRITMC_THREADS")
    if env:
        return max(1, int(env))
    return os.cpu_count() or 1


def _map(fn, items, threads=None):
    threads = thread_count() if threads is None else threads
    items = list(items)
    if threads <= 1 or len(items) <= 1:
        return [fn(it) for it in items]
    with ProcessPoolExecutor(max_workers=threads) as ex:
        return list(ex.map(fn, items))


@dataclass
class WindowConfig:
    rule: BoundedSizeRule
    n: int
    lambdas: list
    replicates: int
    constants: CriticalConstants
    gamma: float = 0.18
    top_k: int = 5
    seed: int = 0

    def __post_init__(self):
        if not GAMMA_RANGE[0] < self.gamma < GAMMA_RANGE[1]:
            raise ConfigError(f"gamma must lie strictly inside (1/6, 1/5), got {self.gamma}")
        lams = [float(v) for v in self.lambdas]
        if any(b <= a for a, b in zip(lams, lams[1:])):
            raise ConfigError("lambda grid must be strictly increasing")
        self.lambdas = lams
        if self.n < 1 or self.replicates < 0 or self.top_k < 1:
            raise ConfigError("n >= 1, replicates >= 0 and top_k >= 1 required")
        for lam in lams:
            if self.window_time(lam) < 0:
                raise ConfigError(f"lambda={lam} maps to a negative time")

    def window_time(self, lam):
        c = self.constants
        return c.t_c + c.alpha * c.beta ** (2 / 3) * lam * self.n ** (-1 / 3)


@dataclass
class SnapshotRecord:
    """One rescaled snapshot (or one limit draw).

    For limit draws ``sizes`` are excursion lengths, ``surpluses`` mark
    counts, and ``t``, ``s2bar``, ``s3bar`` are NaN.
    """

    replicate: int
    t: float
    lam: float
    sizes: np.ndarray
    surpluses: np.ndarray
    mass_surplus_sum: float
    s2bar: float = float("nan")
    s3bar: float = float("nan")
    largest: int = 0
    areas: np.ndarray = None

    @property
    def top_size(self):
        return float(self.sizes[0]) if len(self.sizes) else 0.0

    @property
    def top_surplus(self):
        return int(self.surpluses[0]) if len(self.surpluses) else 0


def _window_replicate(args):
    cfg, r = args
    proc = new_process(cfg.rule, cfg.n, derive_seed(cfg.seed, "window", r))
    out = []
    for lam in cfg.lambdas:
        proc.advance_to(cfg.window_time(lam))
        snap = proc.snapshot()
        rec = rescale(snap, cfg.constants, cfg.top_k)
        out.append(SnapshotRecord(r, snap.t, lam, rec.sizes, rec.surpluses,
                                  rec.mass_surplus_sum, snap.s2bar, snap.s3bar, snap.I))
    return out


def run_window(cfg: WindowConfig, threads=None):
    """Rescaled snapshots along one trajectory per replicate, at every
    window time ``t_c + alpha beta^(2/3) lambda n^(-1/3)`` in order."""
    chunks = _map(_window_replicate, [(cfg, r) for r in range(cfg.replicates)], threads)
    return [rec for chunk in chunks for rec in chunk]


def _limit_one(args):
    lam, r, step, horizon, seed, top_k = args
    L, Y, A, _ = limit_arrays(lam, step, horizon, derive_seed(seed, f"limit:{lam!r}", r))
    k = len(L) if top_k is None else min(top_k, len(L))
    return SnapshotRecord(r, float("nan"), lam, L[:k], Y[:k], float(np.sum(L * Y)),
                          areas=A[:k])


def run_limit_reference(lambdas, replicates, step=1e-3, horizon=None, seed=0, top_k=5,
                        threads=None):
    """Independent limit draws per (lambda, replicate)."""
    lambdas = [float(v) for v in lambdas]
    jobs = []
    for lam in lambdas:
        h = horizon if horizon is not None else max(15.0, 4 * abs(lam) + 10)
        jobs += [(lam, r, step, h, seed, top_k) for r in range(replicates)]
    return _map(_limit_one, jobs, threads)


@dataclass
class LambdaSummary:
    lam: float
    n_emp: int
    n_ref: int
    mean_size_emp: float
    mean_size_ref: float
    var_size_emp: float
    var_size_ref: float
    mean_surplus_emp: float
    mean_surplus_ref: float
    var_surplus_emp: float
    var_surplus_ref: float
    surplus_mean_z: float
    ks_stat: float
    ks_pvalue: float
    mean_ms_emp: float
    mean_ms_ref: float
    var_ms_emp: float
    var_ms_ref: float


@dataclass
class ComparisonReport:
    per_lambda: list = field(default_factory=list)
    meta: dict = field(default_factory=dict)

    def to_dict(self):
        from dataclasses import asdict

        return {"per_lambda": [asdict(s) for s in self.per_lambda], "meta": self.meta}


def _by_lambda(records):
    out = {}
    for rec in records:
        out.setdefault(rec.lam, []).append(rec)
    return out


def _welch_z(a, b):
    se = math.sqrt(np.var(a, ddof=1) / len(a) + np.var(b, ddof=1) / len(b))
    d = float(np.mean(a) - np.mean(b))
    if se == 0:
        return 0.0 if d == 0 else math.copysign(math.inf, d)
    return d / se


def ks_two_sample(a, b):
    """Two-sample KS statistic with the asymptotic p-value."""
    res = sps.ks_2samp(a, b, method="asymp")
    return float(res.statistic), float(res.pvalue)


def compare(empirical, reference) -> ComparisonReport:
    emp, ref = _by_lambda(empirical), _by_lambda(reference)
    if sorted(emp) != sorted(ref):
        raise ValueError(f"lambda grids differ: {sorted(emp)} vs {sorted(ref)}")
    report = ComparisonReport()
    for lam in sorted(emp):
        e, r = emp[lam], ref[lam]
        if len(e) < MIN_SAMPLES or len(r) < MIN_SAMPLES:
            raise ValueError(f"lambda={lam}: need at least {MIN_SAMPLES} samples per side "
                             f"(got {len(e)} and {len(r)})")
        ce = np.array([x.top_size for x in e])
        cr = np.array([x.top_size for x in r])
        ye = np.array([x.top_surplus for x in e], dtype=float)
        yr = np.array([x.top_surplus for x in r], dtype=float)
        me = np.array([x.mass_surplus_sum for x in e])
        mr = np.array([x.mass_surplus_sum for x in r])
        D, p = ks_two_sample(ce, cr)
        report.per_lambda.append(LambdaSummary(
            lam=lam, n_emp=len(e), n_ref=len(r),
            mean_size_emp=float(ce.mean()), mean_size_ref=float(cr.mean()),
            var_size_emp=float(ce.var(ddof=1)), var_size_ref=float(cr.var(ddof=1)),
            mean_surplus_emp=float(ye.mean()), mean_surplus_ref=float(yr.mean()),
            var_surplus_emp=float(ye.var(ddof=1)), var_surplus_ref=float(yr.var(ddof=1)),
            surplus_mean_z=_welch_z(ye, yr), ks_stat=D, ks_pvalue=p,
            mean_ms_emp=float(me.mean()), mean_ms_ref=float(mr.mean()),
            var_ms_emp=float(me.var(ddof=1)), var_ms_ref=float(mr.var(ddof=1))))
    return report


def default_checkpoints(t_c, n, gamma, num):
    """``num`` points from 0 to t_n = t_c - n^(-gamma), geometrically
    refined toward t_n."""
    gap = n ** (-gamma)
    d = np.geomspace(t_c, gap, num)
    return t_c - d


def check_subcritical(rule, n, gamma, checkpoints=None, seed=0, constants=None):
    """max over checkpoints of I(t) (t_c - t)^2 / (log n)^4 along one run.

    Returns ``(max_ratio, ratios)``.
    """
    if constants is None:
        constants = integrate(rule, 1e-8)[1]
    t_c = constants.t_c
    if checkpoints is None:
        checkpoints = np.linspace(0.0, t_c - n ** (-gamma), 20)
    checkpoints = np.sort(np.asarray(checkpoints, dtype=float))
    if checkpoints[0] < 0 or checkpoints[-1] > t_c - n ** (-gamma) + 1e-12:
        raise ValueError("checkpoints must lie in [0, t_c - n^(-gamma)]")
    proc = new_process(rule, n, seed)
    ratios = []
    L4 = math.log(n) ** 4
    for t in checkpoints:
        proc.advance_to(t)
        ratios.append(proc.I * (t_c - t) ** 2 / L4)
    ratios = np.asarray(ratios)
    return float(ratios.max()), ratios


@dataclass
class SusceptibilityReport:
    sup_inv_s2: float
    sup_s3_ratio: float
    n: int
    grid_points: int
    grid_min_gap: float
    t_n: float


def check_susceptibility(rule, n, gamma, grid=None, seed=0, trajectory=None):
    """Sup over a checkpoint grid of |n^(1/3)/s2bar - n^(1/3)/s2| and
    |s3bar/s2bar^3 - s3/s2^3| along one run."""
    if trajectory is None:
        trajectory, constants = integrate(rule, 1e-8)
    t_c = trajectory.t_c
    t_n = t_c - n ** (-gamma)
    if grid is None:
        grid = default_checkpoints(t_c, n, gamma, 200)
    grid = np.sort(np.asarray(grid, dtype=float))
    if grid[0] < 0 or grid[-1] > t_n + 1e-12:
        raise ValueError("grid must lie in [0, t_c - n^(-gamma)]")
    proc = new_process(rule, n, seed)
    c = n ** (1 / 3)
    sup1 = sup2 = 0.0
    for t in grid:
        proc.advance_to(t)
        st = trajectory.state(t)
        s2b, s3b = proc.S2 / n, proc.S3 / n
        sup1 = max(sup1, abs(c / s2b - c / st["s2"]))
        sup2 = max(sup2, abs(s3b / s2b ** 3 - st["s3"] / st["s2"] ** 3))
    gaps = np.diff(grid)
    return SusceptibilityReport(sup1, sup2, n, len(grid),
                                float(gaps.min()) if len(gaps) else 0.0, t_n)


@dataclass
class DriftCheck:
    K: int
    t: float
    estimate: np.ndarray    # mean finite-difference drift
    predicted: np.ndarray   # mean Simpson average of the fluid drift along the path
    stderr: np.ndarray
    z: np.ndarray

    @property
    def ok(self):
        return bool(np.all(np.abs(self.z) <= 3.0))


def drift_oracle(rule, t, n=10 ** 6, dt=1e-2, replicates=30, seed=0):
    """Monte Carlo finite difference of the type fractions against the
    fluid drift.

    Each replicate records the fractions at t, t + dt/2, t + dt; the
    finite difference is compared with Simpson's rule applied to the fluid
    drift evaluated at those sampled states.
    """
    rr = RuleRates(rule)
    diffs, fd, pred = [], [], []
    for r in range(replicates):
        proc = new_process(rule, n, derive_seed(seed, f"drift:{t!r}", r))
        proc.advance_to(t)
        x0 = proc.type_fractions()
        proc.advance_to(t + dt / 2)
        xm = proc.type_fractions()
        proc.advance_to(t + dt)
        x1 = proc.type_fractions()
        est = (x1 - x0) / dt
        simpson = (rr.evaluate(x0)[0] + 4 * rr.evaluate(xm)[0] + rr.evaluate(x1)[0]) / 6
        fd.append(est)
        pred.append(simpson)
        diffs.append(est - simpson)
    diffs = np.asarray(diffs)
    se = diffs.std(axis=0, ddof=1) / math.sqrt(replicates)
    # one vertex of the lattice resolution when every replicate agrees exactly
    se = np.maximum(se, 1.0 / (n * dt * math.sqrt(replicates)))
    z = diffs.mean(axis=0) / se
    return DriftCheck(rule.K, t, np.mean(fd, axis=0), np.mean(pred, axis=0), se, z)
