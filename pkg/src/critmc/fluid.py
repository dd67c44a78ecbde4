"""Fluid limit of a bounded-size rule: type fractions, susceptibilities,
critical time and the scaling constants alpha, beta.

Types are indexed ``0..K``: index ``i - 1`` is the small type ``i`` and
index ``K`` is the large type.  All rate functions are evaluated
numerically from the membership tensor of the rule.
"""
from __future__ import annotations

from dataclasses import dataclass, field, asdict

import numpy as np
from scipy.integrate import solve_ivp

from .rules import BoundedSizeRule


class FluidError(RuntimeError):
    pass


class NoBlowUpError(FluidError):
    """s_2 stays finite up to the time cap."""


class DegenerateRuleError(FluidError):
    """b(t_c) is not strictly positive."""


@dataclass
class RateValues:
    a: np.ndarray
    c: np.ndarray
    b: float
    A: np.ndarray  # A[l] for l = 1, 2, 3 (index 0 unused)
    C: np.ndarray


def _membership(rule: BoundedSizeRule) -> np.ndarray:
    K = rule.K
    m = np.zeros((K + 1,) * 4)
    for q in rule.F:
        m[tuple(K if t == "*" else t - 1 for t in q)] = 1.0
    return m


class RuleRates:
    """Precomputed structure for repeated evaluation of one rule's rates."""

    def __init__(self, rule: BoundedSizeRule):
        self.rule = rule
        K = self.K = rule.K
        self.member = _membership(rule)
        self.nonmember = 1.0 - self.member
        # per-event change of type-index counts when the added edge joins
        # a type-u vertex to a type-v vertex in distinct components
        d = np.zeros((K + 1, K + 1, K + 1))
        for u in range(K + 1):
            for v in range(K + 1):
                if u == K and v == K:
                    continue
                if u == K or v == K:
                    s = v + 1 if u == K else u + 1
                    d[u, v, s - 1] -= s
                    d[u, v, K] += s
                    continue
                su, sv = u + 1, v + 1
                d[u, v, u] -= su
                d[u, v, v] -= sv
                d[u, v, min(su + sv, K + 1) - 1] += su + sv
        self.delta = d
        self.kpl = (K + np.arange(1, K + 1)).astype(float)  # K + j
        self.js = np.arange(1, K + 1, dtype=float)

    def edge_weights(self, x):
        """g[u, v]: conditional probability (given the two vertex types)
        weight that the added edge joins a type-u to a type-v vertex, and
        w = p(u) p(v) g(u, v)."""
        p = np.asarray(x, dtype=float)
        pp = np.outer(p, p)
        g1 = np.einsum("uvkl,kl->uv", self.member, pp)
        g2 = np.einsum("kluv,kl->uv", self.nonmember, pp)
        g = g1 + g2
        return g, pp * g

    def evaluate(self, x):
        K = self.K
        x = np.asarray(x, dtype=float)
        g, w = self.edge_weights(x)
        Fx = 0.5 * np.einsum("uv,uvi->i", w, self.delta)
        b = g[K, K]
        if K == 0:
            a = np.zeros(0)
            c = np.zeros(0)
        else:
            c = 0.5 * x[:K] * (g[:K, K] + g[K, :K])
            a = np.zeros(K)
            for u in range(K):
                for v in range(K):
                    s = u + v + 2
                    if s > K:
                        a[s - K - 1] += 0.5 * w[u, v]
        A = np.zeros(4)
        C = np.zeros(4)
        for l in (1, 2, 3):
            A[l] = np.sum(self.kpl ** l * a)
            C[l] = np.sum(self.js ** l * c)
        return Fx, RateValues(a=a, c=c, b=float(b), A=A, C=C)


def _check_fractions(x, K, atol=1e-6):
    x = np.asarray(x, dtype=float)
    if x.shape != (K + 1,):
        raise ValueError(f"fractions vector must have length {K + 1}")
    if np.any(x < -atol) or abs(x.sum() - 1.0) > atol:
        raise ValueError("invalid fractions vector")
    return x


def rate_functions(rule: BoundedSizeRule, x):
    """Drift of the type fractions and the immigration / attachment /
    edge-formation rates at fractions ``x = (x_1, ..., x_K, x_large)``."""
    x = _check_fractions(x, rule.K)
    return RuleRates(rule).evaluate(x)


def susceptibility_drifts(rv: RateValues, x, s2, s3):
    xl = x[-1]
    A, C, b = rv.A, rv.C, rv.b
    ds2 = A[2] + 2.0 * C[1] * s2 + xl * C[2] + b * s2 * s2
    ds3 = A[3] + 3.0 * C[1] * s3 + 3.0 * C[2] * s2 + xl * C[3] + 3.0 * b * s2 * s3
    return ds2, ds3


def yz_drifts(rv: RateValues, x, y, z):
    """Drifts of y = 1/s2 and z = y^3 s3 restricted to large components.

    Polynomial in y, so finite at y = 0.
    """
    xl = x[-1]
    A, C, b = rv.A, rv.C, rv.b
    dy = -(A[2] + C[2] * xl) * y * y - 2.0 * C[1] * y - b
    B1 = 3.0 * y * A[2] + 3.0 * y * C[2] * xl + 3.0 * C[1]
    B2 = y ** 3 * A[3] + 3.0 * y * y * C[2] + y ** 3 * C[3] * xl
    dz = -B1 * z + B2
    return dy, dz


@dataclass
class CriticalConstants:
    t_c: float
    alpha: float
    beta: float
    b_tc: float
    rule_fingerprint: str = ""
    tol: float = 0.0
    steps: int = 0

    def to_dict(self):
        return asdict(self)

    @classmethod
    def from_dict(cls, d):
        return cls(**{k: d[k] for k in cls.__dataclass_fields__ if k in d})


@dataclass
class _Segment:
    t0: float
    t1: float
    sol: object
    kind: str  # "s" integrates (x, s2, s3), "yz" integrates (x, y, z)


@dataclass
class FluidTrajectory:
    K: int
    segments: list = field(default_factory=list)
    t_c: float = float("nan")

    @property
    def times(self):
        """Solver grid (monotone)."""
        ts = [seg.sol.ts for seg in self.segments]
        return np.unique(np.concatenate(ts))

    def _raw(self, t):
        for seg in self.segments:
            if seg.t0 <= t <= seg.t1:
                return seg.kind, seg.sol(t)
        raise ValueError(f"t={t} outside trajectory [0, {self.segments[-1].t1}]")

    def state(self, t):
        """Dict with x, s2_large, s3_large, y, z, s2, s3 at time t."""
        K = self.K
        kind, u = self._raw(float(t))
        x = u[:K + 1]
        if kind == "s":
            s2w, s3w = u[K + 1], u[K + 2]
            y = 1.0 / s2w if s2w > 0 else np.inf
            z = y ** 3 * s3w if s2w > 0 else np.nan
        else:
            y, z = u[K + 1], u[K + 2]
            s2w = 1.0 / y if y > 0 else np.inf
            s3w = z / y ** 3 if y > 0 else np.inf
        i = np.arange(1, K + 1)
        s2 = s2w + np.sum(i * x[:K])
        s3 = s3w + np.sum(i ** 2 * x[:K])
        return dict(x=x, s2_large=s2w, s3_large=s3w, y=y, z=z, s2=s2, s3=s3)

    def s2(self, t):
        return self.state(t)["s2"]

    def s3(self, t):
        return self.state(t)["s3"]

    def x(self, t):
        return self.state(t)["x"]

    def to_rows(self, num=200):
        """Rows (t, x_1..x_K, x_large, s2, s3, y, z) on a uniform grid up to t_c."""
        end = self.t_c if np.isfinite(self.t_c) else self.segments[-1].t1
        rows = []
        for t in np.linspace(0.0, end, num):
            st = self.state(t)
            rows.append([t, *st["x"], st["s2"], st["s3"], st["y"], st["z"]])
        return rows

    def columns(self):
        return (["t"] + [f"x_{i}" for i in range(1, self.K + 1)]
                + ["x_pi", "s2", "s3", "y", "z"])


def integrate(rule: BoundedSizeRule, tol: float = 1e-8, t_cap: float = 100.0):
    """Integrate the fluid equations up to the blow-up of s_2.

    Returns ``(trajectory, constants)``.  For K >= 1 the large-component
    susceptibilities start at zero, so (x, s2, s3) is integrated first and
    the system switches to (x, y, z) once s2_large reaches 1.
    """
    if not 0 < tol <= 1e-3:
        raise ValueError("tol must lie in (0, 1e-3]")
    K = rule.K
    rr = RuleRates(rule)
    rtol, atol = tol, tol * 1e-2
    steps = 0

    def f_s(t, u):
        x = u[:K + 1]
        Fx, rv = rr.evaluate(x)
        ds2, ds3 = susceptibility_drifts(rv, x, u[K + 1], u[K + 2])
        return np.concatenate([Fx, [ds2, ds3]])

    def f_yz(t, u):
        x = u[:K + 1]
        Fx, rv = rr.evaluate(x)
        dy, dz = yz_drifts(rv, x, u[K + 1], u[K + 2])
        return np.concatenate([Fx, [dy, dz]])

    def reach_one(t, u):
        return u[K + 1] - 1.0
    reach_one.terminal = True
    reach_one.direction = 1

    def hits_zero(t, u):
        return u[K + 1]
    hits_zero.terminal = True
    hits_zero.direction = -1

    traj = FluidTrajectory(K=K)

    def run(fun, t0, u0, event):
        nonlocal steps
        if t0 >= t_cap:
            raise NoBlowUpError(f"no blow-up found before t={t_cap}")
        horizon = min(max(2.0, 2.0 * t0), t_cap)
        while True:
            sol = solve_ivp(fun, (t0, horizon), u0, method="RK45", rtol=rtol,
                            atol=atol, dense_output=True, events=event)
            steps += len(sol.t) - 1
            if not sol.success:
                raise FluidError(sol.message)
            traj.segments.append(_Segment(t0, sol.t[-1], sol.sol, "s" if fun is f_s else "yz"))
            if sol.status == 1:
                return sol.t_events[0][0], sol.y_events[0][0]
            if horizon >= t_cap:
                raise NoBlowUpError(f"no blow-up found before t={t_cap}")
            t0, u0 = sol.t[-1], sol.y[:, -1]
            horizon = min(2.0 * horizon, t_cap)

    x0 = np.zeros(K + 1)
    if K == 0:
        x0[0] = 1.0
        t0, u0 = 0.0, np.array([1.0, 1.0, 1.0])
    else:
        x0[0] = 1.0
        t0, u = run(f_s, 0.0, np.concatenate([x0, [0.0, 0.0]]), reach_one)
        s2w, s3w = u[K + 1], u[K + 2]
        u0 = np.concatenate([u[:K + 1], [1.0 / s2w, s3w / s2w ** 3]])
    t_c, u_c = run(f_yz, t0, u0, hits_zero)
    traj.t_c = t_c
    _, rv = rr.evaluate(u_c[:K + 1])
    b_tc = rv.b
    if not b_tc > 0:
        raise DegenerateRuleError(f"b(t_c) = {b_tc} is not positive")
    beta = float(u_c[K + 2])
    consts = CriticalConstants(t_c=float(t_c), alpha=1.0 / b_tc, beta=beta, b_tc=float(b_tc),
                               rule_fingerprint=rule.fingerprint(), tol=tol, steps=steps)
    return traj, consts


def critical_constants(rule: BoundedSizeRule, tol: float = 1e-8) -> CriticalConstants:
    return integrate(rule, tol)[1]
