import numpy as np
import pytest

from critmc.experiments import (ConfigError, SnapshotRecord, WindowConfig, check_subcritical,
                                check_susceptibility, compare, drift_oracle, ks_two_sample,
                                run_limit_reference, run_window)
from critmc.fluid import CriticalConstants, critical_constants, integrate
from critmc.seeding import derive_seed

# P(Y*_1 = 0) at lambda = 0, frozen from 40000 draws at step 1e-4, horizon 15
P_NO_MARK_LAMBDA0 = 0.59385
P_NO_MARK_SE = 0.0024555660116356063

ER_CONST = CriticalConstants(t_c=1.0, alpha=1.0, beta=1.0, b_tc=1.0)


def _rec(r, lam, size, surplus=0):
    return SnapshotRecord(r, float("nan"), lam, np.array([size]), np.array([surplus]),
                          size * surplus)


def test_window_config_validation(er):
    with pytest.raises(ConfigError):
        WindowConfig(er, 1000, [0.0], 5, ER_CONST, gamma=0.25)
    with pytest.raises(ConfigError):
        WindowConfig(er, 1000, [0.0, -1.0], 5, ER_CONST)
    with pytest.raises(ConfigError):
        WindowConfig(er, 1000, [-50.0], 5, ER_CONST)
    cfg = WindowConfig(er, 1000, [-1.0, 0.0], 5, ER_CONST)
    assert cfg.window_time(0.0) == 1.0


def test_window_record_count_and_monotone(er):
    recs = run_window(WindowConfig(er, 2000, [0.0], 7, ER_CONST, top_k=1, seed=3), threads=1)
    assert len(recs) == 7 and all(len(r.sizes) == 1 for r in recs)
    recs = run_window(WindowConfig(er, 2000, [-1.0, 0.0, 1.0], 10, ER_CONST, seed=4), threads=1)
    for rep in range(10):
        largest = [r.largest for r in recs if r.replicate == rep]
        assert largest == sorted(largest)
    again = run_window(WindowConfig(er, 2000, [-1.0, 0.0, 1.0], 10, ER_CONST, seed=4), threads=1)
    assert all(np.array_equal(a.sizes, b.sizes) for a, b in zip(recs, again))


def test_limit_reference_determinism_and_empty():
    a = run_limit_reference([-1.0, 0.0], 5, seed=9, threads=1)
    b = run_limit_reference([-1.0, 0.0], 5, seed=9, threads=1)
    assert len(a) == 10
    assert all(np.array_equal(x.sizes, y.sizes) and np.array_equal(x.surpluses, y.surpluses)
               for x, y in zip(a, b))
    assert run_limit_reference([], 5) == []


def test_compare_examples():
    rng = np.random.default_rng(0)
    recs = [_rec(r, 0.0, v, int(v > 1)) for r, v in enumerate(rng.exponential(size=200))]
    rep = compare(recs, recs).per_lambda[0]
    assert rep.ks_stat == 0 and rep.ks_pvalue == 1
    shifted = [_rec(r.replicate, 0.0, r.top_size + 1e3) for r in recs]
    assert compare(shifted, recs).per_lambda[0].ks_stat == 1
    with pytest.raises(ValueError, match="30"):
        compare(recs[:10], recs)
    with pytest.raises(ValueError, match="grids"):
        compare([_rec(0, 1.0, 1.0)] * 40, recs)


def test_split_half_null(limit_reference_10k):
    sizes = np.array([r.top_size for r in limit_reference_10k])
    half = len(sizes) // 2
    passes = 0
    for k in range(100):
        perm = np.random.default_rng(derive_seed(5, "split", k)).permutation(len(sizes))
        _, p = ks_two_sample(sizes[perm[:half]], sizes[perm[half:]])
        passes += p > 0.01
    assert passes >= 95


def test_limit_no_mark_fraction_regression(limit_reference_10k):
    recs = limit_reference_10k
    p = np.mean([r.top_surplus == 0 for r in recs])
    band = 3 * np.sqrt(P_NO_MARK_LAMBDA0 * (1 - P_NO_MARK_LAMBDA0) / len(recs) + P_NO_MARK_SE ** 2)
    assert abs(p - P_NO_MARK_LAMBDA0) <= band


def test_subcritical_examples(er, bf):
    n = 10**4
    m, ratios = check_subcritical(er, n, 0.18, checkpoints=[0.0], seed=1, constants=ER_CONST)
    assert m == pytest.approx(1.0 / np.log(n) ** 4)
    m, ratios = check_subcritical(bf, n, 0.18, seed=2)
    assert np.isfinite(m) and len(ratios) == 20
    with pytest.raises(ValueError):
        check_subcritical(er, n, 0.18, checkpoints=[0.99], constants=ER_CONST)


def test_susceptibility_examples(er, bf):
    rep = check_susceptibility(er, 10**4, 0.18, grid=[0.0], seed=1)
    assert rep.sup_inv_s2 == 0 and rep.sup_s3_ratio == 0
    rep = check_susceptibility(bf, 10**5, 0.18, seed=2)
    assert np.isfinite(rep.sup_inv_s2) and np.isfinite(rep.sup_s3_ratio)
    assert rep.grid_points == 200


def test_drift_oracle_smoke(bf):
    chk = drift_oracle(bf, 0.3, n=10**5, replicates=10, seed=1)
    assert chk.estimate.shape == chk.predicted.shape == (2,)
    assert np.all(np.isfinite(chk.z))
