import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from conftest import poisson_tv, tv_distance
from critmc.coalescent import (AugmentedState, amc_run, d_U, graphical_construction,
                               no_event_probability)
from critmc.seeding import make_rng

blocks = st.lists(st.tuples(st.floats(0.01, 5.0), st.integers(0, 4)), max_size=6)


def test_sorted_with_surplus_tie_break():
    z = AugmentedState.from_pairs([(1.0, 0), (2.0, 1), (1.0, 3)])
    assert z.pairs() == [(2.0, 1), (1.0, 3), (1.0, 0)]


def test_invalid_blocks():
    with pytest.raises(ValueError):
        AugmentedState([1.0, 0.0])
    with pytest.raises(ValueError):
        AugmentedState([1.0], [-1])


def test_d_U_examples():
    z = AugmentedState.from_pairs([(3, 1), (1, 0)])
    assert d_U(z, z) == 0
    assert d_U(AugmentedState.from_pairs([(1, 0)]), AugmentedState.from_pairs([(1, 1)])) == 1
    assert d_U(z, AugmentedState.from_pairs([(2, 1), (1, 0)])) == pytest.approx(2)
    # padding with zero blocks
    assert d_U(AugmentedState.units(2), AugmentedState.units(1)) == pytest.approx(1)


@given(blocks, blocks, blocks)
def test_d_U_is_a_metric(a, b, c):
    za, zb, zc = (AugmentedState.from_pairs(p) for p in (a, b, c))
    assert d_U(za, zb) == pytest.approx(d_U(zb, za))
    assert d_U(za, zc) <= d_U(za, zb) + d_U(zb, zc) + 1e-9
    assert d_U(za, zb) >= 0


def test_empty_and_zero_time():
    assert len(amc_run(AugmentedState(), 3.0, 1)) == 0
    z = AugmentedState.from_pairs([(1.0, 3)])
    assert graphical_construction(z, 0.0, 1) == z
    z3 = AugmentedState.from_pairs([(0.5, 0), (1.5, 2), (1.0, 0)])
    assert graphical_construction(z3, 0.0, 1) == z3
    assert amc_run(z3, 0.0, 1) == z3


@settings(max_examples=40, deadline=None)
@given(blocks, st.floats(0, 3), st.integers(0, 2**32))
def test_bookkeeping(pairs, t, seed):
    z = AugmentedState.from_pairs(pairs)
    for run in (amc_run, graphical_construction):
        out, merges, loops = run(z, t, seed, return_counts=True)
        assert out.total_mass == pytest.approx(z.total_mass)
        assert out.total_surplus == z.total_surplus + loops
        assert len(out) == len(z) - merges


def test_two_blocks_stay_apart():
    z = AugmentedState.units(2)
    t, N = 0.7, 20000
    rng = make_rng(17)
    p_exact = np.exp(-t)
    for run in (amc_run, graphical_construction):
        apart = np.mean([len(run(z, t, rng)) == 2 for _ in range(N)])
        assert abs(apart - p_exact) <= 3 * np.sqrt(p_exact * (1 - p_exact) / N)


def test_single_block_surplus_is_poisson():
    z = AugmentedState.units(1)
    rng = make_rng(5)
    for run in (amc_run, graphical_construction):
        s = np.array([run(z, 1.0, rng).surpluses[0] for _ in range(20000)])
        assert poisson_tv(s, 0.5) < 0.02


def _shape(z):
    return (tuple(np.round(z.masses, 9)), min(z.total_surplus, 3))


def test_semigroup_on_two_blocks():
    z = AugmentedState.from_pairs([(1.0, 0), (0.5, 0)])
    rng = make_rng(8)
    N = 20000
    direct = [_shape(amc_run(z, 1.0, rng)) for _ in range(N)]
    split = [_shape(amc_run(amc_run(z, 0.4, rng), 0.6, rng)) for _ in range(N)]
    assert tv_distance(direct, split) < 0.02


def test_amc_matches_graphical_small():
    z = AugmentedState.units(3)
    rng = make_rng(9)
    N = 20000
    a = [_shape(amc_run(z, 0.5, rng)) for _ in range(N)]
    b = [_shape(graphical_construction(z, 0.5, rng)) for _ in range(N)]
    assert tv_distance(a, b) < 0.03


def test_no_event_probability():
    z = AugmentedState.units(3)
    # rate: 3 pairs at 1 plus 3 self rates at 1/2
    assert no_event_probability(z, 0.5) == pytest.approx(np.exp(-2.25))


def test_graphical_many_blocks_path():
    rng = np.random.default_rng(0)
    z = AugmentedState(rng.uniform(0.01, 0.2, size=100))
    out, merges, loops = graphical_construction(z, 3.0, 1, return_counts=True)
    assert out.total_mass == pytest.approx(z.total_mass)
    assert len(out) == 100 - merges and out.total_surplus == loops
