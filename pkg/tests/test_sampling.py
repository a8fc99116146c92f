import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy import stats

from vrjpgw.rng import Draws, RngStream, key_uniform, splitmix64
from vrjpgw.sampling import (
    convergence_check,
    m_infinity_cdf,
    m_infinity_cdf_closed,
    sample_A,
    sample_A_batch,
    sample_m_infinity,
)
from vrjpgw.scalar_math import mu
from vrjpgw.stats import binomial_se, ecdf, ks_2samp_distance, ks_distance


def gen(*path, seed=2024):
    return RngStream(seed, path).generator


# --- RNG streams ----------------------------------------------------------------


def test_same_seed_and_path_reproduce():
    a = RngStream(5, ("x", 1)).generator.random(10)
    b = RngStream(5).child("x", 1).generator.random(10)
    assert np.array_equal(a, b)


def test_distinct_paths_differ():
    a = RngStream(5, ("x", 1)).generator.random(1000)
    b = RngStream(5, ("x", 2)).generator.random(1000)
    assert not np.array_equal(a, b)
    assert abs(np.corrcoef(a, b)[0, 1]) < 0.15


def test_spawn_indices():
    s = RngStream(3).spawn(4, "rep")
    assert [x.path for x in s] == [RngStream(3).child("rep", i).path for i in range(4)]


def test_key_uniform_is_pure_and_in_range():
    u = [key_uniform(11, k) for k in range(10000)]
    assert u == [key_uniform(11, k) for k in range(10000)]
    assert 0 <= min(u) and max(u) < 1
    assert abs(np.mean(u) - 0.5) < 0.02


def test_splitmix_known_value():
    # first output of the reference splitmix64 generator seeded with 0
    assert splitmix64(0) == 0xE220A8397B1DCDAF
    assert splitmix64(0x9E3779B97F4A7C15) == 0x6E789E6AA1B965F4


def test_draws_buffer_is_deterministic():
    a, b = Draws(RngStream(1), block=7), Draws(RngStream(1), block=7)
    assert [a.exp() for _ in range(20)] == [b.exp() for _ in range(20)]


# --- m_c(inf) ------------------------------------------------------------------------


def test_m_infinity_mean_and_root_mean():
    x = sample_m_infinity(1.0, gen("m"), 10**6)
    assert abs(x.mean() - 1) < 0.005
    assert abs(np.sqrt(x).mean() - mu(1.0).mu) < 0.003


def test_m_infinity_variance():
    x = sample_m_infinity(2.0, gen("v"), 10**6)
    assert abs(x.var() - 0.25) < 0.01


@pytest.mark.parametrize("c", [0.05, 0.5, 1.0, 3.0, 30.0])
def test_m_infinity_law_against_scipy(c):
    x = sample_m_infinity(c, gen("law", c.hex()), 50000)
    lam = c * c
    p = stats.kstest(x, stats.invgauss(mu=1 / lam, scale=lam).cdf).pvalue
    assert p > 1e-3
    assert np.all(x > 0)


def test_quadrature_cdf_matches_closed_form():
    x = np.concatenate([np.geomspace(1e-3, 50, 200), [1.0]])
    for c in (0.3, 1.0, 2.0, 5.0):
        assert np.max(np.abs(m_infinity_cdf(c, x) - m_infinity_cdf_closed(c, x))) < 1e-10


# --- A_c(t) ------------------------------------------------------------------------------


@pytest.mark.parametrize("c,t", [(1.0, 2.0), (2.0, 3.0), (0.5, 4.0)])
@pytest.mark.parametrize("method", ["event", "mixture"])
def test_atom_mass(c, t, method):
    n = 10**5
    b = sample_A_batch(c, t, gen("atom", method, c, t), size=n, method=method)
    p = math.exp(-c * (t - c))
    assert abs(b.hit_atom.mean() - p) <= 4 * binomial_se(p, n)


def test_atom_at_c_one_t_two_single_draws():
    g = gen("single")
    hits = [sample_A(1.0, 2.0, g).hit_atom for _ in range(100000)]
    assert abs(np.mean(hits) - math.exp(-1)) < 0.003


def test_zero_budget_is_the_atom():
    s = sample_A(1.0, 1.0, gen("zero"))
    assert s.value == 1.0 and s.jumps == 0 and s.hit_atom
    b = sample_A_batch(1.0, 1.0, gen("zero"), size=100)
    assert np.all(b.values == 1.0) and np.all(b.jumps == 0)


@pytest.mark.parametrize("method", ["event", "mixture"])
def test_atom_is_exact(method):
    b = sample_A_batch(1.0, 1.5, gen("exact", method), size=10**5, method=method)
    assert np.all(b.values >= 1.0)
    between = (b.values > 1.0) & (b.values < 1.0 + 1e-12)
    assert not between.any()
    assert np.array_equal(b.hit_atom, b.values == 1.0)


@pytest.mark.parametrize("c,t", [(1.0, 3.0), (0.5, 2.0), (2.0, 2.5)])
@pytest.mark.parametrize("method", ["event", "mixture"])
def test_martingale_mean(c, t, method):
    v = sample_A_batch(c, t, gen("mean", method, c, t), size=10**5, method=method).values
    se = v.std(ddof=1) / math.sqrt(v.size)
    assert abs(v.mean() - t) <= 4 * se


@pytest.mark.parametrize("c,t", [(1.0, 2.0), (0.3, 3.0), (2.0, 4.0), (1.0, 8.0)])
def test_event_and_mixture_routes_agree(c, t):
    a = sample_A_batch(c, t, gen("ev", c, t), size=40000, method="event")
    b = sample_A_batch(c, t, gen("mx", c, t), size=40000, method="mixture")
    la, lb = a.values[~a.hit_atom], b.values[~b.hit_atom]
    assert stats.ks_2samp(la, lb).pvalue > 1e-3
    assert abs(a.jumps.mean() - b.jumps.mean()) < 4 * math.hypot(a.jumps.std(), b.jumps.std()) / 200


def test_single_draw_sampler_matches_batch():
    g = gen("scalar")
    one = np.array([sample_A(1.0, 3.0, g).value for _ in range(20000)])
    many = sample_A_batch(1.0, 3.0, gen("vector"), size=20000, method="event").values
    assert stats.ks_2samp(one, many).pvalue > 1e-3


def test_conditional_tail_lower_bound():
    b = sample_A_batch(1.0, 2.0, gen("tail"), size=10**5)
    jumped = b.values[~b.hit_atom]
    p = np.mean(jumped >= 2.0)
    assert p >= math.exp(-2.0) - 4 * binomial_se(p, jumped.size)


def test_stochastic_monotonicity_in_t():
    grid = np.linspace(1.0, 10.0, 50)
    n = 50000
    f1 = ecdf(sample_A_batch(1.0, 2.0, gen("mono", 1), size=n).values, grid)
    f2 = ecdf(sample_A_batch(1.0, 3.0, gen("mono", 2), size=n).values, grid)
    se = np.sqrt(f1 * (1 - f1) / n + f2 * (1 - f2) / n)
    assert np.all(f2 <= f1 + 4 * se + 1e-12)


def test_array_of_t():
    t = np.array([1.0, 2.0, 5.0])
    b = sample_A_batch(1.0, t, gen("arr"))
    assert b.values.shape == (3,) and b.values[0] == 1.0


def test_reproducibility():
    a = sample_A_batch(1.0, 4.0, RngStream(9, ("r",)), size=1000, method="event").values
    b = sample_A_batch(1.0, 4.0, RngStream(9, ("r",)), size=1000, method="event").values
    assert np.array_equal(a, b)


@pytest.mark.parametrize("c,t", [(1.0, 0.5), (-1.0, 2.0), (0.0, 1.0)])
def test_domain_errors(c, t):
    with pytest.raises(ValueError):
        sample_A_batch(c, t, gen("err"), size=3)


def test_convergence_toward_limit_law():
    res = convergence_check(1.0, [1.0, 2.0, 10.0, 100.0], 20000, RngStream(4))
    ks = [d for _, d in res]
    # t = c is the point mass at 1: distance is the larger CDF gap at 1, reported only
    assert ks[0] == pytest.approx(max(m_infinity_cdf(1.0, 1.0)[0], 1 - m_infinity_cdf(1.0, 1.0)[0]), abs=1e-3)
    assert ks[1] > ks[2] > ks[3] - 0.01
    assert ks[3] < 0.02


@settings(max_examples=30, deadline=None)
@given(c=st.floats(0.1, 5.0), extra=st.floats(0.0, 20.0), seed=st.integers(0, 2**32))
def test_values_never_below_c(c, extra, seed):
    b = sample_A_batch(c, c + extra, RngStream(seed), size=200)
    assert np.all(b.values >= c)
    assert np.array_equal(b.hit_atom, b.values == c)


# --- KS helpers -----------------------------------------------------------------------------


def test_ks_distance_against_scipy():
    x = gen("ks").normal(size=3000)
    assert ks_distance(x, stats.norm.cdf) == pytest.approx(stats.kstest(x, "norm").statistic, abs=1e-12)
    y = gen("ks2").normal(0.1, size=2000)
    assert ks_2samp_distance(x, y) == pytest.approx(stats.ks_2samp(x, y).statistic, abs=1e-12)


def test_ks_distance_handles_ties():
    x = np.array([1.0] * 10)
    assert ks_distance(x, lambda s: np.where(s >= 1, 0.3, 0.0) + 0.0) == pytest.approx(0.7)


def test_mean_at_t_three_to_two_hundredths():
    # sd of A_1(3) is about 2.7, so a 0.02 band needs more than 10^5 draws to be a 4 s.e. statement
    v = sample_A_batch(1.0, 3.0, gen("mean3"), size=10**6).values
    assert abs(v.mean() - 3) < 0.02
    assert 4 * v.std() / math.sqrt(v.size) < 0.02
