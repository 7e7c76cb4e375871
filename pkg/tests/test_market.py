import numpy as np
import pytest
from hypothesis import assume, given, settings, strategies as st

from lfsda.errors import DomainError
from lfsda.market import (Bid, bid_from_allocation, demand, excess_function, market_clearing,
                          supply)
from lfsda.verification import bisection_root, random_bids


@pytest.mark.parametrize("mp,mm,beta,p,alpha", [(0, 2, 0.5, 4, 4.0), (1, 0, 0.5, 4, 1.0),
                                                 (0, 0, 0.5, 4, 2.0)])
def test_bid_examples(mp, mm, beta, p, alpha):
    b = bid_from_allocation(mp, mm, beta, p)
    assert b.alpha == alpha
    assert supply(b, p) == mp and demand(b, p) == mm


def test_bid_rejects_unnetted_quantities():
    with pytest.raises(DomainError):
        bid_from_allocation(1.0, 0.5, 0.5, 3.0)
    with pytest.raises(DomainError):
        Bid(1.0, 0.0)


@settings(max_examples=300, deadline=None)
@given(st.floats(0, 5), st.booleans(), st.floats(0.01, 3), st.floats(-20, 20))
def test_bid_roundtrip(q, sell, beta, p):
    mp, mm = (q, 0.0) if sell else (0.0, q)
    b = bid_from_allocation(mp, mm, beta, p)
    assert supply(b, p) == pytest.approx(mp, abs=1e-12)
    assert demand(b, p) == pytest.approx(mm, abs=1e-12)


def test_excess_examples():
    bids = [Bid(-1, 1), Bid(1, 1)]
    assert excess_function(bids, 1.0, 0.0) == 0.0
    assert excess_function(bids, 1.0, 2.0) == 4.0  # both bids sell at p=2
    buyers = [Bid(3, 1), Bid(2, 0.5)]
    assert excess_function(buyers, 0.8, 0.0) == -5.0


def test_clearing_examples():
    r = market_clearing([Bid(-1, 1), Bid(1, 1)], 1.0)
    assert r.price == 0.0
    assert r.m_plus.tolist() == [1.0, 0.0] and r.m_minus.tolist() == [0.0, 1.0]
    r = market_clearing([Bid(-1, 1), Bid(1, 1)], 0.8)
    assert r.price == pytest.approx(1 / 9, abs=1e-15)
    assert 0.8 * r.m_plus.sum() == pytest.approx(r.m_minus.sum(), abs=1e-15)
    assert r.theta_bar == pytest.approx(1 / 1.8)


def test_identical_no_trade_bids_keep_price():
    r = market_clearing([Bid(0.5 * 7.0, 0.5)] * 5, 0.8)
    assert r.price == 7.0
    assert not r.m_plus.any() and not r.m_minus.any()
    assert r.sellers == (0, 1, 2, 3, 4)          # boundary agents count as sellers


def test_flat_zero_returns_lowest_root():
    # gamma = 0: sellers deliver nothing, F vanishes once every buyer drops out
    bids = [Bid(2.0, 1.0), Bid(4.0, 1.0)]
    r = market_clearing(bids, 0.0)
    assert r.price == 4.0
    assert excess_function(bids, 0.0, r.price - 1e-9) < 0


def test_negative_price_is_diagnosed_not_clamped():
    r = market_clearing([Bid(-3, 1), Bid(-1, 1)], 1.0)
    assert r.price < 0
    assert r.diagnostics
    assert abs(r.excess_at_price) <= 1e-12


def test_price_above_grid_is_diagnosed():
    r = market_clearing([Bid(30, 1)], 1.0, p_grid_buy=20.0)
    assert r.price == 30.0 and r.diagnostics


def test_random_sets_match_bisection():
    rng = np.random.default_rng(7)
    for _ in range(300):
        n = int(rng.integers(1, 51))
        gamma = float(rng.choice([0.5, 0.8, 1.0]))
        bids = random_bids(rng, n)
        r = market_clearing(bids, gamma)
        assert abs(r.price - bisection_root(bids, gamma)) <= 1e-9
        assert abs(excess_function(bids, gamma, r.price)) <= 1e-9


bids_st = st.lists(st.tuples(st.floats(-10, 10), st.floats(0.05, 3)), min_size=1, max_size=30)


@settings(max_examples=200, deadline=None)
@given(bids_st, st.sampled_from([0.5, 0.8, 1.0]), st.floats(-15, 15), st.floats(0, 5))
def test_excess_nondecreasing(raw, gamma, p, dp):
    bids = [Bid(a, b) for a, b in raw]
    assert excess_function(bids, gamma, p + dp) >= excess_function(bids, gamma, p) - 1e-9


@settings(max_examples=200, deadline=None)
@given(bids_st, st.sampled_from([0.5, 0.8, 1.0]))
def test_partition_reproduces_price(raw, gamma):
    bids = [Bid(a, b) for a, b in raw]
    r = market_clearing(bids, gamma)
    alpha = np.array([b.alpha for b in bids])
    beta = np.array([b.beta for b in bids])
    s, d = list(r.sellers), list(r.buyers)
    assert sorted(s + d) == list(range(len(bids)))
    assert all(alpha[i] / beta[i] <= r.price for i in s)
    assert all(alpha[i] / beta[i] > r.price for i in d)
    num = gamma * alpha[s].sum() + alpha[d].sum()
    den = gamma * beta[s].sum() + beta[d].sum()
    assert num / den == pytest.approx(r.price, abs=1e-12 * max(1.0, abs(r.price)) * 10)
    assert r.theta_bar == pytest.approx(1 / den)
    assert abs(gamma * r.m_plus.sum() - r.m_minus.sum()) <= 1e-9


@settings(max_examples=100, deadline=None)
@given(bids_st, st.sampled_from([0.5, 0.8, 1.0]), st.floats(0.1, 10))
def test_scaling_bids_scales_allocations(raw, gamma, c):
    bids = [Bid(a, b) for a, b in raw]
    scaled = [Bid(c * a, c * b) for a, b in raw]
    r1, r2 = market_clearing(bids, gamma), market_clearing(scaled, gamma)
    assert r2.price == pytest.approx(r1.price, abs=1e-9)
    np.testing.assert_allclose(r2.m_plus, c * r1.m_plus, atol=1e-8)
    np.testing.assert_allclose(r2.m_minus, c * r1.m_minus, atol=1e-8)
