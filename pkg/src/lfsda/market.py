"""Linear-bid double auction: bid construction, exact clearing and allocation.

An agent bids a pair (alpha, beta). At price p it sells max(beta*p - alpha, 0)
and buys max(alpha - beta*p, 0). Delivered supply is discounted by the
transmission efficiency gamma, so the market clears where

    F(p) = gamma * sum max(beta*p - alpha, 0) - sum max(alpha - beta*p, 0) = 0.

F is piecewise linear and nondecreasing with kinks at alpha/beta; the root is
found by scanning the sorted kinks and solving the bracketing segment in
closed form.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import DomainError, StructuralError


@dataclass(frozen=True)
class Bid:
    alpha: float
    beta: float

    def __post_init__(self):
        if not self.beta > 0:
            raise DomainError(f"bid slope must be positive, got {self.beta}")

    @property
    def breakpoint(self):
        return self.alpha / self.beta


def supply(bid, p):
    return max(bid.beta * p - bid.alpha, 0.0)


def demand(bid, p):
    return max(bid.alpha - bid.beta * p, 0.0)


def bid_from_allocation(m_plus, m_minus, beta, price):
    """The unique bid whose response at ``price`` is (m_plus, m_minus)."""
    if m_plus > 0 and m_minus > 0:
        raise DomainError("bid needs netted quantities: m_plus and m_minus both positive")
    if m_plus < 0 or m_minus < 0:
        raise DomainError("market quantities must be nonnegative")
    return Bid(beta * price + (m_minus - m_plus), beta)


def _arrays(bids):
    if len(bids) == 0:
        raise StructuralError("clearing needs at least one bid")
    alpha = np.array([b.alpha for b in bids], dtype=float)
    beta = np.array([b.beta for b in bids], dtype=float)
    return alpha, beta


def excess_function(bids, gamma, p):
    """Discounted supply minus demand at price ``p``."""
    alpha, beta = _arrays(bids)
    sold = np.maximum(beta * p - alpha, 0.0)
    bought = np.maximum(alpha - beta * p, 0.0)
    return float(gamma * sold.sum() - bought.sum())


@dataclass(frozen=True, eq=False)
class ClearingResult:
    price: float
    sellers: tuple
    buyers: tuple
    m_plus: np.ndarray
    m_minus: np.ndarray
    theta_bar: float
    excess_at_price: float
    diagnostics: tuple = ()

    @property
    def allocations(self):
        return list(zip(self.m_plus.tolist(), self.m_minus.tolist()))


def market_clearing(bids, gamma, p_grid_buy=None):
    """Clear the auction exactly.

    Returns the price where discounted supply meets demand, the realized
    seller/buyer split (an agent with alpha/beta == price counts as a seller),
    the allocations and the effective step 1/(gamma*beta_sellers + beta_buyers).
    When F vanishes on a whole interval the lowest root is returned.
    """
    if not 0.0 <= gamma <= 1.0:
        raise DomainError(f"gamma must lie in [0, 1], got {gamma}")
    alpha, beta = _arrays(bids)
    r = alpha / beta
    order = np.argsort(r, kind="stable")
    rs, a_sorted, b_sorted = r[order], alpha[order], beta[order]
    # prefix sums: agents [0, c) in sorted order are sellers
    A = np.concatenate(([0.0], np.cumsum(a_sorted)))
    B = np.concatenate(([0.0], np.cumsum(b_sorted)))
    a_tot, b_tot = A[-1], B[-1]

    def seg_root(c):
        num = gamma * A[c] + (a_tot - A[c])
        den = gamma * B[c] + (b_tot - B[c])
        return num / den

    # F at each kink, with every agent whose kink is <= p selling
    counts = np.searchsorted(rs, rs, side="right")
    F = gamma * (rs * B[counts] - A[counts]) - ((a_tot - A[counts]) - rs * (b_tot - B[counts]))
    neg = np.flatnonzero(F < 0)
    if neg.size == 0:
        # root left of (or at) the first kink, where everyone buys
        price = min(seg_root(0), rs[0])
    else:
        k = int(neg[-1])
        # F(max kink) >= 0 since nobody buys there
        c = int(counts[k])
        if c >= rs.size:
            # roundoff at the top kink, where demand is exactly zero
            price = rs[-1]
        else:
            price = min(max(seg_root(c), rs[k]), rs[c])

    is_seller = r <= price
    m_plus = np.maximum(beta * price - alpha, 0.0)
    m_minus = np.maximum(alpha - beta * price, 0.0)
    m_plus[~is_seller] = 0.0
    m_minus[is_seller] = 0.0
    den = gamma * beta[is_seller].sum() + beta[~is_seller].sum()
    diags = []
    if price < 0:
        diags.append(f"negative clearing price {price:.6g}")
    if p_grid_buy is not None and price > p_grid_buy:
        diags.append(f"clearing price {price:.6g} above grid purchase price {p_grid_buy:.6g}")
    return ClearingResult(
        price=float(price),
        sellers=tuple(int(i) for i in np.flatnonzero(is_seller)),
        buyers=tuple(int(i) for i in np.flatnonzero(~is_seller)),
        m_plus=m_plus,
        m_minus=m_minus,
        theta_bar=float(1.0 / den) if den > 0 else float("inf"),
        excess_at_price=float(gamma * m_plus.sum() - m_minus.sum()),
        diagnostics=tuple(diags),
    )
