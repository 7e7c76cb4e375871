"""Utility, generation cost and welfare of agents and of the whole network."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import DomainError, StructuralError
from .model import check_prices


def demand_utility(l, omega, theta):
    """Saturating quadratic utility of consuming ``l``.

    omega*l - theta/2*l**2 up to the satiation point omega/theta, constant
    omega**2/(2*theta) beyond it. Works elementwise on arrays.
    """
    l = np.asarray(l, dtype=float)
    omega = np.asarray(omega, dtype=float)
    theta = np.asarray(theta, dtype=float)
    if np.any(l < 0):
        raise DomainError("demand_utility is defined for l >= 0 only")
    if np.any(theta <= 0):
        raise DomainError("theta must be positive")
    sat = omega / theta
    u = np.where(l <= sat, omega * l - 0.5 * theta * l * l, omega * omega / (2.0 * theta))
    return u if u.ndim else float(u)


def demand_marginal(l, omega, theta):
    """Derivative of :func:`demand_utility`; continuous, zero past satiation."""
    l = np.asarray(l, dtype=float)
    d = np.maximum(np.asarray(omega, dtype=float) - np.asarray(theta, dtype=float) * l, 0.0)
    return d if d.ndim else float(d)


def generation_cost(l, linear=0.0, quadratic=0.0, cap=np.inf):
    """Convex generation cost linear*l + quadratic/2*l**2 on [0, cap].

    PV generation has both coefficients zero, so the cost vanishes.
    """
    l = np.asarray(l, dtype=float)
    if np.any(l < 0) or np.any(l > np.asarray(cap, dtype=float)):
        raise DomainError("generation outside [0, cap]")
    c = np.asarray(linear, dtype=float) * l + 0.5 * np.asarray(quadratic, dtype=float) * l * l
    return c if c.ndim else float(c)


@dataclass(frozen=True)
class WelfareBreakdown:
    demand_utility: float
    generation_cost: float
    grid_revenue: float
    grid_expense: float
    market_revenue: float
    market_expense: float

    @property
    def intrinsic(self):
        """Welfare excluding internal market payments (phi_i)."""
        return self.demand_utility - self.generation_cost + self.grid_revenue - self.grid_expense

    @property
    def total(self):
        return self.intrinsic + self.market_revenue - self.market_expense


def _slot_terms(state, prices, params, net):
    if state.T != params.T or net.T != params.T:
        raise StructuralError("state, params and network must share the same T")
    p = check_prices(prices, params.T)
    # clip roundoff-sized negatives so the utility domain check does not trip
    l_plus = np.where(np.abs(state.l_plus) < 1e-15, 0.0, state.l_plus)
    D = demand_utility(l_plus, params.utility_omega, params.utility_theta)
    C = params.cost_linear * state.l_minus + 0.5 * params.cost_quadratic * state.l_minus ** 2
    return {
        "demand_utility": D,
        "generation_cost": C,
        "grid_revenue": net.p_grid_sell * state.g_plus,
        "grid_expense": net.p_grid_buy * state.g_minus,
        # sellers receive gamma*p per unit sold, buyers pay p
        "market_revenue": p * net.gamma * state.m_plus,
        "market_expense": p * state.m_minus,
    }


def agent_welfare(state, prices, params, net):
    terms = _slot_terms(state, prices, params, net)
    return WelfareBreakdown(**{k: float(np.sum(v)) for k, v in terms.items()})


def agent_welfare_by_slot(state, prices, params, net):
    """Per-slot welfare W_i^t as an array."""
    t = _slot_terms(state, prices, params, net)
    return (t["demand_utility"] - t["generation_cost"] + t["grid_revenue"] - t["grid_expense"]
            + t["market_revenue"] - t["market_expense"])


def intrinsic_welfare(state, params, net):
    """phi_i(x_i): welfare without market payments, independent of the market price."""
    zero = np.zeros(params.T)
    return agent_welfare(state, zero, params, net).intrinsic


def social_welfare(states, prices, params_list, net):
    """Sum of agent welfares, reduced in agent order."""
    if len(states) != len(params_list):
        raise StructuralError("need one parameter set per state")
    total = 0.0
    for st, pa in zip(states, params_list):
        total += agent_welfare(st, prices, pa, net).total
    return total


def network_imbalance(states, gamma):
    """xi_t = sum_i (gamma*m_plus - m_minus) per slot, reduced in agent order."""
    xi = np.zeros(states[0].T)
    for st in states:
        xi = xi + st.market_injection(gamma)
    return xi


def lagrangian(state, prices, params, net):
    """The sub-problem objective L_i(x) = phi_i(x) + sum_t p_t (gamma*m_plus - m_minus).

    Identical to the agent's own welfare at price ``prices``.
    """
    return agent_welfare(state, prices, params, net).total
