"""Iterative market procedures and the no-trading baseline.

``run_rtp`` is price coordination by subgradient steps on the dual: agents
respond to a posted price profile and the coordinator moves each slot's
price against the market imbalance, covering any leftover imbalance with the
outside grid. ``run_lfsda`` replaces the step by a double auction: each agent
turns its optimal market position into a linear bid, the auction clears
every slot exactly, and agents re-plan around the cleared quantities.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Union

import numpy as np

from .errors import ConfigError, InfeasibleError, SolverError, StructuralError
from .market import bid_from_allocation, market_clearing
from .model import check_prices
from .solver import SolverConfig, reconfigure, solve_subproblem
from .welfare import agent_welfare, intrinsic_welfare, network_imbalance


@dataclass(frozen=True)
class MechanismConfig:
    max_iterations: int = 200
    theta_k: Union[float, Callable[[int], float]] = 0.1
    beta: object = 0.5                # scalar or (N, T) array of bid slopes
    initial_price: object = None      # None: half the grid purchase price
    price_tol: float = 1e-6           # stop once max |p_next - p| falls below
    solver: SolverConfig = field(default_factory=SolverConfig)

    def __post_init__(self):
        if self.max_iterations < 1:
            raise ConfigError("max_iterations must be >= 1")
        if not callable(self.theta_k) and not self.theta_k > 0:
            raise ConfigError("theta_k must be positive")
        if np.any(~(np.asarray(self.beta, dtype=float) > 0)):
            raise ConfigError("beta entries must be positive")

    def step(self, k):
        th = self.theta_k(k) if callable(self.theta_k) else self.theta_k
        if not th > 0:
            raise ConfigError(f"theta_k({k}) must be positive")
        return float(th)

    def beta_matrix(self, N, T):
        b = np.asarray(self.beta, dtype=float)
        try:
            return np.broadcast_to(b, (N, T))
        except ValueError:
            raise StructuralError(f"beta of shape {b.shape} does not fit (N={N}, T={T})") from None

    def start_price(self, net):
        if self.initial_price is None:
            return net.p_grid_buy / 2.0
        return check_prices(np.broadcast_to(np.asarray(self.initial_price, dtype=float),
                                            (net.T,)), net.T).copy()


@dataclass(frozen=True, eq=False)
class IterationRecord:
    iteration: int
    price: np.ndarray                 # profile the agents responded to
    next_price: np.ndarray
    states: tuple
    social_welfare: float             # sum of intrinsic welfare (market payments excluded)
    agent_welfare: np.ndarray         # per agent, market payments at the settlement price
    imbalance: np.ndarray             # sum_i (gamma*m_plus - m_minus) of the recorded states
    dual_value: float = float("nan")  # sum_i of sub-problem optima at ``price``
    welfare_after_compensation: float = float("nan")
    delta_m: np.ndarray = None
    compensation_charge: float = 0.0  # per agent
    subproblem_imbalance: np.ndarray = None
    subproblem_states: tuple = None   # market round only: plans before clearing
    theta_bar: np.ndarray = None
    max_kkt_residual: float = 0.0     # over every sub-problem solved in the iteration
    diagnostics: tuple = ()

    @property
    def max_imbalance(self):
        return float(np.max(np.abs(self.imbalance)))


class MechanismAborted(SolverError):
    """An agent solve failed; ``records`` holds the iterations completed before it."""

    def __init__(self, message, cause, records, iteration, agent):
        super().__init__(message, best=getattr(cause, "best", None),
                         residual=getattr(cause, "residual", None))
        self.cause = cause
        self.records = records
        self.iteration = iteration
        self.agent = agent
        self.slot = getattr(cause, "slot", None)


def _check(params_list, net):
    if len(params_list) == 0:
        raise StructuralError("need at least one agent")
    if len(params_list) != net.agent_count:
        raise StructuralError(f"{len(params_list)} agents but agent_count={net.agent_count}")
    for pa in params_list:
        if pa.T != net.T:
            raise StructuralError("agent and network horizons differ")


def _solve_all(fn, params_list, records, k):
    out = []
    for i, pa in enumerate(params_list):
        try:
            out.append(fn(i, pa))
        except SolverError as exc:
            if isinstance(exc, InfeasibleError):
                exc.agent = i
            raise MechanismAborted(f"iteration {k}, agent {i}: {exc}", exc, records, k, i) from exc
    return out


def compensation_cost(xi, net):
    """Cost of settling the imbalance with the outside grid.

    Surplus (xi > 0) is sold at the grid sale price, deficit bought at the
    grid purchase price.
    """
    surplus = np.maximum(xi, 0.0)
    deficit = np.maximum(-xi, 0.0)
    return float(np.sum(net.p_grid_buy * deficit) - np.sum(net.p_grid_sell * surplus))


def run_rtp(params_list, net, cfg=None):
    """Subgradient price coordination with grid compensation of the imbalance."""
    cfg = cfg or MechanismConfig()
    _check(params_list, net)
    N = len(params_list)
    p = cfg.start_price(net)
    records = []
    for k in range(cfg.max_iterations):
        sols = _solve_all(lambda i, pa: solve_subproblem(p, pa, net, cfg.solver),
                          params_list, records, k)
        states = tuple(s.state for s in sols)
        xi = network_imbalance(states, net.gamma)
        phi = sum(intrinsic_welfare(st, pa, net) for st, pa in zip(states, params_list))
        cost = compensation_cost(xi, net)
        p_next = p - cfg.step(k) * xi
        records.append(IterationRecord(
            iteration=k, price=p.copy(), next_price=p_next, states=states,
            social_welfare=phi,
            agent_welfare=np.array([s.objective for s in sols]),
            imbalance=xi, dual_value=sum(s.objective for s in sols),
            welfare_after_compensation=phi - cost, delta_m=xi.copy(),
            compensation_charge=cost / N, subproblem_imbalance=xi,
            max_kkt_residual=max(s.kkt_residual for s in sols),
            diagnostics=sum((s.diagnostics for s in sols), ())))
        done = np.max(np.abs(p_next - p)) < cfg.price_tol
        p = p_next
        if done:
            break
    return records


def clear_slots(states, prices, beta, gamma, p_grid_buy):
    """Build bids from netted market positions and clear every slot."""
    N, T = beta.shape
    results = []
    for t in range(T):
        bids = []
        for i, st in enumerate(states):
            # net the position so exactly one side is positive
            net_pos = st.m_plus[t] - st.m_minus[t]
            bids.append(bid_from_allocation(max(net_pos, 0.0), max(-net_pos, 0.0),
                                            beta[i, t], prices[t]))
        results.append(market_clearing(bids, gamma, p_grid_buy[t]))
    return results


def run_lfsda(params_list, net, cfg=None):
    """Double-auction price discovery with exact per-slot balance."""
    cfg = cfg or MechanismConfig()
    _check(params_list, net)
    N, T = len(params_list), net.T
    beta = cfg.beta_matrix(N, T)
    p = cfg.start_price(net)
    records = []
    for k in range(cfg.max_iterations):
        sols = _solve_all(lambda i, pa: solve_subproblem(p, pa, net, cfg.solver),
                          params_list, records, k)
        xi_sub = network_imbalance([s.state for s in sols], net.gamma)
        cleared = clear_slots([s.state for s in sols], p, beta, net.gamma, net.p_grid_buy)
        p_next = np.array([c.price for c in cleared])
        m_plus = np.array([c.m_plus for c in cleared]).T    # (N, T)
        m_minus = np.array([c.m_minus for c in cleared]).T
        new = _solve_all(lambda i, pa: reconfigure(sols[i], m_plus[i], m_minus[i], p_next,
                                                   pa, net, cfg.solver),
                         params_list, records, k)
        states = tuple(s.state for s in new)
        diags = sum((c.diagnostics for c in cleared), ()) + sum((s.diagnostics for s in new), ())
        records.append(IterationRecord(
            iteration=k, price=p.copy(), next_price=p_next, states=states,
            social_welfare=sum(intrinsic_welfare(st, pa, net)
                               for st, pa in zip(states, params_list)),
            agent_welfare=np.array([s.objective for s in new]),
            imbalance=network_imbalance(states, net.gamma),
            dual_value=sum(s.objective for s in sols),
            subproblem_imbalance=xi_sub,
            subproblem_states=tuple(s.state for s in sols),
            theta_bar=np.array([c.theta_bar for c in cleared]),
            max_kkt_residual=max(s.kkt_residual for s in sols + new),
            diagnostics=diags))
        done = np.max(np.abs(p_next - p)) < cfg.price_tol
        p = p_next
        if done:
            break
    return records


def run_without_trading(params_list, net, cfg=None):
    """Each agent plans with grid and battery only; one record."""
    cfg = cfg or MechanismConfig()
    _check(params_list, net)
    T = net.T
    p = cfg.start_price(net)
    zero = np.zeros(T)
    sols = _solve_all(lambda i, pa: solve_subproblem(p, pa, net, cfg.solver,
                                                     m_plus_bounds=(zero, zero),
                                                     m_minus_bounds=(zero, zero)),
                      params_list, [], 0)
    states = tuple(s.state for s in sols)
    phi = np.array([intrinsic_welfare(st, pa, net) for st, pa in zip(states, params_list)])
    return [IterationRecord(iteration=0, price=p.copy(), next_price=p.copy(), states=states,
                            social_welfare=sum(phi.tolist()), agent_welfare=phi,
                            imbalance=np.zeros(T), dual_value=sum(phi.tolist()),
                            max_kkt_residual=max(s.kkt_residual for s in sols),
                            diagnostics=sum((s.diagnostics for s in sols), ()))]


def final_agent_welfare(record, params_list, net):
    """Per-agent welfare of a record, settled at its next price."""
    return np.array([agent_welfare(st, record.next_price, pa, net).total
                     for st, pa in zip(record.states, params_list)])
