"""Welfare-maximizing joint allocation, used as the reference optimum.

The joint concave program is handed to cvxpy. Its solution is made exactly
balanced by shrinking the long side of each slot's market, after which every
agent re-plans around its market quantities with the exact sub-problem
solver. An upper bound on the optimum comes from the dual function evaluated
at the coupling multipliers, so the reported gap is certified.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import SolverError, StructuralError
from .model import AgentState
from .solver import SolverConfig, reconfigure, solve_subproblem
from .welfare import intrinsic_welfare, network_imbalance


@dataclass(frozen=True, eq=False)
class CentralizedResult:
    states: tuple
    social_welfare: float      # sum of intrinsic welfare of the restored allocation
    agent_welfare: np.ndarray  # intrinsic welfare per agent
    prices: np.ndarray         # coupling multipliers used for the bound
    upper_bound: float
    duality_gap: float
    solver_objective: float    # objective reported by the joint solver, before restoration
    status: str


def _joint_problem(params_list, net):
    import cvxpy as cp

    T = net.T
    g = net.gamma
    cons = []
    obj = 0
    market = []
    vars_ = []
    for pa in params_list:
        x = cp.Variable((8, T), nonneg=True)
        u = cp.Variable(T)
        lp, lm, bp, bm, mp, mm, gp, gm = (x[k] for k in range(8))
        soc = pa.s_init + cp.cumsum(pa.eta * bp - bm)
        sat = pa.utility_omega / pa.utility_theta
        cons += [
            u <= lp, u <= sat, lp >= pa.l_plus_min,
            lm <= pa.l_minus_max, bp <= pa.b_plus_max, bm <= pa.b_minus_max,
            mp <= pa.m_plus_max, mm <= pa.m_minus_max, gm <= pa.g_minus_max,
            soc >= 0, soc <= pa.s_max,
            lp - lm + bp - bm + mp - mm + gp - gm == 0,
        ]
        # saturating utility as the best value of a capped quadratic below l_plus
        obj += cp.sum(cp.multiply(pa.utility_omega, u)
                      - cp.multiply(pa.utility_theta / 2, cp.square(u)))
        obj -= cp.sum(cp.multiply(pa.cost_linear, lm)
                      + cp.multiply(pa.cost_quadratic / 2, cp.square(lm)))
        obj += net.p_grid_sell @ gp - net.p_grid_buy @ gm
        market.append(g * mp - mm)
        vars_.append(x)
    balance = cp.sum(cp.vstack(market), axis=0) == 0
    prob = cp.Problem(cp.Maximize(obj), cons + [balance])
    return prob, vars_, balance


def _restore_balance(m_plus, m_minus, gamma):
    """Scale the long side of every slot so gamma*sum(m_plus) == sum(m_minus)."""
    m_plus = np.clip(m_plus, 0.0, None)
    m_minus = np.clip(m_minus, 0.0, None)
    for t in range(m_plus.shape[1]):
        sup = gamma * m_plus[:, t].sum()
        dem = m_minus[:, t].sum()
        if sup > dem:
            m_plus[:, t] *= dem / sup if sup > 0 else 0.0
        elif dem > sup:
            m_minus[:, t] *= sup / dem if dem > 0 else 0.0
    return m_plus, m_minus


def dual_value(prices, params_list, net, solver_cfg=None):
    """Sum of sub-problem optima at ``prices``: an upper bound on the optimum."""
    return sum(solve_subproblem(prices, pa, net, solver_cfg).objective for pa in params_list)


def solve_centralized_optimal(params_list, net, solver_cfg=None, cvx_solver="CLARABEL"):
    if len(params_list) != net.agent_count:
        raise StructuralError(f"{len(params_list)} agents but agent_count={net.agent_count}")
    solver_cfg = solver_cfg or SolverConfig()
    prob, vars_, balance = _joint_problem(params_list, net)
    try:
        prob.solve(solver=cvx_solver)
    except Exception as exc:  # solver backends raise their own error types
        raise SolverError(f"joint solve failed: {exc}") from exc
    if prob.status not in ("optimal", "optimal_inaccurate") or vars_[0].value is None:
        raise SolverError(f"joint solve ended with status {prob.status}")

    X = np.array([v.value for v in vars_])  # (N, 8, T)
    m_plus, m_minus = _restore_balance(X[:, 4, :].copy(), X[:, 5, :].copy(), net.gamma)
    N = len(params_list)
    for i, pa in enumerate(params_list):
        m_plus[i] = np.minimum(m_plus[i], pa.m_plus_max)
        m_minus[i] = np.minimum(m_minus[i], pa.m_minus_max)
    lam = np.asarray(balance.dual_value, dtype=float).reshape(net.T)

    states = []
    for i, pa in enumerate(params_list):
        sol = reconfigure(None, m_plus[i], m_minus[i], lam, pa, net, solver_cfg)
        states.append(sol.state)
    phi = np.array([intrinsic_welfare(st, pa, net) for st, pa in zip(states, params_list)])
    welfare = sum(phi.tolist())

    # any price profile bounds the optimum from above; the multiplier sign
    # convention differs between backends, so both signs are tried
    bounds = [(dual_value(sign * lam, params_list, net, solver_cfg), sign) for sign in (1.0, -1.0)]
    bound, sign = min(bounds)
    lam = sign * lam
    states = tuple(states)
    xi = network_imbalance(states, net.gamma)
    if np.max(np.abs(xi)) > 1e-9:
        raise SolverError(f"restored allocation is unbalanced by {np.max(np.abs(xi)):.3g}")
    return CentralizedResult(states=states, social_welfare=welfare, agent_welfare=phi,
                             prices=lam, upper_bound=bound,
                             duality_gap=max(bound - welfare, 0.0),
                             solver_objective=float(prob.value), status=prob.status)
