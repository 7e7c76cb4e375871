"""Exhaustive lattice search over a tiny sub-problem, used to cross-check the solver.

Each slot is described by four netted coordinates: consumption, generation,
battery net flow (charge positive) and market net flow (sale positive). Grid
exchange closes the flow balance. Slots couple only through the battery, so
the search first keeps, per slot and battery lattice value, the best choice of
the other coordinates, then enumerates battery schedules across slots.
"""
from __future__ import annotations

import itertools

import numpy as np

from .errors import LatticeTooLarge, StructuralError
from .model import AgentState, check_prices
from .solver import SubproblemSolution, kkt_residual
from .welfare import demand_utility, lagrangian

MAX_LATTICE = 20_000_000


def _axis(lo, hi, n, with_zero=False):
    if hi <= lo:
        pts = np.array([lo])
    else:
        pts = np.linspace(lo, hi, n)
    if with_zero and lo <= 0 <= hi:
        pts = np.union1d(pts, [0.0])
    return pts


def _axes(params, t, n):
    sat = max(params.l_plus_min[t], params.utility_omega[t] / params.utility_theta[t])
    return (
        _axis(params.l_plus_min[t], sat, n),
        _axis(0.0, params.l_minus_max[t], n, with_zero=True),
        _axis(-params.b_minus_max, params.b_plus_max, n, with_zero=True),
        _axis(-params.m_minus_max, params.m_plus_max, n, with_zero=True),
    )


def lattice_size(params, resolution):
    per_slot = [[a.size for a in _axes(params, t, resolution)] for t in range(params.T)]
    inner = sum(int(np.prod(s)) for s in per_slot)
    outer = int(np.prod([s[2] for s in per_slot]))
    return inner + outer


def lattice_tolerance(prices, params, net, resolution):
    """Upper bound on how far the best lattice point can fall below the true optimum."""
    p = check_prices(prices, params.T)
    total = 0.0
    for t in range(params.T):
        steps = [a[1] - a[0] if a.size > 1 else 0.0 for a in _axes(params, t, resolution)]
        h_lp, h_lm, h_b, h_m = steps
        slope_gen = params.cost_linear[t] + params.cost_quadratic[t] * params.l_minus_max[t]
        grid = max(net.p_grid_buy[t], abs(net.p_grid_sell[t]))
        total += (params.utility_omega[t] * h_lp + slope_gen * h_lm + abs(p[t]) * h_m
                  + grid * (h_lp + h_lm + h_b + h_m))
    return total


def brute_force_oracle(prices, params, net, grid_resolution=11, max_size=MAX_LATTICE):
    """Best feasible lattice point of the sub-problem at the given prices."""
    T = params.T
    if net.T != T:
        raise StructuralError("network and agent horizons differ")
    p = check_prices(prices, T)
    size = lattice_size(params, grid_resolution)
    if size > max_size:
        raise LatticeTooLarge(f"lattice of {size} points exceeds the limit {max_size}", size=size)

    gamma = net.gamma
    best_val, best_arg, b_axes = [], [], []
    for t in range(T):
        lp, lm, b, m = _axes(params, t, grid_resolution)
        LP, LM, B, M = np.meshgrid(lp, lm, b, m, indexing="ij")
        g = LM - LP - B - M  # grid net, sale positive
        ok = g >= -params.g_minus_max
        val = (demand_utility(LP, params.utility_omega[t], params.utility_theta[t])
               - params.cost_linear[t] * LM - 0.5 * params.cost_quadratic[t] * LM ** 2
               + np.where(g > 0, net.p_grid_sell[t] * g, net.p_grid_buy[t] * g)
               + np.where(M > 0, gamma * p[t] * M, p[t] * M))
        val = np.where(ok, val, -np.inf)
        val = np.moveaxis(val, 2, 0).reshape(b.size, -1)
        idx = np.argmax(val, axis=1)
        best_val.append(val[np.arange(b.size), idx])
        best_arg.append((idx, (lp.size, lm.size, m.size), (lp, lm, m)))
        b_axes.append(b)

    top, top_combo = -np.inf, None
    for combo in itertools.product(*(range(b.size) for b in b_axes)):
        s = params.s_init
        total = 0.0
        for t, j in enumerate(combo):
            bn = b_axes[t][j]
            s = s + (params.eta * bn if bn > 0 else bn)
            if s < -1e-12 or s > params.s_max + 1e-12:
                total = -np.inf
                break
            total += best_val[t][j]
        if total > top:
            top, top_combo = total, combo

    flows = {k: np.zeros(T) for k in ("l_plus", "l_minus", "b_plus", "b_minus",
                                      "m_plus", "m_minus", "g_plus", "g_minus")}
    if top_combo is None or not np.isfinite(top):
        raise LatticeTooLarge("no feasible lattice point; refine the resolution", size=size)
    for t, j in enumerate(top_combo):
        idx, shape, (lp, lm, m) = best_arg[t]
        i_lp, i_lm, i_m = np.unravel_index(idx[j], shape)
        bn = b_axes[t][j]
        mn = m[i_m]
        g = lm[i_lm] - lp[i_lp] - bn - mn
        flows["l_plus"][t] = lp[i_lp]
        flows["l_minus"][t] = lm[i_lm]
        flows["b_plus"][t] = max(bn, 0.0)
        flows["b_minus"][t] = max(-bn, 0.0)
        flows["m_plus"][t] = max(mn, 0.0)
        flows["m_minus"][t] = max(-mn, 0.0)
        flows["g_plus"][t] = max(g, 0.0)
        flows["g_minus"][t] = max(-g, 0.0)
    state = AgentState(**flows)
    res, lam, psi = kkt_residual(state, p, params, net)
    return SubproblemSolution(state=state, objective=lagrangian(state, p, params, net),
                              kkt_residual=res, iterations=size, bus_price=lam, soc_value=psi)
