"""Exact solver for one agent's welfare-maximization sub-problem.

Given a market price profile the agent maximizes

    sum_t D(l+) - C(l-) + pG+ g+ - pG- g- + p*gamma*m+ - p*m-

over its feasible set. Within a slot every device responds to a single
marginal value of energy at the meter (the *bus price*), so the slot's best
net demand as a function of bus price is a monotone piecewise-linear
:class:`~lfsda.curves.Curve`. The battery links the slots; a backward pass
over the state of charge builds the curve of the marginal value of stored
energy, a forward pass then fixes charge/discharge slot by slot. Ties are
broken deterministically (battery flow closest to an anchor, then a fixed
device priority), so identical inputs give bit-identical outputs.

Optimality is certified independently by :func:`kkt_residual`, which
reconstructs multipliers from the primal point alone.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import curves
from .curves import Curve
from .errors import DomainError, InfeasibleError, SolverError, StructuralError
from .model import AgentState, check_prices, constraint_values, soc_trajectory
from .welfare import demand_marginal, lagrangian


@dataclass(frozen=True)
class SolverConfig:
    """Solver settings.

    kkt_tol: largest accepted KKT residual; larger raises :class:`SolverError`.
    g_plus_cap: finite stand-in for the unbounded grid-sale variable.
    active_tol: distance to a bound below which a variable counts as active
        when the KKT certificate is built.
    """

    kkt_tol: float = 1e-7
    g_plus_cap: float = 1e6
    active_tol: float = 1e-9


@dataclass(frozen=True, eq=False)
class SubproblemSolution:
    state: AgentState
    objective: float
    kkt_residual: float
    iterations: int
    bus_price: np.ndarray = field(repr=False)
    soc_value: np.ndarray = field(repr=False)
    diagnostics: tuple = ()


# fill order for devices that are indifferent at the clearing bus price:
# stop buying first, then sell, then dump to grid, curtail generation last
_FILL_ORDER = ("g_minus", "m_minus", "m_plus", "g_plus", "l_plus", "l_minus")
_SIGN = {"l_plus": 1.0, "m_plus": 1.0, "g_plus": 1.0,
         "l_minus": -1.0, "m_minus": -1.0, "g_minus": -1.0}


def _market_bounds(bounds, cap, T, name):
    if bounds is None:
        return np.zeros(T), np.full(T, cap)
    lo, hi = (np.broadcast_to(np.asarray(b, dtype=float), (T,)).copy() for b in bounds)
    if np.any(lo > hi):
        raise DomainError(f"{name}: lower bound above upper bound")
    return lo, hi


def _slot_devices(t, p, params, net, mp, mm, g_plus_cap):
    omega = params.utility_omega[t]
    theta = params.utility_theta[t]
    lmin = params.l_plus_min[t]
    sat = omega / theta
    if lmin >= sat:
        cons = Curve.constant(lmin)
    else:
        cons = Curve.ramp(omega - theta * lmin, lmin, 0.0, sat)

    L = params.l_minus_max[t]
    a, b = params.cost_linear[t], params.cost_quadratic[t]
    if L == 0:
        gen = Curve.constant(0.0)
    elif b > 0:
        gen = Curve.ramp(a + b * L, -L, a, 0.0)
    else:
        gen = Curve.step(a, -L, 0.0)

    return {
        "l_plus": cons,
        "l_minus": gen,
        "m_plus": Curve.step(net.gamma * p[t], mp[0][t], mp[1][t]),
        "m_minus": Curve.step(p[t], -mm[1][t], -mm[0][t]),
        "g_plus": Curve.step(net.p_grid_sell[t], 0.0, g_plus_cap),
        "g_minus": Curve.step(net.p_grid_buy[t], -params.g_minus_max, 0.0),
    }


def _battery_curve(V, params):
    """Curve of SOC drawn in a slot (discharge > 0) against the value of stored energy."""
    discharge = V.clipped(0.0, params.b_minus_max)
    charge = None
    if params.eta > 0 and params.b_plus_max > 0:
        charge = V.clipped(-params.b_plus_max, 0.0)
        if charge is not None:
            # charging n units from the bus stores eta*n, worth lambda/eta per stored unit
            charge = charge.scaled(1.0 / params.eta, params.eta)
    elif discharge is None:
        charge = V.clipped(0.0, 0.0)
    if discharge is None and charge is None:
        return None
    return curves.add(discharge, charge)


def _allocate(devices, n, lam):
    """Split bus demand ``n`` over devices at bus price ``lam``."""
    q = {}
    room = {}
    for name, c in devices.items():
        lo, hi = c.at(lam)
        q[name] = float(lo)
        room[name] = float(hi - lo)
    rem = n - sum(q.values())
    for name in _FILL_ORDER:
        if rem <= 0:
            break
        d = min(rem, room[name])
        q[name] += d
        rem -= d
    return {name: _SIGN[name] * v for name, v in q.items()}


def _solve(prices, params, net, cfg, mp, mm, anchor):
    T = params.T
    p = prices
    devs = [_slot_devices(t, p, params, net, mp, mm, cfg.g_plus_cap) for t in range(T)]
    V = [curves.add(*d.values()) for d in devs]
    W = []
    for t in range(T):
        w = _battery_curve(V[t], params)
        if w is None:
            raise InfeasibleError(
                f"slot {t}: required net flow outside battery limits", slot=t)
        W.append(w)

    s_max = params.s_max
    J = [None] * T
    H = [None] * T
    J[T - 1] = Curve([0.0], [0.0], [s_max])  # leftover charge has no value
    for t in range(T - 1, -1, -1):
        H[t] = curves.add(J[t], W[t])
        if t > 0:
            J[t - 1] = H[t].clipped(0.0, s_max)
            if J[t - 1] is None:
                raise InfeasibleError(f"slot {t}: no state of charge supports the schedule",
                                      slot=t)

    out = {k: np.zeros(T) for k in ("l_plus", "l_minus", "b_plus", "b_minus",
                                    "m_plus", "m_minus", "g_plus", "g_minus")}
    s = params.s_init
    eps = 1e-12 * max(1.0, s_max)
    for t in range(T):
        h = H[t]
        if not h.qmin - eps <= s <= h.qmax + eps:
            raise InfeasibleError(f"slot {t}: state of charge {s:.6g} cannot meet the schedule",
                                  slot=t)
        rho = h.level_at(min(max(s, h.qmin), h.qmax))
        zlo, zhi = W[t].at(rho)
        vlo, vhi = J[t].at(rho)
        lo, hi = max(zlo, s - vhi), min(zhi, s - vlo)
        z = 0.5 * (lo + hi) if lo > hi else min(max(anchor[t], lo), hi)
        if z >= 0:
            bm = min(z, params.b_minus_max)
            bp = 0.0
            n = bm
        else:
            bp = min(-z / params.eta, params.b_plus_max)
            bm = 0.0
            n = -bp
        s = s + params.eta * bp - bm
        v = V[t]
        n_eff = min(max(n, v.qmin), v.qmax)
        lam = v.level_at(n_eff)
        flows = _allocate(devs[t], n_eff, lam)
        for k, val in flows.items():
            out[k][t] = val
        out["b_plus"][t] = bp
        out["b_minus"][t] = bm
    # exact zeros for pinned or absent flows; clear -0.0
    for k in out:
        out[k][out[k] == 0] = 0.0
    return AgentState(**out)


def _finish(state, prices, params, net, cfg, mp, mm, stages):
    # certified against the problem actually solved, i.e. with the g_plus cap
    res, lam, psi = kkt_residual(state, prices, params, net, mp, mm, cfg.active_tol,
                                 cfg.g_plus_cap)
    diags = []
    if np.any(state.g_plus >= cfg.g_plus_cap * (1 - 1e-12)):
        diags.append("g_plus reached its configured cap")
    sol = SubproblemSolution(state=state, objective=lagrangian(state, prices, params, net),
                             kkt_residual=res, iterations=stages, bus_price=lam,
                             soc_value=psi, diagnostics=tuple(diags))
    if not res <= cfg.kkt_tol:
        raise SolverError(f"KKT residual {res:.3g} above tolerance {cfg.kkt_tol:.3g}",
                          best=sol, residual=res)
    return sol


def solve_subproblem(prices, params, net, solver_cfg=None, *, m_plus_bounds=None,
                     m_minus_bounds=None, anchor=None):
    """Maximize the agent's welfare at the given market prices.

    ``m_plus_bounds``/``m_minus_bounds`` optionally replace the default market
    limits [0, cap] by per-slot (lower, upper) profiles. ``anchor`` is the
    preferred battery flow (discharge positive) used to break ties.
    """
    cfg = solver_cfg or SolverConfig()
    if net.T != params.T:
        raise StructuralError("network and agent horizons differ")
    p = check_prices(prices, params.T)
    mp = _market_bounds(m_plus_bounds, params.m_plus_max, params.T, "m_plus")
    mm = _market_bounds(m_minus_bounds, params.m_minus_max, params.T, "m_minus")
    anchor = np.zeros(params.T) if anchor is None else np.asarray(anchor, dtype=float)
    state = _solve(p, params, net, cfg, mp, mm, anchor)
    return _finish(state, p, params, net, cfg, mp, mm, params.T)


def reconfigure(solution, fixed_m_plus, fixed_m_minus, prices, params, net, solver_cfg=None):
    """Re-solve with market quantities pinned to the cleared allocation.

    Among optimal reconfigurations the battery schedule closest to the one in
    ``solution`` is returned.
    """
    T = params.T
    mp = np.asarray(fixed_m_plus, dtype=float)
    mm = np.asarray(fixed_m_minus, dtype=float)
    if mp.shape != (T,) or mm.shape != (T,):
        raise StructuralError("pinned market profiles must have T entries")
    tol = 1e-12
    if (np.any(mp < -tol) or np.any(mm < -tol) or np.any(mp > params.m_plus_max + tol)
            or np.any(mm > params.m_minus_max + tol)):
        raise DomainError("pinned market quantities outside [0, cap]")
    mp = np.clip(mp, 0.0, params.m_plus_max)
    mm = np.clip(mm, 0.0, params.m_minus_max)
    prev = solution.state if isinstance(solution, SubproblemSolution) else solution
    anchor = None
    if prev is not None:
        if prev.T != T:
            raise StructuralError("solution and params horizons differ")
        anchor = prev.b_minus - params.eta * prev.b_plus
    return solve_subproblem(prices, params, net, solver_cfg, m_plus_bounds=(mp, mp),
                            m_minus_bounds=(mm, mm), anchor=anchor)


# ---------------------------------------------------------------------------
# KKT certificate

def objective_gradient(state, prices, params, net):
    """Gradient of the sub-problem objective with respect to the eight flows, shape (8, T)."""
    p = check_prices(prices, params.T)
    zero = np.zeros(params.T)
    return np.stack([
        demand_marginal(state.l_plus, params.utility_omega, params.utility_theta),
        -(params.cost_linear + params.cost_quadratic * state.l_minus),
        zero, zero,
        net.gamma * p, -p,
        net.p_grid_sell + zero, -net.p_grid_buy + zero,
    ])


def _bound_on_lambda(x, lo, hi, a, c, tol):
    """Bounds on the bus price implied by one box variable.

    The variable's reduced gradient is a + c*lam (c = +1 or -1).
    Returns per-slot (lower, upper) limits on lam.
    """
    at_lo = x <= lo + tol
    at_hi = x >= hi - tol
    tau = a if c < 0 else -a
    need_le0 = at_lo & ~at_hi  # gradient <= 0
    need_ge0 = at_hi & ~at_lo
    interior = ~at_lo & ~at_hi
    # c = -1: gradient <= 0  <=>  lam >= tau
    if c < 0:
        lower = np.where(need_le0 | interior, tau, -np.inf)
        upper = np.where(need_ge0 | interior, tau, np.inf)
    else:
        lower = np.where(need_ge0 | interior, tau, -np.inf)
        upper = np.where(need_le0 | interior, tau, np.inf)
    return lower, upper


def _pick(lo, hi):
    if lo > hi:
        return 0.5 * (lo + hi)
    if np.isfinite(lo) and np.isfinite(hi):
        return 0.5 * (lo + hi)
    if np.isfinite(lo):
        return lo
    if np.isfinite(hi):
        return hi
    return 0.0


def _natural(x, g, lo, hi):
    return np.abs(x - np.clip(x + g, lo, hi))


def kkt_residual(state, prices, params, net, m_plus_bounds=None, m_minus_bounds=None,
                 active_tol=1e-9, g_plus_cap=np.inf):
    """Largest violation of primal feasibility, stationarity or complementarity.

    Multipliers are reconstructed from ``state`` alone: every active or
    inactive bound restricts the slot's bus price and the marginal value of
    stored energy to an interval, and the intervals are propagated backward
    through the state-of-charge constraints. Grid sales are unbounded unless
    ``g_plus_cap`` is given. Returns (residual, bus_price, soc_value).
    """
    T = params.T
    p = check_prices(prices, T)
    mp = _market_bounds(m_plus_bounds, params.m_plus_max, T, "m_plus")
    mm = _market_bounds(m_minus_bounds, params.m_minus_max, T, "m_minus")
    x = state
    tol = active_tol
    eta = params.eta
    inf = np.full(T, np.inf)
    zero = np.zeros(T)

    grad = objective_gradient(x, p, params, net)
    # (value, lower, upper, objective gradient, sign in the flow balance)
    devices = [
        (x.l_plus, params.l_plus_min, inf, grad[0], -1),
        (x.l_minus, zero, params.l_minus_max, grad[1], 1),
        (x.m_plus, mp[0], mp[1], grad[4], -1),
        (x.m_minus, mm[0], mm[1], grad[5], 1),
        (x.g_plus, zero, np.full(T, g_plus_cap), grad[6], -1),
        (x.g_minus, zero, np.full(T, params.g_minus_max), grad[7], 1),
    ]
    lam_lo = np.full(T, -np.inf)
    lam_hi = np.full(T, np.inf)
    for v, lo, hi, a, c in devices:
        l_, u_ = _bound_on_lambda(v, lo, hi, a, c, tol)
        lam_lo = np.maximum(lam_lo, l_)
        lam_hi = np.minimum(lam_hi, u_)

    bp_lo, bp_hi = x.b_plus <= tol, x.b_plus >= params.b_plus_max - tol
    bm_lo, bm_hi = x.b_minus <= tol, x.b_minus >= params.b_minus_max - tol
    s = soc_trajectory(x, params)
    s_lo, s_hi = s <= tol, s >= params.s_max - tol

    def lam_terms(t):
        # lam >= c*psi + k (lower) and lam <= c*psi + k (upper), as (c, k)
        lower = [(0.0, lam_lo[t])]
        upper = [(0.0, lam_hi[t])]
        # b_plus gradient: -lam + eta*psi ; b_minus gradient: lam - psi
        if not (bp_lo[t] and bp_hi[t]):
            if bp_lo[t] or not bp_hi[t]:
                lower.append((eta, 0.0))
            if bp_hi[t] or not bp_lo[t]:
                upper.append((eta, 0.0))
        if not (bm_lo[t] and bm_hi[t]):
            if bm_hi[t] or not bm_lo[t]:
                lower.append((1.0, 0.0))
            if bm_lo[t] or not bm_hi[t]:
                upper.append((1.0, 0.0))
        return lower, upper

    def psi_interval(t):
        lower, upper = lam_terms(t)
        lo, hi = -np.inf, np.inf
        for cl, kl in lower:
            for cu, ku in upper:
                dc, dk = cl - cu, ku - kl
                if dc > 0:
                    hi = min(hi, dk / dc)
                elif dc < 0:
                    lo = max(lo, dk / dc)
        return lo, hi

    def as_interval(lo, hi):
        if lo > hi:
            m = 0.5 * (lo + hi)
            return m, m
        return lo, hi

    # backward: feasible marginal values of stored energy
    Psi = [None] * T
    nxt = (0.0, 0.0)
    for t in range(T - 1, -1, -1):
        plo, phi = psi_interval(t)
        if s_lo[t] and s_hi[t]:
            rlo, rhi = -np.inf, np.inf
        elif s_lo[t]:
            rlo, rhi = nxt[0], np.inf
        elif s_hi[t]:
            rlo, rhi = -np.inf, nxt[1]
        else:
            rlo, rhi = nxt
        Psi[t] = as_interval(max(plo, rlo), min(phi, rhi))
        nxt = Psi[t]

    psi = np.zeros(T)
    lam = np.zeros(T)
    psi[0] = _pick(*Psi[0])
    for t in range(T):
        if t > 0:
            prev = psi[t - 1]
            lo, hi = Psi[t]
            k = t - 1
            if s_lo[k] and s_hi[k]:
                pass
            elif s_lo[k]:
                hi = min(hi, prev)
            elif s_hi[k]:
                lo = max(lo, prev)
            else:
                lo, hi = prev, prev
            psi[t] = min(max(prev, lo), hi) if lo <= hi else 0.5 * (lo + hi)
        lower, upper = lam_terms(t)
        lo = max(c * psi[t] + k for c, k in lower)
        hi = min(c * psi[t] + k for c, k in upper)
        lam[t] = _pick(lo, hi)

    res = 0.0
    for v, lo, hi, a, c in devices:
        res = max(res, float(np.max(_natural(v, a + c * lam, lo, hi))))
    res = max(res, float(np.max(_natural(x.b_plus, -lam + eta * psi, 0.0, params.b_plus_max))))
    res = max(res, float(np.max(_natural(x.b_minus, lam - psi, 0.0, params.b_minus_max))))
    nu = psi - np.append(psi[1:], 0.0)
    res = max(res, float(np.max(_natural(s, -nu, 0.0, params.s_max))))
    h = constraint_values(x, params)
    for name, hv in h.items():
        viol = np.abs(hv) if name == "h17" else np.maximum(hv, 0.0)
        res = max(res, float(np.max(viol)))
    res = max(res, float(np.max(np.maximum(mp[0] - x.m_plus, 0.0))),
              float(np.max(np.maximum(x.m_plus - mp[1], 0.0))),
              float(np.max(np.maximum(mm[0] - x.m_minus, 0.0))),
              float(np.max(np.maximum(x.m_minus - mm[1], 0.0))))
    return res, lam, psi
