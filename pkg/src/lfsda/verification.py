"""Self-checks behind the ``verify`` command: independent oracles against the fast paths."""
from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np

from .market import Bid, excess_function, market_clearing
from .mechanisms import run_lfsda
from .model import AgentParams, NetworkParams, is_feasible
from .oracle import brute_force_oracle, lattice_tolerance
from .solver import solve_subproblem


@dataclass(frozen=True)
class CheckResult:
    name: str
    passed: bool
    detail: str

    def line(self):
        return f"{'PASS' if self.passed else 'FAIL'}  {self.name}: {self.detail}"


def bisection_root(bids, gamma, tol=1e-12):
    """Lowest root of the excess function by bisection; slow but assumption-free."""
    r = [b.alpha / b.beta for b in bids]
    lo = min(r) - 1.0
    hi = max(r) + 1.0
    while excess_function(bids, gamma, lo) >= 0:
        lo -= 2 * (hi - lo)
    while excess_function(bids, gamma, hi) < 0:
        hi += 2 * (hi - lo)
    while hi - lo > tol * max(1.0, abs(lo), abs(hi)):
        mid = 0.5 * (lo + hi)
        if mid in (lo, hi):
            break
        if excess_function(bids, gamma, mid) < 0:
            lo = mid
        else:
            hi = mid
    return hi


def random_bids(rng, n):
    return [Bid(float(rng.uniform(-10, 10)), float(rng.uniform(0.05, 2.0))) for _ in range(n)]


def check_clearing(n_sets=1000, seed=0):
    rng = np.random.default_rng(seed)
    worst_p = worst_f = 0.0
    for _ in range(n_sets):
        n = int(rng.integers(1, 51))
        gamma = float(rng.choice([0.5, 0.8, 1.0]))
        bids = random_bids(rng, n)
        res = market_clearing(bids, gamma)
        worst_p = max(worst_p, abs(res.price - bisection_root(bids, gamma)))
        worst_f = max(worst_f, abs(excess_function(bids, gamma, res.price)))
    ok = worst_p <= 1e-9 and worst_f <= 1e-9
    return CheckResult("clearing vs bisection", ok,
                       f"{n_sets} bid sets, max price error {worst_p:.2e}, max |F| {worst_f:.2e}")


def random_small_agent(rng, T):
    pa = AgentParams(
        l_minus_max=rng.uniform(0.0, 1.5, T) * (rng.random(T) < 0.7),
        s_max=float(rng.uniform(0.0, 2.0)), eta=float(rng.uniform(0.5, 1.0)),
        b_plus_max=float(rng.uniform(0.0, 1.0)), b_minus_max=float(rng.uniform(0.0, 1.0)),
        m_plus_max=float(rng.uniform(0.0, 2.0)), m_minus_max=float(rng.uniform(0.0, 2.0)),
    )
    net = NetworkParams.uniform(T, gamma=float(rng.choice([0.5, 0.8, 1.0])))
    prices = rng.uniform(0.0, 20.0, T)
    return prices, pa, net


def check_solver_oracle(n=50, seed=0, resolution=9):
    rng = np.random.default_rng(seed)
    worst = -np.inf
    worst_kkt = 0.0
    for _ in range(n):
        T = int(rng.integers(1, 3))
        prices, pa, net = random_small_agent(rng, T)
        sol = solve_subproblem(prices, pa, net)
        orc = brute_force_oracle(prices, pa, net, resolution)
        eps = lattice_tolerance(prices, pa, net, resolution)
        # positive means the oracle beat the solver beyond the lattice tolerance
        worst = max(worst, orc.objective - sol.objective - eps)
        worst_kkt = max(worst_kkt, sol.kkt_residual)
    ok = worst <= 0 and worst_kkt <= 1e-7
    return CheckResult("solver vs lattice oracle", ok,
                       f"{n} instances, worst oracle excess {worst:.2e}, worst KKT {worst_kkt:.2e}")


def check_short_run(cfg, iterations=5):
    cfg = replace(cfg, iterations=iterations)
    params, net = cfg.agents(), cfg.network()
    recs = run_lfsda(params, net, cfg.mechanism_config())
    imb = max(r.max_imbalance for r in recs)
    feas = all(is_feasible(st, pa, 1e-8) for r in recs for st, pa in zip(r.states, params))
    return CheckResult("market run balance and feasibility", imb <= 1e-9 and feas,
                       f"{len(recs)} iterations, max imbalance {imb:.2e}, feasible={feas}")


def run_all(cfg, seed=0):
    return [check_clearing(1000, seed), check_solver_oracle(50, seed), check_short_run(cfg)]
