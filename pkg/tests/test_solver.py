import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from conftest import network, plain_agent
from lfsda.errors import DomainError, InfeasibleError, SolverError
from lfsda.model import AgentParams, AgentState, NetworkParams, is_feasible
from lfsda.oracle import brute_force_oracle
from lfsda.solver import (SolverConfig, kkt_residual, objective_gradient, reconfigure,
                          solve_subproblem)
from lfsda.welfare import lagrangian


def test_consumer_buys_until_marginal_utility_equals_price():
    T = 4
    sol = solve_subproblem(np.full(T, 5.0), plain_agent(T), network(T))
    np.testing.assert_allclose(sol.state.l_plus, 1 / 6, atol=1e-12)
    np.testing.assert_allclose(sol.state.m_minus, 1 / 6, atol=1e-12)
    assert sol.kkt_residual <= 1e-7


def test_expensive_market_gives_zero_state():
    # prices at or above the utility intercept, but below p_grid_buy / gamma (no resale gain)
    T = 4
    sol = solve_subproblem(np.array([10.0, 12.0, 24.0, 10.0]), plain_agent(T), network(T))
    assert sol.state == AgentState.zeros(T)
    assert sol.objective == 0.0


def test_pv_agent_splits_between_own_use_and_sale():
    # own use stops where 10 - 30 l equals the seller price 0.8 * 9
    T = 1
    pa = plain_agent(T, l_minus_max=np.ones(T))
    sol = solve_subproblem(np.array([9.0]), pa, network(T, gamma=0.8))
    assert sol.state.l_plus[0] == pytest.approx((10 - 7.2) / 30, abs=1e-12)
    assert sol.state.m_plus[0] == pytest.approx(1 - (10 - 7.2) / 30, abs=1e-12)
    assert sol.state.g_plus[0] == 0.0


def test_no_simultaneous_charge_and_discharge(rng):
    for _ in range(30):
        T = 6
        pa = AgentParams(l_minus_max=rng.uniform(0, 2, T), eta=float(rng.uniform(0.3, 0.99)))
        sol = solve_subproblem(rng.uniform(0, 20, T), pa, network(T))
        assert np.all(np.minimum(sol.state.b_plus, sol.state.b_minus) == 0)


def test_netted_solution_never_worse_than_churn(rng):
    # churn (charge and discharge in one slot) is feasible but never beats the optimum
    T = 2
    pa = AgentParams(l_minus_max=np.array([1.0, 0.0]), s_max=2.0, eta=0.7)
    net = network(T)
    p = np.array([2.0, 9.0])
    sol = solve_subproblem(p, pa, net)
    churn = sol.state.replace(b_plus=sol.state.b_plus + 0.1, b_minus=sol.state.b_minus + 0.07)
    if is_feasible(churn, pa, 1e-9):
        assert lagrangian(churn, p, pa, net) <= sol.objective + 1e-12
    orc = brute_force_oracle(p, pa, net, 9)
    assert sol.objective >= orc.objective - 1e-12


def _random_instance(rng, T):
    pa = AgentParams(
        l_minus_max=rng.uniform(0, 2, T) * (rng.random(T) < 0.7),
        l_plus_min=float(rng.uniform(0, 0.1)),
        s_max=float(rng.uniform(0, 3)), eta=float(rng.uniform(0.2, 1.0)),
        b_plus_max=float(rng.uniform(0, 1.5)), b_minus_max=float(rng.uniform(0, 1.5)),
        cost_linear=float(rng.uniform(0, 3)) * (rng.random() < 0.3),
        cost_quadratic=float(rng.uniform(0, 3)) * (rng.random() < 0.3),
    )
    net = NetworkParams.uniform(T, gamma=float(rng.choice([0.5, 0.8, 1.0])),
                                p_grid_sell=float(rng.uniform(0, 4)))
    return rng.uniform(-3, 24, T), pa, net


def test_matches_independent_conic_solver(rng):
    cp = pytest.importorskip("cvxpy")
    for _ in range(15):
        T = int(rng.integers(1, 7))
        p, pa, net = _random_instance(rng, T)
        sol = solve_subproblem(p, pa, net)
        x = cp.Variable((8, T), nonneg=True)
        u = cp.Variable(T)
        lp, lm, bp, bm, mp, mm, gp, gm = (x[k] for k in range(8))
        soc = pa.s_init + cp.cumsum(pa.eta * bp - bm)
        obj = (cp.sum(10 * u - 15 * cp.square(u)) - pa.cost_linear @ lm
               - cp.sum(cp.multiply(pa.cost_quadratic / 2, cp.square(lm)))
               + net.p_grid_sell @ gp - net.p_grid_buy @ gm + net.gamma * p @ mp - p @ mm)
        cons = [u <= lp, u <= 1 / 3, lp >= pa.l_plus_min, lm <= pa.l_minus_max,
                bp <= pa.b_plus_max, bm <= pa.b_minus_max, mp <= 5, mm <= 5, gp <= 1e6,
                gm <= pa.g_minus_max, soc >= 0, soc <= pa.s_max,
                lp - lm + bp - bm + mp - mm + gp - gm == 0]
        prob = cp.Problem(cp.Maximize(obj), cons)
        prob.solve(solver="CLARABEL")
        assert sol.objective >= prob.value - 1e-6


def test_kkt_and_feasibility_on_random_instances(rng):
    for _ in range(100):
        T = int(rng.integers(1, 25))
        p, pa, net = _random_instance(rng, T)
        sol = solve_subproblem(p, pa, net)
        assert sol.kkt_residual <= 1e-7
        assert is_feasible(sol.state, pa, 1e-8)


def test_certificate_flags_suboptimal_points():
    T = 2
    pa = plain_agent(T)
    p = np.full(T, 5.0)
    bad = AgentState.zeros(T).replace(l_plus=np.full(T, 0.3), m_minus=np.full(T, 0.3))
    res, _, _ = kkt_residual(bad, p, pa, network(T))
    assert res > 0.5


def test_deterministic_bitwise(rng):
    p, pa, net = _random_instance(rng, 24)
    a = solve_subproblem(p, pa, net)
    b = solve_subproblem(p.copy(), pa, net)
    assert a.state == b.state
    assert a.objective == b.objective


def test_demand_only_purchase_nonincreasing_in_price():
    T = 1
    pa = plain_agent(T)
    bought = [solve_subproblem(np.array([p]), pa, network(T)).state.m_minus[0]
              for p in np.linspace(-2, 22, 97)]
    assert all(a >= b - 1e-15 for a, b in zip(bought, bought[1:]))


def test_gradient_matches_finite_differences(rng):
    h = 1e-6
    for _ in range(100):
        T = 3
        p, pa, net = _random_instance(rng, T)
        # interior consumption keeps the utility away from its kink
        x = rng.uniform(0.05, 0.3, size=(8, T))
        state = AgentState.from_array(x)
        g = objective_gradient(state, p, pa, net)
        for k in range(8):
            for t in range(T):
                up, dn = x.copy(), x.copy()
                up[k, t] += h
                dn[k, t] -= h
                fd = (lagrangian(AgentState.from_array(up), p, pa, net)
                      - lagrangian(AgentState.from_array(dn), p, pa, net)) / (2 * h)
                assert fd == pytest.approx(g[k, t], rel=1e-5, abs=1e-5)


def test_g_plus_cap_is_reported():
    T = 1
    pa = plain_agent(T, l_minus_max=np.array([3.0]))
    sol = solve_subproblem(np.array([0.0]), pa, network(T, p_grid_sell=1.0),
                           SolverConfig(g_plus_cap=2.0))
    assert sol.state.g_plus[0] == 2.0
    assert sol.diagnostics


def test_failure_carries_best_iterate():
    T = 2
    with pytest.raises(SolverError) as err:
        solve_subproblem(np.full(T, 5.0), plain_agent(T), network(T), SolverConfig(kkt_tol=-1.0))
    assert err.value.best is not None and err.value.residual is not None


# -- reconfiguration ---------------------------------------------------------

def test_reconfigure_at_own_quantities_keeps_objective(rng):
    for _ in range(20):
        p, pa, net = _random_instance(rng, 8)
        sol = solve_subproblem(p, pa, net)
        again = reconfigure(sol, sol.state.m_plus, sol.state.m_minus, p, pa, net)
        assert again.objective == pytest.approx(sol.objective, abs=1e-9)


def test_pinned_sale_sourced_from_grid():
    T = 2
    pa = plain_agent(T)
    sol = reconfigure(None, np.array([1.0, 0.0]), np.zeros(T), np.full(T, 5.0), pa, network(T))
    assert sol.state.g_minus[0] == pytest.approx(1.0)
    assert sol.state.m_plus[0] == 1.0


def test_pinned_sale_without_any_source_is_infeasible():
    T = 2
    pa = plain_agent(T, g_minus_max=0.0)
    with pytest.raises(InfeasibleError) as err:
        reconfigure(None, np.array([0.0, 1.0]), np.zeros(T), np.full(T, 5.0), pa, network(T))
    assert err.value.slot == 1


def test_pinned_zero_purchase_falls_back_to_self_supply():
    T = 24
    pv = np.zeros(T)
    pv[10:14] = 1.0
    pa = AgentParams(l_minus_max=pv)
    sol = reconfigure(None, np.zeros(T), np.zeros(T), np.full(T, 1.0), pa, network(T))
    assert np.all(sol.state.g_minus == 0)          # grid at 20 never beats utility of 10
    assert np.all(sol.state.l_plus <= 1 / 3 + 1e-12)
    assert sol.state.l_plus[:10].sum() == 0.0      # no energy before the sun rises


def test_pinned_quantities_outside_caps_rejected():
    T = 1
    with pytest.raises(DomainError):
        reconfigure(None, np.array([6.0]), np.zeros(T), np.ones(T), plain_agent(T), network(T))


@settings(max_examples=40, deadline=None)
@given(st.integers(0, 2 ** 32 - 1))
def test_solver_dominates_lattice_points(seed):
    rng = np.random.default_rng(seed)
    T = int(rng.integers(1, 3))
    p, pa, net = _random_instance(rng, T)
    orc = brute_force_oracle(p, pa, net, 7)
    assert solve_subproblem(p, pa, net).objective >= orc.objective - 1e-9
