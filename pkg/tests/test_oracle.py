import numpy as np
import pytest

from conftest import network, plain_agent
from lfsda.errors import LatticeTooLarge
from lfsda.model import AgentParams, AgentState
from lfsda.oracle import brute_force_oracle, lattice_tolerance
from lfsda.solver import solve_subproblem


def test_consumer_within_one_lattice_step():
    T = 1
    pa = plain_agent(T, m_minus_max=1.0, m_plus_max=0.0)
    res = 61
    orc = brute_force_oracle(np.array([5.0]), pa, network(T), res)
    step = (1 / 3) / (res - 1)
    assert abs(orc.state.l_plus[0] - 1 / 6) <= step


def test_zero_caps_give_zero_state():
    T = 1
    pa = plain_agent(T, m_plus_max=0.0, m_minus_max=0.0, g_minus_max=0.0,
                     utility_omega=0.0)
    orc = brute_force_oracle(np.array([5.0]), pa, network(T), 5)
    assert orc.state == AgentState.zeros(T)
    assert orc.objective == 0.0


def test_battery_arbitrage_beats_no_battery():
    T = 2
    p = np.array([2.0, 9.0])
    net = network(T, gamma=0.8)
    with_b = AgentParams(l_minus_max=np.zeros(T), eta=0.7)
    without = with_b.with_(s_max=0.0)
    assert (brute_force_oracle(p, with_b, net, 9).objective
            >= brute_force_oracle(p, without, net, 9).objective)


def test_refuses_large_lattice():
    T = 3
    with pytest.raises(LatticeTooLarge) as err:
        brute_force_oracle(np.ones(T), AgentParams(l_minus_max=np.ones(T)), network(T), 200,
                           max_size=10_000)
    assert err.value.size > 10_000


def test_oracle_close_to_solver_within_lattice_bound(rng):
    for _ in range(50):
        T = int(rng.integers(1, 3))
        pa = AgentParams(l_minus_max=rng.uniform(0, 1.5, T), s_max=float(rng.uniform(0, 2)),
                         m_plus_max=float(rng.uniform(0, 2)), m_minus_max=float(rng.uniform(0, 2)))
        net = network(T, gamma=float(rng.choice([0.5, 0.8, 1.0])))
        p = rng.uniform(0, 20, T)
        sol = solve_subproblem(p, pa, net)
        orc = brute_force_oracle(p, pa, net, 9)
        eps = lattice_tolerance(p, pa, net, 9)
        assert orc.objective - 1e-9 <= sol.objective
        assert sol.objective - orc.objective <= eps
