import numpy as np
import pytest

from conftest import network, plain_agent
from lfsda.centralized import dual_value, solve_centralized_optimal
from lfsda.mechanisms import MechanismConfig, run_lfsda, run_without_trading
from lfsda.model import check_feasible
from test_mechanisms import community


def test_single_agent_optimum_is_self_sufficiency():
    agents = [plain_agent(3, l_minus_max=np.array([0.2, 1.0, 0.0]), s_max=1.0,
                          b_plus_max=0.5, b_minus_max=0.5)]
    net = network(3)
    opt = solve_centralized_optimal(agents, net)
    alone = run_without_trading(agents, net)[0]
    assert opt.social_welfare == pytest.approx(alone.social_welfare, abs=1e-6)


def test_no_pv_gives_zero_welfare():
    agents = [plain_agent(4) for _ in range(3)]
    opt = solve_centralized_optimal(agents, network(4, agent_count=3))
    assert opt.social_welfare == pytest.approx(0.0, abs=1e-9)


@pytest.mark.parametrize("seed", range(5))
def test_welfare_ordering(seed):
    agents, net = community(seed, N=4, T=4)
    opt = solve_centralized_optimal(agents, net)
    auction = run_lfsda(agents, net, MechanismConfig(max_iterations=10))[-1].social_welfare
    alone = run_without_trading(agents, net)[0].social_welfare
    assert opt.duality_gap >= 0.0
    assert opt.upper_bound >= opt.social_welfare
    assert opt.upper_bound >= auction - 1e-9
    assert opt.social_welfare >= auction - 1e-6
    assert auction >= alone - 1e-6


@pytest.mark.parametrize("seed", range(3))
def test_optimum_is_balanced_and_feasible(seed):
    agents, net = community(seed)
    opt = solve_centralized_optimal(agents, net)
    for st_, pa in zip(opt.states, agents):
        assert check_feasible(st_, pa, tol=1e-8) == []
    xi = sum(net.gamma * s.m_plus - s.m_minus for s in opt.states)
    assert np.max(np.abs(xi)) <= 1e-9
    assert opt.upper_bound == pytest.approx(dual_value(opt.prices, agents, net))
