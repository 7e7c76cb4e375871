"""Simulation of a local prosumer electricity market cleared by a linear-bid double auction."""
from .centralized import CentralizedResult, solve_centralized_optimal
from .errors import (ConfigError, DataError, DomainError, InfeasibleError, LatticeTooLarge,
                     LfsdaError, SolverError, StructuralError, VerificationError)
from .experiment import ExperimentConfig, ExperimentResult, run_experiment
from .market import Bid, ClearingResult, bid_from_allocation, excess_function, market_clearing
from .mechanisms import (IterationRecord, MechanismConfig, run_lfsda, run_rtp,
                         run_without_trading)
from .model import (AgentParams, AgentState, NetworkParams, check_feasible, is_feasible,
                    soc_trajectory)
from .oracle import brute_force_oracle
from .pv import PvProfileSet, generate_pv_synthetic, load_pv_csv
from .solver import SolverConfig, SubproblemSolution, reconfigure, solve_subproblem
from .welfare import agent_welfare, demand_utility, generation_cost, social_welfare

__all__ = [
    "AgentParams", "AgentState", "NetworkParams", "check_feasible", "is_feasible",
    "soc_trajectory", "demand_utility", "generation_cost", "agent_welfare", "social_welfare",
    "SolverConfig", "SubproblemSolution", "solve_subproblem", "reconfigure",
    "Bid", "ClearingResult", "bid_from_allocation", "excess_function", "market_clearing",
    "MechanismConfig", "IterationRecord", "run_rtp", "run_lfsda", "run_without_trading",
    "CentralizedResult", "solve_centralized_optimal", "brute_force_oracle",
    "PvProfileSet", "generate_pv_synthetic", "load_pv_csv",
    "ExperimentConfig", "ExperimentResult", "run_experiment",
    "LfsdaError", "ConfigError", "StructuralError", "DomainError", "DataError",
    "SolverError", "InfeasibleError", "LatticeTooLarge", "VerificationError",
]
