"""Domain types for the prosumer network and the per-agent feasible set.

Slots are indexed from 0 in code. Every per-slot quantity is a float array
of length ``T``; scalar arguments are broadcast on construction.
"""
from __future__ import annotations

from dataclasses import dataclass, replace
from typing import NamedTuple

import numpy as np

from .errors import ConfigError, StructuralError

FLOW_FIELDS = ("l_plus", "l_minus", "b_plus", "b_minus",
               "m_plus", "m_minus", "g_plus", "g_minus")

DEFAULT_TOL = 1e-9


def _profile(value, T, name):
    arr = np.asarray(value, dtype=float)
    if arr.ndim == 0:
        return np.full(T, float(arr))
    if arr.shape != (T,):
        raise StructuralError(f"{name}: expected {T} entries, got shape {arr.shape}")
    return arr.copy()


def _freeze(arr):
    arr.setflags(write=False)
    return arr


@dataclass(frozen=True, eq=False)
class AgentParams:
    """Bounds, battery and preference data of one prosumer.

    ``l_minus_max`` fixes the horizon length T; all other per-slot fields
    accept a scalar or a length-T profile. ``g_minus_max`` is finite so the
    solver can build bounded response curves; the default is a sentinel far
    above any realistic purchase.
    """

    l_minus_max: np.ndarray
    l_plus_min: np.ndarray = 0.0
    b_plus_max: float = 1.0
    b_minus_max: float = 1.0
    m_plus_max: float = 5.0
    m_minus_max: float = 5.0
    g_minus_max: float = 1e6
    s_max: float = 5.0
    s_init: float = 0.0
    eta: float = 0.7
    utility_omega: np.ndarray = 10.0
    utility_theta: np.ndarray = 30.0
    cost_linear: np.ndarray = 0.0
    cost_quadratic: np.ndarray = 0.0

    def __post_init__(self):
        lmax = np.asarray(self.l_minus_max, dtype=float)
        if lmax.ndim != 1 or lmax.size == 0:
            raise StructuralError("l_minus_max must be a non-empty 1-D profile")
        T = lmax.size
        for name in ("l_minus_max", "l_plus_min", "utility_omega", "utility_theta",
                     "cost_linear", "cost_quadratic"):
            object.__setattr__(self, name, _freeze(_profile(getattr(self, name), T, name)))
        for name in ("b_plus_max", "b_minus_max", "m_plus_max", "m_minus_max",
                     "g_minus_max", "s_max", "s_init", "eta"):
            object.__setattr__(self, name, float(getattr(self, name)))
        self.validate()

    @property
    def T(self):
        return self.l_minus_max.size

    def validate(self):
        caps = {n: getattr(self, n) for n in ("b_plus_max", "b_minus_max", "m_plus_max",
                                               "m_minus_max", "g_minus_max", "s_max")}
        for name, v in caps.items():
            if not v >= 0:
                raise ConfigError(f"{name} must be >= 0, got {v}")
        for name in ("l_minus_max", "l_plus_min", "cost_linear", "cost_quadratic"):
            if np.any(~(getattr(self, name) >= 0)):
                raise ConfigError(f"{name} entries must be >= 0")
        if np.any(~(self.utility_theta > 0)):
            raise ConfigError("utility_theta entries must be > 0")
        if not np.all(np.isfinite(self.utility_omega)):
            raise ConfigError("utility_omega entries must be finite")
        if not 0.0 <= self.eta <= 1.0:
            raise ConfigError(f"eta must lie in [0, 1], got {self.eta}")
        if not 0.0 <= self.s_init <= self.s_max:
            raise ConfigError(f"s_init={self.s_init} outside [0, s_max={self.s_max}]")

    def with_(self, **changes):
        return replace(self, **changes)


@dataclass(frozen=True, eq=False)
class NetworkParams:
    """Network-wide data: transmission efficiency and outside-grid tariffs."""

    gamma: float
    p_grid_buy: np.ndarray
    p_grid_sell: np.ndarray
    agent_count: int

    def __post_init__(self):
        buy = np.asarray(self.p_grid_buy, dtype=float)
        T = buy.size if buy.ndim == 1 else np.asarray(self.p_grid_sell, dtype=float).size
        if T == 0:
            raise StructuralError("grid price profiles must be non-empty")
        object.__setattr__(self, "p_grid_buy", _freeze(_profile(self.p_grid_buy, T, "p_grid_buy")))
        object.__setattr__(self, "p_grid_sell", _freeze(_profile(self.p_grid_sell, T, "p_grid_sell")))
        object.__setattr__(self, "gamma", float(self.gamma))
        object.__setattr__(self, "agent_count", int(self.agent_count))
        if not 0.0 <= self.gamma <= 1.0:
            raise ConfigError(f"gamma must lie in [0, 1], got {self.gamma}")
        if self.agent_count < 1:
            raise ConfigError("agent_count must be >= 1")
        if np.any(self.p_grid_sell < 0) or np.any(self.p_grid_sell > self.p_grid_buy):
            # resale suppression: 0 <= p_sell <= p_buy in every slot
            raise ConfigError("grid prices must satisfy 0 <= p_grid_sell <= p_grid_buy")

    @property
    def T(self):
        return self.p_grid_buy.size

    @classmethod
    def uniform(cls, T, gamma=0.8, p_grid_buy=20.0, p_grid_sell=0.0, agent_count=1):
        return cls(gamma, np.full(T, float(p_grid_buy)), np.full(T, float(p_grid_sell)),
                   agent_count)


@dataclass(frozen=True, eq=False)
class AgentState:
    """The eight per-slot energy flows of one agent.

    Sign convention follows the smart meter: ``*_plus`` is outflow from the
    meter (consumption, charging, sales), ``*_minus`` is inflow.
    """

    l_plus: np.ndarray
    l_minus: np.ndarray
    b_plus: np.ndarray
    b_minus: np.ndarray
    m_plus: np.ndarray
    m_minus: np.ndarray
    g_plus: np.ndarray
    g_minus: np.ndarray

    def __post_init__(self):
        arrs = [np.asarray(getattr(self, n), dtype=float) for n in FLOW_FIELDS]
        T = arrs[0].shape
        if len(T) != 1 or any(a.shape != T for a in arrs):
            raise StructuralError("all state profiles must be 1-D with equal length")
        for n, a in zip(FLOW_FIELDS, arrs):
            object.__setattr__(self, n, _freeze(a.copy()))

    @property
    def T(self):
        return self.l_plus.size

    @classmethod
    def zeros(cls, T):
        return cls(*(np.zeros(T) for _ in FLOW_FIELDS))

    @classmethod
    def from_array(cls, arr):
        arr = np.asarray(arr, dtype=float)
        if arr.ndim != 2 or arr.shape[0] != 8:
            raise StructuralError(f"expected an (8, T) array, got {arr.shape}")
        return cls(*arr)

    def as_array(self):
        return np.stack([getattr(self, n) for n in FLOW_FIELDS])

    def replace(self, **changes):
        return replace(self, **changes)

    def net_flow(self):
        """Left-hand side of the per-slot flow conservation (zero when balanced)."""
        return (self.l_plus - self.l_minus + self.b_plus - self.b_minus
                + self.m_plus - self.m_minus + self.g_plus - self.g_minus)

    def market_injection(self, gamma):
        """Delivered market energy per slot, gamma*m_plus - m_minus."""
        return gamma * self.m_plus - self.m_minus

    def __eq__(self, other):
        if not isinstance(other, AgentState):
            return NotImplemented
        return all(np.array_equal(getattr(self, n), getattr(other, n)) for n in FLOW_FIELDS)

    __hash__ = None


class Violation(NamedTuple):
    constraint: str  # "h1" ... "h17"
    slot: int        # 0-based
    magnitude: float


def soc_trajectory(state, params):
    """State of charge after each slot: s_t = s_{t-1} + eta*b_plus_t - b_minus_t."""
    _check_lengths(state, params)
    out = np.empty(state.T)
    s = params.s_init
    eta = params.eta
    for t, (bp, bm) in enumerate(zip(state.b_plus.tolist(), state.b_minus.tolist())):
        s = s + eta * bp - bm
        out[t] = s
    return out


def _check_lengths(state, params):
    if state.T != params.T:
        raise StructuralError(f"state has {state.T} slots but params have {params.T}")


def constraint_values(state, params):
    """All h^{tj}(x) as a dict name -> length-T array; feasible iff h1..h16 <= 0 and h17 == 0."""
    _check_lengths(state, params)
    s = soc_trajectory(state, params)
    return {
        "h1": params.l_plus_min - state.l_plus,
        "h2": -state.l_minus,
        "h3": -state.b_plus,
        "h4": -state.b_minus,
        "h5": -state.m_plus,
        "h6": -state.m_minus,
        "h7": -state.g_plus,
        "h8": -state.g_minus,
        "h9": state.l_minus - params.l_minus_max,
        "h10": state.b_plus - params.b_plus_max,
        "h11": state.b_minus - params.b_minus_max,
        "h12": state.m_plus - params.m_plus_max,
        "h13": state.m_minus - params.m_minus_max,
        "h14": state.g_minus - params.g_minus_max,
        "h15": -s,
        "h16": s - params.s_max,
        "h17": state.net_flow(),
    }


def check_feasible(state, params, tol=DEFAULT_TOL):
    """List every violated constraint; an empty list means the state lies in X_i.

    Inequalities pass when h <= tol, the conservation equality when |h17| <= tol.
    """
    out = []
    for name, h in constraint_values(state, params).items():
        mag = np.abs(h) if name == "h17" else h
        bad = ~(mag <= tol)  # also catches NaN
        for t in np.flatnonzero(bad):
            out.append(Violation(name, int(t), float(mag[t])))
    return out


def is_feasible(state, params, tol=DEFAULT_TOL):
    return not check_feasible(state, params, tol)


def check_prices(prices, T):
    """Validate a price profile and return it as a float array."""
    p = np.asarray(prices, dtype=float)
    if p.shape != (T,):
        raise StructuralError(f"price profile must have {T} entries, got shape {p.shape}")
    if not np.all(np.isfinite(p)):
        raise ConfigError("price profile entries must be finite")
    return p


__all__ = [
    "AgentParams", "NetworkParams", "AgentState", "Violation", "FLOW_FIELDS",
    "soc_trajectory", "constraint_values", "check_feasible", "is_feasible", "check_prices",
    "DEFAULT_TOL",
]
