"""Experiment configuration, orchestration and report files."""
from __future__ import annotations

import csv
import json
import logging
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field, fields, replace

import numpy as np
import tomli
import tomli_w

from .centralized import solve_centralized_optimal
from .errors import ConfigError, LfsdaError
from .mechanisms import (MechanismConfig, final_agent_welfare, run_lfsda, run_rtp,
                         run_without_trading)
from .model import FLOW_FIELDS, AgentParams, AgentState, NetworkParams
from .pv import PvProfileSet, generate_pv_synthetic, load_pv_csv
from .solver import SolverConfig
from .welfare import intrinsic_welfare

log = logging.getLogger(__name__)

CONDITIONS = ("lfsda", "rtp", "without_trading", "optimal")
RATIO_EPS = 1e-12


@dataclass(frozen=True)
class ExperimentConfig:
    """Every knob of an experiment. Defaults give the reference setup on synthetic PV."""

    N: int = 20
    T: int = 24
    gamma: float = 0.8
    eta: float = 0.7
    b_plus_max: float = 1.0
    b_minus_max: float = 1.0
    s_init: float = 0.0
    s_max: float = 5.0
    m_plus_max: float = 5.0
    m_minus_max: float = 5.0
    g_minus_max: float = 1e6
    p_grid_buy: float = 20.0
    p_grid_sell: float = 0.0
    utility_omega: float = 10.0
    utility_theta: float = 30.0
    l_plus_min: float = 0.0
    cost_linear: float = 0.0
    cost_quadratic: float = 0.0
    beta: float = 0.5
    theta_k: float = 0.1
    iterations: int = 200
    price_tol: float = 1e-6
    initial_price: float | None = None  # None: p_grid_buy / 2
    rng_seed: int = 0
    pv_source: str = "synthetic"        # "synthetic" or a CSV path
    pv_peak_mean: float = 1.0
    pv_peak_spread: float = 0.5
    kkt_tol: float = 1e-7
    g_plus_cap: float = 1e6
    output_dir: str = "out"

    def __post_init__(self):
        for f in fields(self):
            v = getattr(self, f.name)
            if f.name == "initial_price" and v is None:
                continue
            if f.type in ("int",):
                if isinstance(v, bool) or not isinstance(v, (int, np.integer)):
                    raise ConfigError(f"{f.name} must be an integer, got {v!r}")
                object.__setattr__(self, f.name, int(v))
            elif f.type in ("float", "float | None"):
                if isinstance(v, bool) or not isinstance(v, (int, float, np.floating, np.integer)):
                    raise ConfigError(f"{f.name} must be a number, got {v!r}")
                object.__setattr__(self, f.name, float(v))
            elif f.type == "str" and not isinstance(v, str):
                raise ConfigError(f"{f.name} must be a string, got {v!r}")
        if self.N < 1 or self.T < 1:
            raise ConfigError("N and T must be >= 1")
        if self.iterations < 1:
            raise ConfigError("iterations must be >= 1")
        if self.rng_seed < 0 or self.rng_seed >= 2 ** 64:
            raise ConfigError("rng_seed must fit in an unsigned 64-bit integer")
        if not self.beta > 0 or not self.theta_k > 0:
            raise ConfigError("beta and theta_k must be positive")

    # -- serialization --------------------------------------------------
    def to_dict(self):
        return {k: v for k, v in asdict(self).items() if v is not None}

    def dumps(self):
        return tomli_w.dumps(self.to_dict())

    def save(self, path):
        with open(path, "wb") as fh:
            tomli_w.dump(self.to_dict(), fh)

    @classmethod
    def loads(cls, text):
        try:
            data = tomli.loads(text)
        except tomli.TOMLDecodeError as exc:
            raise ConfigError(f"invalid TOML: {exc}") from None
        return cls.from_dict(data)

    @classmethod
    def load(cls, path):
        try:
            with open(path, "rb") as fh:
                text = fh.read().decode("utf-8")
        except OSError as exc:
            raise ConfigError(f"cannot read config {path}: {exc}") from None
        cfg = cls.loads(text)
        # relative PV paths are resolved against the config file
        if cfg.pv_source != "synthetic" and not os.path.isabs(cfg.pv_source):
            base = os.path.dirname(os.path.abspath(path))
            cfg = replace(cfg, pv_source=os.path.join(base, cfg.pv_source))
        return cfg

    @classmethod
    def from_dict(cls, data):
        known = {f.name for f in fields(cls)}
        unknown = sorted(set(data) - known)
        if unknown:
            raise ConfigError(f"unknown config keys: {', '.join(unknown)}")
        return cls(**data)

    # -- model construction ---------------------------------------------
    def pv_profiles(self):
        if self.pv_source == "synthetic":
            return generate_pv_synthetic(self.rng_seed, self.N, self.T,
                                         self.pv_peak_mean, self.pv_peak_spread)
        return load_pv_csv(self.pv_source, T=self.T, N=self.N)

    def network(self):
        return NetworkParams.uniform(self.T, gamma=self.gamma, p_grid_buy=self.p_grid_buy,
                                     p_grid_sell=self.p_grid_sell, agent_count=self.N)

    def agents(self, pv=None):
        pv = pv if pv is not None else self.pv_profiles()
        return [AgentParams(
            l_minus_max=pv.agent(i), l_plus_min=self.l_plus_min,
            b_plus_max=self.b_plus_max, b_minus_max=self.b_minus_max,
            m_plus_max=self.m_plus_max, m_minus_max=self.m_minus_max,
            g_minus_max=self.g_minus_max, s_max=self.s_max, s_init=self.s_init, eta=self.eta,
            utility_omega=self.utility_omega, utility_theta=self.utility_theta,
            cost_linear=self.cost_linear, cost_quadratic=self.cost_quadratic,
        ) for i in range(self.N)]

    def solver_config(self):
        return SolverConfig(kkt_tol=self.kkt_tol, g_plus_cap=self.g_plus_cap)

    def mechanism_config(self):
        return MechanismConfig(max_iterations=self.iterations, theta_k=self.theta_k,
                               beta=self.beta, initial_price=self.initial_price,
                               price_tol=self.price_tol, solver=self.solver_config())


@dataclass
class ExperimentResult:
    config: ExperimentConfig
    pv: PvProfileSet
    records: dict = field(default_factory=dict)   # condition -> list of IterationRecord
    optimal: object = None
    failures: list = field(default_factory=list)
    files: list = field(default_factory=list)


def _run_condition(name, cfg, pv):
    params = cfg.agents(pv)
    net = cfg.network()
    mcfg = cfg.mechanism_config()
    if name == "lfsda":
        return run_lfsda(params, net, mcfg)
    if name == "rtp":
        return run_rtp(params, net, mcfg)
    if name == "without_trading":
        return run_without_trading(params, net, mcfg)
    if name == "optimal":
        return solve_centralized_optimal(params, net, cfg.solver_config())
    raise ConfigError(f"unknown condition {name}")


def _failure(name, exc):
    return {"condition": name, "error": type(exc).__name__, "message": str(exc),
            "exit_code": getattr(exc, "exit_code", 1),
            "agent": getattr(exc, "agent", None), "slot": getattr(exc, "slot", None),
            "iteration": getattr(exc, "iteration", None)}


def run_experiment(cfg, conditions=CONDITIONS, parallel=False, write=True):
    """Run the requested conditions and write the report files into ``cfg.output_dir``."""
    pv = cfg.pv_profiles()
    result = ExperimentResult(config=cfg, pv=pv)
    outcomes = {}
    if parallel and len(conditions) > 1:
        with ProcessPoolExecutor(max_workers=len(conditions)) as pool:
            futures = {c: pool.submit(_run_condition, c, cfg, pv) for c in conditions}
            for c in conditions:  # collect in fixed order
                try:
                    outcomes[c] = futures[c].result()
                except LfsdaError as exc:
                    result.failures.append(_failure(c, exc))
                    if hasattr(exc, "records"):
                        outcomes[c] = exc.records
    else:
        for c in conditions:
            log.info("running %s", c)
            try:
                outcomes[c] = _run_condition(c, cfg, pv)
            except LfsdaError as exc:
                log.error("%s failed: %s", c, exc)
                result.failures.append(_failure(c, exc))
                if getattr(exc, "records", None):
                    outcomes[c] = exc.records
    for c, out in outcomes.items():
        if c == "optimal":
            result.optimal = out
        else:
            result.records[c] = out
    if write:
        write_report(result, cfg.output_dir)
    return result


# ---------------------------------------------------------------------------
# report files

def _fmt(v):
    if v is None or (isinstance(v, float) and np.isnan(v)):
        return ""
    if isinstance(v, (float, np.floating)):
        return repr(float(v))
    return str(v)


def _write_csv(path, header, rows):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for row in rows:
            w.writerow([_fmt(v) for v in row])


def iteration_rows(result):
    """Rows of iterations.csv: one per condition and iteration."""
    cfg = result.config
    T = cfg.T
    rows = []
    recs = result.records
    n_iter = max([len(recs[c]) for c in ("lfsda", "rtp") if c in recs] or [1])
    for r in recs.get("lfsda", []):
        rows.append([r.iteration, "lfsda", r.social_welfare, r.max_imbalance, *r.next_price])
    for r in recs.get("rtp", []):
        rows.append([r.iteration, "rtp_with_compensation", r.welfare_after_compensation,
                     r.max_imbalance, *r.price])
    for r in recs.get("rtp", []):
        rows.append([r.iteration, "rtp_without_compensation", r.social_welfare,
                     r.max_imbalance, *r.price])
    if "without_trading" in recs:
        wt = recs["without_trading"][0]
        grid = np.full(T, cfg.p_grid_buy)
        for k in range(n_iter):
            rows.append([k, "without_trading", wt.social_welfare, 0.0, *grid])
    if result.optimal is not None:
        opt = result.optimal
        for k in range(n_iter):
            rows.append([k, "optimal", opt.social_welfare, 0.0, *opt.prices])
    return rows


def _final_states(result):
    out = {}
    if "lfsda" in result.records:
        out["lfsda"] = result.records["lfsda"][-1].states
    if "rtp" in result.records:
        out["rtp"] = result.records["rtp"][-1].states
    if "without_trading" in result.records:
        out["without_trading"] = result.records["without_trading"][0].states
    if result.optimal is not None:
        out["optimal"] = result.optimal.states
    return out


def agent_welfare_table(result):
    """Final per-agent welfare under each condition (market payments included)."""
    cfg = result.config
    params, net = cfg.agents(result.pv), cfg.network()
    table = {}
    if "lfsda" in result.records:
        table["lfsda"] = final_agent_welfare(result.records["lfsda"][-1], params, net)
    if "rtp" in result.records:
        r = result.records["rtp"][-1]
        table["rtp"] = r.agent_welfare - r.compensation_charge
    if "without_trading" in result.records:
        table["without_trading"] = result.records["without_trading"][0].agent_welfare
    if result.optimal is not None:
        table["optimal"] = result.optimal.agent_welfare
    return table


def summary(result):
    cfg = result.config
    out = {"seed": cfg.rng_seed}
    recs = result.records
    if "lfsda" in recs:
        r = recs["lfsda"]
        out["lfsda_final_welfare"] = r[-1].social_welfare
        out["lfsda_iterations"] = len(r)
        out["lfsda_max_imbalance"] = max(x.max_imbalance for x in r)
    if "rtp" in recs:
        r = recs["rtp"]
        out["rtp_final_welfare_with_compensation"] = r[-1].welfare_after_compensation
        out["rtp_final_welfare_without_compensation"] = r[-1].social_welfare
        out["rtp_iterations"] = len(r)
        out["rtp_final_max_imbalance"] = r[-1].max_imbalance
    if "without_trading" in recs:
        out["without_trading_welfare"] = recs["without_trading"][0].social_welfare
    if result.optimal is not None:
        out["optimal_welfare"] = result.optimal.social_welfare
        out["optimal_upper_bound"] = result.optimal.upper_bound
        out["duality_gap"] = result.optimal.duality_gap
    out["failed_conditions"] = ",".join(f["condition"] for f in result.failures)
    for k, v in cfg.to_dict().items():
        out[f"param_{k}"] = v
    return out


def write_report(result, out_dir):
    os.makedirs(out_dir, exist_ok=True)
    cfg = result.config
    T, N = cfg.T, cfg.N
    files = []

    def path(name):
        p = os.path.join(out_dir, name)
        files.append(p)
        return p

    price_cols = [f"price_{t + 1}" for t in range(T)]
    _write_csv(path("iterations.csv"), ["k", "condition", "social_welfare", "max_imbalance",
                                        *price_cols], iteration_rows(result))

    table = agent_welfare_table(result)
    if "without_trading" in table:
        base = table["without_trading"]
        others = [c for c in ("lfsda", "rtp", "optimal") if c in table]
        header = ["agent", "without_trading_welfare"]
        for c in others:
            header += [f"{c}_welfare", f"{c}_ratio", f"{c}_difference"]
        rows = []
        for i in range(N):
            row = [i + 1, base[i]]
            for c in others:
                w = table[c][i]
                ratio = w / base[i] if base[i] > RATIO_EPS else None
                row += [w, ratio, w - base[i]]
            rows.append(row)
        _write_csv(path("welfare_ratio.csv"), header, rows)

    finals = _final_states(result)
    rows = []
    for c, states in finals.items():
        for i, st in enumerate(states):
            for t in range(T):
                rows.append([c, i + 1, t + 1, st.l_plus[t]])
    _write_csv(path("consumption.csv"), ["condition", "agent", "slot", "l_plus"], rows)

    rows = []
    for c, states in finals.items():
        for i, st in enumerate(states):
            for t in range(T):
                rows.append([c, i + 1, t + 1, *(getattr(st, f)[t] for f in FLOW_FIELDS)])
    _write_csv(path("allocations.csv"), ["condition", "agent", "slot", *FLOW_FIELDS], rows)

    with open(path("summary.json"), "w") as fh:
        json.dump(summary(result), fh, indent=2, sort_keys=True)
        fh.write("\n")

    # plot-ready series, one file per figure analogue
    _write_csv(path("fig_pv.csv"), ["slot", *(f"agent_{i + 1}" for i in range(N))],
               [[t + 1, *result.pv.matrix[t]] for t in range(T)])
    by_k = {}
    for row in iteration_rows(result):
        by_k.setdefault(row[0], {})[row[1]] = row[2]
    conds = ["lfsda", "rtp_with_compensation", "rtp_without_compensation",
             "without_trading", "optimal"]
    _write_csv(path("fig_social_welfare.csv"), ["k", *conds],
               [[k, *(v.get(c) for c in conds)] for k, v in sorted(by_k.items())])
    cols, series = [], []
    if "lfsda" in result.records:
        cols.append("lfsda")
        series.append(result.records["lfsda"][-1].next_price)
    if "rtp" in result.records:
        cols.append("rtp")
        series.append(result.records["rtp"][-1].price)
    if result.optimal is not None:
        cols.append("optimal")
        series.append(result.optimal.prices)
    _write_csv(path("fig_prices.csv"), ["slot", *cols],
               [[t + 1, *(s[t] for s in series)] for t in range(T)])
    if "without_trading" in table:
        cs = [c for c in ("lfsda", "rtp") if c in table]
        _write_csv(path("fig_welfare_ratio.csv"), ["agent", *cs],
                   [[i + 1, *((table[c][i] / base[i]) if base[i] > RATIO_EPS else None
                              for c in cs)] for i in range(N)])
    # three representative agents: smallest, median and largest PV
    order = np.argsort(result.pv.matrix.sum(axis=0), kind="stable")
    reps = [int(order[0]), int(order[N // 2]), int(order[-1])]
    header = ["slot"] + [f"{c}_agent_{i + 1}" for i in reps for c in finals]
    _write_csv(path("fig_consumption.csv"), header,
               [[t + 1, *(finals[c][i].l_plus[t] for i in reps for c in finals)]
                for t in range(T)])

    if result.failures:
        with open(path("failures.json"), "w") as fh:
            json.dump(result.failures, fh, indent=2, sort_keys=True)
            fh.write("\n")
    result.files = files
    return files


def recompute_welfare(allocations_csv, cfg, pv=None):
    """Sum of intrinsic welfare per condition, rebuilt from allocations.csv."""
    params = cfg.agents(pv)
    net = cfg.network()
    flows = {}
    with open(allocations_csv, newline="") as fh:
        for row in csv.DictReader(fh):
            c, i, t = row["condition"], int(row["agent"]) - 1, int(row["slot"]) - 1
            arr = flows.setdefault(c, np.zeros((cfg.N, 8, cfg.T)))
            arr[i, :, t] = [float(row[f]) for f in FLOW_FIELDS]
    out = {}
    for c, arr in flows.items():
        out[c] = sum(intrinsic_welfare(AgentState.from_array(arr[i]), params[i], net)
                     for i in range(cfg.N))
    return out
