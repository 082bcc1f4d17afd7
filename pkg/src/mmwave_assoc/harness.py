"""Monte Carlo experiments: configuration, per-run execution and CSV output.

Run ``t`` uses seed ``base_seed + t`` for everything it draws, so runs are
independent of each other and of the worker count. Every output file starts
with a ``# mmwave_assoc <name> v<N>`` comment line naming its column layout.
"""

from __future__ import annotations

import csv
import dataclasses
import math
import os
import sys
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional

import numpy as np

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib

from .channel import ChannelParams, build_rate_matrix
from .dual import SolverParams, load_biasing_estimate, solve_dst
from .errors import ConfigError, UnservableNodeError
from .metrics import rate_cdf, summarize
from .policies import PolicyId, backup_association, run_policy
from .topology import ScenarioConfig, generate_scenario, link_los_probabilities

FORMAT_VERSION = 1

RESULT_COLUMNS = ["run", "seed", "policy", "status", "objective", "objective_per_node",
                  "jain_association", "jain_throughput", "mean_rate_bps", "min_rate_bps",
                  "loads", "outer_iterations", "auction_bids", "gap", "backup_uncovered",
                  "backup_value", "reason"]
SUMMARY_METRICS = ["objective", "objective_per_node", "jain_association", "jain_throughput",
                   "mean_rate_bps"]
TRACE_COLUMNS = ["run", "policy", "outer", "step", "sender", "receiver", "kind", "value"]


@dataclass(frozen=True)
class ExperimentConfig:
    scenario: ScenarioConfig = ScenarioConfig()
    channel: ChannelParams = ChannelParams()
    solver: SolverParams = SolverParams()
    eta: float = 0.5
    sigma: float = 0.0
    policies: tuple = ("RAND", "RSSI", "DST", "DST_R", "LB")
    runs: int = 20
    base_seed: int = 0
    out: str = "results"
    workers: int = 1
    trace: bool = False
    # load-biasing calibration: DST runs on seeds lb_seed .. lb_seed + lb_runs - 1
    lb_runs: int = 10
    lb_seed: int = 100_000
    cdf_points: int = 101
    # per-AP backup capacity; None skips backup planning
    backup_capacity: Optional[tuple] = None

    def __post_init__(self):
        if self.runs < 1:
            raise ConfigError("runs must be >= 1")
        if not 0 < self.eta < 1:
            raise ConfigError("eta must lie in (0, 1)")
        if self.sigma < 0:
            raise ConfigError("sigma must be >= 0")
        if self.workers < 1 or self.lb_runs < 1 or self.cdf_points < 2:
            raise ConfigError("workers, lb_runs must be >= 1 and cdf_points >= 2")
        pols = tuple(PolicyId.parse(p).value for p in self.policies)
        if not pols:
            raise ConfigError("at least one policy is required")
        object.__setattr__(self, "policies", pols)
        if self.backup_capacity is not None:
            cap = tuple(int(c) for c in self.backup_capacity)
            if len(cap) != self.scenario.n_aps or min(cap) < 0:
                raise ConfigError("backup_capacity needs one non-negative entry per AP")
            object.__setattr__(self, "backup_capacity", cap)

    def replace(self, **kw):
        return dataclasses.replace(self, **kw)


def _build(cls, section, name):
    if section is None:
        return cls()
    if not isinstance(section, dict):
        raise ConfigError(f"[{name}] must be a table")
    known = {f.name for f in dataclasses.fields(cls)}
    unknown = sorted(set(section) - known)
    if unknown:
        raise ConfigError(f"unknown key(s) in [{name}]: {', '.join(unknown)}")
    kw = {k: tuple(map(tuple, v)) if k == "ap_positions" else tuple(v) if isinstance(v, list) else v
          for k, v in section.items()}
    try:
        return cls(**kw)
    except (TypeError, ValueError) as e:
        raise ConfigError(f"[{name}]: {e}") from None


def config_from_dict(d: dict) -> ExperimentConfig:
    d = dict(d)
    allowed = {"experiment", "scenario", "channel", "solver"}
    unknown = sorted(set(d) - allowed)
    if unknown:
        raise ConfigError(f"unknown section(s): {', '.join(unknown)}")
    exp = dict(d.get("experiment", {}))
    exp_fields = {f.name for f in dataclasses.fields(ExperimentConfig)} - {"scenario", "channel", "solver"}
    bad = sorted(set(exp) - exp_fields)
    if bad:
        raise ConfigError(f"unknown key(s) in [experiment]: {', '.join(bad)}")
    for key in ("policies", "backup_capacity"):
        if key in exp and exp[key] is not None:
            exp[key] = tuple(exp[key])
    try:
        return ExperimentConfig(scenario=_build(ScenarioConfig, d.get("scenario"), "scenario"),
                                channel=_build(ChannelParams, d.get("channel"), "channel"),
                                solver=_build(SolverParams, d.get("solver"), "solver"), **exp)
    except (TypeError, ValueError) as e:
        if isinstance(e, ConfigError):
            raise
        raise ConfigError(str(e)) from None


def load_config(path) -> ExperimentConfig:
    try:
        with open(path, "rb") as f:
            data = tomllib.load(f)
    except OSError as e:
        raise ConfigError(f"cannot read config {path}: {e.strerror or e}") from None
    except tomllib.TOMLDecodeError as e:
        raise ConfigError(f"malformed config {path}: {e}") from None
    return config_from_dict(data)


def scenario_rates(cfg: ExperimentConfig, seed: int):
    s = generate_scenario(cfg.scenario, seed)
    return s, build_rate_matrix(s, cfg.channel, eta=cfg.eta, sigma=cfg.sigma, seed=seed)


def calibrate_bias(cfg: ExperimentConfig):
    """Per-AP load bias from DST runs on seeds disjoint from the experiment."""
    loads = []
    for c in range(cfg.lb_runs):
        _, rates = scenario_rates(cfg, cfg.lb_seed + c)
        try:
            loads.append(solve_dst(rates, cfg.solver).association.loads())
        except UnservableNodeError:
            continue
    if not loads:
        raise RuntimeError("load-biasing calibration failed: every calibration scenario has an unservable node")
    return load_biasing_estimate(loads)


@dataclass
class RunOutcome:
    run: int
    seed: int
    reports: list = field(default_factory=list)
    rows: list = field(default_factory=list)
    trace: list = field(default_factory=list)
    skipped: Optional[str] = None


def _fmt(x):
    if x is None:
        return ""
    if isinstance(x, (float, np.floating)):
        return repr(float(x))
    return str(x)


def execute_run(cfg: ExperimentConfig, run: int, bias=None) -> RunOutcome:
    seed = cfg.base_seed + run
    out = RunOutcome(run, seed)
    s, rates = scenario_rates(cfg, seed)
    rng = np.random.default_rng(np.random.SeedSequence([seed, 3]))
    results = []
    try:
        for name in cfg.policies:
            sink = [] if cfg.trace else None
            res = run_policy(name, rates, rng=rng, params=cfg.solver, bias=bias, trace_sink=sink)
            results.append((res, sink or []))
    except UnservableNodeError as e:
        out.skipped = str(e)
        out.rows = [[run, seed, name, "skipped"] + [""] * (len(RESULT_COLUMNS) - 5) + [str(e)]
                    for name in cfg.policies]
        return out
    q = link_los_probabilities(s, cfg.scenario.los_model) if cfg.backup_capacity else None
    for res, events in results:
        rep = summarize(res.allocation, res.association, res.policy, seed, scale=rates.bandwidth_hz)
        out.reports.append(rep)
        sol = res.solution
        b_unc = b_val = None
        if q is not None:
            plan = backup_association(rates, res.association, q, cfg.backup_capacity)
            b_unc, b_val = len(plan.uncovered), plan.value
        row = rep.row()
        out.rows.append([run, seed, rep.policy, "ok", row["objective"], row["objective_per_node"],
                         row["jain_association"], row["jain_throughput"], row["mean_rate"],
                         row["min_rate"], row["loads"],
                         None if sol is None else sol.iterations,
                         None if sol is None else sol.auction_iterations,
                         None if sol is None else sol.gap, b_unc, b_val, ""])
        for outer, ev in events:
            out.trace.append([run, rep.policy, outer, ev.step, ev.sender, ev.receiver, ev.kind, ev.value])
    return out


def _header(f, name, columns):
    f.write(f"# mmwave_assoc {name} v{FORMAT_VERSION}\n")
    w = csv.writer(f, lineterminator="\n")
    w.writerow(columns)
    return w


def _summary_rows(outcomes, policies):
    for p in policies:
        reps = [r for o in outcomes for r in o.reports if r.policy == p]
        row = [p, len(reps)]
        for m in SUMMARY_METRICS:
            if m == "mean_rate_bps":
                vals = np.array([float(np.mean(r.rates)) for r in reps])
            else:
                vals = np.array([getattr(r, m) for r in reps], dtype=float)
            row += [float(vals.mean()) if len(vals) else math.nan,
                    float(vals.std(ddof=1)) if len(vals) > 1 else math.nan]
        yield row


def write_outputs(cfg: ExperimentConfig, outcomes, out_dir):
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    with open(out_dir / "results.csv", "w", newline="") as f:
        w = _header(f, "results", RESULT_COLUMNS)
        for o in outcomes:
            for row in o.rows:
                w.writerow([_fmt(v) for v in row])
    cols = ["policy", "runs"] + [f"{m}_{s}" for m in SUMMARY_METRICS for s in ("mean", "std")]
    with open(out_dir / "summary.csv", "w", newline="") as f:
        w = _header(f, "summary", cols)
        for row in _summary_rows(outcomes, cfg.policies):
            w.writerow([_fmt(v) for v in row])
    with open(out_dir / "cdf.csv", "w", newline="") as f:
        w = _header(f, "cdf", ["rate", "cdf", "policy"])
        reports = [r for o in outcomes for r in o.reports]
        if reports:
            top = max(float(np.max(r.rates)) for r in reports)
            grid = np.linspace(0.0, top, cfg.cdf_points)
            for p in cfg.policies:
                reps = [r for r in reports if r.policy == p]
                if reps:
                    for x, c in zip(grid, rate_cdf(reps, grid)):
                        w.writerow([_fmt(float(x)), _fmt(float(c)), p])
    if cfg.trace:
        with open(out_dir / "auction_trace.csv", "w", newline="") as f:
            w = _header(f, "auction_trace", TRACE_COLUMNS)
            for o in outcomes:
                for row in o.trace:
                    w.writerow([_fmt(v) for v in row])
    return out_dir


def _execute_star(args):
    return execute_run(*args)


def run_experiment(cfg: ExperimentConfig, out_dir=None):
    """Execute all runs and write the CSV files; returns the run outcomes."""
    out_dir = Path(cfg.out if out_dir is None else out_dir)
    try:
        out_dir.mkdir(parents=True, exist_ok=True)
        probe = out_dir / ".write_test"
        probe.touch()
        probe.unlink()
    except OSError as e:
        raise OSError(f"output directory {out_dir} is not writable: {e.strerror or e}") from None
    bias = calibrate_bias(cfg) if "LB" in cfg.policies else None
    jobs = [(cfg, t, bias) for t in range(cfg.runs)]
    if cfg.workers > 1:
        with ProcessPoolExecutor(max_workers=min(cfg.workers, os.cpu_count() or 1)) as pool:
            outcomes = list(pool.map(_execute_star, jobs))
    else:
        outcomes = [execute_run(*j) for j in jobs]
    write_outputs(cfg, outcomes, out_dir)
    return outcomes
