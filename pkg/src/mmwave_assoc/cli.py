"""Command-line entry point.

Exit codes: 0 success, 1 usage or configuration error, 2 runtime error.
"""

from __future__ import annotations

import argparse
import sys
from pathlib import Path

import numpy as np

from .allocation import objective
from .dual import solve_dst
from .auction import Scheduler, reduce_to_assignment, run_auction, utility_table, write_trace
from .errors import ConfigError, EnumerationLimitError, UnservableNodeError
from .harness import ExperimentConfig, calibrate_bias, load_config, run_experiment, scenario_rates
from .metrics import summarize
from .policies import PolicyId, optm_bruteforce, run_policy
from .topology import ScenarioConfig


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(f"{self.format_usage()}{self.prog}: error: {message}")


def build_parser():
    p = _Parser(prog="mmwave-assoc", description="Client/relay/AP association experiments.")
    sub = p.add_subparsers(dest="command", metavar="COMMAND", parser_class=_Parser)
    sub.required = True

    def common(sp, policy=False):
        sp.add_argument("--config", metavar="PATH", help="TOML experiment configuration")
        sp.add_argument("--seed", type=int, metavar="N", help="base seed / scenario seed")
        sp.add_argument("--epsilon", type=float, metavar="X", help="auction bid increment")
        sp.add_argument("--eta", type=float, metavar="X", help="outage level of the quantile rates")
        sp.add_argument("--sigma", type=float, metavar="X", help="SNR estimation error std-dev (dB)")
        if policy:
            sp.add_argument("--policy", metavar="NAME", help="policy name, e.g. DST or RSSI")

    r = sub.add_parser("run", help="Monte Carlo experiment from a config file")
    common(r, policy=True)
    r.add_argument("--out", metavar="DIR", help="output directory")
    r.add_argument("--runs", type=int, metavar="N", help="number of Monte Carlo runs")

    s = sub.add_parser("solve", help="solve one scenario with one policy and print its report")
    common(s, policy=True)

    o = sub.add_parser("oracle", help="compare DST against exhaustive search on small instances")
    common(o)
    o.add_argument("--runs", type=int, metavar="N", default=1, help="number of instances")

    t = sub.add_parser("trace", help="print the auction event trace of one instance")
    common(t)
    t.add_argument("--out", metavar="DIR", help="write auction_trace.csv here instead of stdout")
    return p


def _config(args) -> ExperimentConfig:
    cfg = load_config(args.config) if args.config else ExperimentConfig()
    kw = {}
    for name in ("eta", "sigma"):
        if getattr(args, name, None) is not None:
            kw[name] = getattr(args, name)
    if getattr(args, "seed", None) is not None:
        kw["base_seed"] = args.seed
    if getattr(args, "runs", None) is not None and args.command == "run":
        kw["runs"] = args.runs
    if getattr(args, "out", None) is not None and args.command == "run":
        kw["out"] = args.out
    if getattr(args, "policy", None) and args.command == "run":
        kw["policies"] = tuple(p.strip() for p in args.policy.split(","))
    if args.epsilon is not None:
        try:
            kw["solver"] = cfg.solver.__class__(**{**cfg.solver.__dict__, "epsilon": args.epsilon})
        except ValueError as e:
            raise ConfigError(str(e)) from None
    try:
        return cfg.replace(**kw) if kw else cfg
    except ValueError as e:
        raise ConfigError(str(e)) from None


def cmd_run(args, out):
    cfg = _config(args)
    outcomes = run_experiment(cfg)
    skipped = sum(o.skipped is not None for o in outcomes)
    print(f"wrote results for {len(outcomes) - skipped} run(s) to {cfg.out}"
          + (f" ({skipped} skipped)" if skipped else ""), file=out)


def cmd_solve(args, out):
    cfg = _config(args)
    try:
        policy = PolicyId.parse(args.policy or "DST")
    except ValueError as e:
        raise ConfigError(str(e)) from None
    seed = cfg.base_seed
    _, rates = scenario_rates(cfg, seed)
    bias = None
    if policy is PolicyId.LB:
        bias = calibrate_bias(cfg)
    rng = np.random.default_rng(np.random.SeedSequence([seed, 3]))
    res = run_policy(policy, rates, rng=rng, params=cfg.solver, bias=bias)
    rep = summarize(res.allocation, res.association, policy, seed, scale=rates.bandwidth_hz)
    for k, v in rep.row().items():
        print(f"{k}: {v}", file=out)
    if res.solution is not None:
        print(f"outer_iterations: {res.solution.iterations}", file=out)
        print(f"gap: {res.solution.gap}", file=out)
    print(f"association: {res.association.encode()}", file=out)


def _guard_config(cfg):
    sc = cfg.scenario
    k = min(sc.n_aps, 2)
    return cfg.replace(scenario=ScenarioConfig(
        n_clients=min(sc.n_clients, 5), n_relays=min(sc.n_relays, 2), n_aps=k,
        width=sc.width, height=sc.height, obstacle_density=sc.obstacle_density,
        obstacle_length=sc.obstacle_length, opaque_fraction=sc.opaque_fraction,
        los_decay=sc.los_decay,
        ap_positions=None if sc.ap_positions is None else tuple(sc.ap_positions)[:k]),
        backup_capacity=None)


def cmd_oracle(args, out):
    cfg = _guard_config(_config(args))
    print("seed,dst,optm,gap,relative_gap", file=out)
    for t in range(args.runs):
        seed = cfg.base_seed + t
        _, rates = scenario_rates(cfg, seed)
        try:
            sol = solve_dst(rates, cfg.solver)
        except UnservableNodeError as e:
            print(f"{seed},,,,skipped: {e}", file=out)
            continue
        best = objective(optm_bruteforce(rates), rates)
        rel = (best - sol.objective) / abs(best) if best != 0 else best - sol.objective
        print(f"{seed},{sol.objective!r},{best!r},{sol.gap!r},{rel!r}", file=out)


def cmd_trace(args, out):
    cfg = _config(args)
    _, rates = scenario_rates(cfg, cfg.base_seed)
    lam = np.full(rates.n_aps, cfg.solver.lambda0)
    inst = reduce_to_assignment(utility_table(rates), lam)
    res = run_auction(inst, cfg.solver.epsilon, Scheduler(cfg.solver.scheduler_seed),
                      max_rounds=cfg.solver.max_auction_iters, trace=True)
    if args.out:
        d = Path(args.out)
        d.mkdir(parents=True, exist_ok=True)
        with open(d / "auction_trace.csv", "w", newline="") as f:
            write_trace(res.trace, f)
    else:
        write_trace(res.trace, out)


COMMANDS = {"run": cmd_run, "solve": cmd_solve, "oracle": cmd_oracle, "trace": cmd_trace}


def main(argv=None, out=None) -> int:
    out = sys.stdout if out is None else out
    try:
        args = build_parser().parse_args(argv)
    except UsageError as e:
        print(e, file=sys.stderr)
        return 1
    except SystemExit as e:  # --help
        return 0 if not e.code else 1
    try:
        COMMANDS[args.command](args, out)
    except (ConfigError, EnumerationLimitError) as e:
        print(f"configuration error: {e}", file=sys.stderr)
        return 1
    except (ValueError, OSError, RuntimeError) as e:
        print(f"error: {e}", file=sys.stderr)
        return 2
    return 0


if __name__ == "__main__":
    sys.exit(main())
