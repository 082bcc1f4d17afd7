"""End-to-end acceptance checks, one test per criterion.

Each test records a PASS/FAIL line that is printed in the session summary.
"""

import csv
import itertools
import math
import time
from collections import defaultdict
from pathlib import Path

import numpy as np
import pytest
from scipy.optimize import linear_sum_assignment

from mmwave_assoc.allocation import (Association, Direct, Relayed, objective,
                                     objective_from_weights, optimal_fractions, pair_rates)
from mmwave_assoc.auction import (AssignmentInstance, Scheduler, brute_force_assignment,
                                  iteration_bound, run_auction, verify_eps_cs)
from mmwave_assoc.channel import ChannelParams, build_rate_matrix, capacity, estimate_snr, eta_rate
from mmwave_assoc.cli import main
from mmwave_assoc.dual import SolverParams, solve_dst
from mmwave_assoc.errors import UnservableNodeError
from mmwave_assoc.policies import optm_bruteforce
from mmwave_assoc.topology import ScenarioConfig, generate_scenario

from conftest import ACCEPTANCE_LINES, random_association, random_rates

ROOT = Path(__file__).resolve().parents[1]


def record(n, ok, detail):
    line = f"criterion {n}: {'PASS' if ok else 'FAIL'} - {detail}"
    ACCEPTANCE_LINES.append(line)
    print(line)
    assert ok, line


# --- 1 ------------------------------------------------------------------------

def _simplex_grid(weights, step=1e-3):
    """argmax of sum w_c log y_c over the full simplex grid (up to 3 shares)."""
    k = len(weights)
    ticks = np.arange(1, round(1 / step)) * step
    if k == 1:
        return np.array([1.0])
    if k == 2:
        Y = np.stack([ticks, 1 - ticks], axis=1)
    else:
        a, b = np.meshgrid(ticks, ticks, indexing="ij")
        keep = a + b < 1 - step / 2
        Y = np.stack([a[keep], b[keep], 1 - a[keep] - b[keep]], axis=1)
    val = np.log(Y) @ np.asarray(weights, dtype=float)
    return Y[np.argmax(val)]


def test_criterion_1_lemma_oracles():
    t0 = time.perf_counter()
    rng = np.random.default_rng(1)
    worst_rate = 0.0
    for _ in range(1000):
        c_ij, c_jk = rng.uniform(0.05, 10.0, 2)
        grid = np.arange(1, int(min(c_ij, c_jk) / 1e-3) + 1) * 1e-3
        grid = grid[(grid <= c_ij) & (grid < c_jk)]
        best = grid[np.argmax(np.log(grid) + np.log(c_jk - grid))]
        r_i, _ = pair_rates(c_ij, c_jk)
        worst_rate = max(worst_rate, abs(float(r_i) - best))
    worst_frac = 0.0
    for pairs, singles in [(1, 0), (0, 1), (1, 1), (2, 0), (0, 2), (1, 2), (2, 1), (3, 0), (0, 3)]:
        clients = [Relayed(j, 0) for j in range(pairs)] + [Direct(0)] * singles
        yc, _, _ = optimal_fractions(Association(tuple(clients), (0,) * pairs, 1))
        # a pair's two members share one fraction, hence weight 2
        grid = _simplex_grid([2] * pairs + [1] * singles)
        worst_frac = max(worst_frac, float(np.max(np.abs(yc - grid))))
    dt = time.perf_counter() - t0
    record(1, worst_rate <= 1e-3 + 1e-12 and worst_frac <= 1e-3 + 1e-12 and dt < 10,
           f"max rate error {worst_rate:.2e}, max fraction error {worst_frac:.2e}, {dt:.1f}s")


# --- 2 ------------------------------------------------------------------------

def test_criterion_2_objective_identity():
    t0 = time.perf_counter()
    rng = np.random.default_rng(2)
    worst = 0.0
    for _ in range(1000):
        m, n, k = int(rng.integers(1, 8)), int(rng.integers(0, 4)), int(rng.integers(1, 4))
        rates = random_rates(rng, m, n, k)
        a = random_association(rng, m, n, k)
        worst = max(worst, abs(objective(a, rates) - objective_from_weights(a, rates)))
    dt = time.perf_counter() - t0
    record(2, worst <= 1e-9 and dt < 5, f"max |difference| {worst:.2e}, {dt:.1f}s")


# --- 3 and 4 --------------------------------------------------------------------

def _lsa_value(inst):
    M, N = inst.M, inst.N
    big = -1e9
    fin = lambda a: np.where(np.isfinite(a), a, big)
    W = np.full((M + N, N + M), big)
    W[:M, :N] = fin(inst.pair)
    W[np.arange(M), N + np.arange(M)] = fin(inst.direct)
    W[M + np.arange(N), np.arange(N)] = fin(inst.alone)
    W[M:, N:] = 0.0
    rows, cols = linear_sum_assignment(W, maximize=True)
    return float(W[rows, cols].sum())


@pytest.fixture(scope="module")
def auction_runs():
    """200 integer and 200 real instances with M, N <= 6."""
    rng = np.random.default_rng(3)
    t0 = time.perf_counter()
    out = []
    for integer in (True, False):
        for _ in range(200):
            M, N = int(rng.integers(1, 7)), int(rng.integers(1, 7))
            draw = ((lambda *s: rng.integers(-10, 11, size=s).astype(float)) if integer
                    else (lambda *s: rng.uniform(-10, 10, size=s)))
            inst = AssignmentInstance(draw(M, N), draw(M), draw(N))
            eps = 0.99 / M if integer else float(rng.choice([0.01, 0.1]))
            res = run_auction(inst, eps, Scheduler(int(rng.integers(1 << 30))))
            out.append((integer, inst, eps, res))
    return out, time.perf_counter() - t0


def test_criterion_3_auction_exactness(auction_runs):
    runs, dt = auction_runs
    exact = real_ok = 0
    for integer, inst, eps, res in runs:
        if integer:
            brute = brute_force_assignment(inst).value
            exact += res.value == brute and res.value == _lsa_value(inst)
        else:
            real_ok += res.value >= _lsa_value(inst) - inst.M * eps - 1e-9
    record(3, exact == 200 and real_ok == 200 and dt < 30,
           f"integer exact {exact}/200, real within M*eps {real_ok}/200, {dt:.1f}s")


def test_criterion_4_auction_termination(auction_runs):
    runs, _ = auction_runs
    n_integer = sum(1 for integer, *_ in runs if integer)
    within = sum(res.iterations <= iteration_bound(inst, eps)
                 for integer, inst, eps, res in runs if integer)
    cs = sum(verify_eps_cs(inst, res) for integer, inst, eps, res in runs if integer)
    ratio = max(res.iterations / max(iteration_bound(inst, eps), 1)
                for integer, inst, eps, res in runs if integer)
    record(4, within == n_integer and cs == n_integer,
           f"bound respected {within}/{n_integer} (max ratio {ratio:.3f}), eps-CS {cs}/{n_integer}")


# --- 5 ------------------------------------------------------------------------

def test_criterion_5_near_optimality():
    t0 = time.perf_counter()
    params = SolverParams()
    rels, bound_ok, n = [], 0, 0
    seed = 0
    while n < 50:
        rng = np.random.default_rng(seed)
        M, N = int(rng.integers(1, 7)), int(rng.integers(0, 4))
        cfg = ScenarioConfig(n_clients=M, n_relays=N, n_aps=2, width=60.0, height=60.0,
                             obstacle_density=0.5)
        rates = build_rate_matrix(generate_scenario(cfg, seed), ChannelParams())
        seed += 1
        try:
            sol = solve_dst(rates, params)
        except UnservableNodeError:
            continue
        n += 1
        opt = objective(optm_bruteforce(rates), rates)
        bound_ok += sol.objective >= opt - (M * params.epsilon + sol.gap) - 1e-9
        rels.append((opt - sol.objective) / abs(opt) if opt != 0 else opt - sol.objective)
    dt = time.perf_counter() - t0
    med = float(np.median(rels))
    record(5, bound_ok == 50 and med <= 0.01 and dt < 120,
           f"bound holds {bound_ok}/50, median relative gap {med:.4f}, "
           f"max {max(rels):.4f}, {dt:.1f}s")


# --- 6, 7, 9 --------------------------------------------------------------------

@pytest.fixture(scope="module")
def default_runs(tmp_path_factory):
    """The shipped configuration run twice through the command line."""
    base = tmp_path_factory.mktemp("acceptance")
    cfg = ROOT / "configs" / "default.toml"
    times, codes = [], []
    for name in ("a", "b"):
        t0 = time.perf_counter()
        codes.append(main(["run", "--config", str(cfg), "--out", str(base / name)]))
        times.append(time.perf_counter() - t0)
    return base / "a", base / "b", codes, times


def _results(path):
    with open(path / "results.csv") as f:
        f.readline()
        rows = [r for r in csv.DictReader(f) if r["status"] == "ok"]
    by = defaultdict(list)
    for r in rows:
        by[r["policy"]].append(r)
    return by


def _mean(rows, key):
    return float(np.mean([float(r[key]) for r in rows]))


def test_criterion_6_fairness_direction(default_runs):
    a, _, codes, times = default_runs
    assert codes[0] == 0
    by = _results(a)
    ja = {p: _mean(rows, "jain_association") for p, rows in by.items()}
    jt = {p: _mean(rows, "jain_throughput") for p, rows in by.items()}
    obj = {p: _mean(rows, "objective") for p, rows in by.items()}
    ok = (all(ja["DST"] > ja[p] and jt["DST"] > jt[p] for p in ("RSSI", "RAND"))
          and obj["DST"] >= obj["DST_R"] and times[0] < 300)
    record(6, ok,
           f"{len(by['DST'])} runs; Jain assoc DST {ja['DST']:.3f} RSSI {ja['RSSI']:.3f} "
           f"RAND {ja['RAND']:.3f}; Jain thr DST {jt['DST']:.3f} RSSI {jt['RSSI']:.3f} "
           f"RAND {jt['RAND']:.3f}; objective DST {obj['DST']:.2f} DST_R {obj['DST_R']:.2f}; "
           f"{times[0]:.1f}s")


def test_criterion_7_load_biasing(default_runs):
    a, _, codes, _ = default_runs
    assert codes[0] == 0
    by = _results(a)
    dst, lb = _mean(by["DST"], "objective"), _mean(by["LB"], "objective")
    rel = abs(dst - lb) / abs(dst)
    outer = {r["outer_iterations"] for r in by["LB"]}
    record(7, rel <= 0.05 and outer == {"0"},
           f"LB {lb:.2f} vs DST {dst:.2f} (relative difference {rel:.3%}), "
           f"LB outer iterations {sorted(outer)}")


def test_criterion_9_determinism(default_runs):
    a, b, codes, _ = default_runs
    names = sorted(p.name for p in a.iterdir())
    same = codes == [0, 0] and names == sorted(p.name for p in b.iterdir()) and all(
        (a / n).read_bytes() == (b / n).read_bytes() for n in names)
    record(9, same, f"{len(names)} files compared ({', '.join(names)})")


# --- 8 ------------------------------------------------------------------------

def test_criterion_8_quantile_calibration():
    t0 = time.perf_counter()
    rng = np.random.default_rng(8)
    worst = 0.0
    for eta, sigma in itertools.product((0.05, 0.1, 0.5), (0.5, 1.0, 2.0)):
        true_db = rng.uniform(-5.0, 30.0, size=10_000)
        est_db = estimate_snr(true_db, sigma, rng)
        true_cap = capacity(10 ** (true_db / 10))
        viol = float(np.mean(true_cap < eta_rate(est_db, sigma, eta)))
        worst = max(worst, abs(viol - eta))
    dt = time.perf_counter() - t0
    record(8, worst <= 0.02 and dt < 10, f"max |violation - eta| {worst:.4f} over 9 cells, {dt:.2f}s")
