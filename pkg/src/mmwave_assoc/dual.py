"""Primal-dual association solver with per-AP load prices.

Each AP k holds a price ``lam[k]`` on its load. For fixed prices the
association problem splits into a closed-form load subproblem per AP and a
client/relay assignment solved by the auction; the prices then follow a
projected-free subgradient step. Every auction outcome is lifted to a full
association and the best one seen is returned.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field, replace
from typing import NamedTuple, Optional, Sequence

import numpy as np

from .allocation import Association, AllocationResult, Direct, Relayed, allocate
from .auction import (VIRTUAL, AssignmentInstance, AssignmentResult, Scheduler,
                      assignment_dual_bound, reduce_to_assignment, run_auction,
                      utility_table)
from .channel import RateMatrix
from .errors import UnservableNodeError
from .topology import CLIENT, RELAY, Node


@dataclass(frozen=True)
class SolverParams:
    epsilon: float = 0.01
    max_outer_iters: int = 200
    max_auction_iters: Optional[int] = 500
    step0: float = 0.1
    tol: float = 1e-6
    lambda0: float = 1.0
    scheduler_seed: Optional[int] = None
    broadcast: bool = False
    # local AP re-assignment of every lifted iterate before it competes for best
    rebalance: bool = True

    def __post_init__(self):
        if not self.epsilon > 0:
            raise ValueError("epsilon must be positive")
        if self.max_outer_iters < 1:
            raise ValueError("max_outer_iters must be >= 1")
        if self.max_auction_iters is not None and self.max_auction_iters < 1:
            raise ValueError("max_auction_iters must be >= 1")
        if not (self.step0 > 0 and self.tol > 0):
            raise ValueError("step0 and tol must be positive")

    def step(self, t):
        return self.step0 / math.sqrt(t)


class IterationRecord(NamedTuple):
    t: int
    lam: np.ndarray
    dual: float
    primal: float
    gap: float
    loads: np.ndarray
    auction_iterations: int
    association: Association


@dataclass
class DualState:
    lam: np.ndarray
    n: np.ndarray
    loads: np.ndarray
    t: int = 0
    history: list = field(default_factory=list)


@dataclass
class Solution:
    association: Association
    allocation: AllocationResult
    gap: float
    iterations: int
    lam: np.ndarray
    history: list = field(default_factory=list, repr=False)
    auction_iterations: int = 0
    best_iteration: int = 0

    @property
    def objective(self):
        return self.allocation.objective

    @property
    def load_history(self):
        return [rec.loads for rec in self.history]

    def trace_rows(self):
        for rec in self.history:
            yield [rec.t, *[repr(float(v)) for v in rec.lam], repr(float(rec.dual)),
                   repr(float(rec.primal)), repr(float(rec.gap))]

    def write_trace(self, f):
        w = csv.writer(f, lineterminator="\n")
        k = len(self.lam)
        w.writerow(["t", *[f"lambda_{i}" for i in range(k)], "dual", "primal", "gap"])
        w.writerows(self.trace_rows())


def subproblem_n(lam):
    """Load maximizing ``n * (lam - log n)``: ``exp(lam - 1)``."""
    out = np.exp(np.asarray(lam, dtype=float) - 1.0)
    return float(out) if out.ndim == 0 else out


def load_dual(lam) -> float:
    """Optimal value of the AP-side subproblem, ``sum_k exp(lam_k - 1)``."""
    return float(np.sum(np.exp(np.asarray(lam, dtype=float) - 1.0)))


def update_dual(state: DualState, step: float) -> DualState:
    """Subgradient step: prices fall where the target load exceeds the assigned load."""
    if not step > 0:
        raise ValueError("step must be positive")
    lam = state.lam - step * (state.n - state.loads)
    return replace(state, lam=lam, t=state.t + 1)


def check_servable(rates: RateMatrix):
    for j in range(rates.n_relays):
        if not np.any(rates.relay_ap[j] > 0):
            raise UnservableNodeError(Node(RELAY, j), "no usable link to any AP")
    relay_ok = np.any(rates.relay_ap > 0, axis=1)
    for i in range(rates.n_clients):
        if np.any(rates.client_ap[i] > 0):
            continue
        if rates.n_relays and np.any((rates.client_relay[i] > 0) & relay_ok):
            continue
        raise UnservableNodeError(Node(CLIENT, i), "no usable path to any AP")


def lift(inst: AssignmentInstance, res: AssignmentResult, n_aps: int) -> Association:
    """Turn a client/relay matching back into a full association."""
    relays = [int(inst.alone_ap[j]) for j in range(inst.N)]
    clients = []
    for i, j in enumerate(res.client_match):
        if j == VIRTUAL:
            clients.append(Direct(int(inst.direct_ap[i])))
        else:
            k = int(inst.pair_ap[i, j])
            relays[j] = k
            clients.append(Relayed(int(j), k))
    return Association(tuple(clients), tuple(relays), n_aps)


def _xlogx(n):
    return n * math.log(n) if n > 0 else 0.0


def _load_cost(loads, delta):
    return sum(_xlogx(loads[k] + d) - _xlogx(loads[k]) for k, d in delta.items())


def _add(delta, k, w):
    delta[k] = delta.get(k, 0) + w
    return delta


def rebalance(assoc: Association, table, rematch: bool = False) -> Association:
    """First-improvement local search scored by ``sum log a - sum n log n``.

    Units (a direct client, a lone relay, or a client-relay pair of weight 2)
    move between APs. With ``rematch`` a pair may also split into a direct
    client and a lone relay, and a direct client may join a lone relay. The
    result is never worse than ``assoc``.
    """
    K = assoc.n_aps
    ks = range(K)
    direct, alone, pair = table.direct, table.alone, table.pair
    # client i -> (relay or None, ap); lone relays keep their own ap
    cl = [(p.relay, p.ap) if isinstance(p, Relayed) else (None, p.ap) for p in assoc.clients]
    helper = assoc.helper_of()
    lone = {j: k for j, k in enumerate(assoc.relays) if j not in helper}
    loads = assoc.loads().astype(float)

    def util(i, j, k):
        return direct[i, k] if j is None else pair[i, j, k]

    def apply(delta):
        for k, d in delta.items():
            loads[k] += d

    improved, passes = True, 0
    while improved and passes < 100:
        improved, passes = False, passes + 1
        for i, (j, k) in enumerate(cl):
            w = 1 if j is None else 2
            u0 = util(i, j, k)
            best = (1e-12, None)
            for k2 in ks:
                if k2 != k and np.isfinite(util(i, j, k2)):
                    d = {k: -w, k2: w}
                    g = util(i, j, k2) - u0 - _load_cost(loads, d)
                    if g > best[0]:
                        best = (g, ((j, k2), None, d))
            if rematch and j is not None:
                # split the pair
                for k1 in ks:
                    for k2 in ks:
                        if np.isfinite(direct[i, k1]) and np.isfinite(alone[j, k2]):
                            d = _add(_add({k: -2}, k1, 1), k2, 1)
                            g = direct[i, k1] + alone[j, k2] - u0 - _load_cost(loads, d)
                            if g > best[0]:
                                best = (g, ((None, k1), (j, k2), d))
            elif rematch:
                for j2, kj in lone.items():
                    for k2 in ks:
                        if np.isfinite(pair[i, j2, k2]):
                            d = _add({k: -1, kj: -1} if kj != k else {k: -2}, k2, 2)
                            g = pair[i, j2, k2] - u0 - alone[j2, kj] - _load_cost(loads, d)
                            if g > best[0]:
                                best = (g, ((j2, k2), ("join", j2), d))
            if best[1] is None:
                continue
            new, extra, d = best[1]
            cl[i] = new
            if extra is not None and extra[0] == "join":
                del lone[extra[1]]
            elif extra is not None:
                lone[extra[0]] = extra[1]
            apply(d)
            improved = True
        for j, k in list(lone.items()):
            best = (1e-12, k)
            for k2 in ks:
                if k2 != k and np.isfinite(alone[j, k2]):
                    g = alone[j, k2] - alone[j, k] - _load_cost(loads, {k: -1, k2: 1})
                    if g > best[0]:
                        best = (g, k2)
            if best[1] != k:
                apply({k: -1, best[1]: 1})
                lone[j] = best[1]
                improved = True
    relays = list(assoc.relays)
    for j, k in lone.items():
        relays[j] = k
    clients = []
    for i, (j, k) in enumerate(cl):
        if j is None:
            clients.append(Direct(k))
        else:
            clients.append(Relayed(j, k))
            relays[j] = k
    return Association(tuple(clients), tuple(relays), K)


def _solve_at(table, lam, rates, params, trace=False):
    inst = reduce_to_assignment(table, lam)
    res = run_auction(inst, params.epsilon, Scheduler(params.scheduler_seed),
                      max_rounds=params.max_auction_iters, trace=trace,
                      broadcast=params.broadcast)
    assoc = lift(inst, res, rates.n_aps)
    alloc = allocate(assoc, rates)
    dual = load_dual(lam) + assignment_dual_bound(inst, res.prices)
    return inst, res, assoc, alloc, dual


def solve_dst(rates: RateMatrix, params: SolverParams = SolverParams(), trace_sink=None) -> Solution:
    """Primal-dual solver with best-iterate tracking.

    Prices follow the raw auction lift of each iterate. With
    ``params.rebalance`` each lift is also improved by :func:`rebalance`
    before competing for the returned association.

    ``trace_sink``, if given, collects ``(outer iteration, TraceEvent)``
    pairs from every auction.

    Stops after ``max_outer_iters`` price updates, when the certified gap or
    the relative change of the dual value drops below ``tol``. The reported
    gap is the smallest dual value seen minus the best primal objective, an
    upper bound on the distance to the optimum.
    """
    check_servable(rates)
    table = utility_table(rates)
    K = rates.n_aps
    cap = rates.n_clients + rates.n_relays
    state = DualState(np.full(K, params.lambda0, dtype=float), np.zeros(K), np.zeros(K))
    best = None
    best_dual = math.inf
    prev_dual = None
    total_bids = 0
    for t in range(1, params.max_outer_iters + 1):
        inst, res, assoc, alloc, dual = _solve_at(table, state.lam, rates, params,
                                                  trace=trace_sink is not None)
        if trace_sink is not None:
            trace_sink.extend((t, ev) for ev in res.trace)
        total_bids += res.iterations
        best_dual = min(best_dual, dual)
        cand, cand_alloc = assoc, alloc
        if params.rebalance:
            cand = rebalance(assoc, table)
            cand_alloc = alloc if cand == assoc else allocate(cand, rates)
        if best is None or cand_alloc.objective > best[1].objective:
            best = (cand, cand_alloc, t)
        loads = assoc.loads()
        gap = best_dual - best[1].objective
        state.history.append(IterationRecord(t, state.lam.copy(), dual, alloc.objective, gap,
                                             loads.copy(), res.iterations, assoc))
        # an upper clamp only: a lower clamp at 1 zeroes the subgradient of an AP
        # holding one node whenever its price sits below 1, freezing it there
        state.n = np.minimum(subproblem_n(state.lam), cap)
        state.loads = loads.astype(float)
        if gap <= params.tol * max(1.0, abs(best[1].objective)):
            break
        if prev_dual is not None and abs(dual - prev_dual) <= params.tol * max(1.0, abs(prev_dual)):
            break
        prev_dual = dual
        state = update_dual(state, params.step(t))
    assoc, alloc, t_best = best
    if params.rebalance:
        final = rebalance(assoc, table, rematch=True)
        if final != assoc:
            assoc, alloc = final, allocate(final, rates)
    # report the prices behind the last evaluated iterate
    return Solution(assoc, alloc, best_dual - alloc.objective, len(state.history),
                    state.history[-1].lam.copy(), state.history, total_bids, t_best)


def load_biasing_estimate(history: Sequence) -> np.ndarray:
    """Per-AP bias ``log(mean load) + 1`` from a history of per-AP loads."""
    h = np.asarray(history, dtype=float)
    if h.size == 0:
        raise ValueError("load history is empty")
    h = h.reshape(len(h), -1)
    if np.any(h < 0):
        raise ValueError("loads must be non-negative")
    mean = h.mean(axis=0)
    if np.any(mean <= 0):
        raise ValueError("every AP needs a positive mean load")
    return np.log(mean) + 1.0


def solve_lb(rates: RateMatrix, bias, params: SolverParams = SolverParams(), trace_sink=None) -> Solution:
    """Single-shot association with prices fixed to ``bias``; no price updates."""
    bias = np.asarray(bias, dtype=float).reshape(-1)
    if bias.size != rates.n_aps or not np.all(np.isfinite(bias)):
        raise ValueError("bias must hold one finite value per AP")
    check_servable(rates)
    table = utility_table(rates)
    inst, res, assoc, alloc, dual = _solve_at(table, bias, rates, params, trace=trace_sink is not None)
    if trace_sink is not None:
        trace_sink.extend((0, ev) for ev in res.trace)
    rec = IterationRecord(0, bias.copy(), dual, alloc.objective, dual - alloc.objective,
                          assoc.loads(), res.iterations, assoc)
    return Solution(assoc, alloc, dual - alloc.objective, 0, bias.copy(), [rec],
                    res.iterations, 0)
