"""Asymmetric client/relay assignment and its distributed auction solver.

For fixed per-AP prices ``lam`` the association subproblem collapses to an
assignment between clients and relays: every client picks a relay or the
virtual relay ``v`` (its best direct AP) and every relay is taken by at most
one client, otherwise by the virtual client ``u`` (it serves only itself).
Index ``-1`` stands for ``v`` in client matches and for ``u`` in relay
matches.
"""

from __future__ import annotations

import csv
import math
import random
from dataclasses import dataclass, field
from typing import NamedTuple, Optional

import numpy as np

from .allocation import utility_weight_relayed
from .channel import RateMatrix
from .errors import EnumerationLimitError

VIRTUAL = -1


def _log(x):
    with np.errstate(divide="ignore"):
        return np.log(x)


class UtilityTable(NamedTuple):
    """Log-utility of each (client, relay, AP) option.

    ``direct[i, k]``: client i alone at AP k; ``alone[j, k]``: relay j alone
    at AP k; ``pair[i, j, k]``: client i via relay j at AP k, including the
    relay's own utility. ``-inf`` marks unusable options.
    """

    direct: np.ndarray
    alone: np.ndarray
    pair: np.ndarray


def utility_table(rates: RateMatrix) -> UtilityTable:
    direct = _log(rates.client_ap)
    alone = _log(rates.relay_ap)
    c_ij = rates.client_relay[:, :, None]
    c_jk = rates.relay_ap[None, :, :]
    pair = _log(utility_weight_relayed(c_ij, c_jk) * c_jk)
    pair = np.asarray(pair).reshape(rates.n_clients, rates.n_relays, rates.n_aps)
    return UtilityTable(direct, alone, pair)


@dataclass(frozen=True)
class AssignmentInstance:
    """Benefits of the reduced assignment problem.

    ``pair`` is (M, N), ``direct`` (M,) is each client's benefit for ``v`` and
    ``alone`` (N,) each relay's benefit for ``u``. The ``*_ap`` arrays record
    the maximizing AP behind each benefit (-1 when not derived from APs).
    """

    pair: np.ndarray
    direct: np.ndarray
    alone: np.ndarray
    pair_ap: Optional[np.ndarray] = None
    direct_ap: Optional[np.ndarray] = None
    alone_ap: Optional[np.ndarray] = None
    pair_weight: float = 2.0

    def __post_init__(self):
        direct = np.asarray(self.direct, dtype=float).reshape(-1)
        alone = np.asarray(self.alone, dtype=float).reshape(-1)
        pair = np.asarray(self.pair, dtype=float).reshape(len(direct), len(alone))
        object.__setattr__(self, "pair", pair)
        object.__setattr__(self, "direct", direct)
        object.__setattr__(self, "alone", alone)
        for name, shape in (("pair_ap", pair.shape), ("direct_ap", direct.shape), ("alone_ap", alone.shape)):
            v = getattr(self, name)
            v = np.full(shape, -1, dtype=int) if v is None else np.asarray(v, dtype=int).reshape(shape)
            object.__setattr__(self, name, v)
        if np.any(np.isnan(pair)) or np.any(np.isnan(direct)) or np.any(np.isnan(alone)):
            raise ValueError("benefits must not be NaN")
        if np.any(np.isposinf(pair)) or np.any(np.isposinf(direct)) or np.any(np.isposinf(alone)):
            raise ValueError("benefits must be finite or -inf")

    @property
    def M(self):
        return len(self.direct)

    @property
    def N(self):
        return len(self.alone)

    @property
    def alpha(self):
        """Full (M+1, N+1) benefit matrix; last row is ``u``, last column ``v``."""
        a = np.zeros((self.M + 1, self.N + 1))
        a[:-1, :-1] = self.pair
        a[:-1, -1] = self.direct
        a[-1, :-1] = self.alone
        return a

    @classmethod
    def from_alpha(cls, alpha):
        a = np.asarray(alpha, dtype=float)
        return cls(a[:-1, :-1], a[:-1, -1], a[-1, :-1])

    def spread(self):
        """Max minus min over the finite benefits (``alpha_uv = 0`` included)."""
        vals = np.concatenate([self.pair.ravel(), self.direct, self.alone, [0.0]])
        vals = vals[np.isfinite(vals)]
        return float(vals.max() - vals.min())

    def unservable_clients(self):
        reachable = np.isfinite(self.direct)
        if self.N:
            reachable |= np.isfinite(self.pair).any(axis=1)
        return [int(i) for i in np.flatnonzero(~reachable)]

    def unservable_relays(self):
        return [int(j) for j in np.flatnonzero(~np.isfinite(self.alone))]

    def value(self, client_match):
        """Total benefit of a client -> relay/v map; unmatched relays take ``u``."""
        client_match = np.asarray(client_match, dtype=int)
        total = 0.0
        taken = np.zeros(self.N, dtype=bool)
        for i, j in enumerate(client_match):
            if j == VIRTUAL:
                total += self.direct[i]
            else:
                total += self.pair[i, j]
                taken[j] = True
        return float(total + self.alone[~taken].sum())


def reduce_to_assignment(table: UtilityTable, lam, pair_weight=2.0) -> AssignmentInstance:
    """Pick the best AP for every option under load prices ``lam``.

    Ties go to the lowest AP index.
    """
    lam = np.asarray(lam, dtype=float).reshape(-1)
    if lam.size == 0:
        raise ValueError("at least one AP is required")
    if lam.size != table.direct.shape[1]:
        raise ValueError("lam must have one entry per AP")
    d = table.direct - lam[None, :]
    a = table.alone - lam[None, :]
    p = table.pair - pair_weight * lam[None, None, :]
    d_ap = np.argmax(d, axis=1) if d.size else np.zeros(d.shape[0], dtype=int)
    a_ap = np.argmax(a, axis=1) if a.size else np.zeros(a.shape[0], dtype=int)
    p_ap = np.argmax(p, axis=2) if p.size else np.zeros(p.shape[:2], dtype=int)
    take = lambda v, idx: np.take_along_axis(v, idx[..., None], axis=-1)[..., 0]
    return AssignmentInstance(
        take(p, p_ap), take(d, d_ap), take(a, a_ap),
        pair_ap=p_ap, direct_ap=d_ap, alone_ap=a_ap, pair_weight=pair_weight)


def _channel(ev):
    kind = ev[0]
    if kind == "wake":
        return ("wake", ev[1])
    if kind == "bid":
        return ("c2r", ev[1], ev[2])
    return ("r2c", ev[1], ev[2])


class Scheduler:
    """Decides which pending event is delivered next.

    ``seed=None`` delivers events first-in first-out. An integer seed picks
    uniformly with a private RNG among the oldest pending event of every
    channel, so messages between one sender and one receiver never overtake
    each other.
    """

    def __init__(self, seed=None):
        self.seed = seed
        self._rng = None if seed is None else random.Random(seed)

    def pop(self, queue):
        if self._rng is None:
            return queue.pop(0)
        seen = set()
        heads = []
        for idx, ev in enumerate(queue):
            ch = _channel(ev)
            if ch not in seen:
                seen.add(ch)
                heads.append(idx)
        return queue.pop(heads[self._rng.randrange(len(heads))])


class TraceEvent(NamedTuple):
    step: int
    sender: str
    receiver: str
    kind: str
    value: float


def write_trace(events, f, header=True):
    w = csv.writer(f, lineterminator="\n")
    if header:
        w.writerow(["step", "sender", "receiver", "kind", "value"])
    for e in events:
        w.writerow([e.step, e.sender, e.receiver, e.kind, repr(float(e.value))])


@dataclass
class AssignmentResult:
    client_match: np.ndarray
    relay_match: np.ndarray
    value: float
    iterations: int = 0
    prices: Optional[np.ndarray] = None
    epsilon: Optional[float] = None
    converged: bool = True
    trace: list = field(default_factory=list, repr=False)
    rounds: int = 0

    @property
    def clients_on_relays(self):
        return int(np.sum(self.client_match != VIRTUAL))


def _relay_match(client_match, n_relays):
    out = np.full(n_relays, VIRTUAL, dtype=int)
    for i, j in enumerate(client_match):
        if j != VIRTUAL:
            out[j] = i
    return out


def run_auction(inst: AssignmentInstance, epsilon: float, scheduler: Optional[Scheduler] = None,
                max_iters: Optional[int] = None, trace: bool = False,
                broadcast: bool = False, max_rounds: Optional[int] = None) -> AssignmentResult:
    """Asynchronous client/relay auction.

    Clients keep possibly stale local copies of relay prices and bid only
    while attached to ``v``; each relay owns its price and accepts a bid
    only if it beats that price by at least ``epsilon``. A bid is
    ``alpha[i, j] - second_best + epsilon`` computed from the client's local
    prices. ``iterations`` counts bids delivered to relays; ``max_iters``
    caps it (the result is then feasible but may lack the optimality
    certificate, and ``converged`` is False).

    ``rounds`` is the depth of the bidding: initial bids are round 1 and a
    client bidding again after a rejection or eviction moves one round on.
    It is the iteration count of a synchronous execution where all free
    clients bid at once; ``max_rounds`` caps it.
    """
    if not epsilon > 0:
        raise ValueError("epsilon must be positive")
    sched = scheduler or Scheduler()
    M, N = inst.M, inst.N
    pair = inst.pair
    spread = inst.spread()
    finite = np.concatenate([pair[np.isfinite(pair)], inst.direct[np.isfinite(inst.direct)],
                             inst.alone[np.isfinite(inst.alone)], [0.0]])
    # stand-in for unusable direct/alone options so arithmetic stays finite
    floor = float(finite.min()) - (M + N + 1) * (spread + 1.0)
    direct = np.where(np.isfinite(inst.direct), inst.direct, floor)
    alone = np.where(np.isfinite(inst.alone), inst.alone, floor)

    prices = alone.copy()
    owner = np.full(N, VIRTUAL, dtype=int)
    local = np.tile(prices, (M, 1))
    match = np.full(M, VIRTUAL, dtype=int)
    waiting = np.zeros(M, dtype=bool)
    queue = [("wake", i) for i in range(M)]
    depth = np.ones(M, dtype=int)
    rounds = 0
    events = []
    bids = 0
    step = 0
    converged = True

    def log(sender, receiver, kind, value):
        if trace:
            events.append(TraceEvent(step, sender, receiver, kind, value))

    while queue:
        ev = sched.pop(queue)
        step += 1
        kind = ev[0]
        if kind == "wake":
            i = ev[1]
            if match[i] != VIRTUAL or waiting[i] or N == 0:
                continue
            if (max_iters is not None and bids >= max_iters) or \
                    (max_rounds is not None and depth[i] > max_rounds):
                converged = False
                continue
            vals = pair[i] - local[i]
            j = int(np.argmax(vals))
            theta = vals[j]
            if not theta > direct[i]:
                continue
            others = np.delete(vals, j)
            omega = max(direct[i], float(others.max()) if others.size else -math.inf)
            beta = pair[i, j] - omega + epsilon
            waiting[i] = True
            bids += 1
            rounds = max(rounds, int(depth[i]))
            queue.append(("bid", i, j, beta))
            log(f"client:{i}", f"relay:{j}", "bid", beta)
        elif kind == "bid":
            _, i, j, beta = ev
            # a tied bid clears the price by exactly epsilon up to round-off
            if beta - prices[j] >= epsilon * (1.0 - 1e-9):
                old = owner[j]
                owner[j] = i
                prices[j] = beta
                if broadcast:
                    local[:, j] = beta
                queue.append(("reply", j, i, True, beta))
                log(f"relay:{j}", f"client:{i}", "yes", beta)
                if old != VIRTUAL:
                    queue.append(("evict", j, old, beta))
                    log(f"relay:{j}", f"client:{old}", "evict", beta)
            else:
                queue.append(("reply", j, i, False, prices[j]))
                log(f"relay:{j}", f"client:{i}", "no", prices[j])
        elif kind == "reply":
            _, j, i, accepted, price = ev
            waiting[i] = False
            local[i, j] = max(local[i, j], price)
            if accepted:
                match[i] = j
            else:
                depth[i] += 1
                queue.append(("wake", i))
        elif kind == "evict":
            _, j, i, price = ev
            match[i] = VIRTUAL
            local[i, j] = max(local[i, j], price)
            depth[i] += 1
            queue.append(("wake", i))

    return AssignmentResult(match.copy(), _relay_match(match, N), inst.value(match),
                            iterations=bids, prices=prices.copy(), epsilon=epsilon,
                            converged=converged, trace=events, rounds=rounds)


def assignment_dual_bound(inst: AssignmentInstance, prices) -> float:
    """Upper bound on the optimal assignment benefit from relay prices.

    Valid whenever ``prices >= alone`` elementwise (dual feasibility).
    """
    prices = np.maximum(np.asarray(prices, dtype=float), inst.alone)
    if inst.N:
        best = np.maximum(inst.direct, np.max(inst.pair - prices[None, :], axis=1))
    else:
        best = inst.direct
    finite_p = np.where(np.isfinite(prices), prices, 0.0)
    return float(best.sum() + finite_p.sum())


def verify_eps_cs(inst: AssignmentInstance, res: AssignmentResult, epsilon=None, tol=1e-9) -> bool:
    """Check the epsilon-complementary-slackness certificate of a result."""
    eps = res.epsilon if epsilon is None else epsilon
    if inst.N == 0:
        return True
    p = np.asarray(res.prices, dtype=float)
    if np.any(p < inst.alone - tol):
        return False
    for i in range(inst.M):
        j = res.client_match[i]
        mine = inst.direct[i] if j == VIRTUAL else inst.pair[i, j] - p[j]
        best = max(inst.direct[i], float(np.max(inst.pair[i] - p)))
        if not mine >= best - eps - tol:
            return False
    return True


def iteration_bound(inst: AssignmentInstance, epsilon: float) -> int:
    return inst.M * inst.N ** 2 * math.ceil(inst.spread() / epsilon)


def brute_force_assignment(inst: AssignmentInstance, limit: int = 8) -> AssignmentResult:
    """Exact optimum by enumerating all client -> relay/v maps.

    Options are tried in order relay 0..N-1 then ``v``; the first optimum
    found wins, which makes ties resolve to the lowest-index matching.
    """
    M, N = inst.M, inst.N
    if M > limit or N > limit:
        raise EnumerationLimitError(f"instance {M}x{N} exceeds enumeration limit {limit}")
    best = [-math.inf, None]
    current = [VIRTUAL] * M
    used = [False] * N
    pair = inst.pair.tolist()
    direct = inst.direct.tolist()
    alone = inst.alone.tolist()

    def rec(i, acc):
        if i == M:
            total = acc + sum(a for a, u in zip(alone, used) if not u)
            if best[1] is None or total > best[0]:
                best[0] = total
                best[1] = list(current)
            return
        for j in range(N):
            if not used[j] and pair[i][j] > -math.inf:
                used[j] = True
                current[i] = j
                rec(i + 1, acc + pair[i][j])
                used[j] = False
        current[i] = VIRTUAL
        rec(i + 1, acc + direct[i])

    rec(0, 0.0)
    match = np.asarray(best[1] if best[1] is not None else [VIRTUAL] * M, dtype=int)
    return AssignmentResult(match, _relay_match(match, N), inst.value(match), iterations=0)
