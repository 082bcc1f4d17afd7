"""Association policies: baselines, the primal-dual solver, an exhaustive
optimum, and backup-path planning."""

from __future__ import annotations

import enum
import itertools
import math
from dataclasses import dataclass, field
from functools import lru_cache
from typing import NamedTuple, Optional

import numpy as np

from .allocation import Association, AllocationResult, Direct, Relayed, allocate, check_feasible
from .auction import utility_table
from .channel import RateMatrix
from .dual import Solution, SolverParams, check_servable, solve_dst, solve_lb
from .errors import EnumerationLimitError, UnservableNodeError
from .topology import CLIENT, RELAY, LinkProbabilities, Node


class PolicyId(str, enum.Enum):
    RAND = "RAND"
    RSSI = "RSSI"
    DST = "DST"
    DST_R = "DST_R"
    LB = "LB"
    OPTM = "OPTM"

    @classmethod
    def parse(cls, name):
        if isinstance(name, cls):
            return name
        try:
            return cls(str(name).upper().replace("-", "_"))
        except ValueError:
            raise ValueError(f"unknown policy {name!r}; choose from "
                             + ", ".join(p.value for p in cls)) from None


def _direct_only_check(rates: RateMatrix):
    for i in range(rates.n_clients):
        if not np.any(rates.client_ap[i] > 0):
            raise UnservableNodeError(Node(CLIENT, i), "every AP link is blocked")
    for j in range(rates.n_relays):
        if not np.any(rates.relay_ap[j] > 0):
            raise UnservableNodeError(Node(RELAY, j), "every AP link is blocked")


def rand_policy(rates: RateMatrix, rng) -> Association:
    """Every node picks one of its unblocked APs uniformly; nobody is relayed."""
    _direct_only_check(rates)
    clients = tuple(Direct(int(rng.choice(np.flatnonzero(row > 0)))) for row in rates.client_ap)
    relays = tuple(int(rng.choice(np.flatnonzero(row > 0))) for row in rates.relay_ap)
    return Association(clients, relays, rates.n_aps)


def rssi_policy(rates: RateMatrix) -> Association:
    """Strongest measured SNR, direct only; ties go to the lowest AP index.

    Falls back to the rates when no SNR measurements are attached.
    """
    _direct_only_check(rates)
    snr_c = rates.snr_client_ap_db if rates.snr_client_ap_db is not None else rates.client_ap
    snr_r = rates.snr_relay_ap_db if rates.snr_relay_ap_db is not None else rates.relay_ap
    # blocked links never win, whatever the measurement says
    snr_c = np.where(rates.client_ap > 0, snr_c, -np.inf)
    snr_r = np.where(rates.relay_ap > 0, snr_r, -np.inf)
    clients = tuple(Direct(int(np.argmax(row))) for row in snr_c)
    relays = tuple(int(np.argmax(row)) for row in snr_r)
    return Association(clients, relays, rates.n_aps)


def dst_policy(rates: RateMatrix, params: SolverParams = SolverParams(), trace_sink=None) -> Solution:
    return solve_dst(rates, params, trace_sink)


def dst_r_policy(rates: RateMatrix, params: SolverParams = SolverParams(), trace_sink=None) -> Solution:
    """Primal-dual solver with relaying switched off.

    Relays are treated as plain clients, so the solution is mapped back onto
    the original node set without any relayed client.
    """
    sol = solve_dst(rates.without_relaying(), params, trace_sink)
    m = rates.n_clients
    paths = sol.association.clients
    assoc = Association(paths[:m], tuple(p.ap for p in paths[m:]), rates.n_aps)
    return Solution(assoc, allocate(assoc, rates), sol.gap, sol.iterations, sol.lam,
                    sol.history, sol.auction_iterations, sol.best_iteration)


OPTM_LIMITS = (6, 3, 3)


def optm_bruteforce(rates: RateMatrix, limits=OPTM_LIMITS) -> Association:
    """Exact optimum by enumerating every feasible association.

    For each client/relay matching all AP choices of the resulting service
    units are scored at once as per-unit log-weights minus ``sum n log n``;
    candidates within round-off of the best are re-scored with the direct
    objective and the lexicographically smallest encoding wins among exact ties.
    """
    M, N, K = rates.n_clients, rates.n_relays, rates.n_aps
    if M > limits[0] or N > limits[1] or K > limits[2]:
        raise EnumerationLimitError(
            f"instance with {M} clients, {N} relays, {K} APs exceeds the enumeration "
            f"limit {limits}")
    check_servable(rates)
    table = utility_table(rates)
    grids = {}
    best_val = -math.inf
    candidates = []
    for match in _matchings(M, N):
        units, counts = [], []
        used = set()
        for i, j in enumerate(match):
            if j is None:
                units.append(table.direct[i])
                counts.append(1)
            else:
                used.add(j)
                units.append(table.pair[i, j])
                counts.append(2)
        for j in range(N):
            if j not in used:
                units.append(table.alone[j])
                counts.append(1)
        U = len(units)
        if U not in grids:
            grids[U] = np.array(list(itertools.product(range(K), repeat=U)), dtype=int).reshape(-1, U)
        g = grids[U]
        w = np.asarray(units)[np.arange(U)[None, :], g].sum(axis=1)
        loads = np.zeros((len(g), K))
        for u in range(U):
            np.add.at(loads, (np.arange(len(g)), g[:, u]), counts[u])
        with np.errstate(divide="ignore", invalid="ignore"):
            nlogn = np.where(loads > 0, loads * np.log(np.maximum(loads, 1)), 0.0)
        val = w - nlogn.sum(axis=1)
        top = float(val.max())
        if top == -math.inf:
            continue
        tol = 1e-9 * max(1.0, abs(top))
        if top > best_val + tol:
            candidates = [c for c in candidates if c[0] >= top - tol]
        if top >= best_val - tol:
            for row in np.flatnonzero(val >= top - tol):
                candidates.append((float(val[row]), match, g[row]))
            best_val = max(best_val, top)
    if not candidates:
        raise UnservableNodeError(Node(CLIENT, 0), "no association with positive rates exists")
    tol = 1e-9 * max(1.0, abs(best_val))
    scored = []
    for _, match, aps in candidates:
        assoc = _assemble(match, aps, N, K)
        scored.append((allocate(assoc, rates).objective, assoc))
    top = max(s[0] for s in scored)
    ties = [a for v, a in scored if v >= top - tol]
    return min(ties, key=lambda a: a.encode())


def _matchings(M, N):
    """Every client -> relay-or-None map with each relay used at most once."""
    def rec(i, used):
        if i == M:
            yield ()
            return
        for rest in rec(i + 1, used):
            yield (None,) + rest
        for j in range(N):
            if j not in used:
                for rest in rec(i + 1, used | {j}):
                    yield (j,) + rest
    return list(rec(0, frozenset()))


def _assemble(match, aps, N, K):
    u = 0
    clients = []
    relays = [None] * N
    for j in match:
        k = int(aps[u])
        u += 1
        if j is None:
            clients.append(Direct(k))
        else:
            clients.append(Relayed(j, k))
            relays[j] = k
    for j in range(N):
        if relays[j] is None:
            relays[j] = int(aps[u])
            u += 1
    return Association(tuple(clients), tuple(relays), K)


@dataclass
class PolicyResult:
    policy: PolicyId
    association: Association
    allocation: AllocationResult
    solution: Optional[Solution] = None

    @property
    def objective(self):
        return self.allocation.objective


def run_policy(policy, rates: RateMatrix, rng=None, params: SolverParams = SolverParams(),
               bias=None, trace_sink=None) -> PolicyResult:
    """Run one policy; ``trace_sink`` collects auction events of the solver-based ones."""
    policy = PolicyId.parse(policy)
    sol = None
    if policy is PolicyId.RAND:
        if rng is None:
            raise ValueError("RAND needs a random generator")
        assoc = rand_policy(rates, rng)
    elif policy is PolicyId.RSSI:
        assoc = rssi_policy(rates)
    elif policy is PolicyId.OPTM:
        assoc = optm_bruteforce(rates)
    elif policy is PolicyId.LB:
        if bias is None:
            raise ValueError("LB needs a per-AP bias")
        sol = solve_lb(rates, bias, params, trace_sink)
    elif policy is PolicyId.DST:
        sol = dst_policy(rates, params, trace_sink)
    else:
        sol = dst_r_policy(rates, params, trace_sink)
    if sol is not None:
        return PolicyResult(policy, sol.association, sol.allocation, sol)
    return PolicyResult(policy, assoc, allocate(assoc, rates))


# --- backup paths -----------------------------------------------------------

class BackupWeights(NamedTuple):
    """LoS weights with every primary edge masked to zero."""

    client_relay: np.ndarray
    client_ap: np.ndarray
    relay_ap: np.ndarray


def backup_weights(primary: Association, q: LinkProbabilities) -> BackupWeights:
    x_ik, x_ij, x_jk = primary.indicators()
    w_ij = np.asarray(q.client_relay, dtype=float).reshape(x_ij.shape) * (1 - x_ij)
    w_ik = np.asarray(q.client_ap, dtype=float).reshape(x_ik.shape) * (1 - x_ik)
    w_jk = np.asarray(q.relay_ap, dtype=float).reshape(x_jk.shape) * (1 - x_jk)
    return BackupWeights(w_ij, w_ik, w_jk)


@dataclass
class BackupPlan:
    """Backup path per client (``None`` if uncovered) and backup AP per relay."""

    clients: list
    relays: list
    weights: BackupWeights = field(repr=False)
    capacity: np.ndarray
    value: float
    method: str = "greedy"

    @property
    def uncovered(self):
        return [i for i, p in enumerate(self.clients) if p is None]

    def loads(self):
        """Backup capacity used per AP (a relayed backup takes two units)."""
        n = np.zeros(len(self.capacity), dtype=int)
        for p in self.clients:
            if p is not None:
                n[p.ap] += 2 if isinstance(p, Relayed) else 1
        return n

    @property
    def report(self):
        unc = self.uncovered
        if not unc:
            return "all clients covered"
        return f"{len(unc)} client(s) without backup: " + ", ".join(f"client:{i}" for i in unc)


def _client_options(w: BackupWeights):
    """Per client: list of (net value, path, capacity units).

    A relayed option is worth the client's end-to-end weight plus the
    relay's own weight at that AP, minus what the relay gets on its best AP
    when left alone.
    """
    M, K = w.client_ap.shape
    N = w.relay_ap.shape[0]
    relay_best = w.relay_ap.max(axis=1) if K and N else np.zeros(N)
    out = []
    for i in range(M):
        opts = [(float(w.client_ap[i, k]), Direct(k), 1) for k in range(K) if w.client_ap[i, k] > 0]
        for j in range(N):
            for k in range(K):
                term = w.client_relay[i, j] * w.relay_ap[j, k]
                if term > 0:
                    net = float(term + w.relay_ap[j, k] - relay_best[j])
                    opts.append((net, Relayed(j, k), 2))
        out.append(opts)
    return out, relay_best


def _finish(paths, w: BackupWeights, capacity, method):
    N, K = w.relay_ap.shape
    relays = [None] * N
    for p in paths:
        if isinstance(p, Relayed):
            relays[p.relay] = p.ap
    value = 0.0
    for i, p in enumerate(paths):
        if isinstance(p, Direct):
            value += w.client_ap[i, p.ap]
        elif isinstance(p, Relayed):
            value += w.client_relay[i, p.relay] * w.relay_ap[p.relay, p.ap]
    for j in range(N):
        if relays[j] is None and K and w.relay_ap[j].max() > 0:
            relays[j] = int(np.argmax(w.relay_ap[j]))
        if relays[j] is not None:
            value += w.relay_ap[j, relays[j]]
    return BackupPlan(list(paths), relays, w, np.asarray(capacity, dtype=int), float(value), method)


def backup_association(rates: RateMatrix, primary: Association, q: LinkProbabilities,
                       capacity, method="greedy") -> BackupPlan:
    """Backup path per client maximizing the expected number of LoS backups.

    ``capacity[k]`` bounds the backup units at AP k, a relayed backup using
    two. ``method`` is ``"greedy"`` (clients in decreasing order of their best
    option claim the best one still available) or ``"exhaustive"`` (exact,
    for small instances). Clients without any usable option, or squeezed out
    by capacity, are left uncovered and listed in :attr:`BackupPlan.uncovered`.
    """
    violations = check_feasible(primary)
    if violations:
        raise ValueError("primary association is infeasible: " + "; ".join(map(str, violations)))
    if (primary.n_clients, primary.n_relays, primary.n_aps) != (rates.n_clients, rates.n_relays, rates.n_aps):
        raise ValueError("primary association does not match the rate matrix")
    capacity = np.asarray(capacity, dtype=int).reshape(-1)
    if capacity.size != rates.n_aps or np.any(capacity < 0):
        raise ValueError("capacity needs one non-negative entry per AP")
    w = backup_weights(primary, q)
    opts, _ = _client_options(w)
    if method == "greedy":
        paths = _greedy_backup(opts, capacity, rates.n_relays)
    elif method == "exhaustive":
        paths = _exhaustive_backup(opts, capacity, rates.n_relays)
    else:
        raise ValueError(f"unknown backup method {method!r}")
    return _finish(paths, w, capacity, method)


def _greedy_backup(opts, capacity, n_relays):
    left = capacity.copy()
    used = np.zeros(n_relays, dtype=bool)
    paths = [None] * len(opts)
    order = sorted(range(len(opts)), key=lambda i: (-max((o[0] for o in opts[i]), default=-math.inf), i))
    for i in order:
        for net, path, units in sorted(opts[i], key=lambda o: -o[0]):
            if net <= 0 or left[path.ap] < units:
                continue
            if isinstance(path, Relayed) and used[path.relay]:
                continue
            paths[i] = path
            left[path.ap] -= units
            if isinstance(path, Relayed):
                used[path.relay] = True
            break
    return paths


BACKUP_LIMITS = (8, 4)


def _exhaustive_backup(opts, capacity, n_relays):
    M = len(opts)
    if M > BACKUP_LIMITS[0] or n_relays > BACKUP_LIMITS[1]:
        raise EnumerationLimitError(f"exhaustive backup limited to {BACKUP_LIMITS} clients/relays")

    @lru_cache(maxsize=None)
    def best(i, mask, left):
        if i == M:
            return 0.0, ()
        value, rest = best(i + 1, mask, left)
        choice = (value, (None,) + rest)
        for net, path, units in opts[i]:
            if left[path.ap] < units:
                continue
            m2 = mask
            if isinstance(path, Relayed):
                if mask >> path.relay & 1:
                    continue
                m2 = mask | 1 << path.relay
            l2 = list(left)
            l2[path.ap] -= units
            v, r = best(i + 1, m2, tuple(l2))
            if v + net > choice[0] + 1e-12:
                choice = (v + net, (path,) + r)
        return choice

    return list(best(0, 0, tuple(int(c) for c in capacity))[1])
