"""Optimal rates, resource fractions and log-utility for a fixed association."""

from __future__ import annotations

import csv
from dataclasses import dataclass
from typing import NamedTuple, Sequence, Union

import numpy as np

from .channel import RateMatrix
from .errors import InfeasibleLinkError


class Direct(NamedTuple):
    ap: int


class Relayed(NamedTuple):
    relay: int
    ap: int


Path = Union[Direct, Relayed]


@dataclass(frozen=True)
class Association:
    """Serving path of every client plus the AP of every relay."""

    clients: tuple
    relays: tuple
    n_aps: int

    def __post_init__(self):
        object.__setattr__(self, "clients", tuple(
            p if isinstance(p, (Direct, Relayed)) else _as_path(p) for p in self.clients))
        object.__setattr__(self, "relays", tuple(int(k) for k in self.relays))

    @property
    def n_clients(self):
        return len(self.clients)

    @property
    def n_relays(self):
        return len(self.relays)

    def helper_of(self):
        """Map relay -> the client it assists."""
        return {p.relay: i for i, p in enumerate(self.clients) if isinstance(p, Relayed)}

    def client_aps(self):
        return np.array([p.ap for p in self.clients], dtype=int)

    def loads(self):
        """Per-AP load; an assisted client and its relay count as two."""
        n = np.zeros(self.n_aps, dtype=int)
        for p in self.clients:
            n[p.ap] += 1
        for k in self.relays:
            n[k] += 1
        return n

    def indicators(self):
        """Binary views ``(x_client_ap, x_client_relay, x_relay_ap)``."""
        m, nr, k = self.n_clients, self.n_relays, self.n_aps
        x_ik = np.zeros((m, k), dtype=int)
        x_ij = np.zeros((m, nr), dtype=int)
        x_jk = np.zeros((nr, k), dtype=int)
        for i, p in enumerate(self.clients):
            if isinstance(p, Direct):
                x_ik[i, p.ap] = 1
            else:
                x_ij[i, p.relay] = 1
        for j, ap in enumerate(self.relays):
            x_jk[j, ap] = 1
        return x_ik, x_ij, x_jk

    @classmethod
    def from_indicators(cls, x_ik, x_ij, x_jk):
        violations = check_feasible((x_ik, x_ij, x_jk))
        if violations:
            raise ValueError("infeasible association: " + "; ".join(map(str, violations)))
        x_ik, x_ij, x_jk = (np.asarray(a) for a in (x_ik, x_ij, x_jk))
        relays = tuple(int(np.argmax(row)) for row in x_jk)
        clients = []
        for i in range(x_ik.shape[0]):
            if x_ij.shape[1] and x_ij[i].any():
                j = int(np.argmax(x_ij[i]))
                clients.append(Relayed(j, relays[j]))
            else:
                clients.append(Direct(int(np.argmax(x_ik[i]))))
        return cls(tuple(clients), relays, x_ik.shape[1])

    def encode(self):
        """Compact string form, e.g. ``"d0,r1@2|2,0"``."""
        cs = ",".join(f"d{p.ap}" if isinstance(p, Direct) else f"r{p.relay}@{p.ap}"
                      for p in self.clients)
        return cs + "|" + ",".join(map(str, self.relays))


def _as_path(p):
    p = tuple(p)
    return Direct(*p) if len(p) == 1 else Relayed(*p)


class Violation(NamedTuple):
    constraint: str
    node: str
    detail: str

    def __str__(self):
        return f"[{self.constraint}] {self.node}: {self.detail}"


def check_feasible(assoc) -> list:
    """List every violated association constraint; empty means feasible.

    Accepts an :class:`Association` or a triple of indicator arrays
    ``(x_client_ap, x_client_relay, x_relay_ap)``.
    """
    out = []
    if isinstance(assoc, Association):
        k = assoc.n_aps
        for j, ap in enumerate(assoc.relays):
            if not 0 <= ap < k:
                out.append(Violation("relay-single-ap", f"relay:{j}", f"AP {ap} does not exist"))
        for i, p in enumerate(assoc.clients):
            if not 0 <= p.ap < k:
                out.append(Violation("client-single-path", f"client:{i}", f"AP {p.ap} does not exist"))
            if isinstance(p, Relayed):
                if not 0 <= p.relay < assoc.n_relays:
                    out.append(Violation("client-single-path", f"client:{i}",
                                         f"relay {p.relay} does not exist"))
                elif assoc.relays[p.relay] != p.ap:
                    out.append(Violation("pair-ap-consistency", f"client:{i}",
                                         f"relay {p.relay} is served by AP {assoc.relays[p.relay]}, not {p.ap}"))
        if out:
            return out
        x_ik, x_ij, x_jk = assoc.indicators()
    else:
        x_ik, x_ij, x_jk = (np.asarray(a) for a in assoc)
    for name, x in (("x_client_ap", x_ik), ("x_client_relay", x_ij), ("x_relay_ap", x_jk)):
        bad = np.argwhere((x != 0) & (x != 1))
        for idx in bad:
            out.append(Violation("binary", name + str(tuple(int(v) for v in idx)), "entry not in {0, 1}"))
    paths = x_ik.sum(axis=1) + (x_ij.sum(axis=1) if x_ij.size else 0)
    for i in np.flatnonzero(paths != 1):
        out.append(Violation("client-single-path", f"client:{i}", f"{int(paths[i])} serving paths"))
    if x_ij.size:
        served = x_ij.sum(axis=0)
        for j in np.flatnonzero(served > 1):
            out.append(Violation("relay-capacity", f"relay:{j}", f"assists {int(served[j])} clients"))
    aps = x_jk.sum(axis=1)
    for j in np.flatnonzero(aps != 1):
        out.append(Violation("relay-single-ap", f"relay:{j}", f"associated with {int(aps[j])} APs"))
    return out


def _require_feasible(assoc):
    v = check_feasible(assoc)
    if v:
        raise ValueError("infeasible association: " + "; ".join(map(str, v)))


def pair_rates(c_ij, c_jk):
    """Rates of an assisted client and its relay sharing the relay-AP link."""
    r_i = np.minimum(c_ij, np.asarray(c_jk) / 2.0)
    return r_i, np.asarray(c_jk) - r_i


def _rates(assoc: Association, rates: RateMatrix):
    r_c = np.zeros(assoc.n_clients)
    r_r = np.zeros(assoc.n_relays)
    helper = assoc.helper_of()
    for j, k in enumerate(assoc.relays):
        if j not in helper:
            r_r[j] = rates.relay_ap[j, k]
    for i, p in enumerate(assoc.clients):
        if isinstance(p, Direct):
            r_c[i] = rates.client_ap[i, p.ap]
        else:
            r_c[i], r_r[p.relay] = pair_rates(rates.client_relay[i, p.relay], rates.relay_ap[p.relay, p.ap])
    return r_c, r_r


def optimal_rates(assoc: Association, rates: RateMatrix):
    """Per-node optimal rates ``(client_rates, relay_rates)``.

    Raises :class:`InfeasibleLinkError` if the association uses a zero-rate
    link.
    """
    _require_feasible(assoc)
    helper = assoc.helper_of()
    for i, p in enumerate(assoc.clients):
        if isinstance(p, Direct) and rates.client_ap[i, p.ap] <= 0:
            raise InfeasibleLinkError(f"client:{i} -> ap:{p.ap} has zero rate")
        if isinstance(p, Relayed) and rates.client_relay[i, p.relay] <= 0:
            raise InfeasibleLinkError(f"client:{i} -> relay:{p.relay} has zero rate")
    for j, k in enumerate(assoc.relays):
        if rates.relay_ap[j, k] <= 0:
            raise InfeasibleLinkError(f"relay:{j} -> ap:{k} has zero rate")
    return _rates(assoc, rates)


def optimal_fractions(assoc: Association):
    """Equal per-connection shares: 1/n_k per single node, 2/n_k per pair.

    Returns ``(client_fractions, relay_fractions, loads)``; the members of an
    assisted pair share the same fraction.
    """
    n = assoc.loads()
    helper = assoc.helper_of()
    y_c = np.array([(2.0 if isinstance(p, Relayed) else 1.0) / n[p.ap] for p in assoc.clients])
    y_r = np.array([(2.0 if j in helper else 1.0) / n[k] for j, k in enumerate(assoc.relays)])
    return y_c, y_r, n


def utility_weight_direct(c_hat):
    return c_hat


def utility_weight_relayed(c_ij, c_jk):
    c_ij = np.asarray(c_ij, dtype=float)
    c_jk = np.asarray(c_jk, dtype=float)
    with np.errstate(divide="ignore", invalid="ignore"):
        shared = 4.0 * (c_jk - c_ij) * c_ij / c_jk
    a = np.where(2.0 * c_ij >= c_jk, c_jk, shared)
    a = np.where(c_jk > 0, a, 0.0)
    return float(a) if a.ndim == 0 else a


def _log(x):
    with np.errstate(divide="ignore"):
        return np.log(x)


@dataclass(frozen=True)
class AllocationResult:
    client_rates: np.ndarray
    relay_rates: np.ndarray
    client_fractions: np.ndarray
    relay_fractions: np.ndarray
    loads: np.ndarray
    objective: float

    @property
    def effective_rates(self):
        """Per-node ``r * y``, clients first then relays."""
        return np.concatenate([self.client_rates * self.client_fractions,
                               self.relay_rates * self.relay_fractions])

    def to_csv(self, f, assoc: Association):
        w = csv.writer(f, lineterminator="\n")
        w.writerow(["node", "role", "ap", "relay", "rate", "fraction"])
        for i, p in enumerate(assoc.clients):
            relay = f"relay:{p.relay}" if isinstance(p, Relayed) else ""
            w.writerow([f"client:{i}", "client", p.ap, relay,
                        repr(float(self.client_rates[i])), repr(float(self.client_fractions[i]))])
        helper = assoc.helper_of()
        for j, k in enumerate(assoc.relays):
            role = "relay-assisting" if j in helper else "relay"
            w.writerow([f"relay:{j}", role, k, "",
                        repr(float(self.relay_rates[j])), repr(float(self.relay_fractions[j]))])


def allocate(assoc: Association, rates: RateMatrix) -> AllocationResult:
    _require_feasible(assoc)
    r_c, r_r = _rates(assoc, rates)
    y_c, y_r, n = optimal_fractions(assoc)
    obj = float(np.sum(_log(r_c * y_c)) + np.sum(_log(r_r * y_r)))
    return AllocationResult(r_c, r_r, y_c, y_r, n, obj)


def objective(assoc: Association, rates: RateMatrix) -> float:
    """Sum of log effective rates; ``-inf`` if any served node gets zero rate."""
    return allocate(assoc, rates).objective


def objective_from_weights(assoc: Association, rates: RateMatrix) -> float:
    """Same objective written as per-path log-weights minus ``sum n log n``."""
    _require_feasible(assoc)
    total = 0.0
    for i, p in enumerate(assoc.clients):
        if isinstance(p, Direct):
            total += _log(utility_weight_direct(rates.client_ap[i, p.ap]))
        else:
            total += _log(utility_weight_relayed(rates.client_relay[i, p.relay],
                                                 rates.relay_ap[p.relay, p.ap]))
    for j, k in enumerate(assoc.relays):
        total += _log(utility_weight_direct(rates.relay_ap[j, k]))
    n = assoc.loads()
    n = n[n > 0]
    return float(total - np.sum(n * np.log(n)))
