"""Link budgets, Shannon rates and conservative quantile rates.

All SNR bookkeeping is in dB; blocked links carry ``-inf`` dB and a rate of
exactly zero. Rates are in bits/s/Hz.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from typing import Optional

import numpy as np
from scipy.stats import norm

from .topology import (AP, CLIENT, RELAY, LinkVisibility, Node, Scenario,
                       distance_matrix, visibility_matrix)

SPEED_OF_LIGHT = 299_792_458.0


@dataclass(frozen=True)
class ChannelParams:
    carrier_ghz: float = 60.0
    bandwidth_hz: float = 2.16e9
    path_loss_exponent: float = 2.5
    nlos_path_loss_exponent: float = 3.3
    # None -> free-space loss at 1 m for the carrier
    ref_loss_db: Optional[float] = None
    shadow_std_los_db: float = 3.0
    shadow_std_nlos_db: float = 6.0
    noise_psd_dbm_hz: float = -174.0
    noise_figure_db: float = 6.0
    tx_power_dbm: float = 10.0
    tx_gain_dbi: float = 15.0
    rx_gain_dbi: float = 15.0

    def __post_init__(self):
        if not self.bandwidth_hz > 0:
            raise ValueError("bandwidth must be positive")
        if not (self.path_loss_exponent > 0 and self.nlos_path_loss_exponent > 0):
            raise ValueError("path-loss exponents must be positive")
        if self.shadow_std_los_db < 0 or self.shadow_std_nlos_db < 0:
            raise ValueError("shadowing std-devs must be >= 0")
        if not self.carrier_ghz > 0:
            raise ValueError("carrier frequency must be positive")

    @property
    def reference_loss_db(self):
        if self.ref_loss_db is not None:
            return float(self.ref_loss_db)
        wavelength = SPEED_OF_LIGHT / (self.carrier_ghz * 1e9)
        return 20.0 * math.log10(4.0 * math.pi / wavelength)

    @property
    def noise_power_dbm(self):
        return self.noise_psd_dbm_hz + 10.0 * math.log10(self.bandwidth_hz) + self.noise_figure_db

    def exponent(self, vis):
        return self.nlos_path_loss_exponent if vis == LinkVisibility.NLOS else self.path_loss_exponent

    def shadow_std(self, vis):
        return self.shadow_std_nlos_db if vis == LinkVisibility.NLOS else self.shadow_std_los_db


def path_loss(distance, vis, p: ChannelParams, shadow=0.0):
    """Log-distance path loss in dB; ``+inf`` for blocked links.

    Distances below the 1 m reference are clamped to 1 m.
    """
    d = np.asarray(distance, dtype=float)
    if np.any(d < 0):
        raise ValueError("distance must be non-negative")
    vis = np.asarray(vis)
    beta = np.where(vis == LinkVisibility.NLOS, p.nlos_path_loss_exponent, p.path_loss_exponent)
    loss = p.reference_loss_db + 10.0 * beta * np.log10(np.maximum(d, 1.0)) + shadow
    loss = np.where(vis == LinkVisibility.BLOCKED, np.inf, loss)
    return float(loss) if loss.ndim == 0 else loss


def snr_db_from_loss(loss_db, p: ChannelParams):
    return p.tx_power_dbm + p.tx_gain_dbi + p.rx_gain_dbi - np.asarray(loss_db) - p.noise_power_dbm


def db_to_linear(x_db):
    return np.power(10.0, np.asarray(x_db, dtype=float) / 10.0)


def snr(tx, rx, s: Scenario, p: ChannelParams, rng=None) -> float:
    """Linear SNR of a single link with one fresh shadowing draw.

    ``rng=None`` means no shadowing. Scenario-wide rate matrices freeze the
    shadowing of every link instead; see :func:`build_rate_matrix`.
    """
    tx, rx = Node(*tx), Node(*rx)
    if tx == rx:
        raise ValueError("snr needs two distinct nodes")
    a, b = s.position(tx), s.position(rx)
    vis = LinkVisibility(int(visibility_matrix(s, a, b)[0, 0]))
    if vis == LinkVisibility.BLOCKED:
        return 0.0
    shadow = 0.0 if rng is None else rng.normal(0.0, p.shadow_std(vis))
    loss = path_loss(float(np.hypot(*(a - b))), vis, p, shadow)
    return float(db_to_linear(snr_db_from_loss(loss, p)))


def capacity(snr_linear):
    x = np.asarray(snr_linear, dtype=float)
    if np.any(x < 0):
        raise ValueError("snr must be non-negative")
    c = np.log2(1.0 + x)
    return float(c) if c.ndim == 0 else c


def estimate_snr(true_snr_db, sigma, rng):
    """Noisy SNR measurement: Gaussian error with std-dev ``sigma`` in dB."""
    if sigma < 0:
        raise ValueError("sigma must be >= 0")
    true_snr_db = np.asarray(true_snr_db, dtype=float)
    if sigma == 0:
        return true_snr_db.copy() if true_snr_db.ndim else float(true_snr_db)
    e = rng.normal(0.0, sigma, size=true_snr_db.shape)
    out = true_snr_db + e
    return float(out) if out.ndim == 0 else out


def eta_rate(est_snr_db, sigma, eta):
    """Rate whose outage probability given the estimate is exactly ``eta``.

    The true SNR is modelled as ``estimate + N(0, sigma^2)`` in dB, so the
    eta-quantile SNR is ``estimate + sigma * Phi^-1(eta)``.
    """
    if not 0 < eta < 1:
        raise ValueError("eta must lie in (0, 1)")
    if sigma < 0:
        raise ValueError("sigma must be >= 0")
    shift = sigma * norm.ppf(eta) if sigma > 0 else 0.0
    q_db = np.asarray(est_snr_db, dtype=float) + shift
    return capacity(db_to_linear(q_db))


@dataclass(frozen=True)
class RateMatrix:
    """Conservative rates for the three link classes of a scenario.

    ``client_relay`` is (M, N), ``client_ap`` is (M, K), ``relay_ap`` is
    (N, K). The optional ``*_snr_db`` arrays hold the measured SNR used to
    derive the rates (``-inf`` on blocked links).
    """

    client_relay: np.ndarray
    client_ap: np.ndarray
    relay_ap: np.ndarray
    eta: float = 0.5
    sigma: float = 0.0
    bandwidth_hz: float = 2.16e9
    snr_client_ap_db: Optional[np.ndarray] = field(default=None, repr=False)
    snr_relay_ap_db: Optional[np.ndarray] = field(default=None, repr=False)

    def __post_init__(self):
        ca = np.array(self.client_ap, dtype=float, ndmin=2)
        m, k = ca.shape
        if np.size(self.relay_ap) == 0:
            ra = np.zeros((0, k))
        else:
            ra = np.array(self.relay_ap, dtype=float, ndmin=2)
        n = ra.shape[0]
        cr = np.array(self.client_relay, dtype=float).reshape(m, n)
        if ra.shape[1] != k:
            raise ValueError("client_ap and relay_ap disagree on the number of APs")
        for name, a in (("client_relay", cr), ("client_ap", ca), ("relay_ap", ra)):
            if np.any(np.isnan(a)) or np.any(a < 0):
                raise ValueError(f"{name} rates must be non-negative")
            a.setflags(write=False)
            object.__setattr__(self, name, a)
        for name, shape in (("snr_client_ap_db", (m, k)), ("snr_relay_ap_db", (n, k))):
            v = getattr(self, name)
            if v is not None:
                v = np.array(v, dtype=float).reshape(shape)
                v.setflags(write=False)
                object.__setattr__(self, name, v)

    @property
    def n_clients(self):
        return self.client_ap.shape[0]

    @property
    def n_relays(self):
        return self.relay_ap.shape[0]

    @property
    def n_aps(self):
        return self.client_ap.shape[1]

    def without_relaying(self):
        """Demote every relay to an ordinary client (relays listed last)."""
        snr = None
        if self.snr_client_ap_db is not None and self.snr_relay_ap_db is not None:
            snr = np.vstack([self.snr_client_ap_db, self.snr_relay_ap_db])
        return RateMatrix(
            np.zeros((self.n_clients + self.n_relays, 0)),
            np.vstack([self.client_ap, self.relay_ap]),
            np.zeros((0, self.n_aps)),
            eta=self.eta, sigma=self.sigma, bandwidth_hz=self.bandwidth_hz,
            snr_client_ap_db=snr)

    def rows(self):
        for cls, a, tx_role, rx_role in (("client-relay", self.client_relay, CLIENT, RELAY),
                                         ("client-ap", self.client_ap, CLIENT, AP),
                                         ("relay-ap", self.relay_ap, RELAY, AP)):
            for i in range(a.shape[0]):
                for j in range(a.shape[1]):
                    yield f"{tx_role}:{i}", f"{rx_role}:{j}", cls, float(a[i, j])

    def to_csv(self, f):
        w = csv.writer(f, lineterminator="\n")
        w.writerow(["tx", "rx", "class", "rate"])
        for tx, rx, cls, rate in self.rows():
            w.writerow([tx, rx, cls, repr(rate)])


def link_snr_db(s: Scenario, src, dst, p: ChannelParams, rng):
    """True SNR (dB) of every ``src -> dst`` link with frozen shadowing."""
    vis = visibility_matrix(s, src, dst)
    d = distance_matrix(src, dst)
    std = np.where(vis == LinkVisibility.NLOS, p.shadow_std_nlos_db, p.shadow_std_los_db)
    shadow = rng.normal(0.0, 1.0, size=d.shape) * std
    loss = path_loss(d, vis, p, shadow)
    return np.asarray(snr_db_from_loss(loss, p), dtype=float).reshape(d.shape)


def build_rate_matrix(s: Scenario, p: ChannelParams, eta=0.5, sigma=0.0, seed=None) -> RateMatrix:
    """Rate matrix of a scenario.

    Shadowing and measurement noise come from independent streams derived
    from ``seed`` (default: the scenario seed), so the result is
    reproducible and the true channel does not depend on ``sigma``.
    """
    seed = s.seed if seed is None else seed
    shadow_rng = np.random.default_rng(np.random.SeedSequence([int(seed), 1]))
    noise_rng = np.random.default_rng(np.random.SeedSequence([int(seed), 2]))
    rates, snrs = [], []
    for src, dst in ((s.clients, s.relays), (s.clients, s.aps), (s.relays, s.aps)):
        true_db = link_snr_db(s, src, dst, p, shadow_rng)
        est_db = np.asarray(estimate_snr(true_db, sigma, noise_rng)).reshape(true_db.shape)
        est_db = np.where(np.isfinite(true_db), est_db, -np.inf)
        c = np.asarray(eta_rate(est_db, sigma, eta)).reshape(true_db.shape)
        rates.append(c)
        snrs.append(est_db)
    return RateMatrix(rates[0], rates[1], rates[2], eta=eta, sigma=sigma,
                      bandwidth_hz=p.bandwidth_hz,
                      snr_client_ap_db=snrs[1], snr_relay_ap_db=snrs[2])
