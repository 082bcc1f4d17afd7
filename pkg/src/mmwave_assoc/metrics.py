"""Fairness indices, rate distributions and per-run summaries."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .allocation import Association, AllocationResult


def jain_index(values) -> float:
    v = np.asarray(values, dtype=float).reshape(-1)
    if v.size == 0:
        raise ValueError("jain_index needs at least one value")
    if np.any(v < 0) or np.any(~np.isfinite(v)):
        raise ValueError("values must be finite and non-negative")
    sq = float(np.sum(v * v))
    if sq == 0:
        raise ValueError("jain_index is undefined for an all-zero vector")
    return float(v.sum() ** 2 / (v.size * sq))


@dataclass
class RunReport:
    rates: np.ndarray
    loads: np.ndarray
    objective: float
    objective_per_node: float
    jain_association: float
    jain_throughput: float
    policy: Optional[str] = None
    seed: Optional[int] = None
    extra: dict = field(default_factory=dict)

    def row(self):
        return {
            "policy": self.policy, "seed": self.seed,
            "objective": self.objective, "objective_per_node": self.objective_per_node,
            "jain_association": self.jain_association, "jain_throughput": self.jain_throughput,
            "mean_rate": float(np.mean(self.rates)) if self.rates.size else 0.0,
            "min_rate": float(np.min(self.rates)) if self.rates.size else 0.0,
            "loads": " ".join(str(int(n)) for n in self.loads),
            **self.extra,
        }


def summarize(alloc: AllocationResult, assoc: Association, policy=None, seed=None,
              scale: float = 1.0) -> RunReport:
    """Per-run report; ``scale`` multiplies the reported rates (e.g. a bandwidth).

    The objective always stays in the native rate units so it matches the
    allocation's objective exactly.
    """
    loads = np.asarray(assoc.loads())
    rates = alloc.effective_rates * scale
    n_nodes = assoc.n_clients + assoc.n_relays
    jt = jain_index(rates) if np.any(rates > 0) else float("nan")
    return RunReport(rates, loads, alloc.objective, alloc.objective / n_nodes,
                     jain_index(loads), jt,
                     None if policy is None else str(getattr(policy, "value", policy)), seed)


def rate_cdf(reports, grid) -> np.ndarray:
    """Pooled empirical CDF of per-node rates over all reports, on ``grid``."""
    grid = np.asarray(grid, dtype=float).reshape(-1)
    if grid.size == 0:
        raise ValueError("grid must not be empty")
    reports = list(reports)
    if not reports:
        raise ValueError("no reports given")
    pooled = np.sort(np.concatenate([np.asarray(r.rates, dtype=float) for r in reports]))
    if pooled.size == 0:
        raise ValueError("reports hold no rates")
    return np.searchsorted(pooled, grid, side="right") / pooled.size


def rate_gain(reports, baseline, probs=(0.1, 0.5, 0.9)) -> np.ndarray:
    """Ratio of pooled rate quantiles against a baseline at matched levels."""
    probs = np.asarray(probs, dtype=float)
    a = np.concatenate([r.rates for r in reports])
    b = np.concatenate([r.rates for r in baseline])
    qa, qb = np.quantile(a, probs), np.quantile(b, probs)
    with np.errstate(divide="ignore", invalid="ignore"):
        return np.where(qb > 0, qa / qb, np.inf)
