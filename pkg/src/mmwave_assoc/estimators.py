"""scikit-learn style wrappers around the association policies.

``X`` is a single rate matrix or a list of them; ``predict`` returns one
:class:`~mmwave_assoc.allocation.Association` per instance.
"""

from __future__ import annotations

import numpy as np
from sklearn.base import BaseEstimator

from ._validation import check_is_fitted, check_n_aps, check_rate_batch
from .allocation import objective
from .dual import SolverParams, load_biasing_estimate, solve_dst, solve_lb
from .policies import optm_bruteforce, rand_policy, rssi_policy


class _ScoreMixin:
    def score(self, X, y=None):
        """Mean objective of the predicted associations."""
        batch = check_rate_batch(X)
        return float(np.mean([objective(a, r) for a, r in zip(self.predict(batch), batch)]))


class _SolverMixin(_ScoreMixin):
    def _params(self):
        return SolverParams(epsilon=self.epsilon, max_outer_iters=self.max_outer_iters,
                            max_auction_iters=self.max_auction_iters, step0=self.step0,
                            tol=self.tol)


class DSTAssociation(_SolverMixin, BaseEstimator):
    """Primal-dual association; ``fit`` keeps the per-AP prices it ends with.

    Attributes set by ``fit``: ``lambda_`` (mean final prices over the
    training instances), ``gaps_``, ``n_aps_``.
    """

    def __init__(self, epsilon=0.01, max_outer_iters=200, max_auction_iters=500,
                 step0=0.1, tol=1e-6):
        self.epsilon = epsilon
        self.max_outer_iters = max_outer_iters
        self.max_auction_iters = max_auction_iters
        self.step0 = step0
        self.tol = tol

    def fit(self, X, y=None):
        batch = check_rate_batch(X)
        self.n_aps_ = batch[0].n_aps
        check_n_aps(batch, self.n_aps_)
        sols = [solve_dst(r, self._params()) for r in batch]
        self.lambda_ = np.mean([s.lam for s in sols], axis=0)
        self.gaps_ = np.array([s.gap for s in sols])
        self.loads_ = np.array([s.association.loads() for s in sols])
        return self

    def predict(self, X):
        params = self._params()
        return [solve_dst(r, params).association for r in check_rate_batch(X)]


class LoadBiasedAssociation(_SolverMixin, BaseEstimator):
    """One-shot association with per-AP bias learned from solver runs.

    ``fit`` runs the primal-dual solver on the training instances and sets
    ``bias_ = log(mean load) + 1`` per AP; ``predict`` never updates prices.
    """

    def __init__(self, epsilon=0.01, max_outer_iters=200, max_auction_iters=500,
                 step0=0.1, tol=1e-6):
        self.epsilon = epsilon
        self.max_outer_iters = max_outer_iters
        self.max_auction_iters = max_auction_iters
        self.step0 = step0
        self.tol = tol

    def fit(self, X, y=None):
        batch = check_rate_batch(X)
        self.n_aps_ = batch[0].n_aps
        check_n_aps(batch, self.n_aps_)
        params = self._params()
        self.loads_ = np.array([solve_dst(r, params).association.loads() for r in batch])
        self.bias_ = load_biasing_estimate(self.loads_)
        return self

    def predict(self, X):
        check_is_fitted(self, "bias_")
        batch = check_rate_batch(X)
        check_n_aps(batch, self.n_aps_)
        params = self._params()
        return [solve_lb(r, self.bias_, params).association for r in batch]


class RSSIAssociation(_ScoreMixin, BaseEstimator):
    """Strongest-signal baseline; ``fit`` is a no-op."""

    def fit(self, X=None, y=None):
        return self

    def predict(self, X):
        return [rssi_policy(r) for r in check_rate_batch(X)]


class RandomAssociation(_ScoreMixin, BaseEstimator):
    def __init__(self, random_state=None):
        self.random_state = random_state

    def fit(self, X=None, y=None):
        return self

    def predict(self, X):
        rng = np.random.default_rng(self.random_state)
        return [rand_policy(r, rng) for r in check_rate_batch(X)]


class OptimalAssociation(_ScoreMixin, BaseEstimator):
    """Exhaustive optimum; only for tiny instances."""

    def fit(self, X=None, y=None):
        return self

    def predict(self, X):
        return [optm_bruteforce(r) for r in check_rate_batch(X)]
