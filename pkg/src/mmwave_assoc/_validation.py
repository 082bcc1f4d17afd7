"""Input checks shared by the estimator wrappers."""

from __future__ import annotations

import numpy as np

from .channel import RateMatrix


def check_rates(X) -> RateMatrix:
    """Accept a RateMatrix or a ``(client_relay, client_ap, relay_ap)`` triple."""
    if isinstance(X, RateMatrix):
        return X
    if isinstance(X, dict):
        return RateMatrix(X["client_relay"], X["client_ap"], X["relay_ap"])
    try:
        cr, ca, ra = X
    except (TypeError, ValueError):
        raise TypeError("expected a RateMatrix or a (client_relay, client_ap, relay_ap) triple") from None
    return RateMatrix(np.asarray(cr, dtype=float), np.asarray(ca, dtype=float),
                      np.asarray(ra, dtype=float))


def check_rate_batch(X) -> list:
    """A single instance or a sequence of instances, as a list of RateMatrix."""
    single = isinstance(X, (RateMatrix, dict)) or (
        isinstance(X, tuple) and len(X) == 3 and all(isinstance(a, np.ndarray) for a in X))
    if single:
        return [check_rates(X)]
    X = list(X)
    if not X:
        raise ValueError("no instances given")
    return [check_rates(x) for x in X]


def check_n_aps(batch, n_aps):
    for r in batch:
        if r.n_aps != n_aps:
            raise ValueError(f"instance has {r.n_aps} APs, estimator was fitted on {n_aps}")


def check_is_fitted(est, attr):
    if not hasattr(est, attr):
        from sklearn.exceptions import NotFittedError
        raise NotFittedError(f"{type(est).__name__} is not fitted yet; call fit first")
