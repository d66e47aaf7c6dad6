"""Bayesian belief tracking for POMDPs."""
from __future__ import annotations

import numpy as np


class ImpossibleObservationError(ValueError):
    """The observation has probability zero under the current belief and action."""


def observation_probs(model, b, a: int) -> np.ndarray:
    """pr(o | a, b) for every observation."""
    pred = b @ model.T[:, a, :]
    return pred @ model.O[:, a, :]


def belief_update(model, b, a: int, o: int, tol: float = 0.0) -> np.ndarray:
    """b'(s') = O(s',a,o) * sum_s T(s,a,s') b(s) / pr(o|a,b)."""
    b = np.asarray(b, dtype=float)
    unnorm = model.O[:, a, o] * (b @ model.T[:, a, :])
    z = unnorm.sum()
    if z <= tol:
        raise ImpossibleObservationError(
            f"observation {model.observations[o]!r} cannot follow action {model.actions[a]!r}")
    return unnorm / z


def uniform_belief(n: int, support=None) -> np.ndarray:
    b = np.zeros(n)
    idx = np.arange(n) if support is None else np.asarray(support)
    b[idx] = 1.0 / len(idx)
    return b
