"""Value iteration for fully observable models."""
from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np
from sklearn.base import BaseEstimator

log = logging.getLogger(__name__)


class ConvergenceError(RuntimeError):
    pass


@dataclass
class MdpPolicy:
    actions: np.ndarray  # action index per state
    values: np.ndarray
    gamma: float
    action_names: tuple
    model_hash: str = ""

    def action(self, s: int) -> int:
        return int(self.actions[s])

    def action_name(self, s: int) -> str:
        return self.action_names[self.action(s)]


def _check_stochastic(T):
    if np.any(T < -1e-12) or not np.allclose(T.sum(axis=-1), 1.0, atol=1e-9):
        raise ValueError("transition rows are not stochastic")


def greedy(Q: np.ndarray, rtol: float = 1e-9) -> np.ndarray:
    """Lowest action index among the (numerically) maximal Q-values of each row."""
    best = Q.max(axis=1, keepdims=True)
    tol = rtol * np.maximum(1.0, np.abs(best))
    return np.argmax(Q >= best - tol, axis=1)


class ValueIteration(BaseEstimator):
    """Synchronous value iteration; stops once the Bellman residual drops below ``tol``.

    Parameters
    ----------
    gamma : discount factor
    tol : residual threshold (sup norm)
    max_iter : iteration cap; exceeding it raises ConvergenceError
    """

    def __init__(self, gamma=0.95, tol=1e-6, max_iter=100000):
        self.gamma = gamma
        self.tol = tol
        self.max_iter = max_iter

    def fit(self, model, y=None):
        T, R = model.T, model.R
        _check_stochastic(T)
        V = np.zeros(T.shape[0])
        residuals = []
        for it in range(1, self.max_iter + 1):
            Q = R + self.gamma * (T @ V)
            V_new = Q.max(axis=1)
            res = float(np.max(np.abs(V_new - V)))
            residuals.append(res)
            V = V_new
            if res < self.tol:
                break
        else:
            raise ConvergenceError(
                f"value iteration did not converge in {self.max_iter} iterations (residual {res:.3g})")
        Q = R + self.gamma * (T @ V)
        self.values_ = V
        self.q_values_ = Q
        self.residuals_ = residuals
        self.n_iter_ = len(residuals)
        self.policy_ = MdpPolicy(greedy(Q), V, self.gamma, tuple(model.actions),
                                 getattr(model, "model_hash", ""))
        return self

    def predict(self, states):
        return self.policy_.actions[np.asarray(states, dtype=int)]
