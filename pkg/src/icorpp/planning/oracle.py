"""Exact finite-horizon values by full belief-tree expansion (a test oracle)."""
from __future__ import annotations

import numpy as np

from .belief import belief_update

MAX_HORIZON = 8
MAX_SIZE = 200_000


class OracleSizeError(ValueError):
    pass


def expectimax_oracle(model, b, horizon: int, gamma: float = 0.95, leaf=None) -> float:
    """Optimal expected discounted reward over ``horizon`` steps from belief ``b``.

    ``leaf(b)`` scores the beliefs left after the last step (default 0), so a
    solver seeded with value function ``leaf`` can be compared at equal depth.
    """
    S, A, Z = model.O.shape
    if horizon > MAX_HORIZON or S * A * Z > MAX_SIZE:
        raise OracleSizeError(f"oracle limited to horizon <= {MAX_HORIZON} and |S||A||Z| <= {MAX_SIZE}")
    memo = {}
    absorbing = np.asarray(model.terminal, dtype=bool)
    absorbing = absorbing & np.all(model.R == 0.0, axis=1)

    def V(b, h):
        if b[~absorbing].sum() <= 1e-15:
            return 0.0
        if h == 0:
            return 0.0 if leaf is None else float(leaf(b))
        key = (h, tuple(np.round(b, 12)))
        hit = memo.get(key)
        if hit is not None:
            return hit
        best = -np.inf
        for a in range(A):
            q = float(b @ model.R[:, a])
            if h > 1 or leaf is not None:
                pred = b @ model.T[:, a, :]
                po = pred @ model.O[:, a, :]
                for o in np.flatnonzero(po > 1e-15):
                    q += gamma * po[o] * V(belief_update(model, b, a, o), h - 1)
            best = max(best, q)
        memo[key] = best
        return best

    return V(np.asarray(b, dtype=float), horizon)
