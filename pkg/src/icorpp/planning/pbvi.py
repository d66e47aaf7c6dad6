"""Point-based value iteration over a sampled belief set."""
from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np
from sklearn.base import BaseEstimator

from .belief import belief_update

log = logging.getLogger(__name__)


@dataclass
class AlphaVectorPolicy:
    alphas: np.ndarray  # (k, S)
    actions: np.ndarray  # (k,)
    gamma: float
    action_names: tuple
    model_hash: str = ""
    # (M, R) of the model, set by attach(); enables one-step lookahead
    _lookahead: tuple = field(default=None, repr=False, compare=False)
    # beliefs recur across episodes (same prior, discrete observations)
    _memo: dict = field(default_factory=dict, repr=False, compare=False)

    def attach(self, model):
        """Act by one-step lookahead over the vector set on ``model``.

        Off the sampled beliefs the bare argmax vector can point at a plan
        that the next belief no longer follows; backing up once at the
        current belief is much more robust and costs two small matrix products.
        """
        M = np.einsum("sap,paz->azsp", model.T, model.O)
        A, Z, S, _ = M.shape
        # b @ Mt gives every unnormalised successor b M[a,z] at once
        Mt = np.ascontiguousarray(M.transpose(2, 0, 1, 3)).reshape(S, A * Z * S)
        self._lookahead = (Mt, (A, Z, S), np.asarray(model.R, dtype=float))
        self._memo = {}
        return self

    def values(self, beliefs) -> np.ndarray:
        B = np.atleast_2d(beliefs)
        return (B @ self.alphas.T).max(axis=1)

    def value(self, b) -> float:
        return float(self.values(b)[0])

    def q_values(self, b) -> np.ndarray:
        """R(b,a) + gamma * sum_z max_k <alpha_k, tau(b,a,z)> pr(z|b,a)."""
        if self._lookahead is None:
            raise ValueError("q_values needs a model; call attach(model) first")
        Mt, (A, Z, S), R = self._lookahead
        b = np.asarray(b, dtype=float)
        succ = (b @ Mt).reshape(A * Z, S)
        future = (succ @ self.alphas.T).max(axis=1).reshape(A, Z).sum(axis=1)
        return b @ R + self.gamma * future

    def action(self, b, tol: float = 1e-12) -> int:
        if self._lookahead is not None:
            b = np.asarray(b, dtype=float)
            key = (b.tobytes(), tol)
            a = self._memo.get(key)
            if a is None:
                q = self.q_values(b)
                a = int(np.flatnonzero(q >= q.max() - tol)[0])
                if len(self._memo) < 200_000:
                    self._memo[key] = a
            return a
        v = self.alphas @ np.asarray(b, dtype=float)
        best = v.max()
        # among maximising vectors prefer the lowest action index
        return int(self.actions[v >= best - tol].min())

    def action_name(self, b) -> str:
        return self.action_names[self.action(b)]


def _lower_bound(R, gamma):
    return min(0.0, float(R.min())) / (1.0 - gamma)


def blind_vectors(T, R, gamma):
    """Value of repeating one action forever, for every action.

    Each is a valid lower bound and far tighter than the flat bound when some
    action (a delivery, say) ends the episode at once.
    """
    S, A, _ = T.shape
    eye = np.eye(S)
    out = np.empty((A, S))
    for a in range(A):
        out[a] = np.linalg.solve(eye - gamma * T[:, a, :], R[:, a])
    return out


class PointBasedValueIteration(BaseEstimator):
    """PBVI with randomized farthest-point belief expansion.

    Starts from lower-bound vectors (blind policies, or the flat
    ``min(0, Rmin) / (1 - gamma)``) so the value at every sampled belief is a
    lower bound that never decreases between sweeps.

    Parameters
    ----------
    gamma : discount factor
    belief_budget : maximum number of sampled beliefs
    horizon_budget : number of backup sweeps
    seed : RNG seed for belief expansion
    expand_every : sweeps between two belief expansions
    init : "blind" (one vector per action) or "min" (single flat vector)
    backup : "full" backs up every belief per sweep; "randomized" backs up
        random beliefs until each one has improved, which keeps the vector set
        small on large belief sets
    expansion : "trajectory" simulates episodes from the prior under the
        current policy (with random actions mixed in) and adds the visited
        beliefs farthest from the set first; "successor" adds, per sampled
        belief, its farthest one-step successor
    n_trajectories, explore : trajectories per expansion and the chance of a
        random action at each simulated step
    uniform_starts : share of trajectories whose hidden start state is drawn
        uniformly from the prior's support instead of from the prior; the
        belief still starts at the prior, so unlikely states get visited too
    """

    def __init__(self, gamma=0.95, belief_budget=200, horizon_budget=40, seed=0,
                 expand_every=1, extra_beliefs=None, init="blind", backup="randomized",
                 expansion="trajectory", n_trajectories=20, explore=0.15, uniform_starts=0.5):
        self.gamma = gamma
        self.belief_budget = belief_budget
        self.horizon_budget = horizon_budget
        self.seed = seed
        self.expand_every = expand_every
        self.extra_beliefs = extra_beliefs
        self.init = init
        self.backup = backup
        self.expansion = expansion
        self.n_trajectories = n_trajectories
        self.explore = explore
        self.uniform_starts = uniform_starts

    def fit(self, model, y=None):
        if self.belief_budget < 1 or self.horizon_budget < 1:
            raise ValueError("PBVI needs belief_budget >= 1 and horizon_budget >= 1")
        if not 0.0 < self.gamma < 1.0:
            raise ValueError("PBVI needs 0 < gamma < 1")
        rng = np.random.default_rng(self.seed)
        T, O, R = model.T, model.O, model.R
        S, A, Z = O.shape
        # M[a, z, s, s'] = T(s,a,s') O(s',a,z)
        self._M = np.einsum("sap,paz->azsp", T, O)
        B = [np.asarray(model.prior, dtype=float)]
        for b in (self.extra_beliefs or ()):
            if len(B) < self.belief_budget:
                B.append(np.asarray(b, dtype=float))
        B = np.array(B)
        if self.init == "blind":
            alphas = blind_vectors(T, R, self.gamma)
            acts = np.arange(A)
            # blind plans are always valid, so they stay in every vector set
            floor = (alphas.copy(), acts.copy())
        elif self.init == "min":
            alphas = np.full((1, S), _lower_bound(R, self.gamma))
            acts = np.zeros(1, dtype=int)
            floor = None
        else:
            raise ValueError(f"unknown init {self.init!r}")
        history = []
        for sweep in range(self.horizon_budget):
            if self.backup == "full":
                alphas, acts = self._backup(B, alphas, acts, R)
            elif self.backup == "randomized":
                alphas, acts = self._randomized_backup(B, alphas, acts, R, rng)
            else:
                raise ValueError(f"unknown backup {self.backup!r}")
            if floor is not None:
                alphas = np.vstack([alphas, floor[0]])
                acts = np.concatenate([acts, floor[1]])
            history.append((B @ alphas.T).max(axis=1))
            if (sweep + 1) % self.expand_every == 0 and len(B) < self.belief_budget:
                if self.expansion == "trajectory":
                    B = self._expand_trajectories(model, B, rng, alphas)
                elif self.expansion == "successor":
                    B = self._expand(model, B, rng, alphas, acts)
                else:
                    raise ValueError(f"unknown expansion {self.expansion!r}")
        self.beliefs_ = B
        self.value_history_ = history
        self.n_sweeps_ = len(history)
        self.policy_ = AlphaVectorPolicy(alphas, acts, self.gamma, tuple(model.actions),
                                         getattr(model, "model_hash", "")).attach(model)
        del self._M
        return self

    def _project(self, alphas):
        # G[a, z, k, s] = sum_s' M[a,z,s,s'] alpha_k(s'), contiguous
        A, Z, S, _ = self._M.shape
        k = alphas.shape[0]
        G = (self._M.reshape(A * Z * S, S) @ alphas.T).reshape(A, Z, S, k)
        return np.ascontiguousarray(G.transpose(0, 1, 3, 2))

    def _backup_points(self, G, Bsub, R):
        """Point-based backup of every row of ``Bsub``; returns (vectors, actions)."""
        A, Z, k, S = G.shape
        out_v, out_a = [], []
        # keep the (A, Z, k, chunk) score tensor around 16M entries
        chunk = max(1, int(1.6e7 // max(1, A * Z * k)))
        Gf = G.reshape(A * Z * k, S)
        ai = np.arange(A)[:, None, None]
        zi = np.arange(Z)[None, :, None]
        for lo in range(0, len(Bsub), chunk):
            Bc = Bsub[lo:lo + chunk]
            m = len(Bc)
            best = (Gf @ Bc.T).reshape(A, Z, k, m).argmax(axis=2)  # (A, Z, m)
            chosen = G[ai, zi, best]  # (A, Z, m, S)
            cand = R.T[:, None, :] + self.gamma * chosen.sum(axis=1)  # (A, m, S)
            vals = np.einsum("ams,ms->am", cand, Bc)
            a_best = vals.argmax(axis=0)  # lowest action index on ties
            out_v.append(cand[a_best, np.arange(m)])
            out_a.append(a_best)
        return np.vstack(out_v), np.concatenate(out_a)

    def _backup(self, B, alphas, acts, R):
        G = self._project(alphas)
        new, a_best = self._backup_points(G, B, R)
        nb = len(B)
        new_vals = np.einsum("bs,bs->b", new, B)
        # keep an older vector where it is still better, so values never drop
        old_scores = B @ alphas.T
        old_best = old_scores.argmax(axis=1)
        keep_old = old_scores[np.arange(nb), old_best] > new_vals + 1e-12
        vecs, vacts = [], []
        seen = set()
        for i in range(nb):
            if keep_old[i]:
                v, act = alphas[old_best[i]], acts[old_best[i]]
            else:
                v, act = new[i], a_best[i]
            key = (int(act), v.tobytes())
            if key not in seen:
                seen.add(key)
                vecs.append(v)
                vacts.append(act)
        return np.array(vecs), np.array(vacts, dtype=int)

    def _randomized_backup(self, B, alphas, acts, R, rng, batch=16):
        G = self._project(alphas)
        old_scores = B @ alphas.T
        old_best = old_scores.argmax(axis=1)
        old_vals = old_scores[np.arange(len(B)), old_best]
        new_vals = np.full(len(B), -np.inf)
        vecs, vacts = [], []
        todo = np.arange(len(B))
        while todo.size:
            pick = rng.choice(todo, size=min(batch, todo.size), replace=False)
            nv, na = self._backup_points(G, B[pick], R)
            for j, i in enumerate(pick):
                if new_vals[i] >= old_vals[i] - 1e-12:
                    continue  # covered by a vector added earlier in this batch
                v, a = nv[j], int(na[j])
                if v @ B[i] < old_vals[i] - 1e-12:
                    v, a = alphas[old_best[i]], int(acts[old_best[i]])
                vecs.append(v)
                vacts.append(a)
                new_vals = np.maximum(new_vals, B @ v)
            # every picked belief is covered now, so the loop terminates
            todo = np.flatnonzero(new_vals < old_vals - 1e-12)
        return np.array(vecs), np.array(vacts, dtype=int)

    def _lookahead_action(self, b, alphas, R):
        succ = np.einsum("azsp,s->azp", self._M, b)
        q = b @ R + self.gamma * (succ @ alphas.T).max(axis=2).sum(axis=1)
        return int(np.argmax(q))

    def _expand_trajectories(self, model, B, rng, alphas):
        S, A, Z = model.O.shape
        prior = np.asarray(model.prior, dtype=float)
        live = ~np.asarray(model.terminal, dtype=bool)
        support = np.flatnonzero(prior > 0)
        cands = []
        for _ in range(self.n_trajectories):
            b = prior
            if rng.random() < self.uniform_starts:
                s = int(rng.choice(support))
            else:
                s = rng.choice(S, p=prior)
            for _ in range(2 * S + 10):
                if not live[s]:
                    break
                if rng.random() < self.explore:
                    a = int(rng.integers(A))
                else:
                    a = self._lookahead_action(b, alphas, model.R)
                s = rng.choice(S, p=model.T[s, a])
                o = rng.choice(Z, p=model.O[s, a])
                b = belief_update(model, b, a, o)
                if b[live].sum() <= 1e-12:
                    break
                cands.append(b)
        if not cands:
            return B
        C = np.array(cands)
        # farthest-first: distance of every candidate to the current set
        d = np.abs(C[:, None, :] - B[None, :, :]).sum(axis=2).min(axis=1)
        new = []
        room = self.belief_budget - len(B)
        while len(new) < room:
            k = int(np.argmax(d))
            if d[k] <= 1e-3:
                break
            new.append(C[k])
            d = np.minimum(d, np.abs(C - C[k]).sum(axis=1))
        if not new:
            return B
        return np.vstack([B, np.array(new)])

    def _expand(self, model, B, rng, alphas, acts):
        """Add, per belief, the farthest of its successors under the greedy
        action (every observation) and under one random action."""
        S, A, Z = model.O.shape
        new = []
        for b in B:
            greedy = int(acts[int(np.argmax(alphas @ b))])
            pred = b @ model.T[:, greedy, :]
            pz = pred @ model.O[:, greedy, :]
            greedy_next = [belief_update(model, b, greedy, o)
                           for o in np.flatnonzero(pz > 1e-12)]
            a = int(rng.integers(A))
            s = rng.choice(S, p=b)
            s2 = rng.choice(S, p=model.T[s, a])
            o = rng.choice(Z, p=model.O[s2, a])
            random_next = [belief_update(model, b, a, o)]
            pool = np.array(list(B) + new)
            for c in self._farthest(pool, (greedy_next, random_next)):
                new.append(c)
                pool = np.vstack([pool, c])
            if len(B) + len(new) >= self.belief_budget:
                new = new[: self.belief_budget - len(B)]
                break
        if not new:
            return B
        return np.vstack([B, np.array(new)])

    def _farthest(self, pool, groups):
        # the farthest candidate of each group, if it is not already in the pool
        out = []
        for group in groups:
            if not group:
                continue
            dists = [np.abs(pool - c).sum(axis=1).min() for c in group]
            k = int(np.argmax(dists))
            if dists[k] > 1e-9:
                out.append(group[k])
                pool = np.vstack([pool, group[k]])
        return out

    def predict(self, beliefs):
        B = np.atleast_2d(beliefs)
        return np.array([self.policy_.action(b) for b in B])

    def value(self, beliefs):
        return self.policy_.values(beliefs)
