"""Solvers for the decision models built by reasoning."""
from .belief import ImpossibleObservationError, belief_update, observation_probs, uniform_belief
from .mdp import ConvergenceError, MdpPolicy, ValueIteration
from .oracle import OracleSizeError, expectimax_oracle
from .pbvi import AlphaVectorPolicy, PointBasedValueIteration
from .serialization import PolicyFormatError, dump_policy, load_policy, load_policy_text, save_policy


def value_iteration(model, gamma=0.95, tol=1e-6, max_iter=100000) -> MdpPolicy:
    return ValueIteration(gamma=gamma, tol=tol, max_iter=max_iter).fit(model).policy_


def pbvi_solve(model, gamma=0.95, belief_budget=200, horizon_budget=40, seed=0, **kw) -> AlphaVectorPolicy:
    est = PointBasedValueIteration(gamma=gamma, belief_budget=belief_budget,
                                   horizon_budget=horizon_budget, seed=seed, **kw)
    return est.fit(model).policy_


__all__ = [
    "AlphaVectorPolicy", "ConvergenceError", "ImpossibleObservationError", "MdpPolicy",
    "OracleSizeError", "PointBasedValueIteration", "PolicyFormatError", "ValueIteration",
    "belief_update", "dump_policy", "expectimax_oracle", "load_policy", "load_policy_text",
    "observation_probs", "pbvi_solve", "save_policy", "uniform_belief", "value_iteration",
]
