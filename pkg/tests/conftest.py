import numpy as np
import pytest

from icorpp.domains import build_preset, preset, true_facts
from icorpp.model_builder import DecisionModel


def make_pomdp(T, R, O, prior, terminal=None, actions=None, observations=None):
    T, R, O = (np.asarray(x, dtype=float) for x in (T, R, O))
    S, A, Z = O.shape
    return DecisionModel(
        "POMDP", tuple(f"s{i}" for i in range(S)), tuple({"s": i} for i in range(S)),
        tuple(actions or (f"a{i}" for i in range(A))), T, R,
        np.zeros(S, dtype=bool) if terminal is None else np.asarray(terminal, dtype=bool),
        tuple(observations or (f"o{i}" for i in range(Z))), O, np.asarray(prior, dtype=float))


def make_mdp(T, R, terminal=None):
    T, R = np.asarray(T, dtype=float), np.asarray(R, dtype=float)
    S, A = R.shape
    return DecisionModel("MDP", tuple(f"s{i}" for i in range(S)), tuple({"s": i} for i in range(S)),
                         tuple(f"a{i}" for i in range(A)), T, R,
                         np.zeros(S, dtype=bool) if terminal is None else np.asarray(terminal, dtype=bool))


def tiger(listen_acc=0.85):
    # actions: listen, open-left, open-right; states: tiger-left, tiger-right
    T = np.zeros((2, 3, 2))
    T[:, 0] = np.eye(2)
    T[:, 1:] = 0.5
    R = np.array([[-1.0, -100.0, 10.0], [-1.0, 10.0, -100.0]])
    O = np.full((2, 3, 2), 0.5)
    O[0, 0] = (listen_acc, 1 - listen_acc)
    O[1, 0] = (1 - listen_acc, listen_acc)
    return make_pomdp(T, R, O, [0.5, 0.5], actions=("listen", "open-left", "open-right"),
                      observations=("hear-left", "hear-right"))


@pytest.fixture(scope="session")
def small_dialog():
    _, cfg = preset("dialog-paper-small")
    bundle = build_preset("dialog-paper-small")
    return cfg, bundle, bundle.build(true_facts(cfg, "morning"))


@pytest.fixture(scope="session")
def small_dialog_policy(small_dialog):
    from icorpp.planning import pbvi_solve
    return pbvi_solve(small_dialog[2], belief_budget=300, horizon_budget=60)


@pytest.fixture(scope="session")
def nav_bundle():
    return build_preset("nav-paper")
