import itertools

import numpy as np
import pytest

from icorpp.domains import (DialogConfig, NavConfig, Ontology, Person, build_dialog_domain,
                            build_navigation_domain, delivery_reward, dialog_observe, item_closeness,
                            navigation_step, room_closeness, true_facts)
from icorpp.domains.dialog import DialogEnv, answer_sorts, default_wh_accuracy
from icorpp.domains.navigation import naive_state_count, true_sunny_cells
from icorpp.domains.presets import NEAR_WINDOW, dialog_paper_full, nav_paper

N = 1_000_000


# -- navigation -----------------------------------------------------------------------------

def test_sunny_cell_success_mass_reduced():
    cfg = NavConfig(near_window=((0, 2),), goal=(0, 3))
    m = build_navigation_domain(cfg).build({"curr_time": "morning", "weather": "sunny"})
    row = m.T[m.state_index("rw1.cl2"), m.action_index("up")]
    assert row[m.state_index("rw0.cl2")] == pytest.approx(0.9 * 0.1)
    lost = sum(p for j, p in enumerate(row) if m.terminal[j])
    assert lost == pytest.approx(0.9 * 0.9)


def test_evening_has_no_sunny_cells():
    cfg = nav_paper(time="evening")
    assert true_sunny_cells(cfg) == set()
    m = build_navigation_domain(cfg).build({"curr_time": "evening", "weather": "sunny"})
    assert all(v["lit"] == "false" for v in m.state_values)


def test_explicit_not_sunny_defeats_default():
    cfg = NavConfig(near_window=((0, 2),), goal=(0, 3))
    bundle = build_navigation_domain(cfg)
    m = bundle.build({"curr_time": "morning", "weather": "sunny", "sunny(rw0,cl2)": "false"})
    row = m.T[m.state_index("rw1.cl2"), m.action_index("up")]
    assert row[m.state_index("rw0.cl2")] == pytest.approx(0.9)


def test_goal_in_always_lost_cell_rejected():
    with pytest.raises(ValueError):
        build_navigation_domain(NavConfig(near_window=((0, 3),), goal=(0, 3), sun_loss=1.0))


def test_step_up_frequency():
    cfg = nav_paper(time="noon", weather="cloudy")
    rng = np.random.default_rng(0)
    hits = sum(navigation_step(cfg, (3, 0, False), "up", rng)[0][:2] == (2, 0) for _ in range(N))
    assert hits / N == pytest.approx(0.9, abs=0.003)


def test_step_into_wall_stays():
    cfg = nav_paper()
    rng = np.random.default_rng(1)
    for _ in range(1000):
        assert navigation_step(cfg, (4, 0, False), "down", rng)[0] == (4, 0, False)


def test_entering_sunny_cell_loses_robot():
    cfg = nav_paper()
    rng = np.random.default_rng(2)
    # left from (2,1) always ends in a sunlit cell
    lost = sum(navigation_step(cfg, (2, 1, False), "left", rng)[0][2] for _ in range(N))
    assert lost / N == pytest.approx(0.9, abs=0.003)


def test_simulator_matches_model_transitions(nav_bundle):
    cfg = nav_paper()
    m = nav_bundle.build({"curr_time": "morning", "weather": "sunny"})
    rng = np.random.default_rng(3)
    cases = [((4, 0), "up"), ((3, 1), "up"), ((2, 1), "left"), ((1, 3), "right"),
             ((0, 0), "right"), ((2, 3), "up"), ((3, 5), "left"), ((1, 2), "down")]
    per = N // len(cases)
    for (r, c), act in cases:
        s, a = m.state_index(f"rw{r}.cl{c}"), m.action_index(act)
        counts = np.zeros(len(m.states))
        for _ in range(per):
            (r2, c2, term), _ = navigation_step(cfg, (r, c, False), act, rng)
            counts[m.state_index(f"rw{r2}.cl{c2}" + (".T" if term else ""))] += 1
        assert np.max(np.abs(counts / per - m.T[s, a])) < 0.005


def test_naive_count_formula():
    assert naive_state_count(30) == 30 * 2 ** 60 * 5 * 3 * 2
    assert naive_state_count(30) > 10 ** 20


# -- closeness ------------------------------------------------------------------------------

@pytest.fixture(scope="module")
def onto():
    return DialogConfig().tree()


def test_item_closeness_examples(onto):
    assert item_closeness(onto, "regular", "regular") == 1.0
    assert item_closeness(onto, "regular", "decaf") == pytest.approx(0.75)
    assert item_closeness(onto, "regular", "sandwich") == pytest.approx(0.25)
    with pytest.raises(KeyError):
        item_closeness(onto, "regular", "tea")


def test_item_closeness_range_and_symmetry(onto):
    for a, b in itertools.product(onto.leaves, repeat=2):
        lam = item_closeness(onto, a, b)
        assert 0.0 < lam <= 1.0
        assert (lam == 1.0) == (a == b)
        assert lam == item_closeness(onto, b, a)


def test_room_closeness_examples():
    d = {"r0": 1.0, "r1": 2.0, "r2": 3.0}
    for r in d:
        assert room_closeness(d, r, r) == pytest.approx(1 / 3)
    assert room_closeness(d, "r0", "r2") == pytest.approx(0.6)
    assert room_closeness(d, "r2", "r0") == pytest.approx(1 / 7)
    for a, b in itertools.product(d, repeat=2):
        assert 0.0 < room_closeness(d, a, b) < 1.0
    with pytest.raises(ValueError):
        room_closeness({"r0": 0.0, "r1": 1.0}, "r0", "r1")


def test_moving_items_apart_never_raises_closeness():
    near = Ontology({"item": {"drink": {"coffee": {"regular": {}, "decaf": {}}, "soda": {}},
                              "food": {"cookie": {}}}})
    far = Ontology({"item": {"drink": {"coffee": {"regular": {}}, "soda": {}},
                             "food": {"cookie": {}, "sweet": {"decaf": {}}}}})
    assert item_closeness(far, "regular", "decaf") < item_closeness(near, "regular", "decaf")


def test_delivery_rewards():
    cfg = dialog_paper_full(scheme="closeness")
    req = ("regular", "r0", "alice")
    assert delivery_reward(cfg, req, req) == 20.0
    assert delivery_reward(cfg, req, ("decaf", "r0", "alice")) == pytest.approx(-15.0)
    flat = dialog_paper_full()
    assert delivery_reward(flat, req, ("decaf", "r0", "alice")) == -100.0
    assert delivery_reward(flat, req, req) == 50.0


def test_closeness_reward_bounds():
    cfg = dialog_paper_full(scheme="closeness")
    reqs = list(itertools.product(cfg.items, cfg.rooms, ("alice", "bob")))
    for req, dl in itertools.product(reqs, reqs):
        r = delivery_reward(cfg, req, dl)
        assert cfg.R_minus <= r <= cfg.R_plus
        assert (r == cfg.R_plus) == (req == dl)


# -- dialog answers -------------------------------------------------------------------------

def test_confirm_accuracy():
    cfg = dialog_paper_full()
    rng = np.random.default_rng(4)
    req = ("regular", "r0", "alice")
    yes = sum(dialog_observe(cfg, req, "conf_i_regular", rng) == "yes" for _ in range(N))
    assert yes / N == pytest.approx(0.8, abs=0.003)


def test_wh_question_single_value_sort_is_exact():
    cfg = dialog_paper_full(rooms=("r0",), distances={"r0": 1.0},
                            persons=(Person("alice", paid=True, place="r0"),))
    rng = np.random.default_rng(5)
    assert {dialog_observe(cfg, ("soda", "r0", "alice"), "ask_r", rng) for _ in range(200)} == {"r:r0"}


def test_wh_question_error_spread():
    cfg = dialog_paper_full(wh_acc={"i": 0.7})
    rng = np.random.default_rng(6)
    req = ("regular", "r0", "alice")
    counts = {}
    for _ in range(N):
        o = dialog_observe(cfg, req, "ask_i", rng)
        counts[o] = counts.get(o, 0) + 1
    assert counts["i:regular"] / N == pytest.approx(0.7, abs=0.003)
    for item in cfg.items:
        if item != "regular":
            assert counts[f"i:{item}"] / N == pytest.approx(0.3 / 5, abs=0.003)


def test_delivery_has_no_answer():
    with pytest.raises(ValueError):
        dialog_observe(dialog_paper_full(), ("regular", "r0", "alice"), "del_regular_r0_alice",
                       np.random.default_rng(0))


def test_default_wh_accuracy():
    assert default_wh_accuracy(1) == 1.0
    assert default_wh_accuracy(2) == pytest.approx(0.9)
    assert default_wh_accuracy(6) == pytest.approx(0.7)
    assert default_wh_accuracy(20) == 0.5


# -- dialog encoding ------------------------------------------------------------------------

def test_small_dialog_dimensions(small_dialog):
    assert small_dialog[2].shape == (5, 12, 7)


def test_unpaid_professor_is_not_authorized():
    cfg = dialog_paper_full()
    space = build_dialog_domain(cfg).state_space(true_facts(cfg, "morning"))
    assert "carol" not in {d["req_person"] for d in space.as_dicts()}
    assert "carol" not in answer_sorts(cfg)["p"]


def test_unavailable_items_cut_actions():
    cfg = dialog_paper_full()
    assert len(build_dialog_domain(cfg).build(true_facts(cfg, "noon")).actions) == 50
    gone = dialog_paper_full(unavailable=("juice", "soda", "cookie"))
    m = build_dialog_domain(gone).build(true_facts(gone, "noon"))
    assert len(m.actions) == 29
    # 3 items x 3 rooms x 2 persons, plus the collapsed term state
    assert len(m.states) == 19


def test_person_in_unknown_room_rejected():
    with pytest.raises(ValueError, match="unknown room"):
        build_dialog_domain(dialog_paper_full(persons=(Person("zed", paid=True, place="r9"),)))


def test_dialog_env_scores_with_its_own_scheme():
    cfg = dialog_paper_full(scheme="closeness")
    env = DialogEnv(cfg, ("regular", "r0", "alice"), "morning")
    rng = np.random.default_rng(0)
    r, o = env.step("ask_i", rng)
    assert r == -1.0 and o.startswith("i:")
    r, o = env.step("del_decaf_r0_alice", rng)
    assert r == pytest.approx(-15.0) and o is None
    out = env.outcome()
    assert out["success"] is False and out["qa_cost"] == 1.0 and env.done


def test_near_window_preset():
    assert NEAR_WINDOW == ((2, 0), (2, 1), (2, 2), (2, 3))
