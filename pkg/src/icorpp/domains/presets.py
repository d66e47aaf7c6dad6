"""Named scenario presets used by the CLI, the benchmarks and the tests."""
from __future__ import annotations

import dataclasses

from .dialog import DialogConfig, Person, build_dialog_domain
from .navigation import NavConfig, build_navigation_domain

# cells next to the windows along row 2; the direct route up column 0 crosses them
NEAR_WINDOW = ((2, 0), (2, 1), (2, 2), (2, 3))


def nav_paper(**kw) -> NavConfig:
    base = dict(near_window=NEAR_WINDOW, goal=(0, 3), start=(4, 0),
                time="morning", weather="sunny")
    base.update(kw)
    return NavConfig(**base)


def nav_walker(**kw) -> NavConfig:
    """No sunlight; a walker steps onto the robot's direct route mid-episode."""
    base = dict(near_window=NEAR_WINDOW, goal=(0, 3), start=(4, 0), time="noon",
                weather="cloudy", walker_path=((1, 0), (1, 1), (0, 1), (0, 2)), walker_start_step=2,
                walker_period=5)
    base.update(kw)
    return NavConfig(**base)


def dialog_paper_small(**kw) -> DialogConfig:
    """Two items, one room, two people: the five-state worked example."""
    base = dict(
        items=("coffee", "sandwich"),
        ontology={"item": {"drink": {"coffee": {}}, "food": {"sandwich": {}}}},
        rooms=("lab",), distances={"lab": 1.0},
        persons=(Person("alice", paid=True, place="lab"), Person("bob", paid=True, place="lab")),
        morning_items=("coffee",),
    )
    base.update(kw)
    return DialogConfig(**base)


def dialog_paper_full(**kw) -> DialogConfig:
    """Six items, three rooms, two authorized people (carol has not paid)."""
    base = dict(
        persons=(Person("alice", paid=True, place="r0"), Person("bob", paid=True, place="r1"),
                 Person("carol", paid=False, place="r2")),
    )
    base.update(kw)
    return DialogConfig(**base)


def dialog_tuning(**kw) -> DialogConfig:
    """Four items, three rooms, two people; uniform requests, closeness rewards."""
    base = dict(
        items=("regular", "decaf", "soda", "cookie"),
        persons=(Person("alice", paid=True, place="r0"), Person("bob", paid=True, place="r1")),
        morning_items=(), noon_items=(), place_pref=0.0,
        scheme="closeness",
    )
    base.update(kw)
    return DialogConfig(**base)


def dialog_trial(**kw) -> DialogConfig:
    """The two-item, two-room, two-person setting of the illustrative trials.

    Open questions are heard less reliably than yes/no answers here (0.7 vs
    0.8), and rewards use the closeness scheme at +-30.
    """
    base = dict(
        items=("sandwich", "coffee"),
        ontology={"item": {"drink": {"coffee": {}}, "food": {"sandwich": {}}}},
        rooms=("r0", "r1"), distances={"r0": 1.0, "r1": 2.0},
        persons=(Person("p0", paid=True, place="r0"), Person("p1", paid=True, place="r1")),
        morning_items=("coffee",), noon_items=("sandwich",),
        wh_acc={"i": 0.7, "r": 0.7, "p": 0.7},
        scheme="closeness", R_plus=30.0, R_minus=-30.0,
    )
    base.update(kw)
    return DialogConfig(**base)


# hidden request of the illustrative trials
TRIAL_REQUEST = ("coffee", "r1", "p1")

PRESETS = {
    "nav-paper": ("navigation", nav_paper),
    "nav-walker": ("navigation", nav_walker),
    "dialog-paper-small": ("dialog", dialog_paper_small),
    "dialog-paper-full": ("dialog", dialog_paper_full),
    "dialog-tuning": ("dialog", dialog_tuning),
    "dialog-trial": ("dialog", dialog_trial),
}


def preset(name: str, **overrides):
    """(kind, config) for a preset name."""
    try:
        kind, factory = PRESETS[name]
    except KeyError:
        raise KeyError(f"unknown scenario {name!r}; known: {', '.join(sorted(PRESETS))}") from None
    return kind, factory(**overrides)


def build_preset(name: str, **overrides):
    kind, cfg = preset(name, **overrides)
    if kind == "navigation":
        return build_navigation_domain(cfg)
    return build_dialog_domain(cfg)


def with_changes(cfg, **kw):
    return dataclasses.replace(cfg, **kw)
