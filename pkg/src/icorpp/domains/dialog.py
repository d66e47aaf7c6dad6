"""Shopping-request dialog: who wants which item delivered to which room.

The knowledge bundle covers authorization defaults, the item ontology, item
availability and commonsense request preferences.  The POMDP skeleton has
wh-questions (``ask_*``), confirming questions (``conf_*``) and one delivery
action per possible request; the observation and reward tables are host-coded.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from ..model_builder import DomainBundle, Task, VariablePartition
from ..plog import FALSE, TRUE, parse_program
from .ontology import Ontology, item_closeness, room_closeness

TIMES = ("morning", "noon", "evening")
RELEVANT = ("req_item", "req_room", "req_person")
NEXT_VARS = {"req_item": "next_item", "req_room": "next_room", "req_person": "next_person"}
SORT_TAG = {"req_item": "i", "req_room": "r", "req_person": "p"}
YES, NO = "yes", "no"


@dataclass
class Person:
    name: str
    kind: str = "prof"  # prof | student
    paid: bool = False
    registered: bool = False
    place: Optional[str] = None


@dataclass
class DialogConfig:
    items: tuple = ("regular", "decaf", "soda", "juice", "sandwich", "cookie")
    ontology: dict = None  # nested dict; None -> default tree restricted to ``items``
    rooms: tuple = ("r0", "r1", "r2")
    distances: dict = field(default_factory=lambda: {"r0": 1.0, "r1": 2.0, "r2": 3.0})
    persons: tuple = ()
    unavailable: tuple = ()
    time: str = "morning"
    morning_items: Optional[tuple] = None  # default: leaves under the coffee class
    morning_mass: float = 0.8
    noon_items: Optional[tuple] = None  # default: leaves under the food class
    noon_mass: float = 0.6
    place_pref: float = 0.7
    confirm_acc: float = 0.8
    wh_acc: Optional[dict] = None  # sort tag -> accuracy; default from sort size
    scheme: str = "flat"  # flat | closeness
    r_w: float = 1.0
    r_p: float = 2.0
    r_d_minus: float = 100.0
    r_d_plus: float = 50.0
    R_plus: float = 20.0
    R_minus: float = -20.0
    gamma: float = 0.95

    def tree(self) -> Ontology:
        if self.ontology is not None:
            return Ontology(self.ontology)
        return Ontology().restricted(self.items)

    def validate(self):
        rooms = set(self.rooms)
        for p in self.persons:
            if p.place is not None and p.place not in rooms:
                raise ValueError(f"person {p.name} placed in unknown room {p.place}")
            if p.kind not in ("prof", "student"):
                raise ValueError(f"person {p.name}: kind must be prof or student")
        for r in self.rooms:
            if self.distances.get(r, 0) <= 0:
                raise ValueError(f"room {r} needs a positive distance from the shop")
        if not 0.0 < self.confirm_acc <= 1.0:
            raise ValueError("confirm accuracy must lie in (0, 1]")
        onto = self.tree()
        missing = set(self.items) - set(onto.leaves)
        if missing:
            raise ValueError(f"items {sorted(missing)} are not leaves of the ontology")
        if self.scheme not in ("flat", "closeness"):
            raise ValueError(f"unknown reward scheme {self.scheme!r}")


def default_wh_accuracy(n: int) -> float:
    """max(0.5, 0.9 - 0.05 (n - 2)); a single-value sort is always heard right."""
    if n <= 1:
        return 1.0
    return max(0.5, 0.9 - 0.05 * (n - 2))


def wh_accuracy(cfg: DialogConfig, tag: str, n: int) -> float:
    if cfg.wh_acc and tag in cfg.wh_acc:
        return 1.0 if n <= 1 else cfg.wh_acc[tag]
    return default_wh_accuracy(n)


def _under(onto: Ontology, cls, items):
    return tuple(i for i in items if cls in onto.path(i)[:-1])


def preferred_items(cfg: DialogConfig):
    onto = cfg.tree()
    morning = cfg.morning_items
    if morning is None:
        morning = _under(onto, "coffee", cfg.items) or tuple(i for i in cfg.items if i == "coffee")
    noon = cfg.noon_items
    if noon is None:
        noon = _under(onto, "food", cfg.items)
    return tuple(morning), tuple(noon)


# -- knowledge bundle ------------------------------------------------------

def action_names(items, rooms, persons, requests=None):
    acts = ["ask_i", "ask_r", "ask_p"]
    acts += [f"conf_i_{i}" for i in items]
    acts += [f"conf_r_{r}" for r in rooms]
    acts += [f"conf_p_{p}" for p in persons]
    if requests is None:
        requests = [(i, r, p) for i in items for r in rooms for p in persons]
    acts += [f"del_{i}_{r}_{p}" for i, r, p in requests]
    return acts


def domain_text(cfg: DialogConfig) -> str:
    onto = cfg.tree()
    persons = [p.name for p in cfg.persons]
    lines = [
        "time = {%s}." % ", ".join(TIMES),
        "item = {%s}." % ", ".join(cfg.items),
        "room = {%s}." % ", ".join(cfg.rooms),
        "person = {%s}." % ", ".join(persons),
        "class = {%s}." % ", ".join(onto.classes),
        "curr_time : time.",
        "req_item : item.", "req_room : room.", "req_person : person.",
        "prof : person -> boolean.", "student : person -> boolean.",
        "paid : person -> boolean.", "registered : person -> boolean.",
        "authorized : person -> boolean.", "place : person, room -> boolean.",
        "available : item -> boolean.",
        "subcls : class, class -> boolean.", "is : item, class -> boolean.",
        "task : item, room, person -> boolean.",
        "% ontology",
        "subcls(C1,C3) :- subcls(C1,C2), subcls(C2,C3).",
        "is(I,C1) :- is(I,C2), subcls(C2,C1).",
    ]
    for c in onto.classes:
        par = onto.parent[c]
        if par is not None:
            lines.append(f"subcls({c},{par}).")
    for i in cfg.items:
        lines.append(f"is({i},{onto.parent[i]}).")
    lines += [
        "% who may place orders",
        "authorized(P) :- paid(P), prof(P).",
        "authorized(P) :- registered(P), student(P).",
        "-paid(P) :- not paid(P), prof(P).",
        "-registered(P) :- not registered(P), student(P).",
        "-authorized(P) :- not authorized(P).",
        "available(I) :- not -available(I).",
    ]
    for p in cfg.persons:
        lines.append(f"{p.kind}({p.name}).")
        if p.place is not None:
            lines.append(f"place({p.name},{p.place}).")
    lines += [
        "% the request",
        "random(curr_time).",
        "random(req_person : {P : authorized(P)}).",
        "random(req_item : {I : available(I)}).",
        "random(req_room).",
        "task(I,R,P) :- req_item=I, req_room=R, req_person=P, authorized(P).",
    ]
    return "\n".join(lines) + "\n"


def priors_text(cfg: DialogConfig) -> str:
    morning, noon = preferred_items(cfg)
    lines = []
    for i in morning:
        lines.append(f"pr(req_item={i} | curr_time=morning) = {cfg.morning_mass / len(morning)!r}.")
    for i in noon:
        lines.append(f"pr(req_item={i} | curr_time=noon) = {cfg.noon_mass / len(noon)!r}.")
    if cfg.place_pref > 0:
        lines.append(f"pr(req_room=R | req_person=P, place(P,R)) = {cfg.place_pref!r}.")
    return "\n".join(lines) + "\n"


def dynamics_text(cfg: DialogConfig) -> str:
    persons = [p.name for p in cfg.persons]
    acts = action_names(cfg.items, cfg.rooms, persons)
    lines = [
        "action = {%s}." % ", ".join(acts),
        "curr_a : action.", "delivery : action -> boolean.",
        "next_item : item.", "next_room : room.", "next_person : person.",
        "next_term : boolean.",
        "random(curr_a).", "random(next_item).", "random(next_room).",
        "random(next_person).", "random(next_term).",
        "% questions leave the request unchanged; a delivery ends the episode",
        "pr(next_item=I | req_item=I) = 1.0.",
        "pr(next_room=R | req_room=R) = 1.0.",
        "pr(next_person=P | req_person=P) = 1.0.",
        "pr(next_term=true | curr_a=A, delivery(A)) = 1.0.",
        "pr(next_term=false | curr_a=A, not delivery(A)) = 1.0.",
    ]
    lines += [f"delivery({a})." for a in acts if a.startswith("del_")]
    return "\n".join(lines) + "\n"


# -- POMDP skeleton ----------------------------------------------------------

def _values_in_space(values, var):
    seen = []
    for v in values:
        if v is not None and v[var] not in seen:
            seen.append(v[var])
    return seen


def _sort_order(cfg, var, present):
    full = {"req_item": cfg.items, "req_room": cfg.rooms,
            "req_person": tuple(p.name for p in cfg.persons)}[var]
    return [x for x in full if x in present]


def space_actions(cfg: DialogConfig):
    def actions(space):
        values = space.as_dicts()
        items = _sort_order(cfg, "req_item", _values_in_space(values, "req_item"))
        rooms = _sort_order(cfg, "req_room", _values_in_space(values, "req_room"))
        persons = _sort_order(cfg, "req_person", _values_in_space(values, "req_person"))
        reqs = [(v["req_item"], v["req_room"], v["req_person"]) for v in values]
        return action_names(items, rooms, persons, reqs)
    return actions


def parse_action(name: str):
    """``("ask", tag)``, ``("conf", tag, value)`` or ``("del", item, room, person)``."""
    parts = name.split("_")
    if parts[0] == "ask":
        return ("ask", parts[1])
    if parts[0] == "conf":
        return ("conf", parts[1], "_".join(parts[2:]))
    if parts[0] == "del":
        return ("del", parts[1], parts[2], parts[3])
    raise ValueError(f"unknown dialog action {name!r}")


def observation_names(items, rooms, persons):
    return ([f"i:{i}" for i in items] + [f"r:{r}" for r in rooms] +
            [f"p:{p}" for p in persons] + [YES, NO])


def make_observation_builder(cfg: DialogConfig):
    def build(values, actions):
        items = _sort_order(cfg, "req_item", _values_in_space(values, "req_item"))
        rooms = _sort_order(cfg, "req_room", _values_in_space(values, "req_room"))
        persons = _sort_order(cfg, "req_person", _values_in_space(values, "req_person"))
        Z = observation_names(items, rooms, persons)
        zi = {z: k for k, z in enumerate(Z)}
        sorts = {"i": ("req_item", items), "r": ("req_room", rooms), "p": ("req_person", persons)}
        O = np.zeros((len(values), len(actions), len(Z)))
        for a, act in enumerate(actions):
            kind = parse_action(act)
            for s, v in enumerate(values):
                if v is None or kind[0] == "del":
                    O[s, a, :] = 1.0 / len(Z)
                    continue
                tag = kind[1]
                var, dom = sorts[tag]
                if kind[0] == "ask":
                    acc = wh_accuracy(cfg, tag, len(dom))
                    for x in dom:
                        p = acc if x == v[var] else (1.0 - acc) / (len(dom) - 1)
                        O[s, a, zi[f"{tag}:{x}"]] = p
                else:
                    right = YES if v[var] == kind[2] else NO
                    wrong = NO if right == YES else YES
                    O[s, a, zi[right]] = cfg.confirm_acc
                    O[s, a, zi[wrong]] = 1.0 - cfg.confirm_acc
        return Z, O
    return build


def delivery_reward(cfg: DialogConfig, request, delivery, onto: Ontology = None) -> float:
    """Reward of delivering ``delivery`` = (item, room, person) for ``request``."""
    if tuple(request) == tuple(delivery):
        return cfg.R_plus if cfg.scheme == "closeness" else cfg.r_d_plus
    if cfg.scheme == "flat":
        return -cfg.r_d_minus
    onto = onto or cfg.tree()
    lam_i = item_closeness(onto, delivery[0], request[0])
    lam_r = room_closeness(cfg.distances, delivery[1], request[1])
    lam_p = 1.0
    return (1.0 - lam_i * lam_p * lam_r) * cfg.R_minus


def question_cost(cfg: DialogConfig, action: str) -> float:
    kind = parse_action(action)[0]
    if kind == "ask":
        return cfg.r_w
    if kind == "conf":
        return cfg.r_p
    return 0.0


def make_reward_builder(cfg: DialogConfig):
    onto = cfg.tree()

    def build(values, actions, T):
        R = np.zeros((len(values), len(actions)))
        for a, act in enumerate(actions):
            kind = parse_action(act)
            for s, v in enumerate(values):
                if v is None:
                    continue
                if kind[0] == "del":
                    req = (v["req_item"], v["req_room"], v["req_person"])
                    R[s, a] = delivery_reward(cfg, req, kind[1:], onto)
                else:
                    R[s, a] = -question_cost(cfg, act)
        return R
    return build


def dialog_label(variables, values):
    return "_".join(values)


def build_dialog_domain(cfg: DialogConfig) -> DomainBundle:
    cfg.validate()
    rules = parse_program(domain_text(cfg))
    priors = parse_program(priors_text(cfg), base=rules)
    dynamics = parse_program(dynamics_text(cfg), base=rules)
    partition = VariablePartition(
        endogenous=RELEVANT,
        exogenous=("curr_time", "paid", "registered", "available"),
        defaults={},
    )
    task = Task(
        name="identify_request",
        relevant_vars=RELEVANT,
        next_vars=NEXT_VARS,
        actions=space_actions(cfg),
        reward_builder=make_reward_builder(cfg),
        observation_builder=make_observation_builder(cfg),
        term_next="next_term",
        collapse_terminal=True,
        state_label=dialog_label,
    )
    return DomainBundle("dialog", rules, dynamics, priors, partition, task,
                        config=_config_dict(cfg), gamma=cfg.gamma)


def _config_dict(cfg):
    d = dict(cfg.__dict__)
    d["persons"] = [p.__dict__.copy() for p in cfg.persons]
    return d


def true_facts(cfg: DialogConfig, time=None) -> dict:
    """What the robot's database and clock would report."""
    facts = {}
    if time is not None:
        facts["curr_time"] = time
    for p in cfg.persons:
        if p.paid:
            facts[f"paid({p.name})"] = TRUE
        if p.registered:
            facts[f"registered({p.name})"] = TRUE
    for i in cfg.unavailable:
        facts[f"available({i})"] = FALSE
    return facts


# -- simulator ----------------------------------------------------------------

def is_authorized(p: Person) -> bool:
    return (p.kind == "prof" and p.paid) or (p.kind == "student" and p.registered)


def answer_sorts(cfg: DialogConfig) -> dict:
    """Values the speech grammar can return: available items, authorized people."""
    return {"i": [i for i in cfg.items if i not in cfg.unavailable],
            "r": list(cfg.rooms),
            "p": [p.name for p in cfg.persons if is_authorized(p)]}


def dialog_observe(cfg: DialogConfig, request, action, rng, sorts=None) -> str:
    """Sample the answer to a question about the hidden ``request``."""
    kind = parse_action(action)
    if kind[0] == "del":
        raise ValueError("deliveries produce no answer")
    if sorts is None:
        sorts = answer_sorts(cfg)
    idx = {"i": 0, "r": 1, "p": 2}[kind[1]]
    truth = request[idx]
    if kind[0] == "conf":
        correct = rng.random() < cfg.confirm_acc
        match = truth == kind[2]
        return YES if match == correct else NO
    dom = list(sorts[kind[1]])
    acc = wh_accuracy(cfg, kind[1], len(dom))
    if len(dom) <= 1 or rng.random() < acc:
        return f"{kind[1]}:{truth}"
    others = [x for x in dom if x != truth]
    return f"{kind[1]}:{others[rng.integers(len(others))]}"


class DialogEnv:
    """One simulated conversation with a hidden request."""

    def __init__(self, cfg: DialogConfig, request, time, scheme_cfg: DialogConfig = None):
        self.cfg = cfg
        self.request = tuple(request)
        self.time = time
        # rewards are always scored with the environment's own scheme
        self.scheme_cfg = scheme_cfg or cfg
        self.onto = self.scheme_cfg.tree()
        self.sorts = answer_sorts(cfg)
        self.reset()

    def reset(self, rng=None):
        self.done = False
        self.delivered = None
        self.qa_cost = 0.0
        self.turns = 0
        return self

    def sense(self) -> dict:
        return true_facts(self.cfg, self.time)

    def listen_for(self, observations):
        """Use the robot's grammar: answers come from the values its model knows.

        A robot unaware that some item is sold out still hears (and mishears)
        every item name.
        """
        sorts = {"i": [], "r": [], "p": []}
        for o in observations:
            tag, _, value = o.partition(":")
            if tag in sorts and value:
                sorts[tag].append(value)
        for tag, truth in zip("irp", self.request):
            if truth not in sorts[tag]:
                sorts[tag].append(truth)
        self.sorts = sorts

    def step(self, action, rng):
        kind = parse_action(action)
        if kind[0] == "del":
            self.done = True
            self.delivered = tuple(kind[1:])
            return delivery_reward(self.scheme_cfg, self.request, self.delivered, self.onto), None
        cost = question_cost(self.scheme_cfg, action)
        self.qa_cost += cost
        self.turns += 1
        return -cost, dialog_observe(self.cfg, self.request, action, rng, self.sorts)

    def outcome(self) -> dict:
        return {"success": self.delivered == self.request, "qa_cost": self.qa_cost,
                "delivered": self.delivered, "request": self.request, "turns": self.turns}
