"""The sense / reason / plan / act loop, its baselines, and episode traces.

One episode repeats: sense exogenous facts, reason about the state space and
prior, build and solve a model, then act and track the state or belief while
the sensed facts stay consistent with the world set the model was built from.
"""
from __future__ import annotations

import dataclasses
import hashlib
import json
import logging
import re
import threading
from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np

from .model_builder import DecisionModel, ModelError, facts_key
from .planning import pbvi_solve, value_iteration
from .planning.belief import ImpossibleObservationError, belief_update
from .plog import format_program

log = logging.getLogger(__name__)

TRACE_SCHEMA = 1
STEP_LIMIT = 500

BASE_STRATEGIES = ("iCORPP", "CORPP", "stationary", "LR+PP", "PP-only", "reasoning-only")
_DEFINED = re.compile(r"^Defined-([123])(?:x(\d+))?$")


class ControllerError(RuntimeError):
    """A reasoner or solver failure, with the episode context attached."""


def parse_strategy(name: str):
    """("iCORPP", None) ... or ("Defined", (k, rounds)) for ``Defined-k[xR]``."""
    if name in BASE_STRATEGIES:
        return name, None
    m = _DEFINED.match(name)
    if m:
        return "Defined", (int(m.group(1)), int(m.group(2) or 1))
    raise ValueError(f"unknown strategy {name!r}; expected one of "
                     f"{', '.join(BASE_STRATEGIES)} or Defined-k[xR]")


# -- policy cache ---------------------------------------------------------------

class PolicyCache:
    """Solved (model, policy) pairs keyed by pipeline variant and fact set.

    Lookups are lock-free; insertion takes a lock so concurrent episodes never
    solve and store the same key twice.
    """

    def __init__(self):
        self._data = {}
        self._lock = threading.Lock()

    def get(self, key):
        return self._data.get(key)

    def get_or_build(self, key, build):
        hit = self._data.get(key)
        if hit is not None:
            return hit, True
        with self._lock:
            hit = self._data.get(key)
            if hit is None:
                hit = build()
                self._data[key] = hit
                return hit, False
        return hit, True

    def __len__(self):
        return len(self._data)

    def __contains__(self, key):
        return key in self._data


def bundle_fingerprint(bundle) -> str:
    fp = getattr(bundle, "_fingerprint", None)
    if fp is None:
        fp = _fingerprint(bundle)
        bundle._fingerprint = fp
    return fp


def _fingerprint(bundle) -> str:
    h = hashlib.sha256()
    for prog in (bundle.rules, bundle.dynamics, bundle.priors):
        h.update(format_program(prog).encode())
    h.update(repr(sorted((k, repr(v)) for k, v in bundle.config.items())).encode())
    return h.hexdigest()[:16]


# -- configuration and traces -------------------------------------------------------

@dataclass
class ControllerConfig:
    strategy: str = "iCORPP"
    replan_on_inconsistency: bool = True
    policy_cache: PolicyCache = field(default_factory=PolicyCache)
    seed: int = 0
    # facts behind the fixed models of the baselines (stationary, CORPP dynamics)
    baseline_facts: dict = field(default_factory=dict)
    # facts that switch off logical reasoning (PP-only); None -> baseline_facts
    unreasoned_facts: Optional[dict] = None
    # applied to every sensed fact set (knowledge conditions)
    sense_transform: Optional[Callable] = None
    solver: dict = field(default_factory=dict)
    max_steps: int = STEP_LIMIT

    def __post_init__(self):
        parse_strategy(self.strategy)
        if self.max_steps < 1:
            raise ValueError("max_steps must be positive")


@dataclass
class EpisodeTrace:
    strategy: str
    seed: int
    steps: list = field(default_factory=list)
    replans: list = field(default_factory=list)
    models: list = field(default_factory=list)
    terminal: bool = False
    truncated: bool = False
    total_reward: float = 0.0
    outcome: dict = field(default_factory=dict)

    @property
    def n_steps(self) -> int:
        return len(self.steps)

    @property
    def actions(self):
        return [s["action"] for s in self.steps]

    @property
    def rewards(self):
        return [s["reward"] for s in self.steps]

    def summary(self) -> dict:
        return {"record": "summary", "schema": TRACE_SCHEMA, "strategy": self.strategy,
                "seed": self.seed, "steps": self.n_steps, "replans": len(self.replans),
                "models": self.models, "terminal": self.terminal, "truncated": self.truncated,
                "total_reward": self.total_reward, "outcome": _jsonable(self.outcome)}

    def to_jsonl(self) -> str:
        lines = [json.dumps({"record": "step", "schema": TRACE_SCHEMA, **_jsonable(s)}, sort_keys=True)
                 for s in self.steps]
        lines += [json.dumps({"record": "replan", "schema": TRACE_SCHEMA, **_jsonable(r)}, sort_keys=True)
                  for r in self.replans]
        lines.append(json.dumps(self.summary(), sort_keys=True))
        return "\n".join(lines) + "\n"


def _jsonable(x):
    if isinstance(x, dict):
        return {str(k): _jsonable(v) for k, v in x.items()}
    if isinstance(x, (list, tuple)):
        return [_jsonable(v) for v in x]
    if isinstance(x, np.generic):
        return x.item()
    return x


# -- consistency ----------------------------------------------------------------------

def check_consistency(bundle, facts, worlds) -> bool:
    """True iff reasoning under ``facts`` yields exactly the world set ``worlds``."""
    try:
        space = bundle.state_space(facts)
    except ModelError:
        return False
    return set(space.worlds) == set(worlds)


def fact_changes(old: dict, new: dict) -> dict:
    keys = sorted(set(old) | set(new))
    return {k: [old.get(k), new.get(k)] for k in keys if old.get(k) != new.get(k)}


# -- planning per strategy ----------------------------------------------------------

def uniform_prior(model: DecisionModel) -> DecisionModel:
    live = ~np.asarray(model.terminal, dtype=bool)
    p = np.where(live, 1.0, 0.0)
    return dataclasses.replace(model, prior=p / p.sum())


def solve(model: DecisionModel, solver: dict = None):
    solver = dict(solver or {})
    if model.kind == "MDP":
        return value_iteration(model, gamma=solver.get("gamma", 0.95))
    return pbvi_solve(model, **solver)


class Planner:
    """Builds and caches the model/policy pair each strategy acts on."""

    def __init__(self, bundle, config: ControllerConfig):
        self.bundle = bundle
        self.config = config
        self.kind, self.defined = parse_strategy(config.strategy)
        self.fp = bundle_fingerprint(bundle)

    def _solver(self):
        s = dict(self.config.solver)
        s.setdefault("gamma", self.bundle.gamma)
        return s

    def _cached(self, variant, facts, build):
        key = (self.fp, variant, facts_key(facts), repr(sorted(self.config.solver.items())))

        def make():
            model = build()
            policy = None if variant in ("defined", "reasoning-only") else solve(model, self._solver())
            return model, policy

        (model, policy), hit = self.config.policy_cache.get_or_build(key, make)
        return model, policy, hit

    def plan(self, sensed: dict):
        b, cfg = self.bundle, self.config
        k = self.kind
        if k == "iCORPP":
            return self._cached("full", sensed, lambda: b.build(sensed))
        if k == "CORPP":
            base = cfg.baseline_facts
            return self._cached(("corpp", facts_key(base)), sensed,
                                lambda: b.build(sensed, dynamics_facts=base))
        if k == "stationary":
            base = cfg.baseline_facts
            return self._cached("full", base, lambda: b.build(base))
        if k == "LR+PP":
            return self._cached("lr", sensed, lambda: uniform_prior(b.build(sensed)))
        if k == "PP-only":
            base = cfg.unreasoned_facts if cfg.unreasoned_facts is not None else cfg.baseline_facts
            return self._cached("lr", base, lambda: uniform_prior(b.build(base)))
        if k == "reasoning-only":
            return self._cached("reasoning-only", sensed, lambda: b.build(sensed))
        # Defined-k tracks beliefs on the reasoned state space with no prior knowledge
        return self._cached("defined", sensed, lambda: uniform_prior(b.build(sensed)))

    @property
    def replans(self) -> bool:
        return self.kind in ("iCORPP",) and self.config.replan_on_inconsistency

    @property
    def senses(self) -> bool:
        return self.kind not in ("stationary", "PP-only")


# -- fixed-schedule and no-question policies -------------------------------------------

def terminating_actions(model: DecisionModel):
    """Actions that end the episode from every live state."""
    term = np.flatnonzero(model.terminal)
    live = np.flatnonzero(~np.asarray(model.terminal, dtype=bool))
    if term.size == 0:
        return []
    mass = model.T[live][:, :, term].sum(axis=2)  # (live, A)
    return [a for a in range(len(model.actions)) if np.all(mass[:, a] > 1.0 - 1e-9)]


def best_terminating_action(model: DecisionModel, b) -> int:
    acts = terminating_actions(model)
    if not acts:
        raise ControllerError("model has no action that ends the episode")
    q = np.asarray(b) @ model.R[:, acts]
    return acts[int(np.argmax(q))]


def defined_schedule(model: DecisionModel, k: int, rounds: int):
    """Question actions of Defined-k, one round repeated ``rounds`` times.

    Defined-1 asks every wh-question, Defined-2 every confirmation, Defined-3
    both, each exactly once per round, in model action order.
    """
    wh = [a for a, n in enumerate(model.actions) if n.startswith("ask_")]
    conf = [a for a, n in enumerate(model.actions) if n.startswith("conf_")]
    one = {1: wh, 2: conf, 3: wh + conf}[k]
    return one * rounds


def most_likely_delivery(model: DecisionModel, b) -> int:
    """Delivery for the argmax-belief state, lowest index on ties."""
    live = ~np.asarray(model.terminal, dtype=bool)
    bb = np.where(live, b, -1.0)
    s = int(np.argmax(bb))
    acts = terminating_actions(model)
    # the terminating action whose reward is highest in state s
    return acts[int(np.argmax(model.R[s, acts]))]


# -- the episode loop ------------------------------------------------------------------

def _state_of(model: DecisionModel, observed: dict) -> int:
    for i, v in enumerate(model.state_values):
        if v is not None and all(v.get(k) == x for k, x in observed.items() if k in v):
            return i
    raise ControllerError(f"observed state {observed} is not in the model")


def _carry_belief(old_model, b, new_model):
    """Map a belief onto a rebuilt model by state label; the new prior if nothing carries."""
    idx = {lab: i for i, lab in enumerate(new_model.states)}
    nb = np.zeros(len(new_model.states))
    for lab, p in zip(old_model.states, b):
        j = idx.get(lab)
        if j is not None:
            nb[j] += p
    if nb.sum() <= 1e-12:
        return new_model.prior.copy()
    return nb / nb.sum()


def run_episode(bundle, env, config: ControllerConfig, rng=None) -> EpisodeTrace:
    """Run one episode of ``config.strategy`` in ``env``.

    ``env`` provides ``sense()``, ``step(action_name, rng) -> (reward, obs)``,
    ``done``, ``outcome()`` and, for fully observable domains,
    ``observe_state()``.
    """
    rng = np.random.default_rng(config.seed) if rng is None else rng
    planner = Planner(bundle, config)
    trace = EpisodeTrace(config.strategy, config.seed)

    def sense():
        facts = dict(env.sense()) if planner.senses else {}
        if config.sense_transform is not None and planner.senses:
            facts = config.sense_transform(facts)
        return facts

    def build(facts):
        try:
            model, policy, _ = planner.plan(facts)
        except (ModelError, ValueError) as e:
            raise ControllerError(f"{config.strategy} step {trace.n_steps}: planning failed "
                                  f"under facts {facts_key(facts)}: {e}") from e
        trace.models.append(model.model_hash[:12])
        if hasattr(env, "listen_for") and model.kind == "POMDP":
            env.listen_for(model.observations)
        return model, policy

    def world_set(model):
        return {tuple(v[k] for k in bundle.task.relevant_vars)
                for v in model.state_values if v is not None}

    facts = sense()
    model, policy = build(facts)
    worlds = world_set(model)
    pomdp = model.kind == "POMDP"
    b = model.prior.copy() if pomdp else None
    schedule = None
    if planner.kind == "Defined":
        schedule = list(defined_schedule(model, *planner.defined))

    while not env.done:
        if trace.n_steps >= config.max_steps:
            trace.truncated = True
            break
        # act
        if pomdp:
            if planner.kind == "reasoning-only":
                a = best_terminating_action(model, b)
            elif schedule is not None:
                a = schedule.pop(0) if schedule else most_likely_delivery(model, b)
            else:
                a = policy.action(b)
            s_label = None
        else:
            s = _state_of(model, env.observe_state())
            a = int(policy.action(s))
            s_label = model.states[s]
        action = model.actions[a]
        reward, obs = env.step(action, rng)
        trace.total_reward += reward
        step = {"t": trace.n_steps, "facts": facts, "model": trace.models[-1],
                "action": action, "observation": obs, "reward": reward}
        if s_label is not None:
            step["state"] = s_label
        if pomdp and obs is not None:
            o = model.observations.index(obs) if obs in model.observations else None
            try:
                if o is None:
                    raise ImpossibleObservationError(f"observation {obs!r} is not in the model")
                b = belief_update(model, b, a, o)
            except ImpossibleObservationError as e:
                # the model ruled this answer out: fall back to the prior belief
                step["belief_reset"] = str(e)
                b = model.prior.copy()
        trace.steps.append(step)
        if env.done:
            break
        # monitor the exogenous facts (once per action step)
        new_facts = sense()
        if new_facts == facts:
            continue
        if not planner.replans or check_consistency(bundle, new_facts, worlds):
            facts = new_facts
            continue
        trace.replans.append({"t": trace.n_steps, "changed": fact_changes(facts, new_facts),
                              "test": "projected world set"})
        old_model = model
        facts = new_facts
        model, policy = build(facts)
        worlds = world_set(model)
        if pomdp:
            b = _carry_belief(old_model, b, model)

    trace.terminal = bool(env.done)
    trace.outcome = dict(env.outcome())
    return trace
