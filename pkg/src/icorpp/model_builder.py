"""State-space specification, prior beliefs and dynamics by reasoning.

``log_reason``, ``prob_reason`` and ``dyn_reason`` turn a knowledge bundle
plus the currently sensed exogenous facts into the ingredients of an MDP or
POMDP; ``assemble_model`` combines them with host-coded reward (and
observation) builders into a :class:`DecisionModel`.
"""
from __future__ import annotations

import hashlib
import itertools
import logging
import math
from dataclasses import dataclass, field
from typing import Callable, Mapping, Optional

import numpy as np

from .plog import (
    BOOLEAN, FALSE, TRUE, Atom, Literal, PlogError, Program, enumerate_worlds, ground,
    marginals, parse_literal, query,
)
from .plog.engine import Evidence, InconsistentEvidenceError

log = logging.getLogger(__name__)

ROW_TOL = 1e-6


class ModelError(Exception):
    """Raised when a decision model cannot be built from the knowledge given."""


# -- configuration types -------------------------------------------------

@dataclass(frozen=True)
class VariablePartition:
    endogenous: tuple
    exogenous: tuple
    defaults: Mapping = field(default_factory=dict)

    def __post_init__(self):
        object.__setattr__(self, "endogenous", tuple(self.endogenous))
        object.__setattr__(self, "exogenous", tuple(self.exogenous))
        object.__setattr__(self, "defaults", dict(self.defaults))
        both = set(self.endogenous) & set(self.exogenous)
        if both:
            raise ModelError(f"variables both endogenous and exogenous: {sorted(both)}")
        for k in self.defaults:
            if _attr_name(k) not in self.exogenous:
                raise ModelError(f"default given for non-exogenous variable {k}")

    def validate(self, program: Program):
        attrs = program.attribute_map
        for k, v in self.defaults.items():
            decl = attrs.get(_attr_name(k))
            if decl is None:
                raise ModelError(f"default for undeclared attribute {k}")
            rng = (TRUE, FALSE) if decl.range == BOOLEAN else program.sort_map[decl.range]
            if v not in rng:
                raise ModelError(f"default {k}={v} outside the range of {decl.name}")


@dataclass(frozen=True)
class Task:
    """What the controller is asked to do, and how its model is shaped.

    ``next_vars`` maps each relevant variable whose value evolves to the
    attribute holding its successor value; relevant variables missing from
    the mapping are derived (fully determined by the others).  With
    ``collapse_terminal`` every world where ``term_next`` becomes true is
    merged into one absorbing ``term`` state.
    """

    name: str
    relevant_vars: tuple
    next_vars: Mapping
    actions: object  # sequence of names, or callable(StateSpace) -> sequence
    reward_builder: Callable
    observation_builder: Optional[Callable] = None
    action_attr: str = "curr_a"
    term_var: Optional[str] = None
    term_next: Optional[str] = None
    collapse_terminal: bool = False
    state_label: Optional[Callable] = None

    def actions_for(self, space) -> tuple:
        acts = self.actions(space) if callable(self.actions) else self.actions
        return tuple(acts)

    @property
    def partially_observable(self) -> bool:
        return self.observation_builder is not None


@dataclass(frozen=True)
class StateSpace:
    variables: tuple
    worlds: tuple  # tuples of values, aligned with ``variables``

    @property
    def index(self) -> dict:
        return {w: i for i, w in enumerate(self.worlds)}

    def __len__(self):
        return len(self.worlds)

    def as_dicts(self):
        return [dict(zip(self.variables, w)) for w in self.worlds]


@dataclass(frozen=True)
class PriorBelief:
    probs: np.ndarray

    def __post_init__(self):
        if abs(float(self.probs.sum()) - 1.0) > 1e-9:
            raise ModelError("prior belief does not sum to 1")


@dataclass
class DecisionModel:
    kind: str  # "MDP" or "POMDP"
    states: tuple  # labels
    state_values: tuple  # dicts (None for the collapsed term state)
    actions: tuple
    T: np.ndarray
    R: np.ndarray
    terminal: np.ndarray
    observations: tuple = ()
    O: Optional[np.ndarray] = None
    prior: Optional[np.ndarray] = None
    facts: tuple = ()

    def __post_init__(self):
        S, A = len(self.states), len(self.actions)
        if self.T.shape != (S, A, S):
            raise ModelError(f"T has shape {self.T.shape}, expected {(S, A, S)}")
        if self.R.shape != (S, A):
            raise ModelError(f"R has shape {self.R.shape}, expected {(S, A)}")
        if not np.all(np.isfinite(self.R)):
            raise ModelError("reward table contains non-finite entries")
        if np.any(self.T < -1e-12) or not np.allclose(self.T.sum(axis=2), 1.0, atol=1e-9):
            raise ModelError("transition rows are not stochastic")
        for s in np.flatnonzero(self.terminal):
            if not np.allclose(self.T[s, :, s], 1.0, atol=1e-9):
                raise ModelError(f"terminal state {self.states[s]} is not absorbing")
        if self.kind == "POMDP":
            Z = len(self.observations)
            if self.O is None or self.O.shape != (S, A, Z):
                raise ModelError("POMDP needs an observation table of shape (S, A, Z)")
            if np.any(self.O < -1e-12) or not np.allclose(self.O.sum(axis=2), 1.0, atol=1e-9):
                raise ModelError("observation rows are not stochastic")
            if self.prior is None or abs(self.prior.sum() - 1.0) > 1e-9:
                raise ModelError("POMDP prior missing or not normalised")

    @property
    def shape(self) -> tuple:
        if self.kind == "POMDP":
            return (len(self.states), len(self.actions), len(self.observations))
        return (len(self.states), len(self.actions))

    def state_index(self, label) -> int:
        return self.states.index(label)

    def action_index(self, name) -> int:
        return self.actions.index(name)

    def scaled(self, c: float) -> "DecisionModel":
        """Copy with every reward multiplied by ``c``."""
        return DecisionModel(self.kind, self.states, self.state_values, self.actions,
                             self.T, self.R * c, self.terminal, self.observations,
                             self.O, self.prior, self.facts)

    @property
    def model_hash(self) -> str:
        h = hashlib.sha256()
        h.update(self.kind.encode())
        h.update("\x1f".join(self.states).encode())
        h.update("\x1e".join(self.actions).encode())
        h.update("\x1d".join(self.observations).encode())
        for arr in (self.T, self.R, self.O, self.prior):
            if arr is not None:
                h.update(np.ascontiguousarray(np.round(arr, 12), dtype=np.float64).tobytes())
        return h.hexdigest()


# -- facts ----------------------------------------------------------------

def _attr_name(key: str) -> str:
    return key.split("(", 1)[0].strip()


def facts_key(facts: Mapping) -> tuple:
    return tuple(sorted((str(k), str(v)) for k, v in facts.items()))


def fact_literal(key: str, value: str) -> Literal:
    atom = parse_literal(key).atom
    return Literal(atom, value)


def complete_facts(partition: VariablePartition, sensed: Mapping) -> dict:
    """Alg. 1 lines 1-9: sensed facts, plus defaults for unsensed exogenous variables."""
    facts = {}
    for k, v in sensed.items():
        if _attr_name(k) not in partition.exogenous:
            raise ModelError(f"sensed fact {k} is not an exogenous variable")
        facts[k] = str(v)
    sensed_names = {_attr_name(k) for k in facts}
    for k, v in partition.defaults.items():
        if _attr_name(k) not in sensed_names and k not in facts:
            facts[k] = str(v)
    return facts


def split_facts(program: Program, facts: Mapping):
    """Facts on random attributes become observations; the rest become program facts."""
    randoms = program.random_attributes()
    lits, evidence = [], []
    for k, v in sorted(facts.items()):
        lit = fact_literal(k, v)
        if lit.atom.name not in program.attribute_map and lit.value not in (TRUE, FALSE):
            raise ModelError(f"fact on undeclared attribute {k}")
        if lit.atom.name in randoms:
            evidence.append(Evidence("obs", lit))
        else:
            lits.append(lit)
    return lits, evidence


class Reasoner:
    """Grounds ``program + facts`` once per fact set and memoises the result."""

    def __init__(self, program: Program):
        self.program = program
        self._cache = {}

    def prepare(self, facts: Mapping):
        key = facts_key(facts)
        hit = self._cache.get(key)
        if hit is None:
            lits, evidence = split_facts(self.program, facts)
            gp = ground(self.program.with_facts(lits))
            hit = (gp, tuple(evidence))
            self._cache[key] = hit
        return hit


_reasoners = {}


def reasoner_for(program: Program) -> Reasoner:
    r = _reasoners.get(id(program))
    if r is None or r.program is not program:
        r = Reasoner(program)
        _reasoners[id(program)] = r
    return r


def _ranges(program: Program, names):
    attrs = program.attribute_map
    out = []
    for n in names:
        decl = attrs.get(n)
        if decl is None:
            raise ModelError(f"relevant variable {n} is not a declared attribute")
        out.append((TRUE, FALSE) if decl.range == BOOLEAN else program.sort_map[decl.range])
    return out


# -- Algorithm 1 ----------------------------------------------------------

def log_reason(partition: VariablePartition, rules: Program, task: Task, sensed_facts: Mapping) -> StateSpace:
    """Relevant-variable assignments that have a consistent completion."""
    facts = complete_facts(partition, sensed_facts)
    gp, evidence = reasoner_for(rules).prepare(facts)
    try:
        proj = marginals(gp, task.relevant_vars, evidence)
    except InconsistentEvidenceError as e:
        raise ModelError(f"no possible worlds under facts {facts_key(facts)}") from e
    seen = set(proj)
    ranges = _ranges(rules, task.relevant_vars)
    worlds = tuple(w for w in itertools.product(*ranges) if w in seen)
    for i, name in enumerate(task.relevant_vars):
        if not any(w[i] is not None for w in seen):
            raise ModelError(f"relevant variable {name} has no admissible value")
    if not worlds:
        raise ModelError("no relevant assignment has a consistent completion")
    return StateSpace(tuple(task.relevant_vars), worlds)


# -- Algorithm 2 ----------------------------------------------------------

def prob_reason(partition, rules: Program, task: Task, sensed_facts, prob_rules: Program,
                method: str = "batched") -> PriorBelief:
    """Prior belief over ``log_reason``'s states, from the probabilistic rules."""
    space = log_reason(partition, rules, task, sensed_facts)
    full = rules.extend(prob_rules)
    facts = complete_facts(partition, sensed_facts)
    gp, evidence = reasoner_for(full).prepare(facts)
    if method == "batched":
        dist = marginals(gp, task.relevant_vars, evidence)
        p = np.array([dist.get(w, 0.0) for w in space.worlds])
    elif method == "query":
        p = np.array([query(gp, state_literals(task.relevant_vars, w), evidence) for w in space.worlds])
    else:
        raise ValueError(f"unknown method {method!r}")
    total = p.sum()
    if total <= 0.0:
        raise ModelError("probabilistic rules give zero mass to every state")
    return PriorBelief(p / total)


def state_literals(variables, values):
    return [Literal(Atom(v), x) for v, x in zip(variables, values)]


# -- Algorithm 3 ----------------------------------------------------------

def model_state_count(space: StateSpace, task: Task) -> int:
    return len(space) + (1 if task.collapse_terminal else 0)


def _state_evidence(program: Program, task: Task, values):
    randoms = program.random_attributes()
    ev = []
    for var, x in zip(task.relevant_vars, values):
        kind = "do" if var in randoms else "obs"
        ev.append(Evidence(kind, Literal(Atom(var), x)))
    return ev


def _successor_index(space: StateSpace, task: Task):
    primary = [v for v in task.relevant_vars if v in task.next_vars]
    pos = [task.relevant_vars.index(v) for v in primary]
    table = {}
    for i, w in enumerate(space.worlds):
        key = tuple(w[p] for p in pos)
        if key in table:
            raise ModelError(
                f"states {space.worlds[table[key]]} and {w} share successor attributes; "
                "derived relevant variables must be functions of the others")
        table[key] = i
    return primary, table


def dyn_reason(partition, rules: Program, task: Task, sensed_facts, dyn_rules: Program,
               actions=None, method: str = "batched", space: Optional[StateSpace] = None) -> np.ndarray:
    """Transition tensor ``T[s, a, s']`` obtained by querying the dynamics rules.

    With ``method="naive"`` every entry is its own query (the |S|^2 |A| loop);
    ``"batched"`` reads all successor marginals of a row from one search.
    """
    if space is None:
        space = log_reason(partition, rules, task, sensed_facts)
    if actions is None:
        actions = task.actions_for(space)
    full = rules.extend(dyn_rules)
    facts = complete_facts(partition, sensed_facts)
    gp, fact_ev = reasoner_for(full).prepare(facts)
    primary, succ = _successor_index(space, task)
    next_keys = [task.next_vars[v] for v in primary]
    term_pos = None
    if task.collapse_terminal:
        if task.term_next is None:
            raise ModelError("collapse_terminal needs term_next")
        next_keys.append(task.term_next)
        term_pos = len(next_keys) - 1
    n = model_state_count(space, task)
    term_id = len(space) if task.collapse_terminal else None
    T = np.zeros((n, len(actions), n))
    for s, w in enumerate(space.worlds):
        base_ev = list(fact_ev) + _state_evidence(full, task, w)
        for a, act in enumerate(actions):
            ev = base_ev + [Evidence("do", Literal(Atom(task.action_attr), act))]
            if method == "batched":
                row = _row_batched(gp, ev, next_keys, succ, term_pos, term_id, n)
            elif method == "naive":
                row = _row_naive(gp, ev, space, task, primary, term_id, n)
            else:
                raise ValueError(f"unknown method {method!r}")
            T[s, a] = _fix_row(row, s, act, space.worlds[s])
    if term_id is not None:
        T[term_id, :, term_id] = 1.0
    return T


def _row_batched(gp, ev, next_keys, succ, term_pos, term_id, n):
    row = np.zeros(n)
    try:
        dist = marginals(gp, next_keys, ev)
    except InconsistentEvidenceError:
        return row
    for vals, p in dist.items():
        if term_pos is not None and vals[term_pos] == TRUE:
            row[term_id] += p
            continue
        key = vals[:term_pos] if term_pos is not None else vals
        j = succ.get(key)
        if j is not None:
            row[j] += p
        # unmapped successors are left out; _fix_row turns the gap into a self-loop
    return row


def _row_naive(gp, ev, space, task, primary, term_id, n):
    row = np.zeros(n)
    pos = [task.relevant_vars.index(v) for v in primary]
    for j, w in enumerate(space.worlds):
        lits = [Literal(Atom(task.next_vars[v]), w[p]) for v, p in zip(primary, pos)]
        if term_id is not None:
            lits.append(Literal(Atom(task.term_next), FALSE))
        try:
            row[j] = query(gp, lits, ev)
        except InconsistentEvidenceError:
            return np.zeros(n)
    if term_id is not None:
        row[term_id] = query(gp, Literal(Atom(task.term_next), TRUE), ev)
    return row


def _fix_row(row, s, act, world):
    total = row.sum()
    if total <= 0.0:
        raise ModelError(f"no successor declared for state {world} under action {act}")
    missing = 1.0 - total
    if missing > ROW_TOL:
        log.info("row (%s, %s): %.6g unmapped successor mass kept as self-loop", world, act, missing)
        row = row.copy()
        row[s] += missing
    elif abs(missing) > ROW_TOL:
        log.warning("row (%s, %s) sums to %.9g; renormalised", world, act, total)
        row = row / total
    return row


# -- assembly -------------------------------------------------------------

def default_label(variables, values) -> str:
    return "_".join(str(v) for v in values)


def assemble_model(space: StateSpace, T: np.ndarray, task: Task, actions=None,
                   prior: Optional[PriorBelief] = None, facts=()) -> DecisionModel:
    """Combine a state space and transitions with the task's reward/observation builders."""
    if actions is None:
        actions = task.actions_for(space)
    actions = tuple(actions)
    labeler = task.state_label or default_label
    labels = [labeler(space.variables, w) for w in space.worlds]
    values = [dict(zip(space.variables, w)) for w in space.worlds]
    terminal = np.zeros(len(labels) + (1 if task.collapse_terminal else 0), dtype=bool)
    if task.term_var is not None and task.term_var in space.variables:
        k = space.variables.index(task.term_var)
        for i, w in enumerate(space.worlds):
            terminal[i] = w[k] == TRUE
    if task.collapse_terminal:
        labels.append("term")
        values.append(None)
        terminal[-1] = True
    values = tuple(values)
    R = np.asarray(task.reward_builder(values, actions, T), dtype=float)
    kind = "MDP"
    Z, O, b0 = (), None, None
    if task.observation_builder is not None:
        kind = "POMDP"
        Z, O = task.observation_builder(values, actions)
        Z = tuple(Z)
        O = np.asarray(O, dtype=float)
        if prior is None:
            raise ModelError("partially observable task needs a prior belief")
        b0 = np.zeros(len(labels))
        b0[:len(space)] = prior.probs
    return DecisionModel(kind, tuple(labels), values, actions, np.asarray(T, dtype=float), R,
                         terminal, Z, O, b0, tuple(facts))


# -- bundles --------------------------------------------------------------

@dataclass
class DomainBundle:
    """Knowledge and task description for one domain instance."""

    name: str
    rules: Program
    dynamics: Program
    priors: Program
    partition: VariablePartition
    task: Task
    config: dict = field(default_factory=dict)
    gamma: float = 0.95

    def __post_init__(self):
        self.partition.validate(self.rules)

    def state_space(self, sensed_facts) -> StateSpace:
        return log_reason(self.partition, self.rules, self.task, sensed_facts)

    def build(self, sensed_facts, *, dynamics_facts=None, method: str = "batched") -> DecisionModel:
        """Algorithms 1-3 plus assembly.

        ``dynamics_facts`` (default: the same facts) lets an ablation keep
        transitions built from a different fact set than the state space.
        """
        space = self.state_space(sensed_facts)
        actions = self.task.actions_for(space)
        dyn_facts = sensed_facts if dynamics_facts is None else dynamics_facts
        if dynamics_facts is None:
            T = dyn_reason(self.partition, self.rules, self.task, dyn_facts, self.dynamics,
                           actions, method=method, space=space)
        else:
            T = _transfer_dynamics(self, space, actions, dyn_facts, method)
        prior = None
        if self.task.partially_observable:
            prior = prob_reason(self.partition, self.rules, self.task, sensed_facts, self.priors)
        facts = facts_key(complete_facts(self.partition, sensed_facts))
        return assemble_model(space, T, self.task, actions, prior, facts)


def _transfer_dynamics(bundle, space, actions, dyn_facts, method):
    # transitions of the baseline fact set, matched on the variables the
    # actions change (derived relevant variables may differ); others stay put
    base_space = bundle.state_space(dyn_facts)
    base_T = dyn_reason(bundle.partition, bundle.rules, bundle.task, dyn_facts, bundle.dynamics,
                        None, method=method, space=base_space)
    base_actions = bundle.task.actions_for(base_space)
    keep = [i for i, v in enumerate(space.variables) if v in bundle.task.next_vars]

    def core(w):
        return tuple(w[i] for i in keep)

    here = {}
    for j, w in enumerate(space.worlds):
        here.setdefault(core(w), j)
    there = {}
    for j, w in enumerate(base_space.worlds):
        there.setdefault(core(w), j)
    n = model_state_count(space, bundle.task)
    T = np.zeros((n, len(actions), n))
    for s, w in enumerate(space.worlds):
        bs = there.get(core(w))
        for a, act in enumerate(actions):
            if bs is None or act not in base_actions:
                T[s, a, s] = 1.0
                continue
            ba = base_actions.index(act)
            for bj, p in enumerate(base_T[bs, ba]):
                if p == 0.0:
                    continue
                if bj >= len(base_space):
                    j = len(space)
                else:
                    j = here.get(core(base_space.worlds[bj]), s)
                T[s, a, j] += p
    if bundle.task.collapse_terminal:
        T[len(space), :, len(space)] = 1.0
    return T
