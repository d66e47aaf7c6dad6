"""Possible-world enumeration, queries and marginals over ground programs.

Evaluation follows the stratification order computed at grounding time.
Everything that does not depend on a random attribute is evaluated once
into a base assignment; the remaining steps are replayed for every branch
of a depth-first search over random choices.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from functools import cached_property, lru_cache

from .grounding import GroundProgram, key_of
from .parser import parse_literal
from .syntax import (
    BOOLEAN, Atom, Literal, PlogError, PlogSemanticError,
)

TOL = 1e-9


class InconsistentEvidenceError(PlogError):
    """No possible world survives the rules, constraints and evidence."""


class ProbabilityError(PlogError):
    """Conflicting or over-declared pr-atoms."""


class UndefinedAttributeError(PlogError):
    """A functional attribute has no value in a candidate world."""


@dataclass(frozen=True)
class Evidence:
    kind: str  # "obs" or "do"
    literal: Literal

    def __post_init__(self):
        if self.kind not in ("obs", "do"):
            raise ValueError(f"unknown evidence kind {self.kind!r}")
        if not self.literal.is_ground:
            raise PlogSemanticError(f"evidence must be ground: {self.literal}")
        if self.kind == "do" and self.literal.negated:
            raise PlogSemanticError(f"do() needs a value, not an exclusion: {self.literal}")

    def __str__(self):
        return f"{self.kind}({self.literal})"


def obs(text_or_lit) -> Evidence:
    lit = parse_literal(text_or_lit) if isinstance(text_or_lit, str) else text_or_lit
    return Evidence("obs", lit)


def do(text_or_lit) -> Evidence:
    lit = parse_literal(text_or_lit) if isinstance(text_or_lit, str) else text_or_lit
    return Evidence("do", lit)


def parse_evidence(text: str) -> Evidence:
    """``obs(curr_time=morning)`` or ``do(req_item=coffee)``."""
    text = text.strip()
    for kind in ("obs", "do"):
        if text.startswith(kind + "(") and text.endswith(")"):
            return Evidence(kind, parse_literal(text[len(kind) + 1:-1]))
    raise PlogSemanticError(f"cannot parse evidence {text!r}; expected obs(...) or do(...)")


def as_key(attr) -> tuple:
    """Normalise ``"occupied(rw1,cl2)"``, an Atom or a key tuple to ``(name, args)``."""
    if isinstance(attr, tuple):
        return attr
    if isinstance(attr, Atom):
        return key_of(attr)
    return _parsed_key(attr)


@lru_cache(maxsize=4096)
def _parsed_key(text: str) -> tuple:
    return key_of(parse_literal(text).atom)


def key_str(key) -> str:
    return str(Atom(key[0], key[1]))


@dataclass(frozen=True)
class PossibleWorld:
    assignment: tuple  # sorted ((name, args), value) pairs

    @cached_property
    def _map(self):
        return dict(self.assignment)

    def as_dict(self) -> dict:
        return dict(self._map)

    def value(self, attr):
        return self._map.get(as_key(attr))

    def holds(self, lit: Literal) -> bool:
        v = self._map.get(key_of(lit.atom))
        if lit.negated:
            return v is not None and v != lit.value
        return v == lit.value

    def literals(self):
        return [Literal(Atom(n, a), v) for (n, a), v in self.assignment]

    def __str__(self):
        return "{" + ", ".join(str(l) for l in self.literals()) + "}"


@dataclass(frozen=True)
class WorldDistribution:
    worlds: tuple
    probs: tuple

    def __len__(self):
        return len(self.worlds)

    def __iter__(self):
        return iter(zip(self.worlds, self.probs))

    def prob(self, lits) -> float:
        if isinstance(lits, Literal):
            lits = (lits,)
        return math.fsum(p for w, p in self if all(w.holds(l) for l in lits))

    def marginal(self, keys) -> dict:
        keys = [as_key(k) for k in keys]
        out = {}
        for w, p in self:
            m = w._map
            vals = tuple(m.get(k) for k in keys)
            out[vals] = out.get(vals, 0.0) + p
        return out


# -- compilation ---------------------------------------------------------

def _lit_tuple(lit):
    return (key_of(lit.atom), lit.value, lit.negated)


def _body_tuple(body):
    return (tuple(_lit_tuple(l) for l in body.pos), tuple(_lit_tuple(l) for l in body.naf))


def _holds(lt, assign):
    key, value, negated = lt
    v = assign.get(key)
    if negated:
        return v is not None and v != value
    return v == value


def _body_holds(body, assign):
    pos, naf = body
    for lt in pos:
        if not _holds(lt, assign):
            return False
    for lt in naf:
        if _holds(lt, assign):
            return False
    return True


@dataclass
class _RuleStep:
    rules: list  # (head_key, head_value, body)
    recursive: bool


@dataclass
class _RandomStep:
    key: tuple
    selections: list  # (body, candidates | None) with candidates [(value, lit_tuple)]
    pratoms: list  # (value, prob, body)
    range: tuple


@dataclass
class Compiled:
    gp: GroundProgram
    static_steps: list
    dynamic_steps: list
    constraints: list
    functional_keys: tuple
    random_range: dict = field(default_factory=dict)
    # static steps only see non-random interventions, so their result is shared
    base_cache: dict = field(default_factory=dict)


def compile_program(gp: GroundProgram) -> Compiled:
    rules_by_node = {}
    constraints = []
    for r in gp.rules:
        if r.head is None:
            constraints.append(_body_tuple(r.body))
            continue
        node = (key_of(r.head.atom), r.head.value)
        rules_by_node.setdefault(node, []).append((node[0], node[1], _body_tuple(r.body)))
    sels = {}
    for sel in gp.randoms:
        key = key_of(sel.atom)
        cands = None
        if sel.range_literal is not None:
            cands = []
            for x in gp.range_of(sel.atom.name):
                lit = sel.range_literal
                v = x if lit.value == sel.var else lit.value
                args = tuple(x if a == sel.var else a for a in lit.atom.args)
                cands.append((x, ((lit.atom.name, args), v, lit.negated)))
        sels.setdefault(key, []).append((_body_tuple(sel.body), cands))
    prs = {}
    for pa in gp.pratoms:
        prs.setdefault(key_of(pa.atom), []).append((pa.value, pa.probability, _body_tuple(pa.body)))

    # which strata are reachable from a random choice
    dynamic_nodes = set()
    dep_edges = _dependents(gp)
    frontier = [(k, None) for k in gp.random_keys]
    while frontier:
        n = frontier.pop()
        if n in dynamic_nodes:
            continue
        dynamic_nodes.add(n)
        frontier.extend(dep_edges.get(n, ()))

    static_steps, dynamic_steps = [], []
    for comp in gp.strata:
        if comp[0][1] is None and comp[0][0] in gp.random_keys:
            key = comp[0][0]
            step = _RandomStep(key, sels.get(key, []), prs.get(key, []), gp.range_of(key[0]))
            dynamic_steps.append(step)
            continue
        rules = [r for n in comp for r in rules_by_node.get(n, ())]
        if not rules:
            continue
        members = set(comp)
        recursive = len(comp) > 1 or any(
            (k, v) in members for _, _, (pos, _) in rules for (k, v, neg) in pos if not neg)
        step = _RuleStep(rules, recursive)
        if any(n in dynamic_nodes for n in comp):
            dynamic_steps.append(step)
        else:
            static_steps.append(step)
    functional = set()
    attrs = gp.program.attribute_map
    for name, entries in gp.possible.items():
        decl = attrs.get(name)
        if decl is None or decl.range == BOOLEAN or name in gp.program.random_attributes():
            continue
        for args, _ in entries:
            functional.add((name, args))
    # functional attributes referenced in bodies but never derivable are undefined too
    for r in gp.rules:
        for lit in r.body.literals():
            decl = attrs.get(lit.atom.name)
            if decl is not None and decl.range != BOOLEAN and lit.atom.name not in gp.program.random_attributes():
                functional.add(key_of(lit.atom))
    return Compiled(gp, static_steps, dynamic_steps, constraints, tuple(sorted(functional)))


def _dependents(gp):
    from .grounding import dependency_graph
    g = dependency_graph(gp.rules, gp.randoms, gp.pratoms, gp.random_keys, gp.range_of)
    return {n: list(g.successors(n)) for n in g.nodes}


def _run_rules(step, assign):
    """Apply a rule step; returns False when the world becomes inconsistent."""
    while True:
        changed = False
        for key, value, body in step.rules:
            if _body_holds(body, assign):
                cur = assign.get(key)
                if cur is None:
                    assign[key] = value
                    changed = True
                elif cur != value:
                    return False
        if not step.recursive or not changed:
            return True


class _Search:
    def __init__(self, compiled: Compiled, evidence):
        self.c = compiled
        gp = compiled.gp
        self.do = {}
        self.obs_random = {}
        self.obs_other = []
        attrs = gp.program.attribute_map
        randoms = gp.program.random_attributes()
        for ev in evidence:
            lit = ev.literal
            if lit.atom.name not in attrs:
                raise PlogSemanticError(f"evidence on unknown attribute {lit.atom}")
            key = key_of(lit.atom)
            if ev.kind == "do":
                if lit.atom.name not in randoms:
                    raise PlogSemanticError(f"do() may only target random attributes, not {lit.atom}")
                if key in self.do and self.do[key] != lit.value:
                    raise InconsistentEvidenceError(f"conflicting interventions on {lit.atom}")
                self.do[key] = lit.value
            elif key in gp.random_keys:
                self.obs_random.setdefault(key, []).append(_lit_tuple(lit))
            else:
                self.obs_other.append(_lit_tuple(lit))

    def base(self):
        assign = {}
        for key, v in self.do.items():
            if key not in self.c.gp.random_keys:
                assign[key] = v
        ck = tuple(sorted(assign.items()))
        cache = self.c.base_cache
        if ck in cache:
            hit = cache[ck]
            return None if hit is None else dict(hit)
        for step in self.c.static_steps:
            if not _run_rules(step, assign):
                assign = None
                break
        if len(cache) < 256:
            cache[ck] = None if assign is None else dict(assign)
        return assign

    def branches(self, step, assign):
        key = step.key
        if key in self.do:
            return [(self.do[key], 1.0)]
        active = [s for s in step.selections if _body_holds(s[0], assign)]
        if not active:
            return None
        if len(active) > 1:
            raise PlogSemanticError(f"more than one active random selection for {key_str(key)}")
        _, cands = active[0]
        if cands is None:
            values = list(step.range)
        else:
            values = [x for x, lt in cands if _holds(lt, assign)]
        if not values:
            return []
        declared = {}
        for value, p, body in step.pratoms:
            if value not in values or not _body_holds(body, assign):
                continue
            if value in declared and abs(declared[value] - p) > TOL:
                raise ProbabilityError(
                    f"conflicting pr-atoms for {key_str(key)}={value}: {declared[value]} vs {p}")
            declared[value] = p
        total = math.fsum(declared.values())
        rest = [v for v in values if v not in declared]
        residual = 1.0 - total
        if residual < -TOL:
            raise ProbabilityError(
                f"pr-atoms for {key_str(key)} declare mass {total} > 1 in some world")
        share = max(residual, 0.0) / len(rest) if rest else 0.0
        out = []
        for v in values:
            p = declared.get(v, share)
            if p > 0.0:
                out.append((v, p))
        return out

    def run(self, callback):
        base = self.base()
        if base is None:
            return
        steps = self.c.dynamic_steps
        n = len(steps)

        def dfs(i, assign, prob):
            while i < n:
                step = steps[i]
                if isinstance(step, _RuleStep):
                    if not _run_rules(step, assign):
                        return
                else:
                    br = self.branches(step, assign)
                    if br is None:
                        if step.key in self.obs_random:
                            return
                        i += 1
                        continue
                    checks = self.obs_random.get(step.key, ())
                    i += 1
                    for v, p in br:
                        a2 = dict(assign)
                        a2[step.key] = v
                        if all(_holds(lt, a2) for lt in checks):
                            dfs(i, a2, prob * p)
                    return
                i += 1
            self.finish(assign, prob, callback)

        dfs(0, base, 1.0)

    def finish(self, assign, prob, callback):
        for body in self.c.constraints:
            if _body_holds(body, assign):
                return
        for lt in self.obs_other:
            if not _holds(lt, assign):
                return
        for key in self.c.functional_keys:
            if key not in assign:
                raise UndefinedAttributeError(f"attribute {key_str(key)} has no value in some world")
        callback(assign, prob)


def _collect(gp: GroundProgram, evidence):
    out = []
    _Search(gp.compiled, list(evidence)).run(lambda a, p: out.append((a, p)))
    return out


def enumerate_worlds(gp: GroundProgram, evidence=()) -> WorldDistribution:
    """All possible worlds with their (normalised) probabilities, in canonical order."""
    found = _collect(gp, evidence)
    if not found:
        raise InconsistentEvidenceError("no possible world is consistent with the program and evidence")
    total = math.fsum(p for _, p in found)
    items = sorted((tuple(sorted(a.items())), p) for a, p in found)
    worlds, probs = [], []
    for assignment, p in items:
        if worlds and worlds[-1].assignment == assignment:
            # two choice paths reaching one world (possible with do); merge mass
            probs[-1] += p / total
            continue
        worlds.append(PossibleWorld(assignment))
        probs.append(p / total)
    return WorldDistribution(tuple(worlds), tuple(probs))


def query(gp: GroundProgram, target, evidence=()) -> float:
    """Probability of a ground literal (or a conjunction given as a list) under evidence."""
    if isinstance(target, str):
        target = parse_literal(target)
    lits = (target,) if isinstance(target, Literal) else tuple(target)
    tl = [_lit_tuple(l) for l in lits]
    hit = [0.0]
    tot = [0.0]

    def cb(assign, p):
        tot[0] += p
        if all(_holds(lt, assign) for lt in tl):
            hit[0] += p

    _Search(gp.compiled, list(evidence)).run(cb)
    if tot[0] <= 0.0:
        raise InconsistentEvidenceError("no possible world is consistent with the program and evidence")
    return hit[0] / tot[0]


def marginals(gp: GroundProgram, keys, evidence=()) -> dict:
    """Joint distribution of the given attribute instances, as ``{value_tuple: prob}``.

    Cheaper than :func:`enumerate_worlds` when only a projection is needed,
    since no world objects are built.  Missing values appear as ``None``.
    """
    keys = [as_key(k) for k in keys]
    acc = {}

    def cb(assign, p):
        vals = tuple(assign.get(k) for k in keys)
        acc[vals] = acc.get(vals, 0.0) + p

    _Search(gp.compiled, list(evidence)).run(cb)
    total = math.fsum(acc.values())
    if total <= 0.0:
        raise InconsistentEvidenceError("no possible world is consistent with the program and evidence")
    return {k: v / total for k, v in sorted(acc.items(), key=lambda kv: tuple(str(x) for x in kv[0]))}
