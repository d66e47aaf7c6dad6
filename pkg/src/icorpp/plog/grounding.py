"""Instantiation of programs over their finite sorts, and stratification.

Rules are grounded by joining their positive body literals against an
over-approximation of the derivable atoms (random attributes contribute
every value of their range); variables left unbound after the join are
instantiated from the sort of an argument position they occupy.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from functools import cached_property
from itertools import product

import networkx as nx

from .syntax import (
    BOOLEAN, FALSE, TRUE, Atom, Body, Comparison, Literal, PlogError,
    PlogSemanticError, PrAtom, Program, RandomSelection, Rule, Var, is_var,
)


class StratificationError(PlogError):
    def __init__(self, cycle):
        self.cycle = cycle
        text = " -> ".join(_node_str(n) for n in cycle)
        super().__init__(f"program is not stratified; cycle through default negation: {text}")


def _node_str(node):
    (name, args), value = node
    atom = str(Atom(name, args))
    if value is None:
        return atom
    return str(Literal(Atom(name, args), value))


def key_of(atom: Atom) -> tuple:
    return (atom.name, tuple(atom.args))


@dataclass(frozen=True)
class GroundProgram:
    program: Program
    rules: tuple
    randoms: tuple
    pratoms: tuple
    possible: dict = field(compare=False, repr=False)
    strata: tuple = field(compare=False, repr=False)
    random_keys: frozenset = field(compare=False, repr=False)

    def range_of(self, name: str) -> tuple:
        decl = self.program.attribute_map[name]
        if decl.range == BOOLEAN:
            return (TRUE, FALSE)
        return self.program.sort_map[decl.range]

    def derivable(self, name: str) -> set:
        """Ground atoms of ``name`` that may hold in some world (an over-approximation)."""
        return {Atom(name, args) for args, value in self.possible.get(name, ()) if value == TRUE}

    @cached_property
    def compiled(self):
        from .engine import compile_program
        return compile_program(self)


class _Grounder:
    def __init__(self, program: Program):
        self.program = program
        self.sorts = program.sort_map
        self.attrs = program.attribute_map
        self.random_names = program.random_attributes()
        self.possible = {}

    def range_of(self, name):
        decl = self.attrs[name]
        if decl.range == BOOLEAN:
            return (TRUE, FALSE)
        return self.sorts[decl.range]

    # -- variable typing -------------------------------------------------
    def _note_atom(self, types, atom, value=None):
        decl = self.attrs.get(atom.name)
        if decl is None or decl.arg_sorts is None:
            return
        for arg, srt in zip(atom.args, decl.arg_sorts):
            if is_var(arg):
                types.setdefault(arg, []).append(srt)
        if value is not None and is_var(value) and decl.range != BOOLEAN:
            types.setdefault(value, []).append(decl.range)

    def var_domains(self, literals, extra=()):
        types = {}
        for lit in literals:
            self._note_atom(types, lit.atom, lit.value)
        for atom, value in extra:
            self._note_atom(types, atom, value)
        domains = {}
        for var, sorts in types.items():
            objs = list(self.sorts[sorts[0]])
            for s in sorts[1:]:
                allowed = set(self.sorts[s])
                objs = [o for o in objs if o in allowed]
            domains[var] = objs
        return domains

    # -- joins -----------------------------------------------------------
    def _match(self, lit, binding):
        name = lit.atom.name
        for args, value in self.possible.get(name, ()):
            if len(args) != len(lit.atom.args):
                continue
            b = binding
            ok = True
            for pat, const in zip(lit.atom.args + (lit.value,), args + (value,)):
                if is_var(pat):
                    bound = b.get(pat)
                    if bound is None:
                        if b is binding:
                            b = dict(binding)
                        b[pat] = const
                    elif bound != const:
                        ok = False
                        break
                elif pat != const:
                    ok = False
                    break
            if ok:
                yield b

    def bindings(self, body: Body, needed_vars, domains, where):
        joinable = [l for l in body.pos if not l.negated]
        partial = [{}]
        for lit in joinable:
            partial = [b2 for b in partial for b2 in self._match(lit, b)]
            if not partial:
                return
        for binding in partial:
            yield from self._complete(binding, body.cmps, needed_vars, domains, where)

    def _complete(self, binding, cmps, needed_vars, domains, where):
        binding = dict(binding)
        cmps = list(cmps)
        # equality comparisons may bind a variable directly
        progress = True
        while progress:
            progress = False
            for c in cmps:
                if c.op != "=":
                    continue
                l = binding.get(c.left, c.left) if is_var(c.left) else c.left
                r = binding.get(c.right, c.right) if is_var(c.right) else c.right
                if is_var(l) and not is_var(r):
                    binding[l] = r
                    progress = True
                elif is_var(r) and not is_var(l):
                    binding[r] = l
                    progress = True
        free = [v for v in needed_vars if v not in binding]
        for v in free:
            if v not in domains:
                raise PlogSemanticError(f"unsafe variable {v} in {where}")
            if not domains[v]:
                raise PlogSemanticError(f"empty sort for variable {v} in {where}")
        for values in product(*(domains[v] for v in free)):
            b = dict(binding)
            b.update(zip(free, values))
            if all(_compare(c, b) for c in cmps):
                yield b

    # -- instantiation ---------------------------------------------------
    def ground_rule(self, rule: Rule):
        lits = list(rule.body.literals()) + ([rule.head] if rule.head else [])
        domains = self.var_domains(lits)
        needed = _vars_of_literals(lits) | _vars_of_cmps(rule.body.cmps)
        for b in self.bindings(rule.body, sorted(needed, key=str), domains, rule):
            head = _subst_lit(rule.head, b) if rule.head is not None else None
            yield Rule(head, _subst_body(rule.body, b))

    def ground_random(self, sel: RandomSelection):
        lits = list(sel.body.literals())
        extra = [(sel.atom, None)]
        if sel.range_literal is not None:
            extra.append((sel.range_literal.atom, sel.range_literal.value))
        domains = self.var_domains(lits, extra)
        needed = _vars_of_literals(lits) | _vars_of_cmps(sel.body.cmps) | _vars_of_atom(sel.atom)
        if sel.range_literal is not None:
            needed |= _vars_of_literals([sel.range_literal])
            needed.discard(sel.var)
        for b in self.bindings(sel.body, sorted(needed, key=str), domains, sel):
            rl = _subst_lit(sel.range_literal, b) if sel.range_literal is not None else None
            yield RandomSelection(_subst_atom(sel.atom, b), sel.var, rl, _subst_body(sel.body, b))

    def ground_pratom(self, pa: PrAtom):
        lits = list(pa.body.literals())
        domains = self.var_domains(lits, [(pa.atom, pa.value)])
        needed = _vars_of_literals(lits) | _vars_of_cmps(pa.body.cmps) | _vars_of_atom(pa.atom)
        if is_var(pa.value):
            needed.add(pa.value)
        for b in self.bindings(pa.body, sorted(needed, key=str), domains, pa):
            value = b.get(pa.value, pa.value) if is_var(pa.value) else pa.value
            yield PrAtom(_subst_atom(pa.atom, b), value, pa.probability, _subst_body(pa.body, b))

    def _add(self, name, args, value):
        s = self.possible.setdefault(name, set())
        if (args, value) in s:
            return False
        s.add((args, value))
        return True

    def compute_possible(self):
        for r in self.program.rules:
            if r.head is not None and r.head.atom.name in self.random_names:
                raise PlogSemanticError(
                    f"random attribute {r.head.atom.name} cannot be defined by rules (use obs/do)")
        changed = True
        while changed:
            changed = False
            for rule in self.program.rules:
                if rule.head is None or rule.head.negated:
                    continue
                for g in self.ground_rule(rule):
                    changed |= self._add(g.head.atom.name, g.head.atom.args, g.head.value)
            for sel in self.program.randoms:
                for g in self.ground_random(sel):
                    for v in self.range_of(g.atom.name):
                        changed |= self._add(g.atom.name, g.atom.args, v)

    def run(self) -> GroundProgram:
        self.compute_possible()
        rules = _dedupe(
            _head_neq_to_constraint(g) for r in self.program.rules for g in self.ground_rule(r))
        randoms = _dedupe(g for r in self.program.randoms for g in self.ground_random(r))
        pratoms = _dedupe(g for p in self.program.pratoms for g in self.ground_pratom(p))
        random_keys = frozenset(key_of(r.atom) for r in randoms)
        strata = stratify(rules, randoms, pratoms, random_keys, self.range_of)
        return GroundProgram(self.program, rules, randoms, pratoms,
                             {k: frozenset(v) for k, v in self.possible.items()},
                             strata, random_keys)


def ground(program: Program) -> GroundProgram:
    """Instantiate every variable and compute the stratification order."""
    return _Grounder(program).run()


# -- substitution helpers ------------------------------------------------

def _vars_of_atom(atom):
    return {a for a in atom.args if is_var(a)}


def _vars_of_literals(lits):
    out = set()
    for l in lits:
        out |= _vars_of_atom(l.atom)
        if is_var(l.value):
            out.add(l.value)
    return out


def _vars_of_cmps(cmps):
    return {t for c in cmps for t in (c.left, c.right) if is_var(t)}


def _subst_atom(atom, b):
    if atom.is_ground:
        return atom
    return Atom(atom.name, tuple(b.get(a, a) if is_var(a) else a for a in atom.args))


def _subst_lit(lit, b):
    value = b.get(lit.value, lit.value) if is_var(lit.value) else lit.value
    return Literal(_subst_atom(lit.atom, b), value, lit.negated)


def _subst_body(body, b):
    # comparisons are fully decided at grounding time and dropped
    return Body(tuple(_subst_lit(l, b) for l in body.pos),
                tuple(_subst_lit(l, b) for l in body.naf))


def _compare(c: Comparison, b):
    l = b.get(c.left, c.left) if is_var(c.left) else c.left
    r = b.get(c.right, c.right) if is_var(c.right) else c.right
    return (l == r) if c.op == "=" else (l != r)


def _head_neq_to_constraint(rule):
    if rule.head is not None and rule.head.negated:
        lit = Literal(rule.head.atom, rule.head.value)
        return Rule(None, Body(rule.body.pos + (lit,), rule.body.naf))
    return rule


def _dedupe(items):
    seen = set()
    out = []
    for it in items:
        if it not in seen:
            seen.add(it)
            out.append(it)
    return tuple(out)


# -- stratification ------------------------------------------------------

def dependency_graph(rules, randoms, pratoms, random_keys, range_of):
    """Literal-level dependency graph; edges point from a dependency to its dependent.

    Non-random literals are nodes ``(key, value)``; every value of a random
    attribute instance shares the single node ``(key, None)``.
    """
    g = nx.DiGraph()
    head_values = {}
    for r in rules:
        if r.head is not None:
            head_values.setdefault(key_of(r.head.atom), set()).add(r.head.value)

    def nodes_of(lit):
        key = key_of(lit.atom)
        if key in random_keys:
            return [(key, None)]
        if lit.negated:
            return [(key, v) for v in sorted(head_values.get(key, ()))]
        return [(key, lit.value)]

    def add_body(target, body):
        for lit in body.pos:
            for n in nodes_of(lit):
                g.add_edge(n, target, neg=False)
        for lit in body.naf:
            for n in nodes_of(lit):
                if g.has_edge(n, target) and not g[n][target]["neg"]:
                    g[n][target]["neg"] = True
                else:
                    g.add_edge(n, target, neg=True)

    for r in rules:
        if r.head is None:
            continue
        target = (key_of(r.head.atom), r.head.value)
        g.add_node(target)
        add_body(target, r.body)
    for sel in randoms:
        target = (key_of(sel.atom), None)
        g.add_node(target)
        add_body(target, sel.body)
        if sel.range_literal is not None:
            for x in range_of(sel.atom.name):
                lit = _subst_lit(sel.range_literal, {sel.var: x})
                add_body(target, Body((lit,)))
    for pa in pratoms:
        key = key_of(pa.atom)
        target = (key, None)
        if key not in random_keys:
            continue
        add_body(target, pa.body)
    return g


def stratify(rules, randoms, pratoms, random_keys, range_of):
    g = dependency_graph(rules, randoms, pratoms, random_keys, range_of)
    sccs = list(nx.strongly_connected_components(g))
    comp_of = {}
    for i, comp in enumerate(sccs):
        for n in comp:
            comp_of[n] = i
    for u, v, data in g.edges(data=True):
        if comp_of[u] != comp_of[v]:
            continue
        if data["neg"]:
            path = nx.shortest_path(g.subgraph(sccs[comp_of[u]]), v, u)
            raise StratificationError(path + [v])
        if u[1] is None or v[1] is None:
            path = nx.shortest_path(g.subgraph(sccs[comp_of[u]]), v, u)
            raise PlogSemanticError(
                "random attribute depends on itself: " + " -> ".join(_node_str(n) for n in path + [v]))
    cond = nx.condensation(g, sccs)
    order = nx.lexicographical_topological_sort(
        cond, key=lambda c: min(repr(n) for n in cond.nodes[c]["members"]))
    return tuple(tuple(sorted(cond.nodes[c]["members"], key=repr)) for c in order)
