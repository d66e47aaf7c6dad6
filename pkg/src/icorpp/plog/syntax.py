"""AST for the knowledge language, plus the pretty-printer.

Constants are plain ``str``; variables are :class:`Var`.  Every literal is
normalised to ``attribute(args) = value``: a boolean ``p(t)`` is stored with
value ``"true"`` and ``-p(t)`` with value ``"false"``.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional, Union

TRUE = "true"
FALSE = "false"
BOOLEAN = "boolean"


class PlogError(Exception):
    """Base class for every error raised by the reasoner."""


class PlogSyntaxError(PlogError):
    def __init__(self, message: str, line: int, column: int):
        super().__init__(f"line {line}, column {column}: {message}")
        self.line = line
        self.column = column


class PlogSemanticError(PlogError):
    """Undeclared sort/attribute, arity mismatch, value outside a range."""


@dataclass(frozen=True)
class Var:
    name: str

    def __str__(self):
        return self.name


Term = Union[str, Var]


def is_var(term) -> bool:
    return isinstance(term, Var)


@dataclass(frozen=True)
class Atom:
    name: str
    args: tuple = ()

    @property
    def is_ground(self) -> bool:
        return not any(is_var(a) for a in self.args)

    def __str__(self):
        if not self.args:
            return self.name
        return "%s(%s)" % (self.name, ",".join(str(a) for a in self.args))


@dataclass(frozen=True)
class Literal:
    """``atom = value`` or, with ``negated``, ``atom != value``."""

    atom: Atom
    value: Term = TRUE
    negated: bool = False

    @property
    def is_ground(self) -> bool:
        return self.atom.is_ground and not is_var(self.value)

    def __str__(self):
        if self.negated:
            return f"{self.atom}!={self.value}"
        if self.value == TRUE:
            return str(self.atom)
        if self.value == FALSE:
            return f"-{self.atom}"
        return f"{self.atom}={self.value}"


@dataclass(frozen=True)
class Comparison:
    op: str  # "=" or "!="
    left: Term
    right: Term

    def __str__(self):
        return f"{self.left}{self.op}{self.right}"


@dataclass(frozen=True)
class Body:
    pos: tuple = ()
    naf: tuple = ()
    cmps: tuple = ()

    def __bool__(self):
        return bool(self.pos or self.naf or self.cmps)

    def literals(self):
        yield from self.pos
        yield from self.naf

    def __str__(self):
        parts = [str(l) for l in self.pos]
        parts += ["not " + str(l) for l in self.naf]
        parts += [str(c) for c in self.cmps]
        return ", ".join(parts)


@dataclass(frozen=True)
class SortDecl:
    name: str
    objects: tuple

    def __str__(self):
        return "%s = {%s}." % (self.name, ", ".join(self.objects))


@dataclass(frozen=True)
class AttributeDecl:
    name: str
    arg_sorts: Optional[tuple]  # None for implicitly declared predicates
    range: str
    implicit: bool = False

    @property
    def arity(self) -> int:
        return len(self.arg_sorts) if self.arg_sorts is not None else -1

    @property
    def is_boolean(self) -> bool:
        return self.range == BOOLEAN

    def __str__(self):
        if self.arg_sorts:
            return "%s : %s -> %s." % (self.name, ", ".join(self.arg_sorts), self.range)
        return f"{self.name} : {self.range}."


@dataclass(frozen=True)
class Rule:
    head: Optional[Literal]
    body: Body = field(default_factory=Body)

    @property
    def is_fact(self) -> bool:
        return self.head is not None and not self.body

    def __str__(self):
        if self.head is None:
            return f":- {self.body}."
        if not self.body:
            return f"{self.head}."
        return f"{self.head} :- {self.body}."


@dataclass(frozen=True)
class RandomSelection:
    atom: Atom
    var: Optional[Var] = None
    range_literal: Optional[Literal] = None
    body: Body = field(default_factory=Body)

    def __str__(self):
        inner = str(self.atom)
        if self.var is not None:
            inner += " : {%s : %s}" % (self.var, self.range_literal)
        text = f"random({inner})"
        if self.body:
            text += f" :- {self.body}"
        return text + "."


@dataclass(frozen=True)
class PrAtom:
    atom: Atom
    value: Term
    probability: float
    body: Body = field(default_factory=Body)

    def __str__(self):
        cond = f" | {self.body}" if self.body else ""
        return f"pr({self.atom}={self.value}{cond}) = {self.probability!r}."


@dataclass(frozen=True)
class Program:
    sorts: tuple = ()
    attributes: tuple = ()
    rules: tuple = ()
    randoms: tuple = ()
    pratoms: tuple = ()

    def sort(self, name: str) -> SortDecl:
        for s in self.sorts:
            if s.name == name:
                return s
        raise KeyError(name)

    def attribute(self, name: str) -> AttributeDecl:
        for a in self.attributes:
            if a.name == name:
                return a
        raise KeyError(name)

    @property
    def sort_map(self) -> dict:
        return {s.name: s.objects for s in self.sorts}

    @property
    def attribute_map(self) -> dict:
        return {a.name: a for a in self.attributes}

    def random_attributes(self) -> set:
        return {r.atom.name for r in self.randoms}

    def extend(self, other: "Program") -> "Program":
        """Concatenate two programs (declarations are merged by name)."""
        sorts = {s.name: s for s in self.sorts}
        for s in other.sorts:
            if s.name in sorts and sorts[s.name] != s:
                raise PlogSemanticError(f"sort {s.name} declared twice with different objects")
            sorts.setdefault(s.name, s)
        attrs = {a.name: a for a in self.attributes}
        for a in other.attributes:
            old = attrs.get(a.name)
            if old is None or (old.implicit and not a.implicit):
                attrs[a.name] = a
            elif not a.implicit and old != a:
                raise PlogSemanticError(f"attribute {a.name} declared twice")
        return Program(
            tuple(sorts.values()),
            tuple(attrs.values()),
            self.rules + other.rules,
            self.randoms + other.randoms,
            self.pratoms + other.pratoms,
        )

    def with_facts(self, literals) -> "Program":
        return Program(self.sorts, self.attributes,
                       self.rules + tuple(Rule(l) for l in literals),
                       self.randoms, self.pratoms)

    def __str__(self):
        return format_program(self)


def format_program(program: Program) -> str:
    lines = [str(s) for s in program.sorts]
    lines += [str(a) for a in program.attributes if not a.implicit]
    lines += [str(r) for r in program.rules]
    lines += [str(r) for r in program.randoms]
    lines += [str(p) for p in program.pratoms]
    return "\n".join(lines) + ("\n" if lines else "")
