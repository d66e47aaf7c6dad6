"""Recursive-descent parser for ``.plog`` knowledge files.

Parsing is two-pass: statements are read into raw AST nodes first, then
resolved against the sort and attribute declarations (which may appear
anywhere in the file).  Undeclared predicates used only as ``p(t)`` or
``-p(t)`` are declared implicitly as untyped booleans.
"""
from __future__ import annotations

import re
from dataclasses import dataclass

from .syntax import (
    BOOLEAN, FALSE, TRUE, Atom, AttributeDecl, Body, Comparison, Literal,
    PlogSemanticError, PlogSyntaxError, PrAtom, Program, RandomSelection, Rule,
    SortDecl, Var, is_var,
)

_TOKEN_RE = re.compile(r"""
    (?P<ws>[ \t\r\n]+)
  | (?P<comment>%[^\n]*)
  | (?P<number>\d+\.\d*(?:[eE][+-]?\d+)?|\d+(?:[eE][+-]?\d+)?)
  | (?P<ident>[a-z][A-Za-z0-9_]*)
  | (?P<var>[A-Z_][A-Za-z0-9_]*)
  | (?P<op>:-|->|!=|<>|[=:{}(),.|-])
""", re.VERBOSE)


@dataclass(frozen=True)
class Token:
    kind: str
    text: str
    line: int
    col: int


def tokenize(text: str) -> list:
    tokens = []
    pos, line, line_start = 0, 1, 0
    while pos < len(text):
        m = _TOKEN_RE.match(text, pos)
        if m is None:
            raise PlogSyntaxError(f"unexpected character {text[pos]!r}", line, pos - line_start + 1)
        kind = m.lastgroup
        chunk = m.group()
        if kind not in ("ws", "comment"):
            if kind == "op" and chunk == "<>":
                chunk = "!="
            tokens.append(Token(kind, chunk, line, pos - line_start + 1))
        newlines = chunk.count("\n")
        if newlines:
            line += newlines
            line_start = pos + chunk.rindex("\n") + 1
        pos = m.end()
    tokens.append(Token("eof", "", line, pos - line_start + 1))
    return tokens


class _Parser:
    def __init__(self, text):
        self.toks = tokenize(text)
        self.i = 0

    # token helpers
    @property
    def tok(self):
        return self.toks[self.i]

    def peek(self, k=1):
        return self.toks[min(self.i + k, len(self.toks) - 1)]

    def error(self, msg, tok=None):
        tok = tok or self.tok
        where = "end of input" if tok.kind == "eof" else repr(tok.text)
        raise PlogSyntaxError(f"{msg} (found {where})", tok.line, tok.col)

    def accept(self, text):
        if self.tok.kind in ("op", "ident") and self.tok.text == text:
            self.i += 1
            return True
        return False

    def expect(self, text, what=None):
        if not self.accept(text):
            self.error(f"expected {what or repr(text)}")

    def ident(self):
        if self.tok.kind != "ident":
            self.error("expected identifier")
        t = self.tok.text
        self.i += 1
        return t

    # grammar
    def program(self):
        stmts = []
        while self.tok.kind != "eof":
            stmts.append(self.statement())
        return stmts

    def statement(self):
        tok = self.tok
        if tok.kind == "op" and tok.text == ":-":
            self.i += 1
            body = self.body()
            self.expect(".", "'.' at end of rule")
            return Rule(None, body)
        if tok.kind == "ident":
            nxt = self.peek()
            if tok.text == "random" and nxt.text == "(":
                return self.random()
            if tok.text == "pr" and nxt.text == "(":
                return self.pratom()
            if nxt.text == "=" and self.peek(2).text == "{":
                return self.sortdecl()
            if nxt.text == ":":
                return self.attrdecl()
        head = self.literal(allow_value=True)
        body = Body()
        if self.accept(":-"):
            body = self.body()
        self.expect(".", "'.' at end of rule")
        return Rule(head, body)

    def sortdecl(self):
        name = self.ident()
        self.expect("=")
        self.expect("{")
        objects = [self.ident()]
        while self.accept(","):
            objects.append(self.ident())
        self.expect("}")
        self.expect(".")
        return SortDecl(name, tuple(objects))

    def attrdecl(self):
        name = self.ident()
        self.expect(":")
        sorts = [self.ident()]
        while self.accept(","):
            sorts.append(self.ident())
        if self.accept("->"):
            rng = self.ident()
            arg_sorts = tuple(sorts)
        else:
            if len(sorts) != 1:
                self.error("expected '->' after argument sorts")
            rng, arg_sorts = sorts[0], ()
        self.expect(".")
        return AttributeDecl(name, arg_sorts, rng)

    def random(self):
        self.ident()
        self.expect("(")
        atom = self.atom()
        var = lit = None
        if self.accept(":"):
            self.expect("{")
            if self.tok.kind != "var":
                self.error("expected variable in dynamic range")
            var = Var(self.tok.text)
            self.i += 1
            self.expect(":")
            lit = self.literal(allow_value=True)
            self.expect("}")
        self.expect(")")
        body = Body()
        if self.accept(":-"):
            body = self.body()
        self.expect(".", "'.' at end of random selection")
        return RandomSelection(atom, var, lit, body)

    def pratom(self):
        self.ident()
        self.expect("(")
        atom = self.atom()
        value = TRUE
        if self.accept("="):
            value = self.term()
        body = Body()
        if self.accept("|"):
            body = self.body()
        self.expect(")")
        self.expect("=")
        if self.tok.kind != "number":
            self.error("expected probability")
        prob = float(self.tok.text)
        self.i += 1
        self.expect(".", "'.' at end of pr-atom")
        if not 0.0 <= prob <= 1.0:
            raise PlogSemanticError(f"probability {prob} outside [0, 1] for {atom}")
        return PrAtom(atom, value, prob, body)

    def atom(self):
        name = self.ident()
        args = []
        if self.accept("("):
            args.append(self.term())
            while self.accept(","):
                args.append(self.term())
            self.expect(")")
        return Atom(name, tuple(args))

    def term(self):
        tok = self.tok
        if tok.kind == "var":
            self.i += 1
            return Var(tok.text)
        if tok.kind in ("ident", "number"):
            self.i += 1
            return tok.text
        self.error("expected term")

    def literal(self, allow_value):
        neg = self.accept("-")
        atom = self.atom()
        if not neg and allow_value and self.tok.text in ("=", "!="):
            op = self.tok.text
            self.i += 1
            return Literal(atom, self.term(), op == "!=")
        return Literal(atom, FALSE if neg else TRUE)

    def body(self):
        pos, naf, cmps = [], [], []
        while True:
            if self.tok.kind == "var":
                left = self.term()
                if self.tok.text not in ("=", "!="):
                    self.error("expected comparison operator")
                op = self.tok.text
                self.i += 1
                cmps.append(Comparison(op, left, self.term()))
            elif self.accept("not"):
                naf.append(self.literal(allow_value=True))
            else:
                pos.append(self.literal(allow_value=True))
            if not self.accept(","):
                break
        return Body(tuple(pos), tuple(naf), tuple(cmps))


class _Resolver:
    """Checks references against declarations and infers implicit predicates."""

    def __init__(self, stmts, base=None):
        self.sorts = {}
        self.attrs = {}
        self.implicit = {}
        if base is not None:
            for s in base.sorts:
                self.sorts[s.name] = s
            for a in base.attributes:
                if a.implicit:
                    arity = _implicit_arity(base, a.name)
                    if arity is not None:
                        self.implicit[a.name] = arity
                else:
                    self.attrs[a.name] = a
        self.base_sorts = set(self.sorts)
        self.base_attrs = set(self.attrs)
        for s in stmts:
            if isinstance(s, SortDecl):
                if s.name in self.sorts:
                    if s.name in self.base_sorts and self.sorts[s.name] == s:
                        continue
                    raise PlogSemanticError(f"sort {s.name} declared twice")
                if len(set(s.objects)) != len(s.objects):
                    raise PlogSemanticError(f"duplicate object in sort {s.name}")
                self.sorts[s.name] = s
        for s in stmts:
            if isinstance(s, AttributeDecl):
                if s.name in self.attrs:
                    if s.name in self.base_attrs and self.attrs[s.name] == s:
                        continue
                    raise PlogSemanticError(f"attribute {s.name} declared twice")
                for srt in s.arg_sorts:
                    if srt not in self.sorts:
                        raise PlogSemanticError(f"undeclared sort {srt} in declaration of {s.name}")
                if s.range != BOOLEAN and s.range not in self.sorts:
                    raise PlogSemanticError(f"undeclared sort {s.range} as range of {s.name}")
                self.attrs[s.name] = s

    def range_of(self, decl):
        if decl.range == BOOLEAN:
            return (TRUE, FALSE)
        return self.sorts[decl.range].objects

    def check_atom(self, atom, *, must_declare, value=TRUE):
        decl = self.attrs.get(atom.name)
        if decl is None:
            if must_declare or value not in (TRUE, FALSE):
                raise PlogSemanticError(f"undeclared attribute {atom.name}")
            arity = self.implicit.setdefault(atom.name, len(atom.args))
            if arity != len(atom.args):
                raise PlogSemanticError(
                    f"arity mismatch for {atom.name}: used with {arity} and {len(atom.args)} arguments")
            return None
        if len(atom.args) != len(decl.arg_sorts):
            raise PlogSemanticError(
                f"arity mismatch for {atom.name}: declared {len(decl.arg_sorts)}, used with {len(atom.args)}")
        for arg, srt in zip(atom.args, decl.arg_sorts):
            if not is_var(arg) and arg not in self.sorts[srt].objects:
                raise PlogSemanticError(f"{arg} is not an object of sort {srt} (in {atom})")
        return decl

    def check_literal(self, lit, must_declare=False):
        decl = self.check_atom(lit.atom, must_declare=must_declare, value=lit.value)
        if decl is not None and not is_var(lit.value) and lit.value not in self.range_of(decl):
            raise PlogSemanticError(f"{lit.value} is not in the range of {lit.atom.name}")

    def check_body(self, body):
        for lit in body.literals():
            self.check_literal(lit)

    def resolve(self, stmts) -> Program:
        rules, randoms, pratoms = [], [], []
        for s in stmts:
            if isinstance(s, Rule):
                if s.head is not None:
                    self.check_literal(s.head)
                self.check_body(s.body)
                rules.append(s)
        for s in stmts:
            if isinstance(s, RandomSelection):
                self.check_atom(s.atom, must_declare=True)
                if s.range_literal is not None:
                    self.check_literal(s.range_literal)
                self.check_body(s.body)
                randoms.append(s)
        for s in stmts:
            if isinstance(s, PrAtom):
                decl = self.check_atom(s.atom, must_declare=True)
                if not is_var(s.value) and s.value not in self.range_of(decl):
                    raise PlogSemanticError(f"{s.value} is not in the range of {s.atom.name}")
                self.check_body(s.body)
                pratoms.append(s)
        attributes = list(self.attrs.values())
        attributes += [AttributeDecl(n, None, BOOLEAN, implicit=True) for n in self.implicit]
        return Program(tuple(self.sorts.values()), tuple(attributes),
                       tuple(rules), tuple(randoms), tuple(pratoms))


def _implicit_arity(program, name):
    for r in program.rules:
        for lit in ([r.head] if r.head else []) + list(r.body.literals()):
            if lit.atom.name == name:
                return len(lit.atom.args)
    for part in list(program.randoms) + list(program.pratoms):
        for lit in part.body.literals():
            if lit.atom.name == name:
                return len(lit.atom.args)
    return None


def parse_program(text: str, base: Program = None) -> Program:
    """Parse ``.plog`` source text into a :class:`Program`.

    With ``base``, the sorts and attributes declared there are in scope (the
    result carries them too, so it can be combined with ``base.extend``).
    """
    stmts = _Parser(text).program()
    return _Resolver(stmts, base).resolve(stmts)


def parse_literal(text: str) -> Literal:
    """Parse a single literal such as ``req_item=coffee`` or ``-sunny(rw0,cl2)``."""
    p = _Parser(text)
    lit = p.literal(allow_value=True)
    if p.tok.kind != "eof":
        p.error("unexpected trailing input")
    return lit
