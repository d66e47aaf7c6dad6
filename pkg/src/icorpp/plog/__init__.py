"""A small P-log-style reasoner: parsing, grounding and possible-world inference."""
from .syntax import (
    BOOLEAN, FALSE, TRUE, Atom, AttributeDecl, Body, Comparison, Literal, PlogError,
    PlogSemanticError, PlogSyntaxError, PrAtom, Program, RandomSelection, Rule, SortDecl,
    Var, format_program,
)
from .parser import parse_literal, parse_program
from .grounding import GroundProgram, StratificationError, ground
from .engine import (
    Evidence, InconsistentEvidenceError, PossibleWorld, ProbabilityError,
    UndefinedAttributeError, WorldDistribution, do, enumerate_worlds, marginals,
    obs, parse_evidence, query,
)

__all__ = [
    "Atom", "AttributeDecl", "BOOLEAN", "Body", "Comparison", "Evidence", "FALSE",
    "GroundProgram", "InconsistentEvidenceError", "Literal", "PlogError",
    "PlogSemanticError", "PlogSyntaxError", "PossibleWorld", "PrAtom", "ProbabilityError",
    "Program", "RandomSelection", "Rule", "SortDecl", "StratificationError", "TRUE",
    "UndefinedAttributeError", "Var", "WorldDistribution", "do", "enumerate_worlds",
    "format_program", "ground", "marginals", "obs", "parse_evidence", "parse_literal",
    "parse_program", "query",
]
