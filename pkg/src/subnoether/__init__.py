"""Jet-space algebra for sub-symmetries and the conservation laws they generate."""

from .dsl import ParseError, SemanticError, parse_document
from .expr import Expr, as_expr, normalize
from .jet import EvolutionaryField, JetContext, divergence, euler_op, noether_R, prolong_apply, total_derivative
from .oracle import Oracle
from .subsym import (
    deform_claw,
    equivalent,
    first_noether,
    generate_claw,
    quasi_noether_check,
    subsymmetry_check,
    triviality_classify,
)
from .system import Combination, ConservationLaw, DifferentialSystem, reduce

__all__ = [
    "ParseError",
    "SemanticError",
    "parse_document",
    "Expr",
    "as_expr",
    "normalize",
    "EvolutionaryField",
    "JetContext",
    "divergence",
    "euler_op",
    "noether_R",
    "prolong_apply",
    "total_derivative",
    "Oracle",
    "deform_claw",
    "equivalent",
    "first_noether",
    "generate_claw",
    "quasi_noether_check",
    "subsymmetry_check",
    "triviality_classify",
    "Combination",
    "ConservationLaw",
    "DifferentialSystem",
    "reduce",
]

__version__ = "0.1.0"
