"""Library discovery for 2D rectangle scenes.

Given a corpus of shapes represented as unstructured rectangle primitives,
jointly discovers parametric abstraction functions and compact programs that
use them, by iterating dream / wake / proposal / integration phases around
an equality-saturation refactoring engine with conditional rewrites.
"""

from .dsl import (
    Abstraction,
    Expr,
    Library,
    Primitive,
    Scene,
    execute,
    inline,
    parse,
    to_text,
)
from .egraph import EGraph, SaturationBudget, refactor
from .objective import ObjectiveConfig, match_primitives, objective, omega, program_complexity
from .rewrites import standard_library

__all__ = [
    "Abstraction",
    "EGraph",
    "Expr",
    "Library",
    "ObjectiveConfig",
    "Primitive",
    "SaturationBudget",
    "Scene",
    "execute",
    "inline",
    "match_primitives",
    "objective",
    "omega",
    "parse",
    "program_complexity",
    "refactor",
    "standard_library",
    "to_text",
]

__version__ = "0.1.0"
