"""Objective machinery: token-weighted complexity, geometric error, weights.

The global objective averages per-program cost (weighted token count plus a
weighted geometric error) over the corpus and adds one structural-cost term
per abstraction in the library.  A program whose execution cannot be matched
to its scene within the error threshold makes the objective infinite.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import linear_sum_assignment

from .dsl import (
    AXES,
    BASE_OPS,
    FLOAT,
    PARAM_OPS,
    SHAPE_FNS,
    Abstraction,
    Expr,
    Library,
    Primitive,
    Scene,
    execute,
    inline,
)

BAD_EDGE = 10000.0


@dataclass(frozen=True)
class OmegaPolicy:
    base: float = 0.25
    lo: float = 0.125
    hi: float = 0.5
    per_parametric_expr: float = -0.05
    doubleton: float = -0.0625
    singleton: float = 0.0625
    per_slot_over: float = 0.05
    slot_threshold: int = 6
    max_float_slots: int = 10
    min_usage: float = 0.01  # fraction of corpus programs


@dataclass(frozen=True)
class ObjectiveConfig:
    lambda_float: float = 2.0
    lambda_shapefn: float = 1.0
    lambda_floatfn: float = 0.1
    lambda_categorical: float = 0.5
    lambda_err: float = 10.0
    max_prim_error: float = 0.05
    omega: OmegaPolicy = field(default_factory=OmegaPolicy)

    def token_weight(self, op: str) -> float:
        if op in SHAPE_FNS:
            return self.lambda_shapefn
        if op in PARAM_OPS:
            return self.lambda_floatfn
        if op in AXES or op == "int":
            return self.lambda_categorical
        if op == "float":
            return self.lambda_float
        if op not in BASE_OPS and op != "param":
            return self.lambda_shapefn  # abstraction call token
        raise ValueError(f"unknown token type: {op}")

    def slot_weight(self, slot_type: str) -> float:
        return self.lambda_float if slot_type == FLOAT else self.lambda_categorical


def program_complexity(p: Expr, cfg: ObjectiveConfig) -> float:
    """Weighted token count.  Abstraction calls count the call token plus
    argument tokens only, never the inlined body."""
    total = 0.0
    for node in p.walk():
        total += cfg.token_weight(node.op)
    return total


def prim_distance(a: Primitive, b: Primitive) -> float:
    return (abs(a.w - b.w) + abs(a.h - b.h) + abs(a.x - b.x) + abs(a.y - b.y)) / 4.0


@dataclass(frozen=True)
class Match:
    """Injective assignment of output primitives to target primitives."""

    pairs: tuple[tuple[int, int], ...]  # (out index, target index)
    error: float

    @property
    def covered(self) -> frozenset[int]:
        return frozenset(t for _, t in self.pairs)


def match_primitives(
    out: list[Primitive],
    target: Scene | list[Primitive],
    threshold: float,
    require_square: bool = False,
) -> Match | None:
    """Optimal assignment of ``out`` onto target primitives, or None.

    Pairs farther apart than ``threshold`` are priced prohibitively; an
    optimum forced through such an edge means no valid match exists.  In
    program mode (``require_square``) the counts must agree exactly.
    """
    tprims = target.prims if isinstance(target, Scene) else target
    if not out:
        raise ValueError("empty output primitive set")
    if len(out) > len(tprims):
        return None
    if require_square and len(out) != len(tprims):
        return None
    dist = np.empty((len(out), len(tprims)))
    for i, p in enumerate(out):
        for j, q in enumerate(tprims):
            d = prim_distance(p, q)
            dist[i, j] = BAD_EDGE if d > threshold else d
    rows, cols = linear_sum_assignment(dist)
    if any(dist[i, j] >= BAD_EDGE for i, j in zip(rows, cols)):
        return None
    err = float(dist[rows, cols].sum())
    return Match(tuple(zip(map(int, rows), map(int, cols))), err)


def omega(a: Abstraction, policy: OmegaPolicy) -> float | None:
    """Structural cost of adding ``a``; None means reject outright."""
    if a.float_slots() > policy.max_float_slots:
        return None
    w = policy.base
    w += policy.per_parametric_expr * len(_parametric_exprs(a.body))
    if a.body.op == "Union":
        w += policy.doubleton
    else:
        w += policy.singleton
    extra = len(a.params) - policy.slot_threshold
    if extra > 0:
        w += policy.per_slot_over * extra
    return min(max(w, policy.lo), policy.hi)


def _parametric_exprs(body: Expr) -> set[str]:
    """Distinct maximal Add/Sub/Mul/Div subtrees of an abstraction body."""
    found: set[str] = set()

    def visit(e: Expr):
        if e.op in PARAM_OPS:
            found.add(str(e))
            return  # maximal subtree only
        for c in e.children:
            visit(c)

    visit(body)
    return found


def program_error(p: Expr, d: Scene, lib: Library, cfg: ObjectiveConfig) -> float | None:
    """Geometric error of a whole program against its scene, None if invalid."""
    try:
        prims = execute(inline(p, lib))
    except Exception:
        return None
    if not prims:
        return None
    m = match_primitives(prims, d, cfg.max_prim_error, require_square=True)
    return None if m is None else m.error


def objective(
    lib: Library,
    programs: dict[str, Expr],
    scenes: dict[str, Scene],
    cfg: ObjectiveConfig,
) -> float:
    """Global objective over a program set; +inf when any match is invalid."""
    if not programs:
        raise ValueError("empty program set")
    total = 0.0
    for sid, p in programs.items():
        err = program_error(p, scenes[sid], lib, cfg)
        if err is None:
            return math.inf
        total += program_complexity(p, cfg) + cfg.lambda_err * err
    return total / len(programs) + sum(a.omega for a in lib.abstractions.values())
