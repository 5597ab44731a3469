"""Wake phase: cover a scene's primitives with minimum-cost expressions.

Each step scores a batch of candidate expressions by complexity per covered
primitive (invalid covers priced infinite), keeps the best, removes the
primitives it covers, and repeats until the canvas is empty.  The resulting
program is the left-leaning Union fold of the chosen expressions.  A
per-scene cache remembers every accepted expression with its covered
primitive set so later rounds can splice, rebuild, and survive library
removals.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Protocol

from .dsl import Expr, Library, Primitive, Scene, execute, inline, to_text, uses_functions
from .objective import ObjectiveConfig, match_primitives, program_complexity


class Proposer(Protocol):
    """Produces candidate SHAPE expressions for (part of) a scene."""

    def propose(
        self, prims: list[Primitive], lib: Library, rng_seed: int
    ) -> list[Expr]: ...


def naive_expr(p: Primitive) -> Expr:
    rect = Expr("Rect", (Expr("float", (), p.w), Expr("float", (), p.h)))
    if p.x == 0.0 and p.y == 0.0:
        return rect
    return Expr("Move", (rect, Expr("float", (), p.x), Expr("float", (), p.y)))


def union_fold(exprs: list[Expr]) -> Expr:
    if not exprs:
        raise ValueError("cannot fold an empty expression list")
    out = exprs[0]
    for e in exprs[1:]:
        out = Expr("Union", (out, e))
    return out


def split(p: Expr) -> list[Expr]:
    """Top-level Union operands, left to right."""
    if p.op == "Union":
        return split(p.children[0]) + split(p.children[1])
    return [p]


def naive_program(d: Scene) -> Expr:
    """Union of per-primitive instantiations; exact by construction."""
    if not d.prims:
        raise ValueError("empty scene")
    return union_fold([naive_expr(p) for p in d.prims])


@dataclass(frozen=True)
class CacheEntry:
    expr: Expr
    covered: frozenset[int]  # indices into the scene's primitive tuple
    cost: float
    err: float

    def key(self) -> tuple:
        return (to_text(self.expr), tuple(sorted(self.covered)))


@dataclass
class ExprCache:
    """All expressions ever accepted for one scene (Q_d)."""

    entries: list[CacheEntry] = field(default_factory=list)
    _seen: set = field(default_factory=set)

    def add(self, entry: CacheEntry) -> None:
        k = entry.key()
        if k not in self._seen:
            self._seen.add(k)
            self.entries.append(entry)

    def usable(self, lib: Library) -> list[CacheEntry]:
        """Entries whose functions all exist in the library (removal masking)."""
        known = set(lib.abstractions)
        return [e for e in self.entries if uses_functions(e.expr) <= known]


def add_program_to_cache(
    cache: ExprCache, p: Expr, d: Scene, lib: Library, cfg: ObjectiveConfig
) -> None:
    for e in split(p):
        ce = score_expression(e, d, list(range(len(d.prims))), lib, cfg)
        if ce is not None:
            cache.add(ce)


def score_expression(
    e: Expr,
    d: Scene,
    remaining: list[int],
    lib: Library,
    cfg: ObjectiveConfig,
) -> CacheEntry | None:
    """Match an expression against the remaining canvas; None when invalid."""
    try:
        prims = execute(inline(e, lib))
    except Exception:
        return None
    if not prims or len(prims) > len(remaining):
        return None
    target = [d.prims[i] for i in remaining]
    m = match_primitives(prims, target, cfg.max_prim_error)
    if m is None:
        return None
    covered = frozenset(remaining[j] for j in m.covered)
    return CacheEntry(e, covered, program_complexity(e, cfg), m.error)


EXACT_ERR = 1e-9


def wake_solve(
    d: Scene,
    lib: Library,
    proposer: Proposer,
    cfg: ObjectiveConfig,
    cache: ExprCache | None = None,
    rng_seed: int = 0,
    prefer_exact: bool = True,
) -> Expr:
    """Iteratively select minimum cost-per-primitive expressions until the
    canvas is empty; the naive per-primitive fallback guarantees progress.

    With ``prefer_exact`` (the default), candidates that reproduce their
    covered primitives exactly always outrank approximate ones, so noiseless
    scenes yield zero-error programs; approximate covers remain available
    for inputs that cannot be explained exactly."""
    remaining = list(range(len(d.prims)))
    if not remaining:
        raise ValueError("empty scene")
    chosen: list[CacheEntry] = []
    step = 0
    while remaining:
        sub = [d.prims[i] for i in remaining]
        batch = list(proposer.propose(sub, lib, rng_seed + step))
        batch.extend(naive_expr(p) for p in sub)
        best: tuple | None = None
        for e in batch:
            ce = score_expression(e, d, remaining, lib, cfg)
            if ce is None:
                continue
            per_prim = (ce.cost + cfg.lambda_err * ce.err) / len(ce.covered)
            tier = 1 if (prefer_exact and ce.err > EXACT_ERR) else 0
            key = (tier, per_prim, -len(ce.covered), ce.cost, to_text(ce.expr))
            if best is None or key < best[0]:
                best = (key, ce)
        assert best is not None, "naive fallback must always produce a valid cover"
        ce = best[1]
        chosen.append(ce)
        remaining = [i for i in remaining if i not in ce.covered]
        step += 1
    if cache is not None:
        for ce in chosen:
            cache.add(ce)
    return union_fold([c.expr for c in chosen])


def program_cost(p: Expr, d: Scene, lib: Library, cfg: ObjectiveConfig) -> float:
    """Per-scene objective contribution: complexity plus weighted error."""
    try:
        prims = execute(inline(p, lib))
    except Exception:
        return math.inf
    m = match_primitives(prims, d, cfg.max_prim_error, require_square=True) if prims else None
    if m is None:
        return math.inf
    return program_complexity(p, cfg) + cfg.lambda_err * m.error


def greedy_cover_from_cache(
    cache: ExprCache, d: Scene, lib: Library, cfg: ObjectiveConfig
) -> Expr | None:
    """Rebuild a full cover from cached expressions, cheapest first."""
    entries = cache.usable(lib)
    todo = set(range(len(d.prims)))
    picked: list[CacheEntry] = []
    while todo:
        cands = [e for e in entries if e.covered <= todo]
        if not cands:
            return None
        best = min(
            cands,
            key=lambda e: ((e.cost + cfg.lambda_err * e.err) / len(e.covered), e.cost, to_text(e.expr)),
        )
        picked.append(best)
        todo -= best.covered
    return union_fold([e.expr for e in picked])


def combine(
    p_prev: Expr | None,
    p_new: Expr,
    cache: ExprCache,
    d: Scene,
    lib: Library,
    cfg: ObjectiveConfig,
) -> Expr:
    """Keep the best of: previous program, new program, a greedy splice of
    new sub-expressions into the previous program, and a greedy rebuild from
    the cache.  Ties prefer the earlier variant, so round 0 keeps p_new."""
    add_program_to_cache(cache, p_new, d, lib, cfg)
    variants: list[Expr] = []
    if p_prev is not None and uses_functions(p_prev) <= set(lib.abstractions):
        variants.append(p_prev)
    variants.append(p_new)
    if p_prev is not None:
        spliced = _splice(p_prev, p_new, d, lib, cfg)
        if spliced is not None:
            variants.append(spliced)
    rebuilt = greedy_cover_from_cache(cache, d, lib, cfg)
    if rebuilt is not None:
        variants.append(rebuilt)
    best = min(variants, key=lambda p: program_cost(p, d, lib, cfg))
    return best


def _splice(
    p_prev: Expr, p_new: Expr, d: Scene, lib: Library, cfg: ObjectiveConfig
) -> Expr | None:
    all_idx = list(range(len(d.prims)))
    prev_entries = [score_expression(e, d, all_idx, lib, cfg) for e in split(p_prev)]
    new_entries = [score_expression(e, d, all_idx, lib, cfg) for e in split(p_new)]
    if any(e is None for e in prev_entries) or any(e is None for e in new_entries):
        return None
    current = list(prev_entries)
    union_w = cfg.lambda_shapefn
    for ne in new_entries:
        inside = [ce for ce in current if ce.covered <= ne.covered]
        if not inside:
            continue
        covered = frozenset().union(*(ce.covered for ce in inside))
        if covered != ne.covered:
            continue
        old_cost = sum(ce.cost for ce in inside) + (len(inside) - 1) * union_w
        if ne.cost < old_cost:
            current = [ce for ce in current if ce not in inside] + [ne]
    return union_fold([ce.expr for ce in current])
