"""Integration phase: greedy library improvement driven by refactoring.

Each top-ranked candidate is trialled by adding it to the library and
refactoring the program set; the variant is kept only when the objective
improves.  Accepted candidates discount the frequency of overlapping
remaining candidates.  A rejected candidate may still enter through the
swap variant that also removes functions whose usage it displaced, and the
phase ends with a removal sweep over every abstraction.  Variants are gated
on a stratified subsample before paying for a full-corpus evaluation.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

from .dsl import Expr, Library, Scene, to_text, uses_functions
from .egraph import SaturationBudget, refactor
from .objective import ObjectiveConfig, objective
from .proposal import CandidateAbstraction
from .wake import ExprCache, add_program_to_cache, greedy_cover_from_cache

SUBSAMPLE_SHARE = 0.25
FDEC_DROP = 0.5  # relative usage drop that marks a function as displaced


@dataclass
class IntegrationLogEntry:
    variant: str
    f_before: float
    f_after: float | None
    accepted: bool
    detail: str = ""

    def as_dict(self) -> dict:
        fmt = lambda v: None if v is None else (v if math.isfinite(v) else "inf")
        return {
            "variant": self.variant,
            "f_before": fmt(self.f_before),
            "f_after": fmt(self.f_after),
            "accepted": self.accepted,
            "detail": self.detail,
        }


@dataclass
class IntegrationResult:
    library: Library
    programs: dict[str, Expr]
    f_value: float
    log: list[IntegrationLogEntry] = field(default_factory=list)
    accepted: list[str] = field(default_factory=list)
    removed: list[str] = field(default_factory=list)


def _usage_counts(programs: dict[str, Expr]) -> dict[str, int]:
    counts: dict[str, int] = {}
    for p in programs.values():
        for fn in uses_functions(p):
            counts[fn] = counts.get(fn, 0) + 1
    return counts


def evaluate_variant(
    lib: Library,
    programs: dict[str, Expr],
    scenes: dict[str, Scene],
    caches: dict[str, ExprCache],
    cfg: ObjectiveConfig,
    budget: SaturationBudget,
    subset: list[str] | None = None,
) -> tuple[float, dict[str, Expr]]:
    """Refactor every program under the variant library and score it.

    Programs that use a function absent from the variant are first rebuilt
    from the scene's expression cache (masked to available functions)."""
    sids = subset if subset is not None else sorted(programs)
    known = set(lib.abstractions)
    out: dict[str, Expr] = {}
    for sid in sids:
        p = programs[sid]
        if not uses_functions(p) <= known:
            rebuilt = greedy_cover_from_cache(caches[sid], scenes[sid], lib, cfg)
            if rebuilt is None:
                out[sid] = p  # no legal rebuild; scored infinite below
                continue
            p = rebuilt
        try:
            p2, _ = refactor(p, lib, cfg, budget)
        except Exception:
            out[sid] = p
            continue
        out[sid] = p2
    f = objective(lib, out, {sid: scenes[sid] for sid in sids}, cfg)
    return f, out


def _stratified_subset(sids: list[str], share: float) -> list[str]:
    step = max(1, round(1 / share))
    return sids[::step]


class _Integrator:
    def __init__(self, lib, programs, scenes, caches, cfg, budget):
        self.scenes = scenes
        self.caches = caches
        self.cfg = cfg
        self.budget = budget
        self.sids = sorted(programs)
        self.sub_sids = _stratified_subset(self.sids, SUBSAMPLE_SHARE)
        self.result = IntegrationResult(
            lib, dict(programs), objective(lib, programs, scenes, cfg)
        )

    # -- helpers -----------------------------------------------------------

    def _f_subsample_current(self) -> float:
        return objective(
            self.result.library,
            {sid: self.result.programs[sid] for sid in self.sub_sids},
            self.scenes,
            self.cfg,
        )

    def try_variant(self, variant: Library, label: str, new_fn: str | None, detail: str = "") -> bool:
        """Gate on the subsample, then evaluate fully; commit on improvement."""
        res = self.result
        f_sub, _ = evaluate_variant(
            variant, res.programs, self.scenes, self.caches, self.cfg, self.budget, self.sub_sids
        )
        if f_sub >= self._f_subsample_current():
            res.log.append(IntegrationLogEntry(label, res.f_value, None, False, "subsample gate"))
            return False
        f_full, programs = evaluate_variant(
            variant, res.programs, self.scenes, self.caches, self.cfg, self.budget
        )
        if f_full >= res.f_value:
            res.log.append(IntegrationLogEntry(label, res.f_value, f_full, False, detail))
            return False
        if new_fn is not None:
            usage = _usage_counts(programs).get(new_fn, 0)
            if usage / len(self.sids) < self.cfg.omega.min_usage:
                res.log.append(
                    IntegrationLogEntry(label, res.f_value, f_full, False, "below usage floor")
                )
                return False
        res.log.append(IntegrationLogEntry(label, res.f_value, f_full, True, detail))
        res.library = variant
        res.programs = programs
        res.f_value = f_full
        for sid in self.sids:
            add_program_to_cache(
                self.caches[sid], programs[sid], self.scenes[sid], variant, self.cfg
            )
        return True

    def displaced_functions(self, abstraction) -> set[str]:
        """Functions whose usage drops by at least half when the candidate
        is added, measured on the subsample."""
        res = self.result
        variant = res.library.with_abstraction(abstraction)
        _, sub_programs = evaluate_variant(
            variant, res.programs, self.scenes, self.caches, self.cfg, self.budget, self.sub_sids
        )
        before = _usage_counts({sid: res.programs[sid] for sid in self.sub_sids})
        after = _usage_counts(sub_programs)
        out = set()
        for fn in res.library.abstractions:
            b = before.get(fn, 0)
            if b > 0 and after.get(fn, 0) <= b * (1 - FDEC_DROP):
                out.add(fn)
        return out


def integrate(
    lib: Library,
    programs: dict[str, Expr],
    scenes: dict[str, Scene],
    caches: dict[str, ExprCache],
    candidates: list[CandidateAbstraction],
    cfg: ObjectiveConfig,
    n_top: int = 20,
    budget: SaturationBudget | None = None,
) -> IntegrationResult:
    it = _Integrator(lib, programs, scenes, caches, cfg, budget or SaturationBudget())
    res = it.result
    remaining = list(candidates)

    trialled = 0
    tried: set[int] = set()
    while trialled < n_top:
        # the top-scored candidate under the current (discounted) frequencies
        pool = [
            c
            for i, c in enumerate(remaining)
            if i not in tried and c.frequency > 0 and c.score > 0
        ]
        if not pool:
            break
        cand = min(pool, key=lambda c: (-c.score, to_text(c.abstraction.body)))
        tried.add(remaining.index(cand))
        trialled += 1
        name = res.library.next_abstraction_name()
        abstraction = cand.abstraction.renamed(name)
        variant = res.library.with_abstraction(abstraction)
        accepted = it.try_variant(variant, f"add {name}", name, to_text(abstraction.body))
        if not accepted and res.library.abstractions:
            f_dec = it.displaced_functions(abstraction)
            if f_dec:
                swap_lib = res.library.with_abstraction(abstraction)
                for fn in sorted(f_dec):
                    swap_lib = swap_lib.without(fn)
                accepted = it.try_variant(
                    swap_lib, f"swap {name} for {sorted(f_dec)}", name
                )
                if accepted:
                    res.removed.extend(sorted(f_dec))
        if accepted:
            res.accepted.append(name)
            for other in remaining:
                if other is not cand:
                    other.coverage = other.coverage - cand.coverage
                    other.frequency = len(other.coverage) / max(1, len(it.sids))

    for fn in sorted(res.library.abstractions):
        if it.try_variant(res.library.without(fn), f"remove {fn}", None):
            res.removed.append(fn)

    return res
