"""Proposal phase: mine candidate abstractions from the current program set.

Structures are operator skeletons of singleton sub-expressions and unordered
sibling pairs under Union, with every float, integer, and axis leaf
abstracted to a typed slot and the observed parameterizations recorded as
rows.  Clusters sample one structure plus a subset of its rows; a greedy
slot-filling search then chooses, per slot, between the constant zero,
parametric expressions over previously introduced variables (preference
order: one, two, then three variables with at most two operators), reuse of
a discrete variable, a frozen discrete value, or a fresh free variable,
maximizing frequency times gain.
"""

from __future__ import annotations

import itertools
import random
from dataclasses import dataclass, field

import numpy as np

from .dsl import (
    AXES,
    FLOAT,
    INT,
    SHAPE,
    Abstraction,
    Expr,
    Library,
    expr_type,
    flit,
    ilit,
    param,
    to_text,
)
from .objective import ObjectiveConfig, omega
from .rewrites import validate_abstraction

MATCH_TOL = 0.005  # half a 2-decimal bin
MIN_STRUCTURE_SHARE = 0.05
MAX_CLUSTER_ROWS = 64
MAX_VARS_FOR_TRIPLES = 5
# relations supported by less than a quarter of the currently-alive rows (or
# fewer than two rows) are treated as numeric coincidences and voided
MIN_OPTION_SHARE = 0.25
MIN_OPTION_ROWS = 2

_PARAM_OP_FNS = {
    "Add": lambda a, b: a + b,
    "Sub": lambda a, b: a - b,
    "Mul": lambda a, b: a * b,
    "Div": lambda a, b: np.divide(a, np.where(np.abs(b) < 1e-9, np.nan, b)),
}


@dataclass(frozen=True)
class Slot:
    type: str  # FLOAT | INT | AXIS


@dataclass
class Structure:
    key: str
    skeleton: Expr  # slots appear as param references in slot order
    slots: tuple[Slot, ...]
    rows: list[tuple]  # concrete leaf values in slot order
    scene_ids: list[str]  # one per row


@dataclass
class Cluster:
    structure: Structure
    rows: list[tuple]
    scene_ids: list[str]


@dataclass
class CandidateAbstraction:
    abstraction: Abstraction
    gain: float
    frequency: float
    coverage: set[str] = field(default_factory=set)
    cluster_frequency: float = 0.0
    structure_key: str = ""

    @property
    def score(self) -> float:
        return self.frequency * self.gain


# ---------------------------------------------------------------------------
# structure recording


def _skeletonize(e: Expr, slots: list[Slot], row: list) -> Expr:
    if e.op == "float":
        slots.append(Slot(FLOAT))
        row.append(float(e.value))
        return param(len(slots) - 1)
    if e.op == "int":
        slots.append(Slot(INT))
        row.append(int(e.value))
        return param(len(slots) - 1)
    if e.op in AXES:
        slots.append(Slot("AXIS"))
        row.append(e.op)
        return param(len(slots) - 1)
    return Expr(e.op, tuple(_skeletonize(c, slots, row) for c in e.children), e.value)


def _skeleton_key(skeleton: Expr, slots: list[Slot]) -> str:
    return to_text(skeleton)


def _union_elements(e: Expr) -> list[Expr]:
    if e.op == "Union":
        return _union_elements(e.children[0]) + _union_elements(e.children[1])
    return [e]


def _singletons(e: Expr) -> list[Expr]:
    out = []
    for n in e.walk():
        if n.op != "Union" and n.children and expr_is_shape(n):
            out.append(n)
    return out


def expr_is_shape(e: Expr) -> bool:
    return e.op not in ("float", "int", "param", "Add", "Sub", "Mul", "Div") and e.op not in AXES


def record_structures(programs: dict[str, Expr], min_share: float = MIN_STRUCTURE_SHARE) -> dict[str, Structure]:
    """Skeletons of singleton sub-expressions and unordered sibling pairs,
    mapped to their observed parameterization rows."""
    table: dict[str, Structure] = {}

    def add(expr: Expr, sid: str):
        slots: list[Slot] = []
        row: list = []
        skeleton = _skeletonize(expr, slots, row)
        key = _skeleton_key(skeleton, slots)
        entry = table.get(key)
        if entry is None:
            entry = Structure(key, skeleton, tuple(slots), [], [])
            table[key] = entry
        entry.rows.append(tuple(row))
        entry.scene_ids.append(sid)

    for sid in sorted(programs):
        p = programs[sid]
        for sub in _singletons(p):
            add(sub, sid)
        elems = _union_elements(p)
        for i in range(len(elems)):
            for j in range(i + 1, len(elems)):
                a, b = elems[i], elems[j]
                sa: list[Slot] = []
                ra: list = []
                ka = _skeleton_key(_skeletonize(a, sa, ra), sa)
                sb: list[Slot] = []
                rb: list = []
                kb = _skeleton_key(_skeletonize(b, sb, rb), sb)
                # canonical order for the pair key
                if (kb, rb) < (ka, ra):
                    a, b = b, a
                add(Expr("Union", (a, b)), sid)

    n = max(1, len(programs))
    return {
        k: s
        for k, s in table.items()
        if len(set(s.scene_ids)) / n >= min_share
    }


def sample_cluster(table: dict[str, Structure], rng: random.Random) -> Cluster:
    """One structure, weighted by row count, with at most 64 of its rows."""
    if not table:
        raise ValueError("empty structure table")
    keys = sorted(table)
    weights = [len(table[k].rows) for k in keys]
    key = rng.choices(keys, weights=weights, k=1)[0]
    s = table[key]
    idx = list(range(len(s.rows)))
    if len(idx) > MAX_CLUSTER_ROWS:
        idx = rng.sample(idx, MAX_CLUSTER_ROWS)
    return Cluster(s, [s.rows[i] for i in idx], [s.scene_ids[i] for i in idx])


# ---------------------------------------------------------------------------
# greedy slot-filling search


@dataclass
class _Filler:
    kind: str  # "fresh" | "const" | "expr" | "freeze" | "reuse"
    expr: Expr | None  # body fragment over abstraction params (None for fresh)
    delta: float  # token weight removed at the call site
    mask: np.ndarray | None  # rows consistent with this filler


class SearchInstrumentation:
    """Counts enumeration levels visited, for the early-break property test."""

    def __init__(self):
        self.levels_visited: list[int] = []

    def note(self, level: int):
        self.levels_visited.append(level)


def _float_options(
    col: np.ndarray,
    prev: list[tuple[int, np.ndarray]],
    alive: np.ndarray,
    cfg: ObjectiveConfig,
    instr: SearchInstrumentation | None,
) -> list[_Filler]:
    options: list[_Filler] = []
    n_alive = int(alive.sum())

    def covered_union(opts):
        u = np.zeros_like(alive)
        for o in opts:
            u |= o.mask & alive
        return int((u & alive).sum())

    # level 0: the constant zero
    if instr:
        instr.note(0)
    mask0 = np.abs(col) <= MATCH_TOL
    options.append(_Filler("const", flit(0.0), cfg.lambda_float, mask0))
    if covered_union(options) < n_alive and prev:
        # level 1: a single previous variable
        if instr:
            instr.note(1)
        for k, pcol in prev:
            m = np.abs(col - pcol) <= MATCH_TOL
            options.append(_Filler("expr", param(k), cfg.lambda_float, m))
        if covered_union(options) < n_alive:
            # level 2: one operator over two previous variables
            if instr:
                instr.note(2)
            for op, fn in _PARAM_OP_FNS.items():
                for (k1, c1), (k2, c2) in itertools.product(prev, prev):
                    pred = fn(c1, c2)
                    m = np.abs(col - pred) <= MATCH_TOL
                    m &= ~np.isnan(pred)
                    if m.any():
                        options.append(
                            _Filler(
                                "expr",
                                Expr(op, (param(k1), param(k2))),
                                cfg.lambda_float,
                                m,
                            )
                        )
            if covered_union(options) < n_alive and len(prev) <= MAX_VARS_FOR_TRIPLES:
                # level 3: two operators over three previous variables
                if instr:
                    instr.note(3)
                for (op1, f1), (op2, f2) in itertools.product(
                    _PARAM_OP_FNS.items(), _PARAM_OP_FNS.items()
                ):
                    for (k1, c1), (k2, c2), (k3, c3) in itertools.product(prev, prev, prev):
                        inner = f2(c1, c2)
                        pred = f1(inner, c3)
                        m = (np.abs(col - pred) <= MATCH_TOL) & ~np.isnan(pred)
                        if m.any():
                            options.append(
                                _Filler(
                                    "expr",
                                    Expr(op1, (Expr(op2, (param(k1), param(k2))), param(k3))),
                                    cfg.lambda_float,
                                    m,
                                )
                            )
                        pred2 = f1(c1, f2(c2, c3))
                        m2 = (np.abs(col - pred2) <= MATCH_TOL) & ~np.isnan(pred2)
                        if m2.any():
                            options.append(
                                _Filler(
                                    "expr",
                                    Expr(op1, (param(k1), Expr(op2, (param(k2), param(k3))))),
                                    cfg.lambda_float,
                                    m2,
                                )
                            )
    return options


def greedy_abstraction_search(
    cluster: Cluster,
    lib: Library,
    cfg: ObjectiveConfig,
    instr: SearchInstrumentation | None = None,
) -> CandidateAbstraction | None:
    """Fill slots left to right, maximizing frequency x gain."""
    s = cluster.structure
    rows = cluster.rows
    n = len(rows)
    if n == 0:
        return None
    alive = np.ones(n, dtype=bool)
    gain = 0.0
    params: list[str] = []  # types of fresh variables, in introduction order
    fillers: list[Expr] = []  # per slot, over fresh-param indices
    float_prev: list[tuple[int, np.ndarray]] = []
    disc_prev: list[tuple[int, str, list]] = []  # (param idx, type, column)

    for si, slot in enumerate(s.slots):
        colv = [r[si] for r in rows]
        if slot.type == FLOAT:
            col = np.asarray(colv, dtype=float)
            options = _float_options(col, float_prev, alive, cfg, instr)
        else:
            options = []
            for v in sorted(set(colv), key=str):
                m = np.asarray([x == v for x in colv])
                lit = ilit(v) if slot.type == INT else Expr(v)
                options.append(_Filler("freeze", lit, cfg.lambda_categorical, m))
            for k, t, pcol in disc_prev:
                if t == slot.type:
                    m = np.asarray([x == y for x, y in zip(colv, pcol)])
                    options.append(_Filler("reuse", param(k), cfg.lambda_categorical, m))
        # choose argmax of frequency x gain; zero-frequency options are void,
        # as are numeric coincidences below the support floor
        floor = max(MIN_OPTION_ROWS, MIN_OPTION_SHARE * alive.sum())
        best: tuple | None = None
        for rank, o in enumerate(options):
            m = o.mask & alive
            support = int(m.sum())
            if support == 0 or support < floor:
                continue
            freq = support / n
            score = freq * (gain + o.delta)
            key = (-score, rank)
            if best is None or key < best[0]:
                best = (key, o, m)
        fresh_score = (alive.sum() / n) * gain
        if best is not None and -best[0][0] > fresh_score:
            _, o, m = best
            alive = m
            gain += o.delta
            fillers.append(o.expr)
        else:
            k = len(params)
            params.append(slot.type)
            fillers.append(param(k))
            if slot.type == FLOAT:
                float_prev.append((k, np.asarray(colv, dtype=float)))
            else:
                disc_prev.append((k, slot.type, colv))

    body = _substitute_slots(s.skeleton, fillers)
    a = Abstraction("Cand", tuple(params), body)
    candidate = CandidateAbstraction(
        abstraction=a,
        gain=gain,
        frequency=0.0,
        cluster_frequency=float(alive.sum()) / n,
        structure_key=s.key,
    )
    return candidate


def _substitute_slots(skeleton: Expr, fillers: list[Expr]) -> Expr:
    if skeleton.op == "param":
        return fillers[int(skeleton.value)]
    if not skeleton.children:
        return skeleton
    return Expr(
        skeleton.op,
        tuple(_substitute_slots(c, fillers) for c in skeleton.children),
        skeleton.value,
    )


# ---------------------------------------------------------------------------
# row matching and full-corpus generalization


def row_matches(a: Abstraction, structure: Structure, row: tuple) -> bool:
    """Does the abstraction reproduce this parameterization row exactly
    (within the 2-decimal binning tolerance)?"""
    env: list = [None] * len(a.params)
    # prediction is slot-by-slot on the abstraction body aligned to skeleton
    preds = _slot_exprs(a.body, structure.skeleton)
    if preds is None:
        return False
    # first pass: bind fresh params from their bare slots
    for si, pe in enumerate(preds):
        if pe.op == "param":
            k = int(pe.value)
            if env[k] is None:
                env[k] = row[si]
    if any(v is None for v in env):
        return False
    for si, pe in enumerate(preds):
        want = row[si]
        got = _eval_slot(pe, env)
        if got is None:
            return False
        if structure.slots[si].type == FLOAT:
            if abs(float(got) - float(want)) > MATCH_TOL:
                return False
        else:
            if got != want:
                return False
    return True


def _slot_exprs(body: Expr, skeleton: Expr) -> list[Expr] | None:
    """Body fragments in slot order, by aligning body with the skeleton."""
    out: list[Expr] = []

    def walk(b: Expr, s: Expr) -> bool:
        if s.op == "param":
            out.append(b)
            return True
        if b.op != s.op or len(b.children) != len(s.children):
            return False
        return all(walk(bc, sc) for bc, sc in zip(b.children, s.children))

    return out if walk(body, skeleton) else None


def _eval_slot(pe: Expr, env: list):
    if pe.op == "param":
        return env[int(pe.value)]
    if pe.op == "float":
        return float(pe.value)
    if pe.op == "int":
        return int(pe.value)
    if pe.op in AXES:
        return pe.op
    if pe.op in _PARAM_OP_FNS:
        a = _eval_slot(pe.children[0], env)
        b = _eval_slot(pe.children[1], env)
        if not isinstance(a, float) and not isinstance(a, int):
            return None
        if pe.op == "Div" and abs(float(b)) < 1e-9:
            return None
        return float(_PARAM_OP_FNS[pe.op](np.float64(a), np.float64(b)))
    return None


def propose(
    programs: dict[str, Expr],
    lib: Library,
    cfg: ObjectiveConfig,
    iters: int,
    rng: random.Random,
) -> list[CandidateAbstraction]:
    """Run cluster sampling plus greedy search, merge duplicates, rank by
    score with frequency generalized to the whole program set."""
    table = record_structures(programs)
    if not table:
        return []
    n_programs = max(1, len(programs))
    found: dict[str, CandidateAbstraction] = {}
    for _ in range(iters):
        cluster = sample_cluster(table, rng)
        cand = greedy_abstraction_search(cluster, lib, cfg)
        if cand is None or cand.gain <= 0:
            continue
        a = cand.abstraction
        w = omega(a, cfg.omega)
        if w is None:
            continue
        try:
            validate_abstraction(a)
        except Exception:
            continue
        key = f"{','.join(a.params)}|{to_text(a.body)}"
        if key not in found:
            structure = table[cand.structure_key]
            coverage = {
                sid
                for sid, row in zip(structure.scene_ids, structure.rows)
                if row_matches(a, structure, row)
            }
            cand.coverage = coverage
            cand.abstraction = Abstraction(a.name, a.params, a.body, w)
            found[key] = cand
        else:
            structure = table[cand.structure_key]
            found[key].coverage |= {
                sid
                for sid, row in zip(structure.scene_ids, structure.rows)
                if row_matches(a, structure, row)
            }
    out = []
    for cand in found.values():
        cand.frequency = len(cand.coverage) / n_programs
        if cand.frequency > 0:
            out.append(cand)
    out.sort(key=lambda c: (-c.score, to_text(c.abstraction.body)))
    return out


def candidates_report(cands: list[CandidateAbstraction]) -> list[dict]:
    return [
        {
            "rank": i,
            "score": round(c.score, 4),
            "frequency": round(c.frequency, 4),
            "gain": c.gain,
            "params": list(c.abstraction.params),
            "body": to_text(c.abstraction.body),
            "coverage": len(c.coverage),
        }
        for i, c in enumerate(cands)
    ]
