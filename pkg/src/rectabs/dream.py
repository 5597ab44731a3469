"""Dream sampling, composite training scenes, and the synthetic corpus.

Dreams are random instantiations of library functions, rejection-filtered to
keep only sensible geometry.  Composite scenes combine several dreams (plus
optional distractor primitives from the corpus) into one canvas with a
one-to-many scene-to-target mapping, exported as training records for the
optional neural proposer.
"""

from __future__ import annotations

import json
import math
import random
from dataclasses import dataclass, field

from .dsl import (
    AXES,
    BOUND_LENIENCY,
    FLOAT,
    INT,
    INT_MAX,
    INT_MIN,
    MAX_SCENE_PRIMS,
    Abstraction,
    DslError,
    Expr,
    Library,
    Primitive,
    Scene,
    axis,
    execute,
    flit,
    ilit,
    to_text,
)

MIN_AREA = 0.005
MIN_VISIBLE = 0.5
MAX_REJECTIONS = 10_000


class DreamTimeout(DslError):
    pass


@dataclass(frozen=True)
class Dream:
    expr: Expr
    prims: tuple[Primitive, ...]
    source_fn: str


@dataclass(frozen=True)
class CompositeTarget:
    expr: Expr
    source_fn: str
    offset: tuple[float, float]  # applied to the prims, not the expression
    prim_span: tuple[int, int]  # slice of the composite's primitive list


@dataclass(frozen=True)
class CompositeScene:
    prims: tuple[Primitive, ...]
    targets: tuple[CompositeTarget, ...]
    n_distractors: int


# ---------------------------------------------------------------------------
# slot samplers


def _mix(rng: random.Random, comps):
    r = rng.random()
    acc = 0.0
    for w, mu, sd in comps:
        acc += w
        if r <= acc:
            return rng.gauss(mu, sd)
    return rng.gauss(comps[-1][1], comps[-1][2])


def sample_dim(rng: random.Random) -> float:
    for _ in range(64):
        v = _mix(rng, [(0.5, 0.3, 0.15), (0.5, 0.08, 0.04)])
        if v > 0.01:
            return v
    return 0.1


def sample_move_coord(rng: random.Random) -> float:
    return _mix(rng, [(0.5, 0.0, 0.1), (0.25, 0.45, 0.1), (0.25, -0.45, 0.1)])


def sample_distance(rng: random.Random) -> float:
    return _mix(rng, [(0.5, 0.45, 0.15), (0.5, -0.45, 0.15)])


_SLOT_SAMPLERS = {
    "dim": sample_dim,
    "coord": sample_move_coord,
    "dist": sample_distance,
}


def slot_context(body: Expr, k: int) -> str:
    """Sampling context of P_k: the base-operator slot of its first occurrence."""
    hit: list[str] = []

    def visit(e: Expr, ctx: str):
        if hit:
            return
        if e.op == "param" and int(e.value) == k:
            hit.append(ctx)
            return
        if e.op == "Rect":
            for c in e.children:
                visit(c, "dim")
        elif e.op == "Move":
            visit(e.children[0], ctx)
            visit(e.children[1], "coord")
            visit(e.children[2], "coord")
        elif e.op == "SymTrans":
            visit(e.children[0], ctx)
            visit(e.children[3], "dist")
        else:
            for c in e.children:
                visit(c, ctx)

    visit(body, "coord")
    return hit[0] if hit else "coord"


# ---------------------------------------------------------------------------
# expression sampling


def _sample_atom(rng: random.Random, lib: Library, depth: int, parent: str) -> Expr:
    """Random small sub-shape; avoids redundant consecutive operators."""
    choices = ["Rect", "Move"]
    if depth < 2:
        choices += ["SymRef", "SymTrans"]
    if parent in choices:
        if parent != "Rect":
            choices.remove(parent)
    op = rng.choice(choices)
    return _sample_with_root(rng, lib, op, depth, parent)


def _sample_with_root(
    rng: random.Random, lib: Library, op: str, depth: int = 0, parent: str = ""
) -> Expr:
    if op == "Rect":
        return Expr("Rect", (flit(sample_dim(rng)), flit(sample_dim(rng))))
    if op == "Move":
        child = _sample_atom(rng, lib, depth + 1, "Move")
        return Expr(
            "Move",
            (child, flit(sample_move_coord(rng)), flit(sample_move_coord(rng))),
        )
    if op == "SymRef":
        child = _sample_atom(rng, lib, depth + 1, "SymRef")
        return Expr("SymRef", (child, axis(rng.choice(AXES))))
    if op == "SymTrans":
        child = _sample_atom(rng, lib, depth + 1, "SymTrans")
        return Expr(
            "SymTrans",
            (
                child,
                axis(rng.choice(AXES)),
                ilit(rng.randint(INT_MIN, INT_MAX)),
                flit(sample_distance(rng)),
            ),
        )
    if op == "Union":
        return Expr(
            "Union",
            (_sample_atom(rng, lib, depth + 1, "Union"), _sample_atom(rng, lib, depth + 1, "Union")),
        )
    a = lib.abstractions.get(op)
    if a is None:
        raise DslError(f"cannot sample dream for unknown function {op}")
    args = []
    for k, t in enumerate(a.params):
        if t == FLOAT:
            args.append(flit(_SLOT_SAMPLERS[slot_context(a.body, k)](rng)))
        elif t == INT:
            args.append(ilit(rng.randint(INT_MIN, INT_MAX)))
        else:
            args.append(axis(rng.choice(AXES)))
    return Expr(op, tuple(args))


# ---------------------------------------------------------------------------
# rejection criteria


def visible_fraction(i: int, prims: list[Primitive]) -> float:
    """Fraction of a primitive's area not covered by any other primitive.

    Exact for axis-aligned rectangles: the occluders' edges cut the
    primitive into a grid of homogeneous cells."""
    p = prims[i]
    x0, x1 = p.x - p.w / 2, p.x + p.w / 2
    y0, y1 = p.y - p.h / 2, p.y + p.h / 2
    others = [
        q
        for j, q in enumerate(prims)
        if j != i
        and q.x - q.w / 2 < x1
        and q.x + q.w / 2 > x0
        and q.y - q.h / 2 < y1
        and q.y + q.h / 2 > y0
    ]
    if not others:
        return 1.0
    xs = {x0, x1}
    ys = {y0, y1}
    for q in others:
        xs.add(min(max(q.x - q.w / 2, x0), x1))
        xs.add(min(max(q.x + q.w / 2, x0), x1))
        ys.add(min(max(q.y - q.h / 2, y0), y1))
        ys.add(min(max(q.y + q.h / 2, y0), y1))
    xs = sorted(xs)
    ys = sorted(ys)
    hidden = 0.0
    for ax, bx in zip(xs, xs[1:]):
        cx = (ax + bx) / 2
        for ay, by in zip(ys, ys[1:]):
            cy = (ay + by) / 2
            if any(q.contains_point(cx, cy) for q in others):
                hidden += (bx - ax) * (by - ay)
    return 1.0 - hidden / (p.w * p.h)


def _redundant_ops(e: Expr) -> bool:
    for n in e.walk():
        if n.op == "Move" and n.children[0].op == "Move":
            return True
        if n.op in ("SymRef", "SymTrans"):
            child = n.children[0]
            if child.op == n.op and child.children[1].op == n.children[1].op:
                return True
    return False


def check_dream(prims: list[Primitive]) -> str | None:
    """None if acceptable, else the name of the violated criterion."""
    if len(prims) > MAX_SCENE_PRIMS:
        return "too many primitives"
    for p in prims:
        if p.w <= 0 or p.h <= 0:
            return "non-positive dimensions"
        if not p.corners_within(BOUND_LENIENCY):
            return "out of bounds"
        if p.w * p.h < MIN_AREA:
            return "below area floor"
    for i in range(len(prims)):
        if visible_fraction(i, prims) < MIN_VISIBLE:
            return "mostly hidden"
    return None


def sample_dream(fn: str, lib: Library, rng: random.Random) -> Dream:
    """Rejection-sample one dream whose root operator is ``fn``."""
    for _ in range(MAX_REJECTIONS):
        expr = _sample_with_root(rng, lib, fn)
        if _redundant_ops(expr):
            continue
        try:
            prims = execute(expr, lib)
        except DslError:
            continue
        if check_dream(prims) is None:
            return Dream(expr, tuple(prims), fn)
    raise DreamTimeout(f"no acceptable dream for {fn} after {MAX_REJECTIONS} tries")


# ---------------------------------------------------------------------------
# composite scenes


def make_composite(
    pools: dict[str, list[Dream]],
    needed: dict[str, int],
    corpus: list[Scene],
    rng: random.Random,
) -> CompositeScene:
    """Combine 1..4 dreams of under-represented functions into one canvas."""
    for _ in range(64):
        under = sorted(fn for fn, n in needed.items() if n > 0 and pools.get(fn))
        if not under:
            under = sorted(fn for fn in pools if pools[fn])
        k = rng.randint(1, 4)
        fns = [rng.choice(under) for _ in range(min(k, len(under)))] if under else []
        if not fns:
            raise DslError("empty dream pool")
        prims: list[Primitive] = []
        targets = []
        for fn in fns:
            d = rng.choice(pools[fn])
            dx = dy = 0.0
            if rng.random() < 0.5:
                dx, dy = rng.gauss(0, 0.2), rng.gauss(0, 0.2)
            moved = [Primitive(p.w, p.h, p.x + dx, p.y + dy) for p in d.prims]
            if any(not p.corners_within(BOUND_LENIENCY) for p in moved):
                dx = dy = 0.0
                moved = list(d.prims)
            start = len(prims)
            prims.extend(moved)
            targets.append(
                CompositeTarget(d.expr, fn, (dx, dy), (start, len(prims)))
            )
        n_distractors = 0
        if corpus and rng.random() < 0.5:
            d = rng.choice(corpus)
            take = rng.randint(1, len(d.prims))
            chosen = rng.sample(list(d.prims), take)
            n_distractors = len(chosen)
            prims.extend(chosen)
        if len(prims) <= MAX_SCENE_PRIMS:
            return CompositeScene(tuple(prims), tuple(targets), n_distractors)
    raise DslError("could not build a composite within the primitive bound")


def expr_tokens(e: Expr) -> list[str]:
    """Flat prefix token strings; floats carry a decimal point, ints do not."""
    out: list[str] = []
    for n in e.walk():
        if n.op == "float":
            out.append(repr(float(n.value)))
        elif n.op == "int":
            out.append(str(int(n.value)))
        elif n.op == "param":
            out.append(f"P{n.value}")
        else:
            out.append(n.op)
    return out


def run_dream_phase(
    lib: Library,
    corpus: list[Scene],
    n_per_fn: int,
    rng: random.Random,
    out_path: str | None = None,
) -> list[CompositeScene]:
    """Sample dreams until every function is a target at least n_per_fn times,
    then optionally export line-records for the neural proposer."""
    fns = ["Rect", "Move", "SymRef", "SymTrans", "Union"] + sorted(lib.abstractions)
    pools: dict[str, list[Dream]] = {}
    for fn in fns:
        pools[fn] = [sample_dream(fn, lib, rng) for _ in range(max(4, n_per_fn // 8))]
    needed = {fn: n_per_fn for fn in fns}
    composites: list[CompositeScene] = []
    guard = n_per_fn * len(fns) * 8
    while any(n > 0 for n in needed.values()) and guard > 0:
        guard -= 1
        c = make_composite(pools, needed, corpus, rng)
        composites.append(c)
        for t in c.targets:
            needed[t.source_fn] -= 1
    if out_path:
        export_dreams(composites, out_path)
    return composites


def export_dreams(composites: list[CompositeScene], path: str) -> None:
    with open(path, "w") as f:
        for c in composites:
            for t in c.targets:
                rec = {
                    "scene": [p.as_list() for p in c.prims],
                    "target_tokens": expr_tokens(t.expr),
                    "target_text": to_text(t.expr),
                    "source_fn": t.source_fn,
                    "offset": list(t.offset),
                    "prim_span": list(t.prim_span),
                }
                f.write(json.dumps(rec) + "\n")


# ---------------------------------------------------------------------------
# synthetic corpus


def _r2(v: float) -> float:
    return round(v, 2)


def _runif2(rng: random.Random, a: float, b: float) -> float:
    return _r2(rng.uniform(a, b))


def sample_furniture(rng: random.Random) -> tuple[Expr, list[Primitive]]:
    """One furniture-like silhouette: top slab, mirrored legs, optional back.

    Positions are chosen so that exact parametric relationships hold: the
    slab width equals twice the leg offset plus the leg width, slat runs
    span the slab, and centered parts sit at x = 0.
    """
    leg_w = _runif2(rng, 0.06, 0.16)
    leg_x = _runif2(rng, 0.28, 0.5)
    slab_h = _runif2(rng, 0.08, 0.16)
    width = 2 * leg_x + leg_w  # flush legs
    slab_y = _runif2(rng, 0.1, 0.4)
    leg_bottom = _runif2(rng, -0.75, -0.5)
    leg_top = slab_y - slab_h / 2
    leg_h = leg_top - leg_bottom
    leg_y = (leg_top + leg_bottom) / 2

    parts: list[Expr] = []

    def move_rect(w, h, x, y):
        return Expr("Move", (Expr("Rect", (flit(w), flit(h))), flit(x), flit(y)))

    parts.append(move_rect(width, slab_h, 0.0, slab_y))
    parts.append(Expr("SymRef", (move_rect(leg_w, leg_h, leg_x, leg_y), Expr("AX"))))

    four_leg = rng.random() < 0.5
    if four_leg:
        inner_x = leg_x - 2 * leg_w
        if inner_x > leg_w:
            parts.append(
                Expr("SymRef", (move_rect(leg_w, leg_h, inner_x, leg_y), Expr("AX")))
            )
    if rng.random() < 0.5:
        head = slab_y + slab_h / 2
        if rng.random() < 0.5:
            # slat back
            slat_w = _runif2(rng, 0.05, 0.09)
            max_h = min(0.6, 1.0 - head - 0.02)
            slat_h = _runif2(rng, 0.25, max(0.26, max_h))
            slat_y = head + slat_h / 2
            k = rng.randint(2, 3)
            span = width - slat_w
            x0 = (slat_w - width) / 2
            parts.append(
                Expr(
                    "SymTrans",
                    (
                        move_rect(slat_w, slat_h, x0, slat_y),
                        Expr("AX"),
                        ilit(k),
                        flit(span),
                    ),
                )
            )
        else:
            # solid panel spanning the slab
            max_h = min(0.5, 1.0 - head - 0.02)
            panel_h = _runif2(rng, 0.2, max(0.21, max_h))
            parts.append(move_rect(width, panel_h, 0.0, head + panel_h / 2))
    if rng.random() < 0.35:
        # stretcher bar between the outer legs
        bar_w = width - 2 * leg_w
        bar_h = _runif2(rng, 0.04, 0.08)
        bar_y = _runif2(rng, leg_bottom + 0.1, min(leg_top - 0.1, 0.0))
        parts.append(move_rect(bar_w, bar_h, 0.0, bar_y))

    prog = parts[0]
    for part in parts[1:]:
        prog = Expr("Union", (prog, part))
    prims = execute(prog)
    return prog, prims


def gen_synthetic_corpus(n: int, seed: int) -> tuple[list[Scene], list[Expr]]:
    """Deterministic corpus of bare primitive scenes plus the latent programs
    they were rendered from (logged separately, never shown to the solver)."""
    if n < 1:
        raise ValueError("need n >= 1")
    rng = random.Random(seed)
    scenes: list[Scene] = []
    latents: list[Expr] = []
    i = 0
    while len(scenes) < n:
        prog, prims = sample_furniture(rng)
        scene = Scene(str(len(scenes)), tuple(prims))
        try:
            scene.validate()
        except DslError:
            i += 1
            continue
        scenes.append(scene)
        latents.append(prog)
        i += 1
    return scenes, latents


def save_latents(latents: list[Expr], path: str) -> None:
    with open(path, "w") as f:
        for i, p in enumerate(latents):
            f.write(json.dumps({"id": str(i), "program": to_text(p)}) + "\n")
