"""Rewrite rules over e-graph terms.

Three kinds of rules drive refactoring:

* semantic rules encode equivalences of the base shape operators;
* abstraction rules fold a structural match into an abstraction call, firing
  only when the parametric relationships of the abstraction body hold among
  the real values attached to the matched e-classes (conditional scheme);
* dummy valuation is handled by the engine itself and never mutates the
  graph structure.

The naive-structural alternative compiles those parametric relationships
into ordinary sub-patterns (``Add``/``Sub``/... e-nodes), which forces the
engine to eagerly materialize parametric operator nodes.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable

from .dsl import (
    AXES,
    FLOAT,
    PARAM_OPS,
    Abstraction,
    DslError,
    Expr,
    Library,
    eval_float,
    to_text,
)

EPS_COND = 0.005  # half of one 2-decimal bin
EPS_VAL = 0.005


class NonInvertibleAbstractionError(DslError):
    """A FLOAT slot never occurs bare in the body, so no rewrite exists."""


# --- patterns ---------------------------------------------------------------


@dataclass(frozen=True)
class PVar:
    name: str
    type: str | None = None  # restrict to e-classes of this semantic type


@dataclass(frozen=True)
class PApp:
    op: str
    args: tuple = ()


@dataclass(frozen=True)
class PIntLit:
    value: int


@dataclass(frozen=True)
class PVal:
    """Matches any float-valued e-class whose value is within tol."""

    name: str
    value: float
    tol: float = EPS_VAL


Pattern = PVar | PApp | PIntLit | PVal


def pattern_ops(pat: Pattern) -> set[str]:
    if isinstance(pat, PApp):
        out = {pat.op}
        for a in pat.args:
            out |= pattern_ops(a)
        return out
    return set()


def pattern_parametric_depth(pat: Pattern) -> int:
    if isinstance(pat, PApp):
        inner = max((pattern_parametric_depth(a) for a in pat.args), default=0)
        return inner + 1 if pat.op in PARAM_OPS else inner
    return 0


# --- rhs templates ----------------------------------------------------------


@dataclass(frozen=True)
class RVar:
    name: str


@dataclass(frozen=True)
class RApp:
    op: str
    args: tuple = ()


@dataclass(frozen=True)
class RConst:
    """Concrete float leaf; ``calc`` computes the value from bound slots."""

    value: float | None = None
    calc: Callable[[dict[str, float]], float] | None = None
    needs: tuple[str, ...] = ()


@dataclass(frozen=True)
class RIntLit:
    value: int


Template = RVar | RApp | RConst | RIntLit


# --- conditions -------------------------------------------------------------


@dataclass(frozen=True)
class Condition:
    """val(target) must equal fn(values of needs) within tol; tol=0 is exact.

    ``nonzero`` conditions instead require |val(target)| > 0.
    """

    target: str
    needs: tuple[str, ...] = ()
    fn: Callable[[dict[str, float]], float] | None = None
    tol: float = EPS_COND
    nonzero: bool = False
    text: str = ""

    def check(self, vals: dict[str, float]) -> bool:
        tv = vals.get(self.target)
        if tv is None:
            return False
        if self.nonzero:
            return tv != 0.0
        for n in self.needs:
            if n not in vals:
                return False
        try:
            want = self.fn(vals)
        except (ZeroDivisionError, OverflowError, ValueError, DslError):
            return False
        return abs(tv - want) <= self.tol


def cond_equals(target: str, source: str, tol: float = EPS_COND) -> Condition:
    return Condition(target, (source,), lambda v: v[source], tol, text=f"?{target} = ?{source}")


def cond_const(target: str, value: float, tol: float = EPS_COND) -> Condition:
    return Condition(target, (), lambda v: value, tol, text=f"?{target} = {value}")


def cond_neg(target: str, source: str, tol: float = EPS_COND) -> Condition:
    return Condition(target, (source,), lambda v: -v[source], tol, text=f"?{target} = -?{source}")


def cond_zero(target: str) -> Condition:
    return Condition(target, (), lambda v: 0.0, 0.0, text=f"?{target} = 0")


def cond_nonzero(target: str) -> Condition:
    return Condition(target, nonzero=True, text=f"?{target} != 0")


def cond_expr(target: str, expr: Expr, slot_vars: dict[int, str], tol: float = EPS_COND) -> Condition:
    """val(target) must equal the parametric expression over bound slots."""
    needs = tuple(sorted({slot_vars[n.value] for n in expr.walk() if n.op == "param"}))
    max_k = max((int(n.value) for n in expr.walk() if n.op == "param"), default=-1)

    def fn(vals: dict[str, float]) -> float:
        env = tuple(vals.get(slot_vars.get(k, ""), float("nan")) for k in range(max_k + 1))
        return eval_float(expr, env)

    return Condition(target, needs, fn, tol, text=f"?{target} = {to_text(expr)}")


# --- rewrites ---------------------------------------------------------------


@dataclass(frozen=True)
class Rewrite:
    name: str
    kind: str  # "semantic" | "abstraction"
    lhs: Pattern
    rhs: Template
    conditions: tuple[Condition, ...] = ()
    # parametric-depth cap on the named slots, to keep generative rules finite
    depth_guards: tuple[tuple[str, int], ...] = ()


def _v(name: str) -> PVar:
    return PVar(name)


def _neg1() -> RConst:
    return RConst(value=-1.0)


def _zero() -> RConst:
    return RConst(value=0.0)


def default_catalogue() -> tuple[Rewrite, ...]:
    """The 16 semantic rewrites of the 2D language."""
    rules = [
        Rewrite(
            "union-commute", "semantic",
            PApp("Union", (_v("a"), _v("b"))),
            RApp("Union", (RVar("b"), RVar("a"))),
        ),
        Rewrite(
            "union-assoc-l", "semantic",
            PApp("Union", (PApp("Union", (_v("a"), _v("b"))), _v("c"))),
            RApp("Union", (RVar("a"), RApp("Union", (RVar("b"), RVar("c"))))),
        ),
        Rewrite(
            "union-assoc-r", "semantic",
            PApp("Union", (_v("a"), PApp("Union", (_v("b"), _v("c"))))),
            RApp("Union", (RApp("Union", (RVar("a"), RVar("b"))), RVar("c"))),
        ),
        Rewrite(
            "move-fuse", "semantic",
            PApp("Move", (PApp("Move", (_v("s"), _v("a"), _v("b"))), _v("c"), _v("d"))),
            RApp("Move", (
                RVar("s"),
                RConst(calc=lambda v: v["a"] + v["c"], needs=("a", "c")),
                RConst(calc=lambda v: v["b"] + v["d"], needs=("b", "d")),
            )),
        ),
        Rewrite(
            "move-unfuse", "semantic",
            PApp("Move", (_v("s"), _v("a"), _v("b"))),
            RApp("Move", (RApp("Move", (RVar("s"), RVar("a"), _zero())), _zero(), RVar("b"))),
        ),
        Rewrite(
            "move-identity", "semantic",
            PApp("Move", (_v("s"), _v("a"), _v("b"))),
            RVar("s"),
            conditions=(cond_zero("a"), cond_zero("b")),
        ),
        Rewrite(
            "move-identity-inverse", "semantic",
            PVar("s", type="SHAPE"),
            RApp("Move", (RVar("s"), _zero(), _zero())),
        ),
        Rewrite(
            "move-through-union", "semantic",
            PApp("Move", (PApp("Union", (_v("a"), _v("b"))), _v("c"), _v("d"))),
            RApp("Union", (
                RApp("Move", (RVar("a"), RVar("c"), RVar("d"))),
                RApp("Move", (RVar("b"), RVar("c"), RVar("d"))),
            )),
        ),
        Rewrite(
            "union-through-move", "semantic",
            PApp("Union", (
                PApp("Move", (_v("a"), _v("c"), _v("d"))),
                PApp("Move", (_v("b"), _v("c"), _v("d"))),
            )),
            RApp("Move", (RApp("Union", (RVar("a"), RVar("b"))), RVar("c"), RVar("d"))),
        ),
        Rewrite(
            "symref-move-x", "semantic",
            PApp("SymRef", (
                PApp("Move", (PApp("Rect", (_v("w"), _v("h"))), _v("a"), _v("b"))),
                PApp("AX"),
            )),
            RApp("SymRef", (
                RApp("Move", (
                    RApp("Rect", (RVar("w"), RVar("h"))),
                    RApp("Mul", (RVar("a"), _neg1())),
                    RVar("b"),
                )),
                RApp("AX"),
            )),
            depth_guards=(("a", 0),),
        ),
        Rewrite(
            "symref-move-y", "semantic",
            PApp("SymRef", (
                PApp("Move", (PApp("Rect", (_v("w"), _v("h"))), _v("a"), _v("b"))),
                PApp("AY"),
            )),
            RApp("SymRef", (
                RApp("Move", (
                    RApp("Rect", (RVar("w"), RVar("h"))),
                    RVar("a"),
                    RApp("Mul", (RVar("b"), _neg1())),
                )),
                RApp("AY"),
            )),
            depth_guards=(("b", 0),),
        ),
        Rewrite(
            "symtrans-move-x", "semantic",
            PApp("SymTrans", (
                PApp("Move", (_v("s"), _v("a"), _v("b"))),
                PApp("AX"), _v("k"), _v("d"),
            )),
            RApp("Move", (
                RApp("SymTrans", (RVar("s"), RApp("AX"), RVar("k"), RVar("d"))),
                RVar("a"), RVar("b"),
            )),
        ),
        Rewrite(
            "symtrans-move-y", "semantic",
            PApp("SymTrans", (
                PApp("Move", (_v("s"), _v("a"), _v("b"))),
                PApp("AY"), _v("k"), _v("d"),
            )),
            RApp("Move", (
                RApp("SymTrans", (RVar("s"), RApp("AY"), RVar("k"), RVar("d"))),
                RVar("a"), RVar("b"),
            )),
        ),
        Rewrite(
            "mirror-collapse-x", "semantic",
            PApp("Union", (
                PApp("Move", (PApp("Rect", (_v("w"), _v("h"))), _v("x"), _v("y"))),
                PApp("Move", (PApp("Rect", (_v("w2"), _v("h2"))), _v("x2"), _v("y2"))),
            )),
            RApp("SymRef", (
                RApp("Move", (RApp("Rect", (RVar("w"), RVar("h"))), RVar("x"), RVar("y"))),
                RApp("AX"),
            )),
            conditions=(
                cond_equals("w2", "w"),
                cond_equals("h2", "h"),
                cond_equals("y2", "y"),
                cond_neg("x2", "x"),
                cond_nonzero("x"),
            ),
        ),
        Rewrite(
            "symref-drop-x", "semantic",
            PApp("SymRef", (
                PApp("Move", (PApp("Rect", (_v("w"), _v("h"))), _v("x"), _v("y"))),
                PApp("AX"),
            )),
            RApp("Move", (RApp("Rect", (RVar("w"), RVar("h"))), RVar("x"), RVar("y"))),
            conditions=(cond_zero("x"),),
        ),
        Rewrite(
            "symref-drop-y", "semantic",
            PApp("SymRef", (
                PApp("Move", (PApp("Rect", (_v("w"), _v("h"))), _v("x"), _v("y"))),
                PApp("AY"),
            )),
            RApp("Move", (RApp("Rect", (RVar("w"), RVar("h"))), RVar("x"), RVar("y"))),
            conditions=(cond_zero("y"),),
        ),
    ]
    assert len(rules) == 16
    return tuple(rules)


def standard_library() -> Library:
    return Library(semantic_rewrites=default_catalogue())


# --- abstraction compilation ------------------------------------------------


def abstraction_to_rewrite(a: Abstraction, tol: float = EPS_COND) -> Rewrite:
    """Conditional rewrite folding the abstraction body into a call.

    Every FLOAT slot is bound at its first bare occurrence; constants,
    repeated occurrences and parametric subtrees become lazy value checks,
    so the right-hand side adds a single call e-node and no parametric
    operator e-nodes.
    """
    slot_vars = {k: f"p{k}" for k in range(len(a.params))}
    bound_float: set[int] = set()
    conds: list[Condition] = []
    counter = [0]

    def fresh() -> str:
        counter[0] += 1
        return f"t{counter[0]}"

    def walk(node: Expr) -> Pattern:
        if node.op == "param":
            k = int(node.value)
            if a.params[k] == FLOAT:
                if k not in bound_float:
                    bound_float.add(k)
                    return PVar(slot_vars[k])
                v = fresh()
                conds.append(cond_equals(v, slot_vars[k], tol))
                return PVar(v)
            return PVar(slot_vars[k])
        if node.op == "float":
            v = fresh()
            conds.append(cond_const(v, float(node.value), tol))
            return PVar(v)
        if node.op == "int":
            return PIntLit(int(node.value))
        if node.op in AXES:
            return PApp(node.op)
        if node.op in PARAM_OPS:
            v = fresh()
            conds.append(cond_expr(v, node, slot_vars, tol))
            return PVar(v)
        return PApp(node.op, tuple(walk(c) for c in node.children))

    lhs = walk(a.body)
    for k, t in enumerate(a.params):
        if t == FLOAT and k not in bound_float:
            raise NonInvertibleAbstractionError(
                f"{a.name}: FLOAT slot P{k} never occurs bare in the body"
            )
    rhs = RApp(a.name, tuple(RVar(slot_vars[k]) for k in range(len(a.params))))
    return Rewrite(f"fold-{a.name}", "abstraction", lhs, rhs, tuple(conds))


def abstraction_to_unfold_rewrite(a: Abstraction) -> Rewrite:
    """Inverse rewrite exposing a call's body so other folds can compete.

    Parametric body slots become concrete float leaves computed from the
    argument values, so unfolding still adds no parametric operator e-nodes.
    """
    slot_vars = {k: f"p{k}" for k in range(len(a.params))}

    def build(node: Expr) -> Template:
        if node.op == "param":
            return RVar(slot_vars[int(node.value)])
        if node.op == "float":
            return RConst(value=float(node.value))
        if node.op == "int":
            return RIntLit(int(node.value))
        if node.op in AXES:
            return RApp(node.op)
        if node.op in PARAM_OPS:
            needs = tuple(
                sorted({slot_vars[n.value] for n in node.walk() if n.op == "param"})
            )
            max_k = max(
                (int(n.value) for n in node.walk() if n.op == "param"), default=-1
            )

            def calc(vals, _node=node, _max_k=max_k):
                env = tuple(
                    vals.get(slot_vars.get(k, ""), float("nan")) for k in range(_max_k + 1)
                )
                return eval_float(_node, env)

            return RConst(calc=calc, needs=needs)
        return RApp(node.op, tuple(build(c) for c in node.children))

    lhs = PApp(a.name, tuple(PVar(slot_vars[k]) for k in range(len(a.params))))
    return Rewrite(f"unfold-{a.name}", "abstraction", lhs, build(a.body))


def abstraction_to_structural_rewrite(a: Abstraction) -> Rewrite:
    """Naive alternative: parametric relationships as structural sub-patterns."""
    counter = [0]

    def walk(node: Expr) -> Pattern:
        if node.op == "param":
            return PVar(f"p{node.value}")
        if node.op == "float":
            counter[0] += 1
            return PVal(f"c{counter[0]}", float(node.value))
        if node.op == "int":
            return PIntLit(int(node.value))
        if node.op in AXES:
            return PApp(node.op)
        return PApp(node.op, tuple(walk(c) for c in node.children))

    lhs = walk(a.body)
    rhs = RApp(a.name, tuple(RVar(f"p{k}") for k in range(len(a.params))))
    return Rewrite(f"fold-{a.name}", "abstraction", lhs, rhs)


def validate_abstraction(a: Abstraction) -> None:
    """Check slot references and the bare-occurrence invariant."""
    used: set[int] = set()
    for n in a.body.walk():
        if n.op == "param":
            k = int(n.value)
            if k >= len(a.params):
                raise DslError(f"{a.name}: P{k} outside declared slots")
            used.add(k)
    missing = set(range(len(a.params))) - used
    if missing:
        raise DslError(f"{a.name}: unused parameter slots {sorted(missing)}")
    abstraction_to_rewrite(a)  # raises NonInvertibleAbstractionError
