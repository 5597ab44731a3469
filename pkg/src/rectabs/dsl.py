"""Core 2D shape language: expression trees, typing, execution, serialization.

The language builds scenes out of axis-aligned rectangles:

    SHAPE -> Union(SHAPE, SHAPE) | SymRef(SHAPE, AXIS)
           | SymTrans(SHAPE, AXIS, INT, FLOAT)
           | Move(SHAPE, FLOAT, FLOAT) | Rect(FLOAT, FLOAT)
    AXIS  -> AX | AY
    INT   -> 1..4
    FLOAT -> literal | Add | Sub | Mul | Div (over FLOAT)

Rect is centered at the origin; Move translates primitive centers.  A library
may extend the language with named abstraction functions whose bodies are
SHAPE expressions over parameter references (P0, P1, ...).
"""

from __future__ import annotations

import json
import math
import re
from dataclasses import dataclass, field, replace

SHAPE = "SHAPE"
FLOAT = "FLOAT"
INT = "INT"
AXIS = "AXIS"

INT_MIN, INT_MAX = 1, 4
SCENE_BOUND = 1.0
BOUND_LENIENCY = 1.1  # 10% slack on [-1, 1]^2
MAX_SCENE_PRIMS = 16

# slot types per base operator, in argument order
BASE_OPS: dict[str, tuple[str, ...]] = {
    "Union": (SHAPE, SHAPE),
    "SymRef": (SHAPE, AXIS),
    "SymTrans": (SHAPE, AXIS, INT, FLOAT),
    "Move": (SHAPE, FLOAT, FLOAT),
    "Rect": (FLOAT, FLOAT),
    "Add": (FLOAT, FLOAT),
    "Sub": (FLOAT, FLOAT),
    "Mul": (FLOAT, FLOAT),
    "Div": (FLOAT, FLOAT),
}
SHAPE_FNS = ("Union", "SymRef", "SymTrans", "Move", "Rect")
PARAM_OPS = ("Add", "Sub", "Mul", "Div")
AXES = ("AX", "AY")


class DslError(Exception):
    pass


class DslSyntaxError(DslError):
    def __init__(self, msg: str, pos: int):
        super().__init__(f"{msg} (at position {pos})")
        self.pos = pos


class DslTypeError(DslError):
    def __init__(self, expected: str, found: str, where: str = ""):
        suffix = f" in {where}" if where else ""
        super().__init__(f"{expected} expected, {found} found{suffix}")
        self.expected = expected
        self.found = found


class UnknownFunctionError(DslError):
    def __init__(self, name: str):
        super().__init__(f"unknown function name: {name}")
        self.name = name


class ExecutionError(DslError):
    pass


@dataclass(frozen=True)
class Expr:
    """Immutable expression node.

    ``op`` is a base operator tag, "AX"/"AY", one of the leaf tags
    "float"/"int"/"param", or an abstraction name.  Leaf payloads live in
    ``value``: the float value, the integer, or the parameter index.
    """

    op: str
    children: tuple["Expr", ...] = ()
    value: float | int | None = None

    def is_leaf(self) -> bool:
        return not self.children

    def walk(self):
        yield self
        for c in self.children:
            yield from c.walk()

    def __str__(self) -> str:
        return to_text(self)


def flit(v: float) -> Expr:
    return Expr("float", (), float(v))


def ilit(v: int) -> Expr:
    return Expr("int", (), int(v))


def param(k: int) -> Expr:
    return Expr("param", (), int(k))


def axis(name: str) -> Expr:
    if name not in AXES:
        raise DslTypeError(AXIS, name)
    return Expr(name)


def call(op: str, *children: Expr) -> Expr:
    return Expr(op, tuple(children))


@dataclass(frozen=True)
class Primitive:
    """Axis-aligned rectangle: width, height and center position."""

    w: float
    h: float
    x: float
    y: float

    def corners_within(self, bound: float) -> bool:
        return (
            abs(self.x) + self.w / 2 <= bound
            and abs(self.y) + self.h / 2 <= bound
        )

    def is_valid(self, bound: float = BOUND_LENIENCY) -> bool:
        return self.w > 0 and self.h > 0 and self.corners_within(bound)

    def as_list(self) -> list[float]:
        return [self.w, self.h, self.x, self.y]

    def contains_point(self, px: float, py: float) -> bool:
        return abs(px - self.x) < self.w / 2 and abs(py - self.y) < self.h / 2


@dataclass(frozen=True)
class Scene:
    """One input shape: an unordered multiset of rectangle primitives."""

    id: str
    prims: tuple[Primitive, ...]

    def validate(self) -> None:
        if not 1 <= len(self.prims) <= MAX_SCENE_PRIMS:
            raise DslError(
                f"scene {self.id}: {len(self.prims)} primitives outside 1..{MAX_SCENE_PRIMS}"
            )
        for p in self.prims:
            if not p.is_valid():
                raise DslError(f"scene {self.id}: invalid primitive {p.as_list()}")


@dataclass(frozen=True)
class Abstraction:
    """A named function over the DSL with typed parameter slots."""

    name: str
    params: tuple[str, ...]  # slot types, e.g. (FLOAT, FLOAT, AXIS)
    body: Expr
    omega: float = 0.25

    def renamed(self, name: str) -> "Abstraction":
        return replace(self, name=name)

    def float_slots(self) -> int:
        return sum(1 for t in self.params if t == FLOAT)


@dataclass
class Library:
    """Base operators plus discovered abstractions and the rewrite catalogue."""

    abstractions: dict[str, Abstraction] = field(default_factory=dict)
    semantic_rewrites: tuple = ()

    def with_abstraction(self, a: Abstraction) -> "Library":
        if a.name in BASE_OPS or a.name in AXES:
            raise DslError(f"abstraction name collides with base operator: {a.name}")
        d = dict(self.abstractions)
        d[a.name] = a
        return Library(d, self.semantic_rewrites)

    def without(self, name: str) -> "Library":
        if name in BASE_OPS:
            raise DslError("base operators are not removable")
        d = {k: v for k, v in self.abstractions.items() if k != name}
        return Library(d, self.semantic_rewrites)

    def slot_types(self, op: str) -> tuple[str, ...]:
        if op in BASE_OPS:
            return BASE_OPS[op]
        if op in self.abstractions:
            return self.abstractions[op].params
        raise UnknownFunctionError(op)

    def next_abstraction_name(self) -> str:
        used = set()
        for n in self.abstractions:
            m = re.fullmatch(r"Abs(\d+)", n)
            if m:
                used.add(int(m.group(1)))
        k = 0
        while k in used:
            k += 1
        return f"Abs{k}"


# ---------------------------------------------------------------------------
# printing / parsing


def _fmt_float(v: float) -> str:
    if v != v or math.isinf(v):
        raise DslError(f"non-finite float literal: {v}")
    s = repr(v)
    return s


def to_text(e: Expr) -> str:
    if e.op == "float":
        return _fmt_float(e.value)
    if e.op == "int":
        return str(e.value)
    if e.op == "param":
        return f"P{e.value}"
    if e.op in AXES:
        return e.op
    return f"{e.op}({','.join(to_text(c) for c in e.children)})"


_TOKEN_RE = re.compile(
    r"\s*(?:(?P<num>[+-]?(?:\d+\.\d*|\.\d+|\d+)(?:[eE][+-]?\d+)?)"
    r"|(?P<name>[A-Za-z_][A-Za-z0-9_]*)"
    r"|(?P<punct>[(),]))"
)


def _tokenize(text: str) -> list[tuple[str, str, int]]:
    toks = []
    pos = 0
    while pos < len(text):
        m = _TOKEN_RE.match(text, pos)
        if not m:
            if text[pos:].strip() == "":
                break
            raise DslSyntaxError(f"unexpected character {text[pos]!r}", pos)
        for kind in ("num", "name", "punct"):
            val = m.group(kind)
            if val is not None:
                toks.append((kind, val, m.start(kind)))
                break
        pos = m.end()
    return toks


class _Parser:
    def __init__(self, text: str, lib: Library | None, param_types: tuple[str, ...]):
        self.text = text
        self.toks = _tokenize(text)
        self.i = 0
        self.lib = lib or Library()
        self.param_types = param_types

    def peek(self):
        return self.toks[self.i] if self.i < len(self.toks) else None

    def next(self):
        t = self.peek()
        if t is None:
            raise DslSyntaxError("unexpected end-of-input", len(self.text))
        self.i += 1
        return t

    def expect_punct(self, ch: str):
        t = self.next()
        if t[0] != "punct" or t[1] != ch:
            raise DslSyntaxError(f"expected {ch!r}, got {t[1]!r}", t[2])

    def parse(self, expected: str) -> Expr:
        e = self._expr(expected)
        t = self.peek()
        if t is not None:
            raise DslSyntaxError(f"trailing input {t[1]!r}", t[2])
        return e

    def _expr(self, expected: str) -> Expr:
        kind, val, pos = self.next()
        if kind == "num":
            return self._number(val, expected, pos)
        if kind == "punct":
            raise DslSyntaxError(f"unexpected {val!r}", pos)
        # names: axes, params, operators, abstractions
        if val in AXES:
            if expected != AXIS:
                raise DslTypeError(expected, AXIS)
            return Expr(val)
        m = re.fullmatch(r"P(\d+)", val)
        if m:
            k = int(m.group(1))
            if k >= len(self.param_types):
                raise DslError(f"parameter reference P{k} outside declared slots")
            if self.param_types[k] != expected:
                raise DslTypeError(expected, self.param_types[k])
            return param(k)
        slots = self.lib.slot_types(val)  # raises UnknownFunctionError
        ret = FLOAT if val in PARAM_OPS else SHAPE
        if ret != expected:
            raise DslTypeError(expected, ret)
        self.expect_punct("(")
        children = []
        for j, st in enumerate(slots):
            if j:
                self.expect_punct(",")
            children.append(self._expr(st))
        self.expect_punct(")")
        return Expr(val, tuple(children))

    def _number(self, val: str, expected: str, pos: int) -> Expr:
        if expected == FLOAT:
            return flit(float(val))
        if expected == INT:
            f = float(val)
            if f != int(f):
                raise DslTypeError(INT, FLOAT)
            n = int(f)
            if not INT_MIN <= n <= INT_MAX:
                raise DslError(f"integer literal {n} outside [{INT_MIN},{INT_MAX}]")
            return ilit(n)
        raise DslTypeError(expected, FLOAT)


def parse(
    text: str,
    lib: Library | None = None,
    expected: str = SHAPE,
    param_types: tuple[str, ...] = (),
) -> Expr:
    """Parse prefix notation like ``Move(Rect(0.4,0.2),0.1,0.3)``.

    ``param_types`` declares the slot types of P0.. when parsing an
    abstraction body; parameter references are rejected otherwise.
    """
    return _Parser(text, lib, param_types).parse(expected)


def expr_type(e: Expr, lib: Library | None = None, param_types: tuple[str, ...] = ()) -> str:
    """Type of ``e``, validating arity and slot types of the whole tree."""
    lib = lib or Library()
    if e.op == "float":
        return FLOAT
    if e.op == "int":
        if not INT_MIN <= int(e.value) <= INT_MAX:
            raise DslError(f"integer literal {e.value} outside [{INT_MIN},{INT_MAX}]")
        return INT
    if e.op == "param":
        k = int(e.value)
        if k >= len(param_types):
            raise DslError(f"parameter reference P{k} outside declared slots")
        return param_types[k]
    if e.op in AXES:
        if e.children:
            raise DslError("axis tokens take no arguments")
        return AXIS
    slots = lib.slot_types(e.op)
    if len(e.children) != len(slots):
        raise DslError(f"{e.op}: expected {len(slots)} arguments, got {len(e.children)}")
    for c, st in zip(e.children, slots):
        got = expr_type(c, lib, param_types)
        if got != st:
            raise DslTypeError(st, got, where=e.op)
    return FLOAT if e.op in PARAM_OPS else SHAPE


# ---------------------------------------------------------------------------
# evaluation


def eval_float(e: Expr, env: tuple[float, ...] = ()) -> float:
    if e.op == "float":
        v = float(e.value)
    elif e.op == "param":
        k = int(e.value)
        if k >= len(env):
            raise ExecutionError(f"unbound parameter reference P{k}")
        v = float(env[k])
    elif e.op == "Add":
        v = eval_float(e.children[0], env) + eval_float(e.children[1], env)
    elif e.op == "Sub":
        v = eval_float(e.children[0], env) - eval_float(e.children[1], env)
    elif e.op == "Mul":
        v = eval_float(e.children[0], env) * eval_float(e.children[1], env)
    elif e.op == "Div":
        d = eval_float(e.children[1], env)
        if d == 0:
            raise ExecutionError("division by zero")
        v = eval_float(e.children[0], env) / d
    else:
        raise ExecutionError(f"expected FLOAT expression, got {e.op}")
    if not math.isfinite(v):
        raise ExecutionError(f"non-finite float value: {v}")
    return v


def execute(e: Expr, lib: Library | None = None) -> list[Primitive]:
    """Evaluate a closed SHAPE expression to its primitive multiset.

    Abstraction calls are inlined by substitution first.  A reflected copy
    that coincides exactly with its source (an on-axis primitive) is dropped,
    so SymRef of an axis-centered shape is that shape.
    """
    if lib is None:
        lib = Library()
    e = inline(e, lib)
    return _exec_base(e)


def _exec_base(e: Expr) -> list[Primitive]:
    op = e.op
    if op == "Rect":
        w = eval_float(e.children[0])
        h = eval_float(e.children[1])
        return [Primitive(w, h, 0.0, 0.0)]
    if op == "Move":
        prims = _exec_base(e.children[0])
        dx = eval_float(e.children[1])
        dy = eval_float(e.children[2])
        return [Primitive(p.w, p.h, p.x + dx, p.y + dy) for p in prims]
    if op == "Union":
        return _exec_base(e.children[0]) + _exec_base(e.children[1])
    if op == "SymRef":
        prims = _exec_base(e.children[0])
        ax = e.children[1].op
        if ax not in AXES:
            raise ExecutionError(f"SymRef axis must be AX or AY, got {ax}")
        out = list(prims)
        for p in prims:
            if ax == "AX":
                if p.x != 0.0:
                    out.append(Primitive(p.w, p.h, -p.x, p.y))
            else:
                if p.y != 0.0:
                    out.append(Primitive(p.w, p.h, p.x, -p.y))
        return out
    if op == "SymTrans":
        prims = _exec_base(e.children[0])
        ax = e.children[1].op
        if ax not in AXES:
            raise ExecutionError(f"SymTrans axis must be AX or AY, got {ax}")
        kn = e.children[2]
        if kn.op != "int":
            raise ExecutionError("SymTrans count must be an integer literal")
        k = int(kn.value)
        if not INT_MIN <= k <= INT_MAX:
            raise ExecutionError(f"integer out of [{INT_MIN},{INT_MAX}]: {k}")
        d = eval_float(e.children[3])
        out = list(prims)
        for i in range(1, k + 1):
            off = i * (d / k)
            for p in prims:
                if ax == "AX":
                    out.append(Primitive(p.w, p.h, p.x + off, p.y))
                else:
                    out.append(Primitive(p.w, p.h, p.x, p.y + off))
        return out
    if op in ("float", "int", "param") or op in AXES or op in PARAM_OPS:
        raise ExecutionError(f"expected SHAPE expression, got {op}")
    raise ExecutionError(f"abstraction call {op} not inlined before execution")


def _subst(e: Expr, args: tuple[Expr, ...]) -> Expr:
    if e.op == "param":
        k = int(e.value)
        if k >= len(args):
            raise ExecutionError(f"unbound parameter reference P{k}")
        return args[k]
    if not e.children:
        return e
    return Expr(e.op, tuple(_subst(c, args) for c in e.children), e.value)


def inline(e: Expr, lib: Library) -> Expr:
    """Expand all abstraction calls so only base operators remain."""
    if e.op in BASE_OPS or e.op in AXES or e.op in ("float", "int", "param"):
        if not e.children:
            return e
        return Expr(e.op, tuple(inline(c, lib) for c in e.children), e.value)
    a = lib.abstractions.get(e.op)
    if a is None:
        raise UnknownFunctionError(e.op)
    if len(e.children) != len(a.params):
        raise DslError(
            f"{e.op}: expected {len(a.params)} arguments, got {len(e.children)}"
        )
    args = tuple(inline(c, lib) for c in e.children)
    return inline(_subst(a.body, args), lib)


def uses_functions(e: Expr) -> set[str]:
    """Names of abstraction calls appearing in ``e``."""
    out = set()
    for n in e.walk():
        if n.children and n.op not in BASE_OPS:
            out.add(n.op)
        elif (
            not n.children
            and n.op not in AXES
            and n.op not in ("float", "int", "param")
        ):
            out.add(n.op)
    return out


def prim_key(p: Primitive) -> tuple[float, float, float, float]:
    return (p.w, p.h, p.x, p.y)


def same_multiset(a: list[Primitive], b: list[Primitive]) -> bool:
    return sorted(map(prim_key, a)) == sorted(map(prim_key, b))


# ---------------------------------------------------------------------------
# file formats


def scene_to_record(s: Scene) -> list[list[float]]:
    return [p.as_list() for p in s.prims]


def scene_from_record(rec, sid: str) -> Scene:
    prims = tuple(Primitive(*map(float, q)) for q in rec)
    s = Scene(str(sid), prims)
    s.validate()
    return s


def save_corpus(scenes: list[Scene], path: str) -> None:
    with open(path, "w") as f:
        for s in scenes:
            f.write(json.dumps(scene_to_record(s)) + "\n")


def load_corpus(path: str) -> list[Scene]:
    scenes = []
    with open(path) as f:
        for i, line in enumerate(f):
            line = line.strip()
            if not line:
                continue
            try:
                rec = json.loads(line)
            except json.JSONDecodeError as exc:
                raise DslError(f"{path}:{i}: corpus parse failure: {exc}") from exc
            scenes.append(scene_from_record(rec, str(i)))
    return scenes


def save_library(lib: Library, path: str) -> None:
    doc = {
        "abstractions": [
            {
                "name": a.name,
                "params": list(a.params),
                "body": to_text(a.body),
                "omega": a.omega,
            }
            for a in lib.abstractions.values()
        ]
    }
    with open(path, "w") as f:
        json.dump(doc, f, indent=2)
        f.write("\n")


def load_library(path: str, base: Library) -> Library:
    with open(path) as f:
        doc = json.load(f)
    lib = base
    for rec in doc["abstractions"]:
        params = tuple(rec["params"])
        body = parse(rec["body"], lib, SHAPE, param_types=params)
        lib = lib.with_abstraction(
            Abstraction(rec["name"], params, body, float(rec["omega"]))
        )
    return lib


def save_programs(programs: dict[str, Expr], path: str) -> None:
    doc = {sid: to_text(p) for sid, p in programs.items()}
    with open(path, "w") as f:
        json.dump(doc, f, indent=2)
        f.write("\n")


def load_programs(path: str, lib: Library) -> dict[str, Expr]:
    with open(path) as f:
        doc = json.load(f)
    return {sid: parse(text, lib) for sid, text in doc.items()}
