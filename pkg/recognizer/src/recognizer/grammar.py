"""Wire-format grammar shared with the host system.

Expressions travel as prefix token sequences (or the equivalent
parenthesized text).  Each operator has fixed arity and slot types, so a
prefix sequence is unambiguous and generation can be constrained to
type-legal tokens.
"""

from __future__ import annotations

import json

SHAPE, FLOAT, INT, AXIS = "SHAPE", "FLOAT", "INT", "AXIS"

BASE_OPS: dict[str, tuple[str, ...]] = {
    "Union": (SHAPE, SHAPE),
    "SymRef": (SHAPE, AXIS),
    "SymTrans": (SHAPE, AXIS, INT, FLOAT),
    "Move": (SHAPE, FLOAT, FLOAT),
    "Rect": (FLOAT, FLOAT),
}

AXES = ("AX", "AY")
INT_RANGE = (1, 2, 3, 4)
MAX_PRIMS = 16
PRIM_PARAMS = 4  # w, h, x, y
MAX_TARGET_LEN = 32


def load_op_table(library_path: str | None) -> dict[str, tuple[str, ...]]:
    """Base operators plus abstraction signatures from a library manifest."""
    table = dict(BASE_OPS)
    if library_path:
        with open(library_path) as f:
            doc = json.load(f)
        for rec in doc.get("abstractions", []):
            table[rec["name"]] = tuple(rec["params"])
    return table


def tokens_to_text(tokens: list[str], op_table: dict[str, tuple[str, ...]]) -> str:
    """Prefix token list to parenthesized text; raises on malformed input."""
    pos = 0

    def emit() -> str:
        nonlocal pos
        if pos >= len(tokens):
            raise ValueError("truncated token sequence")
        tok = tokens[pos]
        pos += 1
        if tok in op_table:
            args = [emit() for _ in op_table[tok]]
            return f"{tok}({','.join(args)})"
        return tok

    out = emit()
    if pos != len(tokens):
        raise ValueError("trailing tokens")
    return out


def text_to_tokens(text: str) -> list[str]:
    out = []
    for piece in text.replace("(", " ").replace(")", " ").replace(",", " ").split():
        out.append(piece)
    return out


def sequence_is_complete(tokens: list[str], op_table) -> bool:
    try:
        tokens_to_text(tokens, op_table)
        return True
    except ValueError:
        return False
