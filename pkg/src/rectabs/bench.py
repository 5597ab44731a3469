"""Benchmark of the conditional rewrite scheme against the naive-structural one.

The benchmark family is a nested Move/SymRef chain whose innermost block is
an instance of one matching abstraction.  The abstraction's position slots
are two-operator parametric expressions over its dimensions, so the naive
scheme must eagerly materialize depth-2 parametric operator e-nodes over all
pairs of float-valued e-classes before its structural patterns can fire;
the conditional scheme checks the same relationships lazily.
"""

from __future__ import annotations

import time
from dataclasses import dataclass

from .dsl import FLOAT, Abstraction, Expr, Library, flit, parse
from .egraph import SaturationBudget, build, catalogue_for
from .rewrites import standard_library

BLOCK_TEXT = "SymRef(Move(Rect(P0,P1),Add(P0,P1),Add(Sub(P1,P0),P1)),AX)"


def bench_abstraction() -> Abstraction:
    body = parse(BLOCK_TEXT, param_types=(FLOAT, FLOAT))
    return Abstraction("Block", (FLOAT, FLOAT), body)


def bench_expression(n_params: int) -> Expr:
    """Nested chain with ``n_params`` float variables (innermost block has 4,
    each wrapping layer adds 2)."""
    if n_params < 4 or n_params % 2:
        raise ValueError("n_params must be even and at least 4")
    w, h = 0.0513, 0.2117
    x = w + h
    y = (h - w) + h
    e = parse(f"SymRef(Move(Rect({w},{h}),{x!r},{y!r}),AX)")
    layers = (n_params - 4) // 2
    for i in range(layers):
        fx = round(0.011 + 0.0137 * i, 4)
        fy = round(-0.42 + 0.0151 * i, 4)
        e = Expr(
            "Move",
            (Expr("SymRef", (e, Expr("AY"))), flit(fx), flit(fy)),
        )
    return e


@dataclass
class BenchRow:
    params: int
    conditional_s: float | None
    conditional_saturated: bool
    naive_s: float | None
    naive_saturated: bool


def _run_once(
    p: Expr, lib: Library, naive: bool, timeout: float, max_nodes: int
) -> tuple[float | None, bool]:
    g = build(p)
    budget = SaturationBudget(max_rounds=200, max_nodes=max_nodes, max_seconds=timeout)
    t0 = time.monotonic()
    stats = g.saturate(catalogue_for(lib, naive=naive), budget, naive=naive)
    dt = time.monotonic() - t0
    if stats.saturated:
        return dt, True
    return None, False


def bench_rewrites(
    param_counts: tuple[int, ...] = (8, 16, 32),
    timeout: float = 60.0,
    max_nodes: int = 12_000_000,
) -> list[BenchRow]:
    """Per size: wall time to saturation for each scheme, None on budget
    exhaustion (reported as X)."""
    lib = standard_library().with_abstraction(bench_abstraction())
    rows = []
    for n in param_counts:
        p = bench_expression(n)
        cond_t, cond_sat = _run_once(p, lib, naive=False, timeout=timeout, max_nodes=max_nodes)
        naive_t, naive_sat = _run_once(p, lib, naive=True, timeout=timeout, max_nodes=max_nodes)
        rows.append(BenchRow(n, cond_t, cond_sat, naive_t, naive_sat))
    return rows


def format_table(rows: list[BenchRow]) -> str:
    def cell(t: float | None) -> str:
        return "X" if t is None else f"{t:.2f}"

    lines = ["scheme        " + "".join(f"{r.params:>10}p" for r in rows)]
    lines.append("naive         " + "".join(f"{cell(r.naive_s):>11}" for r in rows))
    lines.append("conditional   " + "".join(f"{cell(r.conditional_s):>11}" for r in rows))
    return "\n".join(lines)
