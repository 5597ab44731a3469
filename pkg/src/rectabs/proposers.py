"""Candidate-expression proposers for the wake phase.

The search proposer exploits the fact that a valid expression must reproduce
observed primitive coordinates: float slots are filled from a value pool
built from the remaining canvas (raw parameter values plus pairwise sums,
differences, and doublings/halvings/negations, deduplicated at 2-decimal
bins).  Mirror pairs and uniform runs are detected directly, which is the
anchored equivalent of enumerating SymRef/SymTrans templates over the pool;
abstraction calls are enumerated over the direct pool only, bucketed by slot
context.

The neural proposer is a thin client for the external recognizer process
(line-delimited JSON over stdin/stdout); unparseable generations are
dropped.
"""

from __future__ import annotations

import json
import math
import subprocess
import time
from dataclasses import dataclass, field

from .dsl import (
    AXES,
    FLOAT,
    INT,
    INT_MAX,
    Expr,
    Library,
    Primitive,
    axis,
    flit,
    ilit,
    parse,
)
from .dream import slot_context

PAIR_TOL = 0.005  # half a 2-decimal bin


def bin2(v: float) -> float:
    return round(v, 2)


def value_pool(prims: list[Primitive]) -> tuple[list[float], list[float]]:
    """(direct, derived) pools, both deduplicated at 2-decimal bins."""
    direct_bins: dict[float, None] = {}
    for p in prims:
        for v in (p.w, p.h, p.x, p.y):
            direct_bins.setdefault(bin2(v), None)
    direct = sorted(direct_bins)
    derived: dict[float, None] = dict(direct_bins)
    for a in direct:
        for m in (-1.0, 2.0, 0.5):
            derived.setdefault(bin2(a * m), None)
        for b in direct:
            derived.setdefault(bin2(a + b), None)
            derived.setdefault(bin2(a - b), None)
    return direct, sorted(derived)


def _move_rect(w: float, h: float, x: float, y: float) -> Expr:
    rect = Expr("Rect", (flit(w), flit(h)))
    if x == 0.0 and y == 0.0:
        return rect
    return Expr("Move", (rect, flit(x), flit(y)))


@dataclass
class SearchProposer:
    """Template search over the library, anchored on the remaining canvas."""

    max_candidates: int = 20_000
    time_budget: float = 1.0
    abstraction_cap: int = 512

    def propose(self, prims: list[Primitive], lib: Library, rng_seed: int = 0) -> list[Expr]:
        deadline = time.monotonic() + self.time_budget
        out: list[Expr] = []
        self._mirrors(prims, out)
        self._runs(prims, out)
        self._abstraction_calls(prims, lib, out, deadline)
        return out[: self.max_candidates]

    # mirror pairs -> SymRef templates

    def _mirrors(self, prims: list[Primitive], out: list[Expr]) -> None:
        n = len(prims)
        x_pairs = []
        for i in range(n):
            for j in range(n):
                if i == j:
                    continue
                a, b = prims[i], prims[j]
                if (
                    abs(a.w - b.w) <= PAIR_TOL
                    and abs(a.h - b.h) <= PAIR_TOL
                    and abs(a.y - b.y) <= PAIR_TOL
                    and a.x > PAIR_TOL
                    and abs(a.x + b.x) <= 2 * PAIR_TOL
                ):
                    out.append(
                        Expr("SymRef", (_move_rect(a.w, a.h, a.x, a.y), axis("AX")))
                    )
                    x_pairs.append((i, j))
                if (
                    abs(a.w - b.w) <= PAIR_TOL
                    and abs(a.h - b.h) <= PAIR_TOL
                    and abs(a.x - b.x) <= PAIR_TOL
                    and a.y > PAIR_TOL
                    and abs(a.y + b.y) <= 2 * PAIR_TOL
                ):
                    out.append(
                        Expr("SymRef", (_move_rect(a.w, a.h, a.x, a.y), axis("AY")))
                    )
        # double reflection for quadruples
        for i, j in x_pairs:
            a = prims[i]
            if a.y > PAIR_TOL:
                mirrored_y = any(
                    abs(c.w - a.w) <= PAIR_TOL
                    and abs(c.h - a.h) <= PAIR_TOL
                    and abs(c.x - a.x) <= PAIR_TOL
                    and abs(c.y + a.y) <= 2 * PAIR_TOL
                    for c in prims
                )
                if mirrored_y:
                    out.append(
                        Expr(
                            "SymRef",
                            (
                                Expr("SymRef", (_move_rect(a.w, a.h, a.x, a.y), axis("AX"))),
                                axis("AY"),
                            ),
                        )
                    )

    # uniform runs -> SymTrans templates

    def _runs(self, prims: list[Primitive], out: list[Expr]) -> None:
        for ax in ("AX", "AY"):
            groups: dict[tuple, list[Primitive]] = {}
            for p in prims:
                if ax == "AX":
                    key = (bin2(p.w), bin2(p.h), bin2(p.y))
                else:
                    key = (bin2(p.w), bin2(p.h), bin2(p.x))
                groups.setdefault(key, []).append(p)
            for key in sorted(groups):
                row = sorted(groups[key], key=lambda p: p.x if ax == "AX" else p.y)
                if len(row) < 2:
                    continue
                coords = [p.x if ax == "AX" else p.y for p in row]
                for start in range(len(row)):
                    for end in range(start + 1, min(len(row), start + INT_MAX + 1)):
                        m = end - start + 1
                        span = coords[end] - coords[start]
                        step = span / (m - 1)
                        if step <= PAIR_TOL:
                            continue
                        if all(
                            abs(coords[start + t] - (coords[start] + t * step)) <= PAIR_TOL
                            for t in range(1, m)
                        ):
                            p0 = row[start]
                            inner = _move_rect(p0.w, p0.h, p0.x, p0.y)
                            out.append(
                                Expr(
                                    "SymTrans",
                                    (inner, axis(ax), ilit(m - 1), flit(span)),
                                )
                            )

    # abstraction calls over the direct pool

    def _abstraction_calls(
        self, prims: list[Primitive], lib: Library, out: list[Expr], deadline: float
    ) -> None:
        if not lib.abstractions:
            return
        dims = sorted({bin2(v) for p in prims for v in (p.w, p.h)})
        coords = sorted({bin2(v) for p in prims for v in (p.x, p.y)})
        dists: list[float] = sorted(
            {bin2(a - b) for a in coords for b in coords if abs(a - b) > PAIR_TOL}
        )
        pool_by_ctx = {"dim": dims, "coord": coords, "dist": dists or coords}
        for name in sorted(lib.abstractions):
            a = lib.abstractions[name]
            slot_pools: list[list] = []
            for k, t in enumerate(a.params):
                if t == FLOAT:
                    pool = pool_by_ctx[slot_context(a.body, k)]
                    if not pool:
                        pool = coords or dims
                    slot_pools.append([flit(v) for v in pool])
                elif t == INT:
                    slot_pools.append([ilit(v) for v in range(1, INT_MAX + 1)])
                else:
                    slot_pools.append([axis(ax) for ax in AXES])
            combos = 1
            for sp in slot_pools:
                combos *= max(1, len(sp))
            emitted = 0
            idx = [0] * len(slot_pools)
            while emitted < min(self.abstraction_cap, combos):
                if time.monotonic() > deadline:
                    return
                args = tuple(sp[i] for sp, i in zip(slot_pools, idx))
                out.append(Expr(name, args))
                emitted += 1
                for pos in range(len(idx) - 1, -1, -1):
                    idx[pos] += 1
                    if idx[pos] < len(slot_pools[pos]):
                        break
                    idx[pos] = 0
                else:
                    break


@dataclass
class NeuralProposer:
    """Client for the external recognizer subprocess.

    The server reads one JSON request per line ({"prims", "batch",
    "time_budget"}) and answers one JSON response per line ({"exprs": [...]}
    or {"error": ...}).
    """

    command: list[str]
    batch: int = 256
    time_budget: float = 1.0
    _proc: subprocess.Popen | None = field(default=None, repr=False)

    def _ensure(self) -> subprocess.Popen:
        if self._proc is None or self._proc.poll() is not None:
            self._proc = subprocess.Popen(
                self.command,
                stdin=subprocess.PIPE,
                stdout=subprocess.PIPE,
                text=True,
                bufsize=1,
            )
        return self._proc

    def close(self) -> None:
        if self._proc is not None and self._proc.poll() is None:
            self._proc.stdin.close()
            self._proc.wait(timeout=10)
        self._proc = None

    def propose(self, prims: list[Primitive], lib: Library, rng_seed: int = 0) -> list[Expr]:
        proc = self._ensure()
        req = {
            "prims": [p.as_list() for p in prims],
            "batch": self.batch,
            "time_budget": self.time_budget,
        }
        try:
            proc.stdin.write(json.dumps(req) + "\n")
            proc.stdin.flush()
            line = proc.stdout.readline()
        except (BrokenPipeError, OSError):
            self._proc = None
            return []
        if not line:
            self._proc = None
            return []
        try:
            resp = json.loads(line)
        except json.JSONDecodeError:
            return []
        out: list[Expr] = []
        for text in resp.get("exprs", []):
            try:
                out.append(parse(text, lib))
            except Exception:
                continue
        return out
