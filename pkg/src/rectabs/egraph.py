"""Equality-saturation engine with an e-class-to-real-value map.

Float literals of the input program become independent variables (V0, V1,
...) whose values seed the value map.  Conditional rewrites check parametric
relationships lazily against that map after a structural match, so applying
an abstraction never materializes parametric operator e-nodes.  A dummy
valuation pass runs after every round to assign values to parametric e-nodes
introduced by semantic rules.

The engine also implements the naive-structural alternative used by the
rewrite benchmark: parametric relationships compiled to structural patterns,
which requires eagerly expanding the graph with parametric operator e-nodes
over pairs of float-valued e-classes and merging classes of equal value.
"""

from __future__ import annotations

import time
from dataclasses import dataclass, field

from .dsl import AXES, FLOAT, INT, PARAM_OPS, SHAPE, Expr, Library, flit, ilit
from .objective import ObjectiveConfig
from .rewrites import (
    EPS_VAL,
    PApp,
    PIntLit,
    PVal,
    PVar,
    Pattern,
    RApp,
    RConst,
    RIntLit,
    RVar,
    Rewrite,
    Template,
    abstraction_to_rewrite,
    abstraction_to_structural_rewrite,
    abstraction_to_unfold_rewrite,
    pattern_ops,
    pattern_parametric_depth,
)

ENode = tuple  # (op, child class ids, payload)


def _op_semantic_type(op: str) -> str:
    if op in PARAM_OPS or op in ("var", "const"):
        return FLOAT
    if op == "int":
        return INT
    if op in AXES:
        return "AXIS"
    return SHAPE


@dataclass
class SaturationBudget:
    max_rounds: int = 8
    max_nodes: int = 50000
    max_seconds: float = 5.0


@dataclass
class SaturationStats:
    rounds: int = 0
    saturated: bool = False
    seconds: float = 0.0
    nodes: int = 0
    classes: int = 0
    merge_refusals: int = 0
    stop_reason: str = ""
    fired: dict = field(default_factory=dict)

    def as_dict(self) -> dict:
        return {
            "rounds": self.rounds,
            "saturated": self.saturated,
            "seconds": round(self.seconds, 4),
            "nodes": self.nodes,
            "classes": self.classes,
            "merge_refusals": self.merge_refusals,
            "stop_reason": self.stop_reason,
            "fired": dict(self.fired),
        }


class EGraph:
    def __init__(self, eps_val: float = EPS_VAL):
        self.eps_val = eps_val
        self.parent: list[int] = []
        self.size: list[int] = []
        self.memo: dict[ENode, int] = {}
        self.classes: dict[int, dict[ENode, None]] = {}
        self.values: dict[int, float] = {}
        self.types: dict[int, str] = {}
        self.depths: dict[int, int] = {}
        self.var_values: list[float] = []
        self.root: int | None = None
        self.n_merges = 0
        self.merge_refusals = 0
        self._abort = False

    # -- union-find -----------------------------------------------------

    def find(self, x: int) -> int:
        p = self.parent
        while p[x] != x:
            p[x] = p[p[x]]
            x = p[x]
        return x

    def _new_class(self, sem_type: str) -> int:
        cid = len(self.parent)
        self.parent.append(cid)
        self.size.append(1)
        self.classes[cid] = {}
        self.types[cid] = sem_type
        return cid

    @property
    def n_nodes(self) -> int:
        return len(self.memo)

    def class_value(self, cid: int) -> float | None:
        return self.values.get(self.find(cid))

    # -- construction -----------------------------------------------------

    def _canon(self, enode: ENode) -> ENode:
        return (enode[0], tuple(self.find(c) for c in enode[1]), enode[2])

    def add(self, op: str, children: tuple[int, ...] = (), payload=None) -> int:
        enode = self._canon((op, children, payload))
        hit = self.memo.get(enode)
        if hit is not None:
            return self.find(hit)
        cid = self._new_class(_op_semantic_type(op))
        self.memo[enode] = cid
        self.classes[cid][enode] = None
        if op == "const":
            self.values[cid] = payload
            self.depths[cid] = 0
        elif op == "var":
            self.values[cid] = self.var_values[payload]
            self.depths[cid] = 0
        elif op in PARAM_OPS:
            self.depths[cid] = 1 + max(
                (self.depths.get(self.find(c), 0) for c in enode[1]), default=0
            )
        return cid

    def add_var(self, value: float) -> int:
        idx = len(self.var_values)
        self.var_values.append(float(value))
        return self.add("var", (), idx)

    def add_expr(self, e: Expr) -> int:
        """Insert a closed expression; every float occurrence becomes a
        fresh variable seeded into the value map."""
        if e.op == "float":
            return self.add_var(float(e.value))
        if e.op == "int":
            return self.add("int", (), int(e.value))
        if e.op == "param":
            raise ValueError("cannot build an e-graph from an open expression")
        if e.op in AXES:
            return self.add(e.op)
        cid = self.add(e.op, tuple(self.add_expr(c) for c in e.children))
        self.root = cid
        return cid

    # -- merging and congruence -------------------------------------------

    def merge(self, a: int, b: int) -> bool:
        ra, rb = self.find(a), self.find(b)
        if ra == rb:
            return False
        va, vb = self.values.get(ra), self.values.get(rb)
        if va is not None and vb is not None and abs(va - vb) > self.eps_val:
            self.merge_refusals += 1
            return False
        if self.size[ra] < self.size[rb]:
            ra, rb = rb, ra
            va, vb = vb, va
        # rb merges into ra
        self.parent[rb] = ra
        self.size[ra] += self.size[rb]
        self.classes[ra].update(self.classes.pop(rb))
        if vb is not None and va is None:
            self.values[ra] = vb
        self.values.pop(rb, None)
        da, db = self.depths.get(ra), self.depths.get(rb)
        if db is not None and (da is None or db < da):
            self.depths[ra] = db
        self.depths.pop(rb, None)
        self.n_merges += 1
        return True

    def rebuild(self) -> bool:
        """Restore congruence: hash-consed duplicates created by merges are
        merged themselves, to a fixpoint.  Value-conflicting merges are
        refused, which conservatively keeps both classes."""
        any_change = False
        while True:
            new_memo: dict[ENode, int] = {}
            pending: list[tuple[int, int]] = []
            for enode, cid in self.memo.items():
                canon = self._canon(enode)
                root = self.find(cid)
                prev = new_memo.get(canon)
                if prev is None:
                    new_memo[canon] = root
                elif self.find(prev) != root:
                    pending.append((prev, root))
            self.memo = new_memo
            if not pending:
                break
            did = False
            for a, b in pending:
                did |= self.merge(a, b)
            any_change |= did
            if not did:
                break
        for root in list(self.classes):
            members = self.classes[root]
            canon = {self._canon(e): None for e in members}
            self.classes[root] = canon
        return any_change

    # -- pattern matching ---------------------------------------------------

    def _op_index(self) -> dict[str, list[int]]:
        idx: dict[str, dict[int, None]] = {}
        for enode, cid in self.memo.items():
            idx.setdefault(enode[0], {})[self.find(cid)] = None
        return {op: list(roots) for op, roots in idx.items()}

    def _match(self, pat: Pattern, cid: int, binding: dict):
        root = self.find(cid)
        if isinstance(pat, PVar):
            if pat.type is not None and self.types.get(root) != pat.type:
                return
            bound = binding.get(pat.name)
            if bound is None:
                nb = dict(binding)
                nb[pat.name] = root
                yield nb
            elif self.find(bound) == root:
                yield binding
            return
        if isinstance(pat, PVal):
            v = self.values.get(root)
            if v is None or abs(v - pat.value) > pat.tol:
                return
            bound = binding.get(pat.name)
            if bound is None:
                nb = dict(binding)
                nb[pat.name] = root
                yield nb
            elif self.find(bound) == root:
                yield binding
            return
        if isinstance(pat, PIntLit):
            key = ("int", (), pat.value)
            hit = self.memo.get(key)
            if hit is not None and self.find(hit) == root:
                yield binding
            return
        # PApp
        nargs = len(pat.args)
        for enode in self.classes.get(root, ()):
            if enode[0] != pat.op or len(enode[1]) != nargs:
                continue
            stack = [binding]
            for sub, child in zip(pat.args, enode[1]):
                nxt = []
                for b in stack:
                    nxt.extend(self._match(sub, child, b))
                stack = nxt
                if not stack:
                    break
            yield from stack

    def ematch(self, pat: Pattern, op_index: dict[str, list[int]]):
        if isinstance(pat, PApp):
            roots = op_index.get(pat.op, ())
        else:
            roots = list(self.classes)
        for r in roots:
            r = self.find(r)
            yield from ((r, b) for b in self._match(pat, r, {}))

    # -- rewrite application -------------------------------------------------

    def _binding_values(self, binding: dict) -> dict[str, float]:
        vals = {}
        for name, cid in binding.items():
            v = self.values.get(self.find(cid))
            if v is not None:
                vals[name] = v
        return vals

    def _instantiate(self, t: Template, binding: dict, vals: dict) -> int | None:
        if isinstance(t, RVar):
            return self.find(binding[t.name])
        if isinstance(t, RConst):
            if t.calc is None:
                v = t.value
            else:
                if any(n not in vals for n in t.needs):
                    return None
                v = t.calc(vals)
            return self.add("const", (), float(v) + 0.0)
        if isinstance(t, RIntLit):
            return self.add("int", (), t.value)
        children = []
        for a in t.args:
            c = self._instantiate(a, binding, vals)
            if c is None:
                return None
            children.append(c)
        return self.add(t.op, tuple(children))

    def apply_rewrite(self, rw: Rewrite, op_index: dict[str, list[int]]) -> int:
        fired = 0
        matches = list(self.ematch(rw.lhs, op_index))
        for root, binding in matches:
            if rw.depth_guards:
                bad = False
                for name, limit in rw.depth_guards:
                    d = self.depths.get(self.find(binding[name]), 0)
                    if d > limit:
                        bad = True
                        break
                if bad:
                    continue
            vals = self._binding_values(binding)
            if not all(c.check(vals) for c in rw.conditions):
                continue
            cid = self._instantiate(rw.rhs, binding, vals)
            if cid is None:
                continue
            if self.merge(self.find(root), cid):
                fired += 1
        return fired

    def run_dummies(self) -> bool:
        """Value every parametric e-node whose children are valued, and
        materialize the value as a const leaf in the same class (the reverse
        of the variable mapping, so extraction emits plain literals)."""
        changed = False
        for enode, cid in list(self.memo.items()):
            op = enode[0]
            if op not in PARAM_OPS:
                continue
            root = self.find(cid)
            if root in self.values:
                continue
            vs = [self.values.get(self.find(c)) for c in enode[1]]
            if any(v is None for v in vs):
                continue
            if op == "Add":
                v = vs[0] + vs[1]
            elif op == "Sub":
                v = vs[0] - vs[1]
            elif op == "Mul":
                v = vs[0] * vs[1]
            else:
                if vs[1] == 0.0:
                    continue
                v = vs[0] / vs[1]
            if v != v or v in (float("inf"), float("-inf")):
                continue
            self.values[root] = v
            self.merge(root, self.add("const", (), v + 0.0))
            changed = True
        return changed

    # -- naive-structural mode ------------------------------------------------
    #
    # Value unification is exact here: two float classes merge only when they
    # carry bitwise-equal values, mirroring constant-folding analyses of
    # conventional e-graph engines.  Approximate matching is exactly what the
    # conditional scheme adds on top.

    def _exact_value_index(self) -> dict[float, int]:
        idx: dict[float, int] = {}
        for root in self.classes:
            v = self.values.get(root)
            if v is not None and self.types.get(root) == FLOAT:
                idx.setdefault(v, root)
        return idx

    def unify_equal_values(self) -> bool:
        """Merge all float-valued classes with identical values (naive mode)."""
        changed = False
        idx = self._exact_value_index()
        for root in sorted(self.classes):
            if self.find(root) != root:
                continue
            v = self.values.get(root)
            if v is None or self.types.get(root) != FLOAT:
                continue
            hit = self.find(idx.setdefault(v, root))
            if hit != root:
                changed |= self.merge(hit, root)
        return changed

    def run_expansion(
        self,
        vocab: tuple[str, ...],
        maxdepth: int,
        deadline: float,
        max_nodes: int,
    ) -> bool:
        """Eagerly materialize parametric operator e-nodes over all pairs of
        float-valued e-classes, up to the depth the structural patterns need."""
        changed = False
        index = self._exact_value_index()
        float_roots = sorted(
            r
            for r in self.classes
            if self.find(r) == r and self.types.get(r) == FLOAT and r in self.values
        )
        tick = 0
        for op in vocab:
            for c1 in float_roots:
                r1 = self.find(c1)
                d1 = self.depths.get(r1, 0)
                if d1 + 1 > maxdepth:
                    continue
                v1 = self.values.get(r1)
                if v1 is None:
                    continue
                for c2 in float_roots:
                    tick += 1
                    if tick % 512 == 0 and (
                        time.monotonic() > deadline or self.n_nodes > max_nodes
                    ):
                        self._abort = True
                        return changed
                    r2 = self.find(c2)
                    d2 = self.depths.get(r2, 0)
                    if 1 + max(d1, d2) > maxdepth:
                        continue
                    v2 = self.values.get(r2)
                    if v2 is None:
                        continue
                    key = (op, (r1, r2), None)
                    if key in self.memo:
                        continue
                    if op == "Add":
                        v = v1 + v2
                    elif op == "Sub":
                        v = v1 - v2
                    elif op == "Mul":
                        v = v1 * v2
                    else:
                        if v2 == 0.0:
                            continue
                        v = v1 / v2
                    if v != v or v in (float("inf"), float("-inf")):
                        continue
                    cid = self.add(op, (r1, r2))
                    self.values[cid] = v
                    changed = True
                    hit = index.setdefault(v, cid)
                    if self.find(hit) != cid:
                        self.merge(hit, cid)
        return changed

    # -- saturation --------------------------------------------------------

    def saturate(
        self,
        rewrites: list[Rewrite],
        budget: SaturationBudget | None = None,
        naive: bool = False,
    ) -> SaturationStats:
        budget = budget or SaturationBudget()
        stats = SaturationStats()
        start = time.monotonic()
        deadline = start + budget.max_seconds
        vocab: tuple[str, ...] = ()
        maxdepth = 0
        if naive:
            ops = set()
            for rw in rewrites:
                if rw.kind == "abstraction":
                    ops |= pattern_ops(rw.lhs) & set(PARAM_OPS)
                    maxdepth = max(maxdepth, pattern_parametric_depth(rw.lhs))
            vocab = tuple(sorted(ops))
            self.unify_equal_values()
            self.rebuild()
        while stats.rounds < budget.max_rounds:
            if time.monotonic() > deadline:
                stats.stop_reason = "timeout"
                break
            if self.n_nodes > budget.max_nodes:
                stats.stop_reason = "node budget"
                break
            before = (self.n_nodes, self.n_merges, len(self.values))
            op_index = self._op_index()
            for rw in rewrites:
                n = self.apply_rewrite(rw, op_index)
                if n:
                    stats.fired[rw.name] = stats.fired.get(rw.name, 0) + n
                if time.monotonic() > deadline:
                    self._abort = True
                    break
            self.run_dummies()
            if naive and not self._abort:
                self.run_expansion(vocab, maxdepth, deadline, budget.max_nodes)
                self.unify_equal_values()
            self.rebuild()
            stats.rounds += 1
            if self._abort:
                stats.stop_reason = "timeout"
                break
            if (self.n_nodes, self.n_merges, len(self.values)) == before:
                stats.saturated = True
                break
        else:
            stats.stop_reason = "round budget"
        stats.seconds = time.monotonic() - start
        stats.nodes = self.n_nodes
        stats.classes = len(self.classes)
        stats.merge_refusals = self.merge_refusals
        return stats

    # -- extraction ---------------------------------------------------------

    def _node_weight(self, op: str, cfg: ObjectiveConfig) -> float:
        if op in ("var", "const"):
            return cfg.lambda_float
        if op == "int" or op in AXES:
            return cfg.lambda_categorical
        if op in PARAM_OPS:
            return cfg.lambda_floatfn
        return cfg.lambda_shapefn

    def extract(self, cfg: ObjectiveConfig) -> Expr:
        """Minimum-cost represented term, by bottom-up fixpoint over classes.

        Costs are the objective token weights; ties prefer fewer nodes."""
        best: dict[int, tuple[float, int]] = {}
        choice: dict[int, ENode] = {}
        changed = True
        while changed:
            changed = False
            for enode, cid in self.memo.items():
                root = self.find(cid)
                cost = self._node_weight(enode[0], cfg)
                size = 1
                ok = True
                for ch in enode[1]:
                    b = best.get(self.find(ch))
                    if b is None:
                        ok = False
                        break
                    cost += b[0]
                    size += b[1]
                if not ok:
                    continue
                cur = best.get(root)
                if cur is None or (cost, size) < cur:
                    best[root] = (cost, size)
                    choice[root] = self._canon(enode)
                    changed = True

        def emit(root: int) -> Expr:
            enode = choice[self.find(root)]
            op, children, payload = enode
            if op == "var":
                return flit(self.var_values[payload])
            if op == "const":
                return flit(payload)
            if op == "int":
                return ilit(payload)
            if op in AXES:
                return Expr(op)
            return Expr(op, tuple(emit(c) for c in children))

        if self.root is None:
            raise ValueError("empty e-graph")
        return emit(self.find(self.root))


def build(p: Expr) -> EGraph:
    g = EGraph()
    g.add_expr(p)
    return g


def catalogue_for(lib: Library, naive: bool = False) -> list[Rewrite]:
    rules: list[Rewrite] = list(lib.semantic_rewrites)
    compile_one = abstraction_to_structural_rewrite if naive else abstraction_to_rewrite
    for name in sorted(lib.abstractions):
        rules.append(compile_one(lib.abstractions[name]))
        rules.append(abstraction_to_unfold_rewrite(lib.abstractions[name]))
    return rules


def refactor(
    p: Expr,
    lib: Library,
    cfg: ObjectiveConfig,
    budget: SaturationBudget | None = None,
    naive: bool = False,
    exactness: float | None = 1e-9,
) -> tuple[Expr, SaturationStats]:
    """Minimum-cost equivalent of ``p`` under the library's rewrites.

    When ``exactness`` is set, the extracted program must execute to the
    same primitive multiset as the input within that tolerance, else the
    input is returned unchanged; condition tolerances still absorb
    float-arithmetic noise, but semantic drift beyond the bound is refused.
    """
    from .dsl import execute, inline
    from .objective import match_primitives

    g = build(p)
    stats = g.saturate(catalogue_for(lib, naive), budget, naive=naive)
    out = g.extract(cfg)
    if exactness is not None and str(out) != str(p):
        before = execute(inline(p, lib))
        after = execute(inline(out, lib))
        ok = len(before) == len(after) and match_primitives(
            after, before, exactness, require_square=True
        )
        if not ok:
            stats.stop_reason = (stats.stop_reason + "; exactness fallback").strip("; ")
            return p, stats
    return out, stats
