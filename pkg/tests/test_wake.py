import pytest

from rectabs.dream import gen_synthetic_corpus
from rectabs.dsl import FLOAT, Abstraction, Primitive, Scene, execute, inline, parse, to_text
from rectabs.objective import match_primitives, program_complexity
from rectabs.proposers import SearchProposer, value_pool
from rectabs.wake import (
    ExprCache,
    add_program_to_cache,
    combine,
    greedy_cover_from_cache,
    naive_program,
    program_cost,
    split,
    union_fold,
    wake_solve,
)


def scene(*quads):
    return Scene("t", tuple(Primitive(*q) for q in quads))


def test_naive_single_prim_at_origin(cfg):
    d = scene((0.4, 0.2, 0.0, 0.0))
    p = naive_program(d)
    assert to_text(p) == "Rect(0.4,0.2)"
    assert program_complexity(p, cfg) == 5.0


def test_naive_two_prims(cfg):
    d = scene((0.4, 0.2, 0.1, 0.3), (0.2, 0.2, -0.5, 0.0))
    p = naive_program(d)
    assert program_complexity(p, cfg) == 21.0
    assert match_primitives(execute(p), d, 1e-9, require_square=True).error == 0.0


def test_naive_empty_scene_raises():
    with pytest.raises(ValueError):
        naive_program(Scene("e", ()))


def test_split_union_roundtrip():
    parts = [parse("Rect(0.3,0.3)"), parse("Move(Rect(0.1,0.1),0.2,0.2)"), parse("Rect(0.5,0.1)")]
    assert split(union_fold(parts)) == parts


def test_wake_single_prim_uses_naive(cfg, lib):
    d = scene((0.4, 0.2, 0.1, 0.3))
    p = wake_solve(d, lib, SearchProposer(), cfg)
    assert to_text(p) == "Move(Rect(0.4,0.2),0.1,0.3)"


def test_wake_prefers_symref_for_mirror_pair(cfg, lib):
    d = scene((0.2, 0.6, 0.35, -0.1), (0.2, 0.6, -0.35, -0.1))
    p = wake_solve(d, lib, SearchProposer(), cfg)
    assert p.op == "SymRef"
    assert match_primitives(execute(p), d, 1e-9, require_square=True) is not None


def test_wake_prefers_symtrans_for_run(cfg, lib):
    d = scene(
        (0.1, 0.5, -0.4, 0.2), (0.1, 0.5, 0.0, 0.2), (0.1, 0.5, 0.4, 0.2)
    )
    p = wake_solve(d, lib, SearchProposer(), cfg)
    assert p.op == "SymTrans"
    assert match_primitives(execute(p), d, 1e-9, require_square=True) is not None


def test_wake_solution_always_sound(cfg, lib):
    scenes, _ = gen_synthetic_corpus(25, 99)
    for d in scenes:
        p = wake_solve(d, lib, SearchProposer(), cfg)
        m = match_primitives(execute(inline(p, lib)), d, cfg.max_prim_error, require_square=True)
        assert m is not None and m.error <= 1e-9


def test_invalid_proposals_never_selected(cfg, lib):
    class BadProposer:
        def propose(self, prims, lib, rng_seed=0):
            return [parse("Rect(0.9,0.9)"), parse("Union(Rect(0.9,0.9),Rect(0.8,0.8))")]

    d = scene((0.4, 0.2, 0.1, 0.3))
    p = wake_solve(d, lib, BadProposer(), cfg)
    assert to_text(p) == "Move(Rect(0.4,0.2),0.1,0.3)"


def test_wake_uses_abstraction_call_when_cheaper(cfg, lib):
    body = parse("SymRef(Move(Rect(P0,P1),P2,P3),AX)", param_types=(FLOAT,) * 4)
    lib2 = lib.with_abstraction(Abstraction("Wings", (FLOAT,) * 4, body))
    d = scene((0.2, 0.6, 0.35, -0.1), (0.2, 0.6, -0.35, -0.1))
    p = wake_solve(d, lib2, SearchProposer(), cfg)
    # Wings(w,h,x,y) costs 9.0 for two primitives, SymRef expression 11.5
    assert p.op == "Wings"


def test_value_pool_contents():
    direct, derived = value_pool([Primitive(0.4, 0.2, 0.1, 0.3)])
    assert direct == [0.1, 0.2, 0.3, 0.4]
    for v in (-0.1, 0.8, 0.05, 0.5, 0.3, -0.2):
        assert v in derived


def test_cache_masking(cfg, lib):
    body = parse("SymRef(Move(Rect(P0,P1),P2,P3),AX)", param_types=(FLOAT,) * 4)
    lib2 = lib.with_abstraction(Abstraction("Wings", (FLOAT,) * 4, body))
    d = scene((0.2, 0.6, 0.35, -0.1), (0.2, 0.6, -0.35, -0.1))
    cache = ExprCache()
    add_program_to_cache(cache, parse("Wings(0.2,0.6,0.35,-0.1)", lib2), d, lib2, cfg)
    add_program_to_cache(cache, naive_program(d), d, lib2, cfg)
    assert any(e.expr.op == "Wings" for e in cache.usable(lib2))
    assert not any(e.expr.op == "Wings" for e in cache.usable(lib))
    rebuilt = greedy_cover_from_cache(cache, d, lib, cfg)
    assert rebuilt is not None and "Wings" not in to_text(rebuilt)


def test_combine_round0_keeps_new(cfg, lib):
    d = scene((0.4, 0.2, 0.1, 0.3))
    cache = ExprCache()
    p_new = naive_program(d)
    assert combine(None, p_new, cache, d, lib, cfg) == p_new


def test_combine_keeps_previous_when_better(cfg, lib):
    d = scene((0.2, 0.6, 0.35, -0.1), (0.2, 0.6, -0.35, -0.1))
    cache = ExprCache()
    p_prev = wake_solve(d, lib, SearchProposer(), cfg, cache)  # SymRef
    p_new = naive_program(d)
    out = combine(p_prev, p_new, cache, d, lib, cfg)
    assert program_cost(out, d, lib, cfg) <= program_cost(p_prev, d, lib, cfg)
    assert out.op == "SymRef"


def test_combine_splices_cheaper_subexpression(cfg, lib):
    # p_prev explains the mirror pair naively plus an extra part; p_new offers
    # a cheaper subexpression for exactly the pair's primitives
    d = scene((0.2, 0.6, 0.35, -0.1), (0.2, 0.6, -0.35, -0.1), (0.9, 0.1, 0.0, 0.6))
    cache = ExprCache()
    prev_parts = [
        parse("Move(Rect(0.2,0.6),0.35,-0.1)"),
        parse("Move(Rect(0.2,0.6),-0.35,-0.1)"),
        parse("Move(Rect(0.9,0.1),0.0,0.6)"),
    ]
    p_prev = union_fold(prev_parts)
    add_program_to_cache(cache, p_prev, d, lib, cfg)
    p_new = union_fold(
        [parse("SymRef(Move(Rect(0.2,0.6),0.35,-0.1),AX)"), parse("Move(Rect(0.9,0.1),0.0,0.6)")]
    )
    out = combine(p_prev, p_new, cache, d, lib, cfg)
    assert program_cost(out, d, lib, cfg) < program_cost(p_prev, d, lib, cfg)
    assert any(e.op == "SymRef" for e in split(out))


def test_combine_rebuild_from_cache_wins(cfg, lib):
    body = parse("Union(Move(Rect(P0,P1),0.0,P2),SymRef(Move(Rect(P3,P4),P5,P6),AX))", param_types=(FLOAT,) * 7)
    lib2 = lib.with_abstraction(Abstraction("Whole", (FLOAT,) * 7, body))
    d = scene((0.9, 0.1, 0.0, 0.3), (0.2, 0.5, 0.35, -0.2), (0.2, 0.5, -0.35, -0.2))
    cache = ExprCache()
    whole = parse("Whole(0.9,0.1,0.3,0.2,0.5,0.35,-0.2)", lib2)
    add_program_to_cache(cache, whole, d, lib2, cfg)
    p_prev = naive_program(d)
    add_program_to_cache(cache, p_prev, d, lib2, cfg)
    p_new = naive_program(d)
    out = combine(p_prev, p_new, cache, d, lib2, cfg)
    assert to_text(out) == to_text(whole)


def test_combine_never_increases_cost(cfg, lib):
    scenes, _ = gen_synthetic_corpus(12, 5)
    for d in scenes:
        cache = ExprCache()
        p0 = wake_solve(d, lib, SearchProposer(), cfg, cache)
        c0 = program_cost(p0, d, lib, cfg)
        p1 = combine(p0, naive_program(d), cache, d, lib, cfg)
        assert program_cost(p1, d, lib, cfg) <= c0 + 1e-9
