import random

import pytest

from rectabs.dream import (
    CompositeScene,
    check_dream,
    expr_tokens,
    gen_synthetic_corpus,
    make_composite,
    run_dream_phase,
    sample_dream,
    slot_context,
)
from rectabs.dsl import FLOAT, Abstraction, Primitive, execute, parse
from rectabs.rewrites import standard_library


def test_rejects_negative_dimensions():
    rng = random.Random(0)
    assert check_dream([Primitive(-0.1, 0.2, 0, 0)]) == "non-positive dimensions"


def test_rejects_out_of_bounds():
    rng = random.Random(0)
    # corner reaches x = 1.15
    assert check_dream([Primitive(0.5, 0.2, 0.9, 0)]) == "out of bounds"


def test_rejects_small_area():
    rng = random.Random(0)
    assert check_dream([Primitive(0.08, 0.05, 0, 0)]) == "below area floor"


def test_rejects_hidden_primitive():
    rng = random.Random(0)
    prims = [Primitive(0.8, 0.8, 0, 0), Primitive(0.2, 0.2, 0, 0)]
    assert check_dream(prims) == "mostly hidden"


def test_rejects_too_many_prims():
    rng = random.Random(0)
    prims = [Primitive(0.1, 0.1, -0.9 + 0.12 * i, 0) for i in range(17)]
    assert check_dream(prims) == "too many primitives"


@pytest.mark.parametrize("fn", ["Rect", "Move", "SymRef", "SymTrans", "Union"])
def test_sampled_dreams_satisfy_all_criteria(fn, lib):
    rng = random.Random(5)
    for _ in range(40):
        d = sample_dream(fn, lib, rng)
        assert d.expr.op == fn
        assert check_dream(list(d.prims)) is None
        assert list(d.prims) == execute(d.expr, lib)


def test_dream_for_abstraction_inherits_slot_contexts(lib):
    body = parse(
        "SymRef(Move(Rect(P0,P1),P2,P3),AX)", param_types=(FLOAT,) * 4
    )
    assert slot_context(body, 0) == "dim"
    assert slot_context(body, 1) == "dim"
    assert slot_context(body, 2) == "coord"
    lib2 = lib.with_abstraction(Abstraction("Pair", (FLOAT,) * 4, body))
    rng = random.Random(9)
    d = sample_dream("Pair", lib2, rng)
    assert d.expr.op == "Pair"
    assert check_dream(list(d.prims)) is None


def test_composites_bound_and_one_to_many(lib):
    rng = random.Random(2)
    scenes, _ = gen_synthetic_corpus(6, 0)
    pools = {
        fn: [sample_dream(fn, lib, rng) for _ in range(6)]
        for fn in ("Rect", "Move", "SymRef")
    }
    needed = {fn: 3 for fn in pools}
    k_counts = set()
    for _ in range(40):
        c = make_composite(pools, needed, scenes, rng)
        assert len(c.prims) <= 16
        assert 1 <= len(c.targets) <= 4
        k_counts.add(len(c.targets))
        for t in c.targets:
            lo, hi = t.prim_span
            span = list(c.prims[lo:hi])
            moved = [
                Primitive(p.w, p.h, p.x + t.offset[0], p.y + t.offset[1])
                for p in execute(t.expr, lib)
            ]
            assert sorted(map(repr, span)) == sorted(map(repr, moved))
    assert len(k_counts) > 1  # several composite sizes observed


def test_dream_phase_reaches_quota(lib):
    scenes, _ = gen_synthetic_corpus(4, 0)
    composites = run_dream_phase(lib, scenes, 6, random.Random(0))
    counts: dict[str, int] = {}
    for c in composites:
        for t in c.targets:
            counts[t.source_fn] = counts.get(t.source_fn, 0) + 1
    for fn in ("Rect", "Move", "SymRef", "SymTrans", "Union"):
        assert counts.get(fn, 0) >= 6


def test_expr_tokens_roundtrippable():
    e = parse("SymTrans(Move(Rect(0.1,0.25),-0.4,0.0),AX,2,0.8)")
    toks = expr_tokens(e)
    assert toks == ["SymTrans", "Move", "Rect", "0.1", "0.25", "-0.4", "0.0", "AX", "2", "0.8"]


def test_corpus_determinism():
    a, la = gen_synthetic_corpus(8, 21)
    b, lb = gen_synthetic_corpus(8, 21)
    assert [s.prims for s in a] == [s.prims for s in b]
    assert [str(x) for x in la] == [str(x) for x in lb]


def test_corpus_scenes_valid_and_mirrored():
    scenes, _ = gen_synthetic_corpus(30, 4)
    for s in scenes:
        s.validate()
        # every off-axis primitive has an exact x-mirror partner
        for p in s.prims:
            if abs(p.x) > 1e-9:
                assert any(
                    abs(q.x + p.x) <= 1e-9
                    and abs(q.w - p.w) <= 1e-9
                    and abs(q.h - p.h) <= 1e-9
                    and abs(q.y - p.y) <= 1e-9
                    for q in s.prims
                )
