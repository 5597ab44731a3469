import random

import pytest

from rectabs.dream import gen_synthetic_corpus
from rectabs.dsl import FLOAT, Abstraction, execute, inline, parse, to_text
from rectabs.integration import evaluate_variant, integrate
from rectabs.objective import match_primitives, objective, omega
from rectabs.proposal import CandidateAbstraction, propose
from rectabs.proposers import SearchProposer
from rectabs.egraph import SaturationBudget
from rectabs.wake import ExprCache, add_program_to_cache, naive_program, wake_solve


def _setup(n=16, seed=7, cfg=None, lib=None):
    scenes_list, _ = gen_synthetic_corpus(n, seed)
    scenes = {s.id: s for s in scenes_list}
    caches = {sid: ExprCache() for sid in scenes}
    prop = SearchProposer()
    programs = {}
    for sid, s in scenes.items():
        programs[sid] = wake_solve(s, lib, prop, cfg, caches[sid])
    return scenes, caches, programs


def _mirror_candidate(cfg):
    body = parse(
        "SymRef(Move(Rect(P0,P1),Add(P0,P1),Sub(P1,P0)),AX)",
        param_types=(FLOAT, FLOAT),
    )
    a = Abstraction("Cand", (FLOAT, FLOAT), body, omega=0.25)
    return a


def test_evaluate_variant_identity_keeps_f(cfg, lib):
    scenes, caches, programs = _setup(8, 3, cfg, lib)
    f0 = objective(lib, programs, scenes, cfg)
    f1, p1 = evaluate_variant(lib, programs, scenes, caches, cfg, SaturationBudget())
    assert f1 <= f0 + 1e-9  # refactor can only help under the same library


def test_evaluate_variant_never_matching_costs_omega(cfg, lib):
    scenes, caches, programs = _setup(6, 3, cfg, lib)
    body = parse("Move(Rect(P0,P0),Add(P0,P0),0.77)", param_types=(FLOAT,))
    w = omega(Abstraction("X", (FLOAT,), body), cfg.omega)
    useless = Abstraction("Useless", (FLOAT,), body, omega=w)
    f0, p0 = evaluate_variant(lib, programs, scenes, caches, cfg, SaturationBudget())
    f1, p1 = evaluate_variant(
        lib.with_abstraction(useless), programs, scenes, caches, cfg, SaturationBudget()
    )
    assert f1 == pytest.approx(f0 + useless.omega)
    assert {to_text(p) for p in p0.values()} == {to_text(p) for p in p1.values()}


def test_integrate_monotone_and_sound(cfg, lib):
    from rectabs.objective import program_complexity

    scenes, caches, programs = _setup(16, 7, cfg, lib)
    f0 = objective(lib, programs, scenes, cfg)
    cands = propose(programs, lib, cfg, 250, random.Random(2))
    res = integrate(lib, programs, scenes, caches, cands, cfg, n_top=6)
    assert res.f_value <= f0 + 1e-9
    for sid, p in res.programs.items():
        prims = execute(inline(p, res.library))
        m = match_primitives(prims, scenes[sid], cfg.max_prim_error, require_square=True)
        assert m is not None and m.error <= 1e-9
        if any(n.op in res.library.abstractions for n in p.walk()):
            # inlining an applied abstraction always costs more tokens
            assert program_complexity(inline(p, res.library), cfg) >= program_complexity(p, cfg)
    # accepted abstractions meet the usage floor
    for name in res.accepted:
        if name not in res.library.abstractions:
            continue  # removed again by the sweep
        used = sum(
            1
            for p in res.programs.values()
            if any(n.op == name for n in p.walk())
        )
        assert used / len(res.programs) >= cfg.omega.min_usage


def test_integrate_empty_candidates_is_removal_sweep_only(cfg, lib):
    scenes, caches, programs = _setup(6, 3, cfg, lib)
    res = integrate(lib, programs, scenes, caches, [], cfg)
    assert res.accepted == []
    assert res.f_value == pytest.approx(objective(lib, programs, scenes, cfg))


def test_integrate_discounts_overlapping_candidates(cfg, lib):
    scenes, caches, programs = _setup(16, 7, cfg, lib)
    cands = propose(programs, lib, cfg, 250, random.Random(2))
    assert len(cands) >= 2
    # duplicate the top candidate; after the first accept, the copy's
    # frequency must drop to zero and be skipped
    import copy

    top = cands[0]
    clone = copy.deepcopy(top)
    res = integrate(lib, programs, scenes, caches, [top, clone], cfg, n_top=4)
    if res.accepted:
        assert clone.frequency == 0.0


def test_removal_sweep_drops_useless_abstraction(cfg, lib):
    scenes, caches, programs = _setup(8, 3, cfg, lib)
    body = parse("Move(Rect(P0,P0),Add(P0,P0),0.77)", param_types=(FLOAT,))
    w = omega(Abstraction("X", (FLOAT,), body), cfg.omega)
    useless = Abstraction("Useless", (FLOAT,), body, omega=w)
    lib2 = lib.with_abstraction(useless)
    res = integrate(lib2, programs, scenes, caches, [], cfg)
    assert "Useless" in res.removed
    assert "Useless" not in res.library.abstractions


def test_swap_variant_replaces_dominated_abstraction(cfg, lib):
    # an existing 4-slot mirror abstraction is strictly dominated by the
    # 2-slot candidate with the parametric relations
    scenes_list, _ = gen_synthetic_corpus(20, 40)
    # build custom scenes: mirror pairs obeying x = w + h, y = h - w
    from rectabs.dsl import Primitive, Scene

    rng = random.Random(5)
    scenes = {}
    for i in range(14):
        w = round(rng.uniform(0.1, 0.35), 2)
        h = round(rng.uniform(0.1, 0.35), 2)
        x, y = w + h, h - w
        prims = (Primitive(w, h, x, y), Primitive(w, h, -x, y))
        scenes[str(i)] = Scene(str(i), prims)
    wide_body = parse("SymRef(Move(Rect(P0,P1),P2,P3),AX)", param_types=(FLOAT,) * 4)
    wide_w = omega(Abstraction("X", (FLOAT,) * 4, wide_body), cfg.omega)
    wide = Abstraction("Abs0", (FLOAT,) * 4, wide_body, omega=wide_w)
    lib2 = lib.with_abstraction(wide)
    caches = {sid: ExprCache() for sid in scenes}
    prop = SearchProposer()
    programs = {sid: wake_solve(s, lib2, prop, cfg, caches[sid]) for sid, s in scenes.items()}
    assert all(p.op == "Abs0" for p in programs.values())
    tight_body = parse(
        "SymRef(Move(Rect(P0,P1),Add(P0,P1),Sub(P1,P0)),AX)",
        param_types=(FLOAT, FLOAT),
    )
    tight_w = omega(Abstraction("X", (FLOAT, FLOAT), tight_body), cfg.omega)
    cand = CandidateAbstraction(
        abstraction=Abstraction("Cand", (FLOAT, FLOAT), tight_body, omega=tight_w),
        gain=4.0,
        frequency=1.0,
        coverage=set(scenes),
    )
    res = integrate(lib2, programs, scenes, caches, [cand], cfg, n_top=2)
    assert "Abs0" in res.removed
    new_names = [n for n in res.library.abstractions if n != "Abs0"]
    assert len(new_names) == 1
    assert all(p.op == new_names[0] for p in res.programs.values())
