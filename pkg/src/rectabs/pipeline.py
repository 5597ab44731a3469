"""Round orchestration: dream, wake, proposal, integration, and PHI.

All randomness derives from one root seed fanned out per phase and scene, so
a single-worker run is bitwise reproducible; multi-worker wake uses
per-scene seeds and is reproducible as well because scene results are
order-independent.
"""

from __future__ import annotations

import json
import os
import random
import zlib
from dataclasses import dataclass, field, replace

from .dsl import (
    Expr,
    Library,
    Scene,
    load_corpus,
    load_library,
    save_corpus,
    save_library,
    save_programs,
    to_text,
    uses_functions,
)
from .dream import gen_synthetic_corpus, run_dream_phase, save_latents
from .egraph import SaturationBudget, refactor
from .integration import integrate
from .objective import ObjectiveConfig, objective
from .proposal import candidates_report, propose
from .proposers import NeuralProposer, SearchProposer
from .rewrites import standard_library
from .wake import ExprCache, add_program_to_cache, combine, naive_program, wake_solve

CONFIG_ENV_VAR = "RECTABS_CONFIG"


@dataclass
class PipelineConfig:
    corpus: str = ""
    out_dir: str = "runs/out"
    rounds: int = 3
    n_a: int = 20
    n_d: int = 2000
    proposal_iters: int = 2000
    seed: int = 0
    workers: int = 1
    export_dreams: bool = False
    neural_command: str = ""
    wake_batch: int = 256
    wake_time_budget: float = 1.0
    wake_max_candidates: int = 20000
    refactor_rounds: int = 8
    refactor_nodes: int = 50000
    refactor_seconds: float = 5.0
    lambda_float: float = 2.0
    lambda_shapefn: float = 1.0
    lambda_floatfn: float = 0.1
    lambda_categorical: float = 0.5
    lambda_err: float = 10.0
    max_prim_error: float = 0.05

    def objective_config(self) -> ObjectiveConfig:
        return ObjectiveConfig(
            lambda_float=self.lambda_float,
            lambda_shapefn=self.lambda_shapefn,
            lambda_floatfn=self.lambda_floatfn,
            lambda_categorical=self.lambda_categorical,
            lambda_err=self.lambda_err,
            max_prim_error=self.max_prim_error,
        )

    def budget(self) -> SaturationBudget:
        return SaturationBudget(
            max_rounds=self.refactor_rounds,
            max_nodes=self.refactor_nodes,
            max_seconds=self.refactor_seconds,
        )

    def proposer(self):
        if self.neural_command:
            return NeuralProposer(
                command=self.neural_command.split(),
                batch=self.wake_batch,
                time_budget=self.wake_time_budget,
            )
        return SearchProposer(
            max_candidates=self.wake_max_candidates,
            time_budget=self.wake_time_budget,
        )


_BOOL_KEYS = {"export_dreams"}


def load_config_file(path: str) -> dict:
    """Flat ``key = value`` lines; '#' starts a comment."""
    out: dict = {}
    with open(path) as f:
        for i, line in enumerate(f):
            line = line.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" not in line:
                raise ValueError(f"{path}:{i + 1}: expected 'key = value'")
            key, value = (s.strip() for s in line.split("=", 1))
            out[key] = value
    return out


def make_config(file_values: dict | None = None, **overrides) -> PipelineConfig:
    cfg = PipelineConfig()
    fields = {f: type(getattr(cfg, f)) for f in vars(cfg)}
    merged: dict = {}
    for src in (file_values or {},):
        merged.update(src)
    merged.update({k: v for k, v in overrides.items() if v is not None})
    for key, value in merged.items():
        if key not in fields:
            raise ValueError(f"unknown config key: {key}")
        t = fields[key]
        if isinstance(value, str) and key in _BOOL_KEYS:
            value = value.lower() in ("1", "true", "yes", "on")
        cfg = replace(cfg, **{key: t(value) if not isinstance(value, t) else value})
    return cfg


@dataclass
class RunState:
    library: Library
    programs: dict[str, Expr]
    caches: dict[str, ExprCache]
    trace: list[dict] = field(default_factory=list)


def _phase_rng(seed: int, round_idx: int, phase: str, extra: str = "") -> random.Random:
    return random.Random(f"{seed}:{round_idx}:{phase}:{extra}")


def _scene_seed(seed: int, tag, sid: str) -> int:
    return zlib.crc32(f"{seed}:{tag}:{sid}".encode())


def _wake_one(args):
    scene, lib, objcfg, proposer, seed = args
    p = wake_solve(scene, lib, proposer, objcfg, cache=None, rng_seed=seed)
    return scene.id, p


def wake_phase(
    scenes: dict[str, Scene],
    state: RunState,
    proposer,
    objcfg: ObjectiveConfig,
    cfg: PipelineConfig,
    round_idx: int,
) -> None:
    # wake never applies rewrites, and the catalogue's condition closures do
    # not pickle, so workers get a catalogue-free library copy
    wake_lib = Library(abstractions=dict(state.library.abstractions))
    jobs = [
        (scenes[sid], wake_lib, objcfg, proposer, _scene_seed(cfg.seed, round_idx, sid))
        for sid in sorted(scenes)
    ]
    if cfg.workers > 1 and not cfg.neural_command:
        import multiprocessing as mp

        with mp.get_context("fork").Pool(cfg.workers) as pool:
            results = pool.map(_wake_one, jobs)
    else:
        results = [_wake_one(j) for j in jobs]
    for sid, p_new in results:
        prev = state.programs.get(sid)
        state.programs[sid] = combine(
            prev, p_new, state.caches[sid], scenes[sid], state.library, objcfg
        )


def run(cfg: PipelineConfig) -> dict:
    """Execute the full loop; returns a summary dict of artifact paths."""
    scenes_list = load_corpus(cfg.corpus)
    scenes = {s.id: s for s in scenes_list}
    objcfg = cfg.objective_config()
    os.makedirs(cfg.out_dir, exist_ok=True)
    state = RunState(
        library=standard_library(),
        programs={sid: naive_program(s) for sid, s in scenes.items()},
        caches={sid: ExprCache() for sid in scenes},
    )
    for sid in sorted(scenes):
        add_program_to_cache(state.caches[sid], state.programs[sid], scenes[sid], state.library, objcfg)
    f_naive = objective(state.library, state.programs, scenes, objcfg)
    state.trace.append({"round": -1, "phase": "naive", "F": f_naive})

    proposer = cfg.proposer()
    for r in range(cfg.rounds):
        round_dir = os.path.join(cfg.out_dir, f"round_{r}")
        os.makedirs(round_dir, exist_ok=True)
        # dream
        if cfg.export_dreams or cfg.neural_command:
            dreams_path = os.path.join(round_dir, "dreams.jsonl")
            run_dream_phase(
                state.library,
                scenes_list,
                cfg.n_d,
                _phase_rng(cfg.seed, r, "dream"),
                dreams_path,
            )
        # wake
        wake_phase(scenes, state, proposer, objcfg, cfg, r)
        f_wake = objective(state.library, state.programs, scenes, objcfg)
        state.trace.append({"round": r, "phase": "wake", "F": f_wake})
        # proposal
        cands = propose(
            state.programs,
            state.library,
            objcfg,
            cfg.proposal_iters,
            _phase_rng(cfg.seed, r, "proposal"),
        )
        with open(os.path.join(round_dir, "candidates.json"), "w") as f:
            json.dump(candidates_report(cands), f, indent=2)
        # integration
        res = integrate(
            state.library,
            state.programs,
            scenes,
            state.caches,
            cands,
            objcfg,
            n_top=cfg.n_a,
            budget=cfg.budget(),
        )
        state.library = res.library
        state.programs = res.programs
        state.trace.append({"round": r, "phase": "integration", "F": res.f_value})
        save_library(state.library, os.path.join(round_dir, "library.json"))
        save_programs(state.programs, os.path.join(round_dir, "programs.json"))
        with open(os.path.join(round_dir, "integration_log.json"), "w") as f:
            json.dump([e.as_dict() for e in res.log], f, indent=2)
        _write_trace(state.trace, cfg.out_dir)

    if hasattr(proposer, "close"):
        proposer.close()
    save_library(state.library, os.path.join(cfg.out_dir, "library.json"))
    save_programs(state.programs, os.path.join(cfg.out_dir, "programs.json"))
    _write_trace(state.trace, cfg.out_dir)
    return {
        "out_dir": cfg.out_dir,
        "library": os.path.join(cfg.out_dir, "library.json"),
        "programs": os.path.join(cfg.out_dir, "programs.json"),
        "f_trace": os.path.join(cfg.out_dir, "f_trace.json"),
        "f_naive": f_naive,
        "f_final": state.trace[-1]["F"],
        "abstractions": sorted(state.library.abstractions),
    }


def _write_trace(trace: list[dict], out_dir: str) -> None:
    with open(os.path.join(out_dir, "f_trace.json"), "w") as f:
        json.dump(trace, f, indent=2)


def mean_abstraction_uses(programs: dict[str, Expr], lib: Library) -> float:
    if not programs:
        return 0.0
    total = 0
    for p in programs.values():
        total += sum(1 for n in p.walk() if n.op in lib.abstractions)
    return total / len(programs)


def phi(
    library_path: str,
    corpus_path: str,
    cfg: PipelineConfig,
) -> tuple[dict[str, Expr], float, float]:
    """Post-hoc inference: wake with a frozen library, then refactor."""
    lib = load_library(library_path, standard_library())
    scenes_list = load_corpus(corpus_path)
    scenes = {s.id: s for s in scenes_list}
    objcfg = cfg.objective_config()
    proposer = cfg.proposer()
    programs: dict[str, Expr] = {}
    for sid in sorted(scenes):
        seed = _scene_seed(cfg.seed, "phi", sid)
        p = wake_solve(scenes[sid], lib, proposer, objcfg, rng_seed=seed)
        p2, _ = refactor(p, lib, objcfg, cfg.budget())
        programs[sid] = p2
    if hasattr(proposer, "close"):
        proposer.close()
    f = objective(lib, programs, scenes, objcfg)
    return programs, f, mean_abstraction_uses(programs, lib)


def gen_data(n: int, seed: int, out_path: str, latents_path: str | None = None) -> None:
    scenes, latents = gen_synthetic_corpus(n, seed)
    save_corpus(scenes, out_path)
    if latents_path:
        save_latents(latents, latents_path)
