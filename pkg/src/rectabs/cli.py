"""Command-line interface.

Exit codes: 0 success, 2 usage or configuration error, 3 data error,
1 any other failure.
"""

from __future__ import annotations

import argparse
import json
import os
import random
import sys

from . import pipeline
from .dsl import DslError, load_corpus, load_library, load_programs, parse, save_programs, to_text
from .objective import objective
from .proposal import candidates_report, propose
from .egraph import refactor
from .render import render_expr, render_prims
from .rewrites import standard_library
from .wake import naive_program


def _add_config_args(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", help="flat key=value config file (or $RECTABS_CONFIG)")
    p.add_argument("--seed", type=int)
    p.add_argument("--workers", type=int)
    for key in (
        "rounds", "n_a", "n_d", "proposal_iters", "wake_max_candidates",
        "refactor_rounds", "refactor_nodes",
    ):
        p.add_argument(f"--{key.replace('_', '-')}", type=int, dest=key)
    for key in (
        "wake_time_budget", "refactor_seconds", "lambda_float", "lambda_shapefn",
        "lambda_floatfn", "lambda_categorical", "lambda_err", "max_prim_error",
    ):
        p.add_argument(f"--{key.replace('_', '-')}", type=float, dest=key)
    p.add_argument("--neural-command", dest="neural_command")
    p.add_argument("--export-dreams", action="store_const", const=True, dest="export_dreams")


def _config_from_args(args, **extra) -> pipeline.PipelineConfig:
    file_values = {}
    path = args.config or os.environ.get(pipeline.CONFIG_ENV_VAR)
    if path:
        file_values = pipeline.load_config_file(path)
    keys = (
        "seed", "workers", "rounds", "n_a", "n_d", "proposal_iters",
        "wake_max_candidates", "refactor_rounds", "refactor_nodes",
        "wake_time_budget", "refactor_seconds", "lambda_float", "lambda_shapefn",
        "lambda_floatfn", "lambda_categorical", "lambda_err", "max_prim_error",
        "neural_command", "export_dreams",
    )
    overrides = {k: getattr(args, k, None) for k in keys}
    overrides.update(extra)
    return pipeline.make_config(file_values, **overrides)


def main(argv: list[str] | None = None) -> int:
    ap = argparse.ArgumentParser(prog="rectabs")
    sub = ap.add_subparsers(dest="cmd", required=True)

    p = sub.add_parser("gen-data", help="generate a synthetic corpus")
    p.add_argument("--n", type=int, required=True)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True)
    p.add_argument("--latents")

    p = sub.add_parser("run", help="run discovery rounds")
    p.add_argument("--corpus", required=True)
    p.add_argument("--out", required=True)
    _add_config_args(p)

    p = sub.add_parser("wake", help="infer programs with a frozen library")
    p.add_argument("--corpus", required=True)
    p.add_argument("--library")
    p.add_argument("--out", required=True)
    _add_config_args(p)

    p = sub.add_parser("propose", help="mine candidate abstractions")
    p.add_argument("--corpus", required=True)
    p.add_argument("--programs", required=True)
    p.add_argument("--library")
    p.add_argument("--iters", type=int, default=2000)
    p.add_argument("--out", required=True)
    _add_config_args(p)

    p = sub.add_parser("refactor", help="refactor one expression")
    p.add_argument("--library")
    p.add_argument("--expr", required=True)
    _add_config_args(p)

    p = sub.add_parser("phi", help="post-hoc inference on a corpus")
    p.add_argument("--library", required=True)
    p.add_argument("--corpus", required=True)
    p.add_argument("--out")
    _add_config_args(p)

    p = sub.add_parser("render", help="render a scene or expression to SVG")
    p.add_argument("--out", required=True)
    p.add_argument("--expr")
    p.add_argument("--library")
    p.add_argument("--corpus")
    p.add_argument("--index", type=int, default=0)

    p = sub.add_parser("bench-rewrites", help="conditional vs naive rewrite benchmark")
    p.add_argument("--params", default="8,16,32")
    p.add_argument("--timeout", type=float, default=60.0)
    p.add_argument("--out")

    p = sub.add_parser("report", help="summarize a finished run directory")
    p.add_argument("--run-dir", required=True)

    args = ap.parse_args(argv)
    try:
        return _dispatch(args)
    except (ValueError,) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except DslError as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return 3
    except OSError as exc:
        print(f"i/o error: {exc}", file=sys.stderr)
        return 1


def _load_lib(path: str | None):
    base = standard_library()
    return load_library(path, base) if path else base


def _dispatch(args) -> int:
    if args.cmd == "gen-data":
        pipeline.gen_data(args.n, args.seed, args.out, args.latents)
        print(f"wrote {args.n} scenes to {args.out}")
        return 0

    if args.cmd == "run":
        cfg = _config_from_args(args, corpus=args.corpus, out_dir=args.out)
        summary = pipeline.run(cfg)
        print(json.dumps(summary, indent=2))
        return 0

    if args.cmd == "wake":
        cfg = _config_from_args(args, corpus=args.corpus)
        objcfg = cfg.objective_config()
        lib = _load_lib(args.library)
        scenes = {s.id: s for s in load_corpus(args.corpus)}
        proposer = cfg.proposer()
        programs = {}
        from .wake import wake_solve

        for sid in sorted(scenes):
            programs[sid] = wake_solve(scenes[sid], lib, proposer, objcfg)
        save_programs(programs, args.out)
        print(f"F = {objective(lib, programs, scenes, objcfg):.4f}")
        return 0

    if args.cmd == "propose":
        cfg = _config_from_args(args, corpus=args.corpus)
        objcfg = cfg.objective_config()
        lib = _load_lib(args.library)
        programs = load_programs(args.programs, lib)
        cands = propose(programs, lib, objcfg, args.iters, random.Random(cfg.seed))
        with open(args.out, "w") as f:
            json.dump(candidates_report(cands), f, indent=2)
        print(f"{len(cands)} candidates -> {args.out}")
        return 0

    if args.cmd == "refactor":
        cfg = _config_from_args(args)
        lib = _load_lib(args.library)
        expr = parse(args.expr, lib)
        out, stats = refactor(expr, lib, cfg.objective_config(), cfg.budget())
        print(to_text(out))
        print(json.dumps(stats.as_dict()), file=sys.stderr)
        return 0

    if args.cmd == "phi":
        cfg = _config_from_args(args, corpus=args.corpus)
        programs, f, uses = pipeline.phi(args.library, args.corpus, cfg)
        print(f"F = {f:.4f}  mean abstraction uses = {uses:.2f}")
        if args.out:
            save_programs(programs, args.out)
        return 0

    if args.cmd == "render":
        lib = _load_lib(args.library)
        if args.expr:
            render_expr(parse(args.expr, lib), lib, args.out)
        elif args.corpus:
            scenes = load_corpus(args.corpus)
            render_prims(list(scenes[args.index].prims), args.out)
        else:
            raise ValueError("render needs --expr or --corpus")
        print(f"wrote {args.out}")
        return 0

    if args.cmd == "bench-rewrites":
        from .bench import bench_rewrites, format_table

        counts = tuple(int(s) for s in args.params.split(","))
        rows = bench_rewrites(counts, timeout=args.timeout)
        print(format_table(rows))
        if args.out:
            with open(args.out, "w") as f:
                json.dump(
                    [
                        {
                            "params": r.params,
                            "conditional_s": r.conditional_s,
                            "naive_s": r.naive_s,
                        }
                        for r in rows
                    ],
                    f,
                    indent=2,
                )
        return 0

    if args.cmd == "report":
        return _report(args.run_dir)

    raise ValueError(f"unknown command {args.cmd}")


def _report(run_dir: str) -> int:
    trace_path = os.path.join(run_dir, "f_trace.json")
    with open(trace_path) as f:
        trace = json.load(f)
    print("F trace:")
    for rec in trace:
        print(f"  round {rec['round']:>2}  {rec['phase']:<12} F = {rec['F']:.4f}")
    lib_path = os.path.join(run_dir, "library.json")
    if os.path.exists(lib_path):
        lib = load_library(lib_path, standard_library())
        print(f"abstractions ({len(lib.abstractions)}):")
        for name in sorted(lib.abstractions):
            a = lib.abstractions[name]
            print(f"  {name}({','.join(a.params)}) = {to_text(a.body)}  [w={a.omega}]")
    first, last = trace[0]["F"], trace[-1]["F"]
    print(f"compression: {first:.2f} -> {last:.2f} ({100 * (1 - last / first):.1f}%)")
    return 0


if __name__ == "__main__":
    sys.exit(main())
