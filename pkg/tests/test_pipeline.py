import json
import os

import pytest

from rectabs.cli import main
from rectabs.dsl import load_corpus, load_library, load_programs
from rectabs.objective import objective
from rectabs.pipeline import (
    PipelineConfig,
    gen_data,
    load_config_file,
    make_config,
    mean_abstraction_uses,
    phi,
    run,
)
from rectabs.rewrites import standard_library


@pytest.fixture(scope="module")
def small_corpus(tmp_path_factory):
    path = tmp_path_factory.mktemp("data") / "corpus.jsonl"
    gen_data(10, 5, str(path))
    return str(path)


@pytest.fixture(scope="module")
def small_run(small_corpus, tmp_path_factory):
    out = tmp_path_factory.mktemp("run")
    cfg = PipelineConfig(
        corpus=small_corpus,
        out_dir=str(out),
        rounds=1,
        n_a=4,
        proposal_iters=150,
        seed=3,
    )
    summary = run(cfg)
    return cfg, summary


def test_run_writes_artifacts(small_run):
    cfg, summary = small_run
    for key in ("library", "programs", "f_trace"):
        assert os.path.exists(summary[key])
    assert summary["f_final"] <= summary["f_naive"]


def test_trace_matches_recomputation(small_run):
    cfg, summary = small_run
    lib = load_library(summary["library"], standard_library())
    programs = load_programs(summary["programs"], lib)
    scenes = {s.id: s for s in load_corpus(cfg.corpus)}
    f = objective(lib, programs, scenes, cfg.objective_config())
    trace = json.load(open(summary["f_trace"]))
    assert abs(trace[-1]["F"] - f) <= 1e-6


def test_trace_monotone_nonincreasing(small_run):
    _, summary = small_run
    trace = [t["F"] for t in json.load(open(summary["f_trace"]))]
    assert all(a >= b - 1e-9 for a, b in zip(trace, trace[1:]))


def test_rounds_zero_emits_naive_baseline(small_corpus, tmp_path):
    cfg = PipelineConfig(corpus=small_corpus, out_dir=str(tmp_path / "r0"), rounds=0, seed=1)
    summary = run(cfg)
    trace = json.load(open(summary["f_trace"]))
    assert len(trace) == 1 and trace[0]["phase"] == "naive"
    assert summary["f_final"] == summary["f_naive"]
    assert summary["abstractions"] == []


def test_rerun_same_seed_identical_artifacts(small_corpus, tmp_path):
    outs = []
    for name in ("a", "b"):
        cfg = PipelineConfig(
            corpus=small_corpus,
            out_dir=str(tmp_path / name),
            rounds=1,
            n_a=3,
            proposal_iters=80,
            seed=9,
        )
        run(cfg)
        outs.append(
            (
                open(tmp_path / name / "library.json").read(),
                open(tmp_path / name / "programs.json").read(),
                open(tmp_path / name / "f_trace.json").read(),
            )
        )
    assert outs[0] == outs[1]


def test_phi_with_base_library_matches_wake_baseline(small_corpus, tmp_path):
    from rectabs.dsl import save_library
    from rectabs.wake import naive_program

    lib_path = tmp_path / "empty_lib.json"
    save_library(standard_library(), str(lib_path))
    cfg = PipelineConfig(corpus=small_corpus, seed=3)
    programs, f, uses = phi(str(lib_path), small_corpus, cfg)
    assert uses == 0.0
    scenes = {s.id: s for s in load_corpus(small_corpus)}
    naive = {sid: naive_program(s) for sid, s in scenes.items()}
    assert f <= objective(standard_library(), naive, scenes, cfg.objective_config())


def test_phi_uses_discovered_library(small_run, small_corpus):
    cfg, summary = small_run
    if not summary["abstractions"]:
        pytest.skip("no abstraction accepted on the tiny corpus")
    programs, f, uses = phi(summary["library"], small_corpus, cfg)
    assert uses > 0.0


def test_config_file_roundtrip(tmp_path):
    path = tmp_path / "cfg"
    path.write_text("rounds = 2\nseed = 5\nlambda_err = 12.5\nexport_dreams = true\n# comment\n")
    values = load_config_file(str(path))
    cfg = make_config(values, seed=7)  # cli override wins
    assert cfg.rounds == 2
    assert cfg.seed == 7
    assert cfg.lambda_err == 12.5
    assert cfg.export_dreams is True


def test_config_rejects_unknown_key(tmp_path):
    with pytest.raises(ValueError):
        make_config({"frobnicate": "1"})


def test_cli_gen_data_and_render(tmp_path):
    corpus = tmp_path / "c.jsonl"
    assert main(["gen-data", "--n", "3", "--seed", "1", "--out", str(corpus)]) == 0
    svg = tmp_path / "scene.svg"
    assert main(["render", "--corpus", str(corpus), "--index", "1", "--out", str(svg)]) == 0
    text = svg.read_text()
    scenes = load_corpus(str(corpus))
    assert text.count("<rect") == len(scenes[1].prims)
    svg2 = tmp_path / "expr.svg"
    assert main(["render", "--expr", "Union(Rect(0.5,0.5),Move(Rect(0.2,0.2),0.4,0.4))", "--out", str(svg2)]) == 0
    assert svg2.read_text().count("<rect") == 2


def test_cli_refactor_command(capsys):
    assert main(["refactor", "--expr", "Move(Rect(0.3,0.2),0.0,0.0)"]) == 0
    out = capsys.readouterr().out.strip().splitlines()[0]
    assert out == "Rect(0.3,0.2)"


def test_cli_exit_codes(tmp_path):
    bad = tmp_path / "bad.jsonl"
    bad.write_text("not json\n")
    assert main(["run", "--corpus", str(bad), "--out", str(tmp_path / "o")]) == 3
    assert main(["refactor", "--expr", "Union(Rect(1,1)"]) == 3


def test_multiworker_wake_matches_serial(small_corpus, tmp_path):
    outs = []
    for name, workers in (("w1", 1), ("w2", 2)):
        cfg = PipelineConfig(
            corpus=small_corpus,
            out_dir=str(tmp_path / name),
            rounds=1,
            n_a=2,
            proposal_iters=60,
            seed=4,
            workers=workers,
        )
        run(cfg)
        outs.append(
            (
                open(tmp_path / name / "library.json").read(),
                open(tmp_path / name / "programs.json").read(),
            )
        )
    assert outs[0] == outs[1]


def test_config_env_var(small_corpus, tmp_path, monkeypatch, capsys):
    cfg_path = tmp_path / "cfg"
    cfg_path.write_text("refactor_rounds = 2\n")
    monkeypatch.setenv("RECTABS_CONFIG", str(cfg_path))
    assert main(["refactor", "--expr", "Move(Rect(0.3,0.2),0.0,0.0)"]) == 0
    out = capsys.readouterr().out.strip().splitlines()[0]
    assert out == "Rect(0.3,0.2)"


def test_cli_report(small_run, capsys):
    cfg, summary = small_run
    assert main(["report", "--run-dir", cfg.out_dir]) == 0
    out = capsys.readouterr().out
    assert "F trace" in out and "compression" in out


def test_mean_abstraction_uses(small_run):
    cfg, summary = small_run
    lib = load_library(summary["library"], standard_library())
    programs = load_programs(summary["programs"], lib)
    uses = mean_abstraction_uses(programs, lib)
    assert uses >= 0.0
