"""Secondary acceptance: retrieval probes and wake-parity with the host.

Heavyweight: exports dreams through the host CLI, trains a checkpoint, and
runs the host wake phase against the served recognizer.  Expect roughly
half an hour on a desktop CPU.  Run with ``pytest tests/test_acceptance.py
-v -s``.
"""

import json
import math
import re
import subprocess
import sys
from contextlib import contextmanager

import pytest

from recognizer.serve import answer
from recognizer.train import load_checkpoint, train

CORPUS_N, CORPUS_SEED = 200, 11
N_D = 1000
MAX_EPOCHS = 80  # within the <=300 training contract; sized for a desktop CPU
PARITY_FACTOR = 1.05
PROBE_COUNT = 20
PROBE_BATCH = 256


@contextmanager
def criterion(name):
    try:
        yield
    except BaseException:
        print(f"[ACCEPTANCE] {name}: FAIL", flush=True)
        raise
    print(f"[ACCEPTANCE] {name}: PASS", flush=True)


def _host(*args) -> str:
    out = subprocess.run(
        [sys.executable, "-m", "rectabs.cli", *args],
        check=True,
        capture_output=True,
        text=True,
    )
    return out.stdout


@pytest.fixture(scope="module")
def trained(tmp_path_factory):
    root = tmp_path_factory.mktemp("parity")
    corpus = root / "corpus.jsonl"
    _host("gen-data", "--n", str(CORPUS_N), "--seed", str(CORPUS_SEED), "--out", str(corpus))
    run_dir = root / "dreams_run"
    _host(
        "run",
        "--corpus", str(corpus),
        "--out", str(run_dir),
        "--rounds", "1",
        "--n-a", "0",
        "--proposal-iters", "1",
        "--n-d", str(N_D),
        "--export-dreams",
    )
    dreams = run_dir / "round_0" / "dreams.jsonl"
    ckpt = root / "ckpt.pt"
    summary = train(
        str(dreams), None, str(ckpt), max_epochs=MAX_EPOCHS, seed=0,
        log=lambda msg: print(f"[train] {msg}", flush=True),
    )
    return {
        "corpus": str(corpus),
        "dreams": str(dreams),
        "ckpt": str(ckpt),
        "train_summary": summary,
        "root": root,
    }


def _normalize(text: str) -> str:
    return re.sub(r"-?\d+\.\d+(e-?\d+)?", lambda m: f"{float(m.group(0)):.4f}", text)


def test_probe_retrieval(trained):
    with criterion("trained dreams retrieved from their own scenes above chance"):
        model, vocab, op_table = load_checkpoint(trained["ckpt"])
        probes = []
        with open(trained["dreams"]) as f:
            for line in f:
                rec = json.loads(line)
                if rec["offset"] == [0.0, 0.0] and rec["prim_span"] == [0, len(rec["scene"])]:
                    probes.append(rec)
                if len(probes) == PROBE_COUNT:
                    break
        assert len(probes) == PROBE_COUNT
        hits = 0
        total_hits = 0
        chance_bound = 0.0
        for rec in probes:
            resp = answer(
                model, vocab, op_table,
                {"prims": rec["scene"], "batch": PROBE_BATCH, "time_budget": 30.0},
            )
            want = _normalize(rec["target_text"])
            got = [_normalize(t) for t in resp["exprs"]]
            n = got.count(want)
            total_hits += n
            hits += 1 if n else 0
            # generous chance bound: uniform over type-legal tokens at the
            # most-constrained branching (shape ops) for each target token
            chance_bound += (1.0 / max(5, len(op_table))) ** len(rec["target_tokens"])
        freq = total_hits / (PROBE_COUNT * PROBE_BATCH)
        assert freq > chance_bound / PROBE_COUNT, (freq, chance_bound)
        assert hits >= 12, f"retrieved only {hits}/{PROBE_COUNT} probes"


def test_wake_parity_with_search_proposer(trained):
    with criterion("neural wake objective within 105% of search-based wake"):
        corpus = trained["corpus"]
        root = trained["root"]
        out1 = _host("wake", "--corpus", corpus, "--out", str(root / "p_search.json"))
        f_search = float(re.search(r"F = ([0-9.]+)", out1).group(1))
        serve_cmd = f"{sys.executable} -m recognizer.cli serve --ckpt {trained['ckpt']}"
        out2 = _host(
            "wake",
            "--corpus", corpus,
            "--out", str(root / "p_neural.json"),
            "--neural-command", serve_cmd,
        )
        f_neural = float(re.search(r"F = ([0-9.]+)", out2).group(1))
        print(f"[parity] search F = {f_search:.4f}, neural F = {f_neural:.4f}", flush=True)
        assert f_neural <= PARITY_FACTOR * f_search, (f_neural, f_search)
