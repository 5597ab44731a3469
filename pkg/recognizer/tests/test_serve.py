import io
import json
import random
import subprocess
import sys

import pytest

from recognizer.serve import answer, serve
from recognizer.train import load_checkpoint, train

from test_training import _write_dreams


@pytest.fixture(scope="module")
def checkpoint(tmp_path_factory):
    root = tmp_path_factory.mktemp("serve")
    dreams = root / "dreams.jsonl"
    _write_dreams(dreams, n=400, seed=7)
    ckpt = root / "ckpt.pt"
    train(str(dreams), None, str(ckpt), max_epochs=40, seed=0, log=lambda *_: None)
    return str(ckpt)


@pytest.fixture(scope="module")
def served(checkpoint):
    model, vocab, op_table = load_checkpoint(checkpoint)
    return model, vocab, op_table


def test_batch_zero_empty_response(served):
    model, vocab, op_table = served
    resp = answer(model, vocab, op_table, {"prims": [[0.2, 0.2, 0.0, 0.0]], "batch": 0})
    assert resp == {"exprs": []}


def test_too_many_prims_is_error(served):
    model, vocab, op_table = served
    prims = [[0.1, 0.1, -0.8 + 0.1 * i, 0.0] for i in range(17)]
    resp = answer(model, vocab, op_table, {"prims": prims, "batch": 8})
    assert "error" in resp and "16" in resp["error"]


def test_responses_always_parse(served):
    model, vocab, op_table = served
    rng = random.Random(0)
    prims = [[0.3, 0.5, 0.25, -0.1], [0.3, 0.5, -0.25, -0.1]]
    resp = answer(model, vocab, op_table, {"prims": prims, "batch": 64, "time_budget": 5.0})
    assert resp["exprs"]
    # host-side grammar must accept every served expression
    from rectabs.dsl import parse

    for text in resp["exprs"]:
        parse(text)


def test_protocol_violation_keeps_process_alive(checkpoint):
    stdin = io.StringIO('{"bad": 1}\nnot json\n{"prims": [[0.2,0.2,0.0,0.0]], "batch": 2}\n')
    stdout = io.StringIO()
    serve(checkpoint, stdin=stdin, stdout=stdout)
    lines = [json.loads(l) for l in stdout.getvalue().splitlines()]
    assert len(lines) == 3
    assert "error" in lines[0]
    assert "error" in lines[1]
    assert "exprs" in lines[2]


def test_subprocess_roundtrip(checkpoint):
    proc = subprocess.Popen(
        [sys.executable, "-m", "recognizer.cli", "serve", "--ckpt", checkpoint],
        stdin=subprocess.PIPE,
        stdout=subprocess.PIPE,
        text=True,
        bufsize=1,
    )
    try:
        req = {"prims": [[0.25, 0.5, 0.3, -0.2], [0.25, 0.5, -0.3, -0.2]], "batch": 16}
        proc.stdin.write(json.dumps(req) + "\n")
        proc.stdin.flush()
        resp = json.loads(proc.stdout.readline())
        assert "exprs" in resp
    finally:
        proc.stdin.close()
        proc.wait(timeout=20)
