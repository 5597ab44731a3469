import json
import random

import pytest
import torch

from recognizer.data import load_dreams, reanchor
from recognizer.grammar import BASE_OPS
from recognizer.model import ModelConfig, Recognizer, loss_on_batch
from recognizer.tokens import Vocab
from recognizer.train import train


def _dream_record(rng, kind="move"):
    w = round(rng.uniform(0.1, 0.5), 2)
    h = round(rng.uniform(0.1, 0.5), 2)
    x = round(rng.uniform(-0.4, 0.4), 2)
    y = round(rng.uniform(-0.4, 0.4), 2)
    if kind == "move":
        scene = [[w, h, x, y]]
        tokens = ["Move", "Rect", repr(w), repr(h), repr(x), repr(y)]
    else:
        x = abs(x) + 0.05
        scene = [[w, h, x, y], [w, h, -x, y]]
        tokens = ["SymRef", "Move", "Rect", repr(w), repr(h), repr(x), repr(y), "AX"]
    return {
        "scene": scene,
        "target_tokens": tokens,
        "offset": [0.0, 0.0],
        "prim_span": [0, len(scene)],
        "source_fn": "Move" if kind == "move" else "SymRef",
    }


def _write_dreams(path, n=300, seed=0):
    rng = random.Random(seed)
    with open(path, "w") as f:
        for i in range(n):
            rec = _dream_record(rng, "move" if i % 2 else "symref")
            f.write(json.dumps(rec) + "\n")


def test_reanchor_move_rooted():
    tokens = ["Move", "Rect", "0.2", "0.3", "0.1", "-0.2"]
    out = reanchor(tokens, (0.05, 0.1))
    assert out[:4] == tokens[:4]
    assert float(out[4]) == pytest.approx(0.15)
    assert float(out[5]) == pytest.approx(-0.1)


def test_reanchor_wraps_other_roots():
    tokens = ["Rect", "0.2", "0.3"]
    out = reanchor(tokens, (0.05, 0.0))
    assert out[0] == "Move" and out[1:4] == tokens


def test_load_dreams_skips_malformed(tmp_path):
    path = tmp_path / "dreams.jsonl"
    rng = random.Random(1)
    good = [_dream_record(rng) for _ in range(5)]
    with open(path, "w") as f:
        for rec in good:
            f.write(json.dumps(rec) + "\n")
        f.write('{"scene": [[0.1,0.1,0,0]]}\n')  # missing target
        f.write("not json at all\n")
        bad = _dream_record(rng)
        bad["target_tokens"] = ["Frob", "0.1"]
        f.write(json.dumps(bad) + "\n")
    vocab = Vocab(list(BASE_OPS))
    with pytest.raises(ValueError):
        json.loads("not json at all")
    data = load_dreams(str(path), vocab, BASE_OPS)
    assert data.rows.shape[0] == 5
    assert data.skipped == 3


def test_training_beats_untrained_baseline(tmp_path):
    path = tmp_path / "dreams.jsonl"
    _write_dreams(path, n=240, seed=3)
    vocab = Vocab(list(BASE_OPS))
    data = load_dreams(str(path), vocab, BASE_OPS)
    torch.manual_seed(0)
    untrained = Recognizer(ModelConfig(vocab_size=len(vocab)))
    untrained.eval()
    with torch.no_grad():
        base = float(loss_on_batch(untrained, data.rows, data.target_start, vocab.pad_id))
    out = tmp_path / "ckpt.pt"
    summary = train(str(path), None, str(out), max_epochs=12, seed=0, log=lambda *_: None)
    assert summary["val_loss"] < base


def test_early_stopping_triggers(tmp_path):
    # a handful of distinct records repeated many times saturates quickly
    path = tmp_path / "dreams.jsonl"
    rng = random.Random(5)
    distinct = [_dream_record(rng, k) for k in ("move", "symref", "move")]
    with open(path, "w") as f:
        for i in range(120):
            f.write(json.dumps(distinct[i % len(distinct)]) + "\n")
    out = tmp_path / "ckpt.pt"
    summary = train(str(path), None, str(out), max_epochs=300, seed=0, log=lambda *_: None)
    assert summary["epochs"] < 300
