"""Line-delimited JSON expression server.

One request per line on stdin: {"prims": [[w,h,x,y], ...], "batch": N,
"time_budget": seconds}.  One response per line on stdout: {"exprs":
["SymRef(...)", ...]} or {"error": "..."}.  Malformed generations are
dropped server-side; protocol violations produce an error line and the
process stays alive.
"""

from __future__ import annotations

import json
import sys
import time

from .grammar import MAX_PRIMS, sequence_is_complete, tokens_to_text
from .model import sample_expressions
from .tokens import TokenMapping, Vocab, decode_target, encode_scene
from .train import load_checkpoint

SAMPLE_CHUNK = 64


def answer(model, vocab: Vocab, op_table, request: dict) -> dict:
    prims = request.get("prims")
    if not isinstance(prims, list) or not prims:
        return {"error": "request needs a non-empty 'prims' list"}
    if len(prims) > MAX_PRIMS:
        return {"error": f"scene exceeds conditioning capacity ({MAX_PRIMS} primitives)"}
    batch = int(request.get("batch", 256))
    if batch <= 0:
        return {"exprs": []}
    budget = float(request.get("time_budget", 1.0))
    mapping = TokenMapping.for_scene(prims)
    try:
        cond = encode_scene(prims, mapping, vocab)
    except ValueError as exc:
        return {"error": str(exc)}
    deadline = time.monotonic() + budget
    texts: list[str] = []
    remaining = batch
    while remaining > 0 and time.monotonic() < deadline:
        chunk = min(SAMPLE_CHUNK, remaining)
        remaining -= chunk
        for ids in sample_expressions(
            model, vocab, op_table, cond, len(mapping.bins), chunk
        ):
            tokens = decode_target(ids, mapping, vocab)
            if not sequence_is_complete(tokens, op_table):
                continue
            texts.append(tokens_to_text(tokens, op_table))
    return {"exprs": texts}


def serve(checkpoint: str, stdin=None, stdout=None) -> None:
    model, vocab, op_table = load_checkpoint(checkpoint)
    stdin = stdin or sys.stdin
    stdout = stdout or sys.stdout
    for line in stdin:
        line = line.strip()
        if not line:
            continue
        try:
            request = json.loads(line)
            resp = answer(model, vocab, op_table, request)
        except json.JSONDecodeError:
            resp = {"error": "request is not valid JSON"}
        except Exception as exc:  # stay alive on any request failure
            resp = {"error": f"internal: {exc}"}
        stdout.write(json.dumps(resp) + "\n")
        stdout.flush()
