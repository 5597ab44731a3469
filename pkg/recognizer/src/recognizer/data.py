"""Dream-record loading and encoding.

Each line of a dreams file is {"scene": [[w,h,x,y],...], "target_tokens":
[...], "offset": [dx,dy], ...}.  Records whose target was displaced by a
position-invariance offset are re-anchored so that the supervision stays
geometrically valid: Move-rooted targets absorb the offset into their
coordinates, any other target is wrapped in a Move.
"""

from __future__ import annotations

import json
from dataclasses import dataclass

import torch

from .grammar import BASE_OPS, MAX_PRIMS, MAX_TARGET_LEN
from .model import COND_LEN, TARGET_LEN
from .tokens import TokenMapping, Vocab, encode_scene, encode_target


def reanchor(tokens: list[str], offset: tuple[float, float]) -> list[str]:
    dx, dy = offset
    if dx == 0.0 and dy == 0.0:
        return tokens
    if tokens and tokens[0] == "Move":
        # Move's float args are the last two leaves of its prefix encoding
        out = list(tokens)
        out[-2] = repr(float(out[-2]) + dx)
        out[-1] = repr(float(out[-1]) + dy)
        return out
    return ["Move"] + tokens + [repr(dx), repr(dy)]


@dataclass
class EncodedDreams:
    rows: torch.Tensor  # (N, cond + 1 + target) token ids
    target_start: int
    skipped: int


def load_dreams(
    path: str,
    vocab: Vocab,
    op_table: dict[str, tuple[str, ...]],
    limit: int | None = None,
) -> EncodedDreams:
    rows: list[list[int]] = []
    skipped = 0
    width = COND_LEN + 1 + TARGET_LEN
    with open(path) as f:
        for line in f:
            line = line.strip()
            if not line:
                continue
            if limit is not None and len(rows) >= limit:
                break
            try:
                rec = json.loads(line)
                prims = rec["scene"]
                if not 1 <= len(prims) <= MAX_PRIMS:
                    raise ValueError("primitive count")
                tokens = reanchor(
                    list(rec["target_tokens"]), tuple(rec.get("offset", (0.0, 0.0)))
                )
                if len(tokens) > MAX_TARGET_LEN:
                    raise ValueError("target too long")
                mapping = TokenMapping.for_scene(prims)
                cond = encode_scene(prims, mapping, vocab)
                target = encode_target(tokens, mapping, vocab, op_table)
                if target is None:
                    raise ValueError("target outside scene bins")
            except (KeyError, ValueError, TypeError):
                skipped += 1
                continue
            row = [vocab.pad_id] * width
            row[: len(cond)] = cond
            row[COND_LEN] = vocab.bos_id
            body = target + [vocab.eos_id]
            row[COND_LEN + 1 : COND_LEN + 1 + len(body)] = body
            rows.append(row)
    if not rows:
        raise ValueError(f"no usable records in {path} ({skipped} skipped)")
    return EncodedDreams(torch.tensor(rows, dtype=torch.long), COND_LEN + 1, skipped)
