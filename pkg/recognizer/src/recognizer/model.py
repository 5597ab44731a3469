"""Transformer decoder conditioned on tokenized scene primitives.

The conditioning block (up to 16 primitives x 4 parameter tokens) and the
autoregressive target share one causally-masked decoder stack; loss and
sampling only ever touch target positions.  Sampling is constrained to
type-legal tokens, so every completed sequence parses.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import torch
import torch.nn as nn
import torch.nn.functional as F

from .grammar import AXES, AXIS, FLOAT, INT, SHAPE
from .tokens import Vocab

COND_LEN = 64  # 16 prims x 4 params
TARGET_LEN = 33  # target tokens + eos


@dataclass
class ModelConfig:
    vocab_size: int
    d_model: int = 128
    heads: int = 8
    blocks: int = 2
    dropout: float = 0.5
    cond_len: int = COND_LEN
    target_len: int = TARGET_LEN


class Recognizer(nn.Module):
    def __init__(self, cfg: ModelConfig):
        super().__init__()
        self.cfg = cfg
        total = cfg.cond_len + 1 + cfg.target_len  # cond, bos, target
        self.tok = nn.Embedding(cfg.vocab_size, cfg.d_model)
        self.pos = nn.Embedding(total, cfg.d_model)
        layer = nn.TransformerEncoderLayer(
            d_model=cfg.d_model,
            nhead=cfg.heads,
            dim_feedforward=4 * cfg.d_model,
            dropout=cfg.dropout,
            batch_first=True,
            norm_first=True,
        )
        self.blocks = nn.TransformerEncoder(
            layer, num_layers=cfg.blocks, enable_nested_tensor=False
        )
        self.out = nn.Linear(cfg.d_model, cfg.vocab_size)
        mask = torch.triu(torch.ones(total, total, dtype=torch.bool), diagonal=1)
        self.register_buffer("causal", mask)

    def forward(self, ids: torch.Tensor, pad_id: int) -> torch.Tensor:
        b, t = ids.shape
        x = self.tok(ids) + self.pos(torch.arange(t, device=ids.device))[None]
        pad_mask = ids == pad_id
        h = self.blocks(x, mask=self.causal[:t, :t], src_key_padding_mask=pad_mask)
        return self.out(h)


def loss_on_batch(model: Recognizer, ids: torch.Tensor, target_start: int, pad_id: int) -> torch.Tensor:
    """Cross-entropy over target positions only (teacher forcing)."""
    logits = model(ids[:, :-1], pad_id)
    labels = ids[:, 1:].clone()
    labels[:, : target_start - 1] = pad_id  # conditioning positions carry no loss
    return F.cross_entropy(
        logits.reshape(-1, logits.shape[-1]),
        labels.reshape(-1),
        ignore_index=pad_id,
    )


class TypeConstrainedSampler:
    """Arity-driven prefix generation restricted to type-legal tokens."""

    def __init__(self, vocab: Vocab, op_table: dict[str, tuple[str, ...]], n_bins: int):
        self.vocab = vocab
        self.op_table = op_table
        self.legal = {
            SHAPE: [vocab.index[o] for o in op_table],
            AXIS: [vocab.index[a] for a in AXES],
            INT: [vocab.index[str(i)] for i in (1, 2, 3, 4)],
            FLOAT: [vocab.val_id(i) for i in range(n_bins)],
        }
        self.slots_of = {vocab.index[o]: list(reversed(slots)) for o, slots in op_table.items()}

    def legal_ids(self, expected: str) -> list[int]:
        return self.legal[expected]


@torch.no_grad()
def sample_expressions(
    model: Recognizer,
    vocab: Vocab,
    op_table: dict[str, tuple[str, ...]],
    cond_ids: list[int],
    n_bins: int,
    batch: int,
    temperature: float = 1.0,
    max_len: int = TARGET_LEN,
) -> list[list[int]]:
    """Sample a batch of complete target token-id sequences."""
    model.eval()
    device = next(model.parameters()).device
    sampler = TypeConstrainedSampler(vocab, op_table, n_bins)
    cond_len = model.cfg.cond_len
    prefix = torch.full((batch, cond_len + 1), vocab.pad_id, dtype=torch.long)
    prefix[:, :len(cond_ids)] = torch.tensor(cond_ids, dtype=torch.long)
    prefix[:, cond_len] = vocab.bos_id
    prefix = prefix.to(device)
    stacks: list[list[str]] = [[SHAPE] for _ in range(batch)]
    done = [False] * batch
    outputs: list[list[int]] = [[] for _ in range(batch)]
    ids = prefix
    for _ in range(max_len):
        if all(done):
            break
        logits = model(ids, vocab.pad_id)[:, -1, :] / max(temperature, 1e-6)
        next_ids = torch.full((batch,), vocab.pad_id, dtype=torch.long)
        for b in range(batch):
            if done[b]:
                continue
            expected = stacks[b].pop()
            legal = sampler.legal_ids(expected)
            lg = logits[b, legal]
            probs = F.softmax(lg, dim=-1)
            choice = legal[int(torch.multinomial(probs, 1).item())]
            outputs[b].append(choice)
            next_ids[b] = choice
            slots = sampler.slots_of.get(choice)
            if slots:
                stacks[b].extend(slots)
            if not stacks[b]:
                done[b] = True
        ids = torch.cat([ids, next_ids.to(device)[:, None]], dim=1)
    return [o for o, d in zip(outputs, done) if d]
