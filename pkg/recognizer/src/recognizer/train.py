"""Supervised training with early stopping on held-out dreams."""

from __future__ import annotations

import json
import time

import torch

from .data import EncodedDreams, load_dreams
from .grammar import load_op_table
from .model import ModelConfig, Recognizer, loss_on_batch
from .tokens import Vocab

BATCH = 64
LR = 1e-4
MAX_EPOCHS = 300
VAL_SHARE = 0.1
PATIENCE = 10  # epochs without a material validation improvement
MIN_DELTA = 1e-3


def train(
    dreams_path: str,
    library_path: str | None,
    out_path: str,
    max_epochs: int = MAX_EPOCHS,
    seed: int = 0,
    limit: int | None = None,
    log=print,
) -> dict:
    torch.manual_seed(seed)
    op_table = load_op_table(library_path)
    vocab = Vocab(list(op_table))
    data = load_dreams(dreams_path, vocab, op_table, limit=limit)
    n = data.rows.shape[0]
    n_val = max(1, int(n * VAL_SHARE))
    perm = torch.randperm(n, generator=torch.Generator().manual_seed(seed))
    val_rows = data.rows[perm[:n_val]]
    train_rows = data.rows[perm[n_val:]]
    model = Recognizer(ModelConfig(vocab_size=len(vocab)))
    opt = torch.optim.Adam(model.parameters(), lr=LR)

    def eval_loss(rows: torch.Tensor) -> float:
        model.eval()
        total, count = 0.0, 0
        with torch.no_grad():
            for i in range(0, rows.shape[0], 256):
                chunk = rows[i : i + 256]
                total += float(loss_on_batch(model, chunk, data.target_start, vocab.pad_id)) * len(chunk)
                count += len(chunk)
        return total / max(1, count)

    best_val = float("inf")
    best_state = None
    bad_epochs = 0
    trace = []
    t0 = time.monotonic()
    for epoch in range(max_epochs):
        model.train()
        order = torch.randperm(train_rows.shape[0])
        for i in range(0, len(order), BATCH):
            batch = train_rows[order[i : i + BATCH]]
            opt.zero_grad()
            loss = loss_on_batch(model, batch, data.target_start, vocab.pad_id)
            loss.backward()
            opt.step()
        val = eval_loss(val_rows)
        trace.append({"epoch": epoch, "val_loss": val})
        if val < best_val - MIN_DELTA:
            best_val = val
            best_state = {k: v.clone() for k, v in model.state_dict().items()}
            bad_epochs = 0
        else:
            bad_epochs += 1
        log(f"epoch {epoch}: val {val:.4f} (best {best_val:.4f})")
        if bad_epochs >= PATIENCE:
            log(f"early stop at epoch {epoch}")
            break
    if best_state is not None:
        model.load_state_dict(best_state)
    torch.save(
        {
            "state_dict": model.state_dict(),
            "ops": list(op_table),
            "op_table": {k: list(v) for k, v in op_table.items()},
            "val_loss": best_val,
            "trace": trace,
            "skipped_records": data.skipped,
            "seconds": time.monotonic() - t0,
        },
        out_path,
    )
    return {"val_loss": best_val, "epochs": len(trace), "skipped": data.skipped}


def load_checkpoint(path: str) -> tuple[Recognizer, Vocab, dict]:
    ckpt = torch.load(path, map_location="cpu", weights_only=False)
    op_table = {k: tuple(v) for k, v in ckpt["op_table"].items()}
    vocab = Vocab(list(op_table))
    model = Recognizer(ModelConfig(vocab_size=len(vocab)))
    model.load_state_dict(ckpt["state_dict"])
    model.eval()
    return model, vocab, op_table
