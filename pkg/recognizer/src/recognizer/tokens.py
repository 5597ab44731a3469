"""Vocabulary and per-scene tokenization.

Discrete language tokens get fixed vocabulary ids.  Real values are
tokenized scene-relative: the scene's parameter values are binned by
rounding to 2 decimal places and sorted; a value token denotes one bin and
decodes back to a representative *original* value from the scene, so a
decoded expression reproduces scene geometry exactly.  The bin list is
extended with pairwise differences of scene values (sorted by magnitude) so
that spans, such as the translation-symmetry distance, stay expressible.
"""

from __future__ import annotations

from dataclasses import dataclass, field

from .grammar import AXES, INT_RANGE, MAX_PRIMS, PRIM_PARAMS

PAD, BOS, EOS = "<pad>", "<bos>", "<eos>"
SCENE_BINS = MAX_PRIMS * PRIM_PARAMS  # conditioning capacity
MAX_BINS = 192  # scene bins plus derived difference bins
BIN_TOL = 0.005


def bin2(v: float) -> float:
    return round(float(v), 2)


@dataclass
class Vocab:
    ops: list[str]  # base + abstraction names, stable order

    def __post_init__(self):
        self.tokens = (
            [PAD, BOS, EOS]
            + list(self.ops)
            + list(AXES)
            + [str(i) for i in INT_RANGE]
            + [f"<v{i}>" for i in range(MAX_BINS)]
        )
        self.index = {t: i for i, t in enumerate(self.tokens)}
        self.pad_id = self.index[PAD]
        self.bos_id = self.index[BOS]
        self.eos_id = self.index[EOS]
        self.val_base = self.index["<v0>"]

    def __len__(self) -> int:
        return len(self.tokens)

    def val_id(self, bin_index: int) -> int:
        return self.val_base + bin_index


@dataclass
class TokenMapping:
    """Bijection between a scene's binned values and value-token indices."""

    bins: list[float]  # rounded bin keys, scene values first
    reps: list[float]  # representative original value per bin
    n_scene_bins: int = 0
    _lookup: dict = field(default_factory=dict, repr=False)

    @classmethod
    def for_scene(cls, prims: list[list[float]]) -> "TokenMapping":
        by_bin: dict[float, float] = {}
        for p in prims:
            for v in p:
                by_bin.setdefault(bin2(v), float(v))
        scene_bins = sorted(by_bin)
        reps = [by_bin[b] for b in scene_bins]
        # derived difference bins, nearest-zero first, capped
        diff_by_bin: dict[float, float] = {}
        for a in reps:
            for b in reps:
                if a == b:
                    continue
                d = a - b
                key = bin2(d)
                if key not in by_bin:
                    diff_by_bin.setdefault(key, d)
        extra = sorted(diff_by_bin, key=lambda k: (abs(k), k))
        extra = extra[: MAX_BINS - len(scene_bins)]
        bins = scene_bins + extra
        reps = reps + [diff_by_bin[k] for k in extra]
        m = cls(bins, reps, len(scene_bins))
        m._lookup = {b: i for i, b in enumerate(bins)}
        return m

    def encode_value(self, v: float) -> int | None:
        hit = self._lookup.get(bin2(float(v)))
        if hit is not None and abs(self.reps[hit] - float(v)) <= BIN_TOL:
            return hit
        return None

    def decode_value(self, bin_index: int) -> float:
        return self.reps[bin_index]


def encode_scene(prims: list[list[float]], mapping: TokenMapping, vocab: Vocab) -> list[int]:
    out = []
    for p in prims:
        for v in p:
            k = mapping.encode_value(v)
            if k is None or k >= mapping.n_scene_bins:
                raise ValueError("scene value outside its own binning")
            out.append(vocab.val_id(k))
    return out


def encode_target(
    tokens: list[str],
    mapping: TokenMapping,
    vocab: Vocab,
    op_table: dict[str, tuple[str, ...]],
) -> list[int] | None:
    """Token strings to ids; None when the target cannot be expressed over
    this scene's bins or uses unknown functions."""
    out = []
    for tok in tokens:
        if tok in op_table or tok in AXES:
            out.append(vocab.index[tok])
        elif "." in tok or "e" in tok or "E" in tok:
            k = mapping.encode_value(float(tok))
            if k is None:
                return None
            out.append(vocab.val_id(k))
        else:
            if tok not in vocab.index:
                return None
            out.append(vocab.index[tok])  # integer literal
    return out


def decode_target(
    ids: list[int],
    mapping: TokenMapping,
    vocab: Vocab,
) -> list[str]:
    out = []
    for i in ids:
        if i >= vocab.val_base:
            out.append(repr(mapping.decode_value(i - vocab.val_base)))
        else:
            out.append(vocab.tokens[i])
    return out
