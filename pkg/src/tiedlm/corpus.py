"""Corpus ingestion, vocabulary construction, and truncated-BPTT batching.

Conventions follow the PTB lineage: text is whitespace-tokenized and assumed
pre-lowercased, ``<unk>`` in source text maps onto the unknown id, and in
line mode an ``<eos>`` token is appended to every sentence. Stream mode
(text8-style continuous text) inserts no sentence boundaries.
"""

from __future__ import annotations

from collections import Counter
from dataclasses import dataclass
from typing import Iterable, Iterator, Sequence

import numpy as np

UNK = "<unk>"
EOS = "<eos>"


@dataclass
class Vocabulary:
    """Dense token<->id bijection with per-token counts and unk/eos handling."""

    id_to_token: list[str]
    counts: list[int]
    token_to_id: dict[str, int]
    unk_id: int
    eos_id: int

    def __len__(self) -> int:
        return len(self.id_to_token)

    def __contains__(self, token: str) -> bool:
        return token in self.token_to_id

    def id_for(self, token: str) -> int:
        """Id of a token, falling back to the unknown id."""
        return self.token_to_id.get(token, self.unk_id)

    def token_for(self, idx: int) -> str:
        return self.id_to_token[idx]


def _ordered(counts: Counter) -> list[str]:
    # descending count, lexicographic tiebreak: deterministic id assignment
    return sorted(counts, key=lambda t: (-counts[t], t))


def build_vocab(
    tokens: Iterable[str],
    min_count: int | None = None,
    max_size: int | None = None,
) -> Vocabulary:
    """Build a vocabulary from a token stream under one retention policy.

    Exactly one of min_count / max_size may be given (min_count=1 if neither).
    Tokens failing the policy map to unk at encode time. The special tokens
    <unk> and <eos> are always present; if they occur in the stream their
    counts are the observed ones.
    """
    if min_count is not None and max_size is not None:
        raise ValueError("give min_count or max_size, not both")
    counts = Counter(tokens)
    if not counts:
        raise ValueError("cannot build a vocabulary from an empty token stream")
    counts.setdefault(UNK, 0)
    counts.setdefault(EOS, 0)
    if min_count is None and max_size is None:
        min_count = 1

    if min_count is not None:
        kept = {t for t, c in counts.items() if c >= min_count}
    else:
        if max_size < 2:
            raise ValueError(f"max_size must be at least 2 to hold <unk> and <eos>, got {max_size}")
        kept = set()
        for tok in _ordered(counts):
            if len(kept) >= max_size:
                break
            kept.add(tok)
        # the specials displace the lowest-ranked survivors if they missed the cut
        for special in (UNK, EOS):
            if special not in kept:
                ordinary = sorted(kept - {UNK, EOS}, key=lambda t: (-counts[t], t))
                kept.discard(ordinary[-1])
                kept.add(special)
    kept.update((UNK, EOS))

    id_to_token = sorted(kept, key=lambda t: (-counts[t], t))
    token_to_id = {t: i for i, t in enumerate(id_to_token)}
    return Vocabulary(
        id_to_token=id_to_token,
        counts=[counts[t] for t in id_to_token],
        token_to_id=token_to_id,
        unk_id=token_to_id[UNK],
        eos_id=token_to_id[EOS],
    )


def encode(tokens: Sequence[str], vocab: Vocabulary) -> np.ndarray:
    """Map tokens to ids (out-of-vocabulary -> unk). Length preserving."""
    return np.array([vocab.id_for(t) for t in tokens], dtype=np.int64)


def decode(ids: Sequence[int], vocab: Vocabulary) -> list[str]:
    return [vocab.token_for(int(i)) for i in ids]


def read_corpus(path, mode: str = "lines") -> list[str]:
    """Read a plain-text corpus into a token list.

    mode="lines": one sentence per line, an <eos> token appended to each.
    mode="stream": continuous text, no sentence boundaries inserted.
    """
    if mode not in ("lines", "stream"):
        raise ValueError(f"mode must be 'lines' or 'stream', got {mode!r}")
    tokens: list[str] = []
    with open(path, encoding="utf-8") as fh:
        for line in fh:
            parts = line.split()
            if not parts:
                continue
            tokens.extend(parts)
            if mode == "lines":
                tokens.append(EOS)
    return tokens


def save_vocab(vocab: Vocabulary, path) -> None:
    """Write one token per line ordered by id, with a tab-separated count column."""
    with open(path, "w", encoding="utf-8") as fh:
        for tok, cnt in zip(vocab.id_to_token, vocab.counts):
            fh.write(f"{tok}\t{cnt}\n")


def load_vocab(path) -> Vocabulary:
    id_to_token: list[str] = []
    counts: list[int] = []
    with open(path, encoding="utf-8") as fh:
        for line in fh:
            line = line.rstrip("\n")
            if not line:
                continue
            tok, _, cnt = line.partition("\t")
            id_to_token.append(tok)
            counts.append(int(cnt) if cnt else 0)
    token_to_id = {t: i for i, t in enumerate(id_to_token)}
    if UNK not in token_to_id or EOS not in token_to_id:
        raise ValueError(f"vocabulary file {path} is missing {UNK} or {EOS}")
    return Vocabulary(id_to_token, counts, token_to_id, token_to_id[UNK], token_to_id[EOS])


@dataclass
class BPTTBatch:
    """One truncated-BPTT step: targets[b, t] is the stream successor of inputs[b, t]."""

    inputs: np.ndarray
    targets: np.ndarray


def batchify(ids: Sequence[int], batch_size: int, seq_len: int) -> list[BPTTBatch]:
    """Split an id stream into BPTT batches of shape [batch_size, seq_len].

    The stream is cut into batch_size contiguous lanes; consecutive batches
    continue each lane, so recurrent state can be carried across them.
    Trailing tokens that do not fill a batch are dropped.
    """
    ids = np.asarray(ids, dtype=np.int64)
    if batch_size < 1 or seq_len < 1:
        raise ValueError(f"batch_size and seq_len must be >= 1, got {batch_size}, {seq_len}")
    if len(ids) < batch_size * (seq_len + 1):
        raise ValueError(
            f"stream of {len(ids)} tokens is too short for batch_size={batch_size}, "
            f"seq_len={seq_len} (need at least {batch_size * (seq_len + 1)})"
        )
    lane_len = len(ids) // batch_size
    lanes = ids[: lane_len * batch_size].reshape(batch_size, lane_len)
    batches = []
    for start in range(0, lane_len - seq_len, seq_len):
        stop = start + seq_len
        batches.append(BPTTBatch(inputs=lanes[:, start:stop].copy(), targets=lanes[:, start + 1 : stop + 1].copy()))
    return batches
