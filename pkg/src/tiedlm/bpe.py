"""Byte-pair-encoding subword learner/segmenter and vocabulary-overlap counts.

Learning operates on a word-frequency table, greedily merging the most
frequent adjacent symbol pair. Words are symbolized as their characters with
an end-of-word sentinel fused onto the final character, and segmenter output
marks non-final subwords with a continuation marker ("lo@@ west" style), so
desegmentation is a literal string replace. Words must not themselves
contain the marker or sentinel strings.
"""

from __future__ import annotations

from collections import Counter
from dataclasses import dataclass, field
from typing import Iterable, Mapping

MARKER = "@@"
EOW = "</w>"

_FORMAT_HEADER = "tiedlm-bpe v1 marker={marker} eow={eow}"


@dataclass
class MergeTable:
    """Ordered BPE merge operations; order is both learning and application priority."""

    merges: list[tuple[str, str]] = field(default_factory=list)
    marker: str = MARKER
    eow: str = EOW

    def __len__(self) -> int:
        return len(self.merges)


def _symbolize(word: str, eow: str) -> tuple[str, ...]:
    if not word:
        return ()
    chars = list(word)
    chars[-1] += eow
    return tuple(chars)


def _pair_counts(table: Mapping[tuple[str, ...], int]) -> Counter:
    counts: Counter = Counter()
    for symbols, freq in table.items():
        for pair in zip(symbols, symbols[1:]):
            counts[pair] += freq
    return counts


def _merge_word(symbols: tuple[str, ...], pair: tuple[str, str]) -> tuple[str, ...]:
    left, right = pair
    out = []
    i = 0
    n = len(symbols)
    while i < n:
        if i < n - 1 and symbols[i] == left and symbols[i + 1] == right:
            out.append(left + right)
            i += 2
        else:
            out.append(symbols[i])
            i += 1
    return tuple(out)


def learn_bpe(word_freqs: Mapping[str, int], num_merges: int) -> MergeTable:
    """Learn a merge table by greedy most-frequent-pair merging.

    Stops early once no pair occurs at least twice. Ties on frequency break
    lexicographically on (left, right), making learning deterministic.
    """
    if num_merges < 0:
        raise ValueError(f"num_merges must be >= 0, got {num_merges}")
    if not word_freqs:
        raise ValueError("cannot learn BPE from an empty word-frequency table")
    table: dict[tuple[str, ...], int] = {}
    for word, freq in word_freqs.items():
        symbols = _symbolize(word, EOW)
        if symbols:
            table[symbols] = table.get(symbols, 0) + int(freq)
    merges: list[tuple[str, str]] = []
    for _ in range(num_merges):
        counts = _pair_counts(table)
        if not counts:
            break
        best = min(counts.items(), key=lambda kv: (-kv[1], kv[0]))
        pair, freq = best
        if freq < 2:
            break
        merges.append(pair)
        table = {_merge_word(symbols, pair): f for symbols, f in table.items()}
    return MergeTable(merges=merges)


def apply_bpe(word: str, table: MergeTable) -> list[str]:
    """Segment one word into subwords, applying merges in table order to fixpoint.

    Non-final subwords carry the continuation marker; concatenating the
    pieces with markers stripped reproduces the word exactly.
    """
    symbols = _symbolize(word, table.eow)
    if not symbols:
        return []
    changed = True
    while changed:
        changed = False
        for pair in table.merges:
            merged = _merge_word(symbols, pair)
            if merged != symbols:
                symbols = merged
                changed = True
    pieces = [s + table.marker for s in symbols[:-1]]
    pieces.append(symbols[-1].removesuffix(table.eow))
    return pieces


def strip_marker(piece: str, table: MergeTable | None = None) -> str:
    marker = table.marker if table is not None else MARKER
    return piece.removesuffix(marker)


def join_subwords(pieces: Iterable[str], table: MergeTable | None = None) -> str:
    """Inverse of apply_bpe: strip continuation markers and concatenate."""
    return "".join(strip_marker(p, table) for p in pieces)


def segment_text(line: str, table: MergeTable) -> str:
    """Apply BPE to every whitespace token of a line of text."""
    out: list[str] = []
    for word in line.split():
        out.extend(apply_bpe(word, table))
    return " ".join(out)


def subword_vocab(word_freqs: Mapping[str, int], table: MergeTable) -> set[str]:
    """All subword types produced by segmenting the given words."""
    vocab: set[str] = set()
    for word in word_freqs:
        vocab.update(apply_bpe(word, table))
    return vocab


@dataclass
class OverlapReport:
    """Partition of a source/target subword vocabulary union into three counts."""

    only_source: int
    only_target: int
    shared: int


def vocab_overlap(source_vocab: Iterable[str], target_vocab: Iterable[str]) -> OverlapReport:
    """Exact partition counts of two subword vocabularies (same marker convention)."""
    src = set(source_vocab)
    tgt = set(target_vocab)
    return OverlapReport(
        only_source=len(src - tgt),
        only_target=len(tgt - src),
        shared=len(src & tgt),
    )


def save_merges(table: MergeTable, path) -> None:
    """Write a merge table: header with marker convention and version, one merge per line."""
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(_FORMAT_HEADER.format(marker=table.marker, eow=table.eow) + "\n")
        for left, right in table.merges:
            fh.write(f"{left} {right}\n")


def load_merges(path) -> MergeTable:
    with open(path, encoding="utf-8") as fh:
        header = fh.readline().rstrip("\n")
        parts = header.split()
        if len(parts) != 4 or parts[0] != "tiedlm-bpe" or parts[1] != "v1":
            raise ValueError(f"unrecognized merge-table header: {header!r}")
        marker = parts[2].removeprefix("marker=")
        eow = parts[3].removeprefix("eow=")
        merges = []
        seen = set()
        for line in fh:
            line = line.rstrip("\n")
            if not line:
                continue
            left, sep, right = line.partition(" ")
            if not sep:
                raise ValueError(f"malformed merge line: {line!r}")
            pair = (left, right)
            if pair in seen:
                raise ValueError(f"duplicate merge pair: {pair}")
            seen.add(pair)
            merges.append(pair)
    return MergeTable(merges=merges, marker=marker, eow=eow)
