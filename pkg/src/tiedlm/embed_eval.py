"""Embedding quality and similarity evaluation.

Covers cosine similarity against human word-pair judgments (Spearman rho)
and rank correlation between the pairwise distance structures of two
embeddings. Also owns the plain-text embedding interchange format shared by
the skip-gram and LM exporters: first line "C H", then one
"token v1 ... vH" row per word.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np


class InsufficientDataError(ValueError):
    """Fewer usable word pairs than the evaluation needs."""


@dataclass
class WordEmbedding:
    """A token list with one embedding row per token."""

    tokens: list[str]
    vectors: np.ndarray
    token_to_row: dict[str, int]

    @classmethod
    def from_rows(cls, tokens, vectors) -> "WordEmbedding":
        vectors = np.asarray(vectors, dtype=np.float64)
        tokens = list(tokens)
        if vectors.ndim != 2 or vectors.shape[0] != len(tokens):
            raise ValueError(
                f"need one row per token: {len(tokens)} tokens vs matrix {vectors.shape}"
            )
        return cls(tokens, vectors, {t: i for i, t in enumerate(tokens)})

    def __contains__(self, token: str) -> bool:
        return token in self.token_to_row

    def vector(self, token: str) -> np.ndarray:
        return self.vectors[self.token_to_row[token]]

    def save(self, path) -> None:
        with open(path, "w", encoding="utf-8") as fh:
            fh.write(f"{self.vectors.shape[0]} {self.vectors.shape[1]}\n")
            for tok, row in zip(self.tokens, self.vectors):
                fh.write(tok + " " + " ".join(repr(float(v)) for v in row) + "\n")

    @classmethod
    def load(cls, path) -> "WordEmbedding":
        with open(path, encoding="utf-8") as fh:
            header = fh.readline().split()
            if len(header) != 2:
                raise ValueError(f"bad embedding header in {path}: expected 'C H'")
            n, dim = int(header[0]), int(header[1])
            tokens = []
            vectors = np.empty((n, dim), dtype=np.float64)
            for i in range(n):
                parts = fh.readline().split()
                if len(parts) != dim + 1:
                    raise ValueError(f"bad embedding row {i} in {path}")
                tokens.append(parts[0])
                vectors[i] = [float(x) for x in parts[1:]]
        return cls.from_rows(tokens, vectors)


def cosine(u, v) -> float:
    """Cosine similarity u.v / (|u||v|), in [-1, 1]."""
    u = np.asarray(u, dtype=np.float64)
    v = np.asarray(v, dtype=np.float64)
    nu = np.linalg.norm(u)
    nv = np.linalg.norm(v)
    if nu == 0.0 or nv == 0.0:
        raise ValueError("cosine similarity is undefined for a zero vector")
    return float(np.clip(np.dot(u, v) / (nu * nv), -1.0, 1.0))


def _average_ranks(xs: np.ndarray) -> np.ndarray:
    """Ranks starting at 1; tied values receive the mean of their positions."""
    order = np.argsort(xs, kind="stable")
    ranks = np.empty(len(xs), dtype=np.float64)
    i = 0
    n = len(xs)
    while i < n:
        j = i
        while j + 1 < n and xs[order[j + 1]] == xs[order[i]]:
            j += 1
        ranks[order[i : j + 1]] = 0.5 * (i + j) + 1.0
        i = j + 1
    return ranks


def spearman(xs, ys) -> float:
    """Spearman's rank correlation: Pearson correlation of (average-tie) ranks."""
    xs = np.asarray(xs, dtype=np.float64)
    ys = np.asarray(ys, dtype=np.float64)
    if xs.shape != ys.shape or xs.ndim != 1:
        raise ValueError(f"need two equal-length 1-D score lists, got {xs.shape} and {ys.shape}")
    if len(xs) < 2:
        raise ValueError("rank correlation needs at least 2 observations")
    rx = _average_ranks(xs)
    ry = _average_ranks(ys)
    dx = rx - rx.mean()
    dy = ry - ry.mean()
    sx = float(np.dot(dx, dx))
    sy = float(np.dot(dy, dy))
    if sx == 0.0 or sy == 0.0:
        raise ValueError("rank correlation is undefined for a constant score list")
    return float(np.dot(dx, dy) / np.sqrt(sx * sy))


@dataclass
class WordPair:
    word_a: str
    word_b: str
    score: float


def load_word_pairs(path) -> list[WordPair]:
    """Read a word-pair dataset: "word-a<TAB>word-b<TAB>score" per line.

    Any whitespace separates fields; a header line (non-numeric score column)
    is detected and skipped. Duplicate unordered pairs are rejected.
    """
    pairs: list[WordPair] = []
    seen: set[frozenset] = set()
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh):
            parts = line.split()
            if not parts:
                continue
            if len(parts) < 3:
                raise ValueError(f"{path}:{lineno + 1}: expected 'word-a word-b score'")
            try:
                score = float(parts[2])
            except ValueError:
                if lineno == 0:
                    continue  # header
                raise ValueError(f"{path}:{lineno + 1}: non-numeric score {parts[2]!r}") from None
            if not np.isfinite(score):
                raise ValueError(f"{path}:{lineno + 1}: non-finite score")
            key = frozenset((parts[0], parts[1]))
            if key in seen:
                raise ValueError(f"{path}:{lineno + 1}: duplicate pair {parts[0]}/{parts[1]}")
            seen.add(key)
            pairs.append(WordPair(parts[0], parts[1], score))
    return pairs


@dataclass
class EvalReport:
    """Benchmark outcome: rho over in-vocabulary pairs plus coverage counts."""

    rho: float
    pairs_used: int
    pairs_skipped_oov: int


def eval_benchmark(embedding: WordEmbedding, pairs: list[WordPair]) -> EvalReport:
    """Correlate embedding cosine similarities with human scores over a pair set.

    Pairs with either word out of vocabulary are skipped and counted.
    """
    sims: list[float] = []
    scores: list[float] = []
    skipped = 0
    for pair in pairs:
        if pair.word_a not in embedding or pair.word_b not in embedding:
            skipped += 1
            continue
        sims.append(cosine(embedding.vector(pair.word_a), embedding.vector(pair.word_b)))
        scores.append(pair.score)
    if len(sims) < 2:
        raise InsufficientDataError(
            f"only {len(sims)} of {len(pairs)} pairs usable; need at least 2"
        )
    return EvalReport(rho=spearman(sims, scores), pairs_used=len(sims), pairs_skipped_oov=skipped)


def _pairwise_cosine_distances(embedding: WordEmbedding, words: list[str]) -> np.ndarray:
    rows = np.stack([embedding.vector(w) for w in words])
    norms = np.linalg.norm(rows, axis=1)
    if np.any(norms == 0.0):
        raise ValueError("cosine distance is undefined for a zero vector")
    unit = rows / norms[:, None]
    sims = unit @ unit.T
    iu = np.triu_indices(len(words), k=1)
    return 1.0 - sims[iu]


def distance_correlation(emb_a: WordEmbedding, emb_b: WordEmbedding, words) -> float:
    """Spearman rho between the pairwise cosine-distance vectors of two embeddings.

    Distances are taken over all unordered pairs from ``words``, which must
    be in both vocabularies. Symmetric in its arguments; scale-invariant in
    each embedding.
    """
    words = sorted(set(words))
    if len(words) < 3:
        raise ValueError(f"need at least 3 words, got {len(words)}")
    for emb, name in ((emb_a, "first"), (emb_b, "second")):
        missing = [w for w in words if w not in emb]
        if missing:
            raise ValueError(f"words missing from {name} embedding: {missing[:10]}")
    da = _pairwise_cosine_distances(emb_a, words)
    db = _pairwise_cosine_distances(emb_b, words)
    return spearman(da, db)
