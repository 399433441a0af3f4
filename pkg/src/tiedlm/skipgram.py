"""Skip-gram word2vec with separate or tied input/output embeddings.

The full-softmax objective exists so the tied-update analysis can be tested
without sampling noise: the tied gradient of the shared matrix is the sum of
the updates its two roles would receive in an untied model. Negative
sampling is provided for scale, with a seeded unigram^0.75 noise sampler.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Iterator, Sequence

import numpy as np

from . import embed_eval
from .corpus import Vocabulary
from .numcore import softmax, xent_loss

FULL_SOFTMAX = "full-softmax"
NEGATIVE_SAMPLING = "negative-sampling"


@dataclass
class SkipGramConfig:
    vocab_size: int
    dim: int
    window: int = 5
    tied: bool = False
    objective: str = FULL_SOFTMAX
    negatives: int = 5
    noise_power: float = 0.75
    init_scale: float | None = None  # default 0.5/dim, the word2vec lineage init

    def __post_init__(self):
        if self.window < 1:
            raise ValueError(f"window must be >= 1, got {self.window}")
        if self.objective not in (FULL_SOFTMAX, NEGATIVE_SAMPLING):
            raise ValueError(f"unknown objective {self.objective!r}")


class SkipGramModel:
    """Input/output embedding pair, or one shared storage when tied."""

    def __init__(self, config: SkipGramConfig, seed: int = 0):
        self.config = config
        scale = config.init_scale if config.init_scale is not None else 0.5 / config.dim
        rng = np.random.default_rng(seed)
        shape = (config.vocab_size, config.dim)
        if config.tied:
            shared = rng.uniform(-scale, scale, shape)
            self._emb_in = shared
            self._emb_out = shared
        else:
            self._emb_in = rng.uniform(-scale, scale, shape)
            self._emb_out = rng.uniform(-scale, scale, shape)

    @property
    def tied(self) -> bool:
        return self.config.tied

    @property
    def emb_in(self) -> np.ndarray:
        return self._emb_in

    @property
    def emb_out(self) -> np.ndarray:
        return self._emb_out

    def clone_untied(self) -> "SkipGramModel":
        """Untied copy with both roles initialized from this model's matrices."""
        cfg = SkipGramConfig(**{**self.config.__dict__, "tied": False})
        clone = SkipGramModel(cfg)
        clone._emb_in = self._emb_in.copy()
        clone._emb_out = self._emb_out.copy()
        return clone

    def embedding(self, role: str) -> np.ndarray:
        if role == "input":
            return self._emb_in
        if role == "output":
            return self._emb_out
        if role == "tied":
            if not self.tied:
                raise ValueError("model is untied; ask for the 'input' or 'output' role")
            return self._emb_in
        raise ValueError(f"unknown embedding role {role!r}")


def pairs(ids: Sequence[int], window: int) -> Iterator[tuple[int, int]]:
    """Enumerate (center, context) pairs in deterministic order.

    For each position t, yields (ids[t], ids[t+j]) for j = -window..window,
    j != 0, clipped to the stream bounds.
    """
    if window < 1:
        raise ValueError(f"window must be >= 1, got {window}")
    n = len(ids)
    for t in range(n):
        for j in range(-window, window + 1):
            if j == 0:
                continue
            s = t + j
            if 0 <= s < n:
                yield int(ids[t]), int(ids[s])


def _full_softmax_grads(model: SkipGramModel, center: int, context: int):
    """Loss and per-role gradients for -log softmax(V u_center)[context]."""
    u = model.emb_in[center]
    logits = model.emb_out @ u
    p = softmax(logits)
    loss = xent_loss(p, context)
    dlogits = p.copy()
    dlogits[context] -= 1.0
    grad_center = model.emb_out.T @ dlogits  # sum_x p_x V_x - V_context
    grad_out = np.outer(dlogits, u)
    return loss, grad_center, grad_out


def step_full_softmax(model: SkipGramModel, center: int, context: int, lr: float) -> float:
    """One SGD step on the full-softmax objective for a single (center, context) pair.

    Tied models apply the sum of the input-role and output-role updates to
    the shared storage; both are evaluated at the pre-step parameters.
    """
    loss, grad_center, grad_out = _full_softmax_grads(model, center, context)
    if model.tied:
        grad = grad_out
        grad[center] += grad_center
        model.emb_in -= lr * grad
    else:
        model.emb_in[center] -= lr * grad_center
        model.emb_out -= lr * grad_out
    return loss


def _sigmoid(x):
    return 1.0 / (1.0 + np.exp(-x))


def sgns_loss(model: SkipGramModel, center: int, context: int, negatives: Sequence[int]) -> float:
    """Negative-sampling objective: -log s(u.v_ctx) - sum_neg log s(-u.v_neg)."""
    u = model.emb_in[center]
    loss = -np.log(max(_sigmoid(float(u @ model.emb_out[context])), 1e-12))
    for neg in negatives:
        loss += -np.log(max(_sigmoid(-float(u @ model.emb_out[neg])), 1e-12))
    return float(loss)


def step_negative_sampling(
    model: SkipGramModel, center: int, context: int, negatives: Sequence[int], lr: float
) -> float:
    """One SGD step on the negative-sampling objective.

    negatives must not contain the context word (the sampler enforces this).
    Tied models again receive the summed role updates, evaluated pre-step.
    """
    if context in set(int(n) for n in negatives):
        raise ValueError("the context word may not appear among the negatives")
    u = model.emb_in[center].copy()
    grad_u = np.zeros_like(u)
    rows: list[int] = [context]
    row_grads = []
    s = _sigmoid(float(u @ model.emb_out[context]))
    loss = -np.log(max(s, 1e-12))
    row_grads.append((s - 1.0) * u)
    grad_u += (s - 1.0) * model.emb_out[context]
    for neg in negatives:
        neg = int(neg)
        sn = _sigmoid(float(u @ model.emb_out[neg]))
        loss += -np.log(max(1.0 - sn, 1e-12))
        rows.append(neg)
        row_grads.append(sn * u)
        grad_u += sn * model.emb_out[neg]
    if model.tied:
        update = np.zeros_like(model.emb_in)
        for row, g in zip(rows, row_grads):
            update[row] += g
        update[center] += grad_u
        model.emb_in -= lr * update
    else:
        for row, g in zip(rows, row_grads):
            model.emb_out[row] -= lr * g
        model.emb_in[center] -= lr * grad_u
    return float(loss)


class NoiseSampler:
    """Seeded sampler over the unigram distribution raised to a power."""

    def __init__(self, counts: Sequence[int], power: float = 0.75, seed: int = 0):
        weights = np.asarray(counts, dtype=np.float64) ** power
        total = weights.sum()
        if total <= 0:
            raise ValueError("noise distribution needs at least one positive count")
        self.probs = weights / total
        self.rng = np.random.default_rng(seed)

    def sample(self, k: int, exclude: int) -> np.ndarray:
        """Draw k negatives, resampling any draw equal to ``exclude``."""
        out = np.empty(k, dtype=np.int64)
        filled = 0
        while filled < k:
            draws = self.rng.choice(len(self.probs), size=k - filled, p=self.probs)
            for d in draws:
                if int(d) != exclude:
                    out[filled] = d
                    filled += 1
        return out


def train(
    model: SkipGramModel,
    ids: Sequence[int],
    epochs: int,
    lr: float,
    counts: Sequence[int] | None = None,
    seed: int = 0,
) -> list[float]:
    """Train over the pair stream; returns the mean loss per epoch.

    Pair enumeration is deterministic; only negative sampling consumes
    randomness, from a generator seeded with ``seed``.
    """
    cfg = model.config
    sampler = None
    if cfg.objective == NEGATIVE_SAMPLING:
        if counts is None:
            raise ValueError("negative sampling needs unigram counts for the noise distribution")
        sampler = NoiseSampler(counts, cfg.noise_power, seed)
    losses = []
    for _ in range(epochs):
        total = 0.0
        n = 0
        for center, context in pairs(ids, cfg.window):
            if sampler is None:
                total += step_full_softmax(model, center, context, lr)
            else:
                negs = sampler.sample(cfg.negatives, exclude=context)
                total += step_negative_sampling(model, center, context, negs, lr)
            n += 1
        if n == 0:
            raise ValueError("the id stream produced no training pairs")
        losses.append(total / n)
    return losses


def to_word_embedding(model: SkipGramModel, vocab: Vocabulary, role: str) -> embed_eval.WordEmbedding:
    """Export one embedding role in the shared text-interchange form."""
    return embed_eval.WordEmbedding.from_rows(vocab.id_to_token, model.embedding(role).copy())
