"""Monolingual token embeddings: skip-gram with negative sampling, plus text IO.

Embeddings are trained over BPE tokens (not whitespace words) so that lexicon
lookups during corruption are token-for-token with no re-segmentation.
Training is sequential per-pair SGD on the SGNS objective (the word2vec
update rule) with a linearly decayed learning rate, a dynamic context window,
and a unigram^0.75 negative-sampling distribution. All randomness is drawn
from one seeded generator before the update loop runs, so single-process
training is bit-deterministic given the seed. Input vectors are what gets
exported.
"""

from __future__ import annotations

import os
from collections import Counter
from dataclasses import dataclass
from typing import Sequence

import numpy as np
from numba import njit

from .corpus import ValidationError
from .subword import Vocab


@dataclass(frozen=True, eq=False)
class EmbeddingMatrix:
    """V x d real matrix bound to a vocabulary; row i embeds token i."""

    vectors: np.ndarray
    vocab: Vocab

    def __post_init__(self):
        if self.vectors.ndim != 2:
            raise ValidationError("embedding matrix must be 2-D")
        if self.vectors.shape[0] != len(self.vocab):
            raise ValidationError(
                f"matrix has {self.vectors.shape[0]} rows but vocab has {len(self.vocab)} tokens"
            )
        if not np.isfinite(self.vectors).all():
            raise ValidationError("embedding matrix contains non-finite values")

    @property
    def dim(self) -> int:
        return self.vectors.shape[1]

    def __len__(self) -> int:
        return self.vectors.shape[0]


def token_counts(token_ids: Sequence[Sequence[int]], vocab_size: int) -> np.ndarray:
    counts = np.zeros(vocab_size, dtype=np.int64)
    flat = Counter()
    for sent in token_ids:
        flat.update(sent)
    for tid, c in flat.items():
        if tid < 0 or tid >= vocab_size:
            raise ValidationError(f"token id {tid} outside vocabulary of size {vocab_size}")
        counts[tid] = c
    return counts


@njit(cache=True)
def _sgns_update(w_in, w_out, centers, contexts, negatives, lr_start, lr_min, done, total):
    """Sequential SGNS updates over one epoch's (center, context) pairs."""
    d = w_in.shape[1]
    n_neg = negatives.shape[1]
    grad_h = np.empty(d)
    loss = 0.0
    for n in range(centers.shape[0]):
        lr = lr_start * (1.0 - (done + n) / total)
        if lr < lr_min:
            lr = lr_min
        c = centers[n]
        for j in range(d):
            grad_h[j] = 0.0
        for k in range(n_neg + 1):
            t = contexts[n] if k == 0 else negatives[n, k - 1]
            label = 1.0 if k == 0 else 0.0
            s = 0.0
            for j in range(d):
                s += w_in[c, j] * w_out[t, j]
            if s > 30.0:
                sig = 1.0
            elif s < -30.0:
                sig = 0.0
            else:
                sig = 1.0 / (1.0 + np.exp(-s))
            g = sig - label
            for j in range(d):
                grad_h[j] += g * w_out[t, j]
                w_out[t, j] -= lr * g * w_in[c, j]
            if k == 0:
                loss += -np.log(sig + 1e-10)
            else:
                loss += -np.log(1.0 - sig + 1e-10)
        for j in range(d):
            w_in[c, j] -= lr * grad_h[j]
    return loss


def train_sgns(
    token_ids: Sequence[Sequence[int]],
    vocab: Vocab,
    dim: int = 64,
    window: int = 5,
    negatives: int = 5,
    epochs: int = 5,
    lr: float = 0.025,
    seed: int = 0,
    loss_trace: list | None = None,
) -> EmbeddingMatrix:
    """Train skip-gram embeddings with negative sampling.

    The context window per center position is drawn uniformly from 1..window
    (word2vec's dynamic window). The learning rate decays linearly to
    1e-4 * lr over the whole run. epochs=0 returns the seeded initialization
    unchanged.

    When loss_trace is given, the mean per-pair SGNS loss of each epoch is
    appended to it.
    """
    if dim < 2:
        raise ValidationError(f"dim must be >= 2, got {dim}")
    V = len(vocab)
    counts = token_counts(token_ids, V)
    if counts.sum() == 0:
        raise ValidationError("corpus has no tokens")

    rng = np.random.default_rng(seed)
    w_in = (rng.random((V, dim)) - 0.5) / dim
    w_out = np.zeros((V, dim))
    if epochs == 0:
        return EmbeddingMatrix(w_in, vocab)

    # unigram^0.75 negative-sampling distribution over occurring tokens
    neg_weight = counts.astype(np.float64) ** 0.75
    neg_cum = np.cumsum(neg_weight / neg_weight.sum())

    sentences = [np.asarray(s, dtype=np.int64) for s in token_ids if len(s) > 1]
    # ~2*E[window span] = window+1 pairs per center token, ignoring edges
    total_pairs = max(1, sum(len(s) for s in sentences) * (window + 1) * epochs)
    min_lr = lr * 1e-4
    pairs_done = 0

    for epoch in range(epochs):
        centers_all: list[np.ndarray] = []
        contexts_all: list[np.ndarray] = []
        for sent in sentences:
            m = len(sent)
            spans = rng.integers(1, window + 1, size=m)
            for i in range(m):
                b = spans[i]
                lo, hi = max(0, i - b), min(m, i + b + 1)
                ctx = np.concatenate([sent[lo:i], sent[i + 1 : hi]])
                if len(ctx):
                    centers_all.append(np.full(len(ctx), sent[i]))
                    contexts_all.append(ctx)
        centers = np.concatenate(centers_all)
        contexts = np.concatenate(contexts_all)
        negs = np.searchsorted(neg_cum, rng.random((len(centers), negatives)))

        epoch_loss = _sgns_update(
            w_in, w_out, centers, contexts, negs, lr, min_lr, pairs_done, total_pairs
        )
        pairs_done += len(centers)
        if loss_trace is not None:
            loss_trace.append(epoch_loss / max(len(centers), 1))
        if not np.isfinite(w_in).all() or not np.isfinite(w_out).all():
            raise ValidationError(f"embeddings diverged at epoch {epoch}")

    return EmbeddingMatrix(w_in, vocab)


def save_embeddings(emb: EmbeddingMatrix, path: str | os.PathLike) -> None:
    """Text format: first line 'V d', then 'token v1 ... vd' per row."""
    with open(path, "w", encoding="utf-8", newline="\n") as f:
        f.write(f"{len(emb)} {emb.dim}\n")
        for i, token in enumerate(emb.vocab.tokens):
            values = " ".join(f"{x:.8f}" for x in emb.vectors[i])
            f.write(f"{token} {values}\n")


def load_embeddings(path: str | os.PathLike, vocab: Vocab) -> EmbeddingMatrix:
    with open(path, encoding="utf-8") as f:
        header = f.readline().split()
        if len(header) != 2:
            raise ValidationError(f"{path}: malformed header, expected 'V d'")
        v, d = int(header[0]), int(header[1])
        if v != len(vocab):
            raise ValidationError(f"{path}: header V={v} but vocab has {len(vocab)} tokens")
        vectors = np.zeros((v, d))
        row = -1
        for row, line in enumerate(f):
            parts = line.rstrip("\n").split(" ")
            if len(parts) != d + 1:
                raise ValidationError(
                    f"{path}: row {row} has dim {len(parts) - 1}, header says {d}"
                )
            token = parts[0]
            if row >= v or vocab.tokens[row] != token:
                raise ValidationError(f"{path}: row {row} token {token!r} does not match vocab")
            vectors[row] = np.array([float(x) for x in parts[1:]])
        if row + 1 != v:
            raise ValidationError(f"{path}: expected {v} rows, found {row + 1}")
    return EmbeddingMatrix(vectors, vocab)
