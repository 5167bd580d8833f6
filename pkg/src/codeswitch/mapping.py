"""Unsupervised mapping of two embedding spaces into one shared space.

The recipe: normalize both spaces (unit rows, mean-center, unit rows again),
seed with identical-surface-string pairs from the shared vocabulary, solve
the orthogonal Procrustes problem on the seeds, then alternate pair
re-induction by mutual-best retrieval and Procrustes refits until the induced
pair set stops changing. Retrieval uses CSLS by default to counter hubness;
plain cosine is available behind a flag.

Conventions: embeddings are row vectors, the map is applied as x @ w.T, and
w is d x d orthogonal (w.T @ w = I within 1e-4 Frobenius).
"""

from __future__ import annotations

import os
import warnings
from dataclasses import dataclass, field
from typing import Iterable

import numpy as np

from .corpus import ValidationError
from .embedding import EmbeddingMatrix
from .subword import Vocab

ORTHO_TOL = 1e-4


@dataclass(frozen=True, eq=False)
class OrthogonalMap:
    """Orthogonal d x d matrix mapping source rows into the target space."""

    w: np.ndarray

    def __post_init__(self):
        d = self.w.shape[0]
        if self.w.shape != (d, d):
            raise ValidationError("map must be square")
        err = np.linalg.norm(self.w.T @ self.w - np.eye(d))
        if err > ORTHO_TOL:
            raise ValidationError(f"map is not orthogonal: ||W'W - I||_F = {err:.2e}")

    def apply(self, emb: EmbeddingMatrix) -> EmbeddingMatrix:
        return EmbeddingMatrix(emb.vectors @ self.w.T, emb.vocab)


@dataclass(frozen=True)
class SeedPairs:
    """Training pairs (source id, target id); source ids are unique."""

    pairs: tuple[tuple[int, int], ...]

    def __post_init__(self):
        src = [s for s, _ in self.pairs]
        if len(set(src)) != len(src):
            raise ValidationError("duplicate source ids in seed pairs")

    def __len__(self) -> int:
        return len(self.pairs)

    def arrays(self) -> tuple[np.ndarray, np.ndarray]:
        if not self.pairs:
            return np.zeros(0, dtype=np.int64), np.zeros(0, dtype=np.int64)
        arr = np.asarray(self.pairs, dtype=np.int64)
        return arr[:, 0], arr[:, 1]


@dataclass
class SelfLearnReport:
    iterations: int = 0
    converged: bool = False
    n_pairs: int = 0
    mean_similarity: list = field(default_factory=list)


def normalize_embeddings(emb: EmbeddingMatrix) -> EmbeddingMatrix:
    """Unit-normalize rows, mean-center each dimension, unit-normalize again."""
    x = np.array(emb.vectors, dtype=np.float64)
    for step in ("unit", "center", "unit"):
        if step == "center":
            x = x - x.mean(axis=0, keepdims=True)
        else:
            norms = np.linalg.norm(x, axis=1)
            bad = np.nonzero(norms == 0.0)[0]
            if len(bad):
                raise ValidationError(
                    f"zero-norm embedding row for token {emb.vocab.token_of(int(bad[0]))!r}"
                )
            x = x / norms[:, None]
    return EmbeddingMatrix(x, emb.vocab)


def seed_pairs_identical(va: Vocab, vb: Vocab) -> SeedPairs:
    """Pair tokens whose surface strings are byte-identical in both vocabularies.

    Specials are excluded. With a shared vocabulary on both sides this
    degenerates to the identity pairing over the whole vocabulary.
    """
    ids_b = vb.id_of
    pairs = []
    for i, tok in enumerate(va.tokens):
        if i in va.special_ids:
            continue
        j = ids_b.get(tok)
        if j is not None and j not in vb.special_ids:
            pairs.append((i, j))
    if not pairs:
        raise ValidationError(
            "no identical tokens between the vocabularies; supply a seed-pair file"
        )
    return SeedPairs(tuple(pairs))


def procrustes(x: EmbeddingMatrix, y: EmbeddingMatrix, pairs: SeedPairs) -> OrthogonalMap:
    """Closed-form orthogonal map maximizing paired cosine similarity.

    W = U V' from the SVD of Yp' Xp over the paired rows; apply as x @ W.T.
    """
    if len(pairs) == 0:
        raise ValidationError("cannot fit a map on zero pairs")
    d = x.dim
    if len(pairs) < d:
        warnings.warn(f"only {len(pairs)} pairs for a {d}-dim map; fit may be degenerate")
    src, tgt = pairs.arrays()
    m = y.vectors[tgt].T @ x.vectors[src]
    u, _, vt = np.linalg.svd(m)
    return OrthogonalMap(u @ vt)


def _topk_mean(scores: np.ndarray, k: int) -> np.ndarray:
    """Row-wise mean of the k largest entries."""
    if k >= scores.shape[1]:
        raise ValidationError(f"neighborhood {k} >= vocabulary size {scores.shape[1]}")
    part = np.partition(scores, -k, axis=1)[:, -k:]
    return part.mean(axis=1)


def csls_scores(
    mapped_x: EmbeddingMatrix | np.ndarray,
    y: EmbeddingMatrix | np.ndarray,
    neighborhood: int = 10,
) -> np.ndarray:
    """CSLS(x, y) = 2 cos(x, y) - r_T(x) - r_S(y) over row-normalized matrices.

    r_T is the mean cosine of a mapped source vector to its `neighborhood`
    nearest target vectors; r_S is the symmetric term for a target vector
    against the mapped source space.
    """
    xv = mapped_x.vectors if isinstance(mapped_x, EmbeddingMatrix) else mapped_x
    yv = y.vectors if isinstance(y, EmbeddingMatrix) else y
    if neighborhood < 1:
        raise ValidationError("neighborhood must be >= 1")
    sims = xv @ yv.T
    r_tgt = _topk_mean(sims, neighborhood)
    r_src = _topk_mean(sims.T, neighborhood)
    return 2.0 * sims - r_tgt[:, None] - r_src[None, :]


def cosine_scores(
    mapped_x: EmbeddingMatrix | np.ndarray, y: EmbeddingMatrix | np.ndarray
) -> np.ndarray:
    xv = mapped_x.vectors if isinstance(mapped_x, EmbeddingMatrix) else mapped_x
    yv = y.vectors if isinstance(y, EmbeddingMatrix) else y
    return xv @ yv.T


def _induce_mutual_pairs(scores: np.ndarray, exclude_x, exclude_y) -> SeedPairs:
    """Mutual-best matches: i -> j is kept iff j's best source is i."""
    scores = scores.copy()
    if len(exclude_x):
        scores[np.asarray(exclude_x, dtype=np.int64), :] = -np.inf
    if len(exclude_y):
        scores[:, np.asarray(exclude_y, dtype=np.int64)] = -np.inf
    fwd = scores.argmax(axis=1)
    bwd = scores.argmax(axis=0)
    pairs = [
        (int(i), int(j))
        for i, j in enumerate(fwd)
        if np.isfinite(scores[i, j]) and bwd[j] == i
    ]
    return SeedPairs(tuple(pairs))


def self_learn(
    x: EmbeddingMatrix,
    y: EmbeddingMatrix,
    init: SeedPairs,
    max_iters: int = 50,
    tol: float = 1e-6,
    neighborhood: int = 10,
    metric: str = "csls",
) -> tuple[OrthogonalMap, SelfLearnReport]:
    """Alternate Procrustes fits and mutual-best pair re-induction.

    Inputs must be normalized. Stops when the induced pair set is unchanged,
    when mean pair similarity improves by less than tol, or after max_iters.
    Specials never participate in induced pairs. Deterministic: no random
    draws anywhere in the loop.
    """
    if len(init) == 0:
        raise ValidationError("self-learning needs a non-empty initial pair set")
    if metric not in ("csls", "cosine"):
        raise ValidationError(f"unknown retrieval metric {metric!r}")
    exclude_x = tuple(x.vocab.special_ids)
    exclude_y = tuple(y.vocab.special_ids)

    report = SelfLearnReport()
    pairs = init
    w = procrustes(x, y, pairs)
    if max_iters == 0:
        report.n_pairs = len(pairs)
        return w, report

    last_mean = -np.inf
    for it in range(1, max_iters + 1):
        report.iterations = it
        mapped = x.vectors @ w.w.T
        if metric == "csls":
            scores = csls_scores(mapped, y.vectors, neighborhood)
        else:
            scores = cosine_scores(mapped, y.vectors)
        induced = _induce_mutual_pairs(scores, exclude_x, exclude_y)
        if len(induced) == 0:
            warnings.warn("pair induction found no mutual matches; keeping previous pairs")
            break
        src, tgt = induced.arrays()
        mean_sim = float(np.einsum("ij,ij->i", mapped[src], y.vectors[tgt]).mean())
        report.mean_similarity.append(mean_sim)
        if set(induced.pairs) == set(pairs.pairs):
            report.converged = True
            pairs = induced
            break
        pairs = induced
        w = procrustes(x, y, pairs)
        if mean_sim - last_mean < tol and it > 1:
            report.converged = True
            break
        last_mean = mean_sim
    report.n_pairs = len(pairs)
    return w, report


def save_map(m: OrthogonalMap, path: str | os.PathLike) -> None:
    """Same text layout as embeddings: 'd d' header and one row per line."""
    d = m.w.shape[0]
    with open(path, "w", encoding="utf-8", newline="\n") as f:
        f.write(f"{d} {d}\n")
        for row in m.w:
            f.write(" ".join(f"{v:.12f}" for v in row) + "\n")


def load_map(path: str | os.PathLike) -> OrthogonalMap:
    with open(path, encoding="utf-8") as f:
        header = f.readline().split()
        if len(header) != 2 or header[0] != header[1]:
            raise ValidationError(f"{path}: malformed map header")
        d = int(header[0])
        rows = [[float(v) for v in line.split()] for line in f if line.strip()]
    w = np.asarray(rows)
    if w.shape != (d, d):
        raise ValidationError(f"{path}: expected {d}x{d} matrix, found {w.shape}")
    return OrthogonalMap(w)


def save_seed_pairs(pairs: SeedPairs, va: Vocab, vb: Vocab, path: str | os.PathLike) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as f:
        for s, t in pairs.pairs:
            f.write(f"{va.token_of(s)}\t{vb.token_of(t)}\n")


def load_seed_pairs(path: str | os.PathLike, va: Vocab, vb: Vocab) -> SeedPairs:
    pairs = []
    with open(path, encoding="utf-8") as f:
        for lineno, line in enumerate(f, 1):
            line = line.rstrip("\n")
            if not line:
                continue
            parts = line.split("\t")
            if len(parts) != 2:
                raise ValidationError(f"{path}:{lineno}: expected 'src<TAB>tgt'")
            s, t = va.id_of.get(parts[0]), vb.id_of.get(parts[1])
            if s is None or t is None:
                raise ValidationError(f"{path}:{lineno}: token not in vocabulary")
            pairs.append((s, t))
    return SeedPairs(tuple(pairs))


def restrict_to_tokens(emb: EmbeddingMatrix, keep: Iterable[str]) -> EmbeddingMatrix:
    """Sub-matrix over the kept tokens (plus specials), preserving id order.

    Mapping quality degrades when never-observed tokens (random rows)
    participate, so the pipeline restricts both spaces to tokens that
    actually occur before mapping and lexicon extraction.
    """
    sub = emb.vocab.subset(keep)
    rows = [emb.vocab.id_of[t] for t in sub.tokens]
    return EmbeddingMatrix(emb.vectors[rows], sub)
