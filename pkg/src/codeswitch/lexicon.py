"""Probabilistic translation lexicons: top-k neighbors with normalized scores.

For each source token the k highest-scoring target tokens in the shared
space become its translation candidates; their similarity scores, shifted to
be non-negative and renormalized, become the sampling probabilities.
Probabilities come from shift-and-normalize rather than softmax so no
temperature hyperparameter is introduced. Lexicons are directional.
"""

from __future__ import annotations

import os
from dataclasses import dataclass, field

import numpy as np

from .corpus import ValidationError
from .embedding import EmbeddingMatrix
from .mapping import cosine_scores, csls_scores
from .subword import Vocab

PROB_SUM_TOL = 1e-6
EPSILON = 1e-6


@dataclass(frozen=True, eq=False)
class TranslationLexicon:
    """source token id -> up to k (target token id, probability), summing to 1.

    Entry lists are sorted by descending probability, ties by ascending
    target id. Immutable after extraction; shared read access is safe.
    """

    entries: dict
    k: int
    direction_tag: str
    src_vocab: Vocab
    tgt_vocab: Vocab
    low_confidence: frozenset = field(default_factory=frozenset)

    def __post_init__(self):
        for src, cands in self.entries.items():
            if not cands or len(cands) > self.k:
                raise ValidationError(f"entry for {src} has {len(cands)} candidates, k={self.k}")
            total = 0.0
            prev = None
            for tgt, p in cands:
                if p <= 0.0:
                    raise ValidationError(f"non-positive probability for source {src}")
                if prev is not None and (p > prev[1] or (p == prev[1] and tgt < prev[0])):
                    raise ValidationError(f"entry for {src} is not sorted")
                total += p
                prev = (tgt, p)
            if abs(total - 1.0) > PROB_SUM_TOL:
                raise ValidationError(f"probabilities for {src} sum to {total}, not 1")

    def __len__(self) -> int:
        return len(self.entries)


def normalize_scores(sims) -> list[float]:
    """Shift by min(0, smallest score), add epsilon, divide by the sum.

    Monotone: a higher score never gets a lower probability.
    """
    sims = list(sims)
    if not sims:
        raise ValidationError("cannot normalize an empty score list")
    arr = np.asarray(sims, dtype=np.float64)
    if not np.isfinite(arr).all():
        raise ValidationError("scores must be finite")
    shifted = arr - min(0.0, float(arr.min())) + EPSILON
    return list(shifted / shifted.sum())


def extract_lexicon(
    mapped_x: EmbeddingMatrix,
    y: EmbeddingMatrix,
    k: int = 3,
    direction_tag: str = "",
    neighborhood: int = 10,
    metric: str = "csls",
) -> TranslationLexicon:
    """Top-k target neighbors per source token, with normalized probabilities.

    Inputs must be row-normalized and already in the shared space. Specials
    are excluded from both sides. Source tokens whose every candidate scored
    <= 0 before shifting are flagged low-confidence.
    """
    if k < 1:
        raise ValidationError(f"k must be >= 1, got {k}")
    n_specials = len(y.vocab.special_ids)
    n_targets = len(y.vocab) - n_specials
    if k > n_targets:
        raise ValidationError(f"k={k} exceeds the {n_targets} non-special target tokens")
    if metric == "csls":
        scores = csls_scores(mapped_x, y, neighborhood)
    elif metric == "cosine":
        scores = cosine_scores(mapped_x, y)
    else:
        raise ValidationError(f"unknown retrieval metric {metric!r}")
    scores = scores[:, :].copy()
    scores[:, list(y.vocab.special_ids)] = -np.inf

    entries: dict[int, tuple] = {}
    low_confidence = set()
    target_ids = np.arange(scores.shape[1])
    for src in range(len(mapped_x.vocab)):
        if src in mapped_x.vocab.special_ids:
            continue
        row = scores[src]
        # top k by score, ties toward the smaller target id
        order = np.lexsort((target_ids, -row))[:k]
        top_scores = row[order]
        if top_scores.max() <= 0.0:
            low_confidence.add(src)
        probs = normalize_scores(top_scores)
        ranked = sorted(zip(order, probs), key=lambda tp: (-tp[1], tp[0]))
        entries[src] = tuple((int(t), float(p)) for t, p in ranked)
    return TranslationLexicon(
        entries, k, direction_tag, mapped_x.vocab, y.vocab, frozenset(low_confidence)
    )


def save_lexicon(lex: TranslationLexicon, path: str | os.PathLike) -> None:
    """TSV rows 'src_token<TAB>tgt_token<TAB>prob', grouped by source token."""
    with open(path, "w", encoding="utf-8", newline="\n") as f:
        for src in sorted(lex.entries):
            for tgt, p in lex.entries[src]:
                f.write(f"{lex.src_vocab.token_of(src)}\t{lex.tgt_vocab.token_of(tgt)}\t{p:.8f}\n")


def load_lexicon(
    path: str | os.PathLike, src_vocab: Vocab, tgt_vocab: Vocab, direction_tag: str = ""
) -> TranslationLexicon:
    groups: dict[int, list] = {}
    k = 0
    with open(path, encoding="utf-8") as f:
        for lineno, line in enumerate(f, 1):
            line = line.rstrip("\n")
            if not line:
                continue
            parts = line.split("\t")
            if len(parts) != 3:
                raise ValidationError(
                    f"{path}:{lineno}: expected 3 tab-separated fields, got {len(parts)}"
                )
            src = src_vocab.id_of.get(parts[0])
            tgt = tgt_vocab.id_of.get(parts[1])
            if src is None or tgt is None:
                raise ValidationError(f"{path}:{lineno}: token not in vocabulary")
            try:
                p = float(parts[2])
            except ValueError as e:
                raise ValidationError(f"{path}:{lineno}: bad probability {parts[2]!r}") from e
            groups.setdefault(src, []).append((tgt, p))
            k = max(k, len(groups[src]))
    entries = {src: tuple(cands) for src, cands in groups.items()}
    return TranslationLexicon(entries, max(k, 1), direction_tag, src_vocab, tgt_vocab)


def rebind_lexicon(
    lex: TranslationLexicon, src_vocab: Vocab, tgt_vocab: Vocab
) -> TranslationLexicon:
    """Re-key entries into other vocabularies via token strings.

    Used to carry a lexicon extracted over frequency-restricted vocabularies
    back onto the full shared vocabulary for corruption.
    """
    entries = {}
    low = set()
    for src, cands in lex.entries.items():
        s = src_vocab.id_of.get(lex.src_vocab.token_of(src))
        if s is None:
            raise ValidationError(f"token {lex.src_vocab.token_of(src)!r} missing from new vocab")
        mapped = []
        for tgt, p in cands:
            t = tgt_vocab.id_of.get(lex.tgt_vocab.token_of(tgt))
            if t is None:
                raise ValidationError(
                    f"token {lex.tgt_vocab.token_of(tgt)!r} missing from new vocab"
                )
            mapped.append((t, p))
        mapped.sort(key=lambda tp: (-tp[1], tp[0]))
        entries[s] = tuple(mapped)
        if src in lex.low_confidence:
            low.add(s)
    return TranslationLexicon(
        entries, lex.k, lex.direction_tag, src_vocab, tgt_vocab, frozenset(low)
    )
