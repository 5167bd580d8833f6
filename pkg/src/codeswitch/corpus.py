"""Corpus ingestion, deterministic shuffling, and balanced two-language sampling.

Corpus files are plain text: UTF-8, LF-terminated, one sentence per line.
Whitespace is the pre-BPE word boundary; no language-specific tokenizers.
"""

from __future__ import annotations

import os
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np


class ValidationError(ValueError):
    """Raised when inputs violate a documented precondition."""


@dataclass(frozen=True)
class SentenceCorpus:
    """An ordered, immutable list of sentences with a language tag.

    Safe to share across workers: read-only after construction.
    """

    sentences: tuple[str, ...]
    language_tag: str
    dropped_blank: int = 0

    def __post_init__(self):
        for i, s in enumerate(self.sentences):
            if "\n" in s or "\r" in s:
                raise ValidationError(f"sentence {i} contains a newline")
            if not s.strip():
                raise ValidationError(f"sentence {i} is empty after trimming")

    def __len__(self) -> int:
        return len(self.sentences)

    def __iter__(self):
        return iter(self.sentences)


@dataclass(frozen=True)
class SampleReport:
    n_from_each: int
    with_replacement: dict = field(default_factory=dict)


def load_corpus(path: str | os.PathLike, language_tag: str | None = None) -> SentenceCorpus:
    """Read a one-sentence-per-line UTF-8 file; blank lines are dropped and counted.

    A pure function of the file bytes: re-reading gives an identical corpus.
    Invalid UTF-8 is rejected with the offending byte offset.
    """
    path = os.fspath(path)
    if language_tag is None:
        language_tag = os.path.basename(path).split(".")[0]
    with open(path, "rb") as f:
        raw = f.read()
    try:
        text = raw.decode("utf-8")
    except UnicodeDecodeError as e:
        raise ValidationError(f"{path}: invalid UTF-8 at byte offset {e.start}") from e
    sentences = []
    dropped = 0
    for line in text.split("\n"):
        line = line.strip()
        if line:
            sentences.append(line)
        else:
            dropped += 1
    # the final split element after a trailing LF is empty, not a blank line
    if text.endswith("\n") or text == "":
        dropped -= 1
    if not sentences:
        import warnings

        warnings.warn(f"{path}: empty corpus", stacklevel=2)
    return SentenceCorpus(tuple(sentences), language_tag, dropped_blank=max(dropped, 0))


def save_corpus(corpus: SentenceCorpus, path: str | os.PathLike) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as f:
        for s in corpus.sentences:
            f.write(s + "\n")


def sample_balanced(
    a: SentenceCorpus, b: SentenceCorpus, n: int, seed: int
) -> tuple[SentenceCorpus, SampleReport]:
    """Draw exactly n/2 sentences uniformly from each corpus, deterministically.

    Sampling is without replacement; a corpus with fewer than n/2 sentences is
    sampled with replacement and flagged in the report. The combined sample is
    shuffled with the same seed.
    """
    if n % 2 != 0:
        raise ValidationError(f"n must be even, got {n}")
    if len(a) == 0 or len(b) == 0:
        raise ValidationError("both corpora must be non-empty")
    half = n // 2
    rng = np.random.default_rng(seed)
    picked = []
    replacement = {}
    for corpus in (a, b):
        replace = len(corpus) < half
        replacement[corpus.language_tag] = replace
        idx = rng.choice(len(corpus), size=half, replace=replace)
        picked.extend(corpus.sentences[i] for i in idx)
    order = rng.permutation(n)
    mixed = tuple(picked[i] for i in order)
    tag = f"{a.language_tag}+{b.language_tag}"
    return SentenceCorpus(mixed, tag), SampleReport(half, replacement)


def drop_long_sentences(
    token_lists: Sequence[Sequence[int]], max_tokens: int = 175
) -> tuple[list, int]:
    """Drop (never truncate) tokenized sentences longer than max_tokens.

    Truncation would corrupt span-index arithmetic downstream, so long
    sentences are removed from training sets instead.
    """
    kept = [t for t in token_lists if len(t) <= max_tokens]
    return kept, len(token_lists) - len(kept)
