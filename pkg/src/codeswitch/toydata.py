"""Synthetic two-language corpus with exact ground truth.

Both languages render sentences from one underlying Markov process over
abstract word types, so their corpora are distributionally identical up to
sampling noise. Language A renders type j as one surface word, language B as
a different one (a bijective cipher), while a small set of anchor types
(years, city names) renders identically in both languages; anchors are what
identical-string seeding latches onto during embedding mapping. The
type-level bijection gives exact gold lexicons and exact reference
translations for free.
"""

from __future__ import annotations

import json
import os
from dataclasses import asdict, dataclass

import numpy as np

from .corpus import SentenceCorpus, ValidationError, save_corpus

ANCHOR_WORDS = (
    "1980", "1981", "1982", "1983", "1984", "1985", "1986", "1987",
    "1988", "1989", "1990", "1991", "1992", "1993", "1994", "1995",
    "london", "paris", "tokyo", "berlin", "madrid", "oslo", "cairo", "quito",
    "lima", "rome", "kyiv", "delhi", "seoul", "accra", "hanoi", "perth",
)

_VOWELS = "aeiou"
_CONSONANTS_A = "bdfgklmnprst"
_CONSONANTS_B = "chjqvwxz"


@dataclass(frozen=True)
class ToySpec:
    """Anchors render identically in both languages and are frequency-boosted:
    they play the role of numerals and proper names, the high-frequency
    identical strings a shared BPE vocabulary exhibits on real corpora."""

    n_content: int = 160
    n_anchors: int = 32
    anchor_boost: float = 3.0
    mono_sentences: int = 20000
    parallel_train: int = 3000
    parallel_valid: int = 400
    parallel_test: int = 400
    min_len: int = 4
    max_len: int = 12
    seed: int = 13

    def __post_init__(self):
        if self.n_anchors > len(ANCHOR_WORDS):
            raise ValidationError(f"at most {len(ANCHOR_WORDS)} anchors available")

    @property
    def n_types(self) -> int:
        return self.n_content + self.n_anchors


def _word_inventory(consonants: str, n: int, rng: np.random.Generator) -> list[str]:
    syllables = [c + v for c in consonants for v in _VOWELS]
    words: list[str] = []
    seen = set(ANCHOR_WORDS)
    while len(words) < n:
        k = int(rng.integers(2, 4))
        w = "".join(syllables[int(i)] for i in rng.integers(0, len(syllables), size=k))
        if w not in seen:
            seen.add(w)
            words.append(w)
    return words


class ToyLanguagePair:
    """Sentence sampler for the underlying process plus both renderings."""

    def __init__(self, spec: ToySpec = ToySpec()):
        self.spec = spec
        rng = np.random.default_rng(spec.seed)
        anchors = list(ANCHOR_WORDS[: spec.n_anchors])
        self.words_a = _word_inventory(_CONSONANTS_A, spec.n_content, rng) + anchors
        self.words_b = _word_inventory(_CONSONANTS_B, spec.n_content, rng) + anchors
        t = spec.n_types
        zipf = 1.0 / np.arange(2, t + 2) ** 0.8
        order = rng.permutation(t)
        base = zipf[order] / zipf[order].sum()
        base[spec.n_content :] *= spec.anchor_boost
        base /= base.sum()
        self.start_cum = np.cumsum(rng.dirichlet(base * t * 0.5))
        trans = np.stack([rng.dirichlet(base * t * 0.08) for _ in range(t)])
        self.trans_cum = np.cumsum(trans, axis=1)

    def sample_types(self, n_sentences: int, seed: int) -> list[list[int]]:
        rng = np.random.default_rng(seed)
        spec = self.spec
        sentences = []
        for _ in range(n_sentences):
            m = int(rng.integers(spec.min_len, spec.max_len + 1))
            draws = rng.random(m)
            types = [int(np.searchsorted(self.start_cum, draws[0]))]
            for j in range(1, m):
                types.append(int(np.searchsorted(self.trans_cum[types[-1]], draws[j])))
            sentences.append(types)
        return sentences

    def render(self, types: list[int], side: str) -> str:
        words = self.words_a if side == "a" else self.words_b
        return " ".join(words[t] for t in types)

    def gold_pairs(self) -> list[tuple[str, str]]:
        return list(zip(self.words_a, self.words_b))


def generate_toy_dataset(out_dir: str | os.PathLike, spec: ToySpec = ToySpec()) -> dict:
    """Write mono corpora, parallel splits, and the gold lexicon; returns paths."""
    out_dir = os.fspath(out_dir)
    os.makedirs(out_dir, exist_ok=True)
    pair = ToyLanguagePair(spec)

    paths = {}

    def emit(name: str, sentences: list[str]):
        path = os.path.join(out_dir, name)
        save_corpus(SentenceCorpus(tuple(sentences), name.split(".")[1]), path)
        paths[name] = path

    mono_a = pair.sample_types(spec.mono_sentences, spec.seed + 1)
    mono_b = pair.sample_types(spec.mono_sentences, spec.seed + 2)
    emit("mono.a.txt", [pair.render(t, "a") for t in mono_a])
    emit("mono.b.txt", [pair.render(t, "b") for t in mono_b])

    offsets = {"train": 3, "valid": 4, "test": 5}
    sizes = {
        "train": spec.parallel_train,
        "valid": spec.parallel_valid,
        "test": spec.parallel_test,
    }
    for split, n in sizes.items():
        types = pair.sample_types(n, spec.seed + offsets[split])
        emit(f"{split}.a.txt", [pair.render(t, "a") for t in types])
        emit(f"{split}.b.txt", [pair.render(t, "b") for t in types])

    gold_path = os.path.join(out_dir, "gold.lexicon.tsv")
    with open(gold_path, "w", encoding="utf-8", newline="\n") as f:
        for wa, wb in pair.gold_pairs():
            f.write(f"{wa}\t{wb}\n")
    paths["gold.lexicon.tsv"] = gold_path

    meta_path = os.path.join(out_dir, "meta.json")
    with open(meta_path, "w", encoding="utf-8", newline="\n") as f:
        f.write(json.dumps(asdict(spec), sort_keys=True) + "\n")
    paths["meta.json"] = meta_path
    return paths


def load_gold_pairs(path: str | os.PathLike) -> list[tuple[str, str]]:
    pairs = []
    with open(path, encoding="utf-8") as f:
        for lineno, line in enumerate(f, 1):
            line = line.rstrip("\n")
            if not line:
                continue
            parts = line.split("\t")
            if len(parts) != 2:
                raise ValidationError(f"{path}:{lineno}: expected 'a_word<TAB>b_word'")
            pairs.append((parts[0], parts[1]))
    return pairs
