"""Byte-pair encoding over a joint two-language sample, and the shared vocabulary.

One BPE model and one vocabulary serve both languages so that the encoder and
decoder share embeddings and source tokens can be swapped for target tokens
in place. Merge learning follows the classic iterative most-frequent-pair
scheme; frequency ties break on the lexicographically smaller pair.

Word-internal subword boundaries are marked with a trailing "@@"; the last
subword of a word carries no marker. During learning the final character of a
word is fused with an end-of-word sentinel so merges can distinguish
word-final from word-internal contexts.
"""

from __future__ import annotations

import os
from collections import Counter
from dataclasses import dataclass, field
from typing import Iterable, Sequence

from .corpus import SentenceCorpus, ValidationError

WORD_END = "</w>"
SEPARATOR = "@@"

# Reserved ids, lowest five, in this fixed order.
PAD, UNK, BOS, EOS, MASK = 0, 1, 2, 3, 4
SPECIAL_TOKENS = ("<pad>", "<unk>", "<s>", "</s>", "<mask>")


def _word_symbols(word: str) -> tuple[str, ...]:
    chars = list(word)
    chars[-1] = chars[-1] + WORD_END
    return tuple(chars)


@dataclass(frozen=True)
class BpeModel:
    """Ordered merge rules. Application order equals learning order."""

    merges: tuple[tuple[str, str], ...]
    separator: str = SEPARATOR

    def __post_init__(self):
        for _, right in self.merges:
            interior = right[: -len(WORD_END)] if right.endswith(WORD_END) else right
            if WORD_END in interior:
                raise ValidationError(f"merge right symbol has interior word-end: {right!r}")

    @property
    def ranks(self) -> dict[tuple[str, str], int]:
        return {pair: i for i, pair in enumerate(self.merges)}


def learn_bpe(corpus: SentenceCorpus | Iterable[str], num_merges: int) -> BpeModel:
    """Learn merge rules by repeatedly fusing the most frequent adjacent pair.

    Deterministic: ties on frequency break toward the lexicographically
    smaller pair. Stops early when no pair occurs twice or no pairs remain.
    """
    if num_merges < 0:
        raise ValidationError(f"num_merges must be >= 0, got {num_merges}")
    word_freq = Counter()
    for sentence in corpus:
        for word in sentence.split():
            word_freq[word] += 1
    if not word_freq:
        raise ValidationError("cannot learn BPE on an empty corpus")

    words = [(list(_word_symbols(w)), freq) for w, freq in sorted(word_freq.items())]

    # pair -> total frequency, and pair -> set of word indices containing it
    stats: Counter = Counter()
    index: dict[tuple[str, str], set[int]] = {}
    for wi, (symbols, freq) in enumerate(words):
        for pair in zip(symbols, symbols[1:]):
            stats[pair] += freq
            index.setdefault(pair, set()).add(wi)

    merges: list[tuple[str, str]] = []
    for _ in range(num_merges):
        best = None
        best_count = 0
        for pair, count in stats.items():
            if count > best_count or (count == best_count and best is not None and pair < best):
                best, best_count = pair, count
        if best is None or best_count < 2:
            break
        merges.append(best)
        merged = best[0] + best[1]
        for wi in sorted(index.get(best, ())):
            symbols, freq = words[wi]
            for pair in zip(symbols, symbols[1:]):
                stats[pair] -= freq
                if stats[pair] <= 0:
                    del stats[pair]
                index[pair].discard(wi)
            new_symbols = _merge_once(symbols, best, merged)
            words[wi] = (new_symbols, freq)
            for pair in zip(new_symbols, new_symbols[1:]):
                stats[pair] += freq
                index.setdefault(pair, set()).add(wi)
    return BpeModel(tuple(merges))


def _merge_once(symbols: Sequence[str], pair: tuple[str, str], merged: str) -> list[str]:
    out = []
    i = 0
    while i < len(symbols):
        if i + 1 < len(symbols) and symbols[i] == pair[0] and symbols[i + 1] == pair[1]:
            out.append(merged)
            i += 2
        else:
            out.append(symbols[i])
            i += 1
    return out


class BpeEncoder:
    """Applies a learned BPE model to text. Immutable; safe to share."""

    def __init__(self, model: BpeModel):
        self.model = model
        self._ranks = model.ranks
        self._cache: dict[str, tuple[str, ...]] = {}

    def segment_word(self, word: str) -> tuple[str, ...]:
        cached = self._cache.get(word)
        if cached is not None:
            return cached
        symbols = list(_word_symbols(word))
        while len(symbols) > 1:
            # earliest-learned applicable rule wins each round
            best_rank, best_pair = None, None
            for pair in zip(symbols, symbols[1:]):
                rank = self._ranks.get(pair)
                if rank is not None and (best_rank is None or rank < best_rank):
                    best_rank, best_pair = rank, pair
            if best_pair is None:
                break
            symbols = _merge_once(symbols, best_pair, best_pair[0] + best_pair[1])
        tokens = tuple(
            s[: -len(WORD_END)] if s.endswith(WORD_END) else s + self.model.separator
            for s in symbols
        )
        self._cache[word] = tokens
        return tokens

    def __call__(self, sentence: str) -> list[str]:
        return apply_bpe(self, sentence)


def apply_bpe(encoder: BpeEncoder | BpeModel, sentence: str) -> list[str]:
    """Split each whitespace word into subword tokens.

    Unknown characters pass through as single-character tokens; joining the
    subwords and stripping boundary markers recovers the original word.
    """
    if isinstance(encoder, BpeModel):
        encoder = BpeEncoder(encoder)
    tokens: list[str] = []
    for word in sentence.split():
        tokens.extend(encoder.segment_word(word))
    return tokens


def detokenize(tokens: Iterable[str], separator: str = SEPARATOR) -> str:
    """Inverse of apply_bpe on whitespace-normalized text."""
    text = " ".join(tokens).replace(separator + " ", "")
    if text.endswith(separator):
        text = text[: -len(separator)]
    return text


@dataclass(frozen=True, eq=False)
class Vocab:
    """Bidirectional token<->id table; the five specials hold the lowest ids."""

    tokens: tuple[str, ...]
    id_of: dict = field(repr=False)

    def __post_init__(self):
        if tuple(self.tokens[:5]) != SPECIAL_TOKENS:
            raise ValidationError("specials must occupy ids 0..4 in the fixed order")
        if len(self.id_of) != len(self.tokens):
            raise ValidationError("duplicate tokens in vocabulary")

    @classmethod
    def from_tokens(cls, non_special_tokens: Iterable[str]) -> "Vocab":
        toks = list(SPECIAL_TOKENS)
        for t in non_special_tokens:
            if t in SPECIAL_TOKENS:
                raise ValidationError(f"token collides with a special: {t!r}")
            toks.append(t)
        return cls(tuple(toks), {t: i for i, t in enumerate(toks)})

    def __len__(self) -> int:
        return len(self.tokens)

    @property
    def pad_id(self) -> int:
        return PAD

    @property
    def unk_id(self) -> int:
        return UNK

    @property
    def bos_id(self) -> int:
        return BOS

    @property
    def eos_id(self) -> int:
        return EOS

    @property
    def mask_id(self) -> int:
        return MASK

    @property
    def special_ids(self) -> range:
        return range(len(SPECIAL_TOKENS))

    def encode(self, tokens: Iterable[str]) -> list[int]:
        return [self.id_of.get(t, UNK) for t in tokens]

    def decode(self, ids: Iterable[int]) -> list[str]:
        return [self.tokens[i] for i in ids]

    def token_of(self, i: int) -> str:
        return self.tokens[i]

    def subset(self, keep: Iterable[str]) -> "Vocab":
        """Derived vocabulary: specials plus the kept tokens, original id order."""
        keep = set(keep)
        return Vocab.from_tokens(t for t in self.tokens[5:] if t in keep)


def build_vocab(
    tokenized: Iterable[Sequence[str]], max_size: int, extra_tokens: Sequence[str] = ()
) -> Vocab:
    """Keep the most frequent tokens up to max_size, specials always included.

    Frequency ties break lexicographically (smaller string kept first).
    extra_tokens are reserved entries (e.g. direction tags) placed right
    after the specials regardless of corpus frequency.
    """
    if max_size < len(SPECIAL_TOKENS) + 1:
        raise ValidationError(f"max_size must be at least {len(SPECIAL_TOKENS) + 1}")
    counts = Counter()
    n_sentences = 0
    for tokens in tokenized:
        n_sentences += 1
        counts.update(tokens)
    if n_sentences == 0:
        raise ValidationError("token stream is empty")
    room = max_size - len(SPECIAL_TOKENS) - len(extra_tokens)
    if room < 0:
        raise ValidationError("max_size too small for the reserved extra tokens")
    extras = set(extra_tokens)
    ranked = sorted(counts.items(), key=lambda kv: (-kv[1], kv[0]))
    kept = [t for t, _ in ranked if t not in extras][:room]
    return Vocab.from_tokens(list(extra_tokens) + kept)


def save_bpe(model: BpeModel, path: str | os.PathLike) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as f:
        for left, right in model.merges:
            f.write(f"{left} {right}\n")


def load_bpe(path: str | os.PathLike) -> BpeModel:
    merges = []
    with open(path, encoding="utf-8") as f:
        for lineno, line in enumerate(f, 1):
            line = line.rstrip("\n")
            if not line:
                continue
            parts = line.split(" ")
            if len(parts) != 2:
                raise ValidationError(f"{path}:{lineno}: expected 'left right', got {line!r}")
            merges.append((parts[0], parts[1]))
    return BpeModel(tuple(merges))


def save_vocab(vocab: Vocab, path: str | os.PathLike) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as f:
        for i, t in enumerate(vocab.tokens):
            f.write(f"{t}\t{i}\n")


def load_vocab(path: str | os.PathLike) -> Vocab:
    tokens = []
    with open(path, encoding="utf-8") as f:
        for lineno, line in enumerate(f, 1):
            line = line.rstrip("\n")
            if not line:
                continue
            parts = line.split("\t")
            if len(parts) != 2:
                raise ValidationError(f"{path}:{lineno}: expected 'token<TAB>id'")
            token, i = parts[0], int(parts[1])
            if i != len(tokens):
                raise ValidationError(f"{path}:{lineno}: ids must be dense and ordered")
            tokens.append(token)
    return Vocab(tuple(tokens), {t: i for i, t in enumerate(tokens)})


def encode_corpus(
    corpus: SentenceCorpus | Iterable[str], encoder: BpeEncoder, vocab: Vocab
) -> list[list[int]]:
    """Tokenize every sentence with BPE and map to vocabulary ids."""
    return [vocab.encode(apply_bpe(encoder, s)) for s in corpus]
