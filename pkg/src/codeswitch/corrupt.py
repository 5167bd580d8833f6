"""Code-switch span corruption and the mask-based baseline corruption.

A contiguous span of the source sentence is replaced in the encoder input;
the decoder reconstructs the original span with teacher forcing inside the
span and padding elsewhere. The code-switch variant replaces span tokens
with translation words sampled from the lexicon (80% of the time by default,
10% a random token, 10% kept); the baseline variant writes the mask special
instead of translations.

Replacement is one-for-one at token level, so corruption never changes
sentence length and span indices stay exact. Corruption is stateless given
(sentence, lexicon, seed): per-sentence generators derived from
(seed, epoch, sentence index) make each sentence's corruption independent of
batch composition.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .corpus import ValidationError
from .lexicon import TranslationLexicon
from .subword import Vocab

TRANSLATE, RANDOM, KEEP = "translate", "random", "keep"


@dataclass(frozen=True)
class CorruptionPolicy:
    """Span ratio and the per-token action split inside the span."""

    ratio: float = 0.5
    p_translate: float = 0.8
    p_random: float = 0.1
    p_keep: float = 0.1

    def __post_init__(self):
        if not (0.0 < self.ratio <= 1.0):
            raise ValidationError(f"ratio must be in (0, 1], got {self.ratio}")
        probs = (self.p_translate, self.p_random, self.p_keep)
        if any(p < 0 for p in probs) or abs(sum(probs) - 1.0) > 1e-9:
            raise ValidationError(f"action probabilities must be >= 0 and sum to 1: {probs}")


@dataclass(frozen=True)
class TrainingExample:
    """Encoder/decoder tensors for one sentence, all of equal length here.

    ids are 0-based; the span (u, v) is 1-based and inclusive, so
    loss_mask[t-1] is true exactly for u <= t <= v.
    """

    enc_ids: tuple
    dec_in_ids: tuple
    tgt_ids: tuple
    loss_mask: tuple
    span: tuple
    positions: tuple
    actions: tuple = ()

    def __post_init__(self):
        m = len(self.tgt_ids)
        u, v = self.span
        if not (1 <= u <= v <= m):
            raise ValidationError(f"span {self.span} outside sentence of length {m}")
        if len(self.loss_mask) != m or len(self.dec_in_ids) != m:
            raise ValidationError("decoder-side fields must share one length")
        for t in range(m):
            if self.loss_mask[t] != (u - 1 <= t <= v - 1):
                raise ValidationError("loss_mask must be true exactly on the span")


def choose_span(m: int, ratio: float, rng: np.random.Generator) -> tuple[int, int]:
    """Uniform-start span of length max(1, round(ratio * m)); 1-based inclusive.

    round() is banker's rounding, which keeps the mean span fraction at the
    requested ratio across mixed sentence lengths.
    """
    if m < 2:
        raise ValidationError(f"sentence must have at least 2 tokens, got {m}")
    length = max(1, round(ratio * m))
    u = int(rng.integers(1, m - length + 2))
    return u, u + length - 1


def sample_translation(
    token_id: int, lexicon: TranslationLexicon, rng: np.random.Generator
) -> int:
    """Multinomial draw from the token's translation distribution."""
    entry = lexicon.entries.get(token_id)
    if entry is None:
        raise KeyError(f"token id {token_id} has no lexicon entry")
    r = rng.random()
    acc = 0.0
    for tgt, p in entry:
        acc += p
        if r < acc:
            return tgt
    return entry[-1][0]


def _random_token(vocab: Vocab, rng: np.random.Generator) -> int:
    n_special = len(vocab.special_ids)
    return int(rng.integers(n_special, len(vocab)))


def _assemble(x, u, v, enc, vocab, actions):
    m = len(x)
    dec_in = [vocab.pad_id] * m
    tgt = [vocab.pad_id] * m
    mask = [False] * m
    for t in range(u, v + 1):
        i = t - 1
        dec_in[i] = x[i - 1] if t > 1 else vocab.bos_id
        tgt[i] = x[i]
        mask[i] = True
    return TrainingExample(
        enc_ids=tuple(enc),
        dec_in_ids=tuple(dec_in),
        tgt_ids=tuple(tgt),
        loss_mask=tuple(mask),
        span=(u, v),
        positions=tuple(range(m)),
        actions=tuple(actions),
    )


def corrupt_csp(
    x: Sequence[int],
    lexicon: TranslationLexicon,
    policy: CorruptionPolicy,
    rng: np.random.Generator,
    vocab: Vocab,
    span: tuple[int, int] | None = None,
) -> TrainingExample:
    """Replace a span with sampled translation words; decoder predicts the span.

    Per span token, independently: translation-sampled with p_translate,
    a uniform random non-special token with p_random, kept with p_keep.
    Tokens without a lexicon entry split the translation mass evenly between
    random and keep (their action is recorded with a 'missing:' prefix).
    """
    if len(x) < 2:
        raise ValidationError("need at least 2 tokens to corrupt")
    u, v = choose_span(len(x), policy.ratio, rng) if span is None else span
    enc = list(x)
    actions = []
    for t in range(u, v + 1):
        i = t - 1
        has_entry = x[i] in lexicon.entries
        r = rng.random()
        if has_entry:
            if r < policy.p_translate:
                action = TRANSLATE
            elif r < policy.p_translate + policy.p_random:
                action = RANDOM
            else:
                action = KEEP
        else:
            # redistribute translation mass over random/keep proportionally
            rk = policy.p_random + policy.p_keep
            threshold = policy.p_random / rk if rk > 0 else 0.5
            action = RANDOM if r < threshold else KEEP
            action = f"missing:{action}"
        if action == TRANSLATE:
            enc[i] = sample_translation(x[i], lexicon, rng)
        elif action.endswith(RANDOM):
            enc[i] = _random_token(vocab, rng)
        actions.append(action)
    return _assemble(x, u, v, enc, vocab, actions)


def corrupt_mass(
    x: Sequence[int],
    ratio: float,
    rng: np.random.Generator,
    vocab: Vocab,
    p_mask: float = 0.8,
    p_random: float = 0.1,
    span: tuple[int, int] | None = None,
) -> TrainingExample:
    """Baseline corruption: span tokens become the mask special instead of
    translations, with the same mask/random/keep convention and the same
    decoder layout as corrupt_csp."""
    if len(x) < 2:
        raise ValidationError("need at least 2 tokens to corrupt")
    if p_mask < 0 or p_random < 0 or p_mask + p_random > 1.0 + 1e-9:
        raise ValidationError("mask/random/keep probabilities must be a distribution")
    u, v = choose_span(len(x), ratio, rng) if span is None else span
    enc = list(x)
    actions = []
    for t in range(u, v + 1):
        i = t - 1
        r = rng.random()
        if r < p_mask:
            enc[i] = vocab.mask_id
            actions.append("mask")
        elif r < p_mask + p_random:
            enc[i] = _random_token(vocab, rng)
            actions.append(RANDOM)
        else:
            actions.append(KEEP)
    return _assemble(x, u, v, enc, vocab, actions)


def sentence_rng(seed: int, epoch: int, index: int) -> np.random.Generator:
    """Generator for one sentence's corruption, independent of batching."""
    return np.random.default_rng(np.random.SeedSequence([seed, epoch, index]))


def dump_examples(examples: Sequence[TrainingExample], vocab: Vocab) -> str:
    """Aligned four-row text blocks (enc / dec_in / tgt / mask) per example."""
    blocks = []
    for ex in examples:
        rows = [
            ("enc", [vocab.token_of(i) for i in ex.enc_ids]),
            ("dec_in", [vocab.token_of(i) for i in ex.dec_in_ids]),
            ("tgt", [vocab.token_of(i) for i in ex.tgt_ids]),
            ("mask", ["x" if b else "." for b in ex.loss_mask]),
        ]
        widths = [
            max(len(rows[r][1][c]) for r in range(4)) for c in range(len(ex.enc_ids))
        ]
        lines = []
        for label, cells in rows:
            padded = " ".join(c.ljust(w) for c, w in zip(cells, widths))
            lines.append(f"{label:>6} | {padded}")
        blocks.append("\n".join(lines))
    return "\n\n".join(blocks) + "\n"
