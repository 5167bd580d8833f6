"""Evaluation: corpus BLEU, masked-objective perplexity, lexicon precision,
the k-sweep experiment, and code-switched test-set construction.

BLEU is corpus-level BLEU-4 with the brevity penalty and no smoothing,
whitespace-tokenized on detokenized text, matching the classic evaluation
script's behavior (any zero n-gram precision gives a score of 0). Reported
BLEU in the pipeline is computed on detokenized, lowercased text.

Perplexity uses the same span-corruption objective and policy as
pre-training, so pre-training quality is measured on the distribution the
model was trained on; the policy is echoed in the report.
"""

from __future__ import annotations

import math
import os
from collections import Counter
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np
import torch

from .corpus import ValidationError
from .corrupt import CorruptionPolicy, corrupt_csp, sentence_rng
from .lexicon import TranslationLexicon
from .model import Checkpoint, collate, forward_params


@dataclass(frozen=True)
class EvalReport:
    metric: str
    value: float
    n_sentences: int
    config: dict = field(default_factory=dict)

    def __post_init__(self):
        if not math.isfinite(self.value):
            raise ValidationError(f"{self.metric} is not finite")
        if self.metric == "bleu" and not (0.0 <= self.value <= 100.0):
            raise ValidationError(f"BLEU {self.value} outside [0, 100]")
        if self.metric == "ppl" and self.value < 1.0:
            raise ValidationError(f"perplexity {self.value} below 1")


def _ngram_counts(tokens: Sequence[str], n: int) -> Counter:
    return Counter(tuple(tokens[i : i + n]) for i in range(len(tokens) - n + 1))


def _content_rng(seed: int, ids: Sequence[int]) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence([seed, *ids]))


def bleu(hypotheses: Sequence[str], references: Sequence[str], max_n: int = 4) -> float:
    """Corpus BLEU: geometric mean of modified n-gram precisions x brevity penalty.

    No smoothing: if any order has zero matches (or zero candidates), the
    score is 0. Symmetric under reordering hypothesis/reference pairs
    together; bleu(h, h) = 100 for non-empty h.
    """
    if len(hypotheses) != len(references):
        raise ValidationError(
            f"{len(hypotheses)} hypotheses vs {len(references)} references"
        )
    if not hypotheses:
        raise ValidationError("empty corpus")
    matches = [0] * max_n
    totals = [0] * max_n
    hyp_len = 0
    ref_len = 0
    for hyp, ref in zip(hypotheses, references):
        h = hyp.split()
        r = ref.split()
        hyp_len += len(h)
        ref_len += len(r)
        for n in range(1, max_n + 1):
            h_counts = _ngram_counts(h, n)
            r_counts = _ngram_counts(r, n)
            totals[n - 1] += max(len(h) - n + 1, 0)
            matches[n - 1] += sum(min(c, r_counts[g]) for g, c in h_counts.items())
    if hyp_len == 0 or any(m == 0 for m in matches) or any(t == 0 for t in totals):
        return 0.0
    log_precision = sum(math.log(m / t) for m, t in zip(matches, totals)) / max_n
    brevity = 1.0 if hyp_len > ref_len else math.exp(1.0 - ref_len / hyp_len)
    return 100.0 * brevity * math.exp(log_precision)


def perplexity(
    ckpt: Checkpoint,
    corpora: Sequence[Sequence[Sequence[int]]],
    lexicons: Sequence[TranslationLexicon],
    policy: CorruptionPolicy,
    seed: int,
    batch_size: int = 64,
) -> float:
    """exp(mean per-masked-token NLL) under the span-corruption objective.

    Corruption draws are deterministic in (seed, language, sentence index).
    With two (corpus, lexicon) pairs the result is the arithmetic mean of
    the two per-language perplexities.
    """
    if len(corpora) != len(lexicons) or not corpora:
        raise ValidationError("need one lexicon per corpus")
    params = {k: v.detach().clone() for k, v in ckpt.params.items()}
    ppls = []
    for lang, (token_ids, lex) in enumerate(zip(corpora, lexicons)):
        if len(token_ids) == 0:
            raise ValidationError(f"corpus {lang} is empty")
        vocab = lex.src_vocab
        # corruption draws are keyed by sentence content, and batching is
        # canonical, so the result is invariant to sentence order
        examples = [
            corrupt_csp(ids, lex, policy, _content_rng(seed + lang, ids), vocab)
            for ids in token_ids
        ]
        order = sorted(
            range(len(examples)),
            key=lambda i: (len(examples[i].tgt_ids), examples[i].enc_ids),
        )
        total_nll = 0.0
        total_tokens = 0
        with torch.no_grad():
            for start in range(0, len(order), batch_size):
                batch = collate([examples[i] for i in order[start : start + batch_size]])
                loss, _ = forward_params(params, ckpt.config, batch, training=False)
                n = int(batch["mask"].sum())
                total_nll += float(loss) * n
                total_tokens += n
        ppls.append(math.exp(total_nll / total_tokens))
    return float(np.mean(ppls))


def lexicon_precision(
    lex: TranslationLexicon, gold: Sequence[tuple[int, int]], k: int
) -> float:
    """Fraction of gold source tokens whose translation is in their top-k entries."""
    if not gold:
        raise ValidationError("gold pair list is empty")
    if k > lex.k:
        raise ValidationError(f"k={k} exceeds the lexicon's k={lex.k}")
    hits = 0
    for src, tgt in gold:
        entry = lex.entries.get(src, ())
        if tgt in [t for t, _ in entry[:k]]:
            hits += 1
    return hits / len(gold)


def build_codeswitch_testset(
    sentences: Sequence[Sequence[int]],
    lex: TranslationLexicon,
    replace_ratio: float,
    seed: int,
) -> tuple[list[list[int]], list[tuple[int, int, int, int]], list[int]]:
    """Replace round(ratio * m) random tokens per sentence with their top-1
    lexicon entries.

    Returns (code-mixed sentences, manifest, flagged indices). Manifest rows
    are (sentence index, position, original id, replacement id). A sentence
    with fewer replaceable tokens than requested keeps what can be replaced
    and is flagged; with none it passes through unmodified (and is flagged).
    """
    if not (0.0 <= replace_ratio <= 1.0):
        raise ValidationError(f"replace_ratio must be in [0, 1], got {replace_ratio}")
    out = []
    manifest = []
    flagged = []
    for i, sent in enumerate(sentences):
        sent = list(sent)
        n_rep = round(replace_ratio * len(sent))
        if n_rep == 0:
            out.append(sent)
            continue
        rng = sentence_rng(seed, 0, i)
        replaceable = [p for p, tok in enumerate(sent) if tok in lex.entries]
        if len(replaceable) < n_rep:
            flagged.append(i)
        chosen = rng.choice(len(replaceable), size=min(n_rep, len(replaceable)), replace=False) if replaceable else []
        for c in sorted(int(j) for j in np.atleast_1d(chosen)):
            pos = replaceable[c]
            top1 = lex.entries[sent[pos]][0][0]
            manifest.append((i, pos, sent[pos], top1))
            sent[pos] = top1
        out.append(sent)
    return out, manifest, flagged


def k_sweep(experiment_config, k_values: Sequence[int] = (1, 3, 5, 7, 9)) -> list[dict]:
    """Extract lexicons, pre-train, fine-tune, and evaluate once per k.

    All rows share the same seeds and step budgets so differences are
    attributable to k alone. Returns one row per k; the pipeline also writes
    the table as TSV.
    """
    if not k_values:
        raise ValidationError("k_values must be non-empty")
    from .pipeline import run_k_sweep

    return run_k_sweep(experiment_config, list(k_values))


def save_report(report: EvalReport, path: str | os.PathLike) -> None:
    import json

    with open(path, "w", encoding="utf-8", newline="\n") as f:
        f.write(
            json.dumps(
                {
                    "metric": report.metric,
                    "value": report.value,
                    "n_sentences": report.n_sentences,
                    "config": report.config,
                },
                sort_keys=True,
            )
            + "\n"
        )
