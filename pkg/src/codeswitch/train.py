"""Training loops: code-switch pre-training, fine-tuning, back-translation.

One generic step loop drives all three regimes through batch providers:

- pre-training alternates batches from the two monolingual corpora, each
  corrupted with its own direction's lexicon;
- supervised fine-tuning is standard cross-entropy over full target masks;
- unsupervised fine-tuning alternates denoising autoencoding and on-the-fly
  back-translation, round-robin over both directions in one shared model
  selected by a direction tag prepended to the encoder input.

Optimization is Adam with an inverse-sqrt warmup schedule. Serial-mode
training is a deterministic function of (corpora, config, seed): batch
schedules and corruption draws are stateless functions of the step, dropout
noise comes from the torch RNG whose state rides in the checkpoint, so
resuming from a checkpoint reproduces an uninterrupted run bit for bit.
"""

from __future__ import annotations

import json
import math
import os
import time
from collections import Counter
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np
import torch

from .corpus import ValidationError
from .corrupt import CorruptionPolicy, TrainingExample, corrupt_csp, sentence_rng
from .lexicon import TranslationLexicon
from .model import (
    COMPONENTS,
    Checkpoint,
    ModelConfig,
    collate,
    forward_params,
    greedy_decode_batch,
    group_of,
    save_checkpoint,
)
from .subword import Vocab


@dataclass
class TrainConfig:
    max_steps: int
    lr: float = 5e-4
    adam_betas: tuple = (0.9, 0.98)
    adam_eps: float = 1e-9
    warmup_steps: int = 500
    batch_tokens: int = 1000
    seed: int = 0
    policy: CorruptionPolicy = field(default_factory=CorruptionPolicy)
    save_every: int = 0
    eval_every: int = 0
    noise_drop: float = 0.1
    noise_shuffle: int = 3
    bt_max_extra: int = 5

    def __post_init__(self):
        if self.lr <= 0:
            raise ValidationError(f"lr must be positive, got {self.lr}")
        if self.max_steps < 0:
            raise ValidationError("max_steps must be >= 0")
        if self.warmup_steps < 1:
            raise ValidationError("warmup_steps must be >= 1")


def lr_at(step: int, base: float, warmup: int) -> float:
    """base * min(step^-0.5, step * warmup^-1.5) * warmup^0.5, piecewise so the
    value at step == warmup is exactly base."""
    if step < 1:
        raise ValidationError("schedule is defined for steps >= 1")
    if step <= warmup:
        return base * step / warmup
    return base * math.sqrt(warmup / step)


def adam_init(params: dict) -> dict:
    return {
        "t": 0,
        "m": {k: torch.zeros_like(v) for k, v in params.items()},
        "v": {k: torch.zeros_like(v) for k, v in params.items()},
    }


def adam_step(params: dict, grads: dict, state: dict, lr: float, betas=(0.9, 0.98), eps=1e-9):
    """Bias-corrected Adam: p -= lr * m_hat / (sqrt(v_hat) + eps)."""
    b1, b2 = betas
    state["t"] += 1
    t = state["t"]
    with torch.no_grad():
        for name, p in params.items():
            g = grads[name]
            if g is None:
                continue
            m = state["m"][name]
            v = state["v"][name]
            m.mul_(b1).add_(g, alpha=1 - b1)
            v.mul_(b2).addcmul_(g, g, value=1 - b2)
            m_hat = m / (1 - b1**t)
            v_hat = v / (1 - b2**t)
            p.add_(-lr * m_hat / (v_hat.sqrt() + eps))


def make_batches(lengths: Sequence[int], batch_tokens: int) -> list[list[int]]:
    """Length-sorted greedy packing into batches of at most batch_tokens tokens."""
    too_long = [n for n in lengths if n > batch_tokens]
    if too_long:
        raise ValidationError(
            f"batch_tokens={batch_tokens} is smaller than a sentence of length {max(too_long)}"
        )
    order = sorted(range(len(lengths)), key=lambda i: (lengths[i], i))
    batches: list[list[int]] = []
    cur: list[int] = []
    cur_tokens = 0
    for i in order:
        if cur and cur_tokens + lengths[i] > batch_tokens:
            batches.append(cur)
            cur, cur_tokens = [], 0
        cur.append(i)
        cur_tokens += lengths[i]
    if cur:
        batches.append(cur)
    return batches


class BatchSchedule:
    """Stateless deterministic batch order: epoch e is a seeded permutation."""

    def __init__(self, lengths: Sequence[int], batch_tokens: int, seed: int, stream: int):
        self.batches = make_batches(lengths, batch_tokens)
        self.seed = seed
        self.stream = stream

    def __len__(self) -> int:
        return len(self.batches)

    def at(self, stream_step: int) -> tuple[int, list[int]]:
        """(epoch, sentence indices) for the stream_step-th batch of this stream."""
        n = len(self.batches)
        epoch, idx = divmod(stream_step, n)
        rng = np.random.default_rng(np.random.SeedSequence([self.seed, self.stream, epoch]))
        order = rng.permutation(n)
        return epoch, self.batches[int(order[idx])]


class JsonlLogger:
    """One structured record per line. tokens_per_s is wall-clock telemetry and
    is excluded from the byte-determinism contract."""

    def __init__(self, path: str | os.PathLike | None):
        self.path = os.fspath(path) if path is not None else None
        if self.path:
            open(self.path, "w").close()

    def write(self, record: dict) -> None:
        if self.path:
            with open(self.path, "a", encoding="utf-8") as f:
                f.write(json.dumps(record, sort_keys=True) + "\n")


def make_seq2seq_example(
    src: Sequence[int], tgt: Sequence[int], vocab: Vocab, tag_id: int | None = None
) -> TrainingExample:
    """Full-loss-mask example: enc = [tag?] src EOS, dec = BOS tgt -> tgt EOS."""
    enc = ([tag_id] if tag_id is not None else []) + list(src) + [vocab.eos_id]
    tgt_out = list(tgt) + [vocab.eos_id]
    dec_in = [vocab.bos_id] + list(tgt)
    m = len(tgt_out)
    return TrainingExample(
        enc_ids=tuple(enc),
        dec_in_ids=tuple(dec_in),
        tgt_ids=tuple(tgt_out),
        loss_mask=(True,) * m,
        span=(1, m),
        positions=tuple(range(m)),
    )


def noise_tokens(ids: Sequence[int], rng: np.random.Generator, drop: float, window: int):
    """Denoising-autoencoder noise: token drops plus a local shuffle."""
    ids = np.asarray(ids, dtype=np.int64)
    if drop > 0:
        keep = rng.random(len(ids)) >= drop
        if not keep.any():
            keep[0] = True
        ids = ids[keep]
    if window > 0 and len(ids) > 1:
        scores = np.arange(len(ids)) + rng.uniform(0, window, len(ids))
        ids = ids[np.argsort(scores, kind="stable")]
    return [int(i) for i in ids]


def _materialize(params, cfg, step, opt_state) -> Checkpoint:
    return Checkpoint(
        params={k: v.detach().clone() for k, v in params.items()},
        config=cfg,
        step=step,
        rng_state={"numpy": None, "torch": bytes(torch.get_rng_state().numpy().tobytes())},
        opt_state={
            "t": opt_state["t"],
            "m": {k: v.clone() for k, v in opt_state["m"].items()},
            "v": {k: v.clone() for k, v in opt_state["v"].items()},
        },
    )


def run_steps(
    ckpt: Checkpoint,
    cfg: TrainConfig,
    provider: Callable[[int, dict], tuple[list[TrainingExample], dict]],
    logger: JsonlLogger | None = None,
    save_path: str | os.PathLike | None = None,
    on_eval: Callable[[int, dict], bool] | None = None,
) -> Checkpoint:
    """Generic optimization loop from ckpt.step to cfg.max_steps.

    provider(step, params) returns (examples, stats). on_eval runs every
    cfg.eval_every steps and may stop training early by returning True.
    """
    model_cfg = ckpt.config
    params = {k: v.detach().clone().requires_grad_(True) for k, v in ckpt.params.items()}
    opt = (
        {
            "t": ckpt.opt_state["t"],
            "m": {k: v.clone() for k, v in ckpt.opt_state["m"].items()},
            "v": {k: v.clone() for k, v in ckpt.opt_state["v"].items()},
        }
        if ckpt.opt_state is not None
        else adam_init(params)
    )
    if ckpt.rng_state is not None and ckpt.rng_state.get("torch") is not None:
        torch.set_rng_state(torch.frombuffer(bytearray(ckpt.rng_state["torch"]), dtype=torch.uint8))
    else:
        torch.manual_seed(cfg.seed)

    logger = logger or JsonlLogger(None)
    step = ckpt.step
    while step < cfg.max_steps:
        t0 = time.perf_counter()
        examples, stats = provider(step, params)
        batch = collate(examples)
        for p in params.values():
            p.grad = None
        loss, _ = forward_params(params, model_cfg, batch, training=True)
        loss.backward()
        grads = {k: p.grad for k, p in params.items()}
        lr = lr_at(step + 1, cfg.lr, cfg.warmup_steps)
        adam_step(params, grads, opt, lr, cfg.adam_betas, cfg.adam_eps)
        step += 1

        n_tokens = int(batch["mask"].sum())
        record = {
            "step": step,
            "loss": round(float(loss.detach()), 6),
            "lr": lr,
            "tokens_per_s": round(n_tokens / max(time.perf_counter() - t0, 1e-9), 1),
            **stats,
        }
        logger.write(record)
        if cfg.save_every and save_path and step % cfg.save_every == 0 and step < cfg.max_steps:
            save_checkpoint(_materialize(params, model_cfg, step, opt), save_path)
        if on_eval and cfg.eval_every and step % cfg.eval_every == 0:
            if on_eval(step, params):
                break
    final = _materialize(params, model_cfg, step, opt)
    if save_path:
        save_checkpoint(final, save_path)
    return final


def _action_stats(examples: list[TrainingExample]) -> dict:
    counts = {"translate": 0, "random": 0, "keep": 0, "missing": 0}
    total = 0
    for ex in examples:
        for a in ex.actions:
            total += 1
            if a.startswith("missing:"):
                counts["missing"] += 1
            else:
                counts[a] += 1
    if total == 0:
        return {}
    return {f"frac_{k}": round(v / total, 4) for k, v in counts.items()}


def pretrain(
    corpora: tuple[Sequence[Sequence[int]], Sequence[Sequence[int]]],
    lexicons: tuple[TranslationLexicon, TranslationLexicon],
    vocab: Vocab,
    model_cfg: ModelConfig | None,
    cfg: TrainConfig,
    resume: Checkpoint | None = None,
    logger: JsonlLogger | None = None,
    save_path: str | os.PathLike | None = None,
    on_eval: Callable[[int, dict], bool] | None = None,
) -> Checkpoint:
    """Code-switch pre-training over two monolingual corpora.

    Even steps draw from the first corpus (corrupted with the first lexicon),
    odd steps from the second. Corruption of sentence i in epoch e uses a
    generator derived from (seed + language, e, i), independent of batching.
    """
    from .model import init_model

    for lang, (ids, lex) in enumerate(zip(corpora, lexicons)):
        if len(ids) == 0:
            raise ValidationError(f"corpus {lang} is empty")
        if len(lex.src_vocab) != len(vocab):
            raise ValidationError("lexicon vocabulary does not match the model vocabulary")

    if resume is not None:
        ckpt = resume
    else:
        if model_cfg is None:
            raise ValidationError("model_cfg is required when not resuming")
        if len(vocab) != model_cfg.vocab_size:
            raise ValidationError("vocab size does not match model config")
        ckpt = init_model(model_cfg, cfg.seed)

    schedules = [
        BatchSchedule([len(s) for s in corpora[lang]], cfg.batch_tokens, cfg.seed, stream=lang)
        for lang in (0, 1)
    ]
    epoch_acc = [Counter(), Counter()]
    current_epoch = [0, 0]

    def provider(step: int, params: dict):
        lang = step % 2
        epoch, indices = schedules[lang].at(step // 2)
        ids = corpora[lang]
        lex = lexicons[lang]
        examples = [
            corrupt_csp(
                ids[i], lex, cfg.policy, sentence_rng(cfg.seed + lang, epoch, i), vocab
            )
            for i in indices
        ]
        stats = {"lang": lang, "epoch": epoch, **_action_stats(examples)}
        # aggregate corruption statistics over each completed epoch
        if epoch != current_epoch[lang]:
            done = epoch_acc[lang]
            total = sum(done.values())
            if total:
                stats["epoch_completed"] = {
                    "lang": lang,
                    "epoch": current_epoch[lang],
                    **{f"frac_{k}": round(v / total, 4) for k, v in sorted(done.items())},
                }
            epoch_acc[lang] = Counter()
            current_epoch[lang] = epoch
        for ex in examples:
            for a in ex.actions:
                epoch_acc[lang][a.split(":")[0] if a.startswith("missing") else a] += 1
        return examples, stats

    return run_steps(ckpt, cfg, provider, logger, save_path, on_eval)


def finetune_supervised(
    ckpt: Checkpoint,
    src_ids: Sequence[Sequence[int]],
    tgt_ids: Sequence[Sequence[int]],
    vocab: Vocab,
    cfg: TrainConfig,
    tag_id: int | None = None,
    logger: JsonlLogger | None = None,
    save_path: str | os.PathLike | None = None,
    on_eval: Callable[[int, dict], bool] | None = None,
) -> Checkpoint:
    """Cross-entropy over all target positions, initialized from ckpt.

    The step counter restarts at zero with a fresh optimizer.
    """
    if len(src_ids) != len(tgt_ids):
        raise ValidationError(
            f"misaligned parallel corpus: {len(src_ids)} source vs {len(tgt_ids)} target"
        )
    if len(src_ids) == 0:
        raise ValidationError("parallel corpus is empty")
    examples = [
        make_seq2seq_example(s, t, vocab, tag_id) for s, t in zip(src_ids, tgt_ids)
    ]
    start = Checkpoint(ckpt.params, ckpt.config, step=0)
    schedule = BatchSchedule(
        [max(len(ex.enc_ids), len(ex.tgt_ids)) for ex in examples],
        cfg.batch_tokens,
        cfg.seed,
        stream=100,
    )

    def provider(step: int, params: dict):
        epoch, indices = schedule.at(step)
        return [examples[i] for i in indices], {"epoch": epoch}

    return run_steps(start, cfg, provider, logger, save_path, on_eval)


def backtranslate(
    ckpt: Checkpoint,
    target_ids: Sequence[Sequence[int]],
    vocab: Vocab,
    beam: int = 1,
    tag_id: int | None = None,
    max_len: int = 64,
    batch_size: int = 64,
) -> tuple[list[tuple[list[int], list[int]]], dict]:
    """Synthetic parallel pairs (decode(t), t) for each target sentence.

    Sentences whose decode comes back empty are skipped and reported.
    """
    from .model import decode

    pairs = []
    skipped = []
    params = {k: v.detach().clone() for k, v in ckpt.params.items()}
    if beam == 1:
        for start in range(0, len(target_ids), batch_size):
            chunk = [list(t) for t in target_ids[start : start + batch_size]]
            enc = [([tag_id] if tag_id is not None else []) + t + [vocab.eos_id] for t in chunk]
            outs = greedy_decode_batch(
                params, ckpt.config, enc, max_len=max_len, bos_id=vocab.bos_id,
                eos_id=vocab.eos_id, pad_id=vocab.pad_id,
            )
            for offset, (src, t) in enumerate(zip(outs, chunk)):
                if src:
                    pairs.append((src, t))
                else:
                    skipped.append(start + offset)
    else:
        for i, t in enumerate(target_ids):
            enc = ([tag_id] if tag_id is not None else []) + list(t) + [vocab.eos_id]
            src = decode(
                ckpt, enc, beam=beam, max_len=max_len, bos_id=vocab.bos_id,
                eos_id=vocab.eos_id, pad_id=vocab.pad_id,
            )
            if src:
                pairs.append((src, list(t)))
            else:
                skipped.append(i)
    return pairs, {"n_input": len(target_ids), "n_output": len(pairs), "skipped": skipped}


def finetune_unsupervised(
    ckpt: Checkpoint,
    corpora: tuple[Sequence[Sequence[int]], Sequence[Sequence[int]]],
    vocab: Vocab,
    tag_ids: tuple[int, int],
    cfg: TrainConfig,
    logger: JsonlLogger | None = None,
    save_path: str | os.PathLike | None = None,
    on_eval: Callable[[int, dict], bool] | None = None,
    use_backtranslation: bool = True,
) -> Checkpoint:
    """Denoising autoencoding and on-the-fly back-translation, 1:1, both directions.

    Step kinds cycle: DAE lang0, DAE lang1, BT into lang1 (sources generated
    from lang1 sentences by translating them into lang0 with the current
    model), BT into lang0. tag_ids[L] is the reserved token meaning "produce
    language L"; it is always the first encoder token.

    With use_backtranslation=False the two BT step kinds degrade to extra
    denoising batches over the same streams (the ablation baseline), keeping
    the token budget per step comparable.
    """
    for lang in (0, 1):
        if len(corpora[lang]) == 0:
            raise ValidationError(f"corpus {lang} is empty")
        if tag_ids[lang] >= len(vocab):
            raise ValidationError("direction tag id outside the vocabulary")
    start = Checkpoint(ckpt.params, ckpt.config, step=0)
    # four streams: DAE over each corpus, BT over each corpus
    schedules = {
        ("dae", 0): BatchSchedule([len(s) for s in corpora[0]], cfg.batch_tokens, cfg.seed, 200),
        ("dae", 1): BatchSchedule([len(s) for s in corpora[1]], cfg.batch_tokens, cfg.seed, 201),
        ("bt", 1): BatchSchedule([len(s) for s in corpora[1]], cfg.batch_tokens, cfg.seed, 202),
        ("bt", 0): BatchSchedule([len(s) for s in corpora[0]], cfg.batch_tokens, cfg.seed, 203),
    }

    def provider(step: int, params: dict):
        kind = step % 4
        stream_step = step // 4
        if kind in (0, 1):  # denoising autoencoding for language `kind`
            lang = kind
            epoch, indices = schedules[("dae", lang)].at(stream_step)
            examples = []
            for i in indices:
                rng = sentence_rng(cfg.seed + 10 + lang, epoch, i)
                noised = noise_tokens(corpora[lang][i], rng, cfg.noise_drop, cfg.noise_shuffle)
                examples.append(
                    make_seq2seq_example(noised, corpora[lang][i], vocab, tag_ids[lang])
                )
            return examples, {"kind": f"dae{lang}", "epoch": epoch}
        # back-translation: train to produce `out_lang` from synthetic inputs
        out_lang = 1 if kind == 2 else 0
        in_lang = 1 - out_lang
        epoch, indices = schedules[("bt", out_lang)].at(stream_step)
        targets = [list(corpora[out_lang][i]) for i in indices]
        if not use_backtranslation:
            examples = []
            for i, tgt in zip(indices, targets):
                rng = sentence_rng(cfg.seed + 20 + out_lang, epoch, i)
                noised = noise_tokens(tgt, rng, cfg.noise_drop, cfg.noise_shuffle)
                examples.append(make_seq2seq_example(noised, tgt, vocab, tag_ids[out_lang]))
            return examples, {"kind": f"dae-extra{out_lang}", "epoch": epoch}
        enc_inputs = [[tag_ids[in_lang]] + t + [vocab.eos_id] for t in targets]
        max_len = max(len(t) for t in targets) + cfg.bt_max_extra
        with torch.no_grad():
            sources = greedy_decode_batch(
                params, ckpt.config, enc_inputs, max_len=max_len, bos_id=vocab.bos_id,
                eos_id=vocab.eos_id, pad_id=vocab.pad_id,
            )
        examples = [
            make_seq2seq_example(src if src else [vocab.unk_id], tgt, vocab, tag_ids[out_lang])
            for src, tgt in zip(sources, targets)
        ]
        return examples, {"kind": f"bt>{out_lang}", "epoch": epoch}

    return run_steps(start, cfg, provider, logger, save_path, on_eval)


def selective_init(
    pretrained: Checkpoint, fresh: Checkpoint, components: Sequence[str]
) -> Checkpoint:
    """Copy the named component groups from the pretrained checkpoint and
    everything else from the fresh one; the step counter resets."""
    if pretrained.config != fresh.config:
        raise ValidationError("pretrained and fresh checkpoints have different configs")
    unknown = set(components) - set(COMPONENTS)
    if unknown:
        raise ValidationError(f"unknown components: {sorted(unknown)}")
    chosen = set(components)
    params = {}
    for name in pretrained.params:
        source = pretrained if group_of(name) in chosen else fresh
        params[name] = source.params[name].clone()
    return Checkpoint(params, pretrained.config, step=0)
