"""Acceptance suite: every criterion at its stated tolerance, one line each.

Run with `pytest tests/test_acceptance.py -v -s`. The toy-pipeline fixtures
pre-train and fine-tune real models, so the full module takes tens of
minutes on a laptop CPU; criteria 1-6 and 9-10 finish in seconds.
"""

import json
import math
import os
import time

import numpy as np
import pytest
import torch
from scipy import stats

from codeswitch import pipeline as pl
from codeswitch.config import load_config
from codeswitch.corrupt import CorruptionPolicy, corrupt_csp, sample_translation
from codeswitch.embedding import EmbeddingMatrix
from codeswitch.evaluation import bleu, build_codeswitch_testset, perplexity
from codeswitch.lexicon import TranslationLexicon, extract_lexicon
from codeswitch.mapping import SeedPairs, normalize_embeddings, self_learn
from codeswitch.model import (
    Checkpoint,
    ModelConfig,
    backward,
    collate,
    forward,
    forward_params,
    group_of,
    init_model,
    load_checkpoint,
    parameter_shapes,
    save_checkpoint,
)
from codeswitch.subword import Vocab
from codeswitch.toydata import ToySpec, generate_toy_dataset
from codeswitch.train import selective_init

DATA_DIR = os.path.join(os.path.dirname(__file__), "..", "data", "toy")
CONFIG_PATH = os.path.join(os.path.dirname(__file__), "..", "configs", "toy.yaml")


def criterion(n, ok, detail):
    print(f"\n[criterion {n:>2}] {'PASS' if ok else 'FAIL'}  {detail}")
    assert ok, f"criterion {n}: {detail}"


# ---------------------------------------------------------------- criterion 1


def test_criterion_01_lexicon_induction_oracle():
    t0 = time.perf_counter()
    vocab = Vocab.from_tokens([f"w{i}" for i in range(1000)])
    rng = np.random.default_rng(42)
    x = normalize_embeddings(EmbeddingMatrix(rng.normal(size=(len(vocab), 32)), vocab))
    q, r = np.linalg.qr(rng.normal(size=(32, 32)))
    rotation = q * np.sign(np.diag(r))
    y = EmbeddingMatrix(x.vectors @ rotation.T, x.vocab)
    chosen = rng.choice(np.arange(5, len(vocab)), size=100, replace=False)  # 10% seeds
    init = SeedPairs(tuple((int(i), int(i)) for i in sorted(chosen)))
    w, _ = self_learn(x, y, init, max_iters=50)
    lex = extract_lexicon(w.apply(x), y, k=3)
    p1 = sum(cands[0][0] == src for src, cands in lex.entries.items()) / len(lex.entries)
    p3 = sum(src in [t for t, _ in cands] for src, cands in lex.entries.items()) / len(
        lex.entries
    )
    runtime = time.perf_counter() - t0
    criterion(
        1,
        p1 >= 0.99 and p3 == 1.0 and runtime < 60,
        f"synthetic rotation V=1000 d=32: P@1={p1:.4f} (>=0.99), P@3={p3:.4f} (=1.0), "
        f"runtime {runtime:.1f}s (<60s)",
    )


# ---------------------------------------------------------------- criterion 2


def test_criterion_02_corruption_statistics():
    vocab = Vocab.from_tokens([f"w{i}" for i in range(300)])
    lex = TranslationLexicon(
        {i: (((i - 5 + 150) % 300 + 5, 1.0),) for i in range(5, 305)}, 1, "", vocab, vocab
    )
    policy = CorruptionPolicy()
    rng = np.random.default_rng(7)
    counts = {"translate": 0, "random": 0, "keep": 0}
    span_fracs = []
    reconstructed = 0
    total_examples = 0
    total_span_tokens = 0
    while total_span_tokens < 50_000:
        m = int(rng.integers(4, 15))
        x = [int(t) for t in rng.integers(5, 305, size=m)]
        ex = corrupt_csp(x, lex, policy, rng, vocab)
        u, v = ex.span
        span_fracs.append((v - u + 1) / m)
        for a in ex.actions:
            counts[a] += 1
            total_span_tokens += 1
        rebuilt = list(ex.enc_ids)
        for t in range(u, v + 1):
            rebuilt[t - 1] = ex.tgt_ids[t - 1]
        reconstructed += rebuilt == x
        total_examples += 1
    freqs = {a: c / total_span_tokens for a, c in counts.items()}
    chi = stats.chisquare(
        [counts["translate"], counts["random"], counts["keep"]],
        f_exp=np.array([0.8, 0.1, 0.1]) * total_span_tokens,
    )
    mean_frac = float(np.mean(span_fracs))
    ok = (
        abs(freqs["translate"] - 0.8) <= 0.005
        and abs(freqs["random"] - 0.1) <= 0.005
        and abs(freqs["keep"] - 0.1) <= 0.005
        and chi.pvalue > 0.01
        and abs(mean_frac - 0.5) <= 0.02
        and reconstructed == total_examples
    )
    criterion(
        2,
        ok,
        f"{total_span_tokens} span tokens: translate/random/keep = "
        f"{freqs['translate']:.4f}/{freqs['random']:.4f}/{freqs['keep']:.4f} "
        f"(0.8/0.1/0.1 +-0.005), chi2 p={chi.pvalue:.3f} (>0.01), "
        f"mean span fraction {mean_frac:.3f} (0.50 +-0.02), "
        f"reconstruction {reconstructed}/{total_examples}",
    )


# ---------------------------------------------------------------- criterion 3


def test_criterion_03_translation_sampling():
    vocab = Vocab.from_tokens([f"w{i}" for i in range(10)])
    probs = {6: 0.5, 7: 0.3, 8: 0.2}
    lex = TranslationLexicon({5: ((6, 0.5), (7, 0.3), (8, 0.2))}, 3, "", vocab, vocab)
    rng = np.random.default_rng(11)
    n = 100_000
    draws = np.array([sample_translation(5, lex, rng) for _ in range(n)])
    errs = {t: abs((draws == t).mean() - p) for t, p in probs.items()}
    worst = max(errs.values())
    criterion(
        3,
        worst <= 0.01,
        f"{n} multinomial draws from a 3-entry row: worst |freq - prob| = {worst:.4f} (<=0.01)",
    )


# ---------------------------------------------------------------- criterion 4


def test_criterion_04_gradient_correctness():
    cfg = ModelConfig(
        vocab_size=40, layers_enc=2, layers_dec=2, d_model=16, d_ffn=32, heads=2,
        dropout=0.0, max_positions=32,
    )
    ckpt = init_model(cfg, seed=3)
    from tests_support_examples import span_batch

    batch = span_batch()
    grads = backward(ckpt, batch, dtype=torch.float64)
    shapes = parameter_shapes(cfg)
    by_group = {}
    for name in sorted(shapes):
        by_group.setdefault(group_of(name), []).append(name)
    rng = np.random.default_rng(0)
    picks = []
    for group, names in sorted(by_group.items()):
        for _ in range(40):
            name = names[int(rng.integers(len(names)))]
            picks.append((name, int(rng.integers(int(np.prod(shapes[name]))))))
    assert len(picks) == 200 and {g for g, _ in by_group.items()} == set(by_group)

    params64 = {k: v.detach().to(torch.float64).clone() for k, v in ckpt.params.items()}
    collated = collate(batch)
    h = 1e-5
    worst = 0.0
    for name, flat in picks:
        base = params64[name].flatten()[flat].item()
        losses = []
        for delta in (h, -h):
            p = {k: v.clone() for k, v in params64.items()}
            p[name].flatten()[flat] = base + delta
            with torch.no_grad():
                loss, _ = forward_params(p, cfg, collated)
            losses.append(float(loss))
        fd = (losses[0] - losses[1]) / (2 * h)
        an = float(grads[name].flatten()[flat])
        worst = max(worst, abs(fd - an) / max(abs(fd), abs(an), 1e-8))
    criterion(
        4,
        worst < 1e-4,
        f"central differences (float64, h=1e-5) on 200 parameters over all 5 groups: "
        f"worst relative error {worst:.2e} (<1e-4)",
    )


# ---------------------------------------------------------------- criterion 5


def test_criterion_05_uniform_model_identities():
    vocab = Vocab.from_tokens([f"w{i}" for i in range(123)])
    cfg = ModelConfig(
        vocab_size=len(vocab), layers_enc=1, layers_dec=1, d_model=16, d_ffn=32, heads=2,
        dropout=0.0, max_positions=32,
    )
    ckpt = init_model(cfg, seed=5)
    ckpt.params["decoder.final_ln.g"] = torch.zeros_like(ckpt.params["decoder.final_ln.g"])
    from tests_support_examples import span_batch

    loss, _ = forward(ckpt, span_batch())
    loss_err = abs(loss - math.log(cfg.vocab_size))

    lex = TranslationLexicon(
        {i: ((i, 1.0),) for i in range(5, len(vocab))}, 1, "", vocab, vocab
    )
    rng = np.random.default_rng(1)
    corpus = [[int(t) for t in rng.integers(5, len(vocab), size=8)] for _ in range(50)]
    ppl = perplexity(ckpt, [corpus], [lex], CorruptionPolicy(), seed=0)
    ppl_err = abs(ppl - cfg.vocab_size) / cfg.vocab_size
    criterion(
        5,
        loss_err <= 1e-3 and ppl_err <= 0.01,
        f"uniform model: loss - ln(V) = {loss_err:.2e} (<=1e-3); "
        f"PPL {ppl:.2f} vs V={cfg.vocab_size}, relative error {ppl_err:.4f} (<=0.01)",
    )


# ---------------------------------------------------------------- criterion 6


def test_criterion_06_bleu_oracle():
    identity = bleu(["the cat sat on the mat"], ["the cat sat on the mat"])
    degenerate = bleu(["the the the the"], ["the cat sat down"])
    hyps = ["the cat sat on the mat", "a quick fox jumps high", "hello world again"]
    refs = ["the cat sat on the mat", "the quick fox jumped high", "hello there world"]
    matches, totals = [11, 6, 4, 3], [14, 11, 8, 5]
    expected = 100.0 * math.exp(sum(math.log(m / t) for m, t in zip(matches, totals)) / 4)
    got = bleu(hyps, refs)
    criterion(
        6,
        identity == pytest.approx(100.0)
        and degenerate == 0.0
        and got == pytest.approx(expected, abs=0.01),
        f"identity BLEU {identity:.2f} (=100), degenerate {degenerate:.2f} (=0), "
        f"hand-counted fixture {got:.2f} vs {expected:.2f} (+-0.01)",
    )


# -------------------------------------------------- toy pipeline for 7 and 8


@pytest.fixture(scope="session")
def toy_run(tmp_path_factory):
    """Prepared toy pipeline: BPE, embeddings, mapping, lexicons, pre-training."""
    out = str(tmp_path_factory.mktemp("toy_acceptance"))
    cfg = load_config(CONFIG_PATH).replaced(out_dir=out)
    cfg = cfg.replaced(
        corpus=cfg.corpus.__class__(
            **{
                **cfg.corpus.__dict__,
                "mono_a": os.path.join(DATA_DIR, "mono.a.txt"),
                "mono_b": os.path.join(DATA_DIR, "mono.b.txt"),
            }
        ),
        finetune=cfg.finetune.__class__(
            **{
                **cfg.finetune.__dict__,
                "train_a": os.path.join(DATA_DIR, "train.a.txt"),
                "train_b": os.path.join(DATA_DIR, "train.b.txt"),
                "valid_a": os.path.join(DATA_DIR, "valid.a.txt"),
                "valid_b": os.path.join(DATA_DIR, "valid.b.txt"),
            }
        ),
    )
    pl.run_pipeline_prepare(cfg)
    pl.stage_extract_lexicon(cfg)
    pl.stage_pretrain(cfg)
    # 200-sentence validation subset keeps in-training BLEU evaluation cheap
    for side in ("a", "b"):
        src = os.path.join(DATA_DIR, f"valid.{side}.txt")
        dst = os.path.join(out, f"valid_sub.{side}.txt")
        with open(src) as fi, open(dst, "w") as fo:
            for i, line in enumerate(fi):
                if i >= 200:
                    break
                fo.write(line)
    return cfg


def bleu_of(cfg, params, model_cfg, tag=None):
    ckpt = Checkpoint({k: v.detach().clone() for k, v in params.items()}, model_cfg)
    return pl.evaluate_bleu_checkpoint(
        cfg,
        ckpt,
        os.path.join(cfg.out_dir, "valid_sub.a.txt"),
        os.path.join(cfg.out_dir, "valid_sub.b.txt"),
        tag=tag,
    )


def steps_to_bleu(cfg, init_path, seed, threshold=90.0, cap=4000):
    """First evaluated step at which validation BLEU reaches the threshold."""
    sub = cfg.replaced(out_dir=os.path.join(cfg.out_dir, f"sup_{bool(init_path)}_{seed}"))
    os.makedirs(sub.out_dir, exist_ok=True)
    for name in (pl.MERGES_FILE, pl.VOCAB_FILE):
        with open(os.path.join(cfg.out_dir, name), "rb") as fi, open(
            os.path.join(sub.out_dir, name), "wb"
        ) as fo:
            fo.write(fi.read())
    sub = sub.replaced(finetune=sub.finetune.__class__(**{**sub.finetune.__dict__, "steps": cap}))
    model_cfg = load_checkpoint(os.path.join(cfg.out_dir, pl.PRETRAIN_CKPT)).config
    hit = {}

    def on_eval(step, params):
        b = bleu_of(cfg, params, model_cfg)
        if b >= threshold:
            hit["step"] = step
            return True
        return False

    pl.stage_finetune_supervised(sub, init=init_path, on_eval=on_eval, seed=seed)
    return hit.get("step", cap + 1)


def test_criterion_07_csp_benefit(toy_run):
    cfg = toy_run
    pretrain_path = os.path.join(cfg.out_dir, pl.PRETRAIN_CKPT)

    # (a) supervised: CSP checkpoint reaches 90 BLEU in strictly fewer steps
    results = {}
    for seed in (1, 2, 3):
        s_csp = steps_to_bleu(cfg, pretrain_path, seed)
        s_rand = steps_to_bleu(cfg, None, seed)
        results[seed] = (s_csp, s_rand)
        print(f"    seed {seed}: steps to 90 BLEU csp={s_csp} random={s_rand}", flush=True)
    ok_a = all(c < r for c, r in results.values()) and all(
        c <= 4000 for c, _ in results.values()
    )

    # (b) unsupervised fine-tuning reaches >= 50 BLEU within 20000 steps
    model_cfg = load_checkpoint(pretrain_path).config
    tag_b = pl.direction_tags(cfg)[1]
    hit = {}

    def on_eval(step, params):
        b = bleu_of(cfg, params, model_cfg, tag=tag_b)
        if b >= 50.0:
            hit["step"] = step
            hit["bleu"] = b
            return True
        return False

    unsup_cfg = cfg.replaced(
        out_dir=os.path.join(cfg.out_dir, "unsup"),
        unsupervised=cfg.unsupervised.__class__(
            **{**cfg.unsupervised.__dict__, "steps": 20000}
        ),
    )
    os.makedirs(unsup_cfg.out_dir, exist_ok=True)
    for name in (pl.MERGES_FILE, pl.VOCAB_FILE):
        with open(os.path.join(cfg.out_dir, name), "rb") as fi, open(
            os.path.join(unsup_cfg.out_dir, name), "wb"
        ) as fo:
            fo.write(fi.read())
    pl.stage_finetune_unsupervised(unsup_cfg, pretrain_path, on_eval=on_eval)
    ok_b = "step" in hit and hit["step"] <= 20000
    print(
        f"    unsupervised: BLEU {hit.get('bleu', 0.0):.1f} at step {hit.get('step')}",
        flush=True,
    )

    # (c) removing the pre-trained encoder hurts at a fixed budget. The budget
    # sits in the early-training window: there the pretrained encoder's head
    # start is mechanical and seed-stable, whereas by ~300+ steps a freshly
    # initialized encoder has been relearned and the ordering becomes noisy.
    pre = load_checkpoint(pretrain_path)
    budget = 200
    ok_c = True
    c_detail = []
    for seed in (1, 2, 3):
        fresh = init_model(pre.config, seed + 100)
        no_enc = selective_init(
            pre, fresh, ("embeddings", "cross_attention", "decoder", "output_bias")
        )
        no_enc_path = os.path.join(cfg.out_dir, f"noenc_{seed}.ckpt")
        save_checkpoint(no_enc, no_enc_path)
        bleus = {}
        for label, init_path in (("full", pretrain_path), ("noenc", no_enc_path)):
            sub = cfg.replaced(out_dir=os.path.join(cfg.out_dir, f"abl_{label}_{seed}"))
            os.makedirs(sub.out_dir, exist_ok=True)
            for name in (pl.MERGES_FILE, pl.VOCAB_FILE):
                with open(os.path.join(cfg.out_dir, name), "rb") as fi, open(
                    os.path.join(sub.out_dir, name), "wb"
                ) as fo:
                    fo.write(fi.read())
            sub = sub.replaced(
                finetune=sub.finetune.__class__(**{**sub.finetune.__dict__, "steps": budget})
            )
            ckpt = pl.stage_finetune_supervised(sub, init=init_path, seed=seed)
            bleus[label] = bleu_of(cfg, ckpt.params, ckpt.config)
        ok_c = ok_c and bleus["full"] > bleus["noenc"]
        c_detail.append(f"seed {seed}: full {bleus['full']:.1f} vs no-encoder {bleus['noenc']:.1f}")
        print(f"    ablation {c_detail[-1]}", flush=True)

    criterion(
        7,
        ok_a and ok_b and ok_c,
        f"(a) steps to 90 BLEU {results} csp<random 3/3: {ok_a}; "
        f"(b) unsupervised {hit.get('bleu', 0.0):.1f} BLEU at step {hit.get('step')} "
        f"(<=20000): {ok_b}; (c) no-encoder below full at {budget} steps 3/3: {ok_c}",
    )


def test_backtranslation_ablation_direction(toy_run):
    """Module-level check (not a numbered criterion): disabling the on-the-fly
    back-translation batches leaves unsupervised BLEU strictly lower at the
    same step budget, for 3/3 seeds."""
    cfg = toy_run
    pretrain_path = os.path.join(cfg.out_dir, pl.PRETRAIN_CKPT)
    model_cfg = load_checkpoint(pretrain_path).config
    tag_b = pl.direction_tags(cfg)[1]
    budget = 600
    results = {}
    for seed in (11, 12, 13):
        bleus = {}
        for label, use_bt in (("bt", True), ("dae_only", False)):
            sub = cfg.replaced(
                out_dir=os.path.join(cfg.out_dir, f"btabl_{label}_{seed}"),
                seed=seed,
                unsupervised=cfg.unsupervised.__class__(
                    **{**cfg.unsupervised.__dict__, "steps": budget,
                       "use_backtranslation": use_bt}
                ),
            )
            os.makedirs(sub.out_dir, exist_ok=True)
            for name in (pl.MERGES_FILE, pl.VOCAB_FILE):
                with open(os.path.join(cfg.out_dir, name), "rb") as fi, open(
                    os.path.join(sub.out_dir, name), "wb"
                ) as fo:
                    fo.write(fi.read())
            ckpt = pl.stage_finetune_unsupervised(sub, pretrain_path)
            bleus[label] = bleu_of(cfg, ckpt.params, model_cfg, tag=tag_b)
        results[seed] = bleus
        print(
            f"    seed {seed}: bt {bleus['bt']:.1f} vs dae-only {bleus['dae_only']:.1f}",
            flush=True,
        )
    ok = all(b["bt"] > b["dae_only"] for b in results.values())
    print(f"\n[example   ] {'PASS' if ok else 'FAIL'}  back-translation ablation, 3/3 seeds")
    assert ok, results


# ---------------------------------------------------------------- criterion 8


def test_criterion_08_k_sweep(tmp_path):
    data = str(tmp_path / "micro")
    generate_toy_dataset(
        data,
        ToySpec(
            n_content=60, n_anchors=24, mono_sentences=1500,
            parallel_train=200, parallel_valid=100, parallel_test=100, seed=21,
        ),
    )
    cfg = load_config(CONFIG_PATH).replaced(out_dir=str(tmp_path / "sweep"), seed=5)
    cfg = cfg.replaced(
        corpus=cfg.corpus.__class__(
            **{**cfg.corpus.__dict__, "mono_a": os.path.join(data, "mono.a.txt"),
               "mono_b": os.path.join(data, "mono.b.txt"), "sample_n": 3000}
        ),
        embeddings=cfg.embeddings.__class__(
            **{**cfg.embeddings.__dict__, "dim": 32, "epochs": 2}
        ),
        model=cfg.model.__class__(
            **{**cfg.model.__dict__, "layers_enc": 1, "layers_dec": 1, "d_model": 32,
               "d_ffn": 64, "heads": 2}
        ),
        pretrain=cfg.pretrain.__class__(
            **{**cfg.pretrain.__dict__, "steps": 60, "batch_tokens": 500, "warmup": 20}
        ),
        unsupervised=cfg.unsupervised.__class__(
            **{**cfg.unsupervised.__dict__, "steps": 60, "batch_tokens": 500, "warmup": 20}
        ),
        finetune=cfg.finetune.__class__(
            **{**cfg.finetune.__dict__,
               "valid_a": os.path.join(data, "valid.a.txt"),
               "valid_b": os.path.join(data, "valid.b.txt")}
        ),
        eval=cfg.eval.__class__(**{**cfg.eval.__dict__, "max_len": 24}),
    )
    rows = pl.run_k_sweep(cfg, [1, 3, 5, 7, 9])
    table = open(os.path.join(cfg.out_dir, "k_sweep.tsv")).read().splitlines()
    ok = (
        [r["k"] for r in rows] == [1, 3, 5, 7, 9]
        and all(math.isfinite(r["ppl"]) and r["ppl"] >= 1.0 for r in rows)
        and all(0.0 <= r["bleu"] <= 100.0 for r in rows)
        and len({(r["seed"], r["pretrain_steps"], r["unsup_steps"]) for r in rows}) == 1
        and len(table) == 6
        and table[0].split("\t") == ["k", "ppl", "bleu", "seed", "pretrain_steps", "unsup_steps"]
    )
    shape = ", ".join(f"k={r['k']}: ppl {r['ppl']:.2f}, bleu {r['bleu']:.1f}" for r in rows)
    criterion(
        8,
        ok,
        f"k-sweep over {{1,3,5,7,9}} complete, identical seeds/budgets per row; {shape} "
        "(shape reported, not asserted)",
    )


# ---------------------------------------------------------------- criterion 9


def test_criterion_09_determinism(tmp_path):
    data = str(tmp_path / "micro")
    generate_toy_dataset(
        data,
        ToySpec(
            n_content=40, n_anchors=16, mono_sentences=600,
            parallel_train=100, parallel_valid=40, parallel_test=40, seed=8,
        ),
    )
    cfg = load_config(CONFIG_PATH).replaced(out_dir=str(tmp_path / "run"), seed=2)
    cfg = cfg.replaced(
        corpus=cfg.corpus.__class__(
            **{**cfg.corpus.__dict__, "mono_a": os.path.join(data, "mono.a.txt"),
               "mono_b": os.path.join(data, "mono.b.txt"), "sample_n": 1200}
        ),
        embeddings=cfg.embeddings.__class__(
            **{**cfg.embeddings.__dict__, "dim": 16, "epochs": 2}
        ),
        model=cfg.model.__class__(
            **{**cfg.model.__dict__, "layers_enc": 1, "layers_dec": 1, "d_model": 32,
               "d_ffn": 64, "heads": 2}
        ),
        pretrain=cfg.pretrain.__class__(
            **{**cfg.pretrain.__dict__, "steps": 12, "batch_tokens": 300, "warmup": 4}
        ),
    )
    pl.run_pipeline_prepare(cfg)
    pl.stage_extract_lexicon(cfg)

    # stage re-run from its manifest config: byte-identical artifacts
    stage_artifacts = [
        "sample.txt", "bpe.merges.txt", "vocab.tsv", "emb.a.txt", "emb.b.txt", "map.txt",
        "lexicon.k3.a2b.tsv", "lexicon.k3.b2a.tsv", "manifest.extract-lexicon.json",
    ]
    before = {
        n: open(os.path.join(cfg.out_dir, n), "rb").read() for n in stage_artifacts
    }
    with open(os.path.join(cfg.out_dir, "manifest.learn-bpe.json")) as f:
        manifest_cfg = json.load(f)["config"]
    re_cfg = cfg.__class__.from_dict(manifest_cfg)
    pl.run_pipeline_prepare(re_cfg)
    pl.stage_extract_lexicon(re_cfg)
    rerun_identical = all(
        open(os.path.join(cfg.out_dir, n), "rb").read() == before[n] for n in stage_artifacts
    )

    # resume equals uninterrupted training bitwise
    full = pl.stage_pretrain(cfg, ckpt_name="full.ckpt")
    half_cfg = cfg.replaced(
        pretrain=cfg.pretrain.__class__(**{**cfg.pretrain.__dict__, "steps": 6})
    )
    pl.stage_pretrain(half_cfg, ckpt_name="half.ckpt")
    resumed = pl.stage_pretrain(
        cfg, resume=os.path.join(cfg.out_dir, "half.ckpt"), ckpt_name="resumed.ckpt"
    )
    resume_identical = full.step == resumed.step == 12 and all(
        torch.equal(full.params[k], resumed.params[k]) for k in full.params
    )
    save_checkpoint(full, os.path.join(cfg.out_dir, "full2.ckpt"))
    byte_identical = (
        open(os.path.join(cfg.out_dir, "resumed.ckpt"), "rb").read()
        == open(os.path.join(cfg.out_dir, "full2.ckpt"), "rb").read()
    )
    criterion(
        9,
        rerun_identical and resume_identical and byte_identical,
        f"stage re-run from manifest byte-identical over {len(stage_artifacts)} artifacts: "
        f"{rerun_identical}; resume(6+6) == uninterrupted(12) bitwise: "
        f"{resume_identical and byte_identical}",
    )


# --------------------------------------------------------------- criterion 10


def test_criterion_10_codeswitch_builder():
    vocab = Vocab.from_tokens([f"w{i}" for i in range(200)])
    rng = np.random.default_rng(3)
    lex_entries = {}
    for i in range(5, 205):
        second = 5 + (i * 7) % 200
        if second == i:
            second = 5 + (i * 7 + 1) % 200
        lex_entries[i] = ((5 + (i * 3) % 200, 0.7), (second, 0.3))
    lex = TranslationLexicon(lex_entries, 2, "", vocab, vocab)
    sentences = [[int(t) for t in rng.integers(5, 205, size=10)] for _ in range(200)]
    mixed, manifest, flagged = build_codeswitch_testset(sentences, lex, 0.3, seed=4)
    top1_ok = all(
        sentences[i][pos] == orig and lex.entries[orig][0][0] == repl and mixed[i][pos] == repl
        for i, pos, orig, repl in manifest
    )
    per_sentence = {}
    for i, *_ in manifest:
        per_sentence[i] = per_sentence.get(i, 0) + 1
    count_ok = not flagged and all(per_sentence.get(i, 0) == 3 for i in range(len(sentences)))
    untouched_ok = all(
        mixed[i][p] == sentences[i][p]
        for i in range(len(sentences))
        for p in range(10)
        if (i, p) not in {(m[0], m[1]) for m in manifest}
    )
    criterion(
        10,
        top1_ok and count_ok and untouched_ok,
        f"{len(manifest)} replacements across {len(sentences)} sentences: every replacement "
        f"is the top-1 entry ({top1_ok}), exactly round(0.3*10)=3 per sentence ({count_ok}), "
        f"other positions untouched ({untouched_ok})",
    )
