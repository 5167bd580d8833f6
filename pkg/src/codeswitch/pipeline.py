"""Pipeline stages gluing the modules into file-to-file runs.

Stages communicate only through documented artifact files, so any stage can
be re-run independently. Every run writes a manifest (config echo, SHA-256 of
inputs and artifacts, format versions) into the output directory; re-running
a stage from its manifest's config and inputs reproduces the artifacts byte
for byte in serial mode. Training logs carry wall-clock telemetry and are the
one output excluded from that contract.
"""

from __future__ import annotations

import hashlib
import json
import os
from dataclasses import asdict

from . import __version__
from .config import ExperimentConfig
from .corpus import ValidationError, drop_long_sentences, load_corpus, sample_balanced, save_corpus
from .embedding import EmbeddingMatrix, load_embeddings, save_embeddings, token_counts, train_sgns
from .evaluation import EvalReport, bleu, lexicon_precision, perplexity, save_report
from .lexicon import extract_lexicon, load_lexicon, save_lexicon
from .mapping import (
    load_map,
    load_seed_pairs,
    normalize_embeddings,
    restrict_to_tokens,
    save_map,
    seed_pairs_identical,
    self_learn,
)
from .model import (
    FORMAT_VERSION,
    Checkpoint,
    ModelConfig,
    decode,
    greedy_decode_batch,
    init_model,
    load_checkpoint,
    save_checkpoint,
)
from .subword import (
    BpeEncoder,
    Vocab,
    apply_bpe,
    build_vocab,
    detokenize,
    encode_corpus,
    learn_bpe,
    load_bpe,
    load_vocab,
    save_bpe,
    save_vocab,
)
from .train import (
    JsonlLogger,
    TrainConfig,
    backtranslate,
    finetune_supervised,
    finetune_unsupervised,
    pretrain,
    selective_init,
)

SAMPLE_FILE = "sample.txt"
MERGES_FILE = "bpe.merges.txt"
VOCAB_FILE = "vocab.tsv"
MAP_FILE = "map.txt"
PRETRAIN_CKPT = "pretrain.ckpt"
FINETUNE_CKPT = "finetune.ckpt"
UNSUP_CKPT = "unsup.ckpt"


def sha256_file(path: str | os.PathLike) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as f:
        for chunk in iter(lambda: f.read(1 << 20), b""):
            h.update(chunk)
    return h.hexdigest()


def write_manifest(out_dir, command: str, config: dict, inputs, artifacts) -> str:
    manifest = {
        "command": command,
        "config": config,
        "inputs": {os.path.basename(p): sha256_file(p) for p in inputs},
        "artifacts": {os.path.basename(p): sha256_file(p) for p in artifacts},
        "versions": {"package": __version__, "checkpoint_format": FORMAT_VERSION},
    }
    path = os.path.join(out_dir, f"manifest.{command}.json")
    with open(path, "w", encoding="utf-8", newline="\n") as f:
        f.write(json.dumps(manifest, sort_keys=True, indent=1) + "\n")
    return path


def _out(cfg: ExperimentConfig, name: str) -> str:
    os.makedirs(cfg.out_dir, exist_ok=True)
    return os.path.join(cfg.out_dir, name)


def direction_tags(cfg: ExperimentConfig) -> tuple[str, str]:
    return f"<2{cfg.corpus.tag_a}>", f"<2{cfg.corpus.tag_b}>"


def load_assets(cfg: ExperimentConfig) -> tuple[BpeEncoder, Vocab]:
    encoder = BpeEncoder(load_bpe(_out(cfg, MERGES_FILE)))
    vocab = load_vocab(_out(cfg, VOCAB_FILE))
    return encoder, vocab


def lexicon_paths(cfg: ExperimentConfig, k: int | None = None) -> tuple[str, str]:
    k = cfg.lexicon.k if k is None else k
    a, b = cfg.corpus.tag_a, cfg.corpus.tag_b
    return _out(cfg, f"lexicon.k{k}.{a}2{b}.tsv"), _out(cfg, f"lexicon.k{k}.{b}2{a}.tsv")


def stage_learn_bpe(cfg: ExperimentConfig) -> dict:
    """Balanced sample, BPE merges, and the shared vocabulary."""
    corpus_a = load_corpus(cfg.corpus.mono_a, cfg.corpus.tag_a)
    corpus_b = load_corpus(cfg.corpus.mono_b, cfg.corpus.tag_b)
    sample, sample_report = sample_balanced(corpus_a, corpus_b, cfg.corpus.sample_n, cfg.seed)
    sample_path = _out(cfg, SAMPLE_FILE)
    save_corpus(sample, sample_path)

    model = learn_bpe(sample, cfg.bpe.num_merges)
    merges_path = _out(cfg, MERGES_FILE)
    save_bpe(model, merges_path)

    encoder = BpeEncoder(model)
    extra = direction_tags(cfg) if cfg.bpe.add_direction_tags else ()
    vocab = build_vocab(
        (apply_bpe(encoder, s) for s in sample), cfg.bpe.vocab_max, extra_tokens=extra
    )
    vocab_path = _out(cfg, VOCAB_FILE)
    save_vocab(vocab, vocab_path)

    write_manifest(
        cfg.out_dir, "learn-bpe", cfg.to_dict(),
        [cfg.corpus.mono_a, cfg.corpus.mono_b], [sample_path, merges_path, vocab_path],
    )
    return {
        "n_merges": len(model.merges),
        "vocab_size": len(vocab),
        "sample_replacement": sample_report.with_replacement,
    }


def _encoded_mono(cfg: ExperimentConfig, encoder, vocab, filtered: bool = False):
    out = []
    for path, tag in ((cfg.corpus.mono_a, cfg.corpus.tag_a), (cfg.corpus.mono_b, cfg.corpus.tag_b)):
        ids = encode_corpus(load_corpus(path, tag), encoder, vocab)
        if filtered:
            ids, _ = drop_long_sentences(ids, cfg.corpus.max_tokens)
        out.append(ids)
    return out


def stage_train_embeddings(cfg: ExperimentConfig) -> dict:
    encoder, vocab = load_assets(cfg)
    ids_a, ids_b = _encoded_mono(cfg, encoder, vocab)
    artifacts = []
    for lang, ids in ((cfg.corpus.tag_a, ids_a), (cfg.corpus.tag_b, ids_b)):
        e = cfg.embeddings
        emb = train_sgns(
            ids, vocab, dim=e.dim, window=e.window, negatives=e.negatives,
            epochs=e.epochs, lr=e.lr, seed=cfg.seed + (1 if lang == cfg.corpus.tag_a else 2),
        )
        path = _out(cfg, f"emb.{lang}.txt")
        save_embeddings(emb, path)
        artifacts.append(path)
    write_manifest(
        cfg.out_dir, "train-embeddings", cfg.to_dict(),
        [cfg.corpus.mono_a, cfg.corpus.mono_b, _out(cfg, MERGES_FILE), _out(cfg, VOCAB_FILE)],
        artifacts,
    )
    return {"dim": cfg.embeddings.dim}


def _restricted_spaces(cfg: ExperimentConfig) -> tuple[EmbeddingMatrix, EmbeddingMatrix]:
    """Both embedding spaces, cut to tokens seen min_count times, normalized."""
    encoder, vocab = load_assets(cfg)
    ids_a, ids_b = _encoded_mono(cfg, encoder, vocab)
    spaces = []
    for tag, ids in ((cfg.corpus.tag_a, ids_a), (cfg.corpus.tag_b, ids_b)):
        emb = load_embeddings(_out(cfg, f"emb.{tag}.txt"), vocab)
        counts = token_counts(ids, len(vocab))
        keep = [
            vocab.token_of(i)
            for i in range(5, len(vocab))
            if counts[i] >= cfg.embeddings.min_count
        ]
        spaces.append(normalize_embeddings(restrict_to_tokens(emb, keep)))
    return spaces[0], spaces[1]


def stage_map_embeddings(cfg: ExperimentConfig) -> dict:
    ra, rb = _restricted_spaces(cfg)
    if cfg.mapping.seed_pairs:
        seeds = load_seed_pairs(cfg.mapping.seed_pairs, ra.vocab, rb.vocab)
    else:
        seeds = seed_pairs_identical(ra.vocab, rb.vocab)
    w, report = self_learn(
        ra, rb, seeds,
        max_iters=cfg.mapping.max_iters, tol=cfg.mapping.tol,
        neighborhood=cfg.mapping.neighborhood, metric=cfg.mapping.metric,
    )
    map_path = _out(cfg, MAP_FILE)
    save_map(w, map_path)
    report_path = _out(cfg, "mapping.report.json")
    with open(report_path, "w", encoding="utf-8", newline="\n") as f:
        f.write(
            json.dumps(
                {
                    "n_seeds": len(seeds),
                    "iterations": report.iterations,
                    "converged": report.converged,
                    "n_pairs": report.n_pairs,
                    "mean_similarity": report.mean_similarity,
                },
                sort_keys=True,
            )
            + "\n"
        )
    inputs = [
        _out(cfg, f"emb.{cfg.corpus.tag_a}.txt"), _out(cfg, f"emb.{cfg.corpus.tag_b}.txt"),
        _out(cfg, MERGES_FILE), _out(cfg, VOCAB_FILE),
    ]
    write_manifest(cfg.out_dir, "map-embeddings", cfg.to_dict(), inputs, [map_path, report_path])
    return {"iterations": report.iterations, "n_pairs": report.n_pairs}


def stage_extract_lexicon(cfg: ExperimentConfig, k: int | None = None) -> dict:
    k = cfg.lexicon.k if k is None else k
    ra, rb = _restricted_spaces(cfg)
    w = load_map(_out(cfg, MAP_FILE))
    a, b = cfg.corpus.tag_a, cfg.corpus.tag_b
    fwd = extract_lexicon(
        w.apply(ra), rb, k=k, direction_tag=f"{a}>{b}",
        neighborhood=cfg.mapping.neighborhood, metric=cfg.mapping.metric,
    )
    # the inverse of an orthogonal map is its transpose
    bwd = extract_lexicon(
        EmbeddingMatrix(rb.vectors @ w.w, rb.vocab), ra, k=k, direction_tag=f"{b}>{a}",
        neighborhood=cfg.mapping.neighborhood, metric=cfg.mapping.metric,
    )
    path_fwd, path_bwd = lexicon_paths(cfg, k)
    save_lexicon(fwd, path_fwd)
    save_lexicon(bwd, path_bwd)
    write_manifest(
        cfg.out_dir, "extract-lexicon", {**cfg.to_dict(), "k": k},
        [_out(cfg, MAP_FILE), _out(cfg, f"emb.{a}.txt"), _out(cfg, f"emb.{b}.txt")],
        [path_fwd, path_bwd],
    )
    return {
        "k": k,
        "entries": (len(fwd), len(bwd)),
        "low_confidence": (len(fwd.low_confidence), len(bwd.low_confidence)),
    }


def model_config(cfg: ExperimentConfig, vocab_size: int) -> ModelConfig:
    m = cfg.model
    return ModelConfig(
        vocab_size=vocab_size, layers_enc=m.layers_enc, layers_dec=m.layers_dec,
        d_model=m.d_model, d_ffn=m.d_ffn, heads=m.heads, dropout=m.dropout,
        max_positions=m.max_positions, label_smoothing=m.label_smoothing,
    )


def load_direction_lexicons(cfg: ExperimentConfig, vocab: Vocab, k: int | None = None):
    path_fwd, path_bwd = lexicon_paths(cfg, k)
    a, b = cfg.corpus.tag_a, cfg.corpus.tag_b
    fwd = load_lexicon(path_fwd, vocab, vocab, direction_tag=f"{a}>{b}")
    bwd = load_lexicon(path_bwd, vocab, vocab, direction_tag=f"{b}>{a}")
    return fwd, bwd


def stage_pretrain(
    cfg: ExperimentConfig,
    resume: str | None = None,
    k: int | None = None,
    ckpt_name: str = PRETRAIN_CKPT,
    on_eval=None,
) -> Checkpoint:
    encoder, vocab = load_assets(cfg)
    ids_a, ids_b = _encoded_mono(cfg, encoder, vocab, filtered=True)
    lex_ab, lex_ba = load_direction_lexicons(cfg, vocab, k)
    p = cfg.pretrain
    tc = TrainConfig(
        max_steps=p.steps, lr=p.lr, warmup_steps=p.warmup, batch_tokens=p.batch_tokens,
        seed=cfg.seed, policy=p.policy(), save_every=p.save_every,
    )
    ckpt_path = _out(cfg, ckpt_name)
    logger = JsonlLogger(_out(cfg, ckpt_name.replace(".ckpt", ".log.jsonl")))

    # a few corrupted examples in the aligned four-row debug format
    from .corrupt import corrupt_csp, dump_examples, sentence_rng

    samples = [
        corrupt_csp(ids_a[i], lex_ab, tc.policy, sentence_rng(tc.seed, 0, i), vocab)
        for i in range(min(3, len(ids_a)))
    ]
    with open(_out(cfg, "corruption_samples.txt"), "w", encoding="utf-8", newline="\n") as f:
        f.write(dump_examples(samples, vocab))

    result = pretrain(
        (ids_a, ids_b), (lex_ab, lex_ba), vocab,
        None if resume else model_config(cfg, len(vocab)), tc,
        resume=load_checkpoint(resume) if resume else None,
        logger=logger, save_path=ckpt_path, on_eval=on_eval,
    )
    path_fwd, path_bwd = lexicon_paths(cfg, k)
    write_manifest(
        cfg.out_dir, "pretrain", cfg.to_dict(),
        [cfg.corpus.mono_a, cfg.corpus.mono_b, _out(cfg, MERGES_FILE), _out(cfg, VOCAB_FILE),
         path_fwd, path_bwd],
        [ckpt_path],
    )
    return result


def encode_parallel(cfg: ExperimentConfig, encoder, vocab, path_src, path_tgt):
    """Aligned tokenized pairs; drops a pair when either side is over-length."""
    src = encode_corpus(load_corpus(path_src), encoder, vocab)
    tgt = encode_corpus(load_corpus(path_tgt), encoder, vocab)
    if len(src) != len(tgt):
        raise ValidationError(
            f"misaligned parallel files: {path_src} has {len(src)} lines, "
            f"{path_tgt} has {len(tgt)}"
        )
    keep = [
        (s, t)
        for s, t in zip(src, tgt)
        if len(s) <= cfg.corpus.max_tokens and len(t) <= cfg.corpus.max_tokens
    ]
    return [s for s, _ in keep], [t for _, t in keep]


def stage_finetune_supervised(
    cfg: ExperimentConfig,
    init: str | None = None,
    ckpt_name: str = FINETUNE_CKPT,
    on_eval=None,
    seed: int | None = None,
) -> Checkpoint:
    ft = cfg.finetune
    if not ft.train_a or not ft.train_b:
        raise ValidationError("finetune.train_a and finetune.train_b are required")
    encoder, vocab = load_assets(cfg)
    src, tgt = encode_parallel(cfg, encoder, vocab, ft.train_a, ft.train_b)
    start = load_checkpoint(init) if init else init_model(
        model_config(cfg, len(vocab)), cfg.seed if seed is None else seed
    )
    tc = TrainConfig(
        max_steps=ft.steps, lr=ft.lr, warmup_steps=ft.warmup, batch_tokens=ft.batch_tokens,
        seed=cfg.seed if seed is None else seed,
        eval_every=max(1, ft.steps // 20) if on_eval else 0,
    )
    ckpt_path = _out(cfg, ckpt_name)
    logger = JsonlLogger(_out(cfg, ckpt_name.replace(".ckpt", ".log.jsonl")))
    result = finetune_supervised(
        start, src, tgt, vocab, tc, logger=logger, save_path=ckpt_path, on_eval=on_eval
    )
    inputs = [ft.train_a, ft.train_b, _out(cfg, MERGES_FILE), _out(cfg, VOCAB_FILE)]
    if init:
        inputs.append(init)
    write_manifest(cfg.out_dir, "finetune-supervised", cfg.to_dict(), inputs, [ckpt_path])
    return result


def stage_finetune_unsupervised(
    cfg: ExperimentConfig, init: str, ckpt_name: str = UNSUP_CKPT, on_eval=None
) -> Checkpoint:
    encoder, vocab = load_assets(cfg)
    tags = direction_tags(cfg)
    missing = [t for t in tags if t not in vocab.id_of]
    if missing:
        raise ValidationError(
            f"direction tags {missing} not in the vocabulary; rebuild it with "
            "bpe.add_direction_tags enabled"
        )
    ids_a, ids_b = _encoded_mono(cfg, encoder, vocab, filtered=True)
    u = cfg.unsupervised
    tc = TrainConfig(
        max_steps=u.steps, lr=u.lr, warmup_steps=u.warmup, batch_tokens=u.batch_tokens,
        seed=cfg.seed, noise_drop=u.noise_drop, noise_shuffle=u.noise_shuffle,
        eval_every=max(1, u.steps // 40) if on_eval else 0,
    )
    ckpt_path = _out(cfg, ckpt_name)
    logger = JsonlLogger(_out(cfg, ckpt_name.replace(".ckpt", ".log.jsonl")))
    result = finetune_unsupervised(
        load_checkpoint(init), (ids_a, ids_b), vocab,
        (vocab.id_of[tags[0]], vocab.id_of[tags[1]]), tc,
        logger=logger, save_path=ckpt_path, on_eval=on_eval,
        use_backtranslation=u.use_backtranslation,
    )
    write_manifest(
        cfg.out_dir, "finetune-unsupervised", cfg.to_dict(),
        [cfg.corpus.mono_a, cfg.corpus.mono_b, init, _out(cfg, MERGES_FILE), _out(cfg, VOCAB_FILE)],
        [ckpt_path],
    )
    return result


def translate_ids(
    ckpt: Checkpoint, vocab: Vocab, sentences_ids, beam: int, max_len: int, tag: str | None
):
    tag_id = vocab.id_of[tag] if tag else None
    enc_inputs = [
        ([tag_id] if tag_id is not None else []) + list(s) + [vocab.eos_id]
        for s in sentences_ids
    ]
    if beam == 1:
        params = {k: v.detach().clone() for k, v in ckpt.params.items()}
        outs = []
        for start in range(0, len(enc_inputs), 64):
            outs.extend(
                greedy_decode_batch(
                    params, ckpt.config, enc_inputs[start : start + 64], max_len=max_len,
                    bos_id=vocab.bos_id, eos_id=vocab.eos_id, pad_id=vocab.pad_id,
                )
            )
        return outs
    return [
        decode(ckpt, e, beam=beam, max_len=max_len, bos_id=vocab.bos_id,
               eos_id=vocab.eos_id, pad_id=vocab.pad_id)
        for e in enc_inputs
    ]


def translate_file(
    cfg: ExperimentConfig, ckpt_path: str, input_path: str, output_path: str,
    beam: int | None = None, tag: str | None = None,
) -> dict:
    encoder, vocab = load_assets(cfg)
    ckpt = load_checkpoint(ckpt_path)
    corpus = load_corpus(input_path)
    ids = encode_corpus(corpus, encoder, vocab)
    beam = cfg.eval.beam if beam is None else beam
    outs = translate_ids(ckpt, vocab, ids, beam, cfg.eval.max_len, tag)
    lines = [detokenize(vocab.decode(o)) if o else "<empty>" for o in outs]
    with open(output_path, "w", encoding="utf-8", newline="\n") as f:
        for line in lines:
            f.write(line + "\n")
    write_manifest(
        cfg.out_dir, "translate", {**cfg.to_dict(), "beam": beam, "tag": tag},
        [ckpt_path, input_path], [output_path],
    )
    return {"n_sentences": len(lines)}


def bleu_of_files(hyp_path: str, ref_path: str, lowercase: bool = True) -> EvalReport:
    hyp = load_corpus(hyp_path)
    ref = load_corpus(ref_path)
    h = [s.lower() if lowercase else s for s in hyp.sentences]
    r = [s.lower() if lowercase else s for s in ref.sentences]
    value = bleu(h, r)
    return EvalReport("bleu", value, len(h), {"lowercase": lowercase})


def evaluate_bleu_checkpoint(
    cfg: ExperimentConfig, ckpt: Checkpoint, src_path: str, ref_path: str,
    tag: str | None, beam: int | None = None,
) -> float:
    """Translate a source file in memory and score against the reference."""
    encoder, vocab = load_assets(cfg)
    ids = encode_corpus(load_corpus(src_path), encoder, vocab)
    outs = translate_ids(ckpt, vocab, ids, beam or cfg.eval.beam, cfg.eval.max_len, tag)
    hyp = [detokenize(vocab.decode(o)) for o in outs]
    ref = [s for s in load_corpus(ref_path).sentences]
    if cfg.eval.lowercase:
        hyp = [h.lower() for h in hyp]
        ref = [r.lower() for r in ref]
    return bleu(hyp, ref)


def evaluate_ppl(
    cfg: ExperimentConfig, ckpt_path: str, valid_a: str, valid_b: str | None,
    k: int | None = None,
) -> EvalReport:
    encoder, vocab = load_assets(cfg)
    ckpt = load_checkpoint(ckpt_path)
    lex_ab, lex_ba = load_direction_lexicons(cfg, vocab, k)
    corpora = [encode_corpus(load_corpus(valid_a), encoder, vocab)]
    lexicons = [lex_ab]
    if valid_b:
        corpora.append(encode_corpus(load_corpus(valid_b), encoder, vocab))
        lexicons.append(lex_ba)
    value = perplexity(
        ckpt, corpora, lexicons, cfg.pretrain.policy(), cfg.eval.ppl_seed
    )
    n = sum(len(c) for c in corpora)
    report = EvalReport(
        "ppl", value, n, {"policy": asdict(cfg.pretrain.policy()), "seed": cfg.eval.ppl_seed},
    )
    path = _out(cfg, "report.ppl.json")
    save_report(report, path)
    write_manifest(
        cfg.out_dir, "evaluate-ppl", cfg.to_dict(),
        [ckpt_path, valid_a] + ([valid_b] if valid_b else []), [path],
    )
    return report


def stage_build_cs_testset(
    cfg: ExperimentConfig, input_path: str, ratio: float, k: int | None = None,
    output_name: str = "cs_testset.txt", manifest_name: str = "cs_manifest.tsv",
) -> dict:
    from .evaluation import build_codeswitch_testset

    encoder, vocab = load_assets(cfg)
    lex_ab, _ = load_direction_lexicons(cfg, vocab, k)
    ids = encode_corpus(load_corpus(input_path), encoder, vocab)
    mixed, manifest, flagged = build_codeswitch_testset(ids, lex_ab, ratio, cfg.seed)
    out_path = _out(cfg, output_name)
    with open(out_path, "w", encoding="utf-8", newline="\n") as f:
        for sent in mixed:
            f.write(detokenize(vocab.decode(sent)) + "\n")
    man_path = _out(cfg, manifest_name)
    with open(man_path, "w", encoding="utf-8", newline="\n") as f:
        for i, pos, orig, repl in manifest:
            f.write(f"{i}\t{pos}\t{vocab.token_of(orig)}\t{vocab.token_of(repl)}\n")
    write_manifest(
        cfg.out_dir, "build-cs-testset", {**cfg.to_dict(), "ratio": ratio},
        [input_path], [out_path, man_path],
    )
    return {"n_sentences": len(mixed), "n_replacements": len(manifest), "flagged": flagged}


def stage_backtranslate(
    cfg: ExperimentConfig, ckpt_path: str, input_path: str,
    out_src: str, out_tgt: str, beam: int | None = None, tag: str | None = None,
) -> dict:
    encoder, vocab = load_assets(cfg)
    ckpt = load_checkpoint(ckpt_path)
    ids = encode_corpus(load_corpus(input_path), encoder, vocab)
    tag_id = vocab.id_of[tag] if tag else None
    pairs, report = backtranslate(
        ckpt, ids, vocab, beam=beam or cfg.eval.beam, tag_id=tag_id, max_len=cfg.eval.max_len
    )
    with open(out_src, "w", encoding="utf-8", newline="\n") as fs, open(
        out_tgt, "w", encoding="utf-8", newline="\n"
    ) as ft:
        for src, tgt in pairs:
            fs.write(detokenize(vocab.decode(src)) + "\n")
            ft.write(detokenize(vocab.decode(tgt)) + "\n")
    write_manifest(
        cfg.out_dir, "backtranslate", {**cfg.to_dict(), "beam": beam, "tag": tag},
        [ckpt_path, input_path], [out_src, out_tgt],
    )
    return report


def stage_ablate_init(
    cfg: ExperimentConfig, ckpt_path: str, components, fresh_seed: int,
    out_name: str = "ablated.ckpt",
) -> str:
    pretrained = load_checkpoint(ckpt_path)
    fresh = init_model(pretrained.config, fresh_seed)
    out = selective_init(pretrained, fresh, tuple(components))
    path = _out(cfg, out_name)
    save_checkpoint(out, path)
    write_manifest(
        cfg.out_dir, "ablate-init",
        {**cfg.to_dict(), "components": sorted(components), "fresh_seed": fresh_seed},
        [ckpt_path], [path],
    )
    return path


def run_pipeline_prepare(cfg: ExperimentConfig) -> dict:
    """Stages up to (and excluding) lexicon extraction."""
    info = stage_learn_bpe(cfg)
    info.update(stage_train_embeddings(cfg))
    info.update(stage_map_embeddings(cfg))
    return info


def run_k_sweep(cfg: ExperimentConfig, k_values: list[int]) -> list[dict]:
    """One controlled pipeline run per k: lexicons, pre-train, unsupervised
    fine-tune, PPL and BLEU, with shared seeds and budgets across rows."""
    run_pipeline_prepare(cfg)
    ft = cfg.finetune
    if not (ft.valid_a and ft.valid_b):
        raise ValidationError("k-sweep needs finetune.valid_a and finetune.valid_b")
    rows = []
    for k in k_values:
        sub = cfg.replaced(out_dir=os.path.join(cfg.out_dir, f"k{k}"))
        os.makedirs(sub.out_dir, exist_ok=True)
        shared = (
            SAMPLE_FILE, MERGES_FILE, VOCAB_FILE, MAP_FILE,
            f"emb.{cfg.corpus.tag_a}.txt", f"emb.{cfg.corpus.tag_b}.txt",
        )
        for name in shared:
            src = _out(cfg, name)
            dst = _out(sub, name)
            with open(src, "rb") as fi, open(dst, "wb") as fo:
                fo.write(fi.read())
        stage_extract_lexicon(sub, k=k)
        stage_pretrain(sub, k=k)
        stage_finetune_unsupervised(sub, _out(sub, PRETRAIN_CKPT))
        ppl_report = evaluate_ppl(sub, _out(sub, PRETRAIN_CKPT), ft.valid_a, ft.valid_b, k=k)
        unsup = load_checkpoint(_out(sub, UNSUP_CKPT))
        tag_b = direction_tags(cfg)[1]
        bleu_value = evaluate_bleu_checkpoint(sub, unsup, ft.valid_a, ft.valid_b, tag=tag_b)
        rows.append(
            {"k": k, "ppl": round(ppl_report.value, 4), "bleu": round(bleu_value, 2),
             "seed": cfg.seed, "pretrain_steps": cfg.pretrain.steps,
             "unsup_steps": cfg.unsupervised.steps}
        )
    table_path = _out(cfg, "k_sweep.tsv")
    with open(table_path, "w", encoding="utf-8", newline="\n") as f:
        cols = ["k", "ppl", "bleu", "seed", "pretrain_steps", "unsup_steps"]
        f.write("\t".join(cols) + "\n")
        for row in rows:
            f.write("\t".join(str(row[c]) for c in cols) + "\n")
    write_manifest(
        cfg.out_dir, "k-sweep", {**cfg.to_dict(), "k_values": list(k_values)},
        [cfg.corpus.mono_a, cfg.corpus.mono_b], [table_path],
    )
    return rows


def gold_lexicon_precision(cfg: ExperimentConfig, gold_path: str, k: int | None = None) -> dict:
    """Precision of the extracted lexicon against a word-level gold table.

    Only gold pairs whose both sides are single tokens in the shared
    vocabulary are scored; the rest are reported as skipped.
    """
    from .toydata import load_gold_pairs

    encoder, vocab = load_assets(cfg)
    lex_ab, _ = load_direction_lexicons(cfg, vocab, k)
    gold_words = load_gold_pairs(gold_path)
    gold_ids = []
    skipped = 0
    for wa, wb in gold_words:
        sa, sb = vocab.id_of.get(wa), vocab.id_of.get(wb)
        if sa is None or sb is None:
            skipped += 1
            continue
        gold_ids.append((sa, sb))
    p1 = lexicon_precision(lex_ab, gold_ids, 1)
    pk = lexicon_precision(lex_ab, gold_ids, lex_ab.k)
    return {"p_at_1": p1, f"p_at_{lex_ab.k}": pk, "n_gold": len(gold_ids), "skipped": skipped}
