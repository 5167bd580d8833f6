"""Command-line surface: one binary, one subcommand per pipeline stage.

Stages communicate only via the documented artifact files inside the run
directory, so each subcommand can be re-run independently. Exit codes:
0 success, 1 runtime failure, 2 usage error, 3 validation failure.
"""

from __future__ import annotations

import argparse
import json
import sys
import traceback

import torch

from .config import ExperimentConfig, load_config
from .corpus import ValidationError
from .model import COMPONENTS


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="codeswitch",
        description="Code-switching pre-training for NMT, desk scale.",
    )
    parser.add_argument("--seed", type=int, default=None, help="override the config seed")
    parser.add_argument("--workers", type=int, default=None,
                        help="compute threads; 1 is the deterministic contract mode")
    parser.add_argument("--out", default=None, help="override the config output directory")
    sub = parser.add_subparsers(dest="command", required=True)

    def add(name, help_, config=True):
        p = sub.add_parser(name, help=help_)
        if config:
            p.add_argument("--config", required=True, help="experiment config (YAML/JSON)")
        return p

    add("learn-bpe", "balanced sample, BPE merges, shared vocabulary")

    p = add("apply-bpe", "tokenize a text file with learned merges", config=False)
    p.add_argument("--merges", required=True)
    p.add_argument("--input", required=True)
    p.add_argument("--output", required=True)

    add("train-embeddings", "skip-gram embeddings for both languages")
    add("map-embeddings", "self-learned orthogonal map between the spaces")

    p = add("extract-lexicon", "top-k probabilistic translation lexicons")
    p.add_argument("--k", type=int, default=None, help="override lexicon.k")

    p = add("pretrain", "code-switch pre-training")
    p.add_argument("--resume", default=None, help="checkpoint to resume from")
    p.add_argument("--k", type=int, default=None, help="lexicon k to load")

    p = add("finetune-supervised", "fine-tune on parallel data")
    p.add_argument("--init", default=None, help="initial checkpoint (default: fresh)")

    p = add("finetune-unsupervised", "denoising + back-translation fine-tuning")
    p.add_argument("--init", required=True, help="pre-trained checkpoint")

    p = add("backtranslate", "synthetic parallel data from a reverse model")
    p.add_argument("--ckpt", required=True)
    p.add_argument("--input", required=True, help="target-language monolingual text")
    p.add_argument("--output-src", required=True)
    p.add_argument("--output-tgt", required=True)
    p.add_argument("--beam", type=int, default=None)
    p.add_argument("--tag", default=None, help="direction tag token, e.g. '<2a>'")

    p = add("translate", "translate a text file")
    p.add_argument("--ckpt", required=True)
    p.add_argument("--input", required=True)
    p.add_argument("--output", required=True)
    p.add_argument("--beam", type=int, default=None)
    p.add_argument("--tag", default=None)

    p = add("evaluate-bleu", "corpus BLEU of a hypothesis file", config=False)
    p.add_argument("--hyp", required=True)
    p.add_argument("--ref", required=True)
    p.add_argument("--keep-case", action="store_true")

    p = add("evaluate-ppl", "masked-objective perplexity of a checkpoint")
    p.add_argument("--ckpt", required=True)
    p.add_argument("--valid-a", required=True)
    p.add_argument("--valid-b", default=None)
    p.add_argument("--k", type=int, default=None)

    p = add("k-sweep", "lexicon-size sweep: pretrain + fine-tune + eval per k")
    p.add_argument("--k-values", default="1,3,5,7,9")

    p = add("build-cs-testset", "code-switched test set from top-1 lexicon entries")
    p.add_argument("--input", required=True)
    p.add_argument("--ratio", type=float, required=True)
    p.add_argument("--k", type=int, default=None)

    p = add("ablate-init", "selective re-initialization of checkpoint components")
    p.add_argument("--ckpt", required=True)
    p.add_argument("--keep", required=True,
                   help=f"comma list of components to keep pretrained, from {COMPONENTS}")
    p.add_argument("--fresh-seed", type=int, default=1)

    return parser


def _load_cfg(args) -> ExperimentConfig:
    cfg = load_config(args.config)
    if args.seed is not None:
        cfg = cfg.replaced(seed=args.seed)
    if args.out is not None:
        cfg = cfg.replaced(out_dir=args.out)
    if args.workers is not None:
        cfg = cfg.replaced(workers=args.workers)
    torch.set_num_threads(cfg.workers)
    return cfg


def _dispatch(args) -> dict:
    from . import pipeline as pl

    cmd = args.command
    if cmd == "apply-bpe":
        from .corpus import load_corpus
        from .subword import BpeEncoder, apply_bpe, load_bpe

        encoder = BpeEncoder(load_bpe(args.merges))
        corpus = load_corpus(args.input)
        with open(args.output, "w", encoding="utf-8", newline="\n") as f:
            for sentence in corpus:
                f.write(" ".join(apply_bpe(encoder, sentence)) + "\n")
        return {"n_sentences": len(corpus)}

    if cmd == "evaluate-bleu":
        report = pl.bleu_of_files(args.hyp, args.ref, lowercase=not args.keep_case)
        return {"bleu": round(report.value, 2), "n_sentences": report.n_sentences}

    cfg = _load_cfg(args)
    if cmd == "learn-bpe":
        return pl.stage_learn_bpe(cfg)
    if cmd == "train-embeddings":
        return pl.stage_train_embeddings(cfg)
    if cmd == "map-embeddings":
        return pl.stage_map_embeddings(cfg)
    if cmd == "extract-lexicon":
        return pl.stage_extract_lexicon(cfg, k=args.k)
    if cmd == "pretrain":
        ckpt = pl.stage_pretrain(cfg, resume=args.resume, k=args.k)
        return {"step": ckpt.step}
    if cmd == "finetune-supervised":
        ckpt = pl.stage_finetune_supervised(cfg, init=args.init)
        return {"step": ckpt.step}
    if cmd == "finetune-unsupervised":
        ckpt = pl.stage_finetune_unsupervised(cfg, init=args.init)
        return {"step": ckpt.step}
    if cmd == "backtranslate":
        return pl.stage_backtranslate(
            cfg, args.ckpt, args.input, args.output_src, args.output_tgt,
            beam=args.beam, tag=args.tag,
        )
    if cmd == "translate":
        return pl.translate_file(
            cfg, args.ckpt, args.input, args.output, beam=args.beam, tag=args.tag
        )
    if cmd == "evaluate-ppl":
        report = pl.evaluate_ppl(cfg, args.ckpt, args.valid_a, args.valid_b, k=args.k)
        return {"ppl": round(report.value, 4), "n_sentences": report.n_sentences}
    if cmd == "k-sweep":
        k_values = [int(x) for x in args.k_values.split(",") if x]
        if not k_values:
            raise ValidationError("k-values must be a non-empty comma list")
        rows = pl.run_k_sweep(cfg, k_values)
        return {"rows": rows}
    if cmd == "build-cs-testset":
        return pl.stage_build_cs_testset(cfg, args.input, args.ratio, k=args.k)
    if cmd == "ablate-init":
        components = tuple(x for x in args.keep.split(",") if x)
        path = pl.stage_ablate_init(cfg, args.ckpt, components, args.fresh_seed)
        return {"checkpoint": path}
    raise ValidationError(f"unhandled command {cmd!r}")  # unreachable


def main(argv=None) -> int:
    parser = _build_parser()
    args = parser.parse_args(argv)
    if args.command not in ("apply-bpe", "evaluate-bleu") and args.workers is None:
        torch.set_num_threads(1)
    try:
        result = _dispatch(args)
    except ValidationError as e:
        print(f"validation error: {e}", file=sys.stderr)
        return 3
    except Exception as e:  # noqa: BLE001 - CLI boundary
        print(f"error: {e}", file=sys.stderr)
        traceback.print_exc()
        return 1
    print(json.dumps(result, sort_keys=True))
    return 0


if __name__ == "__main__":
    sys.exit(main())
