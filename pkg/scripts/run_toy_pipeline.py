#!/usr/bin/env python3
"""End-to-end demo on the bundled toy pair: every stage, one command.

Equivalent to running the CLI subcommands in order with configs/toy.yaml.
Expect roughly 15-30 minutes on a laptop CPU with the default budgets.
"""

import argparse
import json
import os
import sys

sys.path.insert(0, os.path.join(os.path.dirname(__file__), "..", "src"))

import torch

from codeswitch import pipeline as pl
from codeswitch.config import load_config


def main():
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--config", default=os.path.join(os.path.dirname(__file__), "..", "configs", "toy.yaml"))
    parser.add_argument("--out", default=None)
    parser.add_argument("--skip-unsupervised", action="store_true")
    args = parser.parse_args()

    cfg = load_config(args.config)
    if args.out:
        cfg = cfg.replaced(out_dir=args.out)
    torch.set_num_threads(cfg.workers)

    print("[1/7] balanced sample + BPE + shared vocab")
    print(json.dumps(pl.stage_learn_bpe(cfg)))
    print("[2/7] monolingual embeddings")
    print(json.dumps(pl.stage_train_embeddings(cfg)))
    print("[3/7] unsupervised mapping")
    print(json.dumps(pl.stage_map_embeddings(cfg)))
    print("[4/7] translation lexicons")
    print(json.dumps(pl.stage_extract_lexicon(cfg)))
    gold = os.path.join(os.path.dirname(cfg.corpus.mono_a), "gold.lexicon.tsv")
    if os.path.exists(gold):
        print("      gold precision:", json.dumps(pl.gold_lexicon_precision(cfg, gold)))
    print("[5/7] code-switch pre-training")
    ckpt = pl.stage_pretrain(cfg)
    print(f"      done at step {ckpt.step}")
    print("[6/7] supervised fine-tuning from the pre-trained checkpoint")
    pl.stage_finetune_supervised(cfg, init=os.path.join(cfg.out_dir, pl.PRETRAIN_CKPT))
    ft = cfg.finetune
    if ft.test_a and ft.test_b:
        bleu = pl.evaluate_bleu_checkpoint(
            cfg, pl.load_checkpoint(os.path.join(cfg.out_dir, pl.FINETUNE_CKPT)),
            ft.test_a, ft.test_b, tag=None,
        )
        print(f"      supervised test BLEU: {bleu:.2f}")
    if not args.skip_unsupervised:
        print("[7/7] unsupervised fine-tuning (denoising + back-translation)")
        pl.stage_finetune_unsupervised(cfg, init=os.path.join(cfg.out_dir, pl.PRETRAIN_CKPT))
        if ft.test_a and ft.test_b:
            tag_b = pl.direction_tags(cfg)[1]
            bleu = pl.evaluate_bleu_checkpoint(
                cfg, pl.load_checkpoint(os.path.join(cfg.out_dir, pl.UNSUP_CKPT)),
                ft.test_a, ft.test_b, tag=tag_b,
            )
            print(f"      unsupervised test BLEU: {bleu:.2f}")


if __name__ == "__main__":
    main()
