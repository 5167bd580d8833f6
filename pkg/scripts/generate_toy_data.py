#!/usr/bin/env python3
"""Regenerate the bundled toy language pair under data/toy.

The output is a deterministic function of the spec, so re-running this script
reproduces the committed files byte for byte.
"""

import argparse
import os
import sys

sys.path.insert(0, os.path.join(os.path.dirname(__file__), "..", "src"))

from codeswitch.toydata import ToySpec, generate_toy_dataset


def main():
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--out", default=os.path.join(os.path.dirname(__file__), "..", "data", "toy"))
    parser.add_argument("--mono-sentences", type=int, default=ToySpec.mono_sentences)
    parser.add_argument("--seed", type=int, default=ToySpec.seed)
    args = parser.parse_args()
    spec = ToySpec(mono_sentences=args.mono_sentences, seed=args.seed)
    paths = generate_toy_dataset(args.out, spec)
    for name in sorted(paths):
        print(name)


if __name__ == "__main__":
    main()
