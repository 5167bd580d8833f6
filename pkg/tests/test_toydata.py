import os

from codeswitch.corpus import load_corpus
from codeswitch.toydata import (
    ANCHOR_WORDS,
    ToyLanguagePair,
    ToySpec,
    generate_toy_dataset,
    load_gold_pairs,
)

SPEC = ToySpec(
    n_content=30, n_anchors=8, mono_sentences=50,
    parallel_train=20, parallel_valid=5, parallel_test=5, seed=9,
)


def test_generation_is_deterministic(tmp_path):
    d1, d2 = tmp_path / "one", tmp_path / "two"
    generate_toy_dataset(d1, SPEC)
    generate_toy_dataset(d2, SPEC)
    for name in os.listdir(d1):
        assert (d1 / name).read_bytes() == (d2 / name).read_bytes(), name


def test_parallel_files_align_word_for_word(tmp_path):
    generate_toy_dataset(tmp_path, SPEC)
    gold = dict(load_gold_pairs(tmp_path / "gold.lexicon.tsv"))
    a = load_corpus(tmp_path / "train.a.txt")
    b = load_corpus(tmp_path / "train.b.txt")
    assert len(a) == len(b) == SPEC.parallel_train
    for sa, sb in zip(a, b):
        wa, wb = sa.split(), sb.split()
        assert len(wa) == len(wb)
        assert [gold[w] for w in wa] == wb


def test_word_inventories_disjoint_except_anchors():
    pair = ToyLanguagePair(SPEC)
    a_only = set(pair.words_a[: SPEC.n_content])
    b_only = set(pair.words_b[: SPEC.n_content])
    assert not (a_only & b_only)
    assert pair.words_a[SPEC.n_content :] == pair.words_b[SPEC.n_content :]
    assert set(pair.words_a[SPEC.n_content :]) <= set(ANCHOR_WORDS)


def test_anchor_frequency_is_boosted(tmp_path):
    generate_toy_dataset(tmp_path, SPEC)
    anchors = set(ANCHOR_WORDS[: SPEC.n_anchors])
    tokens = [w for s in load_corpus(tmp_path / "mono.a.txt") for w in s.split()]
    frac = sum(w in anchors for w in tokens) / len(tokens)
    # 8 anchors of 38 types would be ~0.2 of tokens unboosted-and-uniform;
    # the boost should place them well above their type share
    assert frac > 0.2


def test_sentence_lengths_in_range(tmp_path):
    generate_toy_dataset(tmp_path, SPEC)
    for s in load_corpus(tmp_path / "mono.a.txt"):
        assert SPEC.min_len <= len(s.split()) <= SPEC.max_len
