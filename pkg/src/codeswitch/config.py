"""Experiment configuration: one block per pipeline stage, validated at load.

Config files are YAML (JSON is a subset and also accepted). Every stage block
checks its own parameters on construction, so a bad config fails before any
work starts. Unknown keys are rejected rather than ignored.
"""

from __future__ import annotations

import dataclasses
import os
from dataclasses import dataclass, field

import yaml

from .corpus import ValidationError
from .corrupt import CorruptionPolicy


def _from_dict(cls, data: dict, context: str):
    if not isinstance(data, dict):
        raise ValidationError(f"{context}: expected a mapping, got {type(data).__name__}")
    names = {f.name for f in dataclasses.fields(cls)}
    unknown = set(data) - names
    if unknown:
        raise ValidationError(f"{context}: unknown keys {sorted(unknown)}")
    return cls(**data)


@dataclass(frozen=True)
class CorpusBlock:
    mono_a: str = "mono.a.txt"
    mono_b: str = "mono.b.txt"
    tag_a: str = "a"
    tag_b: str = "b"
    sample_n: int = 8000
    max_tokens: int = 175

    def __post_init__(self):
        if self.sample_n % 2 != 0 or self.sample_n <= 0:
            raise ValidationError(f"sample_n must be positive and even, got {self.sample_n}")
        if self.max_tokens < 2:
            raise ValidationError("max_tokens must be >= 2")
        if self.tag_a == self.tag_b:
            raise ValidationError("language tags must differ")


@dataclass(frozen=True)
class BpeBlock:
    num_merges: int = 4000
    vocab_max: int = 6000
    add_direction_tags: bool = True

    def __post_init__(self):
        if self.num_merges < 0:
            raise ValidationError("num_merges must be >= 0")
        if self.vocab_max < 6:
            raise ValidationError("vocab_max must be >= 6")


@dataclass(frozen=True)
class EmbeddingBlock:
    dim: int = 64
    window: int = 5
    negatives: int = 5
    epochs: int = 6
    lr: float = 0.025
    min_count: int = 2

    def __post_init__(self):
        if self.dim < 2:
            raise ValidationError("dim must be >= 2")
        if self.window < 1 or self.negatives < 1 or self.epochs < 0:
            raise ValidationError("window/negatives must be >= 1 and epochs >= 0")
        if self.lr <= 0:
            raise ValidationError("embedding lr must be positive")


@dataclass(frozen=True)
class MappingBlock:
    neighborhood: int = 10
    max_iters: int = 50
    tol: float = 1e-6
    metric: str = "csls"
    seed_pairs: str | None = None

    def __post_init__(self):
        if self.metric not in ("csls", "cosine"):
            raise ValidationError(f"unknown mapping metric {self.metric!r}")
        if self.neighborhood < 1 or self.max_iters < 0:
            raise ValidationError("neighborhood must be >= 1 and max_iters >= 0")


@dataclass(frozen=True)
class LexiconBlock:
    k: int = 3

    def __post_init__(self):
        if self.k < 1:
            raise ValidationError("k must be >= 1")


@dataclass(frozen=True)
class ModelBlock:
    layers_enc: int = 2
    layers_dec: int = 2
    d_model: int = 64
    d_ffn: int = 256
    heads: int = 4
    dropout: float = 0.1
    max_positions: int = 256
    label_smoothing: float = 0.0

    def __post_init__(self):
        if self.d_model % self.heads != 0:
            raise ValidationError("d_model must be divisible by heads")
        if not (0.0 <= self.dropout < 1.0):
            raise ValidationError("dropout must be in [0, 1)")


@dataclass(frozen=True)
class PretrainBlock:
    steps: int = 3000
    lr: float = 5e-4
    warmup: int = 500
    batch_tokens: int = 1000
    save_every: int = 0
    ratio: float = 0.5
    p_translate: float = 0.8
    p_random: float = 0.1
    p_keep: float = 0.1

    def __post_init__(self):
        self.policy()  # validates ratio and the action split
        if self.lr <= 0 or self.steps < 0 or self.warmup < 1:
            raise ValidationError("invalid pretrain optimizer settings")

    def policy(self) -> CorruptionPolicy:
        return CorruptionPolicy(self.ratio, self.p_translate, self.p_random, self.p_keep)


@dataclass(frozen=True)
class FinetuneBlock:
    steps: int = 2000
    lr: float = 5e-4
    warmup: int = 200
    batch_tokens: int = 1000
    train_a: str | None = None
    train_b: str | None = None
    valid_a: str | None = None
    valid_b: str | None = None
    test_a: str | None = None
    test_b: str | None = None

    def __post_init__(self):
        if self.lr <= 0 or self.steps < 0 or self.warmup < 1:
            raise ValidationError("invalid fine-tune optimizer settings")


@dataclass(frozen=True)
class UnsupervisedBlock:
    steps: int = 4000
    lr: float = 3e-4
    warmup: int = 200
    batch_tokens: int = 1000
    noise_drop: float = 0.1
    noise_shuffle: int = 3
    use_backtranslation: bool = True

    def __post_init__(self):
        if self.lr <= 0 or self.steps < 0 or self.warmup < 1:
            raise ValidationError("invalid unsupervised optimizer settings")
        if not (0.0 <= self.noise_drop < 1.0) or self.noise_shuffle < 0:
            raise ValidationError("invalid denoising settings")


@dataclass(frozen=True)
class EvalBlock:
    beam: int = 1
    max_len: int = 64
    lowercase: bool = True
    ppl_seed: int = 1234

    def __post_init__(self):
        if self.beam < 1 or self.max_len < 1:
            raise ValidationError("beam and max_len must be >= 1")


@dataclass(frozen=True)
class ExperimentConfig:
    out_dir: str = "runs/exp"
    seed: int = 0
    workers: int = 1
    corpus: CorpusBlock = field(default_factory=CorpusBlock)
    bpe: BpeBlock = field(default_factory=BpeBlock)
    embeddings: EmbeddingBlock = field(default_factory=EmbeddingBlock)
    mapping: MappingBlock = field(default_factory=MappingBlock)
    lexicon: LexiconBlock = field(default_factory=LexiconBlock)
    model: ModelBlock = field(default_factory=ModelBlock)
    pretrain: PretrainBlock = field(default_factory=PretrainBlock)
    finetune: FinetuneBlock = field(default_factory=FinetuneBlock)
    unsupervised: UnsupervisedBlock = field(default_factory=UnsupervisedBlock)
    eval: EvalBlock = field(default_factory=EvalBlock)

    def __post_init__(self):
        if self.workers < 1:
            raise ValidationError("workers must be >= 1")

    @classmethod
    def from_dict(cls, data: dict) -> "ExperimentConfig":
        blocks = {
            "corpus": CorpusBlock,
            "bpe": BpeBlock,
            "embeddings": EmbeddingBlock,
            "mapping": MappingBlock,
            "lexicon": LexiconBlock,
            "model": ModelBlock,
            "pretrain": PretrainBlock,
            "finetune": FinetuneBlock,
            "unsupervised": UnsupervisedBlock,
            "eval": EvalBlock,
        }
        names = {f.name for f in dataclasses.fields(cls)}
        unknown = set(data) - names
        if unknown:
            raise ValidationError(f"config: unknown top-level keys {sorted(unknown)}")
        kwargs = {}
        for key, value in data.items():
            if key in blocks:
                kwargs[key] = _from_dict(blocks[key], value or {}, key)
            else:
                kwargs[key] = value
        return cls(**kwargs)

    def to_dict(self) -> dict:
        return dataclasses.asdict(self)

    def replaced(self, **kwargs) -> "ExperimentConfig":
        return dataclasses.replace(self, **kwargs)


def load_config(path: str | os.PathLike) -> ExperimentConfig:
    with open(path, encoding="utf-8") as f:
        try:
            data = yaml.safe_load(f)
        except yaml.YAMLError as e:
            raise ValidationError(f"{path}: cannot parse config: {e}") from e
    if data is None:
        data = {}
    return ExperimentConfig.from_dict(data)


def save_config(cfg: ExperimentConfig, path: str | os.PathLike) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as f:
        yaml.safe_dump(cfg.to_dict(), f, sort_keys=True)
