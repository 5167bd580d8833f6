"""Code-switching pre-training for NMT at desk scale.

Pipeline: two monolingual corpora -> shared BPE vocabulary -> monolingual
skip-gram embeddings -> unsupervised embedding mapping -> probabilistic
translation lexicons -> code-switch span corruption -> transformer
pre-training -> supervised / unsupervised fine-tuning -> evaluation.
"""

__version__ = "0.1.0"
