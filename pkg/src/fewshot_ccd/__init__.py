"""Few-shot code clone detection with MAML and InfoNCE on a numpy encoder."""

from __future__ import annotations

from .corpus import Corpus, Problem, Submission, load_corpus
from .encoder import EncoderConfig, Params, init_params
from .meta import MamlConfig, inner_update, meta_step, train_maml
from .rng import Xoshiro256

__all__ = [
    "Corpus",
    "EncoderConfig",
    "MamlConfig",
    "Params",
    "Problem",
    "Submission",
    "Xoshiro256",
    "init_params",
    "inner_update",
    "load_corpus",
    "meta_step",
    "train_maml",
]

__version__ = "0.1.0"
