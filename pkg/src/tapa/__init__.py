"""Topic-aware question paraphrase identification at desk scale."""

from .config import ExperimentConfig, load_config, save_config
from .corpus import QuestionPair, Vocabulary, build_vocab, load_pairs, make_batches, tokenize
from .errors import (ConfigError, ContractError, DataError, DimensionError, DomainError,
                     ParseError, TapaError)
from .evaluate import EvalReport, f1_score, run_ablation
from .lda import TopicModel, fit_gibbs, fuse_topics, infer_doc, word_topics
from .model import TapaModel, TapaParams
from .train import adadelta_step, random_search, train

__version__ = "0.1.0"

__all__ = [
    "ExperimentConfig", "load_config", "save_config",
    "QuestionPair", "Vocabulary", "build_vocab", "load_pairs", "make_batches", "tokenize",
    "ConfigError", "ContractError", "DataError", "DimensionError", "DomainError", "ParseError",
    "TapaError",
    "EvalReport", "f1_score", "run_ablation",
    "TopicModel", "fit_gibbs", "fuse_topics", "infer_doc", "word_topics",
    "TapaModel", "TapaParams",
    "adadelta_step", "random_search", "train",
]
