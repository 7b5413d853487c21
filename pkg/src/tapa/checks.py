"""Finite-difference checks of the full model at toy dimensions."""

from __future__ import annotations

import numpy as np

from .config import ExperimentConfig
from .corpus import QuestionPair, build_vocab
from .lda import fit_gibbs
from .model import TapaModel
from .tensor import GradCheckReport, grad_check

TOY_PAIRS = [
    QuestionPair("toy-1", "how do i learn".split(), "what is the best way".split(), 1),
    QuestionPair("toy-2", "where is good oil".split(), "how do i learn python".split(), 0),
]


def toy_config(base: ExperimentConfig | None = None, **changes) -> ExperimentConfig:
    """Shrink a config to gradient-check size while keeping its switches.

    Dims: embedding 8, 4 topics, hidden 6, filters (2, 3) with 2x2 kernels,
    questions of 4 and 5 tokens on an 8x8 canvas.
    """
    base = base or ExperimentConfig()
    toy = base.replace(embedding_dim=8, num_topics=4, lstm_hidden=6, filters=(2, 3),
                       kernel_sizes=(2, 2), pool_size=2, num_hidden_layers=2,
                       hidden_widths=(8, 4), max_len=8, contextual_dim=3,
                       embedding_path="", lda_iterations=20, alpha_total=1.0)
    return toy.replace(**changes).validate()


def _contextual(pairs, dim, rng):
    table = {}
    for p in pairs:
        for side, toks in ((1, p.q1_tokens), (2, p.q2_tokens)):
            table[(p.id, side)] = {i: rng.uniform(-1, 1, dim) for i in range(len(toks))}
    return table


def toy_model(config: ExperimentConfig, seed: int = 0, pairs=TOY_PAIRS) -> TapaModel:
    """A toy model with every parameter (biases included) drawn away from kinks."""
    rng = np.random.default_rng(seed)
    vocab = build_vocab(pairs)
    topic_model = None
    if config.use_topics:
        docs = [p.q1_tokens for p in pairs] + [p.q2_tokens for p in pairs]
        topic_model = fit_gibbs(docs, config.num_topics, config.alpha_total, 0.1,
                                config.lda_iterations, seed)
    ctx = _contextual(pairs, config.contextual_dim, rng) if config.contextual else None
    model = TapaModel.build(config, vocab, topic_model, contextual=ctx)
    for name, t in model.params.tensors().items():
        if name.endswith(".b"):
            t.data = rng.uniform(-0.5, 0.5, t.shape)
        elif name == "topics":
            t.data[2:] = rng.uniform(0.05, 1.0, t.data[2:].shape)
        elif name == "embedding":
            t.data[2:] = rng.uniform(-1.0, 1.0, t.data[2:].shape)
        else:
            t.data = t.data * 2.0
    return model


def model_gradcheck(model: TapaModel, pairs=TOY_PAIRS, epsilon: float = 1e-5,
                    max_entries: int | None = None) -> GradCheckReport:
    batch = model.batch(pairs)
    return grad_check(lambda: model.loss(batch), model.params.trainable(), epsilon,
                      max_entries=max_entries)


def toy_gradcheck(base: ExperimentConfig | None = None, seed: int = 0,
                  epsilon: float = 1e-5) -> dict[str, GradCheckReport]:
    """Gradient check of the early- and late-fusion variants of ``base`` at toy size."""
    reports = {}
    for fusion in ("early", "late"):
        cfg = toy_config(base, fusion=fusion)
        reports[fusion] = model_gradcheck(toy_model(cfg, seed), epsilon=epsilon)
    return reports
