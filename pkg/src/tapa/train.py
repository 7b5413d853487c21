"""Cross-entropy training with Adadelta, random hyperparameter search, checkpoints."""

from __future__ import annotations

import logging
import struct
import time
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Mapping, Sequence

import numpy as np

from . import tensor as T
from .config import ExperimentConfig
from .corpus import Batch, QuestionPair, build_vocab, make_batches
from .errors import ConfigError, DataError, DimensionError
from .evaluate import f1_score
from .lda import TopicModel, fit_gibbs
from .model import TapaModel
from .tensor import Tensor

logger = logging.getLogger(__name__)


def loss_batch(model: TapaModel, batch: Batch) -> Tensor:
    if len(batch) == 0:
        raise DataError("loss_batch needs a nonempty batch")
    return model.loss(batch)


# ---------------------------------------------------------------------------
# Adadelta


@dataclass
class AdadeltaState:
    rho: float = 0.95
    epsilon: float = 1e-6
    learning_rate: float = 1.0
    sq_grad: dict[str, np.ndarray] = field(default_factory=dict)
    sq_update: dict[str, np.ndarray] = field(default_factory=dict)


def adadelta_step(params: Mapping[str, np.ndarray], grads: Mapping[str, np.ndarray],
                  state: AdadeltaState) -> tuple[dict[str, np.ndarray], AdadeltaState]:
    """One Adadelta update; returns new parameter arrays and a new state.

    ``E[g^2] <- rho E[g^2] + (1 - rho) g^2``,
    ``delta = -sqrt(E[dx^2] + eps) / sqrt(E[g^2] + eps) * g``,
    ``E[dx^2] <- rho E[dx^2] + (1 - rho) delta^2``, ``theta <- theta + lr * delta``.
    """
    rho, eps = state.rho, state.epsilon
    new_params, sq_grad, sq_update = {}, dict(state.sq_grad), dict(state.sq_update)
    for name, theta in params.items():
        g = grads.get(name)
        if g is None:
            new_params[name] = theta
            continue
        if g.shape != theta.shape:
            raise DimensionError(f"gradient for {name} has shape {g.shape}, parameter {theta.shape}")
        eg = rho * sq_grad.get(name, np.zeros_like(theta)) + (1.0 - rho) * g * g
        ex = sq_update.get(name, np.zeros_like(theta))
        delta = -np.sqrt(ex + eps) / np.sqrt(eg + eps) * g
        sq_grad[name] = eg
        sq_update[name] = rho * ex + (1.0 - rho) * delta * delta
        new_params[name] = theta + state.learning_rate * delta
    return new_params, AdadeltaState(rho, eps, state.learning_rate, sq_grad, sq_update)


def _apply_step(model: TapaModel, state: AdadeltaState) -> AdadeltaState:
    tensors = model.params.trainable()
    grads = {k: t.grad for k, t in tensors.items() if t.grad is not None}
    bad = [k for k, g in grads.items() if not np.all(np.isfinite(g))]
    if bad:
        logger.warning("non-finite gradient in %s; update skipped", ", ".join(bad))
        return state
    updated, state = adadelta_step({k: tensors[k].data for k in grads}, grads, state)
    for k, v in updated.items():
        tensors[k].data = v
    return state


# ---------------------------------------------------------------------------
# training loop


@dataclass
class TrainingHistory:
    train_loss: list[float] = field(default_factory=list)
    dev_f1: list[float] = field(default_factory=list)
    wall_time: list[float] = field(default_factory=list)
    initial_loss: float = float("nan")
    best_epoch: int = -1
    test_f1: float | None = None

    def to_tsv(self) -> str:
        lines = ["epoch\ttrain_loss\tdev_f1\twall_time"]
        for i, (l, f, w) in enumerate(zip(self.train_loss, self.dev_f1, self.wall_time)):
            lines.append(f"{i}\t{l!r}\t{f!r}\t{w:.3f}")
        return "\n".join(lines) + "\n"


def fit_topic_model(config: ExperimentConfig, train_pairs: Sequence[QuestionPair]) -> TopicModel:
    """LDA over the training questions, one document per question."""
    docs = [p.q1_tokens for p in train_pairs] + [p.q2_tokens for p in train_pairs]
    docs = [d for d in docs if d]
    return fit_gibbs(docs, config.num_topics, config.alpha_total, config.lda_beta,
                     config.lda_iterations, config.lda_seed)


def prepare_model(config: ExperimentConfig, train_pairs: Sequence[QuestionPair],
                  topic_model: TopicModel | None = None, contextual: Mapping | None = None
                  ) -> TapaModel:
    config.validate()
    if not train_pairs:
        raise DataError("training set is empty")
    vocab = build_vocab(train_pairs, config.min_count)
    if config.use_topics and topic_model is None:
        topic_model = fit_topic_model(config, train_pairs)
    return TapaModel.build(config, vocab, topic_model if config.use_topics else None,
                           config.embedding_path or None, contextual)


def mean_loss(model: TapaModel, batches: Sequence[Batch]) -> float:
    total = sum(loss_batch(model, b).item() * len(b) for b in batches)
    return total / sum(len(b) for b in batches)


def train(config: ExperimentConfig, train_pairs: Sequence[QuestionPair],
          dev_pairs: Sequence[QuestionPair] = (), topic_model: TopicModel | None = None,
          contextual: Mapping | None = None, model: TapaModel | None = None,
          ) -> tuple[TapaModel, TrainingHistory]:
    """Train until ``epochs`` or until dev F1 stalls for ``patience`` epochs.

    The returned model holds the parameters of the best dev epoch (the last
    epoch when there is no dev set).
    """
    if model is None:
        model = prepare_model(config, train_pairs, topic_model, contextual)
    cfg = model.config
    history = TrainingHistory()
    state = AdadeltaState(cfg.rho, cfg.eps, cfg.learning_rate)
    params = model.params.trainable()
    history.initial_loss = mean_loss(model, make_batches(train_pairs, model.vocab, 256, cfg.max_len))
    best_state, best_f1, stale = None, -1.0, 0

    for epoch in range(cfg.epochs):
        start = time.perf_counter()
        batches = make_batches(train_pairs, model.vocab, cfg.batch_size, cfg.max_len,
                               shuffle_seed=cfg.shuffle_seed * 100003 + epoch)
        total = 0.0
        for batch in batches:
            for p in params.values():
                p.grad = None
            loss = loss_batch(model, batch)
            T.backward(loss)
            state = _apply_step(model, state)
            total += loss.item() * len(batch)
        history.train_loss.append(total / len(train_pairs))
        dev_f1 = float("nan")
        if dev_pairs:
            dev_f1 = f1_score(model.predict(dev_pairs), [p.label for p in dev_pairs]).f1
        history.dev_f1.append(dev_f1)
        history.wall_time.append(time.perf_counter() - start)
        logger.info("epoch %d  loss %.5f  dev F1 %.4f  (%.1fs)", epoch, history.train_loss[-1],
                    dev_f1, history.wall_time[-1])

        if not dev_pairs:
            history.best_epoch = epoch
            continue
        if dev_f1 > best_f1:
            best_f1, best_state, stale = dev_f1, model.params.state(), 0
            history.best_epoch = epoch
        else:
            stale += 1
            if stale >= cfg.patience:
                logger.info("early stop after epoch %d (best %d)", epoch, history.best_epoch)
                break

    if best_state is not None:
        model.params.load_state(best_state)
    return model, history


# ---------------------------------------------------------------------------
# random search

DEFAULT_SPACE: dict[str, Any] = {
    "num_topics": (10, 100),
    "alpha_total": (0.1, 50.0),
    "topic_setting": ["word", "word+doc"],
    "topic_update": [True, False],
    "fusion": ["early", "late"],
    "learning_rate": [0.05, 0.1, 0.5, 1.0],
}


def sample_config(space: Mapping[str, Any], base: ExperimentConfig,
                  rng: np.random.Generator) -> ExperimentConfig:
    """Draw one config: lists are uniform choices, 2-tuples are uniform ranges
    (integer ranges when both bounds are ints)."""
    changes = {}
    for key in sorted(space):
        spec = space[key]
        if isinstance(spec, tuple):
            lo, hi = spec
            if isinstance(lo, int) and isinstance(hi, int):
                changes[key] = int(rng.integers(lo, hi + 1))
            else:
                changes[key] = float(rng.uniform(lo, hi))
        else:
            options = list(spec)
            if not options:
                raise ConfigError(f"search dimension {key!r} has no options")
            changes[key] = options[int(rng.integers(len(options)))]
    return base.replace(**changes)


@dataclass
class SearchTrial:
    index: int
    config: ExperimentConfig
    dev_f1: float
    error: str | None = None


def random_search(space: Mapping[str, Any], trials: int, seed: int,
                  train_pairs: Sequence[QuestionPair], dev_pairs: Sequence[QuestionPair],
                  base: ExperimentConfig | None = None
                  ) -> tuple[ExperimentConfig, list[SearchTrial]]:
    """Uniform random search; returns the config with the best dev F1 (earliest on ties)."""
    if not space:
        raise ConfigError("search space is empty")
    if trials < 1:
        raise ConfigError("trials must be >= 1")
    base = base or ExperimentConfig()
    rng = np.random.default_rng(seed)
    results = []
    for i in range(trials):
        cfg = sample_config(space, base, rng)
        try:
            cfg.validate()
            model, history = train(cfg, train_pairs, dev_pairs)
            score = max(history.dev_f1) if dev_pairs else float("nan")
            results.append(SearchTrial(i, cfg, score))
        except (ConfigError, DataError, DimensionError) as exc:
            logger.warning("trial %d failed: %s", i, exc)
            results.append(SearchTrial(i, cfg, float("-inf"), str(exc)))
        logger.info("trial %d  dev F1 %.4f", i, results[-1].dev_f1)
    best = results[0]
    for r in results[1:]:
        if r.dev_f1 > best.dev_f1:
            best = r
    return best.config, results


# ---------------------------------------------------------------------------
# checkpoints
#
# layout (little endian): magic b"TAPACKPT", u32 version, u32 count, then per
# tensor: u16 name length, utf-8 name, u8 ndim, ndim x u32 dims, float64 payload
# in row-major order.

MAGIC = b"TAPACKPT"
VERSION = 1


def save_checkpoint(state: Mapping[str, np.ndarray], path) -> None:
    with Path(path).open("wb") as fh:
        fh.write(MAGIC)
        fh.write(struct.pack("<II", VERSION, len(state)))
        for name in sorted(state):
            arr = np.asarray(state[name], dtype="<f8", order="C")
            raw = name.encode("utf-8")
            fh.write(struct.pack("<H", len(raw)) + raw)
            fh.write(struct.pack("<B", arr.ndim))
            fh.write(struct.pack(f"<{arr.ndim}I", *arr.shape))
            fh.write(arr.tobytes(order="C"))


def load_checkpoint(path) -> dict[str, np.ndarray]:
    data = Path(path).read_bytes()
    if data[:8] != MAGIC:
        raise DataError(f"{path}: not a checkpoint file")
    version, count = struct.unpack_from("<II", data, 8)
    if version != VERSION:
        raise DataError(f"{path}: unsupported checkpoint version {version}")
    pos, out = 16, {}
    for _ in range(count):
        (n,) = struct.unpack_from("<H", data, pos)
        name = data[pos + 2:pos + 2 + n].decode("utf-8")
        pos += 2 + n
        (ndim,) = struct.unpack_from("<B", data, pos)
        shape = struct.unpack_from(f"<{ndim}I", data, pos + 1)
        pos += 1 + 4 * ndim
        size = int(np.prod(shape)) if ndim else 1
        out[name] = np.frombuffer(data, dtype="<f8", count=size, offset=pos).reshape(shape).copy()
        pos += 8 * size
    return out
