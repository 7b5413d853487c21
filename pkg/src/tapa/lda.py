"""LDA topic model trained by collapsed Gibbs sampling.

Provides word-level topic vectors (normalized topic-word columns) and
document-level topic vectors (fold-in Gibbs with the topic-word matrix frozen),
plus their fusion for the ``word`` and ``word+doc`` topic settings.

Hyperparameters follow the mallet convention: ``alpha_total`` is the total
Dirichlet mass over topics, so each topic gets ``alpha_total / K``.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Iterable, Sequence

import numba
import numpy as np

from .errors import DataError, DimensionError, ParseError

logger = logging.getLogger(__name__)

FOLD_IN_BURN_IN = 20
FOLD_IN_SAMPLES = 10


@dataclass
class TopicModel:
    num_topics: int
    topic_word: np.ndarray  # K x V, rows on the simplex
    alpha_total: float
    beta: float
    vocab: dict[str, int]
    seed: int = 0
    words: list[str] = field(init=False, repr=False)

    def __post_init__(self):
        self.words = [None] * len(self.vocab)
        for w, i in self.vocab.items():
            self.words[i] = w

    @property
    def alpha(self) -> float:
        return self.alpha_total / self.num_topics

    @property
    def vocab_size(self) -> int:
        return len(self.vocab)


# ---------------------------------------------------------------------------
# sampling kernels


@numba.njit(cache=True)
def _draw(weights, u):
    total = 0.0
    for k in range(weights.shape[0]):
        total += weights[k]
    if not total > 0.0:
        return -1
    target = u * total
    acc = 0.0
    for k in range(weights.shape[0]):
        acc += weights[k]
        if target < acc:
            return k
    return weights.shape[0] - 1


@numba.njit(cache=True)
def _gibbs_sweep(words, docs, z, n_dk, n_kw, n_k, alpha, beta, vbeta, uniforms):
    num_topics = n_k.shape[0]
    weights = np.empty(num_topics)
    for i in range(words.shape[0]):
        w = words[i]
        d = docs[i]
        k = z[i]
        n_dk[d, k] -= 1
        n_kw[k, w] -= 1
        n_k[k] -= 1
        for j in range(num_topics):
            weights[j] = (n_dk[d, j] + alpha) * (n_kw[j, w] + beta) / (n_k[j] + vbeta)
        k = _draw(weights, uniforms[i])
        if k < 0:
            return False
        z[i] = k
        n_dk[d, k] += 1
        n_kw[k, w] += 1
        n_k[k] += 1
    return True


@numba.njit(cache=True)
def _fold_in(words, phi, alpha, init, uniforms, burn_in, samples):
    num_topics = phi.shape[0]
    n = words.shape[0]
    z = init.copy()
    counts = np.zeros(num_topics)
    for i in range(n):
        counts[z[i]] += 1
    weights = np.empty(num_topics)
    acc = np.zeros(num_topics)
    u = 0
    for sweep in range(burn_in + samples):
        for i in range(n):
            counts[z[i]] -= 1
            for j in range(num_topics):
                weights[j] = (counts[j] + alpha) * phi[j, words[i]]
            k = _draw(weights, uniforms[u])
            u += 1
            if k < 0:
                k = z[i]
            z[i] = k
            counts[k] += 1
        if sweep >= burn_in:
            acc += counts
    return acc / samples


# ---------------------------------------------------------------------------
# public API


def _index_corpus(corpus: Sequence[Sequence[str]]):
    vocab: dict[str, int] = {}
    words, docs = [], []
    for d, doc in enumerate(corpus):
        for tok in doc:
            words.append(vocab.setdefault(tok, len(vocab)))
            docs.append(d)
    return vocab, np.asarray(words, dtype=np.int64), np.asarray(docs, dtype=np.int64)


def fit_gibbs(corpus: Sequence[Sequence[str]], num_topics: int, alpha_total: float = 50.0,
              beta: float = 0.01, iterations: int = 200, seed: int = 0,
              on_sweep: Callable[[int, np.ndarray, np.ndarray], None] | None = None) -> TopicModel:
    """Fit LDA to tokenized documents.

    ``on_sweep(sweep, n_kw, n_k)`` is called after every sweep with the count
    matrices (read-only views; do not mutate).
    """
    if num_topics < 1:
        raise DataError(f"num_topics must be >= 1, got {num_topics}")
    if iterations < 1:
        raise DataError(f"iterations must be >= 1, got {iterations}")
    if len(corpus) == 0:
        raise DataError("cannot fit a topic model to an empty corpus")
    vocab, words, docs = _index_corpus(corpus)
    if not vocab:
        raise DataError("corpus has an empty vocabulary")

    rng = np.random.default_rng(seed)
    num_words = len(vocab)
    alpha = alpha_total / num_topics
    z = rng.integers(0, num_topics, size=words.shape[0]).astype(np.int64)
    n_dk = np.zeros((len(corpus), num_topics), dtype=np.int64)
    n_kw = np.zeros((num_topics, num_words), dtype=np.int64)
    np.add.at(n_dk, (docs, z), 1)
    np.add.at(n_kw, (z, words), 1)
    n_k = n_kw.sum(axis=1)

    for sweep in range(iterations):
        ok = _gibbs_sweep(words, docs, z, n_dk, n_kw, n_k, alpha, beta, num_words * beta,
                          rng.random(words.shape[0]))
        if not ok:
            raise FloatingPointError("Gibbs conditional had a non-positive normalizer")
        if on_sweep is not None:
            on_sweep(sweep, n_kw, n_k)

    phi = (n_kw + beta) / (n_k[:, None] + num_words * beta)
    logger.debug("fit_gibbs: K=%d V=%d tokens=%d sweeps=%d", num_topics, num_words,
                 words.shape[0], iterations)
    return TopicModel(num_topics, phi, float(alpha_total), float(beta), vocab, seed)


def _doc_seed(model: TopicModel, ids: np.ndarray) -> np.random.Generator:
    return np.random.default_rng([model.seed & 0xFFFFFFFF, len(ids)] + ids.tolist())


def infer_doc(model: TopicModel, tokens: Iterable[str], burn_in: int = FOLD_IN_BURN_IN,
              samples: int = FOLD_IN_SAMPLES) -> np.ndarray:
    """Topic mixture of a whole document with the topic-word matrix frozen.

    Unknown words are skipped; a document with no known words gets the
    uniform vector. Seeded from the model seed and the document content.
    """
    K = model.num_topics
    ids = np.asarray([model.vocab[t] for t in tokens if t in model.vocab], dtype=np.int64)
    if ids.size == 0:
        return np.full(K, 1.0 / K)
    rng = _doc_seed(model, ids)
    init = rng.integers(0, K, size=ids.size).astype(np.int64)
    uniforms = rng.random(ids.size * (burn_in + samples))
    counts = _fold_in(ids, model.topic_word, model.alpha, init, uniforms, burn_in, samples)
    theta = (counts + model.alpha) / (ids.size + model.alpha_total)
    return theta / theta.sum()


def word_topics(model: TopicModel, word: str) -> np.ndarray:
    """Topic vector for a single word: its topic-word column, normalized."""
    K = model.num_topics
    idx = model.vocab.get(word)
    if idx is None:
        return np.full(K, 1.0 / K)
    col = model.topic_word[:, idx]
    return col / col.sum()


def word_topic_matrix(model: TopicModel, words: Sequence[str]) -> np.ndarray:
    return np.stack([word_topics(model, w) for w in words]) if words else np.zeros((0, model.num_topics))


def fuse_topics(word_vec, doc_vec, setting: str = "word") -> np.ndarray:
    """Combine a word topic vector with the document topic vector.

    ``word`` returns the word vector; ``word+doc`` the elementwise product,
    deliberately left unnormalized.
    """
    word_vec = np.asarray(word_vec, dtype=np.float64)
    doc_vec = np.asarray(doc_vec, dtype=np.float64)
    if word_vec.shape != doc_vec.shape:
        raise DimensionError(f"topic vectors differ in length: {word_vec.shape} vs {doc_vec.shape}")
    if setting == "word":
        return word_vec.copy()
    if setting == "word+doc":
        return word_vec * doc_vec
    raise ValueError(f"unknown topic setting {setting!r}")


# ---------------------------------------------------------------------------
# persistence
#
# header: "K V alpha_total beta seed"; then one line per word: "word p_1 ... p_K"
# where p_k = P(word | topic k). Columns are renormalized per topic on load.


def save_topic_model(model: TopicModel, path) -> None:
    path = Path(path)
    with path.open("w", encoding="utf-8") as fh:
        fh.write(f"{model.num_topics} {model.vocab_size} {model.alpha_total!r} "
                 f"{model.beta!r} {model.seed}\n")
        for idx, word in enumerate(model.words):
            probs = " ".join(repr(float(p)) for p in model.topic_word[:, idx])
            fh.write(f"{word} {probs}\n")


def load_topic_model(path) -> TopicModel:
    path = Path(path)
    with path.open(encoding="utf-8") as fh:
        header = fh.readline().split()
        if len(header) != 5:
            raise ParseError("topic model header must be 'K V alpha_total beta seed'", 1)
        try:
            K, V = int(header[0]), int(header[1])
            alpha_total, beta, seed = float(header[2]), float(header[3]), int(header[4])
        except ValueError as exc:
            raise ParseError(f"bad topic model header: {exc}", 1) from None
        vocab: dict[str, int] = {}
        phi = np.zeros((K, V))
        for lineno, line in enumerate(fh, start=2):
            parts = line.split()
            if not parts:
                continue
            if len(parts) != K + 1:
                raise ParseError(f"expected word and {K} probabilities, got {len(parts)} fields",
                                 lineno)
            if len(vocab) >= V:
                raise ParseError(f"more than V={V} word lines", lineno)
            idx = vocab.setdefault(parts[0], len(vocab))
            phi[:, idx] = [float(p) for p in parts[1:]]
    if len(vocab) != V:
        raise ParseError(f"header declares V={V} words but file has {len(vocab)}")
    phi /= phi.sum(axis=1, keepdims=True)
    return TopicModel(K, phi, alpha_total, beta, vocab, seed)
