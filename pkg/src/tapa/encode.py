"""Token sequences to encoded matrices.

Embedding lookup (optionally joined with precomputed contextual vectors), topic
vectors per token, early fusion by concatenation, and a masked bidirectional
LSTM whose single parameter set encodes both questions.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from pathlib import Path
from typing import Mapping, Sequence

import numpy as np

from . import tensor as T
from .corpus import PAD, UNK, Vocabulary
from .errors import ContractError, DataError, DimensionError, ParseError
from .lda import TopicModel, infer_doc, word_topics
from .tensor import Tensor

logger = logging.getLogger(__name__)


@dataclass
class EmbeddingTable:
    matrix: Tensor  # V x e, row PAD all zeros
    pretrained_mask: np.ndarray
    contextual_dim: int = 0

    @property
    def word_dim(self) -> int:
        return self.matrix.shape[1]

    @property
    def dim(self) -> int:
        return self.word_dim + self.contextual_dim


@dataclass
class TopicLookup:
    table: Tensor  # V x K
    trainable: bool = True
    doc_vectors: dict[tuple[str, ...], np.ndarray] = field(default_factory=dict)

    @property
    def num_topics(self) -> int:
        return self.table.shape[1]


@dataclass
class LstmWeights:
    wx: Tensor  # in x 4h, gate order: input, forget, cell, output
    wh: Tensor  # h x 4h
    b: Tensor   # 4h


@dataclass
class BiLstmParams:
    forward: LstmWeights
    backward: LstmWeights

    @property
    def hidden(self) -> int:
        return self.forward.wh.shape[0]

    @property
    def input_dim(self) -> int:
        return self.forward.wx.shape[0]

    @property
    def output_dim(self) -> int:
        return 2 * self.hidden


# ---------------------------------------------------------------------------
# construction


def load_embeddings(path, vocab: Vocabulary, dim: int, rng: np.random.Generator,
                    scale: float = 0.1) -> tuple[np.ndarray, np.ndarray]:
    """Read a GloVe-style text file (``word v1 ... v_dim``) for the words in ``vocab``.

    Words absent from the file get uniform random vectors in ``[-scale, scale]``.
    Returns the matrix and a boolean mask of rows taken from the file.
    """
    matrix = rng.uniform(-scale, scale, size=(len(vocab), dim))
    found = np.zeros(len(vocab), dtype=bool)
    with Path(path).open(encoding="utf-8", errors="replace") as fh:
        for lineno, line in enumerate(fh, start=1):
            parts = line.rstrip().split(" ")
            if len(parts) < 2:
                continue
            idx = vocab.index.get(parts[0])
            if idx is None or idx <= UNK:
                continue
            if len(parts) != dim + 1:
                raise ParseError(f"embedding for {parts[0]!r} has {len(parts) - 1} values, "
                                 f"expected {dim}", lineno)
            matrix[idx] = [float(v) for v in parts[1:]]
            found[idx] = True
    matrix[PAD] = 0.0
    logger.info("embeddings: %d/%d vocabulary words found in %s", found.sum() , len(vocab) - 2, path)
    return matrix, found


def init_embeddings(vocab: Vocabulary, dim: int, rng: np.random.Generator,
                    path: str | None = None, contextual_dim: int = 0) -> EmbeddingTable:
    if path:
        matrix, found = load_embeddings(path, vocab, dim, rng)
    else:
        matrix = rng.uniform(-0.1, 0.1, size=(len(vocab), dim))
        matrix[PAD] = 0.0
        found = np.zeros(len(vocab), dtype=bool)
    return EmbeddingTable(Tensor(matrix, requires_grad=True, name="embedding"), found,
                          contextual_dim)


def init_topic_lookup(vocab: Vocabulary, model: TopicModel, trainable: bool) -> TopicLookup:
    words = vocab.words
    table = np.stack([word_topics(model, w) for w in words])
    table[PAD] = 0.0
    return TopicLookup(Tensor(table, requires_grad=trainable, name="topics"), trainable)


def init_bilstm(input_dim: int, hidden: int, rng: np.random.Generator) -> BiLstmParams:
    def direction(tag):
        wx = T.glorot_uniform(rng, (input_dim, 4 * hidden), input_dim, hidden)
        wh = T.glorot_uniform(rng, (hidden, 4 * hidden), hidden, hidden)
        b = np.zeros(4 * hidden)
        b[hidden:2 * hidden] = 1.0
        return LstmWeights(Tensor(wx, True, f"lstm.{tag}.wx"), Tensor(wh, True, f"lstm.{tag}.wh"),
                           Tensor(b, True, f"lstm.{tag}.b"))

    return BiLstmParams(direction("fw"), direction("bw"))


# ---------------------------------------------------------------------------
# forward pieces


def gather_contextual(pairs, side: int, width: int, dim: int,
                      sidecar: Mapping[tuple[str, int], Mapping[int, np.ndarray]],
                      max_len: int) -> np.ndarray:
    """Assemble ``B x width x dim`` contextual vectors for one side of a batch."""
    out = np.zeros((len(pairs), width, dim))
    for b, pair in enumerate(pairs):
        tokens = (pair.q1_tokens if side == 1 else pair.q2_tokens)[:max_len]
        vectors = sidecar.get((pair.id, side), {})
        for i in range(len(tokens)):
            vec = vectors.get(i)
            if vec is None:
                raise DataError(f"missing contextual vector for pair {pair.id!r} "
                                f"side {side} token index {i}")
            if vec.shape[0] != dim:
                raise DataError(f"contextual vector for pair {pair.id!r} token {i} has "
                                f"dimension {vec.shape[0]}, expected {dim}")
            out[b, i] = vec
    return out


def embed(table: EmbeddingTable, token_ids, contextual=None) -> Tensor:
    """``x_i = [emb_i ; ctx_i]``; padding positions are zero vectors."""
    ids = np.asarray(token_ids, dtype=np.int64)
    x = T.take_rows(table.matrix, ids, frozen_row=PAD)
    if table.contextual_dim == 0:
        return x
    if contextual is None:
        raise DataError("contextual channel is enabled but no contextual vectors were given")
    ctx = np.asarray(contextual, dtype=np.float64)
    if ctx.shape != ids.shape + (table.contextual_dim,):
        raise DimensionError(f"contextual vectors shape {ctx.shape}, expected "
                             f"{ids.shape + (table.contextual_dim,)}")
    ctx = ctx * (ids != PAD)[..., None]
    return T.concat(x, Tensor(ctx), axis=-1)


def topic_sequence(lookup: TopicLookup, token_ids, mask, doc_vectors=None) -> Tensor:
    """Per-token topic vectors; with ``doc_vectors`` (``B x K``) the word+doc product."""
    ids = np.asarray(token_ids, dtype=np.int64)
    t = T.take_rows(lookup.table, ids, frozen_row=PAD)
    scale = np.asarray(mask, dtype=np.float64)[..., None]
    if doc_vectors is not None:
        scale = scale * np.asarray(doc_vectors)[..., None, :]
    return T.mul(t, scale)


def doc_topic_vectors(lookup: TopicLookup, model: TopicModel,
                      token_lists: Sequence[Sequence[str]]) -> np.ndarray:
    """Cached document topic vectors (treated as constants during training)."""
    rows = []
    for tokens in token_lists:
        key = tuple(tokens)
        vec = lookup.doc_vectors.get(key)
        if vec is None:
            vec = lookup.doc_vectors[key] = infer_doc(model, tokens)
        rows.append(vec)
    return np.stack(rows)


def fuse_early(x: Tensor, t: Tensor) -> Tensor:
    """``e_i = [x_i ; t_i]`` at every position."""
    if x.shape[:-1] != t.shape[:-1]:
        raise DimensionError(f"sequence shapes differ: {x.shape} vs {t.shape}")
    return T.concat(x, t, axis=-1)


def topic_matrices(t1: Tensor, t2: Tensor, fusion: str) -> tuple[Tensor, Tensor]:
    """Row-stacked topic vectors of both questions, for late fusion only."""
    if fusion != "late":
        raise ContractError("topic matrices exist only in late-fusion mode")
    return t1, t2


def _run_direction(w: LstmWeights, x: Tensor, mask: np.ndarray, reverse: bool) -> list[Tensor]:
    batch, steps = mask.shape
    h = w.wh.shape[0]
    projected = T.add(T.matmul(x, w.wx), w.b)  # B x T x 4h
    state_h = Tensor(np.zeros((batch, h)))
    state_c = Tensor(np.zeros((batch, h)))
    outputs: list[Tensor | None] = [None] * steps
    order = range(steps - 1, -1, -1) if reverse else range(steps)
    for t in order:
        m = mask[:, t:t + 1]
        z = T.add(projected[:, t, :], T.matmul(state_h, w.wh))
        i = T.sigmoid(z[:, :h])
        f = T.sigmoid(z[:, h:2 * h])
        g = T.tanh(z[:, 2 * h:3 * h])
        o = T.sigmoid(z[:, 3 * h:])
        c_new = T.add(T.mul(f, state_c), T.mul(i, g))
        h_new = T.mul(o, T.tanh(c_new))
        # masked steps carry the previous state through unchanged
        state_c = T.add(T.mul(c_new, m), T.mul(state_c, 1.0 - m))
        state_h = T.add(T.mul(h_new, m), T.mul(state_h, 1.0 - m))
        outputs[t] = T.mul(state_h, m)
    return outputs


def bilstm_encode(params: BiLstmParams, e: Tensor, mask) -> Tensor:
    """Encode ``B x T x in`` (or ``T x in``) into ``B x T x 2h`` (or ``T x 2h``)."""
    mask = np.asarray(mask, dtype=np.float64)
    single = e.ndim == 2
    if single:
        e = T.reshape(e, (1,) + e.shape)
        mask = mask[None, :]
    if e.shape[:2] != mask.shape:
        raise DimensionError(f"mask shape {mask.shape} does not match input {e.shape}")
    if e.shape[2] != params.input_dim:
        raise DimensionError(f"encoder expects input width {params.input_dim}, got {e.shape[2]}")
    fw = _run_direction(params.forward, e, mask, reverse=False)
    bw = _run_direction(params.backward, e, mask, reverse=True)
    out = T.concat(T.stack(fw, axis=1), T.stack(bw, axis=1), axis=-1)
    return T.reshape(out, out.shape[1:]) if single else out
