"""The full topic-aware matching model and the Siamese max-pool baseline."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Mapping, Sequence

import numpy as np

from . import tensor as T
from .config import ExperimentConfig
from .corpus import Batch, QuestionPair, Vocabulary, batch_from_pairs
from .encode import (BiLstmParams, EmbeddingTable, TopicLookup, bilstm_encode,
                     doc_topic_vectors, embed, fuse_early, gather_contextual, init_bilstm,
                     init_embeddings, init_topic_lookup, topic_matrices, topic_sequence)
from .lda import TopicModel
from .match import (AffinityStack, AggregatorParams, affinity, aggregate, init_aggregator,
                    mlp_head, stack_channels, topic_affinity)
from .tensor import Tensor


@dataclass
class TapaParams:
    embedding: EmbeddingTable
    topics: TopicLookup | None
    encoder: BiLstmParams
    aggregator: AggregatorParams

    def tensors(self) -> dict[str, Tensor]:
        out = {"embedding": self.embedding.matrix}
        if self.topics is not None:
            out["topics"] = self.topics.table
        for tag, w in (("fw", self.encoder.forward), ("bw", self.encoder.backward)):
            out[f"lstm.{tag}.wx"], out[f"lstm.{tag}.wh"], out[f"lstm.{tag}.b"] = w.wx, w.wh, w.b
        out.update(self.aggregator.tensors())
        return out

    def trainable(self) -> dict[str, Tensor]:
        return {k: t for k, t in self.tensors().items() if t.requires_grad}

    def state(self) -> dict[str, np.ndarray]:
        return {k: t.data.copy() for k, t in self.tensors().items()}

    def load_state(self, state: Mapping[str, np.ndarray]):
        for k, t in self.tensors().items():
            if state[k].shape != t.shape:
                raise ValueError(f"parameter {k}: shape {state[k].shape} != {t.shape}")
            t.data = np.array(state[k], dtype=np.float64)


def encoder_input_dim(config: ExperimentConfig) -> int:
    width = config.embedding_dim + (config.contextual_dim if config.contextual else 0)
    if config.use_topics and config.fusion == "early":
        width += config.num_topics
    return width


@dataclass
class TapaModel:
    config: ExperimentConfig
    vocab: Vocabulary
    params: TapaParams
    topic_model: TopicModel | None = None
    contextual: Mapping = field(default_factory=dict)

    @classmethod
    def build(cls, config: ExperimentConfig, vocab: Vocabulary,
              topic_model: TopicModel | None = None, embedding_path: str | None = None,
              contextual: Mapping | None = None) -> "TapaModel":
        config.validate()
        rng = np.random.default_rng(config.init_seed)
        embedding = init_embeddings(vocab, config.embedding_dim, rng, embedding_path or None,
                                    config.contextual_dim if config.contextual else 0)
        topics = None
        if config.use_topics:
            if topic_model is None:
                raise ValueError("a topic model is required when use_topics is enabled")
            if topic_model.num_topics != config.num_topics:
                raise ValueError(f"topic model has {topic_model.num_topics} topics, "
                                 f"config expects {config.num_topics}")
            topics = init_topic_lookup(vocab, topic_model, config.topic_update)
        encoder = init_bilstm(encoder_input_dim(config), config.lstm_hidden, rng)
        if config.architecture == "siamese":
            # the head sees [u ; v], each 2h wide
            aggregator = init_aggregator(1, 1, (0, 0), (0, 0), config.hidden_widths, 1, rng,
                                         flat_width=4 * config.lstm_hidden)
        else:
            channels = 2 if config.topic_channel else 1
            aggregator = init_aggregator(config.max_len, channels, config.filters,
                                         config.kernel_sizes, config.hidden_widths,
                                         config.pool_size, rng)
        params = TapaParams(embedding, topics, encoder, aggregator)
        return cls(config, vocab, params, topic_model, contextual or {})

    # -- forward ------------------------------------------------------------

    def batch(self, pairs: Sequence[QuestionPair], width: int | None = None) -> Batch:
        return batch_from_pairs(pairs, self.vocab, self.config.max_len, width)

    def _side_inputs(self, batch: Batch):
        cfg = self.config
        ids = np.concatenate([batch.q1_ids, batch.q2_ids])
        mask = np.concatenate([batch.q1_mask, batch.q2_mask])
        ctx = None
        if cfg.contextual:
            width = ids.shape[1]
            ctx = np.concatenate([
                gather_contextual(batch.pairs, 1, width, cfg.contextual_dim, self.contextual, cfg.max_len),
                gather_contextual(batch.pairs, 2, width, cfg.contextual_dim, self.contextual, cfg.max_len)])
        docs = None
        if cfg.use_topics and cfg.topic_setting == "word+doc":
            tokens = [p.q1_tokens for p in batch.pairs] + [p.q2_tokens for p in batch.pairs]
            docs = doc_topic_vectors(self.params.topics, self.topic_model, tokens)
        return ids, mask, ctx, docs

    def affinity_stack(self, batch: Batch) -> AffinityStack:
        """Both questions encoded with one shared encoder, compared as affinity planes."""
        cfg = self.config
        p = self.params
        n = len(batch)
        ids, mask, ctx, docs = self._side_inputs(batch)
        x = embed(p.embedding, ids, ctx)
        topics = topic_sequence(p.topics, ids, mask, docs) if cfg.use_topics else None
        e = fuse_early(x, topics) if cfg.use_topics and cfg.fusion == "early" else x
        H = bilstm_encode(p.encoder, e, mask)
        L, R = H[:n], H[n:]
        a_emb = affinity(L, R, batch.q1_mask, batch.q2_mask)
        a_topic = None
        if cfg.topic_channel:
            TL, TR = topic_matrices(topics[:n], topics[n:], cfg.fusion)
            a_topic = topic_affinity(TL, TR, batch.q1_mask, batch.q2_mask)
        regions = [(int(a), int(b)) for a, b in zip(batch.q1_mask.sum(1), batch.q2_mask.sum(1))]
        return stack_channels(a_emb, a_topic, regions)

    def _siamese_logits(self, batch: Batch) -> Tensor:
        p = self.params
        n = len(batch)
        ids, mask, ctx, docs = self._side_inputs(batch)
        x = embed(p.embedding, ids, ctx)
        if self.config.use_topics:
            x = fuse_early(x, topic_sequence(p.topics, ids, mask, docs))
        H = bilstm_encode(p.encoder, x, mask)
        # masked positions are pushed far below any real activation
        pooled = T.tmax(T.add(H, (mask[..., None] - 1.0) * 1e9), axis=1)
        return mlp_head(T.concat(pooled[:n], pooled[n:], axis=-1), p.aggregator)

    def logits(self, batch: Batch) -> Tensor:
        if self.config.architecture == "siamese":
            return self._siamese_logits(batch)
        stack = self.affinity_stack(batch)
        size = self.config.max_len
        canvas = T.pad_to(stack.channels, stack.channels.shape[:2] + (size, size))
        return aggregate(AffinityStack(canvas, stack.valid_region), self.params.aggregator)

    def loss(self, batch: Batch) -> Tensor:
        return T.softmax_crossentropy(self.logits(batch), batch.labels)

    def predict_logits(self, pairs: Sequence[QuestionPair], batch_size: int = 256) -> np.ndarray:
        if not pairs:
            return np.zeros((0, 2))
        return np.concatenate([self.logits(self.batch(pairs[s:s + batch_size])).data
                               for s in range(0, len(pairs), batch_size)])

    def predict(self, pairs: Sequence[QuestionPair], batch_size: int = 256) -> np.ndarray:
        """Class predictions; an exact logit tie goes to class 0."""
        z = self.predict_logits(pairs, batch_size)
        return (z[:, 1] > z[:, 0]).astype(np.int64)
