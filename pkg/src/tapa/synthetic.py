"""Generated datasets with known structure for desk-scale experiments.

``lexical``: paraphrases are synonym rewrites of the same content words;
negatives pair questions about different subject groups.

``topical``: every question draws its words from one planted topic with an
exclusive vocabulary; a pair is positive exactly when both questions share
the planted topic. Labels do not depend on which particular words are used.
"""

from __future__ import annotations

from pathlib import Path
from typing import Sequence

import numpy as np

from .corpus import QuestionPair, write_pairs
from .errors import DataError

KINDS = ("lexical", "topical")
_PREFIXES = [["how", "do", "i"], ["what", "is", "the", "best", "way", "to"],
             ["why", "does"], ["where", "can", "i"], ["is", "it", "possible", "to"],
             ["which"], ["can", "you", "tell", "me", "how", "to"]]
_ONSETS = list("bcdfghjklmnprstvwz")
_VOWELS = list("aeiou")


def _pseudo_words(rng: np.random.Generator, count: int, taken: set[str]) -> list[str]:
    words = []
    while len(words) < count:
        syllables = int(rng.integers(2, 4))
        w = "".join(_ONSETS[rng.integers(len(_ONSETS))] + _VOWELS[rng.integers(len(_VOWELS))]
                    for _ in range(syllables))
        if w not in taken:
            taken.add(w)
            words.append(w)
    return words


class _World:
    """Vocabulary layout shared by every pair generated from one seed."""

    def __init__(self, rng: np.random.Generator, groups: int, words_per_group: int):
        taken = {w for p in _PREFIXES for w in p}
        self.groups = [_pseudo_words(rng, words_per_group, taken) for _ in range(groups)]
        # one synonym per content word
        self.synonyms = {w: s for g in self.groups for w, s in zip(g, _pseudo_words(rng, len(g), taken))}


def _lexical_question(rng, world: _World, concepts: Sequence[str]) -> list[str]:
    prefix = _PREFIXES[rng.integers(len(_PREFIXES))]
    surface = [world.synonyms[c] if rng.random() < 0.5 else c for c in concepts]
    return list(prefix) + surface


def _lexical_pair(rng, world: _World, label: int) -> tuple[list[str], list[str]]:
    g = int(rng.integers(len(world.groups)))
    k = int(rng.integers(3, 6))
    concepts = list(rng.choice(world.groups[g], size=k, replace=False))
    q1 = _lexical_question(rng, world, concepts)
    if label == 1:
        other = list(concepts)
        if rng.random() < 0.5:
            other = [other[i] for i in rng.permutation(len(other))]
        return q1, _lexical_question(rng, world, other)
    h = (g + 1 + int(rng.integers(len(world.groups) - 1))) % len(world.groups)
    other = list(rng.choice(world.groups[h], size=int(rng.integers(3, 6)), replace=False))
    return q1, _lexical_question(rng, world, other)


def _topical_question(rng, world: _World, topic: int) -> list[str]:
    k = int(rng.integers(4, 9))
    return list(rng.choice(world.groups[topic], size=k, replace=True))


def _topical_pair(rng, world: _World, label: int) -> tuple[list[str], list[str]]:
    g = int(rng.integers(len(world.groups)))
    h = g if label == 1 else (g + 1 + int(rng.integers(len(world.groups) - 1))) % len(world.groups)
    return _topical_question(rng, world, g), _topical_question(rng, world, h)


def _world_for(kind: str, rng) -> _World:
    if kind == "lexical":
        return _World(rng, groups=8, words_per_group=12)
    return _World(rng, groups=5, words_per_group=20)


def generate_pairs(kind: str, size: int, seed: int, prefix: str | None = None,
                   world_seed: int | None = None) -> tuple[list[QuestionPair], list[list[str]]]:
    """``size`` pairs with exactly ``size // 2`` positives, in shuffled order.

    Returns the pairs and the planted word groups.
    """
    if kind not in KINDS:
        raise DataError(f"unknown synthetic kind {kind!r}; expected one of {KINDS}")
    if size < 10:
        raise DataError(f"synthetic datasets need size >= 10, got {size}")
    world = _world_for(kind, np.random.default_rng([world_seed if world_seed is not None else seed, 0]))
    rng = np.random.default_rng([seed, 1])
    labels = np.zeros(size, dtype=np.int64)
    labels[: size // 2] = 1
    labels = labels[rng.permutation(size)]
    make = _lexical_pair if kind == "lexical" else _topical_pair
    prefix = prefix or kind[:3]
    pairs = []
    for i, y in enumerate(labels):
        q1, q2 = make(rng, world, int(y))
        pairs.append(QuestionPair(f"{prefix}-{i:06d}", q1, q2, int(y)))
    return pairs, world.groups


def make_synthetic(kind: str, size: int, seed: int, out_path=None) -> list[QuestionPair]:
    """Generate a dataset and optionally write it as TSV."""
    pairs, _ = generate_pairs(kind, size, seed)
    if out_path is not None:
        write_pairs(pairs, out_path)
    return pairs


def make_splits(kind: str, sizes: Sequence[int], seed: int, out_dir=None
                ) -> dict[str, list[QuestionPair]]:
    """Train/dev/test splits drawn from one world (shared vocabulary)."""
    names = ("train", "dev", "test")[:len(sizes)]
    out = {}
    for i, (name, n) in enumerate(zip(names, sizes)):
        pairs, _ = generate_pairs(kind, n, seed * 10 + i, prefix=f"{kind[:3]}-{name}",
                                  world_seed=seed)
        for p in pairs:
            p.split = name
        out[name] = pairs
    if out_dir is not None:
        out_dir = Path(out_dir)
        out_dir.mkdir(parents=True, exist_ok=True)
        for name, pairs in out.items():
            write_pairs(pairs, out_dir / f"{name}.tsv")
    return out


def topic_groups(kind: str, seed: int) -> list[list[str]]:
    return _world_for(kind, np.random.default_rng([seed, 0])).groups


def bow_baseline_f1(pairs: Sequence[QuestionPair], groups: Sequence[Sequence[str]],
                    train_fraction: float = 0.7) -> float:
    """Logistic regression over products of per-group word histograms.

    A sanity oracle: it knows the planted vocabularies, so a high score shows
    the labels carry recoverable topic signal.
    """
    from sklearn.linear_model import LogisticRegression

    from .evaluate import f1_score

    owner = {w: g for g, words in enumerate(groups) for w in words}

    def hist(tokens):
        h = np.zeros(len(groups))
        for t in tokens:
            if t in owner:
                h[owner[t]] += 1
        return h / max(h.sum(), 1.0)

    X = np.array([hist(p.q1_tokens) * hist(p.q2_tokens) for p in pairs])
    y = np.array([p.label for p in pairs])
    cut = int(len(pairs) * train_fraction)
    clf = LogisticRegression(max_iter=1000).fit(X[:cut], y[:cut])
    return f1_score(clf.predict(X[cut:]), y[cut:]).f1


# ---------------------------------------------------------------------------
# planted LDA corpora


def planted_corpus(num_topics: int = 5, num_docs: int = 500, doc_len: int = 40,
                   words_per_topic: int = 50, seed: int = 0, doc_concentration: float = 0.2):
    """Documents drawn from known topics with disjoint vocabularies.

    Returns ``(docs, phi, vocab)`` where ``phi`` is ``K x V`` over ``vocab``.
    """
    rng = np.random.default_rng(seed)
    vocab = [f"t{k}w{j}" for k in range(num_topics) for j in range(words_per_topic)]
    phi = np.zeros((num_topics, len(vocab)))
    for k in range(num_topics):
        phi[k, k * words_per_topic:(k + 1) * words_per_topic] = rng.dirichlet(np.ones(words_per_topic))
    docs = []
    for _ in range(num_docs):
        theta = rng.dirichlet(np.full(num_topics, doc_concentration))
        z = rng.choice(num_topics, size=doc_len, p=theta)
        docs.append([vocab[rng.choice(len(vocab), p=phi[k])] for k in z])
    return docs, phi, vocab


def matched_tv_distance(estimated: np.ndarray, est_vocab: dict[str, int],
                        planted: np.ndarray, planted_vocab: Sequence[str]) -> tuple[float, list]:
    """Greedy one-to-one topic matching by total-variation distance.

    Returns the mean TV over matched pairs and the ``(planted, estimated)`` matches.
    """
    aligned = np.zeros((estimated.shape[0], len(planted_vocab)))
    for j, w in enumerate(planted_vocab):
        if w in est_vocab:
            aligned[:, j] = estimated[:, est_vocab[w]]
    tv = 0.5 * np.abs(planted[:, None, :] - aligned[None, :, :]).sum(axis=2)
    free_p, free_e = set(range(tv.shape[0])), set(range(tv.shape[1]))
    matches, dists = [], []
    while free_p and free_e:
        i, j = min(((i, j) for i in free_p for j in free_e), key=lambda ij: tv[ij])
        matches.append((i, j))
        dists.append(tv[i, j])
        free_p.discard(i)
        free_e.discard(j)
    return float(np.mean(dists)), matches
