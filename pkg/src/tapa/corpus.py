"""Question-pair datasets: tokenization, TSV loading, vocabularies, batches.

Every dataset file is UTF-8, tab separated, with the header
``id<TAB>question1<TAB>question2<TAB>label``. Quora and PAWS labels are
``0``/``1``; SemEval relevancy labels are binarized (PerfectMatch and Relevant
are paraphrases, Irrelevant is not).
"""

from __future__ import annotations

import re
import string
from collections import Counter
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from .errors import DataError, ParseError

PAD, UNK = 0, 1
PAD_TOKEN, UNK_TOKEN = "<pad>", "<unk>"
HEADER = ("id", "question1", "question2", "label")
FORMATS = ("quora_tsv", "paws_tsv", "semeval")
SEMEVAL_LABELS = {"perfectmatch": 1, "relevant": 1, "irrelevant": 0}

_PUNCT = re.compile("([" + re.escape(string.punctuation) + "])")


def tokenize(text: str) -> list[str]:
    """Lowercase, split punctuation into standalone tokens, split on whitespace."""
    return _PUNCT.sub(r" \1 ", text.lower()).split()


@dataclass
class QuestionPair:
    id: str
    q1_tokens: list[str]
    q2_tokens: list[str]
    label: int
    split: str = "train"


def _parse_label(raw: str, fmt: str, lineno: int) -> int:
    raw = raw.strip()
    if fmt == "semeval":
        try:
            return SEMEVAL_LABELS[raw.lower()]
        except KeyError:
            if raw in ("0", "1"):
                return int(raw)
            raise ParseError(f"unknown SemEval relevancy label {raw!r}", lineno) from None
    if raw not in ("0", "1"):
        raise ParseError(f"label must be 0 or 1, got {raw!r}", lineno)
    return int(raw)


def load_pairs(path, format: str = "quora_tsv", split: str = "train") -> list[QuestionPair]:
    if format not in FORMATS:
        raise DataError(f"unknown dataset format {format!r}; expected one of {FORMATS}")
    path = Path(path)
    if not path.is_file():
        raise FileNotFoundError(f"dataset file not found: {path}")
    pairs = []
    with path.open(encoding="utf-8", newline="") as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.rstrip("\r\n")
            if not line.strip():
                continue
            cols = line.split("\t")
            if lineno == 1 and tuple(c.strip().lower() for c in cols) == HEADER:
                continue
            if len(cols) != 4:
                raise ParseError(f"expected 4 tab-separated columns, got {len(cols)}", lineno)
            pid, q1, q2, label = cols
            pairs.append(QuestionPair(pid, tokenize(q1), tokenize(q2),
                                      _parse_label(label, format, lineno), split))
    return pairs


def write_pairs(pairs: Iterable[QuestionPair], path) -> None:
    """Write pairs in the shared TSV schema (tokens re-joined with spaces)."""
    with Path(path).open("w", encoding="utf-8", newline="") as fh:
        fh.write("\t".join(HEADER) + "\n")
        for p in pairs:
            fh.write(f"{p.id}\t{' '.join(p.q1_tokens)}\t{' '.join(p.q2_tokens)}\t{p.label}\n")


def semeval_xml_to_tsv(xml_path, out_path) -> int:
    """Flatten SemEval CQA question-question XML into the shared TSV schema.

    Each related question becomes one row paired with its original question;
    question text is the subject followed by the body. Returns the row count.
    """
    import xml.etree.ElementTree as ET

    def text(node, tag):
        child = node.find(tag)
        return " ".join((child.text or "").split()) if child is not None else ""

    rows = []
    for org in ET.parse(xml_path).getroot().iter("OrgQuestion"):
        q1 = f"{text(org, 'OrgQSubject')} {text(org, 'OrgQBody')}".strip()
        for rel in org.iter("RelQuestion"):
            label = rel.get("RELQ_RELEVANCE2ORGQ", "")
            if label.lower() not in SEMEVAL_LABELS:
                raise DataError(f"{xml_path}: question {rel.get('RELQ_ID')} has label {label!r}")
            q2 = f"{text(rel, 'RelQSubject')} {text(rel, 'RelQBody')}".strip()
            rows.append((rel.get("RELQ_ID", f"{org.get('ORGQ_ID')}_{len(rows)}"), q1, q2, label))
    with Path(out_path).open("w", encoding="utf-8", newline="") as fh:
        fh.write("\t".join(HEADER) + "\n")
        for row in rows:
            fh.write("\t".join(c.replace("\t", " ") for c in row) + "\n")
    return len(rows)


def load_contextual(path) -> dict[tuple[str, int], dict[int, np.ndarray]]:
    """Read a contextual-vector sidecar file.

    Each line is ``pair_id<TAB>side<TAB>token_index<TAB>v1 ... v_c``. Returns a
    mapping ``(pair_id, side) -> {token_index: vector}``.
    """
    table: dict[tuple[str, int], dict[int, np.ndarray]] = {}
    dim = None
    with Path(path).open(encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.rstrip("\r\n")
            if not line.strip():
                continue
            cols = line.split("\t")
            if len(cols) != 4:
                raise ParseError(f"expected 4 tab-separated columns, got {len(cols)}", lineno)
            try:
                side, index = int(cols[1]), int(cols[2])
                vec = np.array([float(v) for v in cols[3].split()])
            except ValueError as exc:
                raise ParseError(str(exc), lineno) from None
            if side not in (1, 2):
                raise ParseError(f"side must be 1 or 2, got {side}", lineno)
            if dim is None:
                dim = vec.size
            elif vec.size != dim:
                raise ParseError(f"vector has {vec.size} values, expected {dim}", lineno)
            table.setdefault((cols[0], side), {})[index] = vec
    return table


@dataclass
class Vocabulary:
    index: dict[str, int] = field(default_factory=lambda: {PAD_TOKEN: PAD, UNK_TOKEN: UNK})
    min_count: int = 1

    def __len__(self):
        return len(self.index)

    def __contains__(self, word):
        return word in self.index and self.index[word] > UNK

    def lookup(self, word: str) -> int:
        return self.index.get(word, UNK)

    def encode(self, tokens: Sequence[str]) -> list[int]:
        return [self.lookup(t) for t in tokens]

    @property
    def words(self) -> list[str]:
        out = [""] * len(self.index)
        for w, i in self.index.items():
            out[i] = w
        return out

    def decode(self, ids: Iterable[int]) -> list[str]:
        words = self.words
        return [words[i] for i in ids if i != PAD]


def save_vocab(vocab: Vocabulary, path) -> None:
    Path(path).write_text("".join(w + "\n" for w in vocab.words), encoding="utf-8")


def load_vocab(path, min_count: int = 1) -> Vocabulary:
    words = Path(path).read_text(encoding="utf-8").split("\n")[:-1]
    if words[:2] != [PAD_TOKEN, UNK_TOKEN]:
        raise DataError(f"{path}: vocabulary must start with {PAD_TOKEN} and {UNK_TOKEN}")
    return Vocabulary({w: i for i, w in enumerate(words)}, min_count)


def build_vocab(pairs: Iterable[QuestionPair], min_count: int = 1) -> Vocabulary:
    counts = Counter()
    for p in pairs:
        counts.update(p.q1_tokens)
        counts.update(p.q2_tokens)
    vocab = Vocabulary(min_count=min_count)
    # sorted for an order that does not depend on dict insertion history
    for word in sorted(w for w, c in counts.items() if c >= min_count):
        if word not in vocab.index:
            vocab.index[word] = len(vocab.index)
    return vocab


@dataclass
class Batch:
    q1_ids: np.ndarray
    q2_ids: np.ndarray
    q1_mask: np.ndarray
    q2_mask: np.ndarray
    labels: np.ndarray
    pair_ids: list[str]
    pairs: list[QuestionPair] = field(repr=False, default_factory=list)

    def __len__(self):
        return len(self.pair_ids)


def _pad(rows: list[list[int]], width: int) -> tuple[np.ndarray, np.ndarray]:
    ids = np.zeros((len(rows), width), dtype=np.int64)
    mask = np.zeros((len(rows), width), dtype=np.float64)
    for i, r in enumerate(rows):
        ids[i, :len(r)] = r
        mask[i, :len(r)] = 1.0
    return ids, mask


def batch_from_pairs(pairs: Sequence[QuestionPair], vocab: Vocabulary, max_len: int,
                     width: int | None = None) -> Batch:
    """Encode pairs into one batch. Both sides share a common padded width.

    ``width`` forces extra padding beyond the batch maximum, capped at ``max_len``.
    """
    r1 = [vocab.encode(p.q1_tokens[:max_len]) for p in pairs]
    r2 = [vocab.encode(p.q2_tokens[:max_len]) for p in pairs]
    longest = max([len(r) for r in r1 + r2] + [1])
    width = longest if width is None else min(max(width, longest), max_len)
    q1, m1 = _pad(r1, width)
    q2, m2 = _pad(r2, width)
    labels = np.array([p.label for p in pairs], dtype=np.int64)
    return Batch(q1, q2, m1, m2, labels, [p.id for p in pairs], list(pairs))


def make_batches(pairs: Sequence[QuestionPair], vocab: Vocabulary, batch_size: int,
                 max_len: int = 60, shuffle_seed: int | None = None) -> list[Batch]:
    """Split into batches, optionally in a seeded random order; the last batch may be short."""
    if batch_size < 1:
        raise DataError(f"batch_size must be >= 1, got {batch_size}")
    order = np.arange(len(pairs))
    if shuffle_seed is not None:
        order = np.random.default_rng(shuffle_seed).permutation(len(pairs))
    return [batch_from_pairs([pairs[i] for i in order[s:s + batch_size]], vocab, max_len)
            for s in range(0, len(pairs), batch_size)]
