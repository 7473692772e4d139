"""Sequential, quantitative and semantic views of an event group.

Id layout shared with the parser: templates ``0..n-1``, OOV ``n``, PAD ``n+1``.
"""

from __future__ import annotations

import hashlib
import math
import os
import re
from collections import Counter
from dataclasses import dataclass, field
from typing import Iterable, Sequence

import numpy as np
import torch
from torch import nn

from .drain import WILDCARD, EventTemplate

STOP_WORDS = frozenset("""
a an the and or but if of to in on at by for from with as into
is are was were be been it its this that these those
""".split())

_ALPHA_RUN = re.compile(r"[A-Za-z]+")
_CAMEL = re.compile(r"[A-Z]+(?=[A-Z][a-z])|[A-Z]?[a-z]+|[A-Z]+")


class EventEmbeddingTable(nn.Embedding):
    """Learnable event vectors; the PAD row is zero and receives no gradient."""

    def __init__(self, n_templates: int, dim: int):
        super().__init__(n_templates + 2, dim, padding_idx=n_templates + 1)
        self.n_templates = n_templates

    @property
    def pad_id(self) -> int:
        return self.n_templates + 1


def sequential_embed(events: Sequence[int], table: EventEmbeddingTable) -> torch.Tensor:
    """(M, d_e) tensor whose row m is the table row for ``events[m]``."""
    return table(torch.as_tensor(np.asarray(events), dtype=torch.long))


def quantitative_embed(events: Sequence[int], n_templates: int) -> np.ndarray:
    """Running count vectors, shape (M, n_templates + 1).

    Row m counts events[0..m]; the last row is the group's count vector.
    PAD (id ``n_templates + 1``) is never counted.
    """
    ev = np.asarray(events, dtype=np.int64)
    onehot = np.zeros((len(ev), n_templates + 2), dtype=np.int64)
    onehot[np.arange(len(ev)), ev] = 1
    return np.cumsum(onehot[:, : n_templates + 1], axis=0)


def running_counts(ids: torch.Tensor, n_templates: int) -> torch.Tensor:
    """Batched ``quantitative_embed`` for a (B, M) id tensor, as float."""
    onehot = nn.functional.one_hot(ids, n_templates + 2)[..., : n_templates + 1]
    return onehot.cumsum(dim=1).to(torch.get_default_dtype())


# -- semantic -------------------------------------------------------------------

def split_identifier(token: str) -> list[str]:
    return [w for run in _ALPHA_RUN.findall(token) for w in _CAMEL.findall(run)]


def preprocess_event(template: EventTemplate | Sequence[str] | str) -> list[str]:
    """Words of a template after dropping non-words, camel-case splitting,
    lowercasing and stop-word removal."""
    if isinstance(template, EventTemplate):
        tokens = template.tokens
    elif isinstance(template, str):
        tokens = template.split()
    else:
        tokens = list(template)
    words = []
    for tok in tokens:
        if tok == WILDCARD:
            continue
        for w in split_identifier(tok):
            w = w.lower()
            if w not in STOP_WORDS:
                words.append(w)
    return words


class HashWordVectors:
    """Deterministic stand-in for pre-trained vectors: each word maps to a
    pseudo-random unit vector seeded from a hash of the word."""

    def __init__(self, dim: int = 300, seed: int = 0):
        self.dim = dim
        self.seed = seed
        self._cache: dict[str, np.ndarray] = {}

    def __call__(self, word: str) -> np.ndarray:
        vec = self._cache.get(word)
        if vec is None:
            digest = hashlib.blake2b(f"{self.seed}:{word}".encode(), digest_size=8).digest()
            rng = np.random.default_rng(int.from_bytes(digest, "little"))
            vec = rng.standard_normal(self.dim)
            vec /= np.linalg.norm(vec)
            self._cache[word] = vec
        return vec


class FileWordVectors:
    """Vectors from a FastText-style text file (``word v1 ... vd`` per line).

    An optional ``count dim`` header line is skipped.  Unknown words map to
    the zero vector.
    """

    def __init__(self, path: str | os.PathLike, vocab: Iterable[str] | None = None):
        wanted = set(vocab) if vocab is not None else None
        self.vectors: dict[str, np.ndarray] = {}
        self.dim = 0
        with open(path, encoding="utf-8", errors="replace") as fh:
            for line_no, line in enumerate(fh):
                parts = line.rstrip().split(" ")
                if line_no == 0 and len(parts) == 2 and all(p.isdigit() for p in parts):
                    continue
                if len(parts) < 2 or (wanted is not None and parts[0] not in wanted):
                    continue
                vec = np.asarray(parts[1:], dtype=np.float64)
                if self.dim and len(vec) != self.dim:
                    raise ValueError(f"{path}: line {line_no + 1} has dim {len(vec)}, expected {self.dim}")
                self.dim = len(vec)
                self.vectors[parts[0]] = vec

    def __call__(self, word: str) -> np.ndarray:
        vec = self.vectors.get(word)
        return np.zeros(self.dim) if vec is None else vec


@dataclass
class TfIdfModel:
    total_events: int = 0
    doc_freq: dict[str, int] = field(default_factory=dict)

    @classmethod
    def fit(cls, documents: Iterable[Sequence[str]]) -> "TfIdfModel":
        docs = [set(d) for d in documents]
        freq = Counter(w for d in docs for w in d)
        return cls(total_events=len(docs), doc_freq=dict(freq))

    @property
    def idf(self) -> dict[str, float]:
        return {w: self.idf_of(w) for w in self.doc_freq}

    def idf_of(self, word: str) -> float:
        if self.total_events == 0:
            return 0.0
        return math.log(self.total_events / self.doc_freq.get(word, 1))

    @staticmethod
    def tf(word: str, words: Sequence[str]) -> float:
        return words.count(word) / len(words) if words else 0.0

    def weights(self, words: Sequence[str]) -> list[float]:
        counts = Counter(words)
        n = len(words)
        return [counts[w] / n * self.idf_of(w) for w in words]


def semantic_vector(words: Sequence[str], provider, tfidf: TfIdfModel) -> np.ndarray:
    """TF-IDF weighted sum of word vectors divided by the word count."""
    if not words:
        return np.zeros(provider.dim)
    weights = tfidf.weights(words)
    total = sum(w * provider(word) for w, word in zip(weights, words))
    return np.asarray(total, dtype=np.float64) / len(words)


def semantic_table(templates: Sequence[EventTemplate], provider,
                   tfidf: TfIdfModel | None = None) -> np.ndarray:
    """(n + 2, d) matrix of per-event semantic vectors; OOV and PAD rows are zero.

    When ``tfidf`` is omitted it is fitted on ``templates`` (one document each).
    """
    words = [preprocess_event(t) for t in templates]
    if tfidf is None:
        tfidf = TfIdfModel.fit(words)
    table = np.zeros((len(templates) + 2, provider.dim))
    for i, w in enumerate(words):
        table[i] = semantic_vector(w, provider, tfidf)
    return table


def semantic_embed(events: Sequence[int], table: np.ndarray) -> np.ndarray:
    """(M, d) semantic vectors for one group from a precomputed table."""
    return table[np.asarray(events, dtype=np.int64)]
