"""Uncased bag-of-words features fitted on the training sequences."""

from __future__ import annotations

import re
from collections import Counter
from dataclasses import dataclass, field
from typing import Iterable

import numpy as np
from scipy import sparse

from ..errors import EmptyCorpus

VOCAB_SCHEMA = 1

# maximal runs of letters/digits; "x10" stays one token
_TOKEN = re.compile(r"[^\W_]+")

FeatureVector = tuple[tuple[int, int], ...]


def tokenize(text: str) -> list[str]:
    return _TOKEN.findall(text.lower())


@dataclass(frozen=True)
class Vocabulary:
    tokens: tuple[str, ...]
    index: dict[str, int] = field(default_factory=dict, compare=False, repr=False)

    def __post_init__(self):
        self.index.update({t: i for i, t in enumerate(self.tokens)})

    @property
    def size(self) -> int:
        return len(self.tokens)

    def to_dict(self) -> dict:
        return {"schema": VOCAB_SCHEMA, "tokens": list(self.tokens)}

    @classmethod
    def from_dict(cls, d: dict) -> "Vocabulary":
        return cls(tuple(d["tokens"]))


def build_vocabulary(train_texts: Iterable) -> Vocabulary:
    """Sorted vocabulary over the training texts (strings or objects with ``.text``)."""
    seen = set()
    for item in train_texts:
        seen.update(tokenize(item if isinstance(item, str) else item.text))
    if not seen:
        raise EmptyCorpus("training sequences contain no tokens")
    return Vocabulary(tuple(sorted(seen)))


def vectorize(vocab: Vocabulary, text: str) -> FeatureVector:
    counts = Counter(vocab.index[t] for t in tokenize(text) if t in vocab.index)
    return tuple(sorted(counts.items()))


def to_matrix(vectors: Iterable[FeatureVector], n_features: int) -> sparse.csr_matrix:
    rows, cols, vals = [], [], []
    n = 0
    for i, vec in enumerate(vectors):
        n = i + 1
        for j, c in vec:
            rows.append(i)
            cols.append(j)
            vals.append(float(c))
    return sparse.csr_matrix((np.array(vals, dtype=np.float64), (rows, cols)), shape=(n, n_features))


def as_matrix(X, n_features: int | None = None) -> sparse.csr_matrix:
    """Accept a list of FeatureVectors, a dense array, or a sparse matrix."""
    if sparse.issparse(X):
        return sparse.csr_matrix(X, dtype=np.float64)
    if isinstance(X, np.ndarray):
        return sparse.csr_matrix(np.atleast_2d(X).astype(np.float64))
    X = list(X)
    if X and not all(isinstance(v, tuple) and all(isinstance(p, tuple) for p in v) for v in X):
        return sparse.csr_matrix(np.asarray(X, dtype=np.float64))
    if n_features is None:
        n_features = 1 + max((j for vec in X for j, _ in vec), default=-1)
    return to_matrix(X, n_features)
