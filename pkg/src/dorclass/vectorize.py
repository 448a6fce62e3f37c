"""Bag-of-n-grams tf-idf vectorization and per-label ANOVA feature selection.

Weighting follows the usual smoothed scheme: raw counts times
``ln((1 + N) / (1 + df)) + 1``, every row scaled to unit L2 norm.
"""

from __future__ import annotations

import hashlib
import json
import os
import re
import struct
from collections import Counter
from dataclasses import dataclass, field
from functools import lru_cache
from importlib import resources
from typing import Iterable, Sequence

import numpy as np
import scipy.sparse as sp

from .taxonomy import N_LABELS

SIZE_CLASSES = {"s": 1000, "m": 2500, "l": 5000}

_TOKEN = re.compile(r"[^\W_]+")
_VEC_MAGIC = b"DORCVEC\x00"
_VEC_VERSION = 1


class EmptyCorpus(ValueError):
    pass


class DegenerateGroups(ValueError):
    pass


@lru_cache(maxsize=None)
def default_stop_words() -> frozenset[str]:
    text = resources.files("dorclass").joinpath("data/stopwords.txt").read_text("utf-8")
    return frozenset(w.strip() for w in text.splitlines() if w.strip() and not w.startswith("#"))


def tokenize(text: str, stop_words: Iterable[str] | None = None,
             ngram_range: tuple[int, int] = (1, 2)) -> list[str]:
    """Case-folded word tokens (>= 2 chars, stop words removed) followed by their n-grams."""
    stops = default_stop_words() if stop_words is None else stop_words
    words = [t for t in _TOKEN.findall(text.casefold()) if len(t) >= 2 and t not in stops]
    lo, hi = ngram_range
    out: list[str] = []
    for n in range(lo, hi + 1):
        if n == 1:
            out.extend(words)
        else:
            out.extend(" ".join(words[i:i + n]) for i in range(len(words) - n + 1))
    return out


def stop_list_hash(stop_words: Iterable[str]) -> str:
    return hashlib.sha256("\n".join(sorted(stop_words)).encode("utf-8")).hexdigest()


@dataclass
class DocumentFrequencies:
    """Mergeable partial document-frequency counts for sharded fitting."""

    df: Counter = field(default_factory=Counter)
    n_docs: int = 0

    def update(self, docs: Iterable[str], stop_words, ngram_range=(1, 2)) -> "DocumentFrequencies":
        for doc in docs:
            self.df.update(set(tokenize(doc, stop_words, ngram_range)))
            self.n_docs += 1
        return self

    def merge(self, other: "DocumentFrequencies") -> "DocumentFrequencies":
        return DocumentFrequencies(self.df + other.df, self.n_docs + other.n_docs)


@dataclass
class VectorizerModel:
    vocabulary: dict[str, int]
    idf: np.ndarray
    stop_words: frozenset[str]
    ngram_range: tuple[int, int] = (1, 2)
    doc_count: int = 0

    @property
    def n_features(self) -> int:
        return len(self.vocabulary)

    def terms(self) -> list[str]:
        out = [""] * len(self.vocabulary)
        for term, idx in self.vocabulary.items():
            out[idx] = term
        return out

    def save(self, path: str | os.PathLike) -> None:
        body = json.dumps({
            "terms": self.terms(),
            "idf": [float(x) for x in self.idf],
            "stop_words": sorted(self.stop_words),
            "stop_list_sha256": stop_list_hash(self.stop_words),
            "ngram_range": list(self.ngram_range),
            "doc_count": self.doc_count,
        }, ensure_ascii=False).encode("utf-8")
        with open(path, "wb") as fh:
            fh.write(_VEC_MAGIC + struct.pack("<I", _VEC_VERSION) + body)

    @classmethod
    def load(cls, path: str | os.PathLike) -> "VectorizerModel":
        with open(path, "rb") as fh:
            raw = fh.read()
        if raw[:8] != _VEC_MAGIC:
            raise ValueError(f"{path}: not a vectorizer model file")
        (version,) = struct.unpack("<I", raw[8:12])
        if version != _VEC_VERSION:
            raise ValueError(f"{path}: unsupported vectorizer version {version}")
        obj = json.loads(raw[12:].decode("utf-8"))
        stops = frozenset(obj["stop_words"])
        if stop_list_hash(stops) != obj["stop_list_sha256"]:
            raise ValueError(f"{path}: stop list hash mismatch")
        return cls(
            vocabulary={t: i for i, t in enumerate(obj["terms"])},
            idf=np.asarray(obj["idf"], dtype=np.float64),
            stop_words=stops,
            ngram_range=tuple(obj["ngram_range"]),
            doc_count=obj["doc_count"],
        )


def model_from_frequencies(freqs: DocumentFrequencies, stop_words, ngram_range=(1, 2)) -> VectorizerModel:
    if freqs.n_docs == 0:
        raise EmptyCorpus("cannot fit tf-idf on an empty corpus")
    terms = sorted(freqs.df)
    df = np.array([freqs.df[t] for t in terms], dtype=np.float64)
    idf = np.log((1.0 + freqs.n_docs) / (1.0 + df)) + 1.0
    return VectorizerModel({t: i for i, t in enumerate(terms)}, idf, frozenset(stop_words),
                           tuple(ngram_range), freqs.n_docs)


def fit_tfidf(corpus: Sequence[str], stop_words: Iterable[str] | None = None,
              ngram_range: tuple[int, int] = (1, 2)) -> VectorizerModel:
    stops = default_stop_words() if stop_words is None else frozenset(stop_words)
    freqs = DocumentFrequencies().update(corpus, stops, ngram_range)
    return model_from_frequencies(freqs, stops, ngram_range)


def transform(model: VectorizerModel, docs: Iterable[str]) -> sp.csr_matrix:
    indptr = [0]
    indices: list[int] = []
    data: list[float] = []
    vocab = model.vocabulary
    for doc in docs:
        counts = Counter(vocab[t] for t in tokenize(doc, model.stop_words, model.ngram_range) if t in vocab)
        cols = sorted(counts)
        vals = np.array([counts[c] for c in cols], dtype=np.float64) * model.idf[cols]
        norm = np.sqrt(np.dot(vals, vals))
        if norm > 0:
            vals /= norm
        indices.extend(cols)
        data.extend(vals.tolist())
        indptr.append(len(indices))
    return sp.csr_matrix(
        (np.asarray(data, dtype=np.float64), np.asarray(indices, dtype=np.int64),
         np.asarray(indptr, dtype=np.int64)),
        shape=(len(indptr) - 1, model.n_features),
    )


# --- ANOVA ---------------------------------------------------------------

def anova_f(column: Sequence[float], groups: Sequence[bool]) -> float:
    """One-way F statistic of ``column`` split into two groups by ``groups``.

    Returns ``inf`` when the groups differ but have no within-group spread and
    0 when the group means coincide.
    """
    x = np.asarray(column, dtype=np.float64)
    g = np.asarray(groups, dtype=bool)
    a, b = x[g], x[~g]
    if len(a) == 0 or len(b) == 0:
        raise DegenerateGroups("both groups need at least one value")
    n = len(x)
    grand = x.mean()
    ma, mb = a.mean(), b.mean()
    ssb = len(a) * (ma - grand) ** 2 + len(b) * (mb - grand) ** 2
    ssw = ((a - ma) ** 2).sum() + ((b - mb) ** 2).sum()
    if ssb == 0.0:
        return 0.0
    if ssw == 0.0 or n == 2:
        return float("inf")
    return float((ssb / 1.0) / (ssw / (n - 2)))


def anova_f_columns(X, in_group: np.ndarray, rel_tol: float = 1e-12) -> np.ndarray:
    """F statistic for every column of ``X`` (one-vs-rest), from group sums only.

    ``X`` may be sparse; only column sums and sums of squares over each group
    are formed, so the matrix is never densified.
    """
    g = np.asarray(in_group, dtype=np.float64)
    n = X.shape[0]
    n1 = g.sum()
    n0 = n - n1
    if n1 == 0 or n0 == 0:
        raise DegenerateGroups("both groups need at least one row")
    X = sp.csr_matrix(X) if not sp.issparse(X) else X
    X2 = X.multiply(X)
    s1 = np.asarray(X.T @ g).ravel()
    total = np.asarray(X.sum(axis=0)).ravel()
    total_sq = np.asarray(X2.sum(axis=0)).ravel()
    m1 = s1 / n1
    m0 = (total - s1) / n0
    ssb = (n1 * n0 / n) * (m1 - m0) ** 2
    sst = total_sq - total ** 2 / n
    ssw = sst - ssb
    scale = np.maximum(total_sq, np.finfo(float).tiny)
    f = np.zeros(X.shape[1], dtype=np.float64)
    flat = sst <= rel_tol * scale
    perfect = ~flat & (ssw <= rel_tol * scale)
    regular = ~flat & ~perfect
    if n > 2:
        f[regular] = ssb[regular] / (ssw[regular] / (n - 2))
    f[perfect] = np.inf
    f[regular & (ssb <= rel_tol * scale)] = 0.0
    return f


def top_k(scores: np.ndarray, k: int) -> np.ndarray:
    """Indices of the k largest scores, ties broken by lower index."""
    order = np.lexsort((np.arange(len(scores)), -scores))
    return order[:k]


@dataclass
class FeatureSelection:
    size_class: str
    k_per_label: int
    selected: np.ndarray
    per_label_top: dict[int, list[int]]

    def apply(self, X) -> sp.csr_matrix:
        return sp.csr_matrix(X)[:, self.selected]

    def to_json(self) -> dict:
        return {
            "size_class": self.size_class,
            "k_per_label": self.k_per_label,
            "selected": [int(i) for i in self.selected],
            "per_label_top": {str(k): [int(i) for i in v] for k, v in sorted(self.per_label_top.items())},
        }

    @classmethod
    def from_json(cls, obj: dict) -> "FeatureSelection":
        return cls(obj["size_class"], obj["k_per_label"], np.asarray(obj["selected"], dtype=np.int64),
                   {int(k): list(v) for k, v in obj["per_label_top"].items()})


def select_features(X, best: Sequence[int], size_class: str = "s", k_per_label: int | None = None,
                    n_labels: int = N_LABELS) -> FeatureSelection:
    """Union of the top-k ANOVA features of every label (best label vs the rest).

    Labels that are the best label of no row, or of every row, contribute
    nothing.
    """
    k = SIZE_CLASSES[size_class] if k_per_label is None else k_per_label
    best = np.asarray([int(b) for b in best])
    if X.shape[0] != len(best):
        raise ValueError("matrix rows are not aligned with best labels")
    k_eff = min(k, X.shape[1])
    per_label: dict[int, list[int]] = {}
    chosen: set[int] = set()
    for label in range(n_labels):
        member = best == label
        if member.all() or not member.any():
            per_label[label] = []
            continue
        top = top_k(anova_f_columns(X, member), k_eff)
        per_label[label] = [int(i) for i in top]
        chosen.update(per_label[label])
    return FeatureSelection(size_class, k, np.array(sorted(chosen), dtype=np.int64), per_label)


# --- CSR file format -----------------------------------------------------

def write_csr(matrix, path_or_fh) -> None:
    """Header of three little-endian uint64 (rows, cols, nnz), then indptr,
    indices (int64) and data (float64)."""
    m = sp.csr_matrix(matrix)
    m.sort_indices()
    header = struct.pack("<QQQ", m.shape[0], m.shape[1], m.nnz)
    chunks = [header, m.indptr.astype("<i8").tobytes(), m.indices.astype("<i8").tobytes(),
              m.data.astype("<f8").tobytes()]
    if hasattr(path_or_fh, "write"):
        for c in chunks:
            path_or_fh.write(c)
    else:
        with open(path_or_fh, "wb") as fh:
            for c in chunks:
                fh.write(c)


def read_csr(path: str | os.PathLike) -> sp.csr_matrix:
    with open(path, "rb") as fh:
        raw = fh.read()
    rows, cols, nnz = struct.unpack("<QQQ", raw[:24])
    off = 24
    indptr = np.frombuffer(raw, dtype="<i8", count=rows + 1, offset=off)
    off += 8 * (rows + 1)
    indices = np.frombuffer(raw, dtype="<i8", count=nnz, offset=off)
    off += 8 * nnz
    data = np.frombuffer(raw, dtype="<f8", count=nnz, offset=off)
    if off + 8 * nnz != len(raw):
        raise ValueError(f"{path}: trailing or missing bytes in CSR file")
    return sp.csr_matrix((data.copy(), indices.copy(), indptr.copy()), shape=(rows, cols))
