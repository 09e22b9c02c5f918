"""Hamming metric space over packed fingerprint rows, plus exact kNN.

Rows are packed bitsets (see fingerprint_store); distance between two rows
is the popcount of their XOR, which equals the symmetric-difference size of
the underlying hash sets.  The same distances are also computable as
``pop(a) + pop(b) - 2 * dot(a, b)`` on the unpacked 0/1 rows -- a single
matrix multiplication for a whole corpus -- and the two paths must agree
exactly; both are exposed so they can cross-check each other.

Tie handling is explicit because it silently changes accuracy: distance ties
at the k-th rank are broken by ascending training-row index, vote ties by
the smallest summed distance among the tied classes, then by the smallest
class label.  The policy identifier is recorded on the model.
"""

from __future__ import annotations

from collections import Counter
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .eval_metrics import N_CLASSES, ConfusionMatrix
from .fingerprint_store import EncodedCorpus

__all__ = [
    "TIE_POLICY",
    "SplitSpec",
    "KnnModel",
    "popcount",
    "hamming",
    "pairwise_distances",
    "xor_popcount_matrix",
    "matmul_distance_matrix",
    "cross_distances",
    "rank_neighbors",
    "vote_majority",
    "split",
    "predict",
    "predict_batch",
    "evaluate",
]

TIE_POLICY = "rank-ties:train-index; vote-ties:min-summed-distance,min-label"

if hasattr(np, "bitwise_count"):
    popcount = np.bitwise_count
else:  # numpy < 2.0
    _POPCOUNT8 = np.unpackbits(
        np.arange(256, dtype=np.uint8).reshape(-1, 1), axis=1
    ).sum(axis=1, dtype=np.uint8)

    def popcount(a):
        return _POPCOUNT8[a]


def hamming(a: np.ndarray, b: np.ndarray) -> int:
    """Number of differing bits between two packed rows of equal shape."""
    a = np.asarray(a, dtype=np.uint8)
    b = np.asarray(b, dtype=np.uint8)
    if a.shape != b.shape:
        raise ValueError(f"dimension mismatch: {a.shape} vs {b.shape}")
    return int(popcount(np.bitwise_xor(a, b)).sum())


def xor_popcount_matrix(packed: np.ndarray) -> np.ndarray:
    """All pairwise distances by XOR + popcount (exact, memory-light)."""
    n = packed.shape[0]
    D = np.zeros((n, n), dtype=np.int64)
    for i in range(n):
        d = popcount(np.bitwise_xor(packed[i], packed[i:])).sum(axis=1, dtype=np.int64)
        D[i, i:] = d
        D[i:, i] = d
    return D


def matmul_distance_matrix(packed: np.ndarray, n_cols: int) -> np.ndarray:
    """Same distances via pop(i) + pop(j) - 2 * (B @ B.T) on unpacked rows."""
    if n_cols == 0:
        n = packed.shape[0]
        return np.zeros((n, n), dtype=np.int64)
    bits = np.unpackbits(packed, axis=1)[:, :n_cols].astype(np.int64)
    pops = bits.sum(axis=1)
    gram = bits @ bits.T
    return pops[:, None] + pops[None, :] - 2 * gram


def pairwise_distances(enc: EncodedCorpus, method: str = "xor") -> np.ndarray:
    """Symmetric integer distance matrix over all corpus rows."""
    if method == "xor":
        return xor_popcount_matrix(enc.packed)
    if method == "matmul":
        return matmul_distance_matrix(enc.packed, enc.n_cols)
    raise ValueError(f"unknown method: {method!r}")


def cross_distances(queries: np.ndarray, rows: np.ndarray) -> np.ndarray:
    """(n_queries, n_rows) distance matrix between two packed row sets."""
    if queries.shape[1] != rows.shape[1]:
        raise ValueError(
            f"dimension mismatch: {queries.shape[1]} vs {rows.shape[1]} bytes"
        )
    out = np.zeros((queries.shape[0], rows.shape[0]), dtype=np.int64)
    for i in range(queries.shape[0]):
        out[i] = popcount(np.bitwise_xor(queries[i], rows)).sum(axis=1, dtype=np.int64)
    return out


@dataclass(frozen=True)
class SplitSpec:
    """Deterministic train/test partition parameters."""

    train_fraction: float = 0.75
    seed: int = 0
    stratified: bool = False

    def __post_init__(self):
        if not 0.0 < self.train_fraction < 1.0:
            raise ValueError(f"train_fraction must be in (0, 1): {self.train_fraction}")


def split(enc: EncodedCorpus, spec: SplitSpec) -> tuple[np.ndarray, np.ndarray]:
    """Seeded shuffle of the labeled rows, then a prefix split.

    Returns sorted (train, test) row-index arrays; together they cover every
    labeled row exactly once.  Unlabeled rows are excluded.  The train count
    is floor(n * fraction), clamped so both sides stay nonempty.
    """
    labeled = np.array(
        [i for i, lab in enumerate(enc.labels) if lab is not None], dtype=np.int64
    )
    n = len(labeled)
    if n < 2:
        raise ValueError(f"need at least 2 labeled samples, have {n}")
    rng = np.random.default_rng(spec.seed)

    if spec.stratified:
        by_class: dict[int, list[int]] = {}
        for i in labeled:
            by_class.setdefault(enc.labels[i], []).append(int(i))
        train_parts, test_parts = [], []
        for cls in sorted(by_class):
            idx = np.array(by_class[cls], dtype=np.int64)
            idx = idx[rng.permutation(len(idx))]
            cut = int(len(idx) * spec.train_fraction)
            if len(idx) >= 2:
                cut = min(max(cut, 1), len(idx) - 1)
            else:
                cut = 1  # a singleton class trains; it cannot be evaluated
            train_parts.append(idx[:cut])
            test_parts.append(idx[cut:])
        train = np.concatenate(train_parts)
        test = np.concatenate(test_parts)
    else:
        shuffled = labeled[rng.permutation(n)]
        cut = int(n * spec.train_fraction)
        cut = min(max(cut, 1), n - 1)
        train, test = shuffled[:cut], shuffled[cut:]

    return np.sort(train), np.sort(test)


@dataclass(frozen=True)
class KnnModel:
    """Immutable k-nearest-neighbors classifier over packed training rows."""

    k: int
    train_packed: np.ndarray
    train_labels: np.ndarray
    n_cols: int
    tie_policy: str = TIE_POLICY

    def __post_init__(self):
        if self.k < 1:
            raise ValueError(f"k must be >= 1, got {self.k}")
        if self.k > len(self.train_labels):
            raise ValueError(
                f"k={self.k} exceeds training size {len(self.train_labels)}"
            )
        bad = [l for l in self.train_labels if not 1 <= l <= N_CLASSES]
        if bad:
            raise ValueError(f"training labels outside 1..{N_CLASSES}: {sorted(set(bad))}")

    @classmethod
    def fit(cls, enc: EncodedCorpus, train_idx: np.ndarray, k: int) -> "KnnModel":
        labels = np.array([enc.labels[i] for i in train_idx], dtype=np.int64)
        return cls(
            k=k,
            train_packed=enc.packed[train_idx],
            train_labels=labels,
            n_cols=enc.n_cols,
        )


def rank_neighbors(
    model: KnnModel, queries: np.ndarray
) -> tuple[np.ndarray, np.ndarray]:
    """Training rows of each query sorted by (distance, train index).

    Returns (order, dists): ``order[q]`` lists training-row positions nearest
    first, with distance ties in ascending index order (stable sort);
    ``dists[q, t]`` is the distance of query q to training row t.
    """
    dists = cross_distances(queries, model.train_packed)
    order = np.argsort(dists, axis=1, kind="stable")
    return order, dists


def vote_majority(labels: Sequence[int], dists: Sequence[int]) -> int:
    """Majority class of the k neighbors under the documented tie policy."""
    counts = Counter(labels)
    top = max(counts.values())
    tied = [c for c, v in counts.items() if v == top]
    if len(tied) == 1:
        return tied[0]
    summed = {c: 0 for c in tied}
    for lab, d in zip(labels, dists):
        if lab in summed:
            summed[lab] += d
    return min(tied, key=lambda c: (summed[c], c))


def predict(model: KnnModel, query: np.ndarray) -> int:
    """Class label in 1..9 for one packed query row."""
    return int(predict_batch(model, np.asarray(query, np.uint8).reshape(1, -1))[0])


def predict_batch(model: KnnModel, queries: np.ndarray) -> np.ndarray:
    if queries.shape[1] != model.train_packed.shape[1]:
        raise ValueError(
            f"query dimension {queries.shape[1]} does not match "
            f"training rows {model.train_packed.shape[1]}"
        )
    order, dists = rank_neighbors(model, queries)
    out = np.empty(queries.shape[0], dtype=np.int64)
    for q in range(queries.shape[0]):
        nearest = order[q, : model.k]
        out[q] = vote_majority(
            model.train_labels[nearest].tolist(), dists[q, nearest].tolist()
        )
    return out


def evaluate(
    model: KnnModel, test_rows: np.ndarray, test_labels: Sequence[int]
) -> ConfusionMatrix:
    """Predict every test row and tally true (rows) vs predicted (columns)."""
    if len(test_labels) == 0:
        raise ValueError("empty test set")
    preds = predict_batch(model, test_rows)
    return ConfusionMatrix.from_pairs(list(test_labels), preds.tolist())
