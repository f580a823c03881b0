"""Cross-round noise characterization and Remember-Ratio filtering.

Samples whose responses barely move across query rounds are treated as
suspect: the ranking keeps the highest-variance fraction ``rr``.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field
from decimal import ROUND_HALF_UP, Decimal

import numpy as np

from .errors import RangeError, VarianceUndefinedError
from .qnnaas import QueryTensor, softmax


@dataclass(frozen=True)
class VarianceScore:
    sample_index: int
    score: float


@dataclass
class CleanedDataset:
    indices: np.ndarray  # retained sample indices, in ranking order
    soft_labels: np.ndarray
    hard_labels: np.ndarray
    scores: np.ndarray
    rr: float
    dropped_count: int
    images: np.ndarray | None = None

    def __len__(self) -> int:
        return len(self.indices)


def _probs(tensor) -> np.ndarray:
    return tensor.probs if isinstance(tensor, QueryTensor) else np.asarray(tensor, dtype=np.float64)


def derive_labels(tensor) -> tuple[np.ndarray, np.ndarray]:
    """Hard and soft labels for every sample from the round-mean raw vector."""
    mean = _probs(tensor).mean(axis=0)
    soft = softmax(mean, axis=1)
    # np.argmax returns the first maximum, i.e. ties go to the lowest class
    return np.argmax(soft, axis=1), soft


def derive_label(tensor, i: int) -> tuple[int, np.ndarray]:
    p = _probs(tensor)
    if not 0 <= i < p.shape[1]:
        raise IndexError(f"sample {i} out of range")
    soft = softmax(p[:, i, :].mean(axis=0))
    return int(np.argmax(soft)), soft


def variance_array(tensor) -> np.ndarray:
    """Per-sample class-averaged population variance over rounds, shape (n,)."""
    p = _probs(tensor)
    if p.shape[0] < 2:
        raise VarianceUndefinedError("variance needs at least two query rounds")
    return p.var(axis=0, ddof=0).mean(axis=1)


def variance_scores(tensor) -> list[VarianceScore]:
    return [VarianceScore(i, float(s)) for i, s in enumerate(variance_array(tensor))]


def retain_count(rr: float, n: int) -> int:
    if not 0.0 < rr <= 1.0:
        raise RangeError(f"remember ratio must be in (0, 1], got {rr}")
    k = int(Decimal(repr(rr * n)).quantize(Decimal(1), rounding=ROUND_HALF_UP))
    return min(n, max(1, k))


def rank_by_variance(scores) -> np.ndarray:
    """Indices by descending score, ties by ascending index."""
    s = np.array([v.score if isinstance(v, VarianceScore) else v for v in scores], dtype=np.float64)
    return np.lexsort((np.arange(s.size), -s))


def rr_filter(samples, scores, rr: float, soft_labels=None, hard_labels=None) -> CleanedDataset:
    """Keep the ``max(1, round(rr * n))`` highest-variance samples."""
    s = np.array([v.score if isinstance(v, VarianceScore) else v for v in scores], dtype=np.float64)
    n = s.size
    k = retain_count(rr, n)
    keep = rank_by_variance(s)[:k]
    images = None if samples is None else np.asarray(samples)[keep]
    soft = None if soft_labels is None else np.asarray(soft_labels)[keep]
    hard = None if hard_labels is None else np.asarray(hard_labels)[keep]
    return CleanedDataset(keep, soft, hard, s[keep], rr, n - k, images)


def clean_from_tensor(tensor: QueryTensor, rr: float, samples=None) -> CleanedDataset:
    hard, soft = derive_labels(tensor)
    return rr_filter(samples, variance_array(tensor), rr, soft, hard)


def clean_fraction(retained_labels, ground_truth) -> float:
    a = np.asarray(retained_labels)
    b = np.asarray(ground_truth)
    if a.shape != b.shape:
        raise ValueError("labels and ground truth differ in length")
    return float(np.mean(a == b)) if a.size else float("nan")


def write_cleaning_report(path, tensor: QueryTensor, rr: float, ground_truth=None) -> None:
    hard, _ = derive_labels(tensor)
    scores = variance_array(tensor)
    kept = set(rank_by_variance(scores)[: retain_count(rr, scores.size)].tolist())
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["sample_index", "score", "hard_label", "retained", "ground_truth"])
        for i, s in enumerate(scores):
            gt = "" if ground_truth is None else int(ground_truth[i])
            w.writerow([i, repr(float(s)), int(hard[i]), int(i in kept), gt])
