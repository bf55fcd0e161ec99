"""Evaluation metrics: ROC/AUROC, detection rate at a fixed false-positive
budget, Levenshtein distance, ROUGE-L F1, cosine similarity, and nominal
Krippendorff's alpha.

Everything here is hand-rolled on purpose: tests pair each function with an
independent brute-force oracle, and a library implementation on this side
would collapse that dual route.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, asdict
from typing import Hashable, Optional, Sequence

import numpy as np

from .errors import InvalidInputError, UndefinedMetricError


@dataclass
class ScoredLabels:
    """Malicious-class scores with binary ground truth (1 = malicious)."""

    scores: np.ndarray
    labels: np.ndarray

    def __post_init__(self):
        self.scores = np.asarray(self.scores, dtype=np.float64)
        self.labels = np.asarray(self.labels, dtype=np.int64)
        if self.scores.shape != self.labels.shape or self.scores.ndim != 1:
            raise InvalidInputError("scores and labels must be equal-length 1-d")
        if not np.isin(self.labels, (0, 1)).all():
            raise InvalidInputError("labels must be 0/1")

    def require_both_classes(self):
        if not (self.labels == 1).any() or not (self.labels == 0).any():
            raise UndefinedMetricError("need at least one sample of each class")


@dataclass
class MetricsReport:
    auroc: float
    dr_at_fp: float
    fp_target: float
    threshold: float
    tp: int
    fp: int
    tn: int
    fn: int
    n_benign: int
    n_bma: int

    def to_json(self) -> str:
        return json.dumps(asdict(self), indent=2)


def auroc(data: ScoredLabels) -> float:
    """P(random positive outranks random negative); ties count half."""
    data.require_both_classes()
    scores, labels = data.scores, data.labels
    order = np.argsort(scores, kind="mergesort")
    sorted_scores = scores[order]
    ranks = np.empty(len(scores), dtype=np.float64)
    i = 0
    while i < len(scores):
        j = i
        while j + 1 < len(scores) and sorted_scores[j + 1] == sorted_scores[i]:
            j += 1
        ranks[order[i:j + 1]] = 0.5 * (i + j) + 1.0  # average rank, 1-based
        i = j + 1
    n_pos = int((labels == 1).sum())
    n_neg = len(labels) - n_pos
    rank_sum = float(ranks[labels == 1].sum())
    u = rank_sum - n_pos * (n_pos + 1) / 2.0
    return u / (n_pos * n_neg)


def dr_at_fp(data: ScoredLabels, fp_target: float = 0.01) -> float:
    """Best TPR achievable with FPR <= fp_target.

    The classifier predicts malicious iff score > threshold; candidate
    thresholds are the observed benign scores plus -inf, so fp_target = 1.0
    always admits DR = 1.0. Reported DR comes from the smallest admissible
    threshold (max TPR subject to the FP budget).
    """
    t, _ = _dr_threshold(data, fp_target)
    pos = data.scores[data.labels == 1]
    return float((pos > t).mean())


def _dr_threshold(data: ScoredLabels, fp_target: float) -> tuple[float, float]:
    data.require_both_classes()
    if not 0.0 <= fp_target <= 1.0:
        raise InvalidInputError("fp_target must be in [0, 1]")
    neg = data.scores[data.labels == 0]
    pos = data.scores[data.labels == 1]
    best_t, best_tpr = None, -1.0
    for t in np.concatenate(([-np.inf], np.unique(neg))):
        fpr = float((neg > t).mean())
        if fpr <= fp_target:
            tpr = float((pos > t).mean())
            if tpr > best_tpr:
                best_t, best_tpr = float(t), tpr
    return best_t, best_tpr


def report(data: ScoredLabels, fp_target: float = 0.01) -> MetricsReport:
    """Full evaluation report at the DR@FP operating threshold."""
    t, _ = _dr_threshold(data, fp_target)
    pred = data.scores > t
    pos = data.labels == 1
    return MetricsReport(
        auroc=auroc(data),
        dr_at_fp=dr_at_fp(data, fp_target),
        fp_target=fp_target,
        threshold=t,
        tp=int((pred & pos).sum()),
        fp=int((pred & ~pos).sum()),
        tn=int((~pred & ~pos).sum()),
        fn=int((~pred & pos).sum()),
        n_benign=int((~pos).sum()),
        n_bma=int(pos.sum()),
    )


def levenshtein(a: str, b: str) -> int:
    """Minimal insert/delete/substitute count over Unicode scalar values."""
    if a == b:
        return 0
    if len(a) < len(b):
        a, b = b, a
    prev = list(range(len(b) + 1))
    for i, ca in enumerate(a, start=1):
        cur = [i] + [0] * len(b)
        for j, cb in enumerate(b, start=1):
            cur[j] = min(
                prev[j] + 1,         # delete
                cur[j - 1] + 1,      # insert
                prev[j - 1] + (ca != cb),  # substitute
            )
        prev = cur
    return prev[-1]


def _lcs_len(a: Sequence, b: Sequence) -> int:
    prev = [0] * (len(b) + 1)
    for x in a:
        cur = [0] * (len(b) + 1)
        for j, y in enumerate(b, start=1):
            cur[j] = prev[j - 1] + 1 if x == y else max(prev[j], cur[j - 1])
        prev = cur
    return prev[-1]


def rouge_l_f1(a: str, b: str) -> float:
    """Token-level longest-common-subsequence F1 (lowercase whitespace split)."""
    ta, tb = a.lower().split(), b.lower().split()
    if not ta or not tb:
        return 0.0
    lcs = _lcs_len(ta, tb)
    if lcs == 0:
        return 0.0
    precision = lcs / len(tb)
    recall = lcs / len(ta)
    return 2.0 * precision * recall / (precision + recall)


def cosine_similarity(u: np.ndarray, v: np.ndarray) -> float:
    u = np.asarray(u, dtype=np.float64).ravel()
    v = np.asarray(v, dtype=np.float64).ravel()
    if u.shape != v.shape:
        raise InvalidInputError("vectors must have equal dimension")
    nu, nv = np.linalg.norm(u), np.linalg.norm(v)
    if nu == 0.0 or nv == 0.0:
        raise UndefinedMetricError("cosine similarity of a zero vector")
    return float(np.dot(u, v) / (nu * nv))


def krippendorff_alpha(matrix: Sequence[Sequence[Optional[Hashable]]]) -> float:
    """Nominal-level alpha = 1 - D_o/D_e from the coincidence matrix.

    ``matrix`` is items x annotators with None for missing labels; items with
    fewer than two labels are excluded. Raises when expected disagreement is
    zero (every recorded label identical).
    """
    values: dict[Hashable, int] = {}
    pairable = []
    for row in matrix:
        labels = [v for v in row if v is not None]
        if len(labels) >= 2:
            pairable.append(labels)
            for v in labels:
                values.setdefault(v, len(values))
    if len(matrix) and len(max(matrix, key=len)) < 2:
        raise InvalidInputError("need at least two annotators")
    if not pairable:
        raise InvalidInputError("no item carries two or more labels")

    k = len(values)
    coincidence = np.zeros((k, k), dtype=np.float64)
    for labels in pairable:
        m = len(labels)
        for i, vi in enumerate(labels):
            for j, vj in enumerate(labels):
                if i != j:
                    coincidence[values[vi], values[vj]] += 1.0 / (m - 1)

    n = coincidence.sum()
    n_c = coincidence.sum(axis=1)
    d_o = n - np.trace(coincidence)
    d_e = (n_c.sum() ** 2 - (n_c ** 2).sum()) / (n - 1)
    if d_e == 0.0:
        raise UndefinedMetricError("zero expected disagreement")
    return float(1.0 - d_o / d_e)
