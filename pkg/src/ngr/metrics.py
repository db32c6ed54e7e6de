"""Edge-ranking metrics for a recovered graph against a ground-truth adjacency."""

from __future__ import annotations

import csv
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import ShapeError, UndefinedMetricError
from .pathnorm import GraphMask, RecoveredGraph


@dataclass(frozen=True)
class EdgeScoreSet:
    pairs: list[tuple[int, int, float, int]]

    @property
    def scores(self) -> np.ndarray:
        return np.array([p[2] for p in self.pairs], dtype=float)

    @property
    def labels(self) -> np.ndarray:
        return np.array([p[3] for p in self.pairs], dtype=int)

    @classmethod
    def from_arrays(cls, scores, labels) -> "EdgeScoreSet":
        return cls([(k, k, float(s), int(t)) for k, (s, t) in enumerate(zip(scores, labels))])


def edge_scores(graph: RecoveredGraph | np.ndarray, truth: GraphMask | np.ndarray) -> EdgeScoreSet:
    """Flatten the strict upper triangle of both matrices into scored pairs."""
    s = np.asarray(graph.scores if isinstance(graph, RecoveredGraph) else graph, dtype=float)
    t = np.asarray(truth.matrix if isinstance(truth, GraphMask) else truth)
    if s.shape != t.shape or s.ndim != 2 or s.shape[0] != s.shape[1]:
        raise ShapeError(f"score matrix {s.shape} and truth {t.shape} must be equal square shapes")
    if not np.all(np.isfinite(s)):
        raise ValueError("edge scores must be finite")
    iu, ju = np.triu_indices(s.shape[0], 1)
    return EdgeScoreSet([(int(i), int(j), float(s[i, j]), int(t[i, j] != 0)) for i, j in zip(iu, ju)])


def auc(s: EdgeScoreSet) -> float:
    """ROC AUC as the Mann-Whitney statistic with half credit for ties."""
    scores, labels = s.scores, s.labels
    n_pos = int(labels.sum())
    n_neg = len(labels) - n_pos
    if n_pos == 0 or n_neg == 0:
        raise UndefinedMetricError("AUC needs at least one positive and one negative pair")
    # midranks: tied scores share the average of the ranks they span
    order = np.argsort(scores, kind="mergesort")
    sorted_scores = scores[order]
    ranks = np.empty(len(scores))
    start = 0
    while start < len(scores):
        stop = start
        while stop + 1 < len(scores) and sorted_scores[stop + 1] == sorted_scores[start]:
            stop += 1
        ranks[order[start : stop + 1]] = (start + stop) / 2.0 + 1.0
        start = stop + 1
    u = ranks[labels == 1].sum() - n_pos * (n_pos + 1) / 2.0
    return float(u / (n_pos * n_neg))


def aupr(s: EdgeScoreSet) -> float:
    """Average precision over distinct score thresholds, high to low."""
    scores, labels = s.scores, s.labels
    n_pos = int(labels.sum())
    if n_pos == 0:
        raise UndefinedMetricError("AUPR needs at least one positive pair")
    order = np.argsort(-scores, kind="mergesort")
    scores, labels = scores[order], labels[order]
    tp = np.cumsum(labels)
    # last index of each run of equal scores: all tied pairs enter together
    last = np.flatnonzero(np.r_[scores[1:] != scores[:-1], True])
    tp = tp[last].astype(float)
    precision = tp / (last + 1)
    recall = tp / n_pos
    d_recall = np.diff(np.r_[0.0, recall])
    return float((precision * d_recall).sum())


RESULT_FIELDS = ["method", "D", "M", "seed", "auc", "aupr", "wall_clock"]


def append_result_row(path: str | Path, row: dict) -> None:
    path = Path(path)
    new = not path.exists() or path.stat().st_size == 0
    with path.open("a", newline="", encoding="utf-8") as fh:
        writer = csv.DictWriter(fh, fieldnames=RESULT_FIELDS, lineterminator="\n", extrasaction="ignore")
        if new:
            writer.writeheader()
        writer.writerow(row)
