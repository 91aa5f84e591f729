"""Segmentation quality scores: Dice, IoU, accuracy and Cohen's kappa."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .energy import IndicatorSet

__all__ = [
    "ConfusionCounts",
    "confusion",
    "dsc",
    "iou",
    "accuracy",
    "kappa",
    "score_masks",
    "multiphase_report",
    "match_phases",
]


@dataclass(frozen=True)
class ConfusionCounts:
    tp: int
    fp: int
    fn: int
    tn: int

    @property
    def total(self) -> int:
        return self.tp + self.fp + self.fn + self.tn


def confusion(pred: np.ndarray, truth: np.ndarray) -> ConfusionCounts:
    """Per-pixel counts; both inputs must be strictly 0/1."""
    pred = np.asarray(pred)
    truth = np.asarray(truth)
    if pred.shape != truth.shape:
        raise ValueError(f"shape mismatch: {pred.shape} vs {truth.shape}")
    for name, m in (("pred", pred), ("truth", truth)):
        if not np.isin(m, (0, 1)).all():
            raise ValueError(f"{name} mask is not binary")
    p = pred.astype(bool)
    t = truth.astype(bool)
    return ConfusionCounts(
        tp=int(np.count_nonzero(p & t)),
        fp=int(np.count_nonzero(p & ~t)),
        fn=int(np.count_nonzero(~p & t)),
        tn=int(np.count_nonzero(~p & ~t)),
    )


def dsc(counts: ConfusionCounts) -> float:
    """Dice similarity 2tp / (2tp + fp + fn); 1 when both masks are empty."""
    denom = 2 * counts.tp + counts.fp + counts.fn
    return 1.0 if denom == 0 else 2.0 * counts.tp / denom


def iou(counts: ConfusionCounts) -> float:
    """Jaccard index tp / (tp + fp + fn); 1 when both masks are empty."""
    denom = counts.tp + counts.fp + counts.fn
    return 1.0 if denom == 0 else counts.tp / denom


def accuracy(counts: ConfusionCounts) -> float:
    if counts.total == 0:
        raise ValueError("empty confusion counts")
    return (counts.tp + counts.tn) / counts.total


def kappa(counts: ConfusionCounts) -> float:
    """Cohen's kappa with the two-rater marginal-product chance term.

    When both raters are constant and identical (p_e = 1) the score is
    returned as 1 by convention.
    """
    n = counts.total
    if n == 0:
        raise ValueError("empty confusion counts")
    p_o = accuracy(counts)
    p_e = ((counts.tp + counts.fp) * (counts.tp + counts.fn)
           + (counts.fn + counts.tn) * (counts.fp + counts.tn)) / (n * n)
    if p_e == 1.0:
        return 1.0
    return (p_o - p_e) / (1.0 - p_e)


def score_masks(pred: np.ndarray, truth: np.ndarray) -> dict[str, float]:
    """All four scores for one binary mask pair."""
    counts = confusion(pred, truth)
    return {"dsc": dsc(counts), "iou": iou(counts),
            "accuracy": accuracy(counts), "kappa": kappa(counts)}


def match_phases(pred: IndicatorSet, truth: IndicatorSet) -> IndicatorSet:
    """Permute prediction phases to maximize total overlap with the truth.

    Segmentation phase indices are arbitrary; exhaustive over permutations
    (phase counts here are small), deterministic on ties.
    """
    from itertools import permutations

    if pred.n != truth.n:
        raise ValueError(f"phase count mismatch: {pred.n} vs {truth.n}")
    overlap = np.array([[np.count_nonzero(pred.masks[i].astype(bool)
                                          & truth.masks[j].astype(bool))
                         for j in range(truth.n)] for i in range(pred.n)])
    best = max(permutations(range(pred.n)),
               key=lambda perm: sum(overlap[i][perm[i]] for i in range(pred.n)))
    masks = np.empty_like(pred.masks)
    for i, j in enumerate(best):
        masks[j] = pred.masks[i]
    return IndicatorSet(masks, check=False)


def multiphase_report(pred: IndicatorSet, truth: IndicatorSet,
                      class_names: list[str] | None = None) -> list[dict]:
    """One-vs-rest scores per phase. Phases are compared index to index."""
    if pred.n != truth.n:
        raise ValueError(f"phase count mismatch: {pred.n} vs {truth.n}")
    if pred.shape != truth.shape:
        raise ValueError(f"shape mismatch: {pred.shape} vs {truth.shape}")
    names = class_names or [f"phase_{i}" for i in range(pred.n)]
    if len(names) != pred.n:
        raise ValueError("one class name per phase required")
    rows = []
    for i, name in enumerate(names):
        row = {"class": name}
        row.update(score_masks(pred.masks[i], truth.masks[i]))
        rows.append(row)
    return rows
