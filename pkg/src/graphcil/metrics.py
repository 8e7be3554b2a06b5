"""Open-set evaluation: scoring, OSCR sweep, rank AUC, report container."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import torch

from .model import PrototypeTable

UNKNOWN_TRUE = -1


@dataclass(frozen=True)
class ScoredPrediction:
    """One evaluated node: closed-set guess plus open-set confidence.

    ``true_class`` is -1 for nodes whose class was never trained on.
    Higher ``open_score`` means more in-distribution.
    """

    node_id: int
    predicted_class: int
    open_score: float
    true_class: int


def score_batch(h: torch.Tensor, table: PrototypeTable,
                classes) -> tuple[np.ndarray, np.ndarray]:
    """Open-set scores and nearest-prototype predictions for each row.

    Score is the negated squared distance to the closest prototype
    among ``classes``; the prediction is that prototype's class, ties
    resolved toward the lowest class id.
    """
    ids = sorted(int(c) for c in classes)
    if not ids:
        raise ValueError("no candidate classes")
    for c in ids:
        if c not in table:
            raise ValueError(f"class {c} has no prototype")
    protos = table.matrix(ids).detach()
    d2 = ((h.detach()[:, None, :] - protos[None, :, :]) ** 2).sum(-1)
    best = torch.argmin(d2, dim=1)
    scores = -d2.gather(1, best[:, None]).squeeze(1)
    preds = np.array(ids, dtype=np.int64)[best.numpy()]
    return scores.numpy().astype(np.float64), preds


def open_set_score(h: torch.Tensor, table: PrototypeTable, classes) -> tuple[float, int]:
    """Single-vector convenience wrapper around ``score_batch``."""
    if h.dim() != 1:
        raise ValueError("h must be a vector")
    scores, preds = score_batch(h[None, :], table, classes)
    return float(scores[0]), int(preds[0])


def closed_set_accuracy(preds: list[ScoredPrediction]) -> float:
    """Fraction of correct predictions over known-class nodes only."""
    if not preds:
        raise ValueError("no predictions")
    for p in preds:
        if p.true_class == UNKNOWN_TRUE:
            raise ValueError("closed-set accuracy is defined over known-class nodes")
    hits = sum(1 for p in preds if p.predicted_class == p.true_class)
    return hits / len(preds)


def auc_roc(known_scores, unknown_scores) -> float:
    """Probability a known-class score exceeds an unknown one, ties half.

    Rank-statistic form of ROC area with knowns as positives; exact for
    the sample sizes used here (no large-sample approximation).
    """
    k = np.asarray(known_scores, dtype=np.float64).ravel()
    u = np.asarray(unknown_scores, dtype=np.float64).ravel()
    if k.size == 0 or u.size == 0:
        raise ValueError("both score sets must be non-empty")
    scores = np.concatenate([k, u])
    order = np.argsort(scores, kind="mergesort")
    ranks = np.empty(scores.size, dtype=np.float64)
    s_sorted = scores[order]
    i = 0
    while i < scores.size:
        j = i
        while j + 1 < scores.size and s_sorted[j + 1] == s_sorted[i]:
            j += 1
        ranks[order[i:j + 1]] = 0.5 * (i + j) + 1.0
        i = j + 1
    u_stat = ranks[:k.size].sum() - k.size * (k.size + 1) / 2.0
    return float(u_stat / (k.size * u.size))


def oscr(known: list[tuple[float, bool]], unknown_scores) -> tuple[float, list[tuple[float, float]]]:
    """Open-set classification rate: area under CCR versus FPR.

    ``known`` pairs each known-class node's open score with whether its
    closed-set prediction was correct. At threshold tau, CCR counts
    knowns scored strictly above tau AND classified correctly; FPR
    counts unknowns scored strictly above tau. Thresholds sweep every
    observed score plus +inf; endpoints pin FPR 0 and 1. Area by
    trapezoid over the curve sorted by (FPR, CCR).
    """
    if not known:
        raise ValueError("no known-class samples")
    u = np.asarray(unknown_scores, dtype=np.float64).ravel()
    if u.size == 0:
        raise ValueError("no unknown-class samples")
    k_scores = np.array([s for s, _ in known], dtype=np.float64)
    k_correct = np.array([bool(c) for _, c in known])
    n_k, n_u = k_scores.size, u.size

    taus = np.unique(np.concatenate([k_scores, u]))
    ks = np.sort(k_scores[k_correct])
    us = np.sort(u)
    # strictly-greater counts via right bisection on the sorted arrays
    ccr = (ks.size - np.searchsorted(ks, taus, side="right")) / n_k
    fpr = (us.size - np.searchsorted(us, taus, side="right")) / n_u

    pts = list(zip(fpr.tolist(), ccr.tolist()))
    pts.append((0.0, 0.0))                       # tau = +inf
    pts.append((1.0, float(k_correct.mean())))   # tau below every score
    pts = sorted(set(pts))
    area = 0.0
    for (x0, y0), (x1, y1) in zip(pts[:-1], pts[1:]):
        area += (x1 - x0) * (y0 + y1) / 2.0
    return float(area), pts


@dataclass
class MetricsReport:
    """Per-task evaluation summary; construction enforces sane ranges.

    OSCR can never exceed closed-set accuracy (its curve tops out at
    the accuracy), so that relation is asserted here rather than left
    to callers.
    """

    task_index: int
    oscr: float
    closed_acc: float
    auc: float
    num_known: int
    num_unknown: int
    curve: list = field(default_factory=list)

    def __post_init__(self):
        tol = 1e-12
        for name in ("oscr", "closed_acc", "auc"):
            v = getattr(self, name)
            if not (-tol <= v <= 1.0 + tol):
                raise ValueError(f"{name}={v} outside [0, 1]")
        if self.oscr > self.closed_acc + tol:
            raise ValueError(
                f"oscr {self.oscr} exceeds closed-set accuracy {self.closed_acc}"
            )
        if self.num_known <= 0 or self.num_unknown <= 0:
            raise ValueError("evaluation needs known and unknown samples")

    def to_dict(self) -> dict:
        return {
            "task_index": self.task_index,
            "oscr": self.oscr,
            "closed_acc": self.closed_acc,
            "auc": self.auc,
            "num_known": self.num_known,
            "num_unknown": self.num_unknown,
            "curve": [[float(x), float(y)] for x, y in self.curve],
        }

    @staticmethod
    def from_dict(d: dict) -> "MetricsReport":
        return MetricsReport(
            task_index=int(d["task_index"]),
            oscr=float(d["oscr"]),
            closed_acc=float(d["closed_acc"]),
            auc=float(d["auc"]),
            num_known=int(d["num_known"]),
            num_unknown=int(d["num_unknown"]),
            curve=[(float(x), float(y)) for x, y in d.get("curve", [])],
        )


def write_curve(path, curve):
    """Two-column text dump of a CCR/FPR curve."""
    with open(path, "w") as fh:
        fh.write("fpr\tccr\n")
        for x, y in curve:
            fh.write(f"{x:.17g}\t{y:.17g}\n")
