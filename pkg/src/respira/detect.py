"""Reconstruction-error anomaly scoring, threshold calibration, ROC/AUC.

A cycle is flagged anomalous when its score is strictly greater than the
decision threshold. Anomalous counts as the positive class throughout.
"""

from __future__ import annotations

from dataclasses import dataclass
from decimal import ROUND_HALF_UP, Decimal

import numpy as np

from .corpus import BinaryLabel
from .errors import DataError
from .model.vae import Vae, reparameterize


@dataclass(frozen=True)
class ScoredCycle:
    recording_id: str
    cycle_index: int
    score: float
    label: BinaryLabel


@dataclass(frozen=True)
class Confusion:
    tpr: float
    tnr: float

    @property
    def balanced_accuracy(self) -> float:
        return (self.tpr + self.tnr) / 2.0


@dataclass(frozen=True)
class CalibrationResult:
    threshold: float
    tpr: float
    tnr: float
    balanced_accuracy: float


@dataclass(frozen=True)
class RocCurve:
    points: list[tuple[float, float]]  # (fpr, tpr), sorted by fpr
    auc: float


def anomaly_score(x_std: np.ndarray, vae: Vae) -> float:
    """Deterministic eval-mode score: MSE between the standardized feature
    matrix and its reconstruction through the latent mean (no sampling)."""
    x = np.asarray(x_std, dtype=np.float64)
    if x.ndim == 2:
        x = x[None, None]
    xhat = np.asarray(vae.reconstruct(x), dtype=np.float64)
    return float(np.mean((x - xhat) ** 2))


def epistemic_scores(x_std: np.ndarray, vae: Vae, draws: int, rng) -> tuple[np.ndarray, float, float]:
    """Reconstruction MSE over `draws` reparameterized latent samples.

    Returns (scores, mean, std); the spread estimates the model's epistemic
    certainty about the cycle.
    """
    if draws < 1:
        raise DataError(f"epistemic draws must be >= 1, got {draws}")
    x = np.asarray(x_std, dtype=np.float64)
    if x.ndim == 2:
        x = x[None, None]
    dist = vae.encode(x)
    scores = np.empty(draws)
    for k in range(draws):
        z = reparameterize(dist.mu, dist.log_var, rng=rng)
        xhat = np.asarray(vae.decode(z), dtype=np.float64)
        scores[k] = np.mean((x - xhat) ** 2)
    return scores, float(scores.mean()), float(scores.std())


def _split_scores(scores: list[ScoredCycle]) -> tuple[np.ndarray, np.ndarray]:
    anom = np.array([s.score for s in scores if s.label is BinaryLabel.ANOMALOUS])
    norm = np.array([s.score for s in scores if s.label is BinaryLabel.NORMAL])
    if len(anom) == 0:
        raise DataError("score set contains no anomalous cycles")
    if len(norm) == 0:
        raise DataError("score set contains no normal cycles")
    return anom, norm


def confusion(scores: list[ScoredCycle], threshold: float) -> Confusion:
    """TPR/TNR of the rule 'anomalous iff score > threshold'."""
    anom, norm = _split_scores(scores)
    tpr = float(np.mean(anom > threshold))
    tnr = float(np.mean(norm <= threshold))
    return Confusion(tpr, tnr)


def balanced_accuracy(tpr: float, tnr: float) -> float:
    return (tpr + tnr) / 2.0


def icbhi_score(c: Confusion) -> float:
    """The challenge score is exactly the balanced accuracy."""
    return c.balanced_accuracy


def calibrate_threshold(scores: list[ScoredCycle]) -> CalibrationResult:
    """Pick the threshold maximizing balanced accuracy on a labeled score set.

    Candidates are -inf, the midpoints between consecutive distinct sorted
    scores, and +inf. Ties prefer the higher TPR, then the lower threshold.
    """
    anom, norm = _split_scores(scores)
    distinct = np.unique(np.concatenate([anom, norm]))
    candidates = [-np.inf]
    candidates.extend(((distinct[:-1] + distinct[1:]) / 2.0).tolist())
    candidates.append(np.inf)

    best = None
    best_key = None
    for t in candidates:
        tpr = float(np.mean(anom > t))
        tnr = float(np.mean(norm <= t))
        ba = (tpr + tnr) / 2.0
        key = (ba, tpr, -t)
        if best_key is None or key > best_key:
            best_key = key
            best = CalibrationResult(float(t), tpr, tnr, ba)
    return best


def roc_auc(scores: list[ScoredCycle]) -> RocCurve:
    """ROC curve over all distinct score thresholds plus trapezoidal AUC.

    Tied scores produce diagonal segments, so the AUC equals the Mann-Whitney
    statistic P(anomalous > normal) + 0.5 P(equal).
    """
    anom, norm = _split_scores(scores)
    all_scores = np.concatenate([anom, norm])
    labels = np.concatenate([np.ones(len(anom), dtype=bool), np.zeros(len(norm), dtype=bool)])
    order = np.argsort(-all_scores, kind="stable")
    sorted_scores = all_scores[order]
    sorted_labels = labels[order]

    points = [(0.0, 0.0)]
    tp = fp = 0
    i = 0
    n = len(sorted_scores)
    while i < n:
        j = i
        while j < n and sorted_scores[j] == sorted_scores[i]:
            tp += bool(sorted_labels[j])
            fp += not sorted_labels[j]
            j += 1
        points.append((fp / len(norm), tp / len(anom)))
        i = j
    if points[-1] != (1.0, 1.0):
        points.append((1.0, 1.0))

    xs = np.array([p[0] for p in points])
    ys = np.array([p[1] for p in points])
    auc = float(np.trapezoid(ys, xs))
    return RocCurve(points, auc)


def round_reported(value: float, ndigits: int = 2) -> float:
    """Report-layer rounding: decimal half-up on the shortest float repr, so
    0.595 reports as 0.60 (plain binary rounding would give 0.59)."""
    q = Decimal(1).scaleb(-ndigits)
    return float(Decimal(repr(float(value))).quantize(q, rounding=ROUND_HALF_UP))
