"""Evaluation of confidence estimators and classifiers against hidden truth."""

import csv
from dataclasses import dataclass

import numpy as np

from .errors import InputError

__all__ = [
    "NoiseDetectionScores",
    "noise_detection_scores",
    "accuracy",
    "confusion_matrix",
    "write_confusion_csv",
]


@dataclass(frozen=True)
class NoiseDetectionScores:
    """Precision/recall/F1 for the clean-vs-noisy split at a threshold.

    no_positive_predictions flags the empty-prediction convention: when no
    sample clears the threshold, precision (and hence F1) is reported as 0.
    """

    precision: float
    recall: float
    f1: float
    no_positive_predictions: bool = False


def _as_vector(values):
    return np.asarray(getattr(values, "values", values)).ravel()


def noise_detection_scores(confidence, clean_mask, threshold=0.5) -> NoiseDetectionScores:
    """Score predicted-clean = (confidence >= threshold) against the true
    clean mask, with clean as the positive class. Ties at the threshold
    count as clean."""
    w = _as_vector(confidence).astype(np.float64)
    truth = np.asarray(clean_mask, dtype=bool).ravel()
    if w.shape[0] != truth.shape[0]:
        raise InputError(f"length mismatch: {w.shape[0]} confidences vs {truth.shape[0]} mask entries")
    predicted = w >= threshold
    tp = int(np.sum(predicted & truth))
    fp = int(np.sum(predicted & ~truth))
    fn = int(np.sum(~predicted & truth))
    if tp + fp == 0:
        return NoiseDetectionScores(0.0, 0.0, 0.0, no_positive_predictions=True)
    precision = tp / (tp + fp)
    recall = tp / (tp + fn) if (tp + fn) else 0.0
    f1 = 0.0 if (precision + recall) == 0 else 2 * precision * recall / (precision + recall)
    return NoiseDetectionScores(precision, recall, f1)


def accuracy(predictions, truth) -> float:
    pred = np.asarray(predictions).ravel()
    true = np.asarray(truth).ravel()
    if pred.shape[0] != true.shape[0]:
        raise InputError(f"length mismatch: {pred.shape[0]} predictions vs {true.shape[0]} labels")
    if pred.shape[0] == 0:
        raise InputError("cannot score empty label vectors")
    return float(np.mean(pred == true))


def confusion_matrix(predictions, truth, num_classes) -> np.ndarray:
    """Count matrix with entry (i, j) = number of truth-i samples predicted j."""
    pred = np.asarray(predictions, dtype=np.int64).ravel()
    true = np.asarray(truth, dtype=np.int64).ravel()
    num_classes = int(num_classes)
    if pred.shape[0] != true.shape[0]:
        raise InputError(f"length mismatch: {pred.shape[0]} predictions vs {true.shape[0]} labels")
    for name, arr in (("predictions", pred), ("truth", true)):
        if arr.size and (arr.min() < 0 or arr.max() >= num_classes):
            raise InputError(f"{name} must lie in [0, {num_classes})")
    counts = np.zeros((num_classes, num_classes), dtype=np.int64)
    np.add.at(counts, (true, pred), 1)
    return counts


def write_confusion_csv(path, matrix) -> None:
    counts = np.asarray(matrix, dtype=np.int64)
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        for row in counts:
            writer.writerow([int(v) for v in row])
