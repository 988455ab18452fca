"""Evaluation quantities: error rate, per-example cross-entropy, hidden activity."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import numpy as np

from .activations import ActivationKind, Mode
from .model import MlpParams, cross_entropy, forward

__all__ = [
    "EpochRecord",
    "ActivityReport",
    "classification_error",
    "mean_test_cross_entropy",
    "hidden_activity",
    "activity_report",
    "SATURATION_THRESHOLD",
    "STRONG_THRESHOLD",
]

# a hidden unit counts as saturated when its mean test activation is below this
SATURATION_THRESHOLD = 0.01
STRONG_THRESHOLD = 0.5
HISTOGRAM_BINS = 50


@dataclass
class EpochRecord:
    epoch: int
    lr: float
    momentum: float
    train_loss: float
    valid_error: float
    test_error: Optional[float] = None
    test_xent: Optional[float] = None
    wall_seconds: float = 0.0


@dataclass
class ActivityReport:
    mean_activity: np.ndarray
    n_below_001: int
    n_above_05: int
    histogram_counts: np.ndarray
    histogram_edges: np.ndarray

    def to_dict(self) -> dict:
        return {
            "n_below_001": self.n_below_001,
            "n_above_05": self.n_above_05,
            "histogram_counts": self.histogram_counts.tolist(),
            "histogram_edges": self.histogram_edges.tolist(),
        }


def classification_error(pred_labels, true_labels) -> float:
    pred = np.asarray(pred_labels)
    true = np.asarray(true_labels)
    if pred.shape != true.shape:
        raise ValueError(f"{pred.shape[0]} predictions for {true.shape[0]} labels")
    if true.size == 0:
        raise ValueError("classification_error needs at least one example")
    return float(np.mean(pred != true))


def mean_test_cross_entropy(probs: np.ndarray, labels) -> float:
    """Cross-entropy divided by the number of examples."""
    return cross_entropy(probs, labels)


def hidden_activity(params: MlpParams, images: np.ndarray, kind: ActivationKind) -> np.ndarray:
    """Eval-mode hidden activations, one row per example."""
    trace, _ = forward(params, images, kind, mode=Mode.EVAL)
    return trace.act


def activity_report(params: MlpParams, images: np.ndarray, kind: ActivationKind) -> ActivityReport:
    mean = hidden_activity(params, images, kind).mean(axis=0)
    upper = max(1.0, float(mean.max()))
    counts, edges = np.histogram(mean, bins=HISTOGRAM_BINS, range=(0.0, upper))
    return ActivityReport(
        mean_activity=mean,
        n_below_001=int(np.count_nonzero(mean < SATURATION_THRESHOLD)),
        n_above_05=int(np.count_nonzero(mean > STRONG_THRESHOLD)),
        histogram_counts=counts,
        histogram_edges=edges,
    )
