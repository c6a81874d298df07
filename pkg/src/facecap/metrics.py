"""Affect evaluation metrics: RMSE, sign agreement, Pearson and concordance
correlation.

Conventions: population statistics (divide by n) throughout, and sign(0) = 0,
so a zero ground-truth value only agrees with a zero prediction. Correlation
of a signal whose variance is below 1e-12 raises UndefinedMetricError rather
than returning NaN.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .errors import ParameterError, UndefinedMetricError

VARIANCE_FLOOR = 1e-12


def _pair(y, y_hat, min_len=1):
    y = np.asarray(y, dtype=float).ravel()
    y_hat = np.asarray(y_hat, dtype=float).ravel()
    if y.shape != y_hat.shape:
        raise ParameterError(f"length mismatch: {y.shape} vs {y_hat.shape}")
    if y.size < min_len:
        raise ParameterError(f"need at least {min_len} samples, got {y.size}")
    return y, y_hat


def rmse(y, y_hat) -> float:
    """Root mean squared error."""
    y, y_hat = _pair(y, y_hat)
    return float(np.sqrt(np.mean((y - y_hat) ** 2)))


def sagr(y, y_hat) -> float:
    """Sign agreement rate: fraction of samples where sign(y) == sign(y_hat)."""
    y, y_hat = _pair(y, y_hat)
    return float(np.mean(np.sign(y) == np.sign(y_hat)))


def pcc(y, y_hat) -> float:
    """Pearson correlation coefficient (population variance)."""
    y, y_hat = _pair(y, y_hat, min_len=2)
    mu_y, mu_p = y.mean(), y_hat.mean()
    var_y = np.mean((y - mu_y) ** 2)
    var_p = np.mean((y_hat - mu_p) ** 2)
    if var_y < VARIANCE_FLOOR or var_p < VARIANCE_FLOOR:
        raise UndefinedMetricError(
            f"pcc undefined: variance below floor ({var_y:.3e}, {var_p:.3e})"
        )
    cov = np.mean((y - mu_y) * (y_hat - mu_p))
    return float(cov / np.sqrt(var_y * var_p))


def ccc(y, y_hat) -> float:
    """Concordance correlation: 2*sd_y*sd_p*PCC / (var_y + var_p + (mu_y - mu_p)^2).

    Penalizes signals that correlate but differ in mean or scale.
    """
    y, y_hat = _pair(y, y_hat, min_len=2)
    rho = pcc(y, y_hat)
    mu_y, mu_p = y.mean(), y_hat.mean()
    sd_y = np.sqrt(np.mean((y - mu_y) ** 2))
    sd_p = np.sqrt(np.mean((y_hat - mu_p) ** 2))
    return float(2.0 * sd_y * sd_p * rho / (sd_y**2 + sd_p**2 + (mu_y - mu_p) ** 2))


def accuracy(labels, predicted) -> float:
    labels = np.asarray(labels).ravel()
    predicted = np.asarray(predicted).ravel()
    if labels.shape != predicted.shape:
        raise ParameterError("label length mismatch")
    if labels.size == 0:
        raise ParameterError("empty label arrays")
    return float(np.mean(labels == predicted))


@dataclass
class SignalMetrics:
    rmse: float
    sagr: float
    pcc: float
    ccc: float


@dataclass
class MetricReport:
    """Per-signal affect metrics plus optional classification accuracy."""

    valence: SignalMetrics
    arousal: Optional[SignalMetrics] = None
    accuracy: Optional[float] = None
    notes: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        out = {"valence": vars(self.valence)}
        if self.arousal is not None:
            out["arousal"] = vars(self.arousal)
        if self.accuracy is not None:
            out["accuracy"] = self.accuracy
        if self.notes:
            out["notes"] = dict(self.notes)
        return out


def signal_metrics(y, y_hat) -> SignalMetrics:
    return SignalMetrics(
        rmse=rmse(y, y_hat), sagr=sagr(y, y_hat), pcc=pcc(y, y_hat), ccc=ccc(y, y_hat)
    )


def metric_report(
    valence_true,
    valence_pred,
    arousal_true=None,
    arousal_pred=None,
    class_true=None,
    class_pred=None,
) -> MetricReport:
    report = MetricReport(valence=signal_metrics(valence_true, valence_pred))
    if arousal_true is not None:
        report.arousal = signal_metrics(arousal_true, arousal_pred)
    if class_true is not None:
        report.accuracy = accuracy(class_true, class_pred)
    return report
