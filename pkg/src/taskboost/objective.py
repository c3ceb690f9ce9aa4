"""Loss functions: per-row first/second-order gradients and base margins.

Margins (log-odds for logloss) are the additive quantity; the sigmoid is
applied only when emitting probabilities.  Supported loss kinds: ``logloss``
and ``mse`` (the latter mainly because h == 1 makes hand oracles trivial).
"""
from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np

from .errors import ConfigError

LOSSES = ("logloss", "mse")


@dataclass(frozen=True)
class GradStats:
    """First/second-order gradients of the loss at the current margins."""

    g: np.ndarray
    h: np.ndarray


def _check_loss(loss: str) -> None:
    if loss not in LOSSES:
        raise ConfigError(f"unknown loss {loss!r}; expected one of {LOSSES}")


def sigmoid(margins: np.ndarray) -> np.ndarray:
    """Numerically stable logistic function."""
    return np.exp(-np.logaddexp(0.0, -np.asarray(margins, dtype=np.float64)))


def base_score(labels: np.ndarray, loss: str) -> float:
    """Constant initial margin: logit of the label mean (logloss) or the mean.

    A degenerate label mean of 0 or 1 is clamped to [1e-6, 1 - 1e-6] before
    the logit, with a warning.
    """
    _check_loss(loss)
    labels = np.asarray(labels, dtype=np.float64)
    if len(labels) == 0:
        raise ConfigError("base_score requires at least one label")
    mean = float(labels.mean())
    if loss == "mse":
        return mean
    if mean <= 0.0 or mean >= 1.0:
        warnings.warn(f"label mean {mean} clamped for base score logit")
        mean = min(max(mean, 1e-6), 1.0 - 1e-6)
    return float(np.log(mean / (1.0 - mean)))


def grad_hess(margins: np.ndarray, labels: np.ndarray, loss: str) -> GradStats:
    """Row-wise g and h for the loss at the given margins."""
    _check_loss(loss)
    margins = np.asarray(margins, dtype=np.float64)
    labels = np.asarray(labels, dtype=np.float64)
    if margins.shape != labels.shape:
        raise ConfigError("margins and labels must have equal length")
    if loss == "mse":
        return GradStats(g=margins - labels, h=np.ones_like(margins))
    p = sigmoid(margins)
    # p*(1-p) via two stable sigmoids: keeps precision at saturated
    # margins and is exactly symmetric in the margin sign
    return GradStats(g=p - labels, h=p * sigmoid(-margins))


def loss_value(margins: np.ndarray, labels: np.ndarray, loss: str) -> np.ndarray:
    """Per-row loss values (used by gradient checks and objective audits)."""
    _check_loss(loss)
    margins = np.asarray(margins, dtype=np.float64)
    labels = np.asarray(labels, dtype=np.float64)
    if loss == "mse":
        return 0.5 * (margins - labels) ** 2
    # -[y log p + (1-y) log(1-p)] with p = sigmoid(m)
    return np.logaddexp(0.0, margins) - labels * margins
