"""Evaluation metrics: accuracy with reject outcomes, label entropy, residuals, Frechet proxy.

The Frechet value here is computed on discriminator features with diagonal
covariances. It is a cheap proxy and is not comparable to Inception-based FID.
"""

from dataclasses import dataclass

import numpy as np

from .autodiff import DomainError, as_tensor
from .losses import contradiction_residual
from .models import CONTRADICTION


@dataclass(frozen=True)
class EvalReport:
    accuracy: float
    error: float
    contradiction_rate: float
    entropy_bits: float = float("nan")
    mean_residual: float = float("nan")
    frechet_proxy: float = float("nan")


def classification_error(preds, y):
    """Return (accuracy, error, contradiction_rate).

    A contradiction on a labeled sample counts as an error.
    """
    preds = np.asarray(preds).reshape(-1)
    y = np.asarray(y).reshape(-1)
    if preds.shape != y.shape:
        raise DomainError(f"{preds.size} predictions for {y.size} labels")
    if y.size == 0:
        raise DomainError("no samples to score")
    accuracy = float(np.mean(preds == y))
    contradiction_rate = float(np.mean(preds == CONTRADICTION))
    return accuracy, 1.0 - accuracy, contradiction_rate


def label_entropy(preds, L):
    """Shannon entropy (bits) of the predicted-class histogram.

    Contradiction outcomes are dropped before counting.
    """
    preds = np.asarray(preds).reshape(-1)
    preds = preds[preds != CONTRADICTION]
    if preds.size == 0:
        raise DomainError("no class predictions left after removing contradictions")
    counts = np.bincount(preds.astype(np.int64) - 1, minlength=L)
    p = counts[counts > 0] / preds.size
    return float(max(0.0, -np.sum(p * np.log2(p))))


def frechet_feature_distance(real_feats, fake_feats):
    """Frechet distance between diagonal Gaussians fitted to two feature sets."""
    real = as_tensor(real_feats).values
    fake = as_tensor(fake_feats).values
    if real.shape[0] < 2 or fake.shape[0] < 2:
        raise DomainError("need at least 2 rows in each feature set")
    if real.shape[1] != fake.shape[1]:
        raise DomainError(f"feature widths differ: {real.shape[1]} vs {fake.shape[1]}")
    mu_r, mu_f = real.mean(axis=0), fake.mean(axis=0)
    var_r, var_f = real.var(axis=0, ddof=1), fake.var(axis=0, ddof=1)
    dist = np.sum((mu_r - mu_f) ** 2) + np.sum(var_r + var_f - 2.0 * np.sqrt(var_r * var_f))
    return float(max(dist, 0.0))


def residual_stats(scores_star):
    """Mean and max of the per-row contradiction residual."""
    r = contradiction_residual(scores_star)
    if r.size == 0:
        raise DomainError("no rows")
    return float(r.mean()), float(r.max())
