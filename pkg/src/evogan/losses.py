"""Multiclass hinge losses for inductive, universum and semi-supervised learning.

Labels are 1-indexed (1..L) everywhere in the public API. All losses return
sums over samples; callers divide by batch size when they want means.
"""

from dataclasses import dataclass, field
from enum import Enum

import numpy as np

from .autodiff import (
    DomainError,
    ShapeError,
    Tensor,
    absolute,
    as_tensor,
    max_const,
    min_const,
    pick,
    reduce,
    row_argmax,
    row_max,
    take_rows,
)

DEFAULT_DELTA = 0.05


class Setting(str, Enum):
    INDUCTIVE = "inductive"
    UNIVERSUM = "universum"
    SEMI_SUPERVISED = "semisupervised"


class PsiKind(str, Enum):
    IDENTITY = "identity"
    MIN_WITH_EPS = "min_with_eps"


@dataclass(frozen=True)
class LabeledBatch:
    Z: Tensor
    y: np.ndarray
    L: int

    def __post_init__(self):
        y = np.asarray(self.y, dtype=np.int64).reshape(-1)
        object.__setattr__(self, "y", y)
        if self.L < 2:
            raise DomainError(f"need at least 2 classes, got L={self.L}")
        if y.shape[0] != self.Z.shape[0]:
            raise ShapeError(f"{y.shape[0]} labels for {self.Z.shape[0]} rows")
        _check_labels(y, self.L)


@dataclass(frozen=True)
class UnlabeledBatch:
    Zstar: Tensor

    @property
    def m(self):
        return self.Zstar.shape[0]


@dataclass(frozen=True)
class UnifiedBatch:
    """Unlabeled rows expanded into one pseudo-labeled copy per class.

    ``origin[r]`` is the source row of copy ``r``; copies of a source row
    are contiguous with labels 1..L.
    """

    Z: Tensor
    y: np.ndarray
    eps: float
    psi_kind: PsiKind
    origin: np.ndarray
    L: int

    @property
    def m(self):
        return len(self.origin) // self.L


@dataclass(frozen=True)
class SettingParams:
    setting: Setting = Setting.INDUCTIVE
    delta: float = DEFAULT_DELTA
    eps: float = field(default=None)
    C_U: float = 0.5

    def __post_init__(self):
        setting = Setting(self.setting)
        object.__setattr__(self, "setting", setting)
        if self.delta < 0:
            raise DomainError(f"delta must be non-negative, got {self.delta}")
        if self.C_U < 0:
            raise DomainError(f"C_U must be non-negative, got {self.C_U}")
        expected = {Setting.UNIVERSUM: -self.delta, Setting.SEMI_SUPERVISED: 1.0}.get(setting)
        if self.eps is None:
            object.__setattr__(self, "eps", expected)
        elif expected is not None and self.eps != expected:
            raise DomainError(f"{setting.value} requires eps={expected}, got {self.eps}")


def psi_kind_for(eps):
    if eps < 0:
        return PsiKind.IDENTITY
    if eps == 1.0:
        return PsiKind.MIN_WITH_EPS
    raise DomainError(f"eps must be negative (universum) or 1 (semi-supervised), got {eps}")


def _check_labels(y, L):
    if y.size and (y.min() < 1 or y.max() > L):
        bad = y[(y < 1) | (y > L)][0]
        raise DomainError(f"label {bad} outside 1..{L}")


def _margin_matrix(y, L, scale=1.0):
    """scale * (1 - delta_{ik}) for 1-indexed labels ``y``."""
    margins = np.full((len(y), L), scale)
    margins[np.arange(len(y)), y - 1] = 0.0
    return margins


def _worst_violation(scores, y, scale):
    # max_k { scale*(1 - delta_ik) + s_ik - s_{i,y_i} }, one entry per row
    L = scores.shape[1]
    shifted = scores + _margin_matrix(y, L, scale)
    return row_max(shifted - pick(scores, y - 1))


def cs_hinge(scores, y):
    """Crammer-Singer hinge loss summed over rows.

    >>> cs_hinge(Tensor([[0, 2]]), [1]).item()
    3.0
    """
    scores = as_tensor(scores)
    y = np.asarray(y, dtype=np.int64).reshape(-1)
    if y.shape[0] != scores.shape[0]:
        raise ShapeError(f"{y.shape[0]} labels for {scores.shape[0]} score rows")
    _check_labels(y, scores.shape[1])
    if y.size == 0:
        return Tensor(0.0)
    return reduce("sum", _worst_violation(scores, y, 1.0))


def universum_hinge(scores_star, delta=DEFAULT_DELTA):
    """Sum over rows and classes of max(|s_k - max_l s_l| - delta, 0)."""
    if delta < 0:
        raise DomainError(f"delta must be non-negative, got {delta}")
    scores_star = as_tensor(scores_star)
    if scores_star.shape[0] == 0:
        return Tensor(0.0)
    gap = absolute(scores_star - row_max(scores_star))
    return reduce("sum", max_const(gap - delta, 0.0))


def pseudo_labels(scores_star):
    """Current-model labels for unlabeled rows (argmax, lowest index on ties)."""
    return row_argmax(scores_star)


def semisup_hinge(scores_star):
    """C&S hinge with each row's label set to its own (detached) argmax."""
    scores_star = as_tensor(scores_star)
    if scores_star.shape[0] == 0:
        return Tensor(0.0)
    return cs_hinge(scores_star, pseudo_labels(scores_star))


def transform_unlabeled(u, L, eps):
    """Replicate every unlabeled row once per class, labels 1..L."""
    if L < 2:
        raise DomainError(f"need at least 2 classes, got L={L}")
    Zstar = u.Zstar if isinstance(u, UnlabeledBatch) else as_tensor(u)
    m = Zstar.shape[0]
    origin = np.repeat(np.arange(m), L)
    y = np.tile(np.arange(1, L + 1), m)
    return UnifiedBatch(
        Z=take_rows(Zstar, origin),
        y=y,
        eps=float(eps),
        psi_kind=psi_kind_for(eps),
        origin=origin,
        L=L,
    )


def unified_hinge(scores, ub):
    """Unified loss over an expanded batch.

    Each copy contributes psi(max_k { eps*(1 - delta_ik) + s_ik - s_{i,y_i} })
    where psi is the identity (eps < 0) or min(., eps) (eps = 1).
    """
    scores = as_tensor(scores)
    if scores.shape[0] != len(ub.y):
        raise ShapeError(f"{scores.shape[0]} score rows for {len(ub.y)} expanded samples")
    if len(ub.y) == 0:
        return Tensor(0.0)
    if scores.shape[1] != ub.L:
        raise ShapeError(f"{scores.shape[1]} score columns for L={ub.L}")
    viol = _worst_violation(scores, ub.y, ub.eps)
    if ub.psi_kind == PsiKind.MIN_WITH_EPS:
        viol = min_const(viol, ub.eps)
    return reduce("sum", viol)


def expand_scores(scores_star, L):
    """Row-replicate unlabeled scores to align with ``transform_unlabeled``."""
    scores_star = as_tensor(scores_star)
    return take_rows(scores_star, np.repeat(np.arange(scores_star.shape[0]), L))


def unified_hinge_from_scores(scores_star, eps):
    """Unified loss of unlabeled scores under ``eps``, expanding internally."""
    scores_star = as_tensor(scores_star)
    L = scores_star.shape[1]
    ub = transform_unlabeled(UnlabeledBatch(scores_star), L, eps)
    return unified_hinge(ub.Z, ub)


def contradiction_residual(scores_star):
    """Per-row max_k |s_k - max_l s_l|; zero at maximum contradiction."""
    vals = as_tensor(scores_star).values
    return np.max(np.abs(vals - vals.max(axis=1, keepdims=True)), axis=1)
