"""Pluggable learners: train on a composed dataset, score accuracy on validation.

Two cheap real learners (nearest-centroid and full-batch multinomial
logistic regression) and one synthetic oracle whose accuracy is an exact
affine function of ``log n`` with composition-dependent slope and intercept.
The oracle ignores the data contents and reads only the dataset size and the
mixing-ratio metadata attached by composition, so scale-projection math can
be verified free of sampling noise.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, Union

import numpy as np

from .dataspace import Dataset, MixingRatio
from .errors import ModeError, ValidationError
from .predictors import Kind, PredictorModel


@dataclass(frozen=True)
class NearestCentroid:
    """Classify by the nearest per-class centroid of the training data."""


@dataclass(frozen=True)
class LogisticRegression:
    """Multinomial logistic regression trained by full-batch gradient descent."""

    lr: float = 0.5
    epochs: int = 200

    def __post_init__(self):
        if self.lr <= 0.0:
            raise ValidationError("learning rate must be positive")
        if self.epochs < 1:
            raise ValidationError("epochs must be at least 1")


@dataclass(frozen=True)
class SyntheticLogLinear:
    """Deterministic oracle: accuracy = clamp(-alpha(p) log n + C(p), 0, 1).

    ``alpha(p) = alpha_coeffs . p`` and
    ``C(p) = c_coeffs . p + quad_weight * sum_i p_i (1 - p_i)``; the
    quadratic term is concave in p for non-negative ``quad_weight``, giving
    optimizers a nontrivial interior maximizer.
    """

    alpha_coeffs: tuple[float, ...]
    c_coeffs: tuple[float, ...]
    quad_weight: float = 0.0

    def __post_init__(self):
        object.__setattr__(self, "alpha_coeffs", tuple(float(x) for x in self.alpha_coeffs))
        object.__setattr__(self, "c_coeffs", tuple(float(x) for x in self.c_coeffs))
        if len(self.alpha_coeffs) != len(self.c_coeffs):
            raise ValidationError("alpha_coeffs and c_coeffs must have equal length")


LearnerKind = Union[NearestCentroid, LogisticRegression, SyntheticLogLinear]


@dataclass(frozen=True)
class LearnerSpec:
    kind: LearnerKind
    seed: int = 0


@dataclass(frozen=True)
class EvalResult:
    accuracy: float
    n_train: int
    ratio: MixingRatio | None

    def __post_init__(self):
        if not (0.0 <= self.accuracy <= 1.0):
            raise ValidationError("accuracy must lie in [0, 1]")


def synthetic_pre_clamp(kind: SyntheticLogLinear, n: int, ratio: MixingRatio) -> float:
    """Oracle value before clamping to [0, 1]."""
    p = ratio.array
    if p.size != len(kind.alpha_coeffs):
        raise ValidationError("ratio dimension does not match the oracle coefficients")
    alpha = float(np.dot(kind.alpha_coeffs, p))
    c = float(np.dot(kind.c_coeffs, p)) + kind.quad_weight * float((p * (1.0 - p)).sum())
    return -alpha * math.log(n) + c


def scale_model_from_synthetic(kind: SyntheticLogLinear, n: int) -> PredictorModel:
    """PQ surrogate that reproduces the oracle exactly at scale ``n``.

    The oracle value is a diagonal quadratic in p with no distance term, so
    a PQ parameter vector represents it with zero fitting error; useful for
    exercising projection and selection on a known ground truth.
    """
    m = len(kind.alpha_coeffs)
    log_n = math.log(n)
    c2 = np.full(m, -kind.quad_weight)
    c1 = np.asarray(
        [kind.c_coeffs[i] + kind.quad_weight - kind.alpha_coeffs[i] * log_n for i in range(m)]
    )
    params = np.concatenate([np.zeros(2 * m + 1), c2, c1, [0.0]])
    return PredictorModel(kind=Kind.PQ, params=params, m=m, fit_residual=0.0)


def _softmax(z: np.ndarray) -> np.ndarray:
    z = z - z.max(axis=1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=1, keepdims=True)


def _logreg_fit(
    x: np.ndarray, y: np.ndarray, num_classes: int, lr: float, epochs: int
) -> tuple[np.ndarray, np.ndarray, list[float]]:
    """Full-batch GD on mean softmax cross-entropy; returns weights and loss path."""
    n, d = x.shape
    w = np.zeros((d, num_classes))
    b = np.zeros(num_classes)
    onehot = np.zeros((n, num_classes))
    onehot[np.arange(n), y] = 1.0
    losses: list[float] = []
    for _ in range(epochs):
        probs = _softmax(x @ w + b)
        losses.append(float(-np.mean(np.log(probs[np.arange(n), y] + 1e-300))))
        grad = (probs - onehot) / n
        w -= lr * (x.T @ grad)
        b -= lr * grad.sum(axis=0)
    return w, b, losses


def train_eval(spec: LearnerSpec, train: Dataset, val: Dataset) -> EvalResult:
    """Train the learner on ``train`` and return its accuracy on ``val``.

    Validation classes absent from the training data are still scored (they
    simply cannot be predicted). The synthetic oracle requires the
    mixing-ratio metadata that composition attaches.
    """
    kind = spec.kind
    if isinstance(kind, SyntheticLogLinear):
        if train.ratio is None:
            raise ModeError(
                "the synthetic oracle needs composition metadata (mixing ratio) on the training set"
            )
        value = synthetic_pre_clamp(kind, train.n, train.ratio)
        return EvalResult(
            accuracy=min(1.0, max(0.0, value)), n_train=train.n, ratio=train.ratio
        )
    if train.labels is None:
        raise ModeError("training data must be labeled")
    if val.labels is None:
        raise ModeError("validation data must be labeled")
    if isinstance(kind, NearestCentroid):
        classes = np.unique(train.labels)
        centroids = np.stack(
            [train.features[train.labels == c].mean(axis=0) for c in classes]
        )
        dists = ((val.features[:, None, :] - centroids[None, :, :]) ** 2).sum(axis=2)
        preds = classes[dists.argmin(axis=1)]
    elif isinstance(kind, LogisticRegression):
        num_classes = int(max(train.labels.max(), val.labels.max())) + 1
        w, b, _ = _logreg_fit(
            train.features, train.labels, num_classes, kind.lr, kind.epochs
        )
        preds = (val.features @ w + b).argmax(axis=1)
    else:
        raise ValidationError(f"unknown learner kind {kind!r}")
    accuracy = float((preds == val.labels).mean())
    return EvalResult(accuracy=accuracy, n_train=train.n, ratio=train.ratio)


def replicate_accuracy(
    spec: LearnerSpec,
    train_composer: Callable[[int], Dataset],
    val: Dataset,
    reps: int,
) -> float:
    """Mean accuracy over ``reps`` seed-varied compositions and trainings."""
    if reps < 1:
        raise ValidationError("reps must be at least 1")
    total = 0.0
    for r in range(reps):
        total += train_eval(spec, train_composer(r), val).accuracy
    return total / reps
