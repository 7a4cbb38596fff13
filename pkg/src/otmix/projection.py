"""Parameter-free projection of predictions across data scales.

Given predictions of the same surrogate fitted at two scales ``n0 < n1``,
the performance at any target scale ``N`` is the unique log-linear
interpolant through ``(log n0, l0)`` and ``(log n1, l1)``:

    (log(n1/n0))^{-1} * [log(N/n0) * l1 - log(N/n1) * l0]

No parameters are fitted and no clamping happens here; reporting layers
clamp to [0, 1] if they need to.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .dataspace import MixingRatio
from .errors import DegeneracyError, ValidationError
from .predictors import PredictorModel, predict
from .transport import CostSpec


@dataclass(frozen=True)
class ScalePair:
    """The same surrogate kind fitted at two scales ``n0 < n1``."""

    n0: int
    n1: int
    model0: PredictorModel
    model1: PredictorModel
    cost_spec: CostSpec

    def __post_init__(self):
        if self.n0 < 1:
            raise ValidationError("n0 must be at least 1")
        if self.n0 >= self.n1:
            raise DegeneracyError(
                f"scales must satisfy n0 < n1, got n0={self.n0}, n1={self.n1}"
            )
        if self.model0.kind is not self.model1.kind:
            raise ValidationError("both models must be of the same kind")
        if self.model0.m != self.model1.m:
            raise ValidationError("both models must cover the same number of sources")

    @property
    def m(self) -> int:
        return self.model0.m


@dataclass(frozen=True)
class ProjectionQuery:
    """One projection request: a ratio, a target scale, and the two anchors."""

    ratio: MixingRatio
    target_n: int
    l0: float
    l1: float

    def __post_init__(self):
        if self.target_n < 1:
            raise ValidationError("target_n must be at least 1")


def log_weights(n0: int, n1: int, target_n: int) -> tuple[float, float]:
    """Coefficients (w0, w1) with projection = w0 * l0 + w1 * l1."""
    if n0 == n1:
        raise DegeneracyError("projection needs two distinct scales")
    if target_n < 1:
        raise ValidationError("target_n must be at least 1")
    inv = 1.0 / math.log(n1 / n0)
    w1 = math.log(target_n / n0) * inv
    w0 = -math.log(target_n / n1) * inv
    return w0, w1


def project(pair: ScalePair, l0: float, l1: float, target_n: int) -> float:
    """Log-linear projection of the two anchor predictions to ``target_n``."""
    w0, w1 = log_weights(pair.n0, pair.n1, target_n)
    return w0 * l0 + w1 * l1


def scaling_exponent(pair: ScalePair, l0: float, l1: float) -> float:
    """Scaling slope ``(l0 - l1) / (log n1 - log n0)`` of the fitted line.

    Negative values mean the metric improves with scale when the metric is
    an accuracy; no sign adjustment is applied.
    """
    return (l0 - l1) / (math.log(pair.n1) - math.log(pair.n0))


def project_query(
    pair: ScalePair,
    ratio: MixingRatio,
    target_n: int,
    ot0: float,
    ot1: float,
) -> float:
    """Predict at both fitted scales, then project to the target scale.

    ``ot0`` and ``ot1`` are the OT distances of compositions at ``n0`` and
    ``n1`` for this ratio.
    """
    l0 = predict(pair.model0, ratio, ot0, pair.n0)
    l1 = predict(pair.model1, ratio, ot1, pair.n1)
    return project(pair, l0, l1, target_n)


def auto_scales(min_pilot_size: int) -> tuple[int, int]:
    """Default scales: ``n1`` is the smallest pilot size, ``n0 = round(2/3 n1)``.

    Rounding is round-half-to-even.
    """
    if min_pilot_size < 2:
        raise ValidationError("pilot data too small to pick two scales")
    n1 = int(min_pilot_size)
    n0 = int(round(2.0 * n1 / 3.0))
    n0 = max(1, min(n0, n1 - 1))
    return n0, n1


def projection_sweep(
    pair: ScalePair,
    queries: list[tuple[MixingRatio, int, float, float]],
) -> np.ndarray:
    """Vector of projections for (ratio, target_n, ot0, ot1) query rows."""
    return np.asarray(
        [project_query(pair, r, n, d0, d1) for r, n, d0, d1 in queries]
    )
