"""Data-acquisition optimization on the mixing-ratio simplex.

The fixed-budget problem maximizes the projected performance prediction over
the simplex by gradient ascent: at every iterate the training mixture is
recomposed at both fitted scales with a fixed per-run seed, the OT distance
and dual potentials are recomputed, the per-scale surrogate gradients are
assembled from the calibrated OT gradient, and the two are blended with the
same log-ratio weights the projection itself uses. Steps are followed by the
minimal simplex repair (clip negatives, renormalize).

The flexible-budget problem wraps the fixed-budget solver in a line search
over an increasing budget grid, warm-starting every solve from the previous
optimum, and stops at the first budget whose optimized prediction reaches
the target.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence, Union

import numpy as np

from .dataspace import Dataset, MixingRatio, MixtureSpec, compose
from .errors import (
    FeasibilityError,
    InsufficientDataError,
    UnreachableTargetError,
    ValidationError,
)
from .predictors import Kind, predict
from .projection import ScalePair, log_weights, project
from .transport import SinkhornConfig, calibrated_gradient, sinkhorn


@dataclass(frozen=True)
class RobbinsMonro:
    """Diminishing steps ``c / (t + 1)``; ``c`` defaults to a scale-free
    choice of ``0.1 / (initial gradient sup-norm + 1e-12)``."""

    c: float | None = None

    def __post_init__(self):
        if self.c is not None and self.c <= 0.0:
            raise ValidationError("Robbins-Monro constant must be positive")


@dataclass(frozen=True)
class Constant:
    """Fixed step size."""

    d: float

    def __post_init__(self):
        if self.d <= 0.0:
            raise ValidationError("constant step size must be positive")


StepSchedule = Union[RobbinsMonro, Constant]


@dataclass(frozen=True)
class OptimizerConfig:
    step_schedule: StepSchedule = RobbinsMonro()
    max_iters: int = 500
    converge_tol: float = 1e-6
    seed: int = 0

    def __post_init__(self):
        if self.max_iters < 1:
            raise ValidationError("max_iters must be at least 1")
        if self.converge_tol < 0.0:
            raise ValidationError("converge_tol must be non-negative")


@dataclass(frozen=True)
class TrajectoryPoint:
    iteration: int
    ratio: MixingRatio
    objective: float
    clipped: bool = False


@dataclass(frozen=True)
class SelectionResult:
    ratio: MixingRatio
    predicted_performance: float
    trajectory: tuple[TrajectoryPoint, ...]
    converged: bool

    @property
    def iterations(self) -> int:
        return len(self.trajectory) - 1


@dataclass(frozen=True)
class BudgetSearchConfig:
    """Target performance, increasing budget grid, and the inner optimizer."""

    target: float
    n_grid: tuple[int, ...]
    inner: OptimizerConfig = OptimizerConfig()

    def __post_init__(self):
        if self.target <= 0.0:
            raise ValidationError("target performance must be positive")
        grid = tuple(int(n) for n in self.n_grid)
        object.__setattr__(self, "n_grid", grid)
        if not grid:
            raise ValidationError("budget grid must be nonempty")
        if any(b <= a for a, b in zip(grid, grid[1:])):
            raise ValidationError("budget grid must be strictly increasing")
        if grid[0] < 1:
            raise ValidationError("budgets must be positive")


def _surrogate_gradient(
    model, ratio: MixingRatio, ot_cost: float, ot_grad: np.ndarray
) -> np.ndarray:
    """Gradient of one fitted surrogate w.r.t. the mixing ratio.

    CS chains the affine slope through the OT gradient. PQ adds the product
    terms of its per-source quadratic coefficients, pairing each source's
    distance coefficient with that source's OT gradient entry.
    """
    p = ratio.array
    m = model.m
    params = model.params
    if model.kind is Kind.CS:
        return params[0] * ot_grad
    if model.kind is Kind.PQ:
        b2, b1 = params[:m], params[m : 2 * m]
        b0 = params[2 * m]
        c2, c1 = params[2 * m + 1 : 3 * m + 1], params[3 * m + 1 : 4 * m + 1]
        dist_coef = b2 * p**2 + b1 * p + b0
        return dist_coef * ot_grad + (2.0 * b2 * p + b1) * ot_cost + (2.0 * c2 * p + c1)
    raise ValidationError(
        f"gradient-based selection supports CS and PQ surrogates, not {model.kind.value}"
    )


def _evaluate_point(
    pair: ScalePair,
    ratio: MixingRatio,
    target_n: int,
    sources: Sequence[Dataset],
    val: Dataset,
    seed: int,
    sinkhorn_config: SinkhornConfig | None,
) -> tuple[float, np.ndarray]:
    """Objective value and gradient at one iterate (frozen composition seed)."""
    w0, w1 = log_weights(pair.n0, pair.n1, target_n)
    values: list[float] = []
    grads: list[np.ndarray] = []
    for scale, model in ((pair.n0, pair.model0), (pair.n1, pair.model1)):
        try:
            comp = compose(sources, MixtureSpec(budget=scale, ratio=ratio, seed=seed))
        except InsufficientDataError as exc:
            raise FeasibilityError(
                f"cannot compose {scale} points at ratio {tuple(ratio.p)}: {exc}"
            ) from exc
        result = sinkhorn(comp, val, pair.cost_spec, sinkhorn_config)
        ot_grad = calibrated_gradient(result, comp.source_index, pair.m).g
        values.append(predict(model, ratio, result.cost, scale))
        grads.append(_surrogate_gradient(model, ratio, result.cost, ot_grad))
    objective = project(pair, values[0], values[1], target_n)
    gradient = w0 * grads[0] + w1 * grads[1]
    return objective, gradient


def objective_gradient(
    pair: ScalePair,
    ratio: MixingRatio,
    target_n: int,
    sources: Sequence[Dataset],
    val: Dataset,
    seed: int = 0,
    sinkhorn_config: SinkhornConfig | None = None,
) -> np.ndarray:
    """Gradient of the projected performance prediction w.r.t. the ratio."""
    _, gradient = _evaluate_point(
        pair, ratio, target_n, sources, val, seed, sinkhorn_config
    )
    return gradient


def _step_size(schedule: StepSchedule, t: int, auto_rm_constant: float) -> float:
    if isinstance(schedule, Constant):
        return schedule.d
    c = schedule.c if schedule.c is not None else auto_rm_constant
    return c / (t + 1)


def _project_simplex(values: np.ndarray) -> tuple[MixingRatio, bool]:
    clipped = bool((values < 0.0).any())
    v = np.clip(values, 0.0, None)
    total = v.sum()
    if total <= 0.0:
        return MixingRatio.uniform(values.size), True
    return MixingRatio(tuple(v / total)), clipped


def select_fixed_budget(
    pair: ScalePair,
    budget: int,
    sources: Sequence[Dataset],
    val: Dataset,
    config: OptimizerConfig | None = None,
    init: MixingRatio | None = None,
    sinkhorn_config: SinkhornConfig | None = None,
) -> SelectionResult:
    """Projected-gradient ascent for the fixed-budget mixture objective.

    Starts from the uniform ratio unless ``init`` is given, stops when the
    sup-norm change of the iterate falls below ``converge_tol`` or the
    iteration budget runs out, and returns the best iterate by predicted
    objective. Every iterate satisfies the simplex constraints; steps that
    produced negative entries are flagged on the trajectory.
    """
    if budget < 1:
        raise ValidationError("budget must be positive")
    config = config or OptimizerConfig()
    ratio = init if init is not None else MixingRatio.uniform(pair.m)
    objective, gradient = _evaluate_point(
        pair, ratio, budget, sources, val, config.seed, sinkhorn_config
    )
    trajectory = [TrajectoryPoint(0, ratio, objective)]
    auto_rm = 0.1 / (float(np.abs(gradient).max()) + 1e-12)
    converged = False
    for t in range(config.max_iters):
        step = _step_size(config.step_schedule, t, auto_rm)
        new_ratio, clipped = _project_simplex(ratio.array + step * gradient)
        delta = float(np.abs(new_ratio.array - ratio.array).max())
        objective, gradient = _evaluate_point(
            pair, new_ratio, budget, sources, val, config.seed, sinkhorn_config
        )
        trajectory.append(TrajectoryPoint(t + 1, new_ratio, objective, clipped))
        ratio = new_ratio
        if delta <= config.converge_tol:
            converged = True
            break
    best = max(trajectory, key=lambda pt: pt.objective)
    return SelectionResult(
        ratio=best.ratio,
        predicted_performance=best.objective,
        trajectory=tuple(trajectory),
        converged=converged,
    )


def search_min_budget(
    pair: ScalePair,
    sources: Sequence[Dataset],
    val: Dataset,
    config: BudgetSearchConfig,
    sinkhorn_config: SinkhornConfig | None = None,
) -> tuple[int, SelectionResult]:
    """Smallest grid budget whose optimized prediction reaches the target.

    Each budget's inner solve is warm-started from the previous optimum.
    Predictions are clamped to [0, 1] for the comparison (an accuracy target
    above 1 is always unreachable). Raises
    :class:`UnreachableTargetError` carrying the best achieved pair when the
    grid is exhausted.
    """
    best_budget = -1
    best_perf = -math.inf
    warm: MixingRatio | None = None
    for budget in config.n_grid:
        result = select_fixed_budget(
            pair,
            budget,
            sources,
            val,
            config.inner,
            init=warm,
            sinkhorn_config=sinkhorn_config,
        )
        warm = result.ratio
        achieved = min(max(result.predicted_performance, 0.0), 1.0)
        if achieved > best_perf:
            best_budget, best_perf = budget, achieved
        if achieved >= config.target:
            return budget, result
    raise UnreachableTargetError(
        f"no budget in the grid reaches target {config.target} "
        f"(best {best_perf:.6f} at N={best_budget})",
        best_budget=best_budget,
        best_performance=best_perf,
    )
