"""Surrogate models mapping (mixing ratio, OT distance, budget) to performance.

Two distance-aware surrogates plus six composition-only baselines:

* ``CS``     — affine in the OT distance: ``a1 * d + a0``.
* ``PQ``     — per-source quadratic coefficients on the distance:
  ``sum_i (b2_i p_i^2 + b1_i p_i) * d + b0 * d
  + sum_i (c2_i p_i^2 + c1_i p_i) + c0``.
* ``Linear``            — ``a . p + b log N + c``.
* ``PseudoQuadratic``   — ``sum_i (c2_i p_i^2 + c1_i p_i) + c0 + b log N``.
* ``Quadratic``         — PseudoQuadratic plus cross terms
  ``sum_{i >= j} c3_ij p_i p_j``.
* ``Rational``          — ``sum_i (c_i . p)^{-1} + b log N`` fitted against
  ``log(1 - accuracy)``; predictions live in that transformed space and are
  mapped back by :func:`predict_performance`.
* ``LOO`` / ``Shapley`` — Linear with the composition coefficients fixed to
  game-theoretic source values; only ``b`` and ``c`` are fitted.

Shared intercept terms appear once in the parameter vector (not once per
source), which is an equivalent reparameterization of the summed form.

Parameter layouts (``model.params``):

=================  =============================================================
CS                 ``[a1, a0]``
PQ                 ``[b2(m), b1(m), b0, c2(m), c1(m), c0]``
Linear             ``[a(m), b, c]``
PseudoQuadratic    ``[c2(m), c1(m), c0, b]``
Quadratic          ``[c2(m), c1(m), c3(m(m+1)/2, pairs (i, j<=i) in row order),
                   c0, b]``
Rational           ``[c(m*m) row-major, b]``
LOO / Shapley      ``[a(m), b, c]``
=================  =============================================================

All linear-in-parameters fits solve ridge-damped normal equations
(damping 1e-8); CS uses the undamped closed-form 2x2 solve and raises on a
rank-deficient design instead.
"""

from __future__ import annotations

import json
import math
import warnings
from dataclasses import dataclass
from enum import Enum
from pathlib import Path
from typing import Callable, Sequence

import numpy as np

from .dataspace import MixingRatio
from .errors import (
    DimensionMismatchError,
    FitFailureError,
    RankDeficiencyError,
    SizeError,
    ValidationError,
)

RIDGE_DAMPING = 1e-8
RATIONAL_STARTS = 8
ACCURACY_CLAMP = 1.0 - 1e-6


class Kind(str, Enum):
    CS = "CS"
    PQ = "PQ"
    LINEAR = "Linear"
    PSEUDO_QUADRATIC = "PseudoQuadratic"
    QUADRATIC = "Quadratic"
    RATIONAL = "Rational"
    LOO = "LOO"
    SHAPLEY = "Shapley"


def param_count(kind: Kind, m: int) -> int:
    """Number of parameters of a model kind for m sources."""
    return {
        Kind.CS: 2,
        Kind.PQ: 4 * m + 2,
        Kind.LINEAR: m + 2,
        Kind.PSEUDO_QUADRATIC: 2 * m + 2,
        Kind.QUADRATIC: 2 * m + m * (m + 1) // 2 + 2,
        Kind.RATIONAL: m * m + 1,
        Kind.LOO: m + 2,
        Kind.SHAPLEY: m + 2,
    }[kind]


@dataclass(frozen=True)
class TrainingTuple:
    """One observation: composition, scale, OT distance, measured performance."""

    ratio: MixingRatio
    budget: int
    ot_distance: float
    performance: float

    def __post_init__(self):
        if self.budget < 1:
            raise ValidationError("budget must be positive")
        if self.ot_distance < 0.0:
            raise ValidationError("ot_distance must be non-negative")
        if not (0.0 <= self.performance <= 1.0):
            raise ValidationError("performance must lie in [0, 1]")


@dataclass(frozen=True, eq=False)
class PredictorModel:
    """A fitted surrogate; ``fit_residual`` is the training RMSE."""

    kind: Kind
    params: np.ndarray
    m: int
    fit_residual: float
    rank_deficient: bool = False

    def __post_init__(self):
        params = np.asarray(self.params, dtype=float)
        object.__setattr__(self, "params", params)
        object.__setattr__(self, "kind", Kind(self.kind))
        expected = param_count(self.kind, self.m)
        if params.shape != (expected,):
            raise ValidationError(
                f"{self.kind.value} with m={self.m} needs {expected} parameters, "
                f"got shape {params.shape}"
            )


def _stack(tuples: Sequence[TrainingTuple]) -> tuple[np.ndarray, np.ndarray, np.ndarray, np.ndarray]:
    ratios = np.stack([t.ratio.array for t in tuples])
    dists = np.asarray([t.ot_distance for t in tuples])
    budgets = np.asarray([t.budget for t in tuples], dtype=float)
    perfs = np.asarray([t.performance for t in tuples])
    return ratios, dists, budgets, perfs


def _check_m(tuples: Sequence[TrainingTuple]) -> int:
    ms = {t.ratio.m for t in tuples}
    if len(ms) != 1:
        raise DimensionMismatchError("training tuples mix different source counts")
    return ms.pop()


def _rmse(residuals: np.ndarray) -> float:
    return float(np.sqrt(np.mean(residuals**2)))


def _ridge_solve(design: np.ndarray, target: np.ndarray) -> tuple[np.ndarray, bool]:
    gram = design.T @ design + RIDGE_DAMPING * np.eye(design.shape[1])
    theta = np.linalg.solve(gram, design.T @ target)
    deficient = np.linalg.matrix_rank(design) < design.shape[1]
    return theta, deficient


def _design(kind: Kind, ratios: np.ndarray, dists: np.ndarray, budgets: np.ndarray) -> np.ndarray:
    n = ratios.shape[0]
    ones = np.ones((n, 1))
    log_n = np.log(budgets)[:, None]
    p = ratios
    if kind is Kind.CS:
        return np.column_stack([dists, np.ones(n)])
    if kind is Kind.PQ:
        d = dists[:, None]
        return np.hstack([p**2 * d, p * d, d, p**2, p, ones])
    if kind is Kind.LINEAR:
        return np.hstack([p, log_n, ones])
    if kind is Kind.PSEUDO_QUADRATIC:
        return np.hstack([p**2, p, ones, log_n])
    if kind is Kind.QUADRATIC:
        cross = np.column_stack(
            [p[:, i] * p[:, j] for i in range(p.shape[1]) for j in range(i + 1)]
        )
        return np.hstack([p**2, p, cross, ones, log_n])
    raise ValidationError(f"{kind.value} has no linear design")


def fit_cs(tuples: Sequence[TrainingTuple]) -> PredictorModel:
    """Closed-form least squares for the affine-in-distance surrogate."""
    if len(tuples) < 2:
        raise ValidationError("CS fitting needs at least 2 tuples")
    m = _check_m(tuples)
    _, dists, _, perfs = _stack(tuples)
    if np.ptp(dists) <= 1e-12 * max(1.0, float(np.abs(dists).max())):
        raise RankDeficiencyError(
            "all OT distances are identical; the affine fit is not determined"
        )
    design = np.column_stack([dists, np.ones(len(tuples))])
    theta = np.linalg.solve(design.T @ design, design.T @ perfs)
    residual = _rmse(design @ theta - perfs)
    return PredictorModel(kind=Kind.CS, params=theta, m=m, fit_residual=residual)


def fit_pq(tuples: Sequence[TrainingTuple]) -> PredictorModel:
    """Ridge-damped least squares for the pseudo-quadratic distance surrogate.

    The model is linear in its parameters, so the solve is a single
    damped normal-equation system; a rank-deficient design is flagged on
    the returned model rather than raised.
    """
    m = _check_m(tuples)
    needed = param_count(Kind.PQ, m)
    if len(tuples) < needed:
        raise ValidationError(f"PQ fitting needs at least {needed} tuples for m={m}")
    ratios, dists, budgets, perfs = _stack(tuples)
    design = _design(Kind.PQ, ratios, dists, budgets)
    theta, deficient = _ridge_solve(design, perfs)
    residual = _rmse(design @ theta - perfs)
    return PredictorModel(
        kind=Kind.PQ, params=theta, m=m, fit_residual=residual, rank_deficient=deficient
    )


def _transformed_target(perfs: np.ndarray) -> np.ndarray:
    return np.log(1.0 - np.minimum(perfs, ACCURACY_CLAMP))


def _rational_predict(params: np.ndarray, ratios: np.ndarray, budgets: np.ndarray, m: int) -> np.ndarray:
    c = params[: m * m].reshape(m, m)
    b = params[m * m]
    denom = ratios @ c.T
    return (1.0 / denom).sum(axis=1) + b * np.log(budgets)


def _fit_rational(tuples: Sequence[TrainingTuple], seed: int) -> PredictorModel:
    m = _check_m(tuples)
    ratios, _, budgets, perfs = _stack(tuples)
    target = _transformed_target(perfs)
    log_n = np.log(budgets)

    def residuals(params: np.ndarray) -> np.ndarray:
        return _rational_predict(params, ratios, budgets, m) - target

    def jacobian(params: np.ndarray) -> np.ndarray:
        c = params[: m * m].reshape(m, m)
        denom = ratios @ c.T  # (n, m) rows of c_i . p
        jac = np.empty((len(tuples), m * m + 1))
        inv_sq = 1.0 / denom**2
        for i in range(m):
            jac[:, i * m : (i + 1) * m] = -ratios * inv_sq[:, [i]]
        jac[:, m * m] = log_n
        return jac

    best: tuple[float, int, np.ndarray] | None = None
    trace: list[float] = []
    for start in range(RATIONAL_STARTS):
        rng = np.random.default_rng([seed, start])
        params = np.concatenate([0.5 + rng.random(m * m), rng.normal(0.0, 0.1, 1)])
        lam = 1e-3
        r = residuals(params)
        sse = float(r @ r)
        if not math.isfinite(sse):
            trace.append(math.inf)
            continue
        for _ in range(200):
            jac = jacobian(params)
            grad = jac.T @ r
            hess = jac.T @ jac
            accepted = False
            for _ in range(12):
                step = np.linalg.solve(hess + lam * np.eye(hess.shape[0]), -grad)
                candidate = params + step
                denom = ratios @ candidate[: m * m].reshape(m, m).T
                if np.any(denom <= 1e-12):
                    lam *= 10.0
                    continue
                r_new = residuals(candidate)
                sse_new = float(r_new @ r_new)
                if math.isfinite(sse_new) and sse_new < sse:
                    params, r, sse = candidate, r_new, sse_new
                    lam = max(lam / 3.0, 1e-12)
                    accepted = True
                    break
                lam *= 10.0
            if not accepted or float(np.abs(step).max()) < 1e-12:
                break
        final = _rmse(r) if math.isfinite(sse) else math.inf
        trace.append(final)
        if math.isfinite(final) and (best is None or final < best[0] - 0.0):
            best = (final, start, params.copy())
    if best is None:
        raise FitFailureError(
            "rational fit diverged from every start", residual_trace=tuple(trace)
        )
    residual, _, params = best
    return PredictorModel(kind=Kind.RATIONAL, params=params, m=m, fit_residual=residual)


def fit_baseline(kind: Kind, tuples: Sequence[TrainingTuple], seed: int = 0) -> PredictorModel:
    """Fit one of the composition-only baselines.

    Linear, PseudoQuadratic, and Quadratic are linear in their parameters and
    use the damped normal equations. Rational runs a damped Gauss-Newton from
    ``RATIONAL_STARTS`` seeded starts on the ``log(1 - accuracy)`` target and
    keeps the best residual (ties broken by lowest start index).
    """
    kind = Kind(kind)
    if kind in (Kind.CS, Kind.PQ):
        raise ValidationError("use fit_cs / fit_pq for the distance-aware surrogates")
    if kind in (Kind.LOO, Kind.SHAPLEY):
        raise ValidationError("LOO/Shapley models are built from source values; see fit_value_based")
    m = _check_m(tuples)
    needed = param_count(kind, m)
    if len(tuples) < needed:
        raise ValidationError(
            f"{kind.value} fitting needs at least {needed} tuples for m={m}"
        )
    if kind is Kind.RATIONAL:
        return _fit_rational(tuples, seed)
    ratios, dists, budgets, perfs = _stack(tuples)
    design = _design(kind, ratios, dists, budgets)
    theta, deficient = _ridge_solve(design, perfs)
    # design column order is [p-blocks..., 1, logN]; params store [..., c0, b]
    residual = _rmse(design @ theta - perfs)
    return PredictorModel(
        kind=kind, params=theta, m=m, fit_residual=residual, rank_deficient=deficient
    )


def fit_value_based(
    kind: Kind, values: Sequence[float], tuples: Sequence[TrainingTuple]
) -> PredictorModel:
    """Linear model with composition coefficients pinned to source values.

    Only the ``b log N + c`` tail is fitted, by damped least squares on the
    residual after subtracting ``values . p``.
    """
    kind = Kind(kind)
    if kind not in (Kind.LOO, Kind.SHAPLEY):
        raise ValidationError("value-based fitting applies to LOO and Shapley kinds")
    m = _check_m(tuples)
    a = np.asarray(values, dtype=float)
    if a.shape != (m,):
        raise DimensionMismatchError(f"need {m} source values, got shape {a.shape}")
    ratios, _, budgets, perfs = _stack(tuples)
    residual_target = perfs - ratios @ a
    design = np.column_stack([np.log(budgets), np.ones(len(tuples))])
    theta, deficient = _ridge_solve(design, residual_target)
    params = np.concatenate([a, theta])
    residual = _rmse(design @ theta - residual_target)
    return PredictorModel(
        kind=kind, params=params, m=m, fit_residual=residual, rank_deficient=deficient
    )


def predict(
    model: PredictorModel, ratio: MixingRatio, ot_distance: float, budget: int = 1
) -> float:
    """Evaluate a model's formula; no clamping is applied here.

    CS and PQ ignore ``budget`` (scale handling lives in the projection
    stage); the baselines use it through their ``b log N`` term. Rational
    predictions are in ``log(1 - accuracy)`` space — see
    :func:`predict_performance`.
    """
    if ratio.m != model.m:
        raise DimensionMismatchError(
            f"ratio has {ratio.m} entries but the model expects {model.m}"
        )
    p = ratio.array
    params = model.params
    m = model.m
    if model.kind is Kind.CS:
        a1, a0 = params
        return float(a1 * ot_distance + a0)
    if model.kind is Kind.PQ:
        b2, b1 = params[:m], params[m : 2 * m]
        b0 = params[2 * m]
        c2, c1 = params[2 * m + 1 : 3 * m + 1], params[3 * m + 1 : 4 * m + 1]
        c0 = params[4 * m + 1]
        dist_coef = float(b2 @ p**2 + b1 @ p + b0)
        return float(dist_coef * ot_distance + c2 @ p**2 + c1 @ p + c0)
    if budget < 1:
        raise ValidationError("baselines with a log N term need budget >= 1")
    log_n = math.log(budget)
    if model.kind in (Kind.LINEAR, Kind.LOO, Kind.SHAPLEY):
        a, b, c = params[:m], params[m], params[m + 1]
        return float(a @ p + b * log_n + c)
    if model.kind is Kind.PSEUDO_QUADRATIC:
        c2, c1 = params[:m], params[m : 2 * m]
        c0, b = params[2 * m], params[2 * m + 1]
        return float(c2 @ p**2 + c1 @ p + c0 + b * log_n)
    if model.kind is Kind.QUADRATIC:
        n_cross = m * (m + 1) // 2
        c2, c1 = params[:m], params[m : 2 * m]
        c3 = params[2 * m : 2 * m + n_cross]
        c0, b = params[2 * m + n_cross], params[2 * m + n_cross + 1]
        cross = np.asarray([p[i] * p[j] for i in range(m) for j in range(i + 1)])
        return float(c2 @ p**2 + c1 @ p + c3 @ cross + c0 + b * log_n)
    if model.kind is Kind.RATIONAL:
        return float(_rational_predict(params, p[None, :], np.asarray([budget]), m)[0])
    raise ValidationError(f"unknown model kind {model.kind!r}")


def predict_performance(
    model: PredictorModel, ratio: MixingRatio, ot_distance: float, budget: int = 1
) -> float:
    """Model output in accuracy space (undoes the Rational target transform)."""
    raw = predict(model, ratio, ot_distance, budget)
    if model.kind is Kind.RATIONAL:
        return 1.0 - math.exp(raw)
    return raw


def loo_values(utility: Callable[[tuple[int, ...]], float], m: int) -> np.ndarray:
    """Leave-one-out values: utility drop when each source is removed."""
    full = tuple(range(m))
    base = utility(full)
    return np.asarray(
        [base - utility(tuple(j for j in full if j != i)) for i in range(m)]
    )


def shapley_values(utility: Callable[[tuple[int, ...]], float], m: int) -> np.ndarray:
    """Exact Shapley values by enumeration over all 2^m subsets (m <= 12)."""
    if m > 12:
        raise SizeError(f"exact Shapley enumeration supports m <= 12, got {m}")
    cache = {}
    for mask in range(1 << m):
        subset = tuple(i for i in range(m) if mask >> i & 1)
        cache[mask] = utility(subset)
    fact = [math.factorial(k) for k in range(m + 1)]
    denom = fact[m]
    phi = np.zeros(m)
    for i in range(m):
        for mask in range(1 << m):
            if mask >> i & 1:
                continue
            s = bin(mask).count("1")
            weight = fact[s] * fact[m - 1 - s] / denom
            phi[i] += weight * (cache[mask | 1 << i] - cache[mask])
    return phi


def selection_ratio_from_values(values: Sequence[float]) -> MixingRatio:
    """Normalize non-negative parts of source values onto the simplex.

    All-nonpositive values fall back to the uniform ratio with a warning.
    """
    v = np.asarray(values, dtype=float)
    if np.clip(v, 0.0, None).sum() <= 0.0:
        warnings.warn(
            "all source values are non-positive; falling back to the uniform ratio",
            RuntimeWarning,
            stacklevel=2,
        )
        return MixingRatio.uniform(v.size)
    return MixingRatio.normalized(v)


def model_to_json(model: PredictorModel) -> str:
    """Serialize as ``{kind, m, params, fit_residual}`` with full float precision."""
    payload = {
        "kind": model.kind.value,
        "m": model.m,
        "params": [float(x) for x in model.params],
        "fit_residual": float(model.fit_residual),
    }
    return json.dumps(payload)


def model_from_json(text: str) -> PredictorModel:
    payload = json.loads(text)
    return PredictorModel(
        kind=Kind(payload["kind"]),
        params=np.asarray(payload["params"], dtype=float),
        m=int(payload["m"]),
        fit_residual=float(payload["fit_residual"]),
    )


def save_model(model: PredictorModel, path: str | Path) -> None:
    Path(path).write_text(model_to_json(model) + "\n")


def load_model(path: str | Path) -> PredictorModel:
    return model_from_json(Path(path).read_text())
