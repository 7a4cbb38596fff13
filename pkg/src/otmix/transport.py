"""Discrete optimal transport between a training mixture and a validation set.

Three solvers/products live here:

* :func:`cost_matrix` — ground cost on feature-label pairs,
  ``C[i, j] = metric(x_i, x'_j) + label_weight * [y_i != y'_j]``.
* :func:`sinkhorn` — entropically regularized OT in the log domain with a
  geometric annealing schedule on the regularization strength. Returns the
  regularized primal cost ``<pi, C>`` and the converged dual potentials.
* :func:`exact_ot` — exact uniform-marginal OT for small instances via a
  linear program; serves as the verification oracle for the Sinkhorn solver
  and the gradient formula.

:func:`calibrated_gradient` turns dual potentials into the derivative of the
OT distance with respect to per-source probability mass: raising source i's
mass uniformly over its points while removing it uniformly from all other
points. The direction conserves total mass, so a constant shift of the train
potentials leaves the gradient unchanged.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Literal

import numpy as np
from scipy import sparse
from scipy.optimize import linprog
from scipy.special import logsumexp

from .dataspace import Dataset
from .errors import (
    ConvergenceError,
    DegeneracyError,
    DimensionMismatchError,
    ModeError,
    NumericError,
    SizeError,
    ValidationError,
)

FeatureMetric = Literal["sqeuclidean", "euclidean"]

EXACT_SIZE_LIMIT = 10_000


@dataclass(frozen=True)
class CostSpec:
    """Ground-cost settings: feature metric plus the label-mismatch weight."""

    feature_metric: FeatureMetric = "sqeuclidean"
    label_weight: float = 0.0

    def __post_init__(self):
        if self.feature_metric not in ("sqeuclidean", "euclidean"):
            raise ValidationError(f"unknown feature metric {self.feature_metric!r}")
        if self.label_weight < 0.0:
            raise ValidationError("label_weight must be non-negative")


@dataclass(frozen=True)
class SinkhornConfig:
    """Annealed log-domain Sinkhorn settings.

    ``epsilon_start`` defaults to the mean cost and ``epsilon_final`` to
    ``epsilon_final_factor * median(cost)``; both may be given as absolute
    values. ``tol`` bounds the L1 violation of the row marginal.
    """

    epsilon_start: float | None = None
    epsilon_final: float | None = None
    epsilon_final_factor: float = 1e-3
    anneal_factor: float = 0.5
    max_iters: int = 20_000
    tol: float = 1e-5

    def __post_init__(self):
        if not (0.0 < self.anneal_factor < 1.0):
            raise ValidationError("anneal_factor must lie in (0, 1)")
        if self.max_iters < 1:
            raise ValidationError("max_iters must be positive")
        if self.tol <= 0.0:
            raise ValidationError("tol must be positive")
        for name in ("epsilon_start", "epsilon_final"):
            value = getattr(self, name)
            if value is not None and value <= 0.0:
                raise ValidationError(f"{name} must be positive when given")


@dataclass(frozen=True)
class TransportResult:
    """OT cost with the dual potentials it was computed from."""

    cost: float
    dual_train: np.ndarray
    dual_val: np.ndarray
    epsilon: float
    iterations: int


@dataclass(frozen=True)
class SourceGradient:
    """Per-source derivative of the OT distance w.r.t. mixture mass.

    ``degenerate`` lists sources with zero points, whose entries are
    reported as 0.
    """

    g: np.ndarray
    degenerate: tuple[int, ...] = ()


def _pairwise_sq_dists(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    sq = (a * a).sum(axis=1)[:, None] + (b * b).sum(axis=1)[None, :] - 2.0 * (a @ b.T)
    return np.clip(sq, 0.0, None)


def cost_matrix(train: Dataset, val: Dataset, spec: CostSpec) -> np.ndarray:
    """Ground-cost matrix between train rows and validation columns."""
    if train.dim != val.dim:
        raise DimensionMismatchError(
            f"feature dimensions differ: {train.dim} vs {val.dim}"
        )
    cost = _pairwise_sq_dists(train.features, val.features)
    if spec.feature_metric == "euclidean":
        cost = np.sqrt(cost)
    if spec.label_weight > 0.0:
        if train.labels is None or val.labels is None:
            raise ModeError("label_weight > 0 requires both datasets to be labeled")
        mismatch = train.labels[:, None] != val.labels[None, :]
        cost = cost + spec.label_weight * mismatch
    return cost


def default_label_weight(train: Dataset, val: Dataset, metric: FeatureMetric = "sqeuclidean") -> float:
    """Label-mismatch weight of 10x the median pairwise feature cost."""
    feature_cost = cost_matrix(train, val, CostSpec(feature_metric=metric, label_weight=0.0))
    return 10.0 * float(np.median(feature_cost))


def _resolve_epsilons(cost: np.ndarray, config: SinkhornConfig) -> tuple[float, float]:
    scale = float(np.median(cost))
    if scale <= 0.0:
        scale = max(float(cost.mean()), 1e-12)
    final = config.epsilon_final
    if final is None:
        final = config.epsilon_final_factor * scale
    start = config.epsilon_start
    if start is None:
        start = max(float(cost.mean()), final)
    return max(start, final), final


def sinkhorn_from_cost(
    cost: np.ndarray,
    mu: np.ndarray,
    nu: np.ndarray,
    config: SinkhornConfig | None = None,
) -> TransportResult:
    """Annealed log-domain Sinkhorn for an explicit cost matrix and marginals.

    The regularization strength is lowered geometrically from
    ``epsilon_start`` to ``epsilon_final``, warm-starting the potentials at
    each level; intermediate levels converge to a loose tolerance, the final
    level to ``tol``. Raises :class:`ConvergenceError` (carrying the last
    marginal residual) if the iteration budget runs out, and
    :class:`NumericError` on non-finite potentials.
    """
    config = config or SinkhornConfig()
    cost = np.asarray(cost, dtype=float)
    mu = np.asarray(mu, dtype=float)
    nu = np.asarray(nu, dtype=float)
    if cost.shape != (mu.size, nu.size):
        raise DimensionMismatchError("cost shape does not match the marginals")
    if not np.isfinite(cost).all():
        raise NumericError("cost matrix contains non-finite entries")
    eps_start, eps_final = _resolve_epsilons(cost, config)

    log_mu = np.log(mu)
    log_nu = np.log(nu)
    f = np.zeros(mu.size)
    g = np.zeros(nu.size)

    levels = [eps_start]
    while levels[-1] > eps_final * (1.0 + 1e-12):
        levels.append(max(levels[-1] * config.anneal_factor, eps_final))

    iterations = 0
    residual = np.inf

    def row_residual(eps: float) -> float:
        log_pi = (f[:, None] + g[None, :] - cost) / eps + log_mu[:, None] + log_nu[None, :]
        row_sums = np.exp(logsumexp(log_pi, axis=1))
        return float(np.abs(row_sums - mu).sum())

    for level_idx, eps in enumerate(levels):
        is_final = level_idx == len(levels) - 1
        level_tol = config.tol if is_final else max(config.tol, 1e-3)
        while iterations < config.max_iters:
            f = -eps * logsumexp((g[None, :] - cost) / eps + log_nu[None, :], axis=1)
            g = -eps * logsumexp((f[:, None] - cost) / eps + log_mu[:, None], axis=0)
            iterations += 1
            if iterations % 5 == 0 or iterations == config.max_iters:
                residual = row_residual(eps)
                if residual <= level_tol:
                    break
        else:
            break
    if not (np.isfinite(f).all() and np.isfinite(g).all()):
        raise NumericError("Sinkhorn potentials became non-finite")
    residual = row_residual(levels[-1])
    if residual > config.tol:
        raise ConvergenceError(
            f"Sinkhorn did not reach marginal tolerance {config.tol} within "
            f"{config.max_iters} iterations (residual {residual:.3e})",
            residual=residual,
        )
    eps = levels[-1]
    log_pi = (f[:, None] + g[None, :] - cost) / eps + log_mu[:, None] + log_nu[None, :]
    pi = np.exp(log_pi)
    value = float((pi * cost).sum())
    return TransportResult(
        cost=value, dual_train=f, dual_val=g, epsilon=eps, iterations=iterations
    )


def sinkhorn(
    train: Dataset,
    val: Dataset,
    spec: CostSpec,
    config: SinkhornConfig | None = None,
) -> TransportResult:
    """Entropic OT between two datasets under uniform point weights."""
    cost = cost_matrix(train, val, spec)
    mu = np.full(train.n, 1.0 / train.n)
    nu = np.full(val.n, 1.0 / val.n)
    return sinkhorn_from_cost(cost, mu, nu, config)


def exact_from_cost(cost: np.ndarray, mu: np.ndarray, nu: np.ndarray) -> TransportResult:
    """Exact OT for an explicit cost matrix via a dense linear program.

    Dual potentials are the equality-constraint multipliers of the LP;
    complementary slackness is verified to 1e-8 on the support of the
    returned coupling.
    """
    cost = np.asarray(cost, dtype=float)
    mu = np.asarray(mu, dtype=float)
    nu = np.asarray(nu, dtype=float)
    n, t = cost.shape
    if n * t > EXACT_SIZE_LIMIT:
        raise SizeError(
            f"exact solver limited to n*T <= {EXACT_SIZE_LIMIT}, got {n * t}"
        )
    row_marg = sparse.kron(sparse.eye(n, format="csr"), np.ones((1, t)), format="csr")
    col_marg = sparse.kron(np.ones((1, n)), sparse.eye(t, format="csr"), format="csr")
    a_eq = sparse.vstack([row_marg, col_marg], format="csr")
    b_eq = np.concatenate([mu, nu])
    res = linprog(cost.ravel(), A_eq=a_eq, b_eq=b_eq, bounds=(0, None), method="highs")
    if res.status != 0:
        raise NumericError(f"exact OT linear program failed: {res.message}")
    duals = np.asarray(res.eqlin.marginals, dtype=float)
    f, g = duals[:n], duals[n:]
    pi = res.x.reshape(n, t)
    support = pi > 1e-9
    slack = np.abs(cost - f[:, None] - g[None, :])[support]
    if slack.size and slack.max() > 1e-8:
        raise NumericError(
            f"LP duals violate complementary slackness by {slack.max():.3e}"
        )
    return TransportResult(
        cost=float(res.fun),
        dual_train=f,
        dual_val=g,
        epsilon=0.0,
        iterations=int(getattr(res, "nit", 0)),
    )


def exact_ot(train: Dataset, val: Dataset, spec: CostSpec) -> TransportResult:
    """Exact uniform-marginal OT between two datasets (small instances only)."""
    cost = cost_matrix(train, val, spec)
    mu = np.full(train.n, 1.0 / train.n)
    nu = np.full(val.n, 1.0 / val.n)
    return exact_from_cost(cost, mu, nu)


def calibrated_gradient(
    result: TransportResult, source_index_of: np.ndarray, m: int
) -> SourceGradient:
    """Per-source OT gradient assembled from the train dual potentials.

    For source i with n_i points out of N total,

        g_i = (1/n_i) * (sum of duals in source i
                         - n_i/(N - n_i) * sum of duals outside source i).

    Sources with no points get g_i = 0 and are flagged; a single active
    source leaves the formula undefined and raises
    :class:`DegeneracyError`.
    """
    src = np.asarray(source_index_of, dtype=np.int64)
    f = result.dual_train
    n_total = f.size
    if src.shape != (n_total,):
        raise DimensionMismatchError(
            "source_index_of must assign a source to every train point"
        )
    if src.min() < 0 or src.max() >= m:
        raise ValidationError(f"source indices must lie in [0, {m})")
    counts = np.bincount(src, minlength=m).astype(np.int64)
    if (counts == n_total).any():
        raise DegeneracyError(
            "a single source holds every train point; the calibrated gradient is undefined"
        )
    sums = np.bincount(src, weights=f, minlength=m)
    total = f.sum()
    g = np.zeros(m)
    active = counts > 0
    g[active] = sums[active] / counts[active] - (total - sums[active]) / (
        n_total - counts[active]
    )
    return SourceGradient(g=g, degenerate=tuple(int(i) for i in np.flatnonzero(~active)))


def mixture_weights(source_index_of: np.ndarray, ratio_values: np.ndarray) -> np.ndarray:
    """Point weights that spread each source's mixture mass uniformly over its points."""
    src = np.asarray(source_index_of, dtype=np.int64)
    p = np.asarray(ratio_values, dtype=float)
    counts = np.bincount(src, minlength=p.size)
    if np.any((counts == 0) & (p > 0)):
        raise DegeneracyError("a source with positive mass has no points to carry it")
    w = p[src] / counts[src]
    return w / w.sum()
