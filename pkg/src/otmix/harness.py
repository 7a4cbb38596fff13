"""End-to-end experiment pipelines: grid generation, fit-data construction,
MAE evaluation with extrapolation splits, efficiency curves, and method
comparison.

Experiments are driven by a single JSON config; every random choice flows
from explicit seeds, so repeated runs produce identical data files. Grid
evaluation can be parallelized with the ``PROJEKTOR_THREADS`` environment
variable (unset = serial, ``0`` = one thread per CPU); results are gathered
in deterministic grid order regardless.
"""

from __future__ import annotations

import csv
import json
import logging
import math
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np

from .dataspace import (
    Bernoulli,
    DataSource,
    Dataset,
    MixingRatio,
    MixtureSpec,
    Permutation,
    compose,
    corrupt_labels,
    read_dataset_csv,
    sample_pilot,
    strip_labels,
)
from .errors import (
    InsufficientDataError,
    SplitError,
    ValidationError,
)
from .learners import (
    LearnerSpec,
    LogisticRegression,
    NearestCentroid,
    SyntheticLogLinear,
    train_eval,
)
from .predictors import (
    Kind,
    PredictorModel,
    TrainingTuple,
    fit_baseline,
    fit_cs,
    fit_pq,
    fit_value_based,
    loo_values,
    param_count,
    predict,
    predict_performance,
    selection_ratio_from_values,
    shapley_values,
)
from .projection import ScalePair, auto_scales, project_query
from .selection import (
    BudgetSearchConfig,
    Constant,
    OptimizerConfig,
    RobbinsMonro,
    SelectionResult,
    search_min_budget,
    select_fixed_budget,
)
from .transport import CostSpec, SinkhornConfig, default_label_weight, sinkhorn

logger = logging.getLogger(__name__)

THREADS_ENV = "PROJEKTOR_THREADS"
MIN_GRID_FRACTION = 0.8

DISTANCE_KINDS = (Kind.CS, Kind.PQ)
VALUE_KINDS = (Kind.LOO, Kind.SHAPLEY)


# ---------------------------------------------------------------------------
# Configuration


@dataclass(frozen=True)
class GaussianComponent:
    mean: tuple[float, ...]
    scale: float
    label: int
    count: int


@dataclass(frozen=True)
class GeneratorConfig:
    """Either a Gaussian-mixture generator or a CSV path."""

    name: str
    components: tuple[GaussianComponent, ...] = ()
    csv_path: str | None = None
    pilot_size: int | None = None
    bernoulli_rate: float | None = None
    corrupt_fraction: float = 0.0
    unlabeled: bool = False


@dataclass(frozen=True)
class ExperimentConfig:
    sources: tuple[GeneratorConfig, ...]
    val: GeneratorConfig
    feature_metric: str = "sqeuclidean"
    label_weight: float | str = "auto"
    learner: LearnerSpec = field(default_factory=lambda: LearnerSpec(NearestCentroid()))
    n0: int | str = "auto"
    n1: int | str = "auto"
    grid_resolution: float = 0.1
    predictor_kinds: tuple[Kind, ...] = (Kind.CS, Kind.PQ, Kind.LINEAR)
    seed: int = 0
    seeds: tuple[int, ...] = (0,)
    replicates: int = 3
    extrapolation_cap: float = 0.55
    extrapolation_source: int = 0
    num_classes: int | None = None
    sinkhorn: SinkhornConfig = field(default_factory=SinkhornConfig)
    select_budget: int | None = None
    select_kind: Kind = Kind.PQ
    optimizer: OptimizerConfig = field(default_factory=OptimizerConfig)
    budget_target: float | None = None
    budget_grid: tuple[int, ...] = ()
    project_targets: tuple[int, ...] = ()
    project_with_actual: bool = False

    def __post_init__(self):
        steps = 1.0 / self.grid_resolution
        if abs(steps - round(steps)) > 1e-9:
            raise ValidationError(
                f"grid_resolution must divide 1 into an integer number of steps, got {self.grid_resolution}"
            )
        if not (0.0 < self.extrapolation_cap < 1.0):
            raise ValidationError("extrapolation_cap must lie in (0, 1)")
        if self.replicates < 1:
            raise ValidationError("replicates must be at least 1")


def _parse_generator(name: str, raw: dict) -> GeneratorConfig:
    components = tuple(
        GaussianComponent(
            mean=tuple(float(x) for x in comp["mean"]),
            scale=float(comp.get("scale", 1.0)),
            label=int(comp["label"]),
            count=int(comp["count"]),
        )
        for comp in raw.get("gaussian", [])
    )
    if not components and "csv" not in raw:
        raise ValidationError(f"source {name!r} needs either 'gaussian' components or a 'csv' path")
    protocol = raw.get("protocol", "permutation")
    bernoulli_rate = None
    if isinstance(protocol, dict):
        bernoulli_rate = float(protocol["bernoulli"])
    elif protocol != "permutation":
        raise ValidationError(f"unknown sampling protocol {protocol!r}")
    return GeneratorConfig(
        name=name,
        components=components,
        csv_path=raw.get("csv"),
        pilot_size=int(raw["pilot_size"]) if "pilot_size" in raw else None,
        bernoulli_rate=bernoulli_rate,
        corrupt_fraction=float(raw.get("corrupt_fraction", 0.0)),
        unlabeled=bool(raw.get("unlabeled", False)),
    )


def _parse_learner(raw: dict) -> LearnerSpec:
    kind_name = raw.get("kind", "nearest_centroid")
    seed = int(raw.get("seed", 0))
    if kind_name == "nearest_centroid":
        return LearnerSpec(NearestCentroid(), seed=seed)
    if kind_name == "logistic_regression":
        return LearnerSpec(
            LogisticRegression(
                lr=float(raw.get("lr", 0.5)), epochs=int(raw.get("epochs", 200))
            ),
            seed=seed,
        )
    if kind_name == "synthetic_log_linear":
        return LearnerSpec(
            SyntheticLogLinear(
                alpha_coeffs=tuple(float(x) for x in raw["alpha_coeffs"]),
                c_coeffs=tuple(float(x) for x in raw["c_coeffs"]),
                quad_weight=float(raw.get("quad_weight", 0.0)),
            ),
            seed=seed,
        )
    raise ValidationError(f"unknown learner kind {kind_name!r}")


def _parse_optimizer(raw: dict) -> OptimizerConfig:
    step_raw = raw.get("step", {"kind": "robbins_monro"})
    if step_raw.get("kind") == "constant":
        schedule = Constant(d=float(step_raw["d"]))
    else:
        c = step_raw.get("c")
        schedule = RobbinsMonro(c=float(c) if c is not None else None)
    return OptimizerConfig(
        step_schedule=schedule,
        max_iters=int(raw.get("max_iters", 500)),
        converge_tol=float(raw.get("converge_tol", 1e-6)),
        seed=int(raw.get("seed", 0)),
    )


def config_from_dict(raw: dict) -> ExperimentConfig:
    """Build a typed experiment config from a parsed JSON document."""
    sources = tuple(
        _parse_generator(src.get("name", f"source_{i}"), src)
        for i, src in enumerate(raw["sources"])
    )
    val = _parse_generator("val", raw["val"])
    cost = raw.get("cost", {})
    sinkhorn_raw = raw.get("sinkhorn", {})
    sink = SinkhornConfig(
        epsilon_start=sinkhorn_raw.get("epsilon_start"),
        epsilon_final=sinkhorn_raw.get("epsilon_final"),
        epsilon_final_factor=float(sinkhorn_raw.get("epsilon_final_factor", 1e-3)),
        anneal_factor=float(sinkhorn_raw.get("anneal_factor", 0.5)),
        max_iters=int(sinkhorn_raw.get("max_iters", 20_000)),
        tol=float(sinkhorn_raw.get("tol", 1e-5)),
    )
    select_raw = raw.get("select", {})
    budget_raw = raw.get("budget_search", {})
    project_raw = raw.get("project", {})
    return ExperimentConfig(
        sources=sources,
        val=val,
        feature_metric=cost.get("feature_metric", "sqeuclidean"),
        label_weight=cost.get("label_weight", "auto"),
        learner=_parse_learner(raw.get("learner", {})),
        n0=raw.get("n0", "auto"),
        n1=raw.get("n1", "auto"),
        grid_resolution=float(raw.get("grid_resolution", 0.1)),
        predictor_kinds=tuple(Kind(k) for k in raw.get("predictors", ["CS", "PQ", "Linear"])),
        seed=int(raw.get("seed", 0)),
        seeds=tuple(int(s) for s in raw.get("seeds", [raw.get("seed", 0)])),
        replicates=int(raw.get("replicates", 3)),
        extrapolation_cap=float(raw.get("extrapolation_cap", 0.55)),
        extrapolation_source=int(raw.get("extrapolation_source", 0)),
        num_classes=raw.get("num_classes"),
        sinkhorn=sink,
        select_budget=int(select_raw["budget"]) if "budget" in select_raw else None,
        select_kind=Kind(select_raw.get("kind", "PQ")),
        optimizer=_parse_optimizer(select_raw),
        budget_target=float(budget_raw["target"]) if "target" in budget_raw else None,
        budget_grid=tuple(int(n) for n in budget_raw.get("n_grid", [])),
        project_targets=tuple(int(n) for n in project_raw.get("target_ns", [])),
        project_with_actual=bool(project_raw.get("with_actual", False)),
    )


def load_config(path: str | Path) -> ExperimentConfig:
    return config_from_dict(json.loads(Path(path).read_text()))


# ---------------------------------------------------------------------------
# Data generation


def _derive_seed(*tags: int) -> int:
    return int(np.random.SeedSequence(list(tags)).generate_state(1)[0])


def generate_dataset(gen: GeneratorConfig, seed: int) -> Dataset:
    """Materialize one generator: sample its Gaussian mixture or read its CSV."""
    if gen.csv_path is not None:
        full = read_dataset_csv(gen.csv_path)
    else:
        rng = np.random.default_rng(seed)
        feats = []
        labels = []
        for comp in gen.components:
            mean = np.asarray(comp.mean)
            feats.append(mean + comp.scale * rng.standard_normal((comp.count, mean.size)))
            labels.append(np.full(comp.count, comp.label, dtype=np.int64))
        full = Dataset(
            features=np.concatenate(feats),
            labels=np.concatenate(labels),
            id=gen.name,
        )
    if gen.corrupt_fraction > 0.0:
        num_classes = int(full.labels.max()) + 1
        full = corrupt_labels(full, gen.corrupt_fraction, num_classes, _derive_seed(seed, 7))
    if gen.unlabeled:
        full = strip_labels(full)
    return full


def realize_sources(config: ExperimentConfig, seed: int) -> tuple[list[Dataset], Dataset]:
    """Generate pilot datasets for every source plus the validation set."""
    pilots = []
    for i, gen in enumerate(config.sources):
        full = generate_dataset(gen, _derive_seed(seed, 11, i))
        if gen.pilot_size is not None:
            protocol = (
                Bernoulli(gen.bernoulli_rate) if gen.bernoulli_rate is not None else Permutation()
            )
            pilot = sample_pilot(DataSource(full, gen.pilot_size), protocol, _derive_seed(seed, 13, i))
        else:
            pilot = full
        pilots.append(pilot)
    val = generate_dataset(config.val, _derive_seed(seed, 17))
    return pilots, val


# ---------------------------------------------------------------------------
# Run context


@dataclass(frozen=True)
class RunContext:
    """Everything one seeded experiment run needs, resolved and frozen."""

    pilots: tuple[Dataset, ...]
    val: Dataset
    cost_spec: CostSpec
    learner: LearnerSpec
    n0: int
    n1: int
    ratios: tuple[MixingRatio, ...]
    replicates: int
    sinkhorn_config: SinkhornConfig
    seed: int

    @property
    def m(self) -> int:
        return len(self.pilots)


def prepare_run(config: ExperimentConfig, seed: int) -> RunContext:
    """Resolve generators, the label weight, and the two fitting scales."""
    pilots, val = realize_sources(config, seed)
    if config.label_weight == "auto":
        if val.is_labeled and all(p.is_labeled for p in pilots):
            pooled = Dataset(
                features=np.concatenate([p.features for p in pilots]),
                labels=np.concatenate([p.labels for p in pilots]),
                id="pooled",
            )
            weight = default_label_weight(pooled, val, config.feature_metric)
        else:
            weight = 0.0
    else:
        weight = float(config.label_weight)
    cost_spec = CostSpec(feature_metric=config.feature_metric, label_weight=weight)
    min_pilot = min(p.n for p in pilots)
    if config.n1 == "auto":
        n0_auto, n1 = auto_scales(min_pilot)
        n0 = n0_auto if config.n0 == "auto" else int(config.n0)
    else:
        n1 = int(config.n1)
        n0 = int(round(2.0 * n1 / 3.0)) if config.n0 == "auto" else int(config.n0)
    if not (1 <= n0 < n1):
        raise ValidationError(f"scales must satisfy 1 <= n0 < n1, got {n0}, {n1}")
    if n1 > min_pilot:
        raise ValidationError(
            f"n1={n1} exceeds the smallest pilot dataset ({min_pilot} points)"
        )
    ratios = tuple(grid_ratios(len(pilots), config.grid_resolution))
    return RunContext(
        pilots=tuple(pilots),
        val=val,
        cost_spec=cost_spec,
        learner=config.learner,
        n0=n0,
        n1=n1,
        ratios=ratios,
        replicates=config.replicates,
        sinkhorn_config=config.sinkhorn,
        seed=seed,
    )


# ---------------------------------------------------------------------------
# Grid and fit data


def grid_ratios(m: int, resolution: float) -> list[MixingRatio]:
    """All simplex lattice points at the given resolution, in lexicographic order."""
    steps = 1.0 / resolution
    r = round(steps)
    if abs(steps - r) > 1e-9:
        raise ValidationError(f"1/resolution must be an integer, got {steps}")
    out: list[MixingRatio] = []

    def rec(prefix: list[int], remaining: int, slots: int):
        if slots == 1:
            out.append(MixingRatio(tuple((k / r) for k in prefix + [remaining])))
            return
        for k in range(remaining + 1):
            rec(prefix + [k], remaining - k, slots - 1)

    if m == 1:
        return [MixingRatio((1.0,))]
    rec([], r, m)
    return out


@dataclass(frozen=True)
class FitDataset:
    """Training tuples collected at the two fitting scales."""

    tuples0: tuple[TrainingTuple, ...]
    tuples1: tuple[TrainingTuple, ...]

    def at_scale(self, scale_idx: int) -> tuple[TrainingTuple, ...]:
        return self.tuples0 if scale_idx == 0 else self.tuples1

    def merged(self) -> tuple[TrainingTuple, ...]:
        return self.tuples0 + self.tuples1


def _thread_count() -> int:
    raw = os.environ.get(THREADS_ENV)
    if raw is None:
        return 1
    value = int(raw)
    if value == 0:
        return os.cpu_count() or 1
    return max(1, value)


def _grid_point(
    ctx: RunContext, scale_idx: int, budget: int, ratio_idx: int
) -> TrainingTuple | None:
    ratio = ctx.ratios[ratio_idx]
    try:
        accuracies = []
        distance = None
        for rep in range(ctx.replicates):
            comp = compose(
                list(ctx.pilots),
                MixtureSpec(
                    budget=budget,
                    ratio=ratio,
                    seed=_derive_seed(ctx.seed, 23, scale_idx, ratio_idx, rep),
                ),
            )
            if rep == 0:
                distance = sinkhorn(comp, ctx.val, ctx.cost_spec, ctx.sinkhorn_config).cost
            accuracies.append(train_eval(ctx.learner, comp, ctx.val).accuracy)
        return TrainingTuple(
            ratio=ratio,
            budget=budget,
            ot_distance=float(distance),
            performance=float(np.mean(accuracies)),
        )
    except InsufficientDataError as exc:
        logger.warning("skipping infeasible grid point %s at N=%d: %s", ratio.p, budget, exc)
        return None


def build_fit_dataset(ctx: RunContext) -> FitDataset:
    """Compose, measure OT distance, and train at every grid ratio and scale.

    Deterministic given the context seed. Infeasible grid points are skipped
    with a warning as long as at least 80% of the grid survives at each
    scale; otherwise the run aborts.
    """
    per_scale: list[tuple[TrainingTuple, ...]] = []
    workers = _thread_count()
    for scale_idx, budget in enumerate((ctx.n0, ctx.n1)):
        indices = range(len(ctx.ratios))
        if workers > 1:
            with ThreadPoolExecutor(max_workers=workers) as pool:
                results = list(
                    pool.map(lambda i: _grid_point(ctx, scale_idx, budget, i), indices)
                )
        else:
            results = [_grid_point(ctx, scale_idx, budget, i) for i in indices]
        kept = tuple(t for t in results if t is not None)
        if len(kept) < MIN_GRID_FRACTION * len(ctx.ratios):
            raise InsufficientDataError(
                f"only {len(kept)}/{len(ctx.ratios)} grid points were feasible at N={budget}"
            )
        per_scale.append(kept)
    return FitDataset(tuples0=per_scale[0], tuples1=per_scale[1])


# ---------------------------------------------------------------------------
# Splits and metrics


def extrapolation_split(
    fit: FitDataset, source_index: int, cap: float
) -> tuple[FitDataset, FitDataset]:
    """Split tuples by one source's share: below the cap trains, at or above tests."""
    if not (0.0 < cap < 1.0):
        raise ValidationError("cap must lie strictly between 0 and 1")

    def split(tuples: Sequence[TrainingTuple]):
        train = tuple(t for t in tuples if t.ratio.p[source_index] < cap)
        test = tuple(t for t in tuples if t.ratio.p[source_index] >= cap)
        return train, test

    train0, test0 = split(fit.tuples0)
    train1, test1 = split(fit.tuples1)
    if not (train0 and train1):
        raise SplitError("extrapolation split left no training tuples")
    if not (test0 or test1):
        raise SplitError("extrapolation split left no test tuples")
    return FitDataset(train0, train1), FitDataset(test0, test1)


def evaluate_mae(predicted: Sequence[float], actual: Sequence[float]) -> float:
    """Mean absolute error in percentage points."""
    pred = np.asarray(predicted, dtype=float)
    act = np.asarray(actual, dtype=float)
    if pred.shape != act.shape:
        raise ValidationError("predicted and actual lists must have equal length")
    if pred.size == 0:
        raise ValidationError("cannot compute MAE of an empty list")
    return float(np.mean(np.abs(pred - act)) * 100.0)


# ---------------------------------------------------------------------------
# Fitting and reports


@dataclass(frozen=True)
class FittedMethods:
    """Fitted surrogates: scale pairs for distance-aware kinds, single models otherwise."""

    pairs: dict[Kind, ScalePair]
    baselines: dict[Kind, PredictorModel]


def fit_methods(
    ctx: RunContext, fit: FitDataset, kinds: Sequence[Kind]
) -> FittedMethods:
    """Fit every requested kind on the given tuples.

    CS and PQ are fitted per scale; the composition-only baselines are
    fitted once on the tuples of both scales merged (their log-budget term
    absorbs the scale).
    """
    pairs: dict[Kind, ScalePair] = {}
    baselines: dict[Kind, PredictorModel] = {}
    for kind in kinds:
        if kind in DISTANCE_KINDS:
            fitter = fit_cs if kind is Kind.CS else fit_pq
            pairs[kind] = ScalePair(
                n0=ctx.n0,
                n1=ctx.n1,
                model0=fitter(fit.tuples0),
                model1=fitter(fit.tuples1),
                cost_spec=ctx.cost_spec,
            )
        elif kind in VALUE_KINDS:
            continue
        else:
            baselines[kind] = fit_baseline(kind, fit.merged(), seed=ctx.seed)
    return FittedMethods(pairs=pairs, baselines=baselines)


def _pair_predictions(pair: ScalePair, fit: FitDataset) -> tuple[list[float], list[float]]:
    """Scale-matched predictions for every tuple (projection anchors the scales)."""
    preds: list[float] = []
    actuals: list[float] = []
    by_ratio0 = {t.ratio.p: t for t in fit.tuples0}
    by_ratio1 = {t.ratio.p: t for t in fit.tuples1}
    for scale_idx, tuples in enumerate((fit.tuples0, fit.tuples1)):
        for t in tuples:
            other = (by_ratio1 if scale_idx == 0 else by_ratio0).get(t.ratio.p)
            if other is not None:
                ot0 = t.ot_distance if scale_idx == 0 else other.ot_distance
                ot1 = other.ot_distance if scale_idx == 0 else t.ot_distance
                preds.append(project_query(pair, t.ratio, t.budget, ot0, ot1))
            else:
                model = pair.model0 if scale_idx == 0 else pair.model1
                preds.append(predict(model, t.ratio, t.ot_distance, t.budget))
            actuals.append(t.performance)
    return preds, actuals


def _baseline_predictions(
    model: PredictorModel, tuples: Sequence[TrainingTuple]
) -> tuple[list[float], list[float]]:
    preds = [
        predict_performance(model, t.ratio, t.ot_distance, t.budget) for t in tuples
    ]
    return preds, [t.performance for t in tuples]


@dataclass(frozen=True)
class EvalReport:
    """Per-kind train/test MAE (percentage points) plus optional extras."""

    train_mae: dict[Kind, float]
    test_mae: dict[Kind, float]
    curve: tuple["CurveRow", ...] = ()


def mae_report(
    ctx: RunContext,
    train: FitDataset,
    test: FitDataset,
    kinds: Sequence[Kind],
) -> EvalReport:
    """Fit on the train split and score train/test MAE per predictor kind."""
    fitted = fit_methods(ctx, train, kinds)
    train_mae: dict[Kind, float] = {}
    test_mae: dict[Kind, float] = {}
    for kind, pair in fitted.pairs.items():
        preds, actuals = _pair_predictions(pair, train)
        train_mae[kind] = evaluate_mae(preds, actuals)
        preds, actuals = _pair_predictions(pair, test)
        test_mae[kind] = evaluate_mae(preds, actuals)
    for kind, model in fitted.baselines.items():
        preds, actuals = _baseline_predictions(model, train.merged())
        train_mae[kind] = evaluate_mae(preds, actuals)
        preds, actuals = _baseline_predictions(model, test.merged())
        test_mae[kind] = evaluate_mae(preds, actuals)
    return EvalReport(train_mae=train_mae, test_mae=test_mae)


@dataclass(frozen=True)
class CurveRow:
    count: int
    kind: Kind
    test_mae: float | None
    status: str  # "ok" or "unfit"


def efficiency_curve(
    ctx: RunContext,
    train: FitDataset,
    test: FitDataset,
    kinds: Sequence[Kind],
    sample_counts: Sequence[int],
    seed: int = 0,
) -> tuple[CurveRow, ...]:
    """Test MAE of each kind fitted on seeded random tuple subsets of each size.

    Counts below a kind's parameter requirement produce an ``unfit`` row.
    Distance-aware kinds subsample per scale; baselines subsample the merged
    tuple list.
    """
    rows: list[CurveRow] = []
    for count_idx, count in enumerate(sample_counts):
        for kind in kinds:
            if kind in VALUE_KINDS:
                continue
            needed = param_count(kind, ctx.m)
            if count < needed:
                rows.append(CurveRow(count=count, kind=kind, test_mae=None, status="unfit"))
                continue
            rng = np.random.default_rng([seed, 31, count_idx])
            try:
                if kind in DISTANCE_KINDS:
                    if count > min(len(train.tuples0), len(train.tuples1)):
                        rows.append(CurveRow(count, kind, None, "unfit"))
                        continue
                    idx0 = rng.permutation(len(train.tuples0))[:count]
                    idx1 = rng.permutation(len(train.tuples1))[:count]
                    subset = FitDataset(
                        tuples0=tuple(train.tuples0[i] for i in idx0),
                        tuples1=tuple(train.tuples1[i] for i in idx1),
                    )
                    fitted = fit_methods(ctx, subset, [kind])
                    preds, actuals = _pair_predictions(fitted.pairs[kind], test)
                else:
                    merged = train.merged()
                    if count > len(merged):
                        rows.append(CurveRow(count, kind, None, "unfit"))
                        continue
                    idx = rng.permutation(len(merged))[:count]
                    model = fit_baseline(kind, [merged[i] for i in idx], seed=seed)
                    preds, actuals = _baseline_predictions(model, test.merged())
                rows.append(
                    CurveRow(count, kind, evaluate_mae(preds, actuals), "ok")
                )
            except Exception as exc:  # rank-deficient subsets etc. are reported, not fatal
                logger.warning("curve fit failed for %s at count %d: %s", kind.value, count, exc)
                rows.append(CurveRow(count, kind, None, "unfit"))
    return tuple(rows)


# ---------------------------------------------------------------------------
# Selection comparison


def scale_distances(ctx: RunContext, ratio: MixingRatio) -> tuple[float, float]:
    """OT distances of seeded compositions at both fitting scales for a ratio."""
    out = []
    for scale_idx, budget in enumerate((ctx.n0, ctx.n1)):
        comp = compose(
            list(ctx.pilots),
            MixtureSpec(
                budget=budget, ratio=ratio, seed=_derive_seed(ctx.seed, 37, scale_idx)
            ),
        )
        out.append(sinkhorn(comp, ctx.val, ctx.cost_spec, ctx.sinkhorn_config).cost)
    return out[0], out[1]


def subset_utility(ctx: RunContext, budget: int):
    """Utility on source subsets: learner accuracy on the equal-budget union."""

    def utility(subset: tuple[int, ...]) -> float:
        if not subset:
            return 0.0
        ratio = MixingRatio(
            tuple(1.0 / len(subset) if i in subset else 0.0 for i in range(ctx.m))
        )
        comp = compose(
            list(ctx.pilots),
            MixtureSpec(budget=budget, ratio=ratio, seed=_derive_seed(ctx.seed, 41)),
        )
        return train_eval(ctx.learner, comp, ctx.val).accuracy

    return utility


@dataclass(frozen=True)
class ComparisonRow:
    kind: Kind
    ratio: MixingRatio
    predicted: float
    actual: float | None


def compare_selection(
    ctx: RunContext,
    fit: FitDataset,
    kinds: Sequence[Kind],
    budget: int,
    optimizer: OptimizerConfig,
) -> tuple[ComparisonRow, ...]:
    """Every method picks a mixture for the budget; identical tuples feed all fits.

    CS/PQ optimize their projected prediction by gradient ascent; the
    composition-only baselines take the argmax of their own surrogate over
    the fitting grid; LOO/Shapley normalize their source values. The actual
    accuracy is measured by composing at the budget when the pilot data
    allows it.
    """
    fitted = fit_methods(ctx, fit, [k for k in kinds if k not in VALUE_KINDS])
    rows: list[ComparisonRow] = []
    for kind in kinds:
        if kind in DISTANCE_KINDS:
            result = select_fixed_budget(
                fitted.pairs[kind],
                budget,
                list(ctx.pilots),
                ctx.val,
                optimizer,
                sinkhorn_config=ctx.sinkhorn_config,
            )
            ratio, predicted = result.ratio, result.predicted_performance
        elif kind in VALUE_KINDS:
            utility = subset_utility(ctx, ctx.n1)
            values = (
                loo_values(utility, ctx.m)
                if kind is Kind.LOO
                else shapley_values(utility, ctx.m)
            )
            ratio = selection_ratio_from_values(values)
            model = fit_value_based(kind, values, fit.merged())
            predicted = predict(model, ratio, 0.0, budget)
        else:
            model = fitted.baselines[kind]
            best = max(
                ctx.ratios,
                key=lambda r: predict_performance(model, r, 0.0, budget),
            )
            ratio = best
            predicted = predict_performance(model, best, 0.0, budget)
        actual = None
        try:
            comp = compose(
                list(ctx.pilots),
                MixtureSpec(budget=budget, ratio=ratio, seed=_derive_seed(ctx.seed, 43)),
            )
            actual = train_eval(ctx.learner, comp, ctx.val).accuracy
        except InsufficientDataError:
            pass
        rows.append(ComparisonRow(kind=kind, ratio=ratio, predicted=predicted, actual=actual))
    return tuple(rows)


# ---------------------------------------------------------------------------
# CSV schemas


def write_fit_csv(fit: FitDataset, path: str | Path) -> None:
    tuples = fit.tuples0 + fit.tuples1
    m = tuples[0].ratio.m
    with Path(path).open("w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(
            ["scale", "budget"] + [f"ratio_{i}" for i in range(m)] + ["ot_distance", "performance"]
        )
        for scale_idx, scale_tuples in enumerate((fit.tuples0, fit.tuples1)):
            for t in scale_tuples:
                writer.writerow(
                    [scale_idx, t.budget]
                    + [repr(x) for x in t.ratio.p]
                    + [repr(t.ot_distance), repr(t.performance)]
                )


def read_fit_csv(path: str | Path) -> FitDataset:
    per_scale: dict[int, list[TrainingTuple]] = {0: [], 1: []}
    with Path(path).open("r", newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader)
        m = len(header) - 4
        for row in reader:
            scale_idx = int(row[0])
            per_scale[scale_idx].append(
                TrainingTuple(
                    ratio=MixingRatio(tuple(float(x) for x in row[2 : 2 + m])),
                    budget=int(row[1]),
                    ot_distance=float(row[2 + m]),
                    performance=float(row[3 + m]),
                )
            )
    return FitDataset(tuples0=tuple(per_scale[0]), tuples1=tuple(per_scale[1]))


def write_projection_csv(
    rows: Sequence[tuple[MixingRatio, int, float, float | None]], path: str | Path
) -> None:
    m = rows[0][0].m
    with Path(path).open("w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow([f"ratio_{i}" for i in range(m)] + ["target_n", "predicted", "actual"])
        for ratio, target_n, predicted, actual in rows:
            writer.writerow(
                [repr(x) for x in ratio.p]
                + [target_n, repr(predicted), "" if actual is None else repr(actual)]
            )


def write_trajectory_csv(result: SelectionResult, path: str | Path) -> None:
    m = result.ratio.m
    with Path(path).open("w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["iter"] + [f"p_{i}" for i in range(m)] + ["objective"])
        for pt in result.trajectory:
            writer.writerow([pt.iteration] + [repr(x) for x in pt.ratio.p] + [repr(pt.objective)])


def selection_result_json(result: SelectionResult) -> str:
    return json.dumps(
        {
            "ratio": [float(x) for x in result.ratio.p],
            "predicted_performance": float(result.predicted_performance),
            "converged": result.converged,
            "iterations": result.iterations,
        }
    )
