"""Command-line interface.

Subcommands
-----------
gen       write the configured synthetic source/validation CSVs
fit       build fit tuples at both scales and fit the configured predictors
predict   evaluate one fitted model at a (ratio, distance, budget) query
project   sweep projections over the configured target scales
select    fixed-budget mixture optimization; writes trajectory and result
budget    flexible-budget line search for a target performance
eval      MAE tables with the extrapolation split plus the efficiency curve
compare   all methods pick a mixture for the same budget, side by side

Exit codes: 0 success, 1 usage error, 2 numeric or fitting failure.
All data files are written with full float precision and no timestamps, so
identical configs produce byte-identical outputs.
"""

from __future__ import annotations

import argparse
import csv
import json
import sys
from dataclasses import replace
from pathlib import Path

import numpy as np

from . import harness
from .dataspace import MixingRatio, write_dataset_csv
from .errors import OtmixError
from .predictors import (
    Kind,
    load_model,
    predict_performance,
    save_model,
)
from .projection import project_query
from .selection import BudgetSearchConfig
from .transport import sinkhorn


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="otmix",
        description="Performance prediction and data-source selection over partially revealed sources",
    )
    parser.add_argument("--config", type=Path, help="experiment config JSON")
    parser.add_argument("--seed", type=int, default=None, help="override the config seed")
    parser.add_argument("--out", type=Path, default=Path("out"), help="output directory")
    parser.add_argument(
        "--dump-transport",
        type=Path,
        default=None,
        help="write dual potentials of a representative transport solve to this CSV",
    )
    sub = parser.add_subparsers(dest="command", required=True)
    for name in ("gen", "fit", "project", "select", "budget", "eval", "compare"):
        sub.add_parser(name)
    predict_p = sub.add_parser("predict")
    predict_p.add_argument("--model", type=Path, required=True, help="model JSON path")
    predict_p.add_argument("--ratio", type=str, required=True, help="comma-separated mixture, e.g. 0.5,0.3,0.2")
    predict_p.add_argument("--ot", type=float, default=0.0, help="OT distance input")
    predict_p.add_argument("--budget", type=int, default=1, help="data scale for baselines")
    return parser


def _require_config(args) -> harness.ExperimentConfig:
    if args.config is None:
        raise SystemExit(2)  # mapped to usage error below
    config = harness.load_config(args.config)
    if args.seed is not None:
        config = replace(config, seed=args.seed, seeds=(args.seed,))
    return config


def _context(config: harness.ExperimentConfig) -> harness.RunContext:
    return harness.prepare_run(config, config.seed)


def _dump_transport(ctx: harness.RunContext, path: Path) -> None:
    from .dataspace import MixtureSpec, compose

    comp = compose(
        list(ctx.pilots),
        MixtureSpec(budget=ctx.n1, ratio=MixingRatio.uniform(ctx.m), seed=ctx.seed),
    )
    result = sinkhorn(comp, ctx.val, ctx.cost_spec, ctx.sinkhorn_config)
    with path.open("w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["side", "index", "dual"])
        for i, v in enumerate(result.dual_train):
            writer.writerow(["train", i, repr(float(v))])
        for j, v in enumerate(result.dual_val):
            writer.writerow(["val", j, repr(float(v))])


def _cmd_gen(args) -> int:
    config = _require_config(args)
    out = args.out
    out.mkdir(parents=True, exist_ok=True)
    pilots, val = harness.realize_sources(config, config.seed)
    for gen_cfg, pilot in zip(config.sources, pilots):
        write_dataset_csv(pilot, out / f"{gen_cfg.name}.csv")
    write_dataset_csv(val, out / "val.csv")
    print(f"wrote {len(pilots)} source CSVs and val.csv to {out}")
    return 0


def _fit_paths(out: Path, kind: Kind) -> tuple[Path, Path] | Path:
    if kind in harness.DISTANCE_KINDS:
        return out / f"model_{kind.value}_n0.json", out / f"model_{kind.value}_n1.json"
    return out / f"model_{kind.value}.json"


def _cmd_fit(args) -> int:
    config = _require_config(args)
    out = args.out
    out.mkdir(parents=True, exist_ok=True)
    ctx = _context(config)
    fit = harness.build_fit_dataset(ctx)
    harness.write_fit_csv(fit, out / "fit_tuples.csv")
    fitted = harness.fit_methods(ctx, fit, config.predictor_kinds)
    for kind, pair in fitted.pairs.items():
        p0, p1 = _fit_paths(out, kind)
        save_model(pair.model0, p0)
        save_model(pair.model1, p1)
    for kind, model in fitted.baselines.items():
        save_model(model, _fit_paths(out, kind))
    if args.dump_transport is not None:
        _dump_transport(ctx, args.dump_transport)
    print(f"fit {len(fitted.pairs) + len(fitted.baselines)} predictors from "
          f"{len(fit.tuples0) + len(fit.tuples1)} tuples; outputs in {out}")
    return 0


def _cmd_predict(args) -> int:
    model = load_model(args.model)
    ratio = MixingRatio(tuple(float(x) for x in args.ratio.split(",")))
    value = predict_performance(model, ratio, args.ot, args.budget)
    print(json.dumps({"kind": model.kind.value, "prediction": value}))
    return 0


def _load_pair(ctx: harness.RunContext, out: Path, kind: Kind):
    from .projection import ScalePair

    p0, p1 = _fit_paths(out, kind)
    return ScalePair(
        n0=ctx.n0, n1=ctx.n1, model0=load_model(p0), model1=load_model(p1), cost_spec=ctx.cost_spec
    )


def _cmd_project(args) -> int:
    config = _require_config(args)
    if not config.project_targets:
        print("config has no project.target_ns", file=sys.stderr)
        return 1
    out = args.out
    out.mkdir(parents=True, exist_ok=True)
    ctx = _context(config)
    rows = []
    kind = config.select_kind
    if kind in harness.DISTANCE_KINDS:
        pair = _load_pair(ctx, out, kind)
    else:
        model = load_model(_fit_paths(out, kind))
    for ratio in ctx.ratios:
        if kind in harness.DISTANCE_KINDS:
            ot0, ot1 = harness.scale_distances(ctx, ratio)
        for target_n in config.project_targets:
            if kind in harness.DISTANCE_KINDS:
                predicted = project_query(pair, ratio, target_n, ot0, ot1)
            else:
                predicted = predict_performance(model, ratio, 0.0, target_n)
            actual = None
            if config.project_with_actual:
                from .dataspace import MixtureSpec, compose
                from .learners import train_eval

                comp = compose(
                    list(ctx.pilots),
                    MixtureSpec(budget=target_n, ratio=ratio, seed=ctx.seed),
                )
                actual = train_eval(ctx.learner, comp, ctx.val).accuracy
            rows.append((ratio, target_n, predicted, actual))
    harness.write_projection_csv(rows, out / "projection.csv")
    print(f"wrote {len(rows)} projections to {out / 'projection.csv'}")
    return 0


def _cmd_select(args) -> int:
    config = _require_config(args)
    if config.select_budget is None:
        print("config has no select.budget", file=sys.stderr)
        return 1
    out = args.out
    out.mkdir(parents=True, exist_ok=True)
    ctx = _context(config)
    fit = harness.build_fit_dataset(ctx)
    fitted = harness.fit_methods(ctx, fit, [config.select_kind])
    pair = fitted.pairs[config.select_kind]
    from .selection import select_fixed_budget

    result = select_fixed_budget(
        pair,
        config.select_budget,
        list(ctx.pilots),
        ctx.val,
        config.optimizer,
        sinkhorn_config=ctx.sinkhorn_config,
    )
    harness.write_trajectory_csv(result, out / "trajectory.csv")
    (out / "selection.json").write_text(harness.selection_result_json(result) + "\n")
    if args.dump_transport is not None:
        _dump_transport(ctx, args.dump_transport)
    print(
        f"selected ratio {tuple(round(x, 6) for x in result.ratio.p)} with predicted "
        f"performance {min(max(result.predicted_performance, 0.0), 1.0):.6f}"
    )
    return 0


def _cmd_budget(args) -> int:
    config = _require_config(args)
    if config.budget_target is None or not config.budget_grid:
        print("config has no budget_search.target / n_grid", file=sys.stderr)
        return 1
    out = args.out
    out.mkdir(parents=True, exist_ok=True)
    ctx = _context(config)
    fit = harness.build_fit_dataset(ctx)
    fitted = harness.fit_methods(ctx, fit, [config.select_kind])
    pair = fitted.pairs[config.select_kind]
    search = BudgetSearchConfig(
        target=config.budget_target, n_grid=config.budget_grid, inner=config.optimizer
    )
    budget, result = harness.search_min_budget(
        pair, list(ctx.pilots), ctx.val, search, sinkhorn_config=ctx.sinkhorn_config
    )
    payload = json.loads(harness.selection_result_json(result))
    payload["budget"] = budget
    (out / "budget.json").write_text(json.dumps(payload) + "\n")
    print(f"target {config.budget_target} reachable at N={budget}")
    return 0


def _write_mae_csv(path: Path, reports: dict[int, harness.EvalReport]) -> None:
    kinds = sorted({k for rep in reports.values() for k in rep.train_mae}, key=lambda k: k.value)
    with path.open("w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["seed", "kind", "train_mae", "test_mae"])
        for seed, rep in reports.items():
            for kind in kinds:
                writer.writerow(
                    [seed, kind.value, repr(rep.train_mae[kind]), repr(rep.test_mae[kind])]
                )
        for kind in kinds:
            train_med = float(np.median([rep.train_mae[kind] for rep in reports.values()]))
            test_med = float(np.median([rep.test_mae[kind] for rep in reports.values()]))
            writer.writerow(["median", kind.value, repr(train_med), repr(test_med)])


def _cmd_eval(args) -> int:
    config = _require_config(args)
    out = args.out
    out.mkdir(parents=True, exist_ok=True)
    reports: dict[int, harness.EvalReport] = {}
    curve_rows = []
    for seed in config.seeds:
        ctx = harness.prepare_run(config, seed)
        fit = harness.build_fit_dataset(ctx)
        train, test = harness.extrapolation_split(
            fit, config.extrapolation_source, config.extrapolation_cap
        )
        reports[seed] = harness.mae_report(ctx, train, test, config.predictor_kinds)
        counts = sorted({5, 10, 15, 25, min(len(train.tuples0), len(train.tuples1))})
        rows = harness.efficiency_curve(
            ctx, train, test, config.predictor_kinds, counts, seed=seed
        )
        curve_rows.extend((seed, r) for r in rows)
    _write_mae_csv(out / "mae.csv", reports)
    with (out / "efficiency.csv").open("w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["seed", "count", "kind", "test_mae", "status"])
        for seed, row in curve_rows:
            writer.writerow(
                [
                    seed,
                    row.count,
                    row.kind.value,
                    "" if row.test_mae is None else repr(row.test_mae),
                    row.status,
                ]
            )
    print(f"wrote {out / 'mae.csv'} and {out / 'efficiency.csv'}")
    return 0


def _cmd_compare(args) -> int:
    config = _require_config(args)
    if config.select_budget is None:
        print("config has no select.budget", file=sys.stderr)
        return 1
    out = args.out
    out.mkdir(parents=True, exist_ok=True)
    ctx = _context(config)
    fit = harness.build_fit_dataset(ctx)
    rows = harness.compare_selection(
        ctx, fit, config.predictor_kinds, config.select_budget, config.optimizer
    )
    with (out / "compare.csv").open("w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(
            ["kind"] + [f"ratio_{i}" for i in range(ctx.m)] + ["predicted", "actual"]
        )
        for row in rows:
            writer.writerow(
                [row.kind.value]
                + [repr(x) for x in row.ratio.p]
                + [repr(row.predicted), "" if row.actual is None else repr(row.actual)]
            )
    print(f"wrote {out / 'compare.csv'}")
    return 0


_COMMANDS = {
    "gen": _cmd_gen,
    "fit": _cmd_fit,
    "predict": _cmd_predict,
    "project": _cmd_project,
    "select": _cmd_select,
    "budget": _cmd_budget,
    "eval": _cmd_eval,
    "compare": _cmd_compare,
}


def run_cli(argv: list[str] | None = None) -> int:
    """Parse and dispatch; returns the process exit code."""
    parser = _build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return 0 if exc.code == 0 else 1
    try:
        return _COMMANDS[args.command](args)
    except SystemExit:
        print("missing or invalid --config", file=sys.stderr)
        return 1
    except (FileNotFoundError, json.JSONDecodeError, KeyError) as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return 1
    except OtmixError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


def main() -> None:
    sys.exit(run_cli(sys.argv[1:]))
