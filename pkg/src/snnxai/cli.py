"""Command-line entry points: gen-data, train, explain, evaluate, render."""
from __future__ import annotations

import argparse
import logging
import sys
from dataclasses import replace
from pathlib import Path
from typing import List, Optional

import numpy as np

from . import datasets, io
from .attribution import Variant, explain, make_explainer
from .config import RunConfig, load_config, preset
from .datasets import (ParseError, OverlapError, SYNTHETIC_CLASSES, read_dataset_csv,
                       sample_eval_set, split_sequential, write_dataset_csv)
from .evaluation import METRICS, evaluate, window_of
from .lif import forward, init_network
from .render import render_svg
from .train import (TrainingError, confidence_interval, evaluate_series, majority_baseline,
                    train)

log = logging.getLogger("snnxai")


class UsageError(Exception):
    """Bad arguments; reported with exit status 2."""


def _dataset_mode(series) -> str:
    return "synthetic" if list(series.class_names) == SYNTHETIC_CLASSES else "adl"


def _run_config(args, mode: str) -> RunConfig:
    cfg = preset(mode)
    if args.config:
        cfg = load_config(args.config, cfg)
    if args.seed is not None:
        cfg = replace(cfg, dataset=replace(cfg.dataset, seed=args.seed),
                      train=replace(cfg.train, seed=args.seed),
                      eval=replace(cfg.eval, seed=args.seed))
    if args.out is not None:
        cfg = replace(cfg, out=args.out)
    return cfg


def _out_dir(cfg: RunConfig) -> Path:
    out = Path(cfg.out)
    out.mkdir(parents=True, exist_ok=True)
    return out


def _splits(series, mode: str):
    fractions = [0.7, 0.3] if mode == "synthetic" else [0.6, 0.2, 0.2]
    parts = split_sequential(series, fractions)
    if len(parts) == 2:
        return parts[0], None, parts[1]
    return tuple(parts)


# ---------------------------------------------------------------------------
# commands
# ---------------------------------------------------------------------------

def cmd_gen_data(args) -> int:
    if args.mode == "adl" and not (args.description and args.sensors and args.activities):
        raise UsageError("--mode adl needs --description, --sensors and --activities")
    cfg = _run_config(args, args.mode)
    spec = cfg.dataset
    overrides = {k: getattr(args, k) for k in ("steps", "max_duration", "subject",
                                               "description", "sensors", "activities")
                 if getattr(args, k) is not None}
    spec = replace(spec, **overrides)
    spec.check_inputs()
    if spec.mode == "synthetic":
        series = datasets.generate_synthetic(spec.steps, spec.max_duration, spec.seed)
    else:
        series = datasets.ingest_adl(spec.description, spec.sensors, spec.activities,
                                     spec.subject or "A")
    path = _out_dir(cfg) / (args.name or f"{spec.mode}.csv")
    write_dataset_csv(series, path)

    counts = np.bincount(series.labels, minlength=series.n_classes)
    print(f"wrote {path}: {series.n_steps} steps, {series.n_channels} channels, "
          f"{series.n_classes} classes")
    print("channels: " + ", ".join(series.channel_names))
    for name, n in zip(series.class_names, counts):
        print(f"  {name}: {n}")
    bounds = np.round(np.cumsum([0.0] + spec.splits) * series.n_steps).astype(int)
    names = ["train", "test"] if len(spec.splits) == 2 else ["train", "val", "test"]
    for name, a, b in zip(names, bounds[:-1], bounds[1:]):
        print(f"  {name}: [{a}, {b})")
    return 0


def cmd_train(args) -> int:
    series = read_dataset_csv(args.data)
    mode = _dataset_mode(series)
    cfg = _run_config(args, mode)
    if args.hidden:
        cfg = replace(cfg, hidden=tuple(int(h) for h in args.hidden.split(",")))
    if args.epochs is not None:
        cfg = replace(cfg, train=replace(cfg.train, max_epochs=args.epochs,
                                         patience=min(cfg.train.patience, args.epochs)))
    train_set, val_set, test_set = _splits(series, mode)
    sizes = cfg.layer_sizes(series.n_channels, series.n_classes)
    network = init_network(sizes, cfg.lif, seed=cfg.train.seed)
    try:
        best, report = train(network, train_set, val_set, cfg.train)
    except TrainingError as exc:
        print(f"error: training diverged: {exc}", file=sys.stderr)
        return 1

    scores = {}
    for name, part in (("train", train_set), ("val", val_set), ("test", test_set)):
        if part is None:
            continue
        loss, ba, _ = evaluate_series(best, part)
        scores[name] = {"loss": loss, "ba": ba, "ci": confidence_interval(ba, part.n_steps),
                        "n": part.n_steps}
    baseline = majority_baseline(train_set.labels, test_set.labels, series.n_classes)
    out = _out_dir(cfg)
    provenance = {"seed": cfg.train.seed, "epochs": len(report.train_loss),
                  "best_epoch": report.best_epoch, "dataset": Path(args.data).name,
                  "test_ba": scores["test"]["ba"]}
    io.save_model(best, out / "model.json", provenance)
    io.save_report({"config": cfg.to_dict(), "epochs": report.to_dict(), "scores": scores,
                    "majority_baseline": baseline}, out / "report.json")
    print(f"test balanced accuracy {scores['test']['ba']:.4f} ± {scores['test']['ci']:.4f} "
          f"(majority baseline {baseline:.4f}) after {len(report.train_loss)} epochs")
    return 0


def cmd_explain(args) -> int:
    network = io.load_model(args.model)
    series = read_dataset_csv(args.data)
    cfg = _run_config(args, _dataset_mode(series))
    window = cfg.eval.window
    if not window <= args.t < series.n_steps:
        raise UsageError(f"t={args.t} must lie in [{window}, {series.n_steps - 1}] "
                         f"so that a full {window}-step window precedes it")
    sample = datasets.EvalSample(series, args.t, int(series.labels[args.t]))
    x = window_of(sample, window)
    amap = explain(network, x, Variant(args.method))
    start = args.t - window + 1
    out = _out_dir(cfg)
    stem = args.name or f"attribution_t{args.t}_{args.method}"
    io.write_attribution_csv(amap, out / f"{stem}.csv", window_start=start)
    pred = _prediction(network, x)
    cls = pred if args.cls is None else args.cls
    if not 0 <= cls < series.n_classes:
        raise UsageError(f"--class must lie in [0, {series.n_classes - 1}]")
    print(f"wrote {out / (stem + '.csv')} (predicted class {series.class_names[pred]})")
    if args.render:
        svg = render_svg(amap.values[cls], x, series.channel_names,
                         title=f"{args.method} class {series.class_names[cls]} t={args.t}",
                         first_step=start)
        (out / f"{stem}.svg").write_text(svg, encoding="utf-8")
        print(f"wrote {out / (stem + '.svg')}")
    return 0


def _prediction(network, x) -> int:
    return int(np.argmax(forward(network, x).out_potentials[:, -1]))


def cmd_evaluate(args) -> int:
    network = io.load_model(args.model)
    series = read_dataset_csv(args.data)
    mode = _dataset_mode(series)
    cfg = _run_config(args, mode)
    methods = args.methods.split(",")
    metrics = args.metrics.split(",")
    bad = [m for m in methods if m not in {v.value for v in Variant}]
    bad += [m for m in metrics if m not in METRICS]
    if bad:
        raise UsageError(f"unknown method/metric names: {', '.join(bad)}")
    if network.n_inputs != series.n_channels or network.n_classes != series.n_classes:
        raise UsageError("model and dataset are incompatible")
    *_, test_set = _splits(series, mode)
    samples = sample_eval_set(test_set, mode, seed=cfg.eval.seed, window=cfg.eval.window,
                              per_class=args.per_class or cfg.samples_per_class)
    if args.limit:
        samples = samples[:args.limit]
    eval_cfg = replace(cfg.eval, dt_seconds=series.dt_seconds)
    rows, failed = [], 0
    for method in methods:
        try:
            results = evaluate(network, {method: make_explainer(method)}, samples, metrics,
                               eval_cfg)
        except Exception as exc:  # keep going; report through the exit status
            log.error("%s failed: %s", method, exc)
            failed += 1
            continue
        for r in results:
            rows.append({"metric": r.metric, "explainer": r.explainer,
                         "model": Path(args.model).stem, "dataset": Path(args.data).stem,
                         "value": r.value, "ci": r.ci, "n": r.n})
    path = _out_dir(cfg) / (args.name or "results.csv")
    io.write_results_csv(rows, path)
    for row in rows:
        ci = "" if row["ci"] is None else f" ± {row['ci']:.4f}"
        print(f"{row['metric']:<20} {row['explainer']:<7} {row['value']:.4f}{ci}")
    print(f"wrote {path}")
    return 1 if failed else 0


def cmd_render(args) -> int:
    amap, start = io.read_attribution_csv(args.attribution)
    series = read_dataset_csv(args.data)
    cfg = _run_config(args, _dataset_mode(series))
    T = amap.values.shape[2]
    x = series.data[:, start:start + T]
    if x.shape[1] != T or x.shape[0] != amap.values.shape[1]:
        raise UsageError("attribution does not fit the dataset")
    cls = args.cls if args.cls is not None else 0
    svg = render_svg(amap.values[cls], x, series.channel_names,
                     title=f"{amap.variant.value} class {series.class_names[cls]}",
                     first_step=start)
    path = _out_dir(cfg) / (args.name or Path(args.attribution).with_suffix(".svg").name)
    path.write_text(svg, encoding="utf-8")
    print(f"wrote {path}")
    return 0


# ---------------------------------------------------------------------------
# parser
# ---------------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="JSON file overriding the dataset preset")
    common.add_argument("--seed", type=int, help="seed for every stochastic step")
    common.add_argument("--out", help="output directory (default: current)")
    common.add_argument("--name", help="output file name")
    common.add_argument("-v", "--verbose", action="store_true")

    parser = argparse.ArgumentParser(prog="snnxai", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("gen-data", parents=[common], help="write a dataset CSV")
    p.add_argument("--mode", choices=["synthetic", "adl"], default="synthetic")
    p.add_argument("--steps", type=int)
    p.add_argument("--max-duration", type=int)
    p.add_argument("--subject", choices=["A", "B"])
    p.add_argument("--description", help="subject description file")
    p.add_argument("--sensors", help="sensor events file")
    p.add_argument("--activities", help="activities of daily living file")
    p.set_defaults(func=cmd_gen_data)

    p = sub.add_parser("train", parents=[common], help="train a network on a dataset CSV")
    p.add_argument("--data", required=True)
    p.add_argument("--hidden", help="comma-separated hidden layer sizes")
    p.add_argument("--epochs", type=int, help="maximum number of epochs")
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("explain", parents=[common], help="attribution map for one step")
    p.add_argument("--model", required=True)
    p.add_argument("--data", required=True)
    p.add_argument("--t", type=int, required=True, help="series step to explain")
    p.add_argument("--method", choices=[v.value for v in Variant], default="tsa-ns")
    p.add_argument("--class", dest="cls", type=int, help="class slice to render")
    p.add_argument("--render", action="store_true", help="also write an SVG heatmap")
    p.set_defaults(func=cmd_explain)

    p = sub.add_parser("evaluate", parents=[common], help="explanation quality metrics")
    p.add_argument("--model", required=True)
    p.add_argument("--data", required=True)
    p.add_argument("--methods", default="tsa-s,tsa-ns,sam")
    p.add_argument("--metrics", default=",".join(METRICS))
    p.add_argument("--per-class", type=int, help="synthetic samples per class")
    p.add_argument("--limit", type=int, help="use only the first N samples")
    p.set_defaults(func=cmd_evaluate)

    p = sub.add_parser("render", parents=[common], help="SVG heatmap of an attribution CSV")
    p.add_argument("--attribution", required=True)
    p.add_argument("--data", required=True)
    p.add_argument("--class", dest="cls", type=int)
    p.set_defaults(func=cmd_render)
    return parser


def main(argv: Optional[List[str]] = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except UsageError as exc:
        parser.error(str(exc))
    except (OSError, ValueError, ParseError, OverlapError, io.ArtifactError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
