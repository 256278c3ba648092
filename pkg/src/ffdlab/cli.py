"""Command-line interface.

One verb per pipeline stage plus ``run`` for the whole chain and ``synth``
for seeded test data.  Artifacts are CSV or JSON with documented headers;
every verb reads the same bar-CSV format that ``synth`` and ``resample``
emit, so stages chain through files.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

import numpy as np

from . import __version__, artifacts
from .backtest import (
    CostModel,
    GaConfig,
    StrategyParams,
    ga_optimize,
    run_backtest,
    strategy_objective,
)
from .errors import FfdlabError
from .features import assemble_dataset, compute_indicators
from .fracdiff import ffd_transform, generate_weights
from .labeling import (
    TripleBarrierConfig,
    ema_volatility,
    fixed_horizon_labels,
    triple_barrier_labels,
)
from .market_data import load_csv, resample
from .model import (
    MlpConfig,
    classification_report,
    format_report,
    load_model,
    predict,
    report_to_dict,
    save_model,
    train,
)
from .pipeline import PipelineConfig, run_pipeline
from .stationarity import d_sweep
from .synth import generate_synthetic


def _parse_schema(text: str | None) -> dict:
    if not text:
        return {}
    schema = {}
    for pair in text.split(","):
        key, _, value = pair.partition("=")
        if not value:
            raise argparse.ArgumentTypeError(f"schema entry {pair!r} is not key=value")
        schema[key.strip()] = value.strip()
    return schema


def _parse_grid(text: str) -> np.ndarray:
    try:
        start, stop, step = (float(v) for v in text.split(":"))
    except ValueError as exc:
        raise argparse.ArgumentTypeError(f"grid {text!r} is not start:stop:step") from exc
    grid = np.round(np.arange(start, stop + 1e-12, step), 12)
    return grid


def _parse_params(text: str) -> tuple[float, float, float, float]:
    parts = [float(v) for v in text.split(",")]
    if len(parts) != 4:
        raise argparse.ArgumentTypeError("params must be pa,pb,pc,pd")
    return tuple(parts)


def _parse_bounds(text: str, n: int = 4) -> list[tuple[float, float]]:
    ranges = text.split(",")
    if len(ranges) == 1:
        ranges = ranges * n
    if len(ranges) != n:
        raise argparse.ArgumentTypeError(f"need 1 or {n} bounds, got {len(ranges)}")
    out = []
    for item in ranges:
        lo, _, hi = item.partition(":")
        out.append((float(lo), float(hi)))
    return out


def _load_bars(args):
    return load_csv(args.input, schema=_parse_schema(args.schema), symbol=getattr(args, "symbol", None))


def _add_input_args(parser):
    parser.add_argument("--input", required=True, help="bar CSV file")
    parser.add_argument("--schema", default=None, help="column mapping, e.g. timestamp=time,close=last")


def _column(series, name: str) -> np.ndarray:
    arrays = {
        "open": series.opens,
        "high": series.highs,
        "low": series.lows,
        "close": series.closes,
        "volume": series.volumes,
    }
    if name not in arrays:
        raise FfdlabError(f"unknown column {name!r}")
    return arrays[name]


def cmd_synth(args) -> int:
    series = generate_synthetic(
        kind=args.kind,
        length=args.length,
        seed=args.seed,
        sigma=args.sigma,
        mu=args.mu,
        phi=args.phi,
        start_price=args.start_price,
        period_minutes=args.period,
    )
    artifacts.write_bars_csv(Path(args.out), series)
    print(f"wrote {len(series)} {args.kind} bars to {args.out}")
    return 0


def cmd_resample(args) -> int:
    series = _load_bars(args)
    out = resample(series, args.period)
    artifacts.write_bars_csv(Path(args.out), out)
    print(f"resampled {len(series)} bars to {len(out)} {args.period}-minute bars")
    return 0


def cmd_fracdiff(args) -> int:
    series = _load_bars(args)
    x = _column(series, args.column)
    if args.log:
        x = np.log(x)
    max_window = args.max_window or len(x) // 2
    weights = generate_weights(args.d, args.tau, max_len=max_window + 1)
    ffd = ffd_transform(x, weights)
    artifacts.write_fracdiff_csv(Path(args.out), series, ffd)
    if args.weights_out:
        artifacts.write_weights_csv(Path(args.weights_out), weights)
    print(f"d={args.d} tau={args.tau} window={weights.cutoff} values={len(ffd.values)}")
    return 0


def cmd_adf_sweep(args) -> int:
    series = _load_bars(args)
    x = _column(series, args.column)
    rows = d_sweep(x, _parse_grid(args.grid), args.tau, log=args.log, max_window=args.max_window)
    artifacts.write_sweep_csv(Path(args.out_curve), rows)
    artifacts.write_sweep_table_csv(Path(args.out_table), rows)
    for row in rows:
        flag = "pass" if row.passes else "fail"
        print(f"d={row.d:.2f} adf={row.adf_statistic:9.4f} corr={row.correlation:7.4f} {flag}")
    return 0


def cmd_label(args) -> int:
    series = _load_bars(args)
    if args.method == "triple-barrier":
        cfg = TripleBarrierConfig(
            h=args.h, upfactor=args.up, lowerfactor=-abs(args.down), vol_span=args.vol_span
        )
        events = triple_barrier_labels(series, cfg)
        artifacts.write_labels_csv(Path(args.out), series, events)
        counts = {lab: sum(1 for e in events if e.label == lab) for lab in (-1, 0, 1)}
        print(f"{len(events)} events: {counts}")
    else:
        labels = fixed_horizon_labels(series, args.h, args.threshold)
        ts = series.timestamps[: len(labels)]
        artifacts.write_rows(
            Path(args.out),
            ["entry_timestamp", "label"],
            ([int(t), int(l)] for t, l in zip(ts, labels)),
        )
        print(f"{len(labels)} fixed-horizon labels")
    return 0


def cmd_featurize(args) -> int:
    series = _load_bars(args)
    x = np.log(series.closes)
    max_window = len(x) // 2
    weights = generate_weights(args.d, args.tau, max_len=max_window + 1)
    ffd = ffd_transform(x, weights)
    cfg = TripleBarrierConfig(
        h=args.h, upfactor=args.up, lowerfactor=-abs(args.down), vol_span=args.vol_span
    )
    events = triple_barrier_labels(series, cfg)
    features = compute_indicators(series, ffd)
    dataset = assemble_dataset(
        features,
        events,
        split_fraction=args.split,
        n_components=args.pca,
        split=args.split_mode,
        seed=args.seed,
    )
    artifacts.write_dataset_csv(Path(args.out), dataset, series.timestamps)
    artifacts.write_json(
        Path(args.params_out), artifacts.dataset_params_payload(dataset, {"input": args.input})
    )
    print(
        f"dataset: {dataset.features.n_rows} rows, {dataset.features.values.shape[1]} "
        f"components, split at {dataset.split_index}"
    )
    return 0


def cmd_train(args) -> int:
    dataset, _ = artifacts.load_dataset(Path(args.dataset), Path(args.params))
    cfg = MlpConfig(
        input_dim=dataset.features.values.shape[1],
        hidden_dim=args.hidden,
        n_residual_blocks=args.blocks,
        learning_rate=args.lr,
        epochs=args.epochs,
        batch_size=args.batch,
        activation=args.activation,
        seed=args.seed,
    )
    model = train(dataset, cfg)
    save_model(model, Path(args.out))
    print(f"trained {cfg.epochs} epochs, final loss {model.loss_history[-1]:.6f}")
    return 0


def cmd_predict(args) -> int:
    dataset, timestamps = artifacts.load_dataset(Path(args.dataset), Path(args.params))
    model = load_model(Path(args.model))
    if args.rows == "test":
        rows = slice(dataset.split_index, None)
    elif args.rows == "train":
        rows = slice(0, dataset.split_index)
    else:
        rows = slice(None)
    X, y, ts = dataset.features.values[rows], dataset.labels[rows], timestamps[rows]
    y_pred = predict(model, X)
    artifacts.write_predictions_csv(Path(args.out), ts, y, y_pred)
    report = classification_report(y, y_pred)
    if args.report:
        artifacts.write_json(Path(args.report), report_to_dict(report))
    print(format_report(report))
    return 0


def _predictions_to_bar_labels(series, pred_path: Path) -> np.ndarray:
    ts, _, y_pred = artifacts.read_predictions_csv(pred_path)
    index_of = {int(t): i for i, t in enumerate(series.timestamps)}
    labels = np.ones(len(series), dtype=int)
    matched = 0
    for t, label in zip(ts, y_pred):
        i = index_of.get(int(t))
        if i is not None:
            labels[i] = label
            matched += 1
    if matched == 0:
        raise FfdlabError("no prediction timestamps match the bar series")
    return labels


def cmd_backtest(args) -> int:
    series = _load_bars(args)
    labels = _predictions_to_bar_labels(series, Path(args.predictions))
    vol = ema_volatility(series, args.vol_span)
    pa, pb, pc, pd = _parse_params(args.params)
    params = StrategyParams(
        pa=pa, pb=pb, pc=pc, pd=pd,
        lot_size=args.lots, contract_multiplier=args.multiplier,
    )
    costs = CostModel(
        commission_rate=args.commission, slippage=args.slippage, initial_capital=args.capital
    )
    report = run_backtest(series, labels, vol, params, costs)
    artifacts.write_json(Path(args.report), artifacts.backtest_report_payload(report))
    artifacts.write_trades_csv(Path(args.trades), report, series.timestamps)
    artifacts.write_equity_csv(Path(args.equity), report, series.timestamps)
    sharpe = "n/a" if report.sharpe is None else f"{report.sharpe:.4f}"
    print(
        f"trades={len(report.trades)} total_return={report.total_return:.4%} "
        f"sharpe={sharpe} max_drawdown={report.max_drawdown:.4%}"
    )
    return 0


def cmd_optimize(args) -> int:
    series = _load_bars(args)
    labels = _predictions_to_bar_labels(series, Path(args.predictions))
    vol = ema_volatility(series, args.vol_span)
    costs = CostModel(
        commission_rate=args.commission, slippage=args.slippage, initial_capital=args.capital
    )
    objective = strategy_objective(
        series, labels, vol, costs,
        lot_size=args.lots, contract_multiplier=args.multiplier, metric=args.objective,
    )
    cfg = GaConfig(
        population=args.pop, generations=args.gens, seed=args.seed,
        elite_count=args.elite,
    )
    best, fitness, history = ga_optimize(objective, _parse_bounds(args.bounds), cfg)
    result = {
        "best_params": {k: float(v) for k, v in zip(("pa", "pb", "pc", "pd"), best)},
        "best_fitness": fitness,
        "objective": args.objective,
        "history": history,
    }
    if args.out:
        artifacts.write_json(Path(args.out), result)
    print(json.dumps(result["best_params"], sort_keys=True), "fitness:", f"{fitness:.6f}")
    return 0


def cmd_run(args) -> int:
    tree = {}
    if args.config:
        tree = json.loads(Path(args.config).read_text())
    config = PipelineConfig.from_tree(tree)
    overrides = {}
    if args.input:
        overrides["input_path"] = args.input
    if args.seed is not None:
        overrides["seed"] = args.seed
    if args.d is not None:
        overrides["d"] = "auto" if args.d == "auto" else float(args.d)
    if args.period is not None:
        overrides["resample_minutes"] = args.period
    if overrides:
        from dataclasses import replace

        config = replace(config, **overrides)
    if not config.input_path:
        raise FfdlabError("an input file is required (config 'input' or --input)")
    out = run_pipeline(config, args.out)
    manifest = json.loads((out / "manifest.json").read_text())
    print(f"run complete: {out} (chosen d = {manifest['chosen_d']})")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="ffdlab", description=__doc__)
    parser.add_argument("--version", action="version", version=f"ffdlab {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("synth", help="generate seeded synthetic bars")
    p.add_argument("--kind", choices=("random_walk", "gbm", "ar1"), default="gbm")
    p.add_argument("--length", type=int, default=5000)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--sigma", type=float, default=0.01)
    p.add_argument("--mu", type=float, default=0.0)
    p.add_argument("--phi", type=float, default=0.8)
    p.add_argument("--start-price", type=float, default=100.0)
    p.add_argument("--period", type=int, default=1)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_synth)

    p = sub.add_parser("resample", help="aggregate bars to a coarser period")
    _add_input_args(p)
    p.add_argument("--period", type=int, required=True, help="target minutes")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_resample)

    p = sub.add_parser("fracdiff", help="fixed-window fractional differencing")
    _add_input_args(p)
    p.add_argument("--d", type=float, required=True)
    p.add_argument("--tau", type=float, default=1e-5)
    p.add_argument("--column", default="close")
    p.add_argument("--log", action=argparse.BooleanOptionalAction, default=True)
    p.add_argument("--max-window", type=int, default=None, help="window cap (default: half the series)")
    p.add_argument("--out", required=True)
    p.add_argument("--weights-out", default=None)
    p.set_defaults(func=cmd_fracdiff)

    p = sub.add_parser("adf-sweep", help="ADF statistic and memory correlation over a d grid")
    _add_input_args(p)
    p.add_argument("--column", default="close")
    p.add_argument("--log", action=argparse.BooleanOptionalAction, default=True)
    p.add_argument("--grid", default="0:1:0.1")
    p.add_argument("--tau", type=float, default=1e-5)
    p.add_argument("--max-window", type=int, default=None)
    p.add_argument("--out-curve", required=True, help="long-format (d, adf, corr) CSV")
    p.add_argument("--out-table", required=True, help="wide one-row table CSV")
    p.set_defaults(func=cmd_adf_sweep)

    p = sub.add_parser("label", help="triple-barrier or fixed-horizon labels")
    _add_input_args(p)
    p.add_argument("--method", choices=("triple-barrier", "fixed-horizon"), default="triple-barrier")
    p.add_argument("--h", type=int, default=12)
    p.add_argument("--up", type=float, default=3.0)
    p.add_argument("--down", type=float, default=3.0)
    p.add_argument("--vol-span", type=int, default=20)
    p.add_argument("--threshold", type=float, default=0.002, help="fixed-horizon return threshold")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_label)

    p = sub.add_parser("featurize", help="indicators, labels, normalization, PCA, split")
    _add_input_args(p)
    p.add_argument("--d", type=float, default=0.3)
    p.add_argument("--tau", type=float, default=1e-5)
    p.add_argument("--h", type=int, default=12)
    p.add_argument("--up", type=float, default=3.0)
    p.add_argument("--down", type=float, default=3.0)
    p.add_argument("--vol-span", type=int, default=20)
    p.add_argument("--indicators", choices=("default16",), default="default16")
    p.add_argument("--pca", type=int, default=16)
    p.add_argument("--split", type=float, default=0.8)
    p.add_argument("--split-mode", choices=("chronological", "random"), default="chronological")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True)
    p.add_argument("--params-out", required=True)
    p.set_defaults(func=cmd_featurize)

    p = sub.add_parser("train", help="train the residual MLP on a dataset file")
    p.add_argument("--dataset", required=True)
    p.add_argument("--params", required=True, help="dataset params JSON sidecar")
    p.add_argument("--hidden", type=int, default=64)
    p.add_argument("--blocks", type=int, default=2)
    p.add_argument("--lr", type=float, default=1e-3)
    p.add_argument("--epochs", type=int, default=100)
    p.add_argument("--batch", type=int, default=64)
    p.add_argument("--activation", choices=("relu", "leaky_relu"), default="relu")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("predict", help="predict classes and report metrics")
    p.add_argument("--model", required=True)
    p.add_argument("--dataset", required=True)
    p.add_argument("--params", required=True)
    p.add_argument("--rows", choices=("test", "train", "all"), default="test")
    p.add_argument("--out", required=True)
    p.add_argument("--report", default=None)
    p.set_defaults(func=cmd_predict)

    p = sub.add_parser("backtest", help="run the label-driven strategy")
    _add_input_args(p)
    p.add_argument("--predictions", required=True, help="predictions CSV (entry_timestamp,y_true,y_pred)")
    p.add_argument("--params", default="5,2,5,2", help="pa,pb,pc,pd")
    p.add_argument("--vol-span", type=int, default=20)
    p.add_argument("--capital", type=float, default=200_000.0)
    p.add_argument("--commission", type=float, default=0.00005)
    p.add_argument("--slippage", type=float, default=1.0)
    p.add_argument("--multiplier", type=float, default=1.0)
    p.add_argument("--lots", type=int, default=1)
    p.add_argument("--report", required=True)
    p.add_argument("--trades", required=True)
    p.add_argument("--equity", required=True)
    p.set_defaults(func=cmd_backtest)

    p = sub.add_parser("optimize", help="genetic search over the exit multipliers")
    _add_input_args(p)
    p.add_argument("--predictions", required=True)
    p.add_argument("--bounds", default="0:10", help="lo:hi, shared or per parameter")
    p.add_argument("--pop", type=int, default=32)
    p.add_argument("--gens", type=int, default=50)
    p.add_argument("--elite", type=int, default=2)
    p.add_argument("--seed", type=int, default=7)
    p.add_argument("--objective", choices=("sharpe", "total_return"), default="sharpe")
    p.add_argument("--vol-span", type=int, default=20)
    p.add_argument("--capital", type=float, default=200_000.0)
    p.add_argument("--commission", type=float, default=0.00005)
    p.add_argument("--slippage", type=float, default=1.0)
    p.add_argument("--multiplier", type=float, default=1.0)
    p.add_argument("--lots", type=int, default=1)
    p.add_argument("--out", default=None)
    p.set_defaults(func=cmd_optimize)

    p = sub.add_parser("run", help="run the whole pipeline from a config")
    p.add_argument("--config", default=None, help="JSON config file")
    p.add_argument("--input", default=None, help="override the config input path")
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--d", default=None, help="override d ('auto' or a number)")
    p.add_argument("--period", type=int, default=None, help="override resample minutes")
    p.add_argument("--out", required=True, help="run directory")
    p.set_defaults(func=cmd_run)

    return parser


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except FfdlabError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
