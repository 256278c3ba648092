"""Deterministic artifact readers and writers.

Every file the pipeline or CLI emits goes through these helpers: floats are
written with repr (shortest round-trip form), JSON keys are sorted, and no
wall-clock timestamps are embedded, so identical inputs produce byte-identical
artifacts.
"""

from __future__ import annotations

import csv
import hashlib
import json
from pathlib import Path

import numpy as np

from .backtest import BacktestReport
from .features import Dataset, FeatureMatrix, NormalizationParams, PcaParams
from .fracdiff import FracdiffSeries, FracdiffWeights
from .labeling import LabelEvent
from .market_data import BarSeries
from .stationarity import DSweepRow


def fmt(value) -> str:
    """Shortest exact decimal form of a float; ints pass through."""
    if isinstance(value, (int, np.integer)):
        return str(int(value))
    return repr(float(value))


def sha256_file(path: Path) -> str:
    return hashlib.sha256(Path(path).read_bytes()).hexdigest()


def write_json(path: Path, payload: dict) -> None:
    Path(path).write_text(json.dumps(payload, sort_keys=True, indent=1) + "\n")


def write_rows(path: Path, header: list[str], rows) -> None:
    with Path(path).open("w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(header)
        writer.writerows(rows)


def write_bars_csv(path: Path, series: BarSeries) -> None:
    write_rows(
        path,
        ["timestamp", "open", "high", "low", "close", "volume"],
        (
            [b.timestamp, fmt(b.open), fmt(b.high), fmt(b.low), fmt(b.close), fmt(b.volume)]
            for b in series.bars
        ),
    )


def write_fracdiff_csv(path: Path, series: BarSeries, ffd: FracdiffSeries) -> None:
    ts = series.timestamps[ffd.start_index :]
    write_rows(
        path,
        ["timestamp", "value"],
        ([int(t), fmt(v)] for t, v in zip(ts, ffd.values)),
    )


def write_weights_csv(path: Path, weights: FracdiffWeights) -> None:
    write_rows(
        path,
        ["k", "weight"],
        ([k, fmt(w)] for k, w in enumerate(weights.weights)),
    )


def write_sweep_csv(path: Path, rows: list[DSweepRow]) -> None:
    write_rows(
        path,
        ["d", "adf_statistic", "correlation", "passes"],
        ([fmt(r.d), fmt(r.adf_statistic), fmt(r.correlation), int(r.passes)] for r in rows),
    )


def write_sweep_table_csv(path: Path, rows: list[DSweepRow]) -> None:
    """One-row wide table: a statistic column per grid point, plus pass flags."""
    header = [f"d={r.d:g}" for r in rows] + [f"pass(d={r.d:g})" for r in rows]
    row = [fmt(r.adf_statistic) for r in rows] + [int(r.passes) for r in rows]
    write_rows(path, header, [row])


def write_labels_csv(path: Path, series: BarSeries, events: list[LabelEvent]) -> None:
    ts = series.timestamps
    write_rows(
        path,
        ["entry_timestamp", "label", "touch_timestamp", "upper", "lower"],
        (
            [
                int(ts[e.entry_index]),
                e.label,
                int(ts[e.touch_index]),
                fmt(e.upper_barrier),
                fmt(e.lower_barrier),
            ]
            for e in events
        ),
    )


def write_dataset_csv(path: Path, dataset: Dataset, bar_timestamps: np.ndarray) -> None:
    names = list(dataset.features.column_names)
    header = ["entry_index", "entry_timestamp", "label"] + names
    rows = []
    for i in range(dataset.features.n_rows):
        bar = int(dataset.features.entry_indices[i])
        rows.append(
            [bar, int(bar_timestamps[bar]), int(dataset.labels[i])]
            + [fmt(v) for v in dataset.features.values[i]]
        )
    write_rows(path, header, rows)


def dataset_params_payload(dataset: Dataset, provenance: dict | None = None) -> dict:
    norm, pca = dataset.normalization_params, dataset.pca_params
    return {
        "split_index": dataset.split_index,
        "normalization": {
            "column_names": list(norm.column_names),
            "means": norm.means.tolist(),
            "stds": norm.stds.tolist(),
            "dropped": list(norm.dropped),
        },
        "pca": {
            "input_columns": list(pca.input_columns),
            "column_means": pca.column_means.tolist(),
            "components": pca.components.tolist(),
            "explained_variance": pca.explained_variance.tolist(),
            "explained_variance_ratio": pca.explained_variance_ratio.tolist(),
        },
        "provenance": provenance or {},
    }


def load_dataset(csv_path: Path, params_path: Path) -> tuple[Dataset, np.ndarray]:
    """Read a dataset CSV plus sidecar; returns (dataset, row entry timestamps)."""
    payload = json.loads(Path(params_path).read_text())
    norm = NormalizationParams(
        column_names=tuple(payload["normalization"]["column_names"]),
        means=np.array(payload["normalization"]["means"]),
        stds=np.array(payload["normalization"]["stds"]),
        dropped=tuple(payload["normalization"]["dropped"]),
    )
    pca = PcaParams(
        input_columns=tuple(payload["pca"]["input_columns"]),
        column_means=np.array(payload["pca"]["column_means"]),
        components=np.array(payload["pca"]["components"]),
        explained_variance=np.array(payload["pca"]["explained_variance"]),
        explained_variance_ratio=np.array(payload["pca"]["explained_variance_ratio"]),
    )
    entry_indices = []
    timestamps = []
    labels = []
    values = []
    with Path(csv_path).open(newline="") as fh:
        reader = csv.DictReader(fh)
        feature_names = [n for n in reader.fieldnames if n.startswith("pc_")]
        for record in reader:
            entry_indices.append(int(record["entry_index"]))
            timestamps.append(int(record["entry_timestamp"]))
            labels.append(int(record["label"]))
            values.append([float(record[n]) for n in feature_names])
    features = FeatureMatrix(
        tuple(feature_names),
        np.array(values, dtype=float),
        np.array(entry_indices, dtype=np.int64),
    )
    dataset = Dataset(
        features=features,
        labels=np.array(labels, dtype=int),
        split_index=int(payload["split_index"]),
        normalization_params=norm,
        pca_params=pca,
    )
    return dataset, np.array(timestamps, dtype=np.int64)


def write_predictions_csv(
    path: Path, timestamps: np.ndarray, y_true: np.ndarray, y_pred: np.ndarray
) -> None:
    write_rows(
        path,
        ["entry_timestamp", "y_true", "y_pred"],
        ([int(t), int(a), int(b)] for t, a, b in zip(timestamps, y_true, y_pred)),
    )


def read_predictions_csv(path: Path) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    ts, yt, yp = [], [], []
    with Path(path).open(newline="") as fh:
        for record in csv.DictReader(fh):
            ts.append(int(record["entry_timestamp"]))
            yt.append(int(record["y_true"]))
            yp.append(int(record["y_pred"]))
    return np.array(ts, dtype=np.int64), np.array(yt, dtype=int), np.array(yp, dtype=int)


def write_trades_csv(path: Path, report: BacktestReport, timestamps: np.ndarray) -> None:
    write_rows(
        path,
        [
            "direction", "entry_timestamp", "exit_timestamp",
            "entry_price", "exit_price", "exit_reason", "pnl",
        ],
        (
            [
                t.direction,
                int(timestamps[t.entry_index]),
                int(timestamps[t.exit_index]),
                fmt(t.entry_price),
                fmt(t.exit_price),
                t.exit_reason,
                fmt(t.pnl),
            ]
            for t in report.trades
        ),
    )


def write_equity_csv(path: Path, report: BacktestReport, timestamps: np.ndarray) -> None:
    write_rows(
        path,
        ["timestamp", "equity"],
        ([int(t), fmt(e)] for t, e in zip(timestamps, report.equity_curve)),
    )


def backtest_report_payload(report: BacktestReport) -> dict:
    return {
        "initial_capital": report.initial_capital,
        "final_equity": float(report.equity_curve[-1]),
        "total_return": report.total_return,
        "annualized_return": report.annualized_return,
        "sharpe": report.sharpe,
        "max_drawdown": report.max_drawdown,
        "trading_days": report.trading_days,
        "profitable_days": report.profitable_days,
        "losing_days": report.losing_days,
        "trades_per_day": report.trades_per_day,
        "n_trades": len(report.trades),
        "skipped_entries": report.skipped_entries,
    }
