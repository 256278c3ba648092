"""End-to-end pipeline: resample, difference, label, featurize, train, predict,
report and backtest from a single configuration.

Every stage writes its artifact into the run directory and the manifest
records the resolved configuration, its hash, the chosen differencing order
and a checksum per artifact.  All randomness flows from one global seed,
fanned out per stage through numpy SeedSequence([seed, stage_id]) with the
stage ids documented in ``STAGE_SEED_IDS``; reruns with the same config and
seed are byte-identical.
"""

from __future__ import annotations

import hashlib
import json
import logging
import platform
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

from . import __version__, artifacts
from .backtest import CostModel, StrategyParams, run_backtest
from .errors import FfdlabError
from .features import assemble_dataset, compute_indicators
from .fracdiff import ffd_transform, generate_weights
from .labeling import TripleBarrierConfig, VolatilityEstimate, ema_volatility, triple_barrier_labels
from .market_data import BarSeries, load_csv, resample
from .model import (
    MlpConfig,
    classification_report,
    format_report,
    predict,
    report_to_dict,
    save_model,
    train,
)
from .stationarity import minimal_d

logger = logging.getLogger(__name__)

STAGE_SEED_IDS = {"split": 1, "train": 2}


class StageFailure(FfdlabError):
    def __init__(self, stage: str, cause: Exception):
        super().__init__(f"stage {stage!r} failed: {cause}")
        self.stage = stage


@dataclass(frozen=True)
class PipelineConfig:
    """Resolved pipeline settings; defaults follow the documented protocol
    (10-minute bars, h=12, barrier factors +-3, volatility span 20, 16 PCA
    components, 80/20 chronological split, commission 0.00005, slippage 1.0,
    capital 200,000, exit multipliers 5/2/5/2)."""

    input_path: str = ""
    schema: dict = field(default_factory=dict)
    symbol: str | None = None
    resample_minutes: int = 10
    d: float | str = "auto"  # "auto" runs the minimal-order search
    tau: float = 1e-5
    grid_step: float = 0.1
    h: int = 12
    upfactor: float = 3.0
    lowerfactor: float = -3.0
    vol_span: int = 20
    n_components: int = 16
    split_fraction: float = 0.8
    split_mode: str = "chronological"
    hidden_dim: int = 64
    n_residual_blocks: int = 2
    learning_rate: float = 1e-3
    epochs: int = 100
    batch_size: int = 64
    activation: str = "relu"
    pa: float = 5.0
    pb: float = 2.0
    pc: float = 5.0
    pd: float = 2.0
    lot_size: int = 1
    contract_multiplier: float = 1.0
    commission_rate: float = 0.00005
    slippage: float = 1.0
    initial_capital: float = 200_000.0
    seed: int = 0

    def to_tree(self) -> dict:
        """Nested key tree used by config files and the manifest."""
        return {
            "input": self.input_path,
            "schema": dict(self.schema),
            "symbol": self.symbol,
            "resample_minutes": self.resample_minutes,
            "fracdiff": {"d": self.d, "tau": self.tau, "grid_step": self.grid_step},
            "labeling": {
                "h": self.h,
                "upfactor": self.upfactor,
                "lowerfactor": self.lowerfactor,
                "vol_span": self.vol_span,
            },
            "features": {
                "n_components": self.n_components,
                "split_fraction": self.split_fraction,
                "split_mode": self.split_mode,
            },
            "model": {
                "hidden_dim": self.hidden_dim,
                "n_residual_blocks": self.n_residual_blocks,
                "learning_rate": self.learning_rate,
                "epochs": self.epochs,
                "batch_size": self.batch_size,
                "activation": self.activation,
            },
            "backtest": {
                "pa": self.pa,
                "pb": self.pb,
                "pc": self.pc,
                "pd": self.pd,
                "lot_size": self.lot_size,
                "contract_multiplier": self.contract_multiplier,
                "commission_rate": self.commission_rate,
                "slippage": self.slippage,
                "initial_capital": self.initial_capital,
            },
            "seed": self.seed,
        }

    @classmethod
    def from_tree(cls, tree: dict) -> "PipelineConfig":
        cfg = cls()
        flat = {}
        if "input" in tree:
            flat["input_path"] = tree["input"]
        for key in ("schema", "symbol", "resample_minutes", "seed"):
            if key in tree:
                flat[key] = tree[key]
        groups = {
            "fracdiff": ("d", "tau", "grid_step"),
            "labeling": ("h", "upfactor", "lowerfactor", "vol_span"),
            "features": ("n_components", "split_fraction", "split_mode"),
            "model": (
                "hidden_dim", "n_residual_blocks", "learning_rate",
                "epochs", "batch_size", "activation",
            ),
            "backtest": (
                "pa", "pb", "pc", "pd", "lot_size", "contract_multiplier",
                "commission_rate", "slippage", "initial_capital",
            ),
        }
        for group, keys in groups.items():
            sub = tree.get(group, {})
            unknown = set(sub) - set(keys)
            if unknown:
                raise ValueError(f"unknown {group} config keys: {sorted(unknown)}")
            for key in keys:
                if key in sub:
                    flat[key] = sub[key]
        unknown = set(tree) - {"input", "schema", "symbol", "resample_minutes", "seed", *groups}
        if unknown:
            raise ValueError(f"unknown config keys: {sorted(unknown)}")
        return replace(cfg, **flat)


def config_hash(config: PipelineConfig) -> str:
    canonical = json.dumps(config.to_tree(), sort_keys=True)
    return hashlib.sha256(canonical.encode()).hexdigest()


def stage_seed(global_seed: int, stage: str) -> int:
    seq = np.random.SeedSequence([global_seed, STAGE_SEED_IDS[stage]])
    return int(seq.generate_state(1)[0])


def _run_stage(name: str, func):
    try:
        return func()
    except FfdlabError as exc:
        raise StageFailure(name, exc) from exc


def run_pipeline(config: PipelineConfig, out_dir: str | Path) -> Path:
    """Execute all stages, writing artifacts and a manifest into ``out_dir``.

    A stage failure raises StageFailure naming the stage; artifacts from
    completed stages stay in place for inspection.
    """
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    stages: list[dict] = []

    def record(stage: str, *paths: Path):
        stages.append(
            {
                "name": stage,
                "artifacts": [
                    {"path": p.name, "sha256": artifacts.sha256_file(p)} for p in paths
                ],
            }
        )

    # resample
    def do_resample() -> BarSeries:
        raw = load_csv(config.input_path, schema=config.schema or None, symbol=config.symbol)
        return resample(raw, config.resample_minutes)

    bars = _run_stage("resample", do_resample)
    bars_path = out / f"bars_{config.resample_minutes}m.csv"
    artifacts.write_bars_csv(bars_path, bars)
    record("resample", bars_path)

    # fracdiff
    def do_fracdiff():
        closes = bars.closes
        if np.any(closes <= 0):
            raise FfdlabError("log transform requires positive closes")
        max_window = len(closes) // 2
        if config.d == "auto":
            chosen = minimal_d(closes, config.tau, config.grid_step, log=True, max_window=max_window)
        else:
            chosen = float(config.d)
        weights = generate_weights(chosen, config.tau, max_len=max_window + 1)
        return chosen, weights, ffd_transform(np.log(closes), weights)

    chosen_d, weights, ffd = _run_stage("fracdiff", do_fracdiff)
    ffd_path = out / "fracdiff.csv"
    weights_path = out / "fracdiff_weights.csv"
    artifacts.write_fracdiff_csv(ffd_path, bars, ffd)
    artifacts.write_weights_csv(weights_path, weights)
    record("fracdiff", ffd_path, weights_path)

    # label
    tb_cfg = TripleBarrierConfig(
        h=config.h,
        upfactor=config.upfactor,
        lowerfactor=config.lowerfactor,
        vol_span=config.vol_span,
    )
    vol = _run_stage("label", lambda: ema_volatility(bars, config.vol_span))
    events = _run_stage("label", lambda: triple_barrier_labels(bars, tb_cfg, vol))
    labels_path = out / "labels.csv"
    artifacts.write_labels_csv(labels_path, bars, events)
    record("label", labels_path)

    # featurize
    def do_featurize():
        features = compute_indicators(bars, ffd)
        return assemble_dataset(
            features,
            events,
            split_fraction=config.split_fraction,
            n_components=config.n_components,
            split=config.split_mode,
            seed=stage_seed(config.seed, "split"),
        )

    dataset = _run_stage("featurize", do_featurize)
    dataset_path = out / "dataset.csv"
    params_path = out / "dataset_params.json"
    artifacts.write_dataset_csv(dataset_path, dataset, bars.timestamps)
    artifacts.write_json(
        params_path,
        artifacts.dataset_params_payload(dataset, {"config_hash": config_hash(config)}),
    )
    record("featurize", dataset_path, params_path)

    # train
    mlp_cfg = MlpConfig(
        input_dim=config.n_components,
        hidden_dim=config.hidden_dim,
        n_residual_blocks=config.n_residual_blocks,
        learning_rate=config.learning_rate,
        epochs=config.epochs,
        batch_size=config.batch_size,
        activation=config.activation,
        seed=stage_seed(config.seed, "train"),
    )
    model = _run_stage("train", lambda: train(dataset, mlp_cfg))
    model_path = out / "model.json"
    save_model(model, model_path)
    record("train", model_path)

    # predict
    y_pred = _run_stage("predict", lambda: predict(model, dataset.X_test))
    test_rows = slice(dataset.split_index, None)
    test_entries = dataset.features.entry_indices[test_rows]
    pred_path = out / "predictions.csv"
    artifacts.write_predictions_csv(
        pred_path, bars.timestamps[test_entries], dataset.y_test, y_pred
    )
    record("predict", pred_path)

    # report
    report = _run_stage("report", lambda: classification_report(dataset.y_test, y_pred))
    report_path = out / "report.json"
    report_text_path = out / "report.txt"
    artifacts.write_json(report_path, report_to_dict(report))
    report_text_path.write_text(format_report(report) + "\n")
    record("report", report_path, report_text_path)

    # backtest over the test span
    def do_backtest():
        first = int(test_entries.min())
        sub = bars.slice(first)
        labels_full = np.ones(len(sub), dtype=int)
        labels_full[test_entries - first] = y_pred
        sub_vol = VolatilityEstimate(span=vol.span, values=vol.values[first:].copy())
        params = StrategyParams(
            pa=config.pa, pb=config.pb, pc=config.pc, pd=config.pd,
            lot_size=config.lot_size, contract_multiplier=config.contract_multiplier,
        )
        costs = CostModel(
            commission_rate=config.commission_rate,
            slippage=config.slippage,
            initial_capital=config.initial_capital,
        )
        return first, run_backtest(sub, labels_full, sub_vol, params, costs)

    first_test_bar, bt_report = _run_stage("backtest", do_backtest)
    bt_ts = bars.timestamps[first_test_bar:]
    bt_path = out / "backtest.json"
    trades_path = out / "trades.csv"
    equity_path = out / "equity.csv"
    artifacts.write_json(bt_path, artifacts.backtest_report_payload(bt_report))
    artifacts.write_trades_csv(trades_path, bt_report, bt_ts)
    artifacts.write_equity_csv(equity_path, bt_report, bt_ts)
    record("backtest", bt_path, trades_path, equity_path)

    manifest = {
        "config": config.to_tree(),
        "config_hash": config_hash(config),
        "seed": config.seed,
        "stage_seeds": {name: stage_seed(config.seed, name) for name in STAGE_SEED_IDS},
        "chosen_d": chosen_d,
        "fracdiff_window": weights.cutoff,
        "n_events": len(events),
        "n_train": dataset.split_index,
        "n_test": int(dataset.features.n_rows - dataset.split_index),
        "versions": {
            "ffdlab": __version__,
            "numpy": np.__version__,
            "python": platform.python_version(),
        },
        "stages": stages,
    }
    artifacts.write_json(out / "manifest.json", manifest)
    return out
