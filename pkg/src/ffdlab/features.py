"""Feature computation, normalization, PCA reduction and dataset assembly.

The featurizer emits a documented 16-indicator set plus raw OHLCV and the
fractionally differenced close, drops warm-up rows, z-scores each column and
reduces with PCA.  Normalization and PCA parameters are always fitted on the
training rows only and returned for reuse at inference; the default split is
chronological because randomly splitting overlapping labeled events leaks
test information into training.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np

from . import indicators as ind
from .errors import FfdlabError
from .fracdiff import FracdiffSeries
from .labeling import LabelEvent
from .market_data import BarSeries

logger = logging.getLogger(__name__)

#: Columns emitted by :func:`compute_indicators`, in order.
DEFAULT_COLUMNS = (
    "open",
    "high",
    "low",
    "close",
    "volume",
    "ffd_close",
    "sma_10",
    "ema_10",
    "macd_line",
    "macd_signal",
    "macd_hist",
    "rsi_14",
    "stoch_k_14",
    "stoch_d_3",
    "boll_upper_20",
    "boll_mid_20",
    "boll_lower_20",
    "atr_14",
    "roc_10",
    "obv",
    "cci_20",
    "williams_r_14",
)


class SeriesTooShort(FfdlabError):
    pass


class ConstantColumn(FfdlabError):
    pass


class RankDeficient(FfdlabError):
    pass


class AlignmentMismatch(FfdlabError):
    pass


@dataclass(frozen=True)
class FeatureMatrix:
    """Named feature columns with the source bar index of every row."""

    column_names: tuple[str, ...]
    values: np.ndarray = field(repr=False)
    entry_indices: np.ndarray = field(repr=False)

    def __post_init__(self):
        if self.values.shape != (len(self.entry_indices), len(self.column_names)):
            raise ValueError("values shape inconsistent with names/indices")
        self.values.flags.writeable = False
        self.entry_indices.flags.writeable = False

    @property
    def n_rows(self) -> int:
        return self.values.shape[0]

    def column(self, name: str) -> np.ndarray:
        return self.values[:, self.column_names.index(name)]


@dataclass(frozen=True)
class NormalizationParams:
    column_names: tuple[str, ...]
    means: np.ndarray
    stds: np.ndarray
    dropped: tuple[str, ...]

    def apply(self, matrix: FeatureMatrix) -> FeatureMatrix:
        cols = [matrix.column_names.index(name) for name in self.column_names]
        values = (matrix.values[:, cols] - self.means) / self.stds
        return FeatureMatrix(self.column_names, values, matrix.entry_indices.copy())


@dataclass(frozen=True)
class PcaParams:
    input_columns: tuple[str, ...]
    column_means: np.ndarray
    components: np.ndarray  # (n_inputs, n_components)
    explained_variance: np.ndarray
    explained_variance_ratio: np.ndarray

    def apply(self, matrix: FeatureMatrix) -> FeatureMatrix:
        if matrix.column_names != self.input_columns:
            raise AlignmentMismatch("matrix columns differ from PCA inputs")
        values = (matrix.values - self.column_means) @ self.components
        names = tuple(f"pc_{i + 1}" for i in range(self.components.shape[1]))
        return FeatureMatrix(names, values, matrix.entry_indices.copy())


@dataclass(frozen=True)
class Dataset:
    """Model-ready features and labels with a chronological train/test split.

    Labels are shifted from {-1, 0, +1} to {0, 1, 2} so classes index output
    units directly.  Rows before ``split_index`` are the training set.
    """

    features: FeatureMatrix
    labels: np.ndarray
    split_index: int
    normalization_params: NormalizationParams
    pca_params: PcaParams

    @property
    def X_train(self) -> np.ndarray:
        return self.features.values[: self.split_index]

    @property
    def y_train(self) -> np.ndarray:
        return self.labels[: self.split_index]

    @property
    def X_test(self) -> np.ndarray:
        return self.features.values[self.split_index :]

    @property
    def y_test(self) -> np.ndarray:
        return self.labels[self.split_index :]


def compute_indicators(
    series: BarSeries,
    ffd_close: FracdiffSeries,
    extra_columns: dict[str, np.ndarray] | None = None,
) -> FeatureMatrix:
    """Build the per-bar feature matrix, dropping all warm-up rows.

    Emits raw OHLCV, the differenced close and the default 16-indicator set;
    ``extra_columns`` (full-length arrays) lets callers register custom
    features.  Rows are kept only where every column is finite.
    """
    n = len(series)
    if ffd_close.source_length != n:
        raise AlignmentMismatch("ffd_close was not computed from this series")
    o, h, l, c, v = series.opens, series.highs, series.lows, series.closes, series.volumes

    ffd_full = np.full(n, np.nan)
    ffd_full[ffd_close.start_index :] = ffd_close.values

    macd_line, macd_signal, macd_hist = ind.macd(c)
    stoch_k = ind.stochastic_k(h, l, c, 14)
    boll_up, boll_mid, boll_low = ind.bollinger(c, 20, 2.0)
    columns = {
        "open": o,
        "high": h,
        "low": l,
        "close": c,
        "volume": v,
        "ffd_close": ffd_full,
        "sma_10": ind.sma(c, 10),
        "ema_10": ind.ema(c, 10),
        "macd_line": macd_line,
        "macd_signal": macd_signal,
        "macd_hist": macd_hist,
        "rsi_14": ind.rsi(c, 14),
        "stoch_k_14": stoch_k,
        "stoch_d_3": ind.sma(stoch_k, 3),
        "boll_upper_20": boll_up,
        "boll_mid_20": boll_mid,
        "boll_lower_20": boll_low,
        "atr_14": ind.atr(h, l, c, 14),
        "roc_10": ind.roc(c, 10),
        "obv": ind.obv(c, v),
        "cci_20": ind.cci(h, l, c, 20),
        "williams_r_14": ind.williams_r(h, l, c, 14),
    }
    for name, values in (extra_columns or {}).items():
        arr = np.asarray(values, dtype=float)
        if arr.shape != (n,):
            raise AlignmentMismatch(f"extra column {name!r} is not full length")
        columns[name] = arr

    names = tuple(columns)
    matrix = np.column_stack([columns[name] for name in names])
    finite_rows = np.all(np.isfinite(matrix), axis=1)
    if not finite_rows.any():
        raise SeriesTooShort("no rows survive indicator warm-up")
    keep = np.nonzero(finite_rows)[0]
    return FeatureMatrix(names, matrix[keep], keep.astype(np.int64))


def _fit_indices(matrix: FeatureMatrix, fit_rows) -> np.ndarray:
    if isinstance(fit_rows, slice):
        idx = np.arange(matrix.n_rows)[fit_rows]
    else:
        idx = np.asarray(fit_rows, dtype=np.int64)
    if idx.size == 0:
        raise ValueError("fit_rows is empty")
    return idx


def normalize(matrix: FeatureMatrix, fit_rows) -> tuple[FeatureMatrix, NormalizationParams]:
    """Z-score columns with mean/std (population) of the fit rows only.

    Columns constant over the fit rows carry no information and would divide
    by zero; they are dropped with a warning and recorded in the params.
    """
    idx = _fit_indices(matrix, fit_rows)
    fit = matrix.values[idx]
    means = fit.mean(axis=0)
    stds = fit.std(axis=0)
    constant = stds == 0.0
    if constant.all():
        raise ConstantColumn("every column is constant over the fit rows")
    if constant.any():
        dropped = tuple(
            name for name, bad in zip(matrix.column_names, constant) if bad
        )
        logger.warning("dropping constant columns: %s", ", ".join(dropped))
    else:
        dropped = ()
    keep = ~constant
    names = tuple(
        name for name, ok in zip(matrix.column_names, keep) if ok
    )
    params = NormalizationParams(
        column_names=names,
        means=means[keep],
        stds=stds[keep],
        dropped=dropped,
    )
    return params.apply(matrix), params


def pca_fit_transform(
    matrix: FeatureMatrix, fit_rows, n_components: int
) -> tuple[FeatureMatrix, PcaParams]:
    """PCA via SVD of the centered fit rows; transform applied to all rows.

    Components are the top eigenvectors of the fit-rows covariance matrix in
    descending eigenvalue order, sign-fixed so each component's largest-
    magnitude entry is positive.  Explained-variance ratios divide by the
    total fit variance, so they sum to 1 only at full rank.
    """
    idx = _fit_indices(matrix, fit_rows)
    fit = matrix.values[idx]
    n_fit, n_cols = fit.shape
    if n_components < 1:
        raise ValueError("n_components must be positive")
    if n_components > min(n_fit - 1, n_cols):
        raise RankDeficient(
            f"{n_components} components exceed min(fit rows - 1, columns) = "
            f"{min(n_fit - 1, n_cols)}"
        )
    means = fit.mean(axis=0)
    centered = fit - means
    _, singular, vt = np.linalg.svd(centered, full_matrices=False)
    eigvals = singular**2 / (n_fit - 1)
    components = vt[:n_components].T.copy()
    # deterministic sign: largest-|entry| of each component is positive
    for j in range(components.shape[1]):
        pivot = np.argmax(np.abs(components[:, j]))
        if components[pivot, j] < 0:
            components[:, j] = -components[:, j]
    total_variance = centered.var(axis=0, ddof=1).sum()
    params = PcaParams(
        input_columns=matrix.column_names,
        column_means=means,
        components=components,
        explained_variance=eigvals[:n_components],
        explained_variance_ratio=eigvals[:n_components] / total_variance,
    )
    return params.apply(matrix), params


def assemble_dataset(
    features: FeatureMatrix,
    events: list[LabelEvent],
    split_fraction: float = 0.8,
    n_components: int = 16,
    split: str = "chronological",
    seed: int | None = None,
) -> Dataset:
    """Align events to feature rows, remap labels, split, normalize and reduce.

    Alignment is by bar entry index, so event input order is irrelevant;
    events that predate the indicator warm-up have no feature row and are
    dropped.  The default split is chronological at floor(split_fraction * n);
    ``split="random"`` reproduces a seeded random partition by permuting rows
    before the cut (leaky for overlapping events, so not the default).
    """
    if not 0.0 < split_fraction < 1.0:
        raise ValueError("split_fraction must lie in (0, 1)")
    ordered = sorted(events, key=lambda e: e.entry_index)
    entry_to_label = {}
    for event in ordered:
        if event.entry_index in entry_to_label:
            raise AlignmentMismatch(f"duplicate event at entry {event.entry_index}")
        entry_to_label[event.entry_index] = event.label

    row_of = {int(bar): row for row, bar in enumerate(features.entry_indices)}
    rows = []
    labels = []
    for entry, label in entry_to_label.items():
        row = row_of.get(entry)
        if row is not None:
            rows.append(row)
            labels.append(label + 1)
    if not rows:
        raise AlignmentMismatch("no event aligns with a feature row")

    order = np.argsort(rows)
    rows = np.asarray(rows)[order]
    y = np.asarray(labels, dtype=int)[order]

    if split == "random":
        rng = np.random.default_rng(seed)
        perm = rng.permutation(len(rows))
        rows, y = rows[perm], y[perm]
    elif split != "chronological":
        raise ValueError("split must be 'chronological' or 'random'")

    aligned = FeatureMatrix(
        features.column_names,
        features.values[rows],
        features.entry_indices[rows].copy(),
    )
    split_index = int(np.floor(split_fraction * len(y)))
    train = slice(0, split_index)

    normalized, norm_params = normalize(aligned, train)
    reduced, pca_params = pca_fit_transform(normalized, train, n_components)
    return Dataset(
        features=reduced,
        labels=y,
        split_index=split_index,
        normalization_params=norm_params,
        pca_params=pca_params,
    )
