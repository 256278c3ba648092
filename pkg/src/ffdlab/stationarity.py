"""Unit-root testing and the minimal-differencing-order search.

The ADF regression is Δy_t = α + γ·y_{t−1} + Σ β_i·Δy_{t−i} + ε_t (constant,
no trend), estimated by OLS.  The reported statistic is the t-ratio of γ̂; the
unit root is rejected at 95% when it falls below the MacKinnon response-
surface critical value for the sample size.  Lag order is chosen by AIC over
a fixed sample up to a Schwert-rule maximum, then the final regression is
re-fit on the chosen lag's own maximal sample.

``d_sweep`` drives the memory-vs-stationarity trade-off table: for each
differencing order in a grid it transforms the (log) series, runs the ADF
test and measures the correlation with the untransformed series.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import FfdlabError
from .fracdiff import FracdiffSeries, ffd_transform, generate_weights, memory_correlation

# MacKinnon (2010) response-surface coefficients, constant-only case, one
# variable, 95% level: crit = b0 + b1/n + b2/n^2 + b3/n^3.
MACKINNON_C_95 = (-2.86154, -2.8903, -4.234, -40.040)


class DegenerateInput(FfdlabError):
    pass


class SingularRegression(FfdlabError):
    pass


class NoPassingD(FfdlabError):
    pass


class SweepFailure(FfdlabError):
    def __init__(self, d: float, cause: Exception):
        super().__init__(f"d={d}: {cause}")
        self.d = d


@dataclass(frozen=True)
class AdfResult:
    statistic: float
    lags: int
    n_obs: int
    critical_95: float

    @property
    def reject_unit_root(self) -> bool:
        return self.statistic < self.critical_95


@dataclass(frozen=True)
class DSweepRow:
    d: float
    adf_statistic: float
    correlation: float
    passes: bool


def mackinnon_crit_95(n_obs: int) -> float:
    """95% ADF critical value (constant-only) for ``n_obs`` observations."""
    b0, b1, b2, b3 = MACKINNON_C_95
    n = float(n_obs)
    return b0 + b1 / n + b2 / n**2 + b3 / n**3


def schwert_max_lags(n: int) -> int:
    return int(np.floor(12.0 * (n / 100.0) ** 0.25))


def _ssr_is_zero(ssr: float, z: np.ndarray) -> bool:
    # a numerically perfect fit: residual variance at rounding-noise level
    return ssr <= float(z @ z) * 1e-24


def _ols_gamma_tratio(X: np.ndarray, z: np.ndarray) -> tuple[float, float]:
    """OLS of z on X; returns (t-ratio of column 1, SSR)."""
    n, k = X.shape
    beta, _, rank, _ = np.linalg.lstsq(X, z, rcond=None)
    if rank < k:
        raise SingularRegression("design matrix is rank deficient")
    resid = z - X @ beta
    ssr = float(resid @ resid)
    if n <= k or _ssr_is_zero(ssr, z):
        raise SingularRegression("zero residual variance; t-ratio undefined")
    sigma2 = ssr / (n - k)
    xtx_inv = np.linalg.inv(X.T @ X)
    se = np.sqrt(sigma2 * xtx_inv[1, 1])
    return float(beta[1] / se), ssr


def _design(y: np.ndarray, dy: np.ndarray, p: int, trim: int) -> tuple[np.ndarray, np.ndarray]:
    rows = np.arange(trim, len(dy))
    cols = [np.ones(len(rows)), y[rows]]
    for i in range(1, p + 1):
        cols.append(dy[rows - i])
    return np.column_stack(cols), dy[rows]


def adf_test(series: np.ndarray, max_lags: int | None = None) -> AdfResult:
    """Augmented Dickey-Fuller test with constant, AIC lag selection.

    The AIC comparison holds the estimation sample fixed at the max-lag trim
    so candidate models are comparable; the reported regression is then re-fit
    at the chosen lag on all observations that lag allows.
    """
    y = np.asarray(series, dtype=float)
    if y.ndim != 1:
        raise ValueError("series must be one-dimensional")
    n = len(y)
    if max_lags is None:
        max_lags = schwert_max_lags(n)
    if max_lags < 0:
        raise ValueError("max_lags must be non-negative")
    if n < max_lags + 10:
        raise DegenerateInput(f"need at least max_lags + 10 = {max_lags + 10} points, got {n}")
    if np.all(y == y[0]):
        raise DegenerateInput("series is constant")

    dy = np.diff(y)
    best_p = 0
    best_aic = np.inf
    for p in range(max_lags + 1):
        X, z = _design(y, dy, p, max_lags)
        nobs = len(z)
        beta, _, rank, _ = np.linalg.lstsq(X, z, rcond=None)
        if rank < X.shape[1]:
            raise SingularRegression(f"rank-deficient regression at lag {p}")
        ssr = float(((z - X @ beta) ** 2).sum())
        if _ssr_is_zero(ssr, z):
            raise SingularRegression("zero residual variance; t-ratio undefined")
        aic = nobs * np.log(ssr / nobs) + 2.0 * (p + 2)
        if aic < best_aic:
            best_aic = aic
            best_p = p

    X, z = _design(y, dy, best_p, best_p)
    stat, _ = _ols_gamma_tratio(X, z)
    n_obs = len(z)
    return AdfResult(
        statistic=stat,
        lags=best_p,
        n_obs=n_obs,
        critical_95=mackinnon_crit_95(n_obs),
    )


def acf_pacf(series: np.ndarray, n_lags: int) -> tuple[np.ndarray, np.ndarray]:
    """Sample ACF and PACF out to ``n_lags`` (element 0 is 1 for both).

    ACF uses autocovariances normalized by lag 0; PACF comes from the
    Durbin-Levinson recursion on those autocorrelations.
    """
    y = np.asarray(series, dtype=float)
    n = len(y)
    if n_lags < 1:
        raise ValueError("n_lags must be positive")
    if n <= n_lags + 1:
        raise DegenerateInput(f"need more than n_lags + 1 = {n_lags + 1} points, got {n}")
    centered = y - y.mean()
    c0 = float(centered @ centered) / n
    if c0 == 0.0:
        raise DegenerateInput("series is constant")
    acf = np.empty(n_lags + 1)
    acf[0] = 1.0
    for k in range(1, n_lags + 1):
        acf[k] = float(centered[k:] @ centered[:-k]) / n / c0

    pacf = np.empty(n_lags + 1)
    pacf[0] = 1.0
    phi_prev = np.zeros(0)
    for k in range(1, n_lags + 1):
        if k == 1:
            phi_k = np.array([acf[1]])
        else:
            num = acf[k] - float(phi_prev @ acf[k - 1 : 0 : -1])
            den = 1.0 - float(phi_prev @ acf[1:k])
            if den == 0.0:
                raise DegenerateInput(f"Durbin-Levinson breakdown at lag {k}")
            alpha = num / den
            phi_k = np.empty(k)
            phi_k[:-1] = phi_prev - alpha * phi_prev[::-1]
            phi_k[-1] = alpha
        pacf[k] = phi_k[-1]
        phi_prev = phi_k
    return acf, pacf


def _sweep_grid(grid_step: float) -> np.ndarray:
    steps = np.arange(0.0, 1.0 + 1e-12, grid_step)
    grid = np.round(steps, 12)
    if grid[-1] < 1.0:
        grid = np.append(grid, 1.0)
    return grid


def _sweep_row(
    logx: np.ndarray, d: float, tau: float, max_window: int
) -> tuple[DSweepRow, FracdiffSeries]:
    weights = generate_weights(d, tau, max_len=max_window + 1)
    transformed = ffd_transform(logx, weights)
    result = adf_test(transformed.values)
    corr = memory_correlation(logx, transformed)
    row = DSweepRow(
        d=float(d),
        adf_statistic=result.statistic,
        correlation=corr,
        passes=result.reject_unit_root,
    )
    return row, transformed


def d_sweep(
    series: np.ndarray,
    d_grid: np.ndarray,
    tau: float,
    log: bool = True,
    max_window: int | None = None,
) -> list[DSweepRow]:
    """ADF statistic and memory correlation across a grid of orders.

    ``log=True`` transforms log-values (prices must then be positive).  The
    differencing window is capped at ``max_window`` lags (default: half the
    series length) so that small orders, whose natural truncation lag can
    exceed the sample, still leave room for the test regression.
    """
    x = np.asarray(series, dtype=float)
    grid = np.asarray(d_grid, dtype=float)
    if grid.size == 0 or np.any(np.diff(grid) <= 0):
        raise ValueError("d_grid must be non-empty and strictly ascending")
    if grid[0] < 0.0 or grid[-1] > 1.0:
        raise ValueError("d_grid values must lie in [0, 1]")
    if log:
        if np.any(x <= 0):
            raise DegenerateInput("log transform requires positive values")
        x = np.log(x)
    if max_window is None:
        max_window = len(x) // 2

    rows = []
    for d in grid:
        try:
            row, _ = _sweep_row(x, float(d), tau, max_window)
        except FfdlabError as exc:
            raise SweepFailure(float(d), exc) from exc
        rows.append(row)
    return rows


def minimal_d(
    series: np.ndarray,
    tau: float,
    grid_step: float = 0.1,
    log: bool = True,
    max_window: int | None = None,
) -> float:
    """Smallest d on the grid {0, step, 2·step, …, 1} that rejects the unit root.

    Evaluates grid points in ascending order and stops at the first rejection,
    which by construction equals the first passing row of ``d_sweep`` on the
    same grid.
    """
    if not 0.0 < grid_step <= 1.0:
        raise ValueError("grid_step must lie in (0, 1]")
    x = np.asarray(series, dtype=float)
    if log:
        if np.any(x <= 0):
            raise DegenerateInput("log transform requires positive values")
        x = np.log(x)
    if max_window is None:
        max_window = len(x) // 2

    for d in _sweep_grid(grid_step):
        try:
            row, _ = _sweep_row(x, float(d), tau, max_window)
        except FfdlabError as exc:
            raise SweepFailure(float(d), exc) from exc
        if row.passes:
            return float(d)
    raise NoPassingD("no order in the grid rejects the unit root, even d=1")
