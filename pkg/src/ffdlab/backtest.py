"""Label-driven single-position backtest with volatility-scaled TP/SL, plus a
real-coded genetic search over the exit multipliers.

Trading rules: when flat, a label of 2 opens one long lot and a label of 0
opens one short lot at the next bar's open (signals never execute on their
own bar, which would embed lookahead); a label of 1 does nothing.  Take-profit
and stop-loss levels are frozen at entry from the decision bar's close and
volatility, checked against each later bar's high/low with stop-loss taking
precedence inside a bar (the conservative reading of an OHLC bar).  Fills pay
slippage in price points and commission on notional per side.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from datetime import datetime, timezone
from typing import Callable, Sequence

import numpy as np

from .errors import FfdlabError
from .labeling import VolatilityEstimate
from .market_data import BarSeries

logger = logging.getLogger(__name__)

LONG, SHORT = "long", "short"
TAKE_PROFIT, STOP_LOSS, SIGNAL_FLAT, END_OF_DATA = (
    "take_profit",
    "stop_loss",
    "signal_flat",  # reserved in the schema; current rules never emit it
    "end_of_data",
)

TRADING_DAYS_PER_YEAR = 252


class AlignmentMismatch(FfdlabError):
    pass


class DegenerateCurve(FfdlabError):
    pass


class InvalidBounds(FfdlabError):
    pass


class ObjectiveFailure(FfdlabError):
    def __init__(self, candidate: np.ndarray, cause: Exception):
        super().__init__(f"objective failed at {candidate.tolist()}: {cause}")
        self.candidate = candidate


@dataclass(frozen=True)
class StrategyParams:
    """Exit multipliers: long TP/SL use pa/pb, short TP/SL use pc/pd."""

    pa: float = 5.0
    pb: float = 2.0
    pc: float = 5.0
    pd: float = 2.0
    lot_size: int = 1
    contract_multiplier: float = 1.0

    def __post_init__(self):
        if min(self.pa, self.pb, self.pc, self.pd) <= 0:
            raise ValueError("all multipliers must be positive")
        if self.lot_size < 1 or self.contract_multiplier <= 0:
            raise ValueError("lot_size and contract_multiplier must be positive")


@dataclass(frozen=True)
class CostModel:
    commission_rate: float = 0.00005  # fraction of notional, per side
    slippage: float = 1.0             # price points, per side
    initial_capital: float = 200_000.0

    def __post_init__(self):
        if self.commission_rate < 0 or self.slippage < 0:
            raise ValueError("costs must be non-negative")
        if self.initial_capital <= 0:
            raise ValueError("initial_capital must be positive")


@dataclass(frozen=True)
class TradeRecord:
    direction: str
    entry_index: int
    exit_index: int
    entry_price: float
    exit_price: float
    exit_reason: str
    pnl: float


@dataclass(frozen=True)
class BacktestReport:
    trades: tuple[TradeRecord, ...]
    equity_curve: np.ndarray = field(repr=False)
    initial_capital: float
    total_return: float
    annualized_return: float
    sharpe: float | None
    max_drawdown: float
    trading_days: int
    profitable_days: int
    losing_days: int
    trades_per_day: float
    skipped_entries: int


@dataclass
class _OpenPosition:
    direction: str
    entry_index: int
    entry_price: float
    tp: float
    sl: float
    entry_commission: float


def _commission(price: float, params: StrategyParams, costs: CostModel) -> float:
    return price * params.contract_multiplier * params.lot_size * costs.commission_rate


def run_backtest(
    series: BarSeries,
    labels: np.ndarray,
    vol: VolatilityEstimate,
    params: StrategyParams,
    costs: CostModel,
) -> BacktestReport:
    """Simulate the label-driven strategy over the bar series.

    ``labels`` holds a class per bar (0 short, 1 flat, 2 long), aligned to the
    series, as is ``vol``.  Entries at bars without positive volatility are
    skipped and counted.  Any position still open at the last bar is closed
    at its close.  Equity is marked to close every bar and the report's
    accounting identity (final = initial + total pnl) always holds.
    """
    labels = np.asarray(labels, dtype=int)
    if len(labels) != len(series) or len(vol.values) != len(series):
        raise AlignmentMismatch("labels and volatility must align with the series")
    if len(series) < 2:
        raise AlignmentMismatch("need at least 2 bars")
    if labels.min() < 0 or labels.max() > 2:
        raise ValueError("labels must lie in {0, 1, 2}")

    opens, highs, lows, closes = series.opens, series.highs, series.lows, series.closes
    mult = params.contract_multiplier * params.lot_size
    last = len(series) - 1

    equity = np.empty(len(series))
    trades: list[TradeRecord] = []
    realized = 0.0
    position: _OpenPosition | None = None
    pending: tuple[str, float, float] | None = None  # direction, tp, sl
    skipped = 0

    def close_position(t: int, price: float, reason: str):
        nonlocal position, realized
        sign = 1.0 if position.direction == LONG else -1.0
        exit_comm = _commission(price, params, costs)
        pnl = (
            (price - position.entry_price) * sign * mult
            - position.entry_commission
            - exit_comm
        )
        trades.append(
            TradeRecord(
                direction=position.direction,
                entry_index=position.entry_index,
                exit_index=t,
                entry_price=position.entry_price,
                exit_price=price,
                exit_reason=reason,
                pnl=pnl,
            )
        )
        realized += pnl
        position = None

    for t in range(len(series)):
        # exits first: stop-loss checked before take-profit within the bar
        if position is not None and t > position.entry_index:
            if position.direction == LONG:
                if lows[t] <= position.sl:
                    close_position(t, position.sl - costs.slippage, STOP_LOSS)
                elif highs[t] >= position.tp:
                    close_position(t, position.tp - costs.slippage, TAKE_PROFIT)
            else:
                if highs[t] >= position.sl:
                    close_position(t, position.sl + costs.slippage, STOP_LOSS)
                elif lows[t] <= position.tp:
                    close_position(t, position.tp + costs.slippage, TAKE_PROFIT)

        # entries decided on the previous bar fill at this bar's open
        if position is None and pending is not None and t < last:
            direction, tp, sl = pending
            fill = opens[t] + (costs.slippage if direction == LONG else -costs.slippage)
            position = _OpenPosition(
                direction=direction,
                entry_index=t,
                entry_price=fill,
                tp=tp,
                sl=sl,
                entry_commission=_commission(fill, params, costs),
            )
        pending = None

        # new signal for the next bar
        if position is None and t < last:
            label = labels[t]
            if label in (0, 2):
                sigma = vol.values[t]
                if np.isfinite(sigma) and sigma > 0.0:
                    c = closes[t]
                    if label == 2:
                        pending = (LONG, c * (1 + params.pa * sigma), c * (1 - params.pb * sigma))
                    else:
                        pending = (SHORT, c * (1 - params.pc * sigma), c * (1 + params.pd * sigma))
                else:
                    skipped += 1

        if t == last and position is not None:
            adverse = -costs.slippage if position.direction == LONG else costs.slippage
            close_position(t, closes[t] + adverse, END_OF_DATA)

        if position is not None:
            sign = 1.0 if position.direction == LONG else -1.0
            unrealized = (closes[t] - position.entry_price) * sign * mult
            equity[t] = costs.initial_capital + realized + unrealized - position.entry_commission
        else:
            equity[t] = costs.initial_capital + realized

    if skipped:
        logger.warning("%d entry signals skipped for non-positive volatility", skipped)

    stats = performance_stats(equity, series.timestamps, trades)
    return BacktestReport(
        trades=tuple(trades),
        equity_curve=equity,
        initial_capital=costs.initial_capital,
        skipped_entries=skipped,
        **stats,
    )


def performance_stats(
    equity_curve: np.ndarray,
    bar_timestamps: np.ndarray,
    trades: Sequence[TradeRecord],
) -> dict:
    """Daily-return summary of an equity curve.

    Daily equity is the last mark of each UTC calendar day; the first day's
    return is measured against the curve's initial value.  Sharpe uses
    sample std (ddof=1), zero risk-free rate and a 252-day year, and is None
    when fewer than two daily returns exist or their variance is zero.
    Max drawdown is taken over the per-bar curve.
    """
    equity = np.asarray(equity_curve, dtype=float)
    if equity.size == 0:
        raise DegenerateCurve("empty equity curve")
    ts = np.asarray(bar_timestamps, dtype=np.int64)
    if ts.shape != equity.shape:
        raise AlignmentMismatch("timestamps must align with the equity curve")

    days = ts // 86_400_000
    # last mark of each day: first occurrence in the reversed array
    _, idx_rev = np.unique(days[::-1], return_index=True)
    day_equity = equity[len(equity) - 1 - idx_rev]

    initial = equity[0]
    prev = np.concatenate([[initial], day_equity[:-1]])
    daily_returns = day_equity / prev - 1.0

    total_return = float(equity[-1] / initial - 1.0)
    trading_days = len(day_equity)
    annualized = total_return * TRADING_DAYS_PER_YEAR / trading_days

    if len(daily_returns) >= 2 and daily_returns.std(ddof=1) > 0:
        sharpe = float(
            daily_returns.mean() / daily_returns.std(ddof=1) * np.sqrt(TRADING_DAYS_PER_YEAR)
        )
    else:
        sharpe = None

    running_max = np.maximum.accumulate(equity)
    max_drawdown = float((equity / running_max - 1.0).min())

    changes = day_equity - prev
    return {
        "total_return": total_return,
        "annualized_return": float(annualized),
        "sharpe": sharpe,
        "max_drawdown": max_drawdown,
        "trading_days": trading_days,
        "profitable_days": int((changes > 0).sum()),
        "losing_days": int((changes < 0).sum()),
        "trades_per_day": len(trades) / trading_days,
    }


@dataclass(frozen=True)
class GaConfig:
    population: int = 32
    generations: int = 50
    crossover_rate: float = 0.7
    mutation_rate: float = 0.2
    mutation_scale: float = 0.1  # Gaussian sigma as a fraction of each range
    elite_count: int = 2
    seed: int = 0
    tournament_size: int = 3


def ga_optimize(
    objective: Callable[[np.ndarray], float],
    bounds: Sequence[tuple[float, float]],
    ga_cfg: GaConfig,
) -> tuple[np.ndarray, float, list[float]]:
    """Maximize ``objective`` over a box with a real-coded genetic algorithm.

    Tournament selection (size 3), uniform crossover, Gaussian mutation
    clipped to bounds, and elitism; deterministic for a given seed.  Returns
    the best candidate, its fitness and the best fitness per generation
    (non-decreasing, since elites survive unchanged).
    """
    if len(bounds) == 0:
        raise InvalidBounds("bounds must be non-empty")
    lo = np.array([b[0] for b in bounds], dtype=float)
    hi = np.array([b[1] for b in bounds], dtype=float)
    if np.any(hi <= lo):
        raise InvalidBounds("each bound must satisfy low < high")
    if ga_cfg.population < 4:
        raise ValueError("population must be >= 4")
    if not 1 <= ga_cfg.elite_count < ga_cfg.population:
        raise ValueError("elite_count must be >= 1 and below the population size")

    rng = np.random.default_rng(ga_cfg.seed)
    n_genes = len(bounds)
    pop = rng.uniform(lo, hi, size=(ga_cfg.population, n_genes))
    sigma = ga_cfg.mutation_scale * (hi - lo)

    def evaluate(candidates: np.ndarray) -> np.ndarray:
        scores = np.empty(len(candidates))
        for i, cand in enumerate(candidates):
            try:
                scores[i] = float(objective(cand))
            except Exception as exc:  # noqa: BLE001 - wrapped with the candidate
                raise ObjectiveFailure(cand, exc) from exc
        return scores

    fitness = evaluate(pop)
    history: list[float] = []
    for generation in range(ga_cfg.generations):
        order = np.argsort(-fitness)
        pop, fitness = pop[order], fitness[order]
        history.append(float(fitness[0]))
        if generation == ga_cfg.generations - 1:
            break  # the initial population counts as generation 1

        next_pop = [pop[i].copy() for i in range(ga_cfg.elite_count)]
        while len(next_pop) < ga_cfg.population:
            parents = []
            for _ in range(2):
                rivals = rng.integers(0, ga_cfg.population, size=ga_cfg.tournament_size)
                parents.append(pop[rivals[np.argmax(fitness[rivals])]])
            child_a, child_b = parents[0].copy(), parents[1].copy()
            if rng.random() < ga_cfg.crossover_rate:
                swap = rng.random(n_genes) < 0.5
                child_a[swap], child_b[swap] = parents[1][swap], parents[0][swap]
            for child in (child_a, child_b):
                if len(next_pop) >= ga_cfg.population:
                    break
                mutate = rng.random(n_genes) < ga_cfg.mutation_rate
                child[mutate] += rng.normal(0.0, sigma[mutate])
                next_pop.append(np.clip(child, lo, hi))
        pop = np.array(next_pop)
        fitness = evaluate(pop)

    best = int(np.argmax(fitness))
    return pop[best].copy(), float(fitness[best]), history


def strategy_objective(
    series: BarSeries,
    labels: np.ndarray,
    vol: VolatilityEstimate,
    costs: CostModel,
    lot_size: int = 1,
    contract_multiplier: float = 1.0,
    metric: str = "sharpe",
) -> Callable[[np.ndarray], float]:
    """Fitness function over (pa, pb, pc, pd) vectors for ``ga_optimize``.

    ``metric`` picks Sharpe (default; degenerate curves score -inf so the
    search avoids them) or total return.
    """
    if metric not in ("sharpe", "total_return"):
        raise ValueError("metric must be 'sharpe' or 'total_return'")

    def objective(vector: np.ndarray) -> float:
        # bound clipping can pin a gene at exactly 0; floor it to stay valid
        pa, pb, pc, pd = (max(float(v), 1e-9) for v in vector)
        params = StrategyParams(
            pa=pa, pb=pb, pc=pc, pd=pd,
            lot_size=lot_size, contract_multiplier=contract_multiplier,
        )
        report = run_backtest(series, labels, vol, params, costs)
        if metric == "total_return":
            return report.total_return
        return report.sharpe if report.sharpe is not None else float("-inf")

    return objective


def utc_date(timestamp_ms: int) -> str:
    return datetime.fromtimestamp(timestamp_ms / 1000, tz=timezone.utc).strftime("%Y-%m-%d")
