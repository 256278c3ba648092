"""Fixed-width-window fractional differencing.

The d-th order difference of a series is a dot product of the series with
binomial-expansion weights w_0 = 1, w_k = -w_{k-1} * (d - k + 1) / k.  For
non-integer d the weights never reach zero, so the vector is truncated where
|w_k| drops below a threshold tau; the same truncated vector is then applied
at every time step (one fixed window, no expanding-window drift).

``expanding_fracdiff_oracle`` implements the untruncated expanding-window
variant.  It exists purely to cross-check the fixed-window transform in tests
and is not a pipeline stage.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import FfdlabError

# Safety cap on weight generation when the caller does not bound the window.
# Hitting it means tau is far too small for the given d (the weights decay
# like k^-(1+d)), and silently returning a million-lag window helps nobody.
DEFAULT_MAX_WEIGHTS = 1_000_000


class NonConvergence(FfdlabError):
    pass


class SeriesTooShort(FfdlabError):
    pass


class DegenerateVariance(FfdlabError):
    pass


@dataclass(frozen=True)
class FracdiffWeights:
    """Truncated weight vector for order ``d`` and threshold ``tau``.

    ``weights[0]`` is exactly 1; the last retained weight has modulus >= tau
    (unless the vector was capped by an explicit max_len) and the first
    dropped weight has modulus < tau.
    """

    d: float
    tau: float
    weights: np.ndarray = field(repr=False)

    def __post_init__(self):
        self.weights.flags.writeable = False

    @property
    def cutoff(self) -> int:
        """l*: index of the last retained weight (window length - 1)."""
        return len(self.weights) - 1


@dataclass(frozen=True)
class FracdiffSeries:
    """Output of the fixed-window transform.

    ``values[i]`` is the differenced value at source index ``start_index + i``;
    indices before ``start_index`` have insufficient history and produce no
    output.
    """

    source_length: int
    d: float
    tau: float
    start_index: int
    values: np.ndarray = field(repr=False)

    def __post_init__(self):
        self.values.flags.writeable = False
        if len(self.values) != self.source_length - self.start_index:
            raise ValueError("values length inconsistent with start_index")


def _weight_sequence(d: float, length: int) -> np.ndarray:
    """First ``length`` untruncated weights of (1-B)^d."""
    out = np.empty(max(length, 1))
    out[0] = 1.0
    for k in range(1, length):
        out[k] = -out[k - 1] * (d - k + 1.0) / k
    return out[:length]


def generate_weights(d: float, tau: float, max_len: int | None = None) -> FracdiffWeights:
    """Generate the truncated fractional-differencing weight vector.

    Weights are kept while |w_k| >= tau; exact zeros (integer d beyond lag d)
    are never included.  With an explicit ``max_len`` the vector is capped at
    that many weights, a deliberate fixed-window bound.  Without it, failing
    to fall below tau within an internal safety cap raises NonConvergence,
    which signals a tau too small for the chosen d.
    """
    if tau <= 0:
        raise ValueError("tau must be positive")
    if d < 0:
        raise ValueError("d must be non-negative")
    cap = DEFAULT_MAX_WEIGHTS if max_len is None else int(max_len)
    if cap < 1:
        raise ValueError("max_len must be >= 1")

    w = [1.0]
    k = 1
    while True:
        wk = -w[-1] * (d - k + 1.0) / k
        if wk == 0.0 or abs(wk) < tau:
            break
        if len(w) >= cap:
            if max_len is None:
                raise NonConvergence(
                    f"|w_k| still >= tau={tau} after {cap} weights at d={d}; "
                    "tau is too small for this order"
                )
            break
        w.append(wk)
        k += 1

    return FracdiffWeights(d=float(d), tau=float(tau), weights=np.array(w))


def ffd_transform(series: np.ndarray, weights: FracdiffWeights) -> FracdiffSeries:
    """Apply the fixed-width-window transform.

    Output at source index t (for t = l*..T-1) is sum_k w_k * series[t-k]
    over the fixed window k = 0..l*.  The dot products are evaluated in a
    fixed order, so results are bit-stable across runs.
    """
    x = np.asarray(series, dtype=float)
    if x.ndim != 1:
        raise ValueError("series must be one-dimensional")
    lstar = weights.cutoff
    if len(x) <= lstar:
        raise SeriesTooShort(
            f"series length {len(x)} does not exceed window cutoff {lstar}"
        )
    values = np.convolve(x, weights.weights, mode="valid")
    return FracdiffSeries(
        source_length=len(x),
        d=weights.d,
        tau=weights.tau,
        start_index=lstar,
        values=values,
    )


def expanding_fracdiff_oracle(
    series: np.ndarray, d: float, min_periods: int
) -> np.ndarray:
    """Expanding-window fractional difference (test oracle only).

    At each index t >= min_periods - 1 the full untruncated weight vector of
    length t+1 is applied to the history.  Returns the vector of outputs for
    t = min_periods-1 .. T-1.
    """
    x = np.asarray(series, dtype=float)
    if min_periods < 1:
        raise ValueError("min_periods must be >= 1")
    if len(x) < min_periods:
        raise SeriesTooShort(
            f"series length {len(x)} below min_periods {min_periods}"
        )
    w = _weight_sequence(d, len(x))
    out = np.empty(len(x) - min_periods + 1)
    for i, t in enumerate(range(min_periods - 1, len(x))):
        out[i] = float(np.dot(w[: t + 1], x[t::-1]))
    return out


def memory_correlation(original: np.ndarray, transformed: FracdiffSeries) -> float:
    """Pearson correlation between the source tail and its transform.

    Measures how much memory of the original series survives differencing;
    by construction it is exactly 1.0 when the transform is the identity.
    """
    x = np.asarray(original, dtype=float)
    if len(x) != transformed.source_length:
        raise ValueError("original length does not match transform source_length")
    aligned = x[transformed.start_index :]
    y = transformed.values
    if len(aligned) < 3:
        raise SeriesTooShort("need at least 3 overlapping points")
    if np.array_equal(aligned, y):
        return 1.0
    if np.std(aligned) == 0.0 or np.std(y) == 0.0:
        raise DegenerateVariance("correlation undefined for a constant vector")
    return float(np.corrcoef(aligned, y)[0, 1])
