"""Statistical estimators and theoretical predictors.

Covers the empirical side (tail curves, lag correlations with batch-means
errors, CLT block diagnostics) and the closed-form side (predicted
correlation asymptote for base-supported observables, the zeta error term,
the Green-Kubo variance, ASIP rate evaluation).
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass
from typing import Callable, Optional, Sequence, Union

import numpy as np
from scipy import stats

from . import rv
from .errors import (
    ContractViolationError,
    DomainError,
    InsufficientDataError,
)
from .tower.model import TailCurve

# ---------------------------------------------------------------------------
# observables
# ---------------------------------------------------------------------------


def smooth_bump(u) -> np.ndarray:
    """C-infinity bump exp(1 - 1/(1-u^2)) on |u| < 1, zero outside."""
    u = np.asarray(u, dtype=float)
    out = np.zeros_like(u)
    inside = np.abs(u) < 1.0
    out[inside] = np.exp(1.0 - 1.0 / (1.0 - u[inside] ** 2))
    return out


@dataclass(frozen=True)
class Observable:
    """A bounded observable of the section state.

    ``support`` is "M" (whole section) or "Mhat" (vanishes off the fast
    subset).  The dynamical-regularity constants (theta, hnorm_bound) are
    declared metadata only; eta is the Hölder exponent of the closed form.
    """

    name: str
    support: str
    fn: Callable[..., np.ndarray]
    sup_bound: float
    eta: float = 1.0
    mean_zero: bool = False
    theta: float = 0.5
    hnorm_bound: Optional[float] = None

    def __post_init__(self):
        if self.support not in ("M", "Mhat"):
            raise DomainError("support must be 'M' or 'Mhat'")
        if not (0.0 < self.eta <= 1.0):
            raise DomainError("eta must lie in (0, 1]")

    def __call__(self, *coords):
        vals = self.fn(*coords)
        return vals


def bump_observable(
    name: str,
    center: Sequence[float],
    width: Sequence[float],
    offset: float = 0.0,
    amplitude: float = 1.0,
    support: str = "Mhat",
) -> Observable:
    """offset + amplitude * product of coordinate bumps around `center`."""
    center = np.asarray(center, dtype=float)
    width = np.asarray(width, dtype=float)
    if np.any(width <= 0):
        raise DomainError("widths must be positive")

    def fn(*coords):
        coords = np.broadcast_arrays(*[np.asarray(c, dtype=float) for c in coords])
        val = np.full(coords[0].shape, float(offset))
        prod = np.ones(coords[0].shape)
        for c, mu, w in zip(coords, center, width):
            prod = prod * smooth_bump((c - mu) / w)
        return val + amplitude * prod

    return Observable(
        name=name,
        support=support,
        fn=fn,
        sup_bound=abs(offset) + abs(amplitude),
    )


# ---------------------------------------------------------------------------
# empirical tails
# ---------------------------------------------------------------------------


def empirical_tail(samples, kind: str = "R-level") -> TailCurve:
    """Survival P(sample > n) with binomial standard errors."""
    samples = np.asarray(samples)
    if samples.size == 0:
        raise InsufficientDataError("no samples after filtering")
    if np.any(samples < 0):
        raise DomainError("samples must be non-negative integers")
    counts = np.bincount(samples.astype(np.int64))
    return tail_from_counts(counts, kind=kind)


def tail_from_counts(counts: np.ndarray, kind: str = "R-level") -> TailCurve:
    """Survival curve from a histogram of non-negative integer samples."""
    counts = np.asarray(counts, dtype=np.int64)
    total = int(counts.sum())
    if total == 0:
        raise InsufficientDataError("no samples after filtering")
    above = np.cumsum(counts[::-1])[::-1]
    surv = np.empty(counts.size)
    surv[:-1] = above[1:] / total
    surv[-1] = 0.0
    stderr = np.sqrt(np.maximum(surv * (1.0 - surv), 0.0) / total)
    return TailCurve(np.arange(counts.size), surv, kind=kind, exact=False, stderr=stderr)


# ---------------------------------------------------------------------------
# correlations
# ---------------------------------------------------------------------------


@dataclass
class CorrelationCurve:
    lags: np.ndarray
    estimates: np.ndarray
    stderr: np.ndarray
    n_samples: int
    mean_f: float = 0.0
    mean_g: float = 0.0
    scale_f: float = 1.0

    def __post_init__(self):
        self.lags = np.asarray(self.lags, dtype=np.int64)
        self.estimates = np.asarray(self.estimates, dtype=float)
        self.stderr = np.asarray(self.stderr, dtype=float)

    def value(self, n: int) -> float:
        i = int(np.searchsorted(self.lags, n))
        if i >= self.lags.size or self.lags[i] != n:
            raise DomainError(f"lag {n} not in curve")
        return float(self.estimates[i])

    def centered(self) -> "CorrelationCurve":
        """The same curve viewed as that of the mean-subtracted observable.

        The estimator already subtracts the empirical means, so centering
        only clears the recorded mean metadata.
        """
        return CorrelationCurve(self.lags, self.estimates, self.stderr,
                                self.n_samples, 0.0, 0.0, self.scale_f)

    def to_csv(self, path, metadata: Optional[dict] = None) -> None:
        with open(path, "w", newline="") as fh:
            for key, val in (metadata or {}).items():
                fh.write(f"# {key}={val}\n")
            writer = csv.writer(fh)
            writer.writerow(["n", "estimate", "stderr", "samples"])
            for i in range(self.lags.size):
                writer.writerow([int(self.lags[i]), repr(float(self.estimates[i])),
                                 repr(float(self.stderr[i])), self.n_samples])


def default_lag_grid(max_lag: int, include_zero: bool = True) -> np.ndarray:
    """Geometric lag grid 1, 2, 3, 5, 8, 13, ... up to max_lag."""
    lags = [0] if include_zero else []
    a, b = 1, 2
    while a <= max_lag:
        lags.append(a)
        a, b = b, a + b
    if lags[-1] != max_lag:
        lags.append(max_lag)
    return np.asarray(lags, dtype=np.int64)


def _windowed_corr(f: np.ndarray, g: np.ndarray, n: int) -> float:
    """avg(f_t g_{t+n}) - avg(f_t) avg(g_{t+n}) over the aligned window.

    Computed in the centered form mean((a - abar)(b - bbar)), which is the
    same quantity with far less cancellation error.
    """
    T = f.size
    if n >= T:
        raise InsufficientDataError("lag exceeds trajectory length")
    a = f[: T - n]
    b = g[n:]
    return float(np.dot(a - a.mean(), b - b.mean()) / a.size)


def correlation(
    f_values,
    g_values=None,
    lags: Optional[Sequence[int]] = None,
    batch_length: Optional[int] = None,
) -> CorrelationCurve:
    """Lag correlations with non-overlapping batch-means standard errors.

    The estimate at lag n is avg(f_t g_{t+n}) - avg(f) avg(g) with the means
    taken over the aligned windows, so the estimator is exactly bilinear and
    invariant under constant shifts.
    """
    f = np.asarray(f_values, dtype=float)
    g = f if g_values is None else np.asarray(g_values, dtype=float)
    if f.shape != g.shape or f.ndim != 1:
        raise DomainError("f and g must be 1-d arrays of equal length")
    lags = np.asarray(default_lag_grid(30) if lags is None else lags, dtype=np.int64)
    max_lag = int(lags.max())
    if f.size < 10 * max(max_lag, 1):
        raise InsufficientDataError("trajectory must be >= 10 x max lag")
    if batch_length is None:
        batch_length = max(f.size // 100, 10 * max(max_lag, 1))
    if batch_length < 10 * max(max_lag, 1):
        raise InsufficientDataError("batch length must be >= 10 x max lag")
    n_batches = f.size // batch_length
    if n_batches < 2:
        raise InsufficientDataError("need at least 2 batches")

    est = np.array([_windowed_corr(f, g, int(n)) for n in lags])
    per_batch = np.empty((n_batches, lags.size))
    for bi in range(n_batches):
        sl = slice(bi * batch_length, (bi + 1) * batch_length)
        per_batch[bi] = [_windowed_corr(f[sl], g[sl], int(n)) for n in lags]
    stderr = per_batch.std(axis=0, ddof=1) / math.sqrt(n_batches)
    return CorrelationCurve(
        lags=lags,
        estimates=est,
        stderr=stderr,
        n_samples=f.size,
        mean_f=float(f.mean()),
        mean_g=float(g.mean()),
        scale_f=float(np.sqrt(np.mean(f**2))) or 1.0,
    )


def predicted_correlation(
    a_tail: Union[rv.RegVarSpec, TailCurve],
    h_bar: float,
    int_f: float,
    int_g: float,
    n: int,
) -> float:
    """h_bar * sum_{k>=n} A_k * |int f * int g|, the nonzero-mean asymptote.

    With an exact A-curve from a finite model the sum is exact; with a
    regularly varying proxy it uses the certified tail sum.  Returns 0 for
    centered observables (the caller must switch to the centered regime).
    """
    prod = int_f * int_g
    if prod == 0.0:
        return 0.0
    if isinstance(a_tail, TailCurve):
        if not a_tail.exact or a_tail.kind != "A":
            raise DomainError("tail curve predictor needs an exact A-curve")
        if a_tail.survival[-1] != 0.0:
            raise DomainError("A-curve must extend to the end of its support")
        if n > int(a_tail.n[-1]):
            return 0.0
        tail_sum = float(np.sum(a_tail.survival[n:]))
    else:
        tail_sum = rv.tail_sum_and_integral(a_tail, n).sum
    return h_bar * tail_sum * abs(prod)


def zeta(a: float, n: int) -> float:
    """The correlation error term: n^-a (a>2), n^-2 log n (a=2), n^-2(a-1) else."""
    if a <= 1:
        raise DomainError("zeta requires a > 1")
    if n < 2:
        raise DomainError("zeta requires n >= 2")
    if a > 2:
        return float(n) ** (-a)
    if a == 2:
        return float(n) ** -2.0 * math.log(n)
    return float(n) ** (-2.0 * (a - 1.0))


# ---------------------------------------------------------------------------
# variance and ASIP diagnostics
# ---------------------------------------------------------------------------


@dataclass
class GreenKuboResult:
    c2: float
    partial: float
    tail_bound: float
    stderr: float
    max_lag: int


def green_kubo_variance(
    curve: CorrelationCurve,
    center_tol: float = 1e-6,
    tail_fraction: float = 0.05,
) -> GreenKuboResult:
    """c^2 = C(0) + 2 sum_{n>=1} C(n), truncated with a reported tail bound.

    Requires a centered observable and a dense lag grid 0..L; the truncation
    tail is bounded by extrapolating the fitted decay of |C| and must stay
    below `tail_fraction` of the partial sum.
    """
    if abs(curve.mean_f) > center_tol * max(curve.scale_f, 1e-300):
        raise ContractViolationError(
            f"green-kubo needs a centered observable (mean {curve.mean_f:.3g})"
        )
    L = int(curve.lags[-1])
    if not np.array_equal(curve.lags, np.arange(L + 1)):
        raise DomainError("green-kubo needs the dense lag grid 0..L")
    partial = float(curve.estimates[0] + 2.0 * np.sum(curve.estimates[1:]))
    tail_bound = _decay_tail_bound(curve)
    if abs(partial) > 0 and tail_bound > tail_fraction * abs(partial):
        raise InsufficientDataError(
            f"correlation tail bound {tail_bound:.3g} exceeds {tail_fraction:.0%} "
            f"of the partial sum {partial:.3g}; extend the lag range"
        )
    stderr = float(np.sqrt(curve.stderr[0] ** 2 + 4.0 * np.sum(curve.stderr[1:] ** 2)))
    return GreenKuboResult(c2=partial + 0.0, partial=partial, tail_bound=tail_bound,
                           stderr=stderr, max_lag=L)


def _decay_tail_bound(curve: CorrelationCurve) -> float:
    """Extrapolated bound on 2 sum_{n>L} |C(n)| from the fitted decay."""
    L = int(curve.lags[-1])
    k = max(3, L // 4)
    tail_abs = np.abs(curve.estimates[-k:])
    noise = float(np.median(curve.stderr[-k:])) if np.all(np.isfinite(curve.stderr[-k:])) else 0.0
    if np.all(tail_abs <= 4.0 * noise + 1e-300):
        return 0.0  # indistinguishable from zero beyond the window
    sel = curve.estimates[L // 2 :]
    ns = curve.lags[L // 2 :].astype(float)
    pos = sel > 0
    if pos.sum() >= 3:
        fit = rv.estimate_index(np.column_stack([ns[pos], sel[pos]]), (ns[0], ns[-1]))
        slope = fit.alpha
        if slope > 1.0:
            c_l = float(np.abs(curve.estimates[-1]))
            return 2.0 * c_l * L / (slope - 1.0)
    # cannot certify decay: bound by the observed envelope, flagged large
    return 2.0 * float(tail_abs.max()) * L


def asip_rate(beta: float, gamma: float, eps: float, n: int) -> float:
    """n^(1/beta) * (log n)^((1+gamma)/beta + eps), the ASIP error rate."""
    if beta <= 2:
        raise DomainError("ASIP rate is out of theorem scope for beta <= 2")
    if eps <= 0:
        raise DomainError("eps must be positive")
    if n < 2:
        raise DomainError("n must be >= 2")
    return float(n) ** (1.0 / beta) * math.log(n) ** ((1.0 + gamma) / beta + eps)


def asip_exponent_pair(beta: float, gamma: float = 0.0) -> tuple[float, float]:
    """(power exponent, log exponent before the +eps) of the ASIP rate."""
    if beta <= 2:
        raise DomainError("ASIP rate is out of theorem scope for beta <= 2")
    return 1.0 / beta, (1.0 + gamma) / beta


@dataclass
class CltReport:
    n_blocks: int
    skewness: float
    kurtosis: float
    normality_pvalue: float
    variance_ratio: dict
    degenerate: bool


def block_sums(values: np.ndarray, block_length: int) -> np.ndarray:
    """Partial sums over disjoint blocks of the given length."""
    values = np.asarray(values, dtype=float)
    n = values.size // block_length
    if n == 0:
        raise InsufficientDataError("series shorter than one block")
    return values[: n * block_length].reshape(n, block_length).sum(axis=1)


def clt_diagnostic(blocks: Union[np.ndarray, dict], block_length: Optional[int] = None) -> CltReport:
    """Moment and normality diagnostics for block sums of a centered observable.

    `blocks` is either a dict {block_length: block_sums} or the block-sum
    array at a single length (then `block_length` is required); the
    variance-ratio entry for each length is Var(S_n)/n, which should
    converge to the Green-Kubo c^2.
    """
    if isinstance(blocks, dict):
        table = {int(k): np.asarray(v, dtype=float) for k, v in blocks.items()}
    else:
        if block_length is None:
            raise DomainError("block_length is required with a plain block-sum array")
        table = {int(block_length): np.asarray(blocks, dtype=float)}
    main_len = max(table)
    main = table[main_len]
    if main.size < 100:
        raise InsufficientDataError("need >= 100 blocks")
    var = float(np.var(main, ddof=1))
    if var == 0.0:
        return CltReport(
            n_blocks=main.size, skewness=0.0, kurtosis=0.0,
            normality_pvalue=math.nan,
            variance_ratio={k: 0.0 for k in table},
            degenerate=True,
        )
    ratio = {k: float(np.var(v, ddof=1)) / k for k, v in table.items()}
    return CltReport(
        n_blocks=main.size,
        skewness=float(stats.skew(main)),
        kurtosis=float(stats.kurtosis(main)),
        normality_pvalue=float(stats.normaltest(main).pvalue),
        variance_ratio=ratio,
        degenerate=False,
    )
