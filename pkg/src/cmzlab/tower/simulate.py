"""Monte-Carlo simulation of synthetic towers.

Sharding contract: work is split across `shards` independent splitmix64
streams derived from the master seed; shard outputs are merged by summation
(histograms) or concatenation (per-return records) in shard order, so results
are bit-identical for a fixed (seed, shards) pair no matter how the shards
are executed.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import numpy as np

from .._rng import derive_seeds
from ..errors import DomainError
from . import _kernels
from .model import CmzModel, TailCurve

DEFAULT_RECORD_CAP = 1_000_000


@dataclass
class TowerSimSummary:
    """Empirical counterpart of exact_tails plus per-return proof quantities."""

    d_curve: TailCurve
    h_curve: TailCurve
    a_curve: TailCurve
    lap_numbers: np.ndarray      # sigma(A) per base return (lap number L)
    excursion_maxima: np.ndarray  # max_l R(A,l) per base return (I)
    n_returns: int
    steps: int


def _empirical_curve(counts: np.ndarray, kind: str) -> TailCurve:
    total = counts.sum()
    if total == 0:
        return TailCurve(np.empty(0, dtype=np.int64), np.empty(0), kind=kind, exact=False,
                         stderr=np.empty(0))
    above = np.cumsum(counts[::-1])[::-1]
    surv = np.empty(counts.size)
    surv[:-1] = above[1:] / total
    surv[-1] = 0.0
    stderr = np.sqrt(np.maximum(surv * (1.0 - surv), 0.0) / total)
    ns = np.arange(counts.size, dtype=np.int64)
    return TailCurve(ns, surv, kind=kind, exact=False, stderr=stderr)


def simulate_tower(
    model: CmzModel,
    steps: int,
    seed: int,
    shards: int = 1,
    record_cap: int = DEFAULT_RECORD_CAP,
) -> TowerSimSummary:
    """Sample the tower map for `steps` steps (i.i.d. cell draws at each
    base return) and return empirical D/H/A tails with binomial errors plus
    per-return lap numbers and longest-excursion records."""
    if steps < 0:
        raise DomainError("steps must be >= 0")
    if shards < 1:
        raise DomainError("shards must be >= 1")
    if steps == 0:
        empty = np.empty(0, dtype=np.int64)
        return TowerSimSummary(
            _empirical_curve(np.zeros(0, dtype=np.int64), "D"),
            _empirical_curve(np.zeros(0, dtype=np.int64), "H"),
            _empirical_curve(np.zeros(0, dtype=np.int64), "A"),
            empty, empty, 0, 0,
        )

    prob, alias = _kernels.build_alias(model.p)
    max_r_cell = np.maximum.reduceat(model.r_levels, model.offsets[:-1])
    d_size = int(model.sigma.max()) + 1
    h_size = int(model.r_levels.max()) + 1
    a_size = int(model.max_h) + 1

    seeds = derive_seeds(seed, shards)
    budgets = np.full(shards, steps // shards, dtype=np.int64)
    budgets[: steps % shards] += 1

    d_counts = np.zeros(d_size, dtype=np.int64)
    h_counts = np.zeros(h_size, dtype=np.int64)
    a_counts = np.zeros(a_size, dtype=np.int64)
    laps, excs = [], []
    n_returns = 0
    total_steps = 0
    for w in range(shards):
        if budgets[w] == 0:
            continue
        cap = max(0, record_cap - n_returns)
        lap_rec = np.zeros(min(cap, int(budgets[w])), dtype=np.int64)
        exc_rec = np.zeros_like(lap_rec)
        n_ret, t = _kernels.sim_tower_kernel(
            seeds[w], budgets[w], prob, alias, model.sigma, model.r_levels,
            model.offsets, model.h, max_r_cell,
            d_counts, h_counts, a_counts, lap_rec, exc_rec, lap_rec.size,
        )
        kept = min(int(n_ret), lap_rec.size)
        laps.append(lap_rec[:kept])
        excs.append(exc_rec[:kept])
        n_returns += int(n_ret)
        total_steps += int(t)

    return TowerSimSummary(
        d_curve=_empirical_curve(d_counts, "D"),
        h_curve=_empirical_curve(h_counts, "H"),
        a_curve=_empirical_curve(a_counts, "A"),
        lap_numbers=np.concatenate(laps) if laps else np.empty(0, dtype=np.int64),
        excursion_maxima=np.concatenate(excs) if excs else np.empty(0, dtype=np.int64),
        n_returns=n_returns,
        steps=total_steps,
    )


@dataclass
class BaseCorrelation:
    """Correlation estimates for base-supported observables on the tower."""

    lags: np.ndarray
    estimates: np.ndarray
    stderr: np.ndarray
    mean_f: float
    mean_g: float
    total_steps: int


def base_correlation(
    model: CmzModel,
    f_cell: np.ndarray,
    g_cell: Optional[np.ndarray],
    steps: int,
    max_lag: int,
    seed: int,
    shards: int = 32,
) -> BaseCorrelation:
    """C(f, g, n) along a simulated tower trajectory, streaming.

    f and g are given by their values on the base cells and vanish off the
    base, so the lag products reduce to renewal pairs; the kernel never
    materializes the trajectory.  Shards double as batches for the error
    estimate.
    """
    if steps < max_lag * 10:
        raise DomainError("trajectory must be >= 10 x max lag")
    f_cell = np.asarray(f_cell, dtype=float)
    g_cell = f_cell if g_cell is None else np.asarray(g_cell, dtype=float)
    if f_cell.size != model.n_cells or g_cell.size != model.n_cells:
        raise DomainError("observable arrays must have one value per cell")

    prob, alias = _kernels.build_alias(model.p)
    seeds = derive_seeds(seed, shards)
    budgets = np.full(shards, steps // shards, dtype=np.int64)
    budgets[: steps % shards] += 1

    accs = np.zeros((shards, max_lag + 1))
    sums_f = np.zeros(shards)
    sums_g = np.zeros(shards)
    totals = np.zeros(shards, dtype=np.int64)
    for w in range(shards):
        acc, sf, sg, t = _kernels.base_correlation_kernel(
            seeds[w], budgets[w], prob, alias, model.h, f_cell, g_cell, max_lag
        )
        accs[w] = acc
        sums_f[w] = sf
        sums_g[w] = sg
        totals[w] = t

    lags = np.arange(max_lag + 1)
    grand_t = float(totals.sum())
    mean_f = float(sums_f.sum()) / grand_t
    mean_g = float(sums_g.sum()) / grand_t
    denom = totals.sum() - lags
    est = accs.sum(axis=0) / denom - mean_f * mean_g

    per_shard = accs / (totals[:, None] - lags[None, :]) \
        - (sums_f / totals)[:, None] * (sums_g / totals)[:, None]
    stderr = per_shard.std(axis=0, ddof=1) / np.sqrt(shards) if shards > 1 \
        else np.full(max_lag + 1, np.nan)

    return BaseCorrelation(
        lags=lags,
        estimates=est,
        stderr=stderr,
        mean_f=mean_f,
        mean_g=mean_g,
        total_steps=int(grand_t),
    )
