"""Numba kernels for tower simulation.

All kernels draw randomness from an inlined splitmix64 stream so that results
are bit-stable across platforms and numba versions, and deterministic per
(seed, shard) pair.
"""

from __future__ import annotations

import numpy as np
from numba import njit

_GAMMA = np.uint64(0x9E3779B97F4A7C15)
_M1 = np.uint64(0xBF58476D1CE4E5B9)
_M2 = np.uint64(0x94D049BB133111EB)
_INV53 = 1.1102230246251565e-16  # 2^-53


@njit(inline="always")
def _next_state(state):
    return state + _GAMMA


@njit(inline="always")
def _mix(state):
    z = state
    z = (z ^ (z >> np.uint64(30))) * _M1
    z = (z ^ (z >> np.uint64(27))) * _M2
    return z ^ (z >> np.uint64(31))


@njit(inline="always")
def _u01(state):
    """Advance the state and return (state, uniform in [0,1))."""
    state = _next_state(state)
    return state, float(_mix(state) >> np.uint64(11)) * _INV53


@njit(inline="always")
def _draw_cell(state, prob, alias):
    state, u = _u01(state)
    x = u * prob.size
    i = np.int64(x)
    if x - i < prob[i]:
        return state, i
    return state, alias[i]


def build_alias(p: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Vose alias table for sampling cell indices by mass (deterministic)."""
    n = p.size
    prob = np.zeros(n)
    alias = np.zeros(n, dtype=np.int64)
    scaled = p * n / p.sum()
    small = [i for i in range(n) if scaled[i] < 1.0]
    large = [i for i in range(n) if scaled[i] >= 1.0]
    scaled = scaled.copy()
    while small and large:
        s = small.pop()
        l = large.pop()
        prob[s] = scaled[s]
        alias[s] = l
        scaled[l] = (scaled[l] + scaled[s]) - 1.0
        (small if scaled[l] < 1.0 else large).append(l)
    for i in large:
        prob[i] = 1.0
    for i in small:
        prob[i] = 1.0
    return prob, alias


@njit(cache=True)
def sim_tower_kernel(
    seed,
    steps,
    prob,
    alias,
    sigma,
    r_flat,
    offsets,
    h,
    max_r_cell,
    d_counts,
    h_counts,
    a_counts,
    lap_rec,
    exc_rec,
    rec_cap,
):
    """Walk the full tower for >= `steps` map steps; returns #base returns.

    Each base return draws a cell A by mass (i.i.d. full-branch base), visits
    all sigma(A) inner-tower levels once, and consumes h(A) map steps.  Counts
    are histogram increments so merging shards is plain summation.
    """
    state = np.uint64(seed)
    t = np.int64(0)
    n_ret = np.int64(0)
    while t < steps:
        state, cell = _draw_cell(state, prob, alias)
        s = sigma[cell]
        lo = offsets[cell]
        a_counts[h[cell]] += 1
        for l in range(s):
            d_counts[s - l] += 1
            h_counts[r_flat[lo + l]] += 1
        if n_ret < rec_cap:
            lap_rec[n_ret] = s
            exc_rec[n_ret] = max_r_cell[cell]
        t += h[cell]
        n_ret += 1
    return n_ret, t


@njit(cache=True)
def base_correlation_kernel(seed, steps, prob, alias, h, f_cell, g_cell, max_lag):
    """Streaming correlation sums for base-supported observables.

    The trajectory visits the base at renewal times T_0=0 < T_1 < ...; the
    observables vanish off the base, so sum_t f_t g_{t+n} only receives
    contributions from renewal pairs at distance n.  Returns
    (acc[0..max_lag], sum_f, sum_g, total_steps).
    """
    state = np.uint64(seed)
    ring = max_lag + 1
    ring_t = np.full(ring, -np.int64(2) * max_lag, dtype=np.int64)
    ring_f = np.zeros(ring)
    head = -1
    acc = np.zeros(max_lag + 1)
    sum_f = 0.0
    sum_g = 0.0
    t = np.int64(0)
    while t < steps:
        state, cell = _draw_cell(state, prob, alias)
        fv = f_cell[cell]
        gv = g_cell[cell]
        acc[0] += fv * gv
        # pair with recent renewals (f at the earlier time, g at the later)
        for back in range(1, ring):
            j = (head - back + 1) % ring
            lag = t - ring_t[j]
            if lag > max_lag:
                break
            acc[lag] += ring_f[j] * gv
        head = (head + 1) % ring
        ring_t[head] = t
        ring_f[head] = fv
        sum_f += fv
        sum_g += gv
        t += h[cell]
    return acc, sum_f, sum_g, t


@njit(cache=True)
def hat_ratio_mc_kernel(
    seed, n_samples, start_cells, start_levels, start_cdf, prob, alias,
    sigma, r_flat, offsets, thresh, max_steps,
):
    """Monte-Carlo estimate of the hat-set hit probability from R_k starts."""
    state = np.uint64(seed)
    hits = np.int64(0)
    for _ in range(n_samples):
        state, u = _u01(state)
        idx = np.searchsorted(start_cdf, u)
        if idx >= start_cells.size:
            idx = start_cells.size - 1
        cell = start_cells[idx]
        level = start_levels[idx]
        remaining = max_steps
        hit = False
        while remaining > 0:
            level += 1
            if level >= sigma[cell]:
                state, cell = _draw_cell(state, prob, alias)
                level = 0
            if r_flat[offsets[cell] + level] >= thresh:
                hit = True
                break
            remaining -= 1
        if hit:
            hits += 1
    return hits
