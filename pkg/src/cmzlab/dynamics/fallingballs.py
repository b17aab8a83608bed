"""Event-driven simulation of two gravitating balls on a vertical halfline.

Both balls fall with acceleration -g; the lower ball (mass m1) bounces
elastically off the floor and the two balls collide elastically with each
other.  With m1 > m2 the collision map is hyperbolic and ergodic on the
constant-energy surface.  The collision section M consists of all collision
events (floor and ball-ball); the fast subset is the set of ball-ball
collisions, where the section is coordinatized by the post-collision
velocities (v1, v2) with the height q fixed by energy conservation.

Free flight is integrated in closed form (the relative coordinate moves
linearly, the floor event is the positive root of a quadratic), so energy is
conserved to rounding error: the drift over 1e6 events stays far below the
1e-9 relative contract.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional

import numpy as np
from numba import njit

from .._rng import derive_seeds
from ..errors import DomainError

#: simultaneous floor / ball-ball events closer than this are tie-broken
TIE_EPS = 1e-12

EVENT_FLOOR = 0
EVENT_BALLS = 1


@dataclass(frozen=True)
class FallingBallsParams:
    m1: float = 2.0
    m2: float = 1.0
    g: float = 1.0
    energy: float = 6.0

    def __post_init__(self):
        if not (self.m1 > self.m2 > 0):
            raise DomainError("masses must satisfy m1 > m2 > 0 (lower ball heavier)")
        if self.g <= 0 or self.energy <= 0:
            raise DomainError("gravity and energy must be positive")


@dataclass(frozen=True)
class FallingBallsState:
    q1: float
    q2: float
    v1: float
    v2: float

    def validate(self, params: FallingBallsParams, tol: float = 1e-9) -> None:
        if not (0.0 <= self.q1 <= self.q2 + 1e-15):
            raise DomainError("heights must satisfy 0 <= q1 <= q2")
        drift = abs(energy(self, params) - params.energy) / params.energy
        if drift > tol:
            raise DomainError(f"state off the energy surface (relative drift {drift:.2e})")


def energy(state: FallingBallsState, params: FallingBallsParams) -> float:
    kin = 0.5 * params.m1 * state.v1**2 + 0.5 * params.m2 * state.v2**2
    pot = params.g * (params.m1 * state.q1 + params.m2 * state.q2)
    return kin + pot


def elastic_velocities(m1: float, m2: float, v1: float, v2: float) -> tuple[float, float]:
    """1-d elastic collision law; allows m1 == m2 (velocity swap)."""
    total = m1 + m2
    return (
        ((m1 - m2) * v1 + 2.0 * m2 * v2) / total,
        ((m2 - m1) * v2 + 2.0 * m1 * v1) / total,
    )


def falling_balls_step(
    state: FallingBallsState, params: FallingBallsParams
) -> tuple[FallingBallsState, dict]:
    """Advance to the next collision event and apply its reflection law.

    Returns the post-event state and an event record with kind
    ("floor" | "ball-ball"), flight time and a degenerate-tie flag.
    """
    q1, q2, v1, v2 = state.q1, state.q2, state.v1, state.v2
    g = params.g
    t_floor = (v1 + math.sqrt(v1 * v1 + 2.0 * g * q1)) / g
    if v1 > v2:
        t_balls = (q2 - q1) / (v1 - v2)
    else:
        t_balls = math.inf
        if q2 == q1 and v1 == v2:
            raise DomainError("coincident balls with zero relative velocity")
    if not (t_floor > 0.0) and not (t_balls < math.inf):
        raise DomainError("no admissible event from this state (degenerate rest state)")

    tie = abs(t_floor - t_balls) < TIE_EPS
    if t_floor <= t_balls or tie:  # floor first on ties
        t = t_floor
        kind = "floor"
        q2_new = q2 + v2 * t - 0.5 * g * t * t
        new = FallingBallsState(0.0, q2_new, -(v1 - g * t), v2 - g * t)
    else:
        t = t_balls
        kind = "ball-ball"
        q = q1 + v1 * t - 0.5 * g * t * t
        w1, w2 = v1 - g * t, v2 - g * t
        u1, u2 = elastic_velocities(params.m1, params.m2, w1, w2)
        new = FallingBallsState(q, q, u1, u2)
    return new, {"kind": kind, "flight_time": t, "degenerate_tie": tie}


def fiducial_state(params: FallingBallsParams, jitter: float = 0.0) -> FallingBallsState:
    """A deterministic on-shell starting point: lower ball on the floor.

    `jitter` in [0, 1) shifts the energy split between the balls, used to
    decorrelate independent workers before burn-in.
    """
    frac = 0.35 + 0.3 * jitter
    e2 = frac * params.energy  # ball 2: half kinetic, half potential
    q2 = 0.5 * e2 / (params.g * params.m2)
    v2 = math.sqrt(e2 / params.m2)
    e1 = params.energy - e2
    v1 = math.sqrt(2.0 * e1 / params.m1)
    return FallingBallsState(0.0, q2, v1, v2)


# ---------------------------------------------------------------------------
# kernels
# ---------------------------------------------------------------------------


@njit(cache=True, inline="always")
def _advance(q1, q2, v1, v2, m1, m2, g):
    """One collision event; returns (q1, q2, v1, v2, kind, flight_t)."""
    t_floor = (v1 + math.sqrt(v1 * v1 + 2.0 * g * q1)) / g
    if v1 > v2:
        t_balls = (q2 - q1) / (v1 - v2)
    else:
        t_balls = math.inf
    if t_floor <= t_balls or abs(t_floor - t_balls) < TIE_EPS:
        t = t_floor
        q2n = q2 + v2 * t - 0.5 * g * t * t
        return 0.0, q2n, -(v1 - g * t), v2 - g * t, EVENT_FLOOR, t
    t = t_balls
    q = q1 + v1 * t - 0.5 * g * t * t
    w1 = v1 - g * t
    w2 = v2 - g * t
    total = m1 + m2
    u1 = ((m1 - m2) * w1 + 2.0 * m2 * w2) / total
    u2 = ((m2 - m1) * w2 + 2.0 * m1 * w1) / total
    return q, q, u1, u2, EVENT_BALLS, t


@njit(cache=True)
def fb_run_kernel(q1, q2, v1, v2, m1, m2, g, e0, n_events, r_hist):
    """Run n_events collisions; histogram the return time R to ball-ball
    collisions (overflow lumped into the last bin) and track energy drift.

    Returns (state..., n_returns, max_rel_drift, n_floor, n_balls).
    """
    cap = r_hist.size - 1
    since = 0
    n_ret = 0
    n_floor = 0
    n_balls = 0
    drift = 0.0
    for _ in range(n_events):
        q1, q2, v1, v2, kind, _t = _advance(q1, q2, v1, v2, m1, m2, g)
        since += 1
        if kind == EVENT_BALLS:
            n_balls += 1
            r = since if since < cap else cap
            r_hist[r] += 1
            n_ret += 1
            since = 0
            e = 0.5 * m1 * v1 * v1 + 0.5 * m2 * v2 * v2 + g * (m1 * q1 + m2 * q2)
            d = abs(e - e0) / e0
            if d > drift:
                drift = d
        else:
            n_floor += 1
    return q1, q2, v1, v2, n_ret, drift, n_floor, n_balls


@njit(cache=True)
def fb_burn_in_kernel(q1, q2, v1, v2, m1, m2, g, n_events):
    for _ in range(n_events):
        q1, q2, v1, v2, _k, _t = _advance(q1, q2, v1, v2, m1, m2, g)
    return q1, q2, v1, v2


@njit(cache=True)
def fb_stream_kernel(q1, q2, v1, v2, m1, m2, g, n_returns, out):
    """Record (R, q, v1, v2) at the next n_returns ball-ball collisions."""
    got = 0
    since = 0
    while got < n_returns:
        q1, q2, v1, v2, kind, _t = _advance(q1, q2, v1, v2, m1, m2, g)
        since += 1
        if kind == EVENT_BALLS:
            out[got, 0] = since
            out[got, 1] = q1
            out[got, 2] = v1
            out[got, 3] = v2
            got += 1
            since = 0
    return q1, q2, v1, v2


@njit(cache=True)
def fb_return_map_kernel(v1s, v2s, m1, m2, g, e0, out):
    """First-return map on the ball-ball section in (v1, v2) coordinates.

    Each input point is lifted to the full state via energy conservation;
    out rows are (v1', v2', R, valid).
    """
    for i in range(v1s.size):
        v1 = v1s[i]
        v2 = v2s[i]
        kin = 0.5 * m1 * v1 * v1 + 0.5 * m2 * v2 * v2
        pot = e0 - kin
        if pot < 0.0:
            out[i, 3] = 0.0
            continue
        q = pot / (g * (m1 + m2))
        q1 = q
        q2 = q
        steps = 0
        for _ in range(100_000_000):
            q1, q2, v1, v2, kind, _t = _advance(q1, q2, v1, v2, m1, m2, g)
            steps += 1
            if kind == EVENT_BALLS:
                break
        out[i, 0] = v1
        out[i, 1] = v2
        out[i, 2] = steps
        out[i, 3] = 1.0
    return out


@njit(cache=True)
def fb_observable_kernel(
    q1, q2, v1, v2, m1, m2, g,
    n_events, c1, c2, w1, w2, offset, amp, mhat_only,
    max_lag, acc, block_len, block_sums_out,
):
    """Stream a bump observable of (v1, v2) at collision events.

    Accumulates lag products acc[0..max_lag] of f along the full collision
    chain (f vanishes at floor events when mhat_only), plus disjoint block
    sums of f for CLT diagnostics.  Returns (state..., sum_f, n_events,
    n_blocks_filled).
    """
    ring = np.zeros(max_lag + 1)
    head = -1
    sum_f = 0.0
    blk_acc = 0.0
    blk_cnt = 0
    blk_i = 0
    for step in range(n_events):
        q1, q2, v1, v2, kind, _t = _advance(q1, q2, v1, v2, m1, m2, g)
        f = 0.0
        if kind == EVENT_BALLS or not mhat_only:
            f = offset
            u1 = (v1 - c1) / w1
            u2 = (v2 - c2) / w2
            if abs(u1) < 1.0 and abs(u2) < 1.0:
                f += amp * math.exp(2.0 - 1.0 / (1.0 - u1 * u1) - 1.0 / (1.0 - u2 * u2))
        head = (head + 1) % (max_lag + 1)
        ring[head] = f
        for lag in range(0, max_lag + 1):
            if lag > step:
                break
            j = head - lag
            if j < 0:
                j += max_lag + 1
            acc[lag] += ring[j] * f
        sum_f += f
        blk_acc += f
        blk_cnt += 1
        if blk_cnt == block_len:
            if blk_i < block_sums_out.size:
                block_sums_out[blk_i] = blk_acc
                blk_i += 1
            blk_acc = 0.0
            blk_cnt = 0
    return q1, q2, v1, v2, sum_f, blk_i


# ---------------------------------------------------------------------------
# python-facing system wrapper
# ---------------------------------------------------------------------------


@dataclass
class ReturnStream:
    """Successive first returns to the fast subset, with section states."""

    r_values: np.ndarray          # return times (T-steps between returns)
    states: np.ndarray            # per-return section coordinates
    worker: np.ndarray            # worker id per row
    n_events_total: int
    n_returns: int
    quality: dict

    def kac_gap(self) -> float:
        """|mean(R) * mu_hat - 1| with mu_hat the empirical visit frequency."""
        mu_hat = self.n_returns / self.n_events_total
        return abs(float(self.r_values.mean()) * mu_hat - 1.0)

    def to_csv(self, path, flavor: str) -> None:
        """Export rows; flavor 'falling-balls' (q1,q2,v1,v2) or 'billiard'
        (arc,s,phi)."""
        if flavor == "falling-balls":
            header = "worker,index,R,q1,q2,v1,v2"
        elif flavor == "billiard":
            header = "worker,index,R,arc,s,phi"
        else:
            raise DomainError("flavor must be 'falling-balls' or 'billiard'")
        with open(path, "w") as fh:
            fh.write(header + "\n")
            for i in range(self.n_returns):
                state = self.states[i]
                if flavor == "falling-balls":
                    # ball-ball section: both heights coincide
                    cols = [repr(float(state[0])), repr(float(state[0])),
                            repr(float(state[1])), repr(float(state[2]))]
                else:
                    cols = [str(int(state[0])), repr(float(state[1])),
                            repr(float(state[2]))]
                fh.write(f"{int(self.worker[i])},{i},{int(self.r_values[i])},"
                         + ",".join(cols) + "\n")


class FallingBallsSystem:
    """Event-driven two-ball system bound to fixed parameters."""

    def __init__(self, params: Optional[FallingBallsParams] = None):
        self.params = params or FallingBallsParams()

    # invariant sampling is by ergodic burn-in from a jittered fiducial point
    def sample_invariant(self, seed: int, burn_in: int = 100_000) -> FallingBallsState:
        p = self.params
        jitter = (int(seed) % (2**24)) / float(2**24)
        st = fiducial_state(p, jitter)
        if burn_in == 0:
            return st
        q1, q2, v1, v2 = fb_burn_in_kernel(
            st.q1, st.q2, st.v1, st.v2, p.m1, p.m2, p.g, burn_in
        )
        return FallingBallsState(q1, q2, v1, v2)

    def return_tail_counts(
        self, n_events: int, seed: int, workers: int = 1,
        burn_in: int = 100_000, r_cap: int = 100_000,
    ) -> tuple[np.ndarray, dict]:
        """Histogram of R over >= n_events collisions, merged across workers."""
        p = self.params
        hist = np.zeros(r_cap + 1, dtype=np.int64)
        seeds = derive_seeds(seed, workers)
        budgets = np.full(workers, n_events // workers, dtype=np.int64)
        budgets[: n_events % workers] += 1
        drift = 0.0
        totals = {"floor": 0, "balls": 0}
        for w in range(workers):
            st = self.sample_invariant(int(seeds[w]), burn_in)
            e0 = energy(st, p)
            *_state, n_ret, d, n_floor, n_balls = fb_run_kernel(
                st.q1, st.q2, st.v1, st.v2, p.m1, p.m2, p.g, e0,
                budgets[w], hist,
            )
            drift = max(drift, d)
            totals["floor"] += int(n_floor)
            totals["balls"] += int(n_balls)
        quality = {"max_rel_energy_drift": drift, **totals}
        return hist, quality

    def first_return_stream(
        self, n_returns: int, seed: int, workers: int = 1, burn_in: int = 100_000
    ) -> ReturnStream:
        p = self.params
        seeds = derive_seeds(seed, workers)
        budgets = np.full(workers, n_returns // workers, dtype=np.int64)
        budgets[: n_returns % workers] += 1
        rows = []
        worker_ids = []
        for w in range(workers):
            st = self.sample_invariant(int(seeds[w]), burn_in)
            out = np.empty((int(budgets[w]), 4))
            fb_stream_kernel(st.q1, st.q2, st.v1, st.v2, p.m1, p.m2, p.g,
                             int(budgets[w]), out)
            rows.append(out)
            worker_ids.append(np.full(int(budgets[w]), w, dtype=np.int64))
        all_rows = np.concatenate(rows)
        r_vals = all_rows[:, 0].astype(np.int64)
        return ReturnStream(
            r_values=r_vals,
            states=all_rows[:, 1:],
            worker=np.concatenate(worker_ids),
            n_events_total=int(r_vals.sum()),
            n_returns=int(r_vals.size),
            quality={},
        )

    def return_map(self, v1s: np.ndarray, v2s: np.ndarray) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        """(image points (v1', v2'), R, valid mask) for section points."""
        p = self.params
        out = np.zeros((v1s.size, 4))
        fb_return_map_kernel(
            np.ascontiguousarray(v1s, dtype=float),
            np.ascontiguousarray(v2s, dtype=float),
            p.m1, p.m2, p.g, p.energy, out,
        )
        valid = out[:, 3] > 0
        return out[:, :2], out[:, 2].astype(np.int64), valid

    def observable_correlation(
        self,
        n_events: int,
        max_lag: int,
        seed: int,
        workers: int = 16,
        burn_in: int = 100_000,
        center=(0.0, 0.0),
        width=(1.5, 1.5),
        offset: float = 0.0,
        amplitude: float = 1.0,
        mhat_only: bool = True,
        block_length: int = 10_000,
        subtract_mean: bool = False,
    ):
        """Streaming autocorrelation of a bump observable of (v1, v2).

        The observable is supported on ball-ball collisions when mhat_only
        (it vanishes at floor events), evaluated along the full collision
        chain.  Workers double as batches for the error bars; block sums of
        the observable are returned for CLT diagnostics.  With subtract_mean
        the empirical mean is removed from the block sums.
        """
        from ..estat import CorrelationCurve

        p = self.params
        seeds = derive_seeds(seed, workers)
        budgets = np.full(workers, n_events // workers, dtype=np.int64)
        budgets[: n_events % workers] += 1
        accs = np.zeros((workers, max_lag + 1))
        sums = np.zeros(workers)
        blocks = []
        for w in range(workers):
            st = self.sample_invariant(int(seeds[w]), burn_in)
            acc = np.zeros(max_lag + 1)
            blk = np.zeros(max(int(budgets[w]) // block_length, 1))
            _q1, _q2, _v1, _v2, sum_f, n_blk = fb_observable_kernel(
                st.q1, st.q2, st.v1, st.v2, p.m1, p.m2, p.g,
                int(budgets[w]), center[0], center[1], width[0], width[1],
                offset, amplitude, mhat_only, max_lag, acc,
                block_length, blk,
            )
            accs[w] = acc
            sums[w] = sum_f
            blocks.append(blk[: int(n_blk)])
        lags = np.arange(max_lag + 1)
        totals = budgets.astype(float)
        mean_f = float(sums.sum()) / float(totals.sum())
        est = accs.sum(axis=0) / (totals.sum() - lags * workers) - mean_f**2
        per = accs / (totals[:, None] - lags[None, :]) - (sums / totals)[:, None] ** 2
        stderr = per.std(axis=0, ddof=1) / np.sqrt(workers) if workers > 1 else \
            np.full(max_lag + 1, np.nan)
        block_arr = np.concatenate(blocks)
        if subtract_mean:
            block_arr = block_arr - mean_f * block_length
        curve = CorrelationCurve(
            lags=lags, estimates=est, stderr=stderr,
            n_samples=int(totals.sum()), mean_f=mean_f, mean_g=mean_f,
            scale_f=max(abs(mean_f), 1e-12),
        )
        return curve, block_arr
