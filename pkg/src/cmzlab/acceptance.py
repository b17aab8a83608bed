"""Acceptance criteria: one callable per criterion, suites, and the driver.

Each criterion checks a published property of the implemented systems at its
stated tolerance and returns a result record; the driver prints one pass/fail
line per criterion and exits nonzero iff an executed primary criterion fails.
Event-hungry criteria declare their budgets and are skipped (and marked) when
CMZLAB_EVENT_BUDGET caps them.

Frozen calibration constants (measured once and pinned):
  - unstable cone directions: falling balls 1.33 rad in (v1, v2); flowers
    0.5 rad in (arclength, phi)
  - flat-point acceptance geometry: beta = 6, half_width = 0.95, neighborhood
    radius 1.4 (the whole flat wall) and its half 0.7, where the fit window
    [10, 100) is past the trapping crossover for both radii
"""

from __future__ import annotations

import math
import os
import time
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Optional

import numpy as np

from . import estat, rv
from .curves import (
    ConditionReport,
    CurveMesh,
    StandardFamily,
    growth_lemma_check,
    push_forward,
    unstable_width_law,
    z_function,
)
from .dynamics.billiards import BilliardSelector, BilliardSystem, flat_point_table, flowers_table
from .dynamics.fallingballs import FallingBallsParams, FallingBallsSystem
from .tower import (
    CmzModel,
    build_synthetic,
    exact_tails,
    hat_ratio,
    verify_main_theorem,
)
from .tower.simulate import base_correlation

TOWER_SEED = 20260810
FB_PARAMS = FallingBallsParams(m1=2.0, m2=1.0, g=1.0, energy=6.0)
FB_CONE_ANGLE = 1.33
FLOWERS_CONE_ANGLE = 0.5
FLAT_BETA = 6.0
FLAT_HALF_WIDTH = 0.95
FLAT_NBHD_RADIUS = 1.4
CORR_LAGS = (5, 8, 13, 21, 30)

ENV_EVENT_BUDGET = "CMZLAB_EVENT_BUDGET"


@dataclass
class CriterionResult:
    name: str
    passed: bool
    skipped: bool = False
    runtime_s: float = 0.0
    details: dict = field(default_factory=dict)

    def line(self) -> str:
        mark = "SKIP" if self.skipped else ("PASS" if self.passed else "FAIL")
        return f"[{mark}] {self.name} ({self.runtime_s:.1f}s) {self.details}"


@dataclass
class SuiteReport:
    suite: str
    results: list

    @property
    def ok(self) -> bool:
        return all(r.passed or r.skipped for r in self.results)

    def lines(self) -> list:
        out = [f"acceptance suite '{self.suite}'"]
        out += [r.line() for r in self.results]
        n_fail = sum((not r.passed and not r.skipped) for r in self.results)
        n_skip = sum(r.skipped for r in self.results)
        out.append(f"{len(self.results)} criteria, {n_fail} failed, {n_skip} skipped")
        return out


@dataclass
class _Ctx:
    out_dir: Optional[Path]
    budget: Optional[int]

    def over_budget(self, events: int) -> bool:
        return self.budget is not None and events > self.budget

    def emit(self, name: str, writer: Callable[[Path], None]) -> None:
        if self.out_dir is not None:
            writer(self.out_dir / name)


def _log_grid_fit(curve, lo: int, hi: int, n_pts: int = 25) -> rv.IndexFit:
    ns = np.unique(np.round(np.geomspace(lo, hi, n_pts)).astype(int))
    vals = np.array([curve.value(int(n)) for n in ns])
    keep = vals > 0
    return rv.estimate_index(np.column_stack([ns[keep].astype(float), vals[keep]]),
                             (float(lo), float(hi)))


# ---------------------------------------------------------------------------
# criteria
# ---------------------------------------------------------------------------


def crit_rv_toolkit(ctx: _Ctx) -> CriterionResult:
    t0 = time.time()
    details = {}
    ok = True

    # pure-power index recovery exact to 1e-9
    xs = np.geomspace(10.0, 1e5, 60)
    spec3 = rv.RegVarSpec(index=3.0)
    fit = rv.estimate_index(np.column_stack([xs, np.atleast_1d(rv.evaluate(spec3, xs))]),
                            (10.0, 1e5))
    details["pure_power_err"] = abs(fit.alpha - 3.0)
    ok &= abs(fit.alpha - 3.0) < 1e-9

    # log-corrected recovery within 0.2, deviation shrinking as windows shift
    spec_log = rv.RegVarSpec(index=2.0, modifier="power-times-log-power", beta=2.0, cutoff=2.0)
    devs = []
    for shift in (1.0, 10.0, 100.0):
        lo, hi = 1e4 * shift, 1e8 * shift
        xs = np.geomspace(lo, hi, 60)
        fit = rv.estimate_index(
            np.column_stack([xs, np.atleast_1d(rv.evaluate(spec_log, xs))]), (lo, hi))
        devs.append(abs(fit.alpha - 2.0))
    details["log_corrected_devs"] = [round(d, 4) for d in devs]
    ok &= devs[0] < 0.2 and devs[0] > devs[1] > devs[2]

    # sandwich integral <= sum <= integral + r(n) on monotone specs
    for spec, n in ((rv.RegVarSpec(index=2.0), 10),
                    (rv.RegVarSpec(index=1.5), 4),
                    (rv.RegVarSpec(index=3.0, modifier="power-times-exp-log-power",
                                   gamma=0.3), 5)):
        res = rv.tail_sum_and_integral(spec, n)
        r_n = float(rv.evaluate(spec, float(n)))
        ok &= res.integral <= res.sum <= res.integral + r_n + 1e-12
    details["sandwich"] = "holds"
    return CriterionResult("rv-toolkit", ok, runtime_s=time.time() - t0, details=details)


def crit_tower_tail_transfer(ctx: _Ctx) -> CriterionResult:
    t0 = time.time()
    model = build_synthetic(rv.RegVarSpec(index=3.0), rho=0.5, n_cells=10_000,
                            clustering=0.0, seed=TOWER_SEED)
    tails = exact_tails(model, 10_000)
    ns = np.arange(100, 10_001)
    r_vals = ns.astype(float) ** -3.0
    a_vals = tails["A"].survival[ns]
    h_vals = tails["H"].survival[ns]
    a_over_r = a_vals / r_vals
    a_over_h = a_vals / h_vals
    band_r = float(a_over_r.max() / a_over_r.min())
    band_h = float(a_over_h.max() / a_over_h.min())
    rep = verify_main_theorem(model, rv.RegVarSpec(index=3.0), 10_000, a=3.0)
    runtime = time.time() - t0
    ok = band_r < 10.0 and band_h < 10.0 and rep.verdict_c and runtime < 60.0
    ctx.emit("tower_tails_H.csv", lambda p: tails["H"].to_csv(
        p, metadata={"alpha_hat": repr(_log_grid_fit(tails['H'], 100, 10_000).alpha),
                     "fit_lo": 100, "fit_hi": 10_000}))
    ctx.emit("tower_tails_A.csv", lambda p: tails["A"].to_csv(
        p, metadata={"alpha_hat": repr(_log_grid_fit(tails['A'], 100, 10_000).alpha),
                     "fit_lo": 100, "fit_hi": 10_000}))
    return CriterionResult(
        "tower-tail-transfer", ok, runtime_s=runtime,
        details={"band_a_over_r": round(band_r, 3), "band_a_over_h": round(band_h, 3),
                 "verdict_c": rep.verdict_c},
    )


def crit_sigma_one_identity(ctx: _Ctx) -> CriterionResult:
    t0 = time.time()
    rng = np.random.default_rng(7)
    ok = True
    for _ in range(50):
        n = int(rng.integers(1, 15))
        cells = [(float(rng.uniform(0.05, 1.0)), [int(rng.integers(1, 60))])
                 for _ in range(n)]
        model = CmzModel.from_cells(cells)
        tails = exact_tails(model, 80)
        ok &= bool(np.array_equal(tails["A"].survival, tails["H"].survival))
    return CriterionResult("sigma-one-identity", ok, runtime_s=time.time() - t0,
                           details={"models": 50, "bit_exact": ok})


def crit_hat_ratio(ctx: _Ctx) -> CriterionResult:
    t0 = time.time()
    spec = rv.RegVarSpec(index=3.0)
    deltas = {}
    for clustering in (0.0, 1.0):
        model = build_synthetic(spec, rho=0.5, n_cells=10_000, clustering=clustering,
                                seed=TOWER_SEED)
        atoms = np.unique(model.r_levels)
        ks = [int(v - 1) for v in atoms if 10 <= v - 1 <= 1000]
        res = hat_ratio(model, b=2.0, q=0.9, ks=ks)
        deltas[clustering] = res.delta_hat
    runtime = time.time() - t0
    ok = deltas[0.0] > 0.2 and abs(deltas[1.0]) < 0.05 and runtime < 300.0
    return CriterionResult(
        "hat-ratio-proposition", ok, runtime_s=runtime,
        details={"delta_independent": round(deltas[0.0], 3),
                 "delta_clustered": round(deltas[1.0], 4)},
    )


def crit_falling_balls_tail(ctx: _Ctx, n_events: int = 10**8) -> CriterionResult:
    t0 = time.time()
    if ctx.over_budget(n_events):
        return CriterionResult("falling-balls-tail", True, skipped=True,
                               details={"needs_events": n_events})
    system = FallingBallsSystem(FB_PARAMS)
    hist, quality = system.return_tail_counts(n_events=n_events, seed=101, workers=8)
    curve = estat.tail_from_counts(hist)
    fit = _log_grid_fit(curve, 10, 100)
    runtime = time.time() - t0
    ok = (abs(fit.alpha - 3.0) <= 0.25
          and quality["max_rel_energy_drift"] < 1e-9
          and runtime < 900.0)
    ctx.emit("fb_tail.csv", lambda p: curve.to_csv(
        p, metadata={"alpha_hat": repr(fit.alpha), "alpha_stderr": repr(fit.stderr),
                     "fit_lo": 10, "fit_hi": 100}))
    return CriterionResult(
        "falling-balls-tail", ok, runtime_s=runtime,
        details={"alpha_hat": round(fit.alpha, 3), "drift": quality["max_rel_energy_drift"],
                 "events": n_events},
    )


def crit_flat_point_tail(ctx: _Ctx, n_events: int = 10**8) -> CriterionResult:
    t0 = time.time()
    target = (FLAT_BETA + 2.0) / (FLAT_BETA - 2.0) + 1.0
    arithmetic_ok = target == 3.0
    if ctx.over_budget(2 * n_events):
        return CriterionResult("flat-point-tail", True, skipped=True,
                               details={"needs_events": 2 * n_events})
    table = flat_point_table(beta=FLAT_BETA, half_width=FLAT_HALF_WIDTH)
    fits = {}
    for radius in (FLAT_NBHD_RADIUS, FLAT_NBHD_RADIUS / 2.0):
        system = BilliardSystem(table, BilliardSelector.flat_neighborhood(radius))
        hist, _quality = system.return_tail_counts(n_events=n_events, seed=103, workers=8)
        curve = estat.tail_from_counts(hist)
        fits[radius] = _log_grid_fit(curve, 10, 100)
        if radius == FLAT_NBHD_RADIUS:
            ctx.emit("flat_tail.csv", lambda p, c=curve, f=fits[radius]: c.to_csv(
                p, metadata={"alpha_hat": repr(f.alpha), "alpha_stderr": repr(f.stderr),
                             "fit_lo": 10, "fit_hi": 100}))
    a_full = fits[FLAT_NBHD_RADIUS].alpha
    a_half = fits[FLAT_NBHD_RADIUS / 2.0].alpha
    runtime = time.time() - t0
    ok = arithmetic_ok and abs(a_full - target) <= 0.3 and abs(a_full - a_half) <= 0.1
    return CriterionResult(
        "flat-point-tail", ok, runtime_s=runtime,
        details={"target": target, "alpha_hat": round(a_full, 3),
                 "alpha_hat_half_radius": round(a_half, 3),
                 "shift": round(abs(a_full - a_half), 3), "events": n_events},
    )


def crit_flowers_tail(ctx: _Ctx, n_events: int = 10**8) -> CriterionResult:
    t0 = time.time()
    if ctx.over_budget(n_events):
        return CriterionResult("flowers-tail", True, skipped=True,
                               details={"needs_events": n_events})
    system = BilliardSystem(flowers_table(), BilliardSelector.flowers())
    hist, _quality = system.return_tail_counts(n_events=n_events, seed=105, workers=8)
    curve = estat.tail_from_counts(hist)
    fit = _log_grid_fit(curve, 10, 100)
    runtime = time.time() - t0
    ok = abs(fit.alpha - 3.0) <= 0.3
    ctx.emit("flowers_tail.csv", lambda p: curve.to_csv(
        p, metadata={"alpha_hat": repr(fit.alpha), "alpha_stderr": repr(fit.stderr),
                     "fit_lo": 10, "fit_hi": 100}))
    return CriterionResult(
        "flowers-tail", ok, runtime_s=runtime,
        details={"alpha_hat": round(fit.alpha, 3), "events": n_events},
    )


def crit_correlation_asymptotics(ctx: _Ctx, tower_steps: int = 4 * 10**9,
                                 fb_events: int = 10**9) -> CriterionResult:
    """Band and slope checks of the nonzero-mean correlation asymptotics.

    Both sub-checks are implemented exactly as stated and are expected to
    fail on the pinned window n in [5, 30]: the admissible synthetic towers
    have quasi-lattice roof distributions whose renewal transient dominates
    there, and past the transient the exact ratio converges to 1/hbar^2
    (<= 1/4 since the tail normalization forces R >= 2), verified against an
    exact renewal computation; the collision-chain analog buries the n^-2
    law for the physical example the same way.  See the decisions ledger.
    """
    t0 = time.time()
    if ctx.over_budget(tower_steps):
        return CriterionResult("correlation-asymptotics", True, skipped=True,
                               details={"needs_events": tower_steps})
    model = build_synthetic(rv.RegVarSpec(index=3.0), rho=0.5, n_cells=10_000,
                            clustering=0.0, seed=TOWER_SEED)
    phases = 2.0 * np.pi * np.arange(model.n_cells) / model.n_cells
    f_cell = 1.0 + 0.5 * np.cos(phases)
    res = base_correlation(model, f_cell, None, steps=tower_steps, max_lag=30,
                           seed=TOWER_SEED + 1, shards=32)
    tails = exact_tails(model, model.max_h)
    int_f = float(np.sum(model.p * f_cell)) / model.h_bar
    ratios = {}
    for n in CORR_LAGS:
        pred = estat.predicted_correlation(tails["A"], model.h_bar, int_f, int_f, n)
        ratios[n] = float(res.estimates[n] / pred)
    band_ok = all(0.5 <= r <= 2.0 for r in ratios.values())

    system = FallingBallsSystem(FB_PARAMS)
    curve, _blocks = system.observable_correlation(
        n_events=fb_events, max_lag=30, seed=107, workers=16,
        center=(0.0, 0.0), width=(2.5, 2.5), amplitude=1.0, mhat_only=True,
    )
    ns = np.arange(5, 31)
    vals = curve.estimates[5:31]
    errs = curve.stderr[5:31]
    sig = np.abs(vals) > 2.0 * errs
    slope = math.nan
    if sig.sum() >= 3:
        slope = -rv.estimate_index(
            np.column_stack([ns[sig].astype(float), np.abs(vals[sig])]), (5.0, 30.0)
        ).alpha
    slope_ok = abs(slope + 2.0) <= 0.4

    def _corr_writer(p):
        with open(p, "w") as fh:
            fh.write("n,estimate,stderr,samples\n")
            for n in range(1, 31):
                fh.write(f"{n},{float(res.estimates[n])!r},{float(res.stderr[n])!r},{res.total_steps}\n")
    ctx.emit("tower_correlation.csv", _corr_writer)

    def _pred_writer(p):
        with open(p, "w") as fh:
            fh.write("n,predicted\n")
            for n in range(1, 31):
                pred_val = estat.predicted_correlation(tails['A'], model.h_bar, int_f, int_f, n)
                fh.write(f"{n},{float(pred_val)!r}\n")
    ctx.emit("tower_correlation_predicted.csv", _pred_writer)

    runtime = time.time() - t0
    return CriterionResult(
        "correlation-asymptotics", band_ok and slope_ok, runtime_s=runtime,
        details={"tower_ratio_band": [round(min(ratios.values()), 3),
                                      round(max(ratios.values()), 3)],
                 "fb_slope": round(slope, 3), "tower_steps": tower_steps,
                 "fb_events": fb_events},
    )


def _fb_width_curves(system, stream, ks, m_per_k, kpts=1025):
    u = np.array([math.cos(FB_CONE_ANGLE), math.sin(FB_CONE_ANGLE)])
    curves, rvals = [], []
    for k in ks:
        idx = np.flatnonzero(stream.r_values[1:] == k + 1)
        anchors = stream.states[idx][:m_per_k]
        half = 8.0 * 1.3 * float(k) ** -3.0
        for a in anchors:
            c0 = a[1:3]
            ts = np.linspace(-half, half, kpts)
            pts = c0[None, :] + ts[:, None] * u[None, :]
            kin = 0.5 * FB_PARAMS.m1 * pts[:, 0] ** 2 + 0.5 * FB_PARAMS.m2 * pts[:, 1] ** 2
            if np.any(kin > FB_PARAMS.energy):
                continue
            img, r, ok_mask = system.return_map(pts[:, 0].copy(), pts[:, 1].copy())
            if not np.all(ok_mask):
                continue
            w = np.full(kpts, 1.0 / (kpts - 1))
            w[0] *= 0.5
            w[-1] *= 0.5
            curves.append(CurveMesh(pts, w))
            rvals.append(r)
    return curves, rvals


def crit_z_and_growth(ctx: _Ctx) -> CriterionResult:
    t0 = time.time()
    details = {}

    # single uniform curve: Z = 2/L within 1e-3
    fam = StandardFamily.single(CurveMesh.uniform_segment([0.0, 0.0], [1.0, 0.0], k=4096))
    z_val = z_function(fam).z
    details["z_uniform_err"] = round(abs(z_val - 2.0), 6)
    ok = abs(z_val - 2.0) < 1e-3

    # uniformly expanding oracle recovers theta within 0.05
    def expand(points):
        img = points.copy()
        img[:, 0] *= 2.0
        return img, np.zeros(points.shape[0], dtype=np.int64), \
            np.ones(points.shape[0], dtype=bool)

    growth = growth_lemma_check(
        StandardFamily.single(CurveMesh.uniform_segment([0.0, 0.0], [1.0, 0.0], k=2048)),
        expand, m_max=6)
    details["theta_hat"] = round(float(growth.fitted_theta), 3)
    ok &= abs(growth.fitted_theta - 0.5) <= 0.05
    ctx.emit("z_growth.csv", lambda p: _write_z_growth(p, growth))

    # falling balls: widths t = 3 +- 0.3 and first-step expansion p = 2 +- 0.4
    system = FallingBallsSystem(FB_PARAMS)
    stream = system.first_return_stream(n_returns=600_000, seed=33, workers=1)
    ks = np.array([4, 6, 9, 13, 19, 28])
    curves, rvals = _fb_width_curves(system, stream, ks, m_per_k=12)
    rep = unstable_width_law(rvals, curves, ks)
    details["fb_t_hat"] = round(float(rep.t_fit), 3)
    ok &= abs(rep.t_fit - 3.0) <= 0.3

    p_hat = _fb_first_step_expansion(system, stream, ks, rep.t_fit)
    details["fb_p_hat"] = round(float(p_hat), 3)
    ok &= abs(p_hat - 2.0) <= 0.4

    # flowers: widths t = 2 +- 0.3
    fl_t = _flowers_width_fit()
    details["flowers_t_hat"] = round(float(fl_t), 3)
    ok &= abs(fl_t - 2.0) <= 0.3

    report = ConditionReport(fitted_t=float(rep.t_fit), fitted_p=float(p_hat),
                             growth_c=float(growth.fitted_c),
                             growth_theta=float(growth.fitted_theta))
    report.record("C1", True, note="synthetic inner tails respect rho by construction")
    report.record("C2", True, note="push-forward fragments stay standard families")
    report.record("C3", True, note="level-set families foliate with invariant weights")
    report.record("C4", abs(rep.t_fit - 3.0) <= 0.3, t=float(rep.t_fit))
    report.record("C5", abs(p_hat - 2.0) <= 0.4 and growth.verdict,
                  t=float(rep.t_fit), p=float(p_hat))
    ctx.emit("condition_report.json", lambda p: Path(p).write_text(
        __import__("json").dumps(report.to_json(), sort_keys=True, indent=1)))

    return CriterionResult("z-and-growth", ok, runtime_s=time.time() - t0, details=details)


def _write_z_growth(path, growth) -> None:
    with open(path, "w") as fh:
        fh.write(f"# fitted_theta={growth.fitted_theta!r}\n")
        fh.write(f"# fitted_c={growth.fitted_c!r}\n")
        fh.write("m,z,leakage\n")
        for m, z in enumerate(growth.z_sequence):
            leak = growth.leakage[m - 1] if 1 <= m <= growth.leakage.size else 0.0
            fh.write(f"{m},{float(z)!r},{float(leak)!r}\n")


def _fb_first_step_expansion(system, stream, ks, t_hat) -> float:
    u = np.array([math.cos(FB_CONE_ANGLE), math.sin(FB_CONE_ANGLE)])

    def map_handle(points):
        img, r, ok = system.return_map(points[:, 0].copy(), points[:, 1].copy())
        return img, r, ok

    z1 = np.full(len(ks), np.nan)
    for ki, k in enumerate(ks):
        idx = np.flatnonzero(stream.r_values[1:] == k + 1)
        anchors = stream.states[idx][:12]
        frags = []
        kpts = 1025
        half = 6.0 * 1.3 * float(k) ** -3.0
        for a in anchors:
            c0 = a[1:3]
            ts = np.linspace(-half, half, kpts)
            pts = c0[None, :] + ts[:, None] * u[None, :]
            kin = 0.5 * FB_PARAMS.m1 * pts[:, 0] ** 2 + 0.5 * FB_PARAMS.m2 * pts[:, 1] ** 2
            if np.any(kin > FB_PARAMS.energy):
                continue
            img, r, ok_mask = system.return_map(pts[:, 0].copy(), pts[:, 1].copy())
            if not np.all(ok_mask):
                continue
            mid = kpts // 2
            if r[mid] != k + 1:
                continue
            lo = mid
            while lo > 0 and r[lo - 1] == k + 1:
                lo -= 1
            hi = mid
            while hi < kpts - 1 and r[hi + 1] == k + 1:
                hi += 1
            if hi - lo < 8 or lo == 0 or hi == kpts - 1:
                continue
            frags.append(CurveMesh.uniform_segment(pts[lo], pts[hi], k=512))
        if len(frags) < 3:
            continue
        fam = StandardFamily(frags, np.array([f.length for f in frags]))
        z1[ki] = z_function(push_forward(fam, map_handle).family).z
    good = np.isfinite(z1)
    ks_arr = np.asarray(ks, dtype=float)
    fit = rv.estimate_index(np.column_stack([ks_arr[good], z1[good]]),
                            (float(ks_arr[good][0]), float(ks_arr[good][-1])))
    slope_z1 = -fit.alpha
    return t_hat - slope_z1


def _flowers_width_fit() -> float:
    table = flowers_table()
    system = BilliardSystem(table, BilliardSelector.flowers())
    u = np.array([math.cos(FLOWERS_CONE_ANGLE), math.sin(FLOWERS_CONE_ANGLE)])
    stream = system.first_return_stream(n_returns=2 * 10**6, seed=41, workers=2)
    states = stream.states
    ks = np.array([7, 10, 14, 20, 26])
    curves, rvals = [], []
    for k in ks:
        idx = np.flatnonzero(stream.r_values[1:] == k + 1)
        anchors = states[idx][:14]
        half = 4.0 * float(k) ** -2.0
        for a in anchors:
            piece = int(a[0])
            kpts = 1025
            ts = np.linspace(-half, half, kpts)
            pts = np.column_stack([np.full(kpts, piece),
                                   a[1] + ts * u[0], a[2] + ts * u[1]])
            if pts[:, 1].min() < 1e-6 or pts[:, 1].max() > table.lengths[piece] - 1e-6:
                continue
            if np.abs(pts[:, 2]).max() > np.pi / 2 - 1e-9:
                continue
            img, r, ok_mask = system.return_map(pts)
            if not np.all(ok_mask):
                continue
            w = np.full(kpts, 1.0 / (kpts - 1))
            w[0] *= 0.5
            w[-1] *= 0.5
            curves.append(CurveMesh(pts[:, 1:], w))
            rvals.append(r)
    rep = unstable_width_law(rvals, curves, ks)
    return rep.t_fit


def crit_asip_proxies(ctx: _Ctx, fb_events: int = 2 * 10**8) -> CriterionResult:
    t0 = time.time()
    details = {}

    # rate exponent pairs as pure evaluations
    pair_fb = estat.asip_exponent_pair(3.0, 0.0)
    alpha_flat = (FLAT_BETA + 2.0) / (FLAT_BETA - 2.0) + 1.0
    pair_flat = estat.asip_exponent_pair(alpha_flat, 0.0)
    pairs_ok = (abs(pair_fb[0] - 1 / 3) < 1e-12 and abs(pair_fb[1] - 1 / 3) < 1e-12
                and abs(pair_flat[0] - 1 / alpha_flat) < 1e-12)
    eps = 1e-9
    n = 1000
    rate = estat.asip_rate(3.0, 0.0, eps, n)
    pairs_ok &= abs(rate - n ** (1 / 3) * math.log(n) ** (1 / 3 + eps)) < 1e-9
    details["exponent_pairs"] = pairs_ok

    if ctx.over_budget(fb_events):
        return CriterionResult("asip-proxies", pairs_ok, skipped=True,
                               runtime_s=time.time() - t0, details=details)

    # falling-balls CLT block diagnostics against the Green-Kubo variance
    system = FallingBallsSystem(FB_PARAMS)
    curve, _ = system.observable_correlation(
        n_events=fb_events, max_lag=128, seed=109, workers=16,
        center=(0.0, 0.0), width=(1.5, 1.5), amplitude=1.0, mhat_only=True,
        block_length=10**4,
    )
    gk = estat.green_kubo_variance(curve.centered())
    block_table = {}
    for blen in (10**4, 3 * 10**4):
        c2_curve, blocks = system.observable_correlation(
            n_events=fb_events, max_lag=1, seed=111, workers=16,
            center=(0.0, 0.0), width=(1.5, 1.5), amplitude=1.0, mhat_only=True,
            block_length=blen, subtract_mean=True,
        )
        block_table[blen] = blocks
    rep = estat.clt_diagnostic(block_table)
    ratio_ok = all(abs(rep.variance_ratio[b] / gk.c2 - 1.0) <= 0.10 for b in block_table)
    normal_ok = rep.normality_pvalue > 1e-3
    details.update({
        "c2_green_kubo": round(gk.c2, 5),
        "variance_ratios": {str(k): round(v, 5) for k, v in rep.variance_ratio.items()},
        "normality_pvalue": round(rep.normality_pvalue, 5),
    })
    ok = pairs_ok and ratio_ok and normal_ok
    return CriterionResult("asip-proxies", ok, runtime_s=time.time() - t0, details=details)


CRITERIA = {
    "rv-toolkit": (crit_rv_toolkit, ("trivial", "rv", "full")),
    "sigma-one-identity": (crit_sigma_one_identity, ("trivial", "tower", "full")),
    "tower-tail-transfer": (crit_tower_tail_transfer, ("tower", "full")),
    "hat-ratio-proposition": (crit_hat_ratio, ("tower", "full")),
    "falling-balls-tail": (crit_falling_balls_tail, ("dynamics", "full")),
    "flat-point-tail": (crit_flat_point_tail, ("dynamics", "full")),
    "flowers-tail": (crit_flowers_tail, ("dynamics", "full")),
    "correlation-asymptotics": (crit_correlation_asymptotics, ("correlation", "full")),
    "z-and-growth": (crit_z_and_growth, ("curves", "full")),
    "asip-proxies": (crit_asip_proxies, ("asip", "full")),
}

SUITES = ("trivial", "rv", "tower", "dynamics", "correlation", "curves", "asip", "full")


def run_suite(suite: str = "full", out_dir=None) -> SuiteReport:
    if suite not in SUITES:
        raise ValueError(f"unknown suite {suite!r}; choose from {SUITES}")
    budget = os.environ.get(ENV_EVENT_BUDGET)
    ctx = _Ctx(out_dir=Path(out_dir) if out_dir else None,
               budget=int(budget) if budget else None)
    if ctx.out_dir is not None:
        ctx.out_dir.mkdir(parents=True, exist_ok=True)
    results = []
    for name, (fn, suites) in CRITERIA.items():
        if suite not in suites:
            continue
        results.append(fn(ctx))
    return SuiteReport(suite=suite, results=results)
