"""Experiment runner: config parsing, seeded execution, artifact emission.

One JSON document describes one experiment; running it emits CSV/JSON
artifacts plus a manifest with checksums, so identical (config, seed) pairs
produce identical artifacts.  Subcommands:

    cmzlab run --config cfg.json --out DIR [--workers N]
    cmzlab acceptance --suite NAME [--out DIR]
    cmzlab validate-config cfg.json

The default worker count comes from CMZLAB_WORKERS; the acceptance event
budget can be capped with CMZLAB_EVENT_BUDGET (criteria whose budget exceeds
the cap are skipped and marked).
"""

from __future__ import annotations

import argparse
import hashlib
import json
import os
import sys
import time
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional

import numpy as np

from . import estat, rv
from .dynamics.billiards import (
    BilliardSelector,
    BilliardSystem,
    flat_point_table,
    flowers_table,
)
from .dynamics.fallingballs import FallingBallsParams, FallingBallsSystem
from .errors import CmzlabError, ConfigError
from .tower import build_synthetic, exact_tails, verify_main_theorem
from .tower.simulate import base_correlation

EXPERIMENT_KINDS = (
    "rv-check",
    "tower-verify",
    "falling-balls",
    "flowers",
    "flat-points",
    "curves-diagnostics",
    "correlation",
)

ENV_WORKERS = "CMZLAB_WORKERS"
ENV_EVENT_BUDGET = "CMZLAB_EVENT_BUDGET"


@dataclass
class ExperimentConfig:
    kind: str
    seed: int
    params: dict
    workers: Optional[int] = None

    @classmethod
    def from_json(cls, doc: dict) -> "ExperimentConfig":
        if not isinstance(doc, dict):
            raise ConfigError("config must be a JSON object")
        kind = doc.get("kind")
        if kind not in EXPERIMENT_KINDS:
            raise ConfigError(f"field 'kind' must be one of {EXPERIMENT_KINDS}, got {kind!r}")
        if "seed" not in doc:
            raise ConfigError("field 'seed' is required")
        try:
            seed = int(doc["seed"])
        except (TypeError, ValueError):
            raise ConfigError("field 'seed' must be an integer")
        workers = doc.get("workers")
        if workers is not None:
            workers = int(workers)
            if workers < 1:
                raise ConfigError("field 'workers' must be >= 1")
        params = {k: v for k, v in doc.items() if k not in ("kind", "seed", "workers")}
        cfg = cls(kind=kind, seed=seed, params=params, workers=workers)
        _VALIDATORS[kind](cfg)
        return cfg

    @classmethod
    def load(cls, path) -> "ExperimentConfig":
        with open(path) as fh:
            return cls.from_json(json.load(fh))

    def echo(self) -> dict:
        return {"kind": self.kind, "seed": self.seed, "workers": self.workers, **self.params}


def _require(cfg: ExperimentConfig, name: str, kind=float, positive=False):
    if name not in cfg.params:
        raise ConfigError(f"field '{name}' is required for {cfg.kind}")
    try:
        val = kind(cfg.params[name])
    except (TypeError, ValueError):
        raise ConfigError(f"field '{name}' must be {kind.__name__}")
    if positive and val <= 0:
        raise ConfigError(f"field '{name}' must be positive")
    return val


def _validate_rv_check(cfg):
    if "spec" not in cfg.params:
        raise ConfigError("field 'spec' is required for rv-check")
    rv.RegVarSpec.from_json(cfg.params["spec"])
    window = cfg.params.get("window", [1e3, 1e6])
    if len(window) != 2 or window[0] >= window[1]:
        raise ConfigError("field 'window' must be [lo, hi] with lo < hi")


def _validate_tower_verify(cfg):
    if "model" in cfg.params:
        # explicit cell list instead of a tail-matched construction
        doc = cfg.params["model"]
        if "cells" not in doc:
            raise ConfigError("field 'model.cells' is required")
    else:
        if "tail" not in cfg.params:
            raise ConfigError("field 'tail' is required for tower-verify")
        spec = rv.RegVarSpec.from_json(cfg.params["tail"])
        if spec.index <= 1:
            raise ConfigError("field 'tail.index' must exceed 1")
        rho = _require(cfg, "rho", float)
        if not (0 < rho < 1):
            raise ConfigError("field 'rho' must lie in (0,1)")
        n_cells = _require(cfg, "n_cells", int)
        if n_cells < 10:
            raise ConfigError("field 'n_cells' must be >= 10")
        clustering = float(cfg.params.get("clustering", 0.0))
        if not (0 <= clustering <= 1):
            raise ConfigError("field 'clustering' must lie in [0,1]")
    _require(cfg, "N", int, positive=True)


def _validate_falling_balls(cfg):
    m1 = _require(cfg, "m1", float, positive=True)
    m2 = _require(cfg, "m2", float, positive=True)
    if m1 <= m2:
        raise ConfigError("field 'm1' must exceed 'm2' (lower ball heavier)")
    _require(cfg, "n_events", int, positive=True)


def _validate_flowers(cfg):
    _require(cfg, "n_events", int, positive=True)


def _validate_flat_points(cfg):
    beta = _require(cfg, "beta", float)
    if beta <= 2:
        raise ConfigError("field 'beta' must exceed 2")
    _require(cfg, "n_events", int, positive=True)


def _validate_curves(cfg):
    mode = cfg.params.get("mode", "oracle")
    if mode not in ("oracle",):
        raise ConfigError("field 'mode' must be 'oracle'")
    _require(cfg, "m_max", int, positive=True)


def _validate_correlation(cfg):
    if "tail" not in cfg.params:
        raise ConfigError("field 'tail' is required for correlation")
    rv.RegVarSpec.from_json(cfg.params["tail"])
    _require(cfg, "steps", int, positive=True)
    _require(cfg, "max_lag", int, positive=True)


_VALIDATORS = {
    "rv-check": _validate_rv_check,
    "tower-verify": _validate_tower_verify,
    "falling-balls": _validate_falling_balls,
    "flowers": _validate_flowers,
    "flat-points": _validate_flat_points,
    "curves-diagnostics": _validate_curves,
    "correlation": _validate_correlation,
}


# ---------------------------------------------------------------------------
# experiment implementations
# ---------------------------------------------------------------------------


def _fit_tail_metadata(curve, window) -> dict:
    ns = np.unique(np.round(np.geomspace(window[0], window[1], 25)).astype(int))
    vals = []
    for n in ns:
        try:
            vals.append(curve.value(int(n)))
        except CmzlabError:
            vals.append(0.0)
    vals = np.asarray(vals)
    keep = vals > 0
    if keep.sum() < 3:
        return {"alpha_hat": "nan", "alpha_stderr": "nan",
                "fit_lo": window[0], "fit_hi": window[1]}
    fit = rv.estimate_index(np.column_stack([ns[keep].astype(float), vals[keep]]),
                            (float(window[0]), float(window[1])))
    return {"alpha_hat": repr(fit.alpha), "alpha_stderr": repr(fit.stderr),
            "fit_lo": window[0], "fit_hi": window[1]}


def _run_rv_check(cfg, out: Path, workers: int) -> list:
    spec = rv.RegVarSpec.from_json(cfg.params["spec"])
    lo, hi = cfg.params.get("window", [1e3, 1e6])
    xs = np.geomspace(max(lo, spec.cutoff), hi, int(cfg.params.get("grid", 64)))
    vals = np.atleast_1d(rv.evaluate(spec, xs))
    fit = rv.estimate_index(np.column_stack([xs, vals]), (lo, hi))
    sample_path = out / "rv_samples.csv"
    with open(sample_path, "w") as fh:
        fh.write("x,value\n")
        for x, v in zip(xs, vals):
            fh.write(f"{float(x)!r},{float(v)!r}\n")
    report = {"alpha_hat": fit.alpha, "stderr": fit.stderr,
              "window": [lo, hi], "spec": spec.to_json()}
    _write_json(out / "index_report.json", report)
    return [sample_path, out / "index_report.json"]


def _run_tower_verify(cfg, out: Path, workers: int) -> list:
    from .tower import CmzModel

    if "model" in cfg.params:
        model = CmzModel.from_json(cfg.params["model"])
        spec = rv.RegVarSpec.from_json(cfg.params.get("tail", {"index": 3.0}))
    else:
        spec = rv.RegVarSpec.from_json(cfg.params["tail"])
        model = build_synthetic(
            spec,
            rho=float(cfg.params["rho"]),
            n_cells=int(cfg.params["n_cells"]),
            clustering=float(cfg.params.get("clustering", 0.0)),
            seed=cfg.seed,
            value_max=int(cfg.params.get("value_max", 30_000)),
        )
    n_max = int(cfg.params["N"])
    tails = exact_tails(model, n_max)
    rep = verify_main_theorem(model, spec, n_max, a=float(cfg.params.get("a", spec.index)))
    files = []
    for kind in ("D", "H", "A"):
        path = out / f"tails_{kind}.csv"
        meta = {"kind": kind, "exact": 1}
        if kind in ("H", "A"):
            meta.update(_fit_tail_metadata(tails[kind], (max(10, n_max // 100), n_max)))
        tails[kind].to_csv(path, metadata=meta)
        files.append(path)
    ratio_path = out / "ratios.csv"
    with open(ratio_path, "w") as fh:
        fh.write("n,a_over_r,a_over_h\n")
        for i, n in enumerate(rep.ns):
            fh.write(f"{int(n)},{float(rep.a_over_r[i])!r},{float(rep.a_over_h[i])!r}\n")
    files.append(ratio_path)
    model_path = out / "model.json"
    model.save(model_path)
    files.append(model_path)
    _write_json(out / "verify_report.json", {
        "window": list(rep.window),
        "verdicts": {"a": rep.verdict_a, "b": rep.verdict_b, "c": rep.verdict_c},
        "band_a_over_r": rep.band_a_over_r,
        "band_a_over_h": rep.band_a_over_h,
        "sup_a_over_r": rep.sup_a_over_r,
        "inf_a_over_r": rep.inf_a_over_r,
        "sup_a_over_h": rep.sup_a_over_h,
        "inf_a_over_h": rep.inf_a_over_h,
        "a_sweep": {str(k): list(v) for k, v in rep.a_sweep.items()},
    })
    files.append(out / "verify_report.json")
    return files


def _run_falling_balls(cfg, out: Path, workers: int) -> list:
    params = FallingBallsParams(
        m1=float(cfg.params["m1"]), m2=float(cfg.params["m2"]),
        g=float(cfg.params.get("g", 1.0)), energy=float(cfg.params.get("energy", 6.0)),
    )
    system = FallingBallsSystem(params)
    hist, quality = system.return_tail_counts(
        n_events=int(cfg.params["n_events"]), seed=cfg.seed, workers=workers,
        burn_in=int(cfg.params.get("burn_in", 100_000)),
    )
    curve = estat.tail_from_counts(hist)
    window = cfg.params.get("window", [10, 100])
    path = out / "fb_tail.csv"
    curve.to_csv(path, metadata={"kind": "R", "exact": 0, **_fit_tail_metadata(curve, window)})
    _write_json(out / "fb_quality.json", quality)
    return [path, out / "fb_quality.json"]


def _run_billiard(cfg, out: Path, workers: int, flavor: str) -> list:
    if flavor == "flowers":
        keys = ("petal_radius", "petal_span", "layout_radius", "dispersing_radius")
        kwargs = {k: float(cfg.params[k]) for k in keys if k in cfg.params}
        if "n_petals" in cfg.params:
            kwargs["n_petals"] = int(cfg.params["n_petals"])
        table = flowers_table(**kwargs)
        selector = BilliardSelector.flowers()
        stem = "flowers"
    else:
        table = flat_point_table(
            beta=float(cfg.params["beta"]),
            half_width=float(cfg.params.get("half_width", 0.8)),
            side_radius=cfg.params.get("side_radius"),
        )
        nb = float(cfg.params.get("nb_radius", 0.1 * float(cfg.params.get("half_width", 0.8))))
        selector = BilliardSelector.flat_neighborhood(nb)
        stem = "flat"
    system = BilliardSystem(table, selector)
    hist, quality = system.return_tail_counts(
        n_events=int(cfg.params["n_events"]), seed=cfg.seed, workers=workers,
    )
    curve = estat.tail_from_counts(hist)
    window = cfg.params.get("window", [10, 100])
    files = []
    table_path = out / f"{stem}_table.json"
    table.save(table_path)
    files.append(table_path)
    tail_path = out / f"{stem}_tail.csv"
    curve.to_csv(tail_path, metadata={"kind": "R", "exact": 0,
                                      **_fit_tail_metadata(curve, window)})
    files.append(tail_path)
    _write_json(out / f"{stem}_quality.json", quality)
    files.append(out / f"{stem}_quality.json")
    return files


def _run_curves(cfg, out: Path, workers: int) -> list:
    from .curves import CurveMesh, StandardFamily, growth_lemma_check

    factor = float(cfg.params.get("expansion", 2.0))
    fam = StandardFamily.single(CurveMesh.uniform_segment([0.0, 0.0], [1.0, 0.0], k=2048))

    def expand(points):
        img = points.copy()
        img[:, 0] *= factor
        return img, np.zeros(points.shape[0], dtype=np.int64), \
            np.ones(points.shape[0], dtype=bool)

    rep = growth_lemma_check(fam, expand, m_max=int(cfg.params["m_max"]))
    path = out / "z_growth.csv"
    with open(path, "w") as fh:
        fh.write("m,z,leakage\n")
        for m, z in enumerate(rep.z_sequence):
            leak = rep.leakage[m - 1] if 1 <= m <= rep.leakage.size else 0.0
            fh.write(f"{m},{float(z)!r},{float(leak)!r}\n")
    _write_json(out / "condition_report.json", {
        "fitted_theta": rep.fitted_theta,
        "fitted_c": rep.fitted_c,
        "verdict_c5_growth": rep.verdict,
        "diverged": rep.diverged,
    })
    return [path, out / "condition_report.json"]


def _run_correlation(cfg, out: Path, workers: int) -> list:
    spec = rv.RegVarSpec.from_json(cfg.params["tail"])
    model = build_synthetic(
        spec, rho=float(cfg.params.get("rho", 0.5)),
        n_cells=int(cfg.params.get("n_cells", 10_000)),
        clustering=float(cfg.params.get("clustering", 0.0)), seed=cfg.seed,
    )
    max_lag = int(cfg.params["max_lag"])
    phases = 2.0 * np.pi * np.arange(model.n_cells) / model.n_cells
    f_cell = 1.0 + 0.5 * np.cos(phases)
    res = base_correlation(model, f_cell, None, steps=int(cfg.params["steps"]),
                           max_lag=max_lag, seed=cfg.seed + 1,
                           shards=max(workers, 8))
    tails = exact_tails(model, model.max_h)
    int_f = float(np.sum(model.p * f_cell)) / model.h_bar
    lag_grid = estat.default_lag_grid(max_lag, include_zero=False)
    pred = [estat.predicted_correlation(tails["A"], model.h_bar, int_f, int_f, int(n))
            for n in lag_grid]
    corr_path = out / "correlation.csv"
    with open(corr_path, "w") as fh:
        fh.write("n,estimate,stderr,samples\n")
        for n in lag_grid:
            fh.write(f"{int(n)},{float(res.estimates[n])!r},{float(res.stderr[n])!r},{res.total_steps}\n")
    pred_path = out / "predicted.csv"
    with open(pred_path, "w") as fh:
        fh.write("n,predicted\n")
        for n, v in zip(lag_grid, pred):
            fh.write(f"{int(n)},{float(v)!r}\n")
    ratios = [res.estimates[n] / p if p > 0 else np.nan for n, p in zip(lag_grid, pred)]
    _write_json(out / "correlation_report.json", {
        "mean_f": res.mean_f, "int_f": int_f, "h_bar": model.h_bar,
        "steps": res.total_steps,
        "ratio_band": [float(np.nanmin(ratios)), float(np.nanmax(ratios))],
    })
    return [corr_path, pred_path, out / "correlation_report.json"]


_RUNNERS = {
    "rv-check": _run_rv_check,
    "tower-verify": _run_tower_verify,
    "falling-balls": _run_falling_balls,
    "flowers": lambda cfg, out, w: _run_billiard(cfg, out, w, "flowers"),
    "flat-points": lambda cfg, out, w: _run_billiard(cfg, out, w, "flat"),
    "curves-diagnostics": _run_curves,
    "correlation": _run_correlation,
}


def _write_json(path, doc) -> None:
    with open(path, "w") as fh:
        json.dump(doc, fh, sort_keys=True, indent=1)


def _sha256(path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 16), b""):
            h.update(chunk)
    return h.hexdigest()


def run(config: ExperimentConfig, out_dir, workers: Optional[int] = None) -> dict:
    """Run one experiment; returns the manifest (also written to disk).

    When CMZLAB_EVENT_BUDGET caps the configured event count, the run is
    clamped to the budget and its artifacts are flagged non-final.
    """
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    n_workers = workers or config.workers or int(os.environ.get(ENV_WORKERS, "4"))
    budget = os.environ.get(ENV_EVENT_BUDGET)
    final = True
    if budget is not None and "n_events" in config.params:
        cap = int(budget)
        if int(config.params["n_events"]) > cap:
            config.params["n_events"] = cap
            final = False
    t0 = time.time()
    files = _RUNNERS[config.kind](config, out, n_workers)
    manifest = {
        "config": config.echo(),
        "version": _package_version(),
        "final": final,
        "files": {p.name: {"sha256": _sha256(p), "bytes": p.stat().st_size} for p in files},
        "wall_clock_s": time.time() - t0,
    }
    _write_json(out / "manifest.json", manifest)
    return manifest


def _package_version() -> str:
    from . import __version__

    return __version__


# ---------------------------------------------------------------------------
# entry point
# ---------------------------------------------------------------------------


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(prog="cmzlab", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    p_run = sub.add_parser("run", help="run one experiment from a JSON config")
    p_run.add_argument("--config", required=True)
    p_run.add_argument("--out", required=True)
    p_run.add_argument("--workers", type=int, default=None)

    p_acc = sub.add_parser("acceptance", help="run an acceptance suite")
    p_acc.add_argument("--suite", default="full")
    p_acc.add_argument("--out", default=None)

    p_val = sub.add_parser("validate-config", help="validate a config document")
    p_val.add_argument("path")

    args = parser.parse_args(argv)
    if args.command == "validate-config":
        try:
            ExperimentConfig.load(args.path)
        except (CmzlabError, OSError, json.JSONDecodeError) as exc:
            print(f"invalid: {exc}", file=sys.stderr)
            return 2
        print("ok")
        return 0
    if args.command == "run":
        try:
            config = ExperimentConfig.load(args.config)
        except (CmzlabError, OSError, json.JSONDecodeError) as exc:
            print(f"invalid config: {exc}", file=sys.stderr)
            return 2
        manifest = run(config, args.out, args.workers)
        print(json.dumps(manifest["files"], indent=1, sort_keys=True))
        return 0
    if args.command == "acceptance":
        from .acceptance import run_suite

        report = run_suite(args.suite, out_dir=args.out)
        for line in report.lines():
            print(line)
        return 0 if report.ok else 1
    return 2


if __name__ == "__main__":
    sys.exit(main())
