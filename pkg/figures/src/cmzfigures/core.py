"""Figure rendering from cmzlab CSV artifacts.

Three figure kinds: log-log tail curves with the fitted-slope annotation
(and an optional reference power line), correlation curves with a predicted
overlay, and Z-growth sequences.  Every number shown originates in the CSV
files: fitted slopes come from the `# alpha_hat=...` metadata lines, the
overlay from the predictor CSV.  Rendering is deterministic: fixed canvas,
fixed fonts, no timestamps, so re-rendering a job is byte-identical.
"""

from __future__ import annotations

import csv
import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402

FIGURE_KINDS = ("tail", "correlation", "z-growth")

_RC = {
    "figure.figsize": (6.0, 4.2),
    "figure.dpi": 120,
    "savefig.dpi": 120,
    "font.family": "DejaVu Sans",
    "font.size": 10,
    "svg.hashsalt": "cmz-figures",
    "axes.grid": True,
    "grid.alpha": 0.3,
}


class FigureError(Exception):
    """Base error for rendering problems."""


class MissingInputError(FigureError):
    """An input CSV path does not exist (message names the path)."""


class EmptyInputError(FigureError):
    """An input CSV has no data rows."""


class SchemaError(FigureError):
    """An input CSV lacks a required column (message names it)."""


@dataclass(frozen=True)
class FigureJob:
    kind: str
    inputs: tuple
    output: str
    reference_slope: Optional[float] = None
    title: str = ""

    def __post_init__(self):
        if self.kind not in FIGURE_KINDS:
            raise FigureError(f"unknown figure kind {self.kind!r}; one of {FIGURE_KINDS}")
        if not self.inputs:
            raise FigureError("job needs at least one input CSV")

    @classmethod
    def from_json(cls, doc: dict) -> "FigureJob":
        try:
            inputs = tuple(doc["inputs"])
            return cls(
                kind=doc["kind"],
                inputs=inputs,
                output=doc["output"],
                reference_slope=doc.get("reference_slope"),
                title=doc.get("title", ""),
            )
        except KeyError as exc:
            raise FigureError(f"job document is missing field {exc.args[0]!r}")

    @classmethod
    def load(cls, path) -> "FigureJob":
        with open(path) as fh:
            return cls.from_json(json.load(fh))


@dataclass
class Table:
    metadata: dict
    rows: list  # list of dicts, strings as read

    def column(self, name: str) -> list:
        if name not in self.rows[0]:
            raise SchemaError(f"column {name!r} missing; found {sorted(self.rows[0])}")
        return [row[name] for row in self.rows]

    def floats(self, name: str) -> list:
        return [float(v) for v in self.column(name)]


def read_csv(path) -> Table:
    p = Path(path)
    if not p.exists():
        raise MissingInputError(f"input file not found: {p}")
    metadata = {}
    rows = []
    with open(p, newline="") as fh:
        header = None
        reader = csv.reader(fh)
        for raw in reader:
            if not raw:
                continue
            if raw[0].startswith("#"):
                text = ",".join(raw).lstrip("#").strip()
                if "=" in text:
                    key, val = text.split("=", 1)
                    metadata[key.strip()] = val.strip()
                continue
            if header is None:
                header = [h.strip() for h in raw]
                continue
            rows.append(dict(zip(header, raw)))
    if header is None or not rows:
        raise EmptyInputError(f"no data rows in {p}")
    return Table(metadata=metadata, rows=rows)


@dataclass
class RenderResult:
    png: Path
    svg: Path
    annotations: dict = field(default_factory=dict)


def render(job: FigureJob) -> RenderResult:
    """Render the job to <output>.png and <output>.svg deterministically."""
    tables = [read_csv(p) for p in job.inputs]
    with plt.rc_context(_RC):
        fig, ax = plt.subplots()
        if job.kind == "tail":
            annotations = _render_tail(ax, tables[0], job)
        elif job.kind == "correlation":
            annotations = _render_correlation(ax, tables, job)
        else:
            annotations = _render_z_growth(ax, tables[0], job)
        if job.title:
            ax.set_title(job.title)
        fig.tight_layout()
        out = Path(job.output)
        out.parent.mkdir(parents=True, exist_ok=True)
        png = out.with_suffix(".png")
        svg = out.with_suffix(".svg")
        fig.savefig(png, metadata={"Software": "cmz-figures"})
        fig.savefig(svg, metadata={"Date": None})
        plt.close(fig)
    return RenderResult(png=png, svg=svg, annotations=annotations)


def _render_tail(ax, table: Table, job: FigureJob) -> dict:
    ns = table.floats("n")
    surv = table.floats("survival")
    pts = [(n, s) for n, s in zip(ns, surv) if n > 0 and s > 0]
    if not pts:
        raise EmptyInputError("tail curve has no positive entries")
    xs, ys = zip(*pts)
    ax.loglog(xs, ys, lw=1.2, label="survival")
    annotations = {}
    alpha = table.metadata.get("alpha_hat")
    if alpha is not None:
        annotations["fitted_slope"] = float(alpha)
        ax.text(0.04, 0.08, f"fitted slope = -{float(alpha):.3f}",
                transform=ax.transAxes)
    if job.reference_slope is not None:
        a = float(job.reference_slope)
        x0 = xs[min(3, len(xs) - 1)]
        y0 = ys[min(3, len(ys) - 1)]
        ref_x = [x for x in xs if x >= x0]
        ref_y = [y0 * (x / x0) ** (-a) for x in ref_x]
        ax.loglog(ref_x, ref_y, "--", lw=1.0, label=f"reference n^(-{a:g})")
        annotations["reference_slope"] = a
    ax.set_xlabel("n")
    ax.set_ylabel("P(> n)")
    ax.legend()
    return annotations


def _render_correlation(ax, tables, job: FigureJob) -> dict:
    emp = tables[0]
    ns = emp.floats("n")
    est = emp.floats("estimate")
    ax.plot(ns, est, "o-", ms=3, lw=1.0, label="empirical")
    if "stderr" in emp.rows[0]:
        err = emp.floats("stderr")
        lo = [e - 2 * s for e, s in zip(est, err)]
        hi = [e + 2 * s for e, s in zip(est, err)]
        ax.fill_between(ns, lo, hi, alpha=0.25, lw=0)
    annotations = {"n_points": len(ns)}
    if len(tables) > 1:
        pred = tables[1]
        ax.plot(pred.floats("n"), pred.floats("predicted"), "--", lw=1.2,
                label="predicted")
        annotations["overlay"] = "predicted"
    ax.set_xlabel("n")
    ax.set_ylabel("C(n)")
    ax.legend()
    return annotations


def _render_z_growth(ax, table: Table, job: FigureJob) -> dict:
    ms = table.floats("m")
    zs = table.floats("z")
    ax.semilogy(ms, zs, "o-", ms=4, lw=1.2, label="Z(G_m)")
    annotations = {}
    theta = table.metadata.get("fitted_theta")
    if theta is not None:
        annotations["fitted_theta"] = float(theta)
        ax.text(0.55, 0.85, f"fitted theta = {float(theta):.3f}",
                transform=ax.transAxes)
    ax.set_xlabel("m")
    ax.set_ylabel("Z")
    ax.legend()
    return annotations
