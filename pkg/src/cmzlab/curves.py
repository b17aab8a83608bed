"""Standard curves, standard families, the Z-function and growth checks.

A standard pair is a curve from the admissible class together with a
probability measure absolutely continuous with respect to arclength; a
standard family is a weighted collection of standard pairs.  The Z-function

    Z(G) = sup_eps  mu(distance to a curve endpoint < eps) / eps

measures how fragmented a family is.  Push-forwards cut curves at detected
singularities (return-index changes or image-spacing jumps), renormalize the
fragment densities and multiply the factor weights by the fragment masses,
so iterating push_forward and Z gives the growth sequence Z(G_m).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence

import numpy as np

from . import rv
from .errors import DomainError, InsufficientDataError

#: per-step leakage budget for dropped fragments (fraction of family mass)
LEAKAGE_BUDGET = 1e-3

#: image-spacing jump factor that marks a cut even without an index change
JUMP_FACTOR = 10.0


@dataclass
class CurveMesh:
    """A discretized curve with a probability density on it.

    ``points`` are ordered sample points in section coordinates, ``weights``
    the probability masses of the mesh cells (sum to 1).  Arclength is the
    cumulative Euclidean length of the polyline.
    """

    points: np.ndarray
    weights: np.ndarray

    def __post_init__(self):
        self.points = np.asarray(self.points, dtype=float)
        self.weights = np.asarray(self.weights, dtype=float)
        if self.points.ndim != 2 or self.points.shape[0] != self.weights.size:
            raise DomainError("points must be (k, d) with one weight per point")
        if self.points.shape[0] < 2:
            raise DomainError("a curve mesh needs at least 2 points")
        if np.any(self.weights < 0):
            raise DomainError("weights must be non-negative")
        total = float(self.weights.sum())
        if total <= 0:
            raise DomainError("curve carries no mass")
        self.weights = self.weights / total
        seg = np.linalg.norm(np.diff(self.points, axis=0), axis=1)
        if np.any(seg <= 0):
            raise DomainError("points must be strictly ordered along the curve")
        self.cum_s = np.concatenate([[0.0], np.cumsum(seg)])

    @property
    def length(self) -> float:
        return float(self.cum_s[-1])

    @classmethod
    def uniform_segment(cls, a, b, k: int = 256) -> "CurveMesh":
        """A straight segment carrying the uniform (arclength) measure.

        Mesh cells are the midpoint cells of the sample points; the edge
        cells are half-width, so weights follow the cell widths to keep the
        density exactly uniform.
        """
        a = np.asarray(a, dtype=float)
        b = np.asarray(b, dtype=float)
        ts = np.linspace(0.0, 1.0, k)
        pts = a[None, :] + ts[:, None] * (b - a)[None, :]
        w = np.full(k, 1.0 / (k - 1))
        w[0] = 0.5 / (k - 1)
        w[-1] = 0.5 / (k - 1)
        return cls(pts, w)

    def endpoint_distance_measure(self, eps: float) -> float:
        """mu{ x : distance along the curve to an endpoint < eps }.

        Computed exactly for the piecewise-uniform density carried by the
        mesh cells, so a uniform curve gives exactly min(2 eps / L, 1).
        """
        L = self.length
        total = 0.0
        # cell i occupies [mid(i-1,i), mid(i,i+1)] in arclength with mass w_i
        mids = 0.5 * (self.cum_s[:-1] + self.cum_s[1:])
        lo = np.concatenate([[0.0], mids])
        hi = np.concatenate([mids, [L]])
        width = hi - lo
        # near-start part: d(s) = s < eps
        a = np.minimum(hi, eps)
        start_frac = np.clip((a - lo) / width, 0.0, 1.0)
        # near-end part: d(s) = L - s < eps
        b = np.maximum(lo, L - eps)
        end_frac = np.clip((hi - b) / width, 0.0, 1.0)
        frac = np.minimum(start_frac + end_frac, 1.0)
        total = float(np.sum(self.weights * frac))
        return total

    def min_cell(self) -> float:
        return float(np.min(np.diff(self.cum_s)))

    def max_cell(self) -> float:
        return float(np.max(np.diff(self.cum_s)))


@dataclass
class StandardFamily:
    """Weighted collection of standard pairs with a probability factor measure."""

    curves: list
    factor_weights: np.ndarray
    label: str = ""

    def __post_init__(self):
        self.factor_weights = np.asarray(self.factor_weights, dtype=float)
        if len(self.curves) != self.factor_weights.size:
            raise DomainError("one factor weight per curve")
        if len(self.curves) == 0:
            raise DomainError("family must contain at least one curve")
        total = float(self.factor_weights.sum())
        if total <= 0:
            raise DomainError("factor weights must carry mass")
        self.factor_weights = self.factor_weights / total

    @classmethod
    def single(cls, curve: CurveMesh, label: str = "") -> "StandardFamily":
        return cls([curve], np.array([1.0]), label=label)

    @property
    def max_length(self) -> float:
        return max(c.length for c in self.curves)

    def mesh_tolerance(self) -> float:
        return max(c.max_cell() for c in self.curves)

    def to_rows(self) -> np.ndarray:
        """(curve id, point index, coords..., weight) rows for CSV export."""
        rows = []
        for ci, (curve, w) in enumerate(zip(self.curves, self.factor_weights)):
            for pi in range(curve.points.shape[0]):
                rows.append([ci, pi, *curve.points[pi], w * curve.weights[pi]])
        return np.asarray(rows)

    def to_csv(self, path) -> None:
        rows = self.to_rows()
        n_coord = rows.shape[1] - 3
        coords = ",".join(f"x{j}" for j in range(n_coord))
        with open(path, "w") as fh:
            fh.write(f"curve,point,{coords},weight\n")
            for row in rows:
                cells = [str(int(row[0])), str(int(row[1]))]
                cells += [repr(float(v)) for v in row[2:]]
                fh.write(",".join(cells) + "\n")


@dataclass
class ZReport:
    z: float
    eps_argmax: float
    eps_grid: np.ndarray
    values: np.ndarray
    excluded_below: float


def z_function(family: StandardFamily, eps_grid: Optional[Sequence[float]] = None,
               grid_size: int = 64) -> ZReport:
    """Discrete supremum of mu(endpoint distance < eps)/eps over an eps grid.

    The grid spans [mesh tolerance, max curve length]; values below the mesh
    resolution are excluded (the discrete supremum is a lower bound of the
    true Z, reported with its grid).
    """
    tol = family.mesh_tolerance()
    if eps_grid is None:
        hi = family.max_length
        if hi <= tol:
            raise DomainError("curves too short for the mesh tolerance")
        eps_grid = np.geomspace(tol, hi, grid_size)
    else:
        eps_grid = np.asarray(eps_grid, dtype=float)
        keep = eps_grid >= tol
        if not np.all(keep):
            eps_grid = eps_grid[keep]
        if eps_grid.size == 0:
            raise DomainError("entire eps grid below mesh resolution")
    vals = np.empty(eps_grid.size)
    for i, eps in enumerate(eps_grid):
        mu = 0.0
        for curve, w in zip(family.curves, family.factor_weights):
            mu += w * curve.endpoint_distance_measure(float(eps))
        vals[i] = mu / eps
    best = int(np.argmax(vals))
    return ZReport(z=float(vals[best]), eps_argmax=float(eps_grid[best]),
                   eps_grid=eps_grid, values=vals, excluded_below=tol)


@dataclass
class PushForwardResult:
    family: StandardFamily
    leakage: float
    n_fragments: int


def push_forward(
    family: StandardFamily,
    map_handle: Callable[[np.ndarray], tuple[np.ndarray, np.ndarray, np.ndarray]],
    jump_factor: float = JUMP_FACTOR,
) -> PushForwardResult:
    """Image family under a return-map handle.

    ``map_handle(points) -> (images, branch, valid)`` gives image points, an
    integer branch/return-index label per point (used as the singularity
    detector) and a validity mask.  Curves are cut where the label changes or
    where the image spacing jumps by more than ``jump_factor`` times the
    median; fragments shorter than 2 points are dropped into the leakage
    ledger.
    """
    new_curves = []
    new_weights = []
    leak = 0.0
    for curve, w in zip(family.curves, family.factor_weights):
        images, branch, valid = map_handle(curve.points)
        images = np.asarray(images, dtype=float)
        branch = np.asarray(branch)
        valid = np.asarray(valid, dtype=bool)
        spacing = np.linalg.norm(np.diff(images, axis=0), axis=1)
        finite = spacing[np.isfinite(spacing)]
        med = np.median(finite[finite > 0]) if np.any(finite > 0) else 0.0
        cuts = np.zeros(curve.points.shape[0] - 1, dtype=bool)
        cuts |= branch[1:] != branch[:-1]
        cuts |= ~valid[1:] | ~valid[:-1]
        if med > 0:
            cuts |= spacing > jump_factor * med
        cut_idx = np.flatnonzero(cuts)
        bounds = np.concatenate([[0], cut_idx + 1, [curve.points.shape[0]]])
        for a, b in zip(bounds[:-1], bounds[1:]):
            mass = float(np.sum(curve.weights[a:b]))
            usable = valid[a:b].all() and (b - a) >= 2
            if usable:
                seg = np.linalg.norm(np.diff(images[a:b], axis=0), axis=1)
                usable = bool(np.all(seg > 0))
            if not usable:
                leak += w * mass
                continue
            new_curves.append(CurveMesh(images[a:b], curve.weights[a:b]))
            new_weights.append(w * mass)
    if not new_curves:
        raise DomainError("push-forward lost the entire family")
    fam = StandardFamily(new_curves, np.asarray(new_weights), label=family.label)
    return PushForwardResult(family=fam, leakage=leak, n_fragments=len(new_curves))


# ---------------------------------------------------------------------------
# unstable widths and the growth fit
# ---------------------------------------------------------------------------


@dataclass
class WidthReport:
    ks: np.ndarray
    widths: np.ndarray       # max over sampled curves of m_gamma(gamma cap R_k)
    skipped: np.ndarray      # True where no sampled curve met R_k
    t_fit: float
    t_stderr: float


def unstable_width_law(
    r_values_per_curve: Sequence[np.ndarray],
    curves: Sequence[CurveMesh],
    ks: Sequence[int],
) -> WidthReport:
    """Fit of the unstable-width exponent from per-point return indices.

    For each curve, points carry the return time R evaluated by the caller's
    dynamics; the width at level k is the arclength of {R = k+1}, and the
    slope of log(max width) against log k is -t.
    """
    ks = np.asarray(sorted(set(int(k) for k in ks)), dtype=np.int64)
    widths = np.zeros(ks.size)
    for curve, rvals in zip(curves, r_values_per_curve):
        rvals = np.asarray(rvals)
        if rvals.size != curve.points.shape[0]:
            raise DomainError("one R value per mesh point")
        seg_len = np.diff(curve.cum_s)
        left = rvals[:-1]
        right = rvals[1:]
        for i, k in enumerate(ks):
            target = k + 1
            both = (left == target) & (right == target)
            one = (left == target) ^ (right == target)
            width = float(np.sum(seg_len[both]) + 0.5 * np.sum(seg_len[one]))
            widths[i] = max(widths[i], width)
    skipped = widths <= 0
    good = ~skipped
    if good.sum() < 3:
        raise InsufficientDataError("fewer than 3 populated width levels")
    fit = rv.estimate_index(
        np.column_stack([ks[good].astype(float), widths[good]]),
        window=(float(ks[good][0]), float(ks[good][-1])),
    )
    return WidthReport(ks=ks, widths=widths, skipped=skipped,
                       t_fit=fit.alpha, t_stderr=fit.stderr)


@dataclass
class GrowthReport:
    z_sequence: np.ndarray
    fitted_c: float
    fitted_theta: float
    leakage: np.ndarray
    verdict: bool           # geometric contraction to the O(1) floor
    diverged: bool


def growth_lemma_check(
    family0: StandardFamily,
    map_handle,
    m_max: int,
    theta_pass: float = 0.98,
) -> GrowthReport:
    """Z(G_m) for m = 0..m_max with a least-squares fit of Z_m ~ C(theta^m Z_0 + 1).

    The verdict requires a contraction (theta < theta_pass) and per-step
    leakage within budget; a Z increase by more than 10x beyond the first
    step raises the divergence flag (mesh under-resolution suspected).
    """
    if m_max < 1:
        raise DomainError("m_max must be >= 1")
    fam = family0
    zs = [z_function(fam).z]
    leaks = []
    diverged = False
    for m in range(m_max):
        res = push_forward(fam, map_handle)
        fam = res.family
        leaks.append(res.leakage)
        zs.append(z_function(fam).z)
        if m >= 1 and zs[-1] > 10.0 * zs[-2]:
            diverged = True
            break
    zs = np.asarray(zs)
    c_fit, theta_fit = _fit_growth(zs)
    leakage = np.asarray(leaks)
    verdict = (not diverged) and theta_fit < theta_pass and bool(
        np.all(leakage <= LEAKAGE_BUDGET)
    )
    return GrowthReport(z_sequence=zs, fitted_c=c_fit, fitted_theta=theta_fit,
                        leakage=leakage, verdict=verdict, diverged=diverged)


def _fit_growth(zs: np.ndarray) -> tuple[float, float]:
    """Least squares of log Z_m against log(C (theta^m Z_0 + 1)) over a theta grid."""
    ms = np.arange(zs.size, dtype=float)
    z0 = zs[0]
    best = (math.inf, 1.0, zs[-1])
    for theta in np.linspace(0.01, 1.0, 199):
        g = theta**ms * z0 + 1.0
        logc = float(np.mean(np.log(zs) - np.log(g)))
        resid = float(np.sum((np.log(zs) - logc - np.log(g)) ** 2))
        if resid < best[0]:
            best = (resid, theta, math.exp(logc))
    return best[2], best[1]


@dataclass
class ConditionReport:
    """Measured constants for the standard-pair conditions (C1)-(C5).

    The metric constants K and gamma_0 of the distance inequalities have no
    synthetic counterpart and are carried as declared-only metadata.
    """

    statuses: dict = field(default_factory=dict)
    fitted_t: Optional[float] = None
    fitted_p: Optional[float] = None
    growth_c: Optional[float] = None
    growth_theta: Optional[float] = None
    declared_K: Optional[float] = None
    declared_gamma0: Optional[float] = None

    def record(self, condition: str, passed: bool, **info) -> None:
        self.statuses[condition] = {"passed": bool(passed), **info}
        if condition == "C5" and passed:
            t = info.get("t", self.fitted_t)
            p = info.get("p", self.fitted_p)
            if t is not None and p is not None and not (t >= p > 1.0):
                raise DomainError("C5 requires t >= p > 1")

    def to_json(self) -> dict:
        return {
            "statuses": self.statuses,
            "fitted_t": self.fitted_t,
            "fitted_p": self.fitted_p,
            "growth_c": self.growth_c,
            "growth_theta": self.growth_theta,
            "declared_K": self.declared_K,
            "declared_gamma0": self.declared_gamma0,
        }
