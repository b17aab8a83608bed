"""Synthetic CMZ structures: a finite Gibbs-Markov base, an inner tower with
exponential tails, and a per-level geometric return value.

A model consists of finitely many base cells A with mass p_A.  Each cell
carries an inner return time sigma(A) (the height of the cell's column in the
inner tower) and one geometric return value R(A, l) per level 0 <= l <
sigma(A).  The full roof is h(A) = sum_l R(A, l).  The inner-tower measure
gives every level of cell A the mass p_A / sigma_bar, the base measure is p_A
itself.  All tail curves below are exact sums over this finite structure:

    D_n = mass{ (A,l) : sigma(A) - l > n }        (inner hitting tail)
    H_n = mass{ (A,l) : R(A,l) > n }              (geometric return tail)
    A_n = mass{ A : h(A) > n }                    (full roof tail)
"""

from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np

from .. import rv
from .._rng import rng_from
from ..errors import ConstructionError, DivergenceError, DomainError

#: largest R value carried by a single atom before the geometric grid starts
DEFAULT_HEAD_MAX = 64

#: spacing of the geometric value grid beyond the head
DEFAULT_GRID_RATIO = 1.06

#: cells lighter than this are dropped (recorded as truncated mass)
MASS_FLOOR = 1e-18


@dataclass(frozen=True)
class GibbsMarkovBase:
    """Distortion metadata of the full-branch base map.

    Synthetic bases use branchwise-constant Jacobians, i.e. the C = 0 case of
    the log-distortion bound |log xi(x) - log xi(y)| <= C theta^s(x,y).
    """

    n_cells: int
    distortion_c: float = 0.0
    distortion_theta: float = 0.5
    coding_depth: int = 1

    def __post_init__(self):
        if self.distortion_c < 0:
            raise DomainError("distortion constant must be >= 0")
        if not (0.0 < self.distortion_theta < 1.0):
            raise DomainError("distortion theta must lie in (0,1)")


@dataclass
class TailCurve:
    """Survival curve P(value > n) on n = 0..N with optional binomial errors."""

    n: np.ndarray
    survival: np.ndarray
    kind: str  # one of "D", "H", "A", "R-level"
    exact: bool
    stderr: Optional[np.ndarray] = None

    def __post_init__(self):
        self.n = np.asarray(self.n, dtype=np.int64)
        self.survival = np.asarray(self.survival, dtype=float)
        if self.survival.size and (self.survival[0] > 1.0 + 1e-12 or np.any(self.survival < -1e-15)):
            raise DomainError("survival must lie in [0, 1]")
        if np.any(np.diff(self.survival) > 1e-12):
            raise DomainError("survival must be non-increasing")

    def value(self, n: int) -> float:
        i = int(np.searchsorted(self.n, n))
        if i >= self.n.size or self.n[i] != n:
            raise DomainError(f"n={n} outside curve support")
        return float(self.survival[i])

    def positive_part(self) -> tuple[np.ndarray, np.ndarray]:
        mask = self.survival > 0
        return self.n[mask], self.survival[mask]

    def to_csv(self, path, metadata: Optional[dict] = None) -> None:
        with open(path, "w", newline="") as fh:
            for key, val in (metadata or {}).items():
                fh.write(f"# {key}={val}\n")
            writer = csv.writer(fh)
            writer.writerow(["n", "survival", "stderr", "kind", "exact"])
            for i in range(self.n.size):
                err = "" if self.stderr is None else repr(float(self.stderr[i]))
                writer.writerow([int(self.n[i]), repr(float(self.survival[i])), err,
                                 self.kind, int(self.exact)])


class CmzModel:
    """A finite synthetic CMZ structure.

    Construct with :func:`build_synthetic` (tail-matched) or
    :meth:`CmzModel.from_cells` (explicit cells, used heavily in tests).
    Instances are immutable by convention; all derived quantities are
    computed once here.
    """

    def __init__(
        self,
        masses: np.ndarray,
        sigma: np.ndarray,
        r_levels: np.ndarray,
        offsets: np.ndarray,
        rho: float,
        two_sided: bool = False,
        truncated_tail_mass: float = 0.0,
        base: Optional[GibbsMarkovBase] = None,
    ):
        if not (0.0 < rho < 1.0):
            raise DomainError("rho must lie in (0, 1)")
        self.p = np.asarray(masses, dtype=float)
        self.sigma = np.asarray(sigma, dtype=np.int64)
        self.r_levels = np.asarray(r_levels, dtype=np.int64)
        self.offsets = np.asarray(offsets, dtype=np.int64)
        self.rho = float(rho)
        self.two_sided = bool(two_sided)
        self.truncated_tail_mass = float(truncated_tail_mass)
        self.base = base or GibbsMarkovBase(n_cells=self.p.size)

        if self.p.size != self.sigma.size or self.offsets.size != self.p.size + 1:
            raise ConstructionError("inconsistent cell arrays")
        if np.any(np.diff(self.offsets) != self.sigma):
            raise ConstructionError("offsets do not match sigma")
        if np.any(self.sigma < 1) or np.any(self.r_levels < 1):
            raise DomainError("sigma and R values must be positive integers")
        if np.any(self.p <= 0):
            raise DomainError("cell masses must be positive")
        if abs(float(np.sum(self.p)) - 1.0) > 1e-12:
            raise DomainError("cell masses must sum to 1 within 1e-12")

        # derived quantities
        self.h = np.add.reduceat(self.r_levels, self.offsets[:-1])
        if np.any(self.h < self.sigma):
            raise ConstructionError("h(A) >= sigma(A) violated")
        if np.all(self.sigma == 1):
            # exactly 1 so the A == H identity holds bit-for-bit
            self.sigma_bar = 1.0
        else:
            self.sigma_bar = float(np.sum(self.p * self.sigma))
        self.h_bar = float(np.sum(self.p * self.h))
        self.cell_of_level = np.repeat(np.arange(self.p.size), self.sigma)
        self.level_index = np.arange(self.r_levels.size) - self.offsets[self.cell_of_level]

    # -- constructors -------------------------------------------------------

    @classmethod
    def from_cells(
        cls,
        cells: Sequence[tuple[float, Sequence[int]]],
        rho: float = 0.5,
        two_sided: bool = False,
    ) -> "CmzModel":
        """Model from explicit (mass, [R(A,0), ..., R(A,sigma-1)]) cells."""
        masses = np.array([c[0] for c in cells], dtype=float)
        masses = _normalize_exact(masses)
        sigma = np.array([len(c[1]) for c in cells], dtype=np.int64)
        r_levels = np.concatenate([np.asarray(c[1], dtype=np.int64) for c in cells])
        offsets = np.concatenate([[0], np.cumsum(sigma)])
        return cls(masses, sigma, r_levels, offsets, rho=rho, two_sided=two_sided)

    # -- metadata -----------------------------------------------------------

    @property
    def n_cells(self) -> int:
        return self.p.size

    @property
    def n_levels(self) -> int:
        return self.r_levels.size

    @property
    def max_h(self) -> int:
        return int(self.h.max())

    def level_mass(self) -> np.ndarray:
        """Inner-tower mass p_A/sigma_bar of each level, cell-major order."""
        return self.p[self.cell_of_level] / self.sigma_bar

    def inner_tail_constant(self) -> float:
        """Smallest const with mass{sigma > n} <= const * rho^n for all n."""
        worst = 0.0
        for n in range(0, int(self.sigma.max()) + 1):
            mass = float(np.sum(self.p[self.sigma > n]))
            worst = max(worst, mass / self.rho**n)
        return worst

    def to_json(self) -> dict:
        cells = []
        for i in range(self.n_cells):
            lo, hi = self.offsets[i], self.offsets[i + 1]
            cells.append({
                "mass": float(self.p[i]),
                "sigma": int(self.sigma[i]),
                "R": [int(v) for v in self.r_levels[lo:hi]],
            })
        return {"cells": cells, "rho": self.rho, "two_sided": self.two_sided}

    def save(self, path) -> None:
        with open(path, "w") as fh:
            json.dump(self.to_json(), fh)

    @classmethod
    def from_json(cls, doc: dict) -> "CmzModel":
        cells = [(c["mass"], c["R"]) for c in doc["cells"]]
        return cls.from_cells(cells, rho=float(doc["rho"]), two_sided=bool(doc.get("two_sided", False)))

    @classmethod
    def load(cls, path) -> "CmzModel":
        with open(path) as fh:
            return cls.from_json(json.load(fh))


def _normalize_exact(masses: np.ndarray) -> np.ndarray:
    """Normalize so that np.sum(masses) == 1.0 exactly (bit level).

    The largest cell absorbs the final rounding residue; needed so that
    sigma == 1 models satisfy sigma_bar == 1.0 and the A == H identity is
    bit-exact.
    """
    masses = masses / np.sum(masses)
    j = int(np.argmax(masses))
    for _ in range(8):
        resid = 1.0 - float(np.sum(masses))
        if resid == 0.0:
            return masses
        masses[j] += resid
    return masses


# ---------------------------------------------------------------------------
# exact tails
# ---------------------------------------------------------------------------


def exact_tails(model: CmzModel, N: int) -> dict[str, TailCurve]:
    """Exact D/H/A survival curves for n = 0..N.

    All three are plain finite sums over the model; no sampling is involved.
    The same bincount path is used for every curve so that models with
    sigma == 1 give bit-identical H and A curves.
    """
    if N < 1:
        raise DomainError("N must be >= 1")
    p_level = model.p[model.cell_of_level]
    d_vals = model.sigma[model.cell_of_level] - model.level_index
    sbar = model.sigma_bar

    d_curve = _survival(d_vals, p_level, N) / sbar
    h_curve = _survival(model.r_levels, p_level, N) / sbar
    a_curve = _survival(model.h, model.p, N)
    ns = np.arange(N + 1, dtype=np.int64)
    return {
        "D": TailCurve(ns, d_curve, kind="D", exact=True),
        "H": TailCurve(ns, h_curve, kind="H", exact=True),
        "A": TailCurve(ns, a_curve, kind="A", exact=True),
    }


def _survival(values: np.ndarray, weights: np.ndarray, N: int) -> np.ndarray:
    """S(n) = sum of weights with value > n, n = 0..N; exact bincount path."""
    clipped = np.minimum(values, N + 1)
    counts = np.bincount(clipped, weights=weights, minlength=N + 2)
    total = np.cumsum(counts[::-1])[::-1]  # total[k] = mass{value >= k}
    return total[1:]


def expectation_identity_gap(model: CmzModel, curve: TailCurve) -> float:
    """|sum_n n (A_{n-1} - A_n) - h_bar| for an exact A-curve covering max h."""
    if curve.kind != "A" or not curve.exact:
        raise DomainError("expectation identity applies to exact A-curves")
    if int(curve.n[-1]) < model.max_h:
        raise DomainError("curve must extend to max h")
    surv = curve.survival  # surv[0] = A_0 = 1
    drops = surv[:-1] - surv[1:]  # P(h = n) for n = 1..N
    ns = np.arange(1, drops.size + 1, dtype=float)
    return abs(float(np.sum(ns * drops)) - model.h_bar)


# ---------------------------------------------------------------------------
# tail-matched synthetic construction
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class _AtomGrid:
    values: np.ndarray  # increasing R values, >= 2
    masses: np.ndarray  # P(R = value), sums to 1


def _target_tail(tail_spec: rv.RegVarSpec, n: float) -> float:
    """P(R > n) = tail_spec(n)/tail_spec(n0), n0 = max(1, cutoff)."""
    n0 = max(1.0, tail_spec.cutoff)
    if n <= n0:
        return 1.0
    return float(rv.evaluate(tail_spec, n)) / float(rv.evaluate(tail_spec, n0))


def _atom_grid(
    tail_spec: rv.RegVarSpec, head_max: int, grid_ratio: float, value_max: int
) -> tuple[_AtomGrid, float]:
    vals = list(range(2, head_max + 1))
    v = float(head_max)
    while True:
        v *= grid_ratio
        iv = int(math.ceil(v))
        if iv >= value_max:
            break
        if iv > vals[-1]:
            vals.append(iv)
    vals.append(value_max)
    values = np.array(vals, dtype=np.int64)

    tails = np.array([_target_tail(tail_spec, float(v)) for v in values])
    prev = np.concatenate([[1.0], tails[:-1]])
    masses = prev - tails
    truncated = float(tails[-1])
    masses[-1] += truncated  # lump the beyond-grid tail into the last atom
    if np.any(masses < -1e-15):
        raise ConstructionError("tail_spec is not non-increasing on the value grid")
    masses = np.maximum(masses, 0.0)
    masses = masses / masses.sum()
    return _AtomGrid(values=values, masses=masses), truncated


def _sigma_pmf(rho: float, tol: float = 1e-12) -> np.ndarray:
    """Truncated geometric pmf pi_s ~ rho^(s-1), s = 1..s_max."""
    s_max = max(1, int(math.ceil(math.log(tol) / math.log(rho))))
    pmf = rho ** np.arange(s_max, dtype=float)
    return pmf / pmf.sum()


def build_synthetic(
    tail_spec: rv.RegVarSpec,
    rho: float,
    n_cells: int,
    clustering: float,
    seed: int,
    head_max: int = DEFAULT_HEAD_MAX,
    grid_ratio: float = DEFAULT_GRID_RATIO,
    value_max: int = 30_000,
    two_sided: bool = False,
) -> CmzModel:
    """Synthetic model whose geometric-return marginal matches tail_spec.

    The inner-tower marginal of R satisfies P(R > n) = tail_spec(n)/tail_spec(1)
    exactly at the atom grid values (within 1/n_cells in the head region) and
    the inner return sigma has the prescribed geometric tail rate rho.

    clustering = 0 assigns R values to levels independently (heavy atoms land
    in cells whose remaining levels are typical draws); clustering = 1 gives
    every level of a cell the same R value, the adversarial regime in which a
    comparable return sits one step away.  Intermediate values mix the two
    constructions by mass.
    """
    if tail_spec.index <= 1:
        raise DivergenceError("tail index must exceed 1 so that h is integrable")
    if not (0.0 < rho < 1.0):
        raise DomainError("rho must lie in (0,1)")
    if n_cells < 10:
        raise DomainError("n_cells must be >= 10")
    if not (0.0 <= clustering <= 1.0):
        raise DomainError("clustering must lie in [0,1]")

    atoms, truncated = _atom_grid(tail_spec, head_max, grid_ratio, value_max)
    pi = _sigma_pmf(rho)
    rng = rng_from(seed, 0xC311)

    cells: list[tuple[float, np.ndarray]] = []
    if clustering < 1.0:
        cells += _independent_cells(atoms, pi, n_cells, 1.0 - clustering, rng)
    if clustering > 0.0:
        cells += _comonotone_cells(atoms, pi, clustering)

    masses = np.array([c[0] for c in cells])
    keep = masses > MASS_FLOOR
    dropped = float(masses[~keep].sum())
    kept = [c for c, k in zip(cells, keep) if k]

    model = CmzModel.from_cells(
        [(m, levels) for m, levels in kept], rho=rho, two_sided=two_sided
    )
    model.truncated_tail_mass = truncated + dropped
    return model


#: atoms lighter than RESOLVE_FACTOR / n_cells get dedicated importance cells
RESOLVE_FACTOR = 4.0


def _independent_cells(
    atoms: _AtomGrid, pi: np.ndarray, n_cells: int, weight: float, rng: np.random.Generator
) -> list[tuple[float, np.ndarray]]:
    """Cells with level atoms assigned independently of the cell structure.

    Atoms heavy enough to be resolved by ~n_cells equal-mass cells form the
    "head": their level slots are filled from a cumulatively apportioned,
    shuffled pool.  Every lighter atom gets one dedicated cell per sigma
    block carrying exactly the marginal mass, with one designated heavy level
    and head-distributed companion levels; the companions' head mass is
    subtracted from the pool targets so the overall marginal stays exact to
    one slot.
    """
    sigma_bar = float(np.sum(pi * np.arange(1, pi.size + 1)))
    head_mask = atoms.masses >= RESOLVE_FACTOR / n_cells
    if not np.any(head_mask):
        raise ConstructionError("n_cells too small to resolve the return distribution")
    head_vals = atoms.values[head_mask]
    head_w = atoms.masses[head_mask]
    imp_vals = atoms.values[~head_mask]
    imp_w = atoms.masses[~head_mask]
    w_imp = float(imp_w.sum())
    head_q = head_w / head_w.sum()

    n_blocks = pi.size
    if n_blocks * w_imp >= 1.0:
        raise ConstructionError(
            f"infeasible mass matching: unresolved mass {w_imp:.3g} times s_max {n_blocks} "
            "reaches 1; raise n_cells or lower rho"
        )

    cells: list[tuple[float, np.ndarray]] = []
    companion_mass = np.zeros(head_vals.size)
    for s_idx in range(n_blocks):
        s = s_idx + 1
        for v, wj in zip(imp_vals, imp_w):
            m = s * float(pi[s_idx]) * float(wj)
            if m <= MASS_FLOOR:
                continue
            if s == 1:
                levels = np.array([v], dtype=np.int64)
            else:
                comp = rng.choice(head_vals.size, size=s, p=head_q)
                pos = int(rng.integers(0, s))
                for c in range(s):
                    if c != pos:
                        companion_mass[comp[c]] += m / sigma_bar
                levels = head_vals[comp].astype(np.int64)
                levels[pos] = v
            cells.append((weight * m, levels))

    # head cells: slot level masses vary across sigma blocks, so atoms are
    # assigned by a mass-exact systematic walk over the residual distribution
    # (in shuffled slot order, keeping cell contents independent-like); the
    # marginal error at any threshold is at most one slot's mass.
    head_block = pi * (1.0 - np.arange(1, n_blocks + 1) * w_imp)
    if np.any(head_block <= 0):
        raise ConstructionError("infeasible mass matching in a sigma block")
    cm_target = float(head_block.sum()) / n_cells
    n_per_block = np.maximum(1, np.round(head_block / cm_target)).astype(np.int64)
    cell_mass = np.repeat(head_block / n_per_block, n_per_block)
    cell_sigma = np.repeat(np.arange(1, n_blocks + 1), n_per_block)
    slot_mass = np.repeat(cell_mass / sigma_bar, cell_sigma)

    residual = np.maximum(head_w - companion_mass, 0.0)
    order = rng.permutation(slot_mass.size)
    walked = slot_mass[order]
    mid = np.cumsum(walked) - 0.5 * walked
    mid *= residual.sum() / slot_mass.sum()  # align total masses exactly
    cdf = np.cumsum(residual)
    atom_idx = np.minimum(np.searchsorted(cdf, mid, side="left"), head_vals.size - 1)
    assigned = np.empty(slot_mass.size, dtype=np.int64)
    assigned[order] = head_vals[atom_idx]

    off = 0
    for cm, s in zip(cell_mass, cell_sigma):
        cells.append((weight * float(cm), assigned[off : off + s].copy()))
        off += int(s)
    return cells


def _comonotone_cells(atoms: _AtomGrid, pi: np.ndarray, weight: float) -> list[tuple[float, np.ndarray]]:
    cells = []
    for s_idx in range(pi.size):
        s = s_idx + 1
        for v, wj in zip(atoms.values, atoms.masses):
            m = float(pi[s_idx]) * float(wj)
            if m <= MASS_FLOOR:
                continue
            cells.append((weight * m, np.full(s, v, dtype=np.int64)))
    return cells
