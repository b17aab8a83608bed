"""Numerical check of the tail-transfer statement on a synthetic model.

Parts checked over the window n in [N/10, N] with exact tails:

  (a)  H_n << r(n)   implies  A_n << r(n)        (bounded-growth check)
  (b)  H_n >> n^-a   implies  A_n >> H_n         (bounded-below check)
  (c)  H_n ~ r(n)    implies  A_n ~ r(n)         (two-sided band check)

"Bounded" at desk scale means the ratio sequence does not grow or shrink by
more than growth_guard across the window; part (c) additionally requires the
sup/inf band ratio of both A/r and A/H to stay below band_threshold.  The
exponent a in (b) is checked for a whole sweep of values since the statement
is independent of the particular a > 0.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .. import rv
from ..errors import InsufficientRangeError
from .model import CmzModel, exact_tails


@dataclass
class VerifyReport:
    window: tuple[int, int]
    ns: np.ndarray
    a_over_r: np.ndarray
    a_over_h: np.ndarray   # nan where H_n = 0
    h_over_r: np.ndarray
    sup_a_over_r: float
    inf_a_over_r: float
    sup_a_over_h: float
    inf_a_over_h: float
    band_a_over_r: float
    band_a_over_h: float
    verdict_a: bool
    verdict_b: bool
    verdict_c: bool
    a_sweep: dict = field(default_factory=dict)


def _bounded_growth(vals: np.ndarray, guard: float) -> bool:
    finite = vals[np.isfinite(vals) & (vals > 0)]
    if finite.size == 0:
        return False
    return bool(np.max(finite) <= guard * finite[0])


def _bounded_below(vals: np.ndarray, guard: float) -> bool:
    if np.any(~np.isfinite(vals)):
        return False
    if np.any(vals <= 0):
        return False
    return bool(np.min(vals) >= vals[0] / guard)


def verify_main_theorem(
    model: CmzModel,
    r: rv.RegVarSpec,
    N: int,
    a: float,
    band_threshold: float = 10.0,
    growth_guard: float = 100.0,
    sweep: Sequence[float] = (0.5, 1.0, 2.0),
) -> VerifyReport:
    """Compare exact A_n against r(n) and H_n over n in [N/10, N]."""
    if a <= 0:
        raise InsufficientRangeError("exponent a must be positive")
    if N < 10:
        raise InsufficientRangeError("N too small for the band window [N/10, N]")
    tails = exact_tails(model, N)
    lo = max(1, N // 10)
    ns = np.arange(lo, N + 1, dtype=np.int64)
    a_vals = tails["A"].survival[ns]
    h_vals = tails["H"].survival[ns]
    r_vals = np.atleast_1d(rv.evaluate(r, ns.astype(float)))

    a_over_r = a_vals / r_vals
    h_over_r = h_vals / r_vals
    with np.errstate(divide="ignore", invalid="ignore"):
        a_over_h = np.where(h_vals > 0, a_vals / h_vals, np.nan)

    finite_ar = a_over_r[np.isfinite(a_over_r) & (a_over_r > 0)]
    finite_ah = a_over_h[np.isfinite(a_over_h) & (a_over_h > 0)]
    sup_ar = float(np.max(finite_ar)) if finite_ar.size else np.nan
    inf_ar = float(np.min(finite_ar)) if finite_ar.size else np.nan
    sup_ah = float(np.max(finite_ah)) if finite_ah.size else np.nan
    inf_ah = float(np.min(finite_ah)) if finite_ah.size else np.nan
    band_ar = sup_ar / inf_ar if finite_ar.size else np.inf
    band_ah = sup_ah / inf_ah if finite_ah.size and np.all(h_vals > 0) else np.inf

    # each part is an implication: vacuously true when its premise fails
    premise_a = _bounded_growth(h_over_r, growth_guard)
    verdict_a = (not premise_a) or _bounded_growth(a_over_r, growth_guard)

    concl_b = bool(np.all(h_vals > 0)) and _bounded_below(a_over_h, growth_guard)

    def part_b(a_exp: float) -> tuple[bool, bool]:
        premise = _bounded_below(h_vals * ns.astype(float) ** a_exp, growth_guard)
        return premise, (not premise) or concl_b

    premise_b, verdict_b = part_b(a)
    a_sweep = {float(x): part_b(float(x)) for x in dict.fromkeys([*sweep, a])}

    verdict_c = (
        verdict_a
        and verdict_b
        and band_ar < band_threshold
        and band_ah < band_threshold
    )
    return VerifyReport(
        window=(lo, N),
        ns=ns,
        a_over_r=a_over_r,
        a_over_h=a_over_h,
        h_over_r=h_over_r,
        sup_a_over_r=sup_ar,
        inf_a_over_r=inf_ar,
        sup_a_over_h=sup_ah,
        inf_a_over_h=inf_ah,
        band_a_over_r=band_ar,
        band_a_over_h=band_ah,
        verdict_a=verdict_a,
        verdict_b=verdict_b,
        verdict_c=verdict_c,
        a_sweep=a_sweep,
    )
