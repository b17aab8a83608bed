"""Regularly varying functions with index -alpha.

A function r is regularly varying with index -alpha if r(lambda*x)/r(x) ->
lambda^(-alpha) for every lambda > 0.  This module covers the three concrete
families used throughout the package,

    pure-power                  r(x) = s * x^(-alpha)
    power-times-log-power       r(x) = s * x^(-alpha) * (log x)^beta
    power-times-exp-log-power   r(x) = s * x^(-alpha) * exp((log x)^gamma)

together with the integral (Karamata) representation

    r(x) = exp( c(x) + int_y^x a(s)/s ds ),   c(x) -> C,  a(x) -> -alpha,

plus the estimators and tail sums the statistics modules need.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from typing import Callable, Optional, Sequence

import numpy as np
from scipy import integrate

from .errors import DivergenceError, DomainError, InsufficientDataError

MODIFIERS = ("pure-power", "power-times-log-power", "power-times-exp-log-power")

#: epsilon of the power envelope x^(-alpha +/- eps) used for remainder bounds
DEFAULT_ENVELOPE_EPS = 0.01

#: absolute tolerance of the Karamata quadrature (integrands are smooth)
KARAMATA_QUAD_TOL = 1e-12


@dataclass(frozen=True)
class RegVarSpec:
    """A concrete regularly varying function on [cutoff, inf).

    ``index`` is the alpha in index -alpha.  When ``karamata`` handles
    (c, a) are attached, ``evaluate`` uses the integral representation;
    otherwise the closed-form modifier family.
    """

    index: float
    modifier: str = "pure-power"
    beta: float = 0.0
    gamma: float = 0.5
    scale: float = 1.0
    cutoff: float = 1.0
    karamata: Optional[tuple[Callable[[float], float], Callable[[float], float]]] = field(
        default=None, repr=False, compare=False
    )

    def __post_init__(self):
        if self.modifier not in MODIFIERS:
            raise DomainError(f"unknown modifier {self.modifier!r}")
        if self.scale <= 0:
            raise DomainError("scale must be positive")
        if self.cutoff <= 0:
            raise DomainError("cutoff must be positive")
        if self.modifier == "power-times-exp-log-power" and not (0.0 < self.gamma < 1.0):
            raise DomainError("power-times-exp-log-power requires gamma in (0,1)")
        if self.modifier == "power-times-log-power" and self.cutoff <= 1.0:
            # (log x)^beta needs log x > 0 on the domain
            raise DomainError("log-power modifier requires cutoff > 1")

    def __call__(self, x):
        return evaluate(self, x)

    def with_karamata(self) -> "RegVarSpec":
        """Attach the exact Karamata twin (c, a) of this closed-form spec.

        With a(s) = d log r / d log s and constant c = log r(cutoff) the
        representation reproduces r exactly, so the round trip is an identity
        up to quadrature tolerance.
        """
        alpha, beta, gamma = self.index, self.beta, self.gamma
        c0 = math.log(evaluate(self, self.cutoff))
        if self.modifier == "pure-power":
            a = lambda s: -alpha
        elif self.modifier == "power-times-log-power":
            a = lambda s: -alpha + beta / math.log(s)
        else:
            a = lambda s: -alpha + gamma * math.log(s) ** (gamma - 1.0)
        return replace(self, karamata=(lambda s: c0, a))

    def karamata_mismatch(self, xs: Sequence[float]) -> float:
        """Max relative deviation between the integral form and the closed form."""
        if self.karamata is None:
            raise DomainError("spec has no karamata handles attached")
        closed = replace(self, karamata=None)
        worst = 0.0
        for x in xs:
            a = _karamata_value(self, float(x))
            b = evaluate(closed, float(x))
            worst = max(worst, abs(a - b) / abs(b))
        return worst

    def to_json(self) -> dict:
        return {
            "index": self.index,
            "modifier": self.modifier,
            "beta": self.beta,
            "gamma": self.gamma,
            "scale": self.scale,
            "cutoff": self.cutoff,
        }

    @classmethod
    def from_json(cls, doc: dict) -> "RegVarSpec":
        return cls(
            index=float(doc["index"]),
            modifier=doc.get("modifier", "pure-power"),
            beta=float(doc.get("beta", 0.0)),
            gamma=float(doc.get("gamma", 0.5)),
            scale=float(doc.get("scale", 1.0)),
            cutoff=float(doc.get("cutoff", 1.0)),
        )

    @classmethod
    def from_karamata(
        cls,
        c: Callable[[float], float],
        a: Callable[[float], float],
        limit_index: float,
        cutoff: float,
    ) -> "RegVarSpec":
        """Spec defined purely by its Karamata components (c, a).

        ``limit_index`` is the alpha with lim a(x) = -alpha.
        """
        return cls(index=limit_index, modifier="pure-power", cutoff=cutoff, karamata=(c, a))


def _karamata_value(spec: RegVarSpec, x: float) -> float:
    c, a = spec.karamata
    if x == spec.cutoff:
        val = 0.0
    else:
        val, _ = integrate.quad(
            lambda s: a(s) / s, spec.cutoff, x, epsabs=KARAMATA_QUAD_TOL, epsrel=1e-12, limit=200
        )
    return math.exp(c(x) + val)


def evaluate(spec: RegVarSpec, x):
    """r(x) for x >= cutoff (scalar or array), always strictly positive."""
    arr = np.asarray(x, dtype=float)
    if np.any(arr < spec.cutoff):
        raise DomainError(f"x below cutoff {spec.cutoff}")
    if spec.karamata is not None:
        vals = np.array([_karamata_value(spec, float(v)) for v in np.atleast_1d(arr)])
        return vals.reshape(arr.shape) if arr.ndim else float(vals[0])
    out = spec.scale * arr ** (-spec.index)
    if spec.modifier == "power-times-log-power":
        out = out * np.log(arr) ** spec.beta
    elif spec.modifier == "power-times-exp-log-power":
        out = out * np.exp(np.log(arr) ** spec.gamma)
    return out if arr.ndim else float(out)


@dataclass(frozen=True)
class RatioReport:
    lam: float
    xs: np.ndarray
    ratios: np.ndarray
    limit: float
    converged: bool


def ratio_limit_check(
    spec: RegVarSpec, lam: float, xs: Sequence[float], tolerance: float = 1e-3
) -> RatioReport:
    """Check r(lam*x)/r(x) -> lam^(-alpha) along an increasing grid."""
    if lam <= 0:
        raise DomainError("lambda must be positive")
    xs = np.asarray(xs, dtype=float)
    if xs.size == 0:
        raise DomainError("xs must be nonempty")
    if np.any(np.diff(xs) <= 0):
        raise DomainError("xs must be strictly increasing")
    lo = np.minimum(xs, lam * xs)
    if np.any(lo < spec.cutoff):
        raise DomainError("grid leaves the spec domain after scaling by lambda")
    ratios = evaluate(spec, lam * xs) / evaluate(spec, xs)
    limit = lam ** (-spec.index)
    return RatioReport(
        lam=lam,
        xs=xs,
        ratios=ratios,
        limit=limit,
        converged=bool(abs(ratios[-1] - limit) < tolerance),
    )


@dataclass(frozen=True)
class IndexFit:
    alpha: float
    stderr: float
    n_points: int
    window: tuple[float, float]


def estimate_index(samples, window: tuple[float, float]) -> IndexFit:
    """Least-squares slope of log(value) against log(x) over a window.

    Returns alpha-hat = -slope with the usual regression standard error.
    The windowed log-log fit converges much faster than the pointwise limit
    log r(x)/log x for log-corrected functions, which is why the window is
    exposed to the caller.
    """
    pairs = np.asarray(samples, dtype=float)
    if pairs.ndim != 2 or pairs.shape[1] != 2:
        raise DomainError("samples must be (x, value) pairs")
    lo, hi = window
    mask = (pairs[:, 0] >= lo) & (pairs[:, 0] <= hi)
    sel = pairs[mask]
    if sel.shape[0] < 3:
        raise InsufficientDataError(
            f"need >= 3 samples in window [{lo}, {hi}], got {sel.shape[0]}"
        )
    if np.any(sel[:, 1] <= 0):
        raise DomainError("values must be positive for a log-log fit")
    if np.unique(sel[:, 0]).size != sel.shape[0]:
        raise DomainError("sample xs must be distinct")
    lx = np.log(sel[:, 0])
    ly = np.log(sel[:, 1])
    n = lx.size
    sxx = np.sum((lx - lx.mean()) ** 2)
    slope = np.sum((lx - lx.mean()) * (ly - ly.mean())) / sxx
    resid = ly - (ly.mean() + slope * (lx - lx.mean()))
    dof = max(n - 2, 1)
    stderr = math.sqrt(float(np.sum(resid**2)) / dof / sxx)
    return IndexFit(alpha=float(-slope), stderr=stderr, n_points=n, window=(lo, hi))


@dataclass(frozen=True)
class TailSummary:
    sum: float
    integral: float
    ratio: float
    horizon: int
    remainder_bound: float


def tail_integral(spec: RegVarSpec, n: float) -> float:
    """int_n^inf r(x) dx; closed form for pure powers, quadrature otherwise."""
    if spec.index <= 1:
        raise DivergenceError("tail integral diverges for index <= 1")
    if n < spec.cutoff:
        raise DomainError("n below cutoff")
    if spec.karamata is None and spec.modifier == "pure-power":
        return spec.scale * n ** (1.0 - spec.index) / (spec.index - 1.0)
    val, _ = integrate.quad(lambda x: evaluate(spec, x), n, np.inf, limit=400)
    return float(val)


def tail_sum_and_integral(
    spec: RegVarSpec,
    n: int,
    horizon: int = 10**6,
    envelope_eps: float = DEFAULT_ENVELOPE_EPS,
    rel_tol: float = 1e-6,
) -> TailSummary:
    """sum_{k>=n} r(k) and int_n^inf r(x) dx for a non-increasing spec.

    The sum is truncated at a horizon H for which the leftover beyond H is
    below rel_tol of the partial sum, certified by the pure-power envelope
    r(x) <= C x^(-alpha+eps); the leftover is then added back via the
    monotone bracket [int_{H+1} r, int_{H+1} r + r(H+1)] (midpoint).  For
    monotone specs the sandwich

        integral <= sum <= integral + r(n)

    is asserted on every call.
    """
    alpha = spec.index
    if alpha <= 1:
        raise DivergenceError("tail sum diverges for index <= 1")
    if n < spec.cutoff:
        raise DomainError("n below cutoff")
    if envelope_eps <= 0 or envelope_eps >= alpha - 1:
        raise DomainError("envelope_eps must lie in (0, alpha - 1)")

    integral = tail_integral(spec, n)
    horizon = max(int(horizon), n + 1)
    for _ in range(20):
        partial, r_n, r_h1 = _partial_sum(spec, n, horizon)
        # leftover sum_{k>H} r(k) lies in [int_{H+1} r, int_{H+1} r + r(H+1)]
        # (monotone bracket); adding the midpoint leaves an error <= r(H+1)/2,
        # certified against the pure-power envelope r(x) <= c_env x^(-alpha+eps).
        c_env = r_h1 * (horizon + 1.0) ** (alpha - envelope_eps)
        env_width = c_env * (horizon + 1.0) ** (-(alpha - envelope_eps))
        if env_width < rel_tol * partial:
            lo = tail_integral(spec, horizon + 1.0)
            remainder = lo + 0.5 * r_h1
            total = partial + remainder
            env_bound = tail_integral_pure(c_env, alpha - envelope_eps, horizon + 1.0) + r_h1
            if _spec_nonincreasing(spec, n, horizon):
                slack = 1e-12 * max(1.0, abs(total))
                assert integral - slack <= total <= integral + r_n + slack, (
                    "tail sandwich integral <= sum <= integral + r(n) violated"
                )
            return TailSummary(
                sum=total,
                integral=integral,
                ratio=total / integral,
                horizon=horizon,
                remainder_bound=env_bound,
            )
        horizon *= 2
    raise DivergenceError("could not reach the requested remainder tolerance")


_CHUNK = 10**7


def _partial_sum(spec: RegVarSpec, n: int, horizon: int) -> tuple[float, float, float]:
    """(sum_{k=n}^{horizon} r(k), r(n), r(horizon+1)), summed small-to-large."""
    total = 0.0
    hi = horizon
    r_n = float(evaluate(spec, float(n)))
    while hi >= n:
        lo = max(n, hi - _CHUNK + 1)
        vals = evaluate(spec, np.arange(lo, hi + 1, dtype=float))
        total += float(np.sum(vals[::-1]))
        hi = lo - 1
    return total, r_n, float(evaluate(spec, float(horizon + 1)))


def tail_integral_pure(scale: float, alpha: float, n: float) -> float:
    """Closed-form int_n^inf scale * x^(-alpha) dx for alpha > 1."""
    return scale * n ** (1.0 - alpha) / (alpha - 1.0)


def _spec_nonincreasing(spec: RegVarSpec, n: int, horizon: int) -> bool:
    xs = np.unique(np.geomspace(n, horizon + 1, 64))
    vals = np.atleast_1d(evaluate(spec, xs))
    return bool(np.all(np.diff(vals) <= 1e-15 * np.abs(vals[:-1])))
