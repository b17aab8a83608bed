"""Synthetic CMZ structures: construction, exact tails, simulation, checks."""

from .hatratio import HatRatioResult, hat_ratio, independent_product_reference
from .model import (
    CmzModel,
    GibbsMarkovBase,
    TailCurve,
    build_synthetic,
    exact_tails,
    expectation_identity_gap,
)
from .simulate import BaseCorrelation, TowerSimSummary, base_correlation, simulate_tower
from .verify import VerifyReport, verify_main_theorem

__all__ = [
    "BaseCorrelation",
    "CmzModel",
    "GibbsMarkovBase",
    "HatRatioResult",
    "TailCurve",
    "TowerSimSummary",
    "VerifyReport",
    "base_correlation",
    "build_synthetic",
    "exact_tails",
    "expectation_identity_gap",
    "hat_ratio",
    "independent_product_reference",
    "simulate_tower",
    "verify_main_theorem",
]
