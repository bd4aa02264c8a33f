"""Dynamically defined Cantor sets: bridges, gaps, thickness, Gap Lemma, distortion."""
from __future__ import annotations

from .backend import BACKEND

from .core import (
    Bridge,
    CantorApprox,
    ExpandingSystem,
    Gap,
    GapLemmaResult,
    ThicknessReport,
    affine_s_system,
    distortion_constant,
    distortion_report,
    gap_lemma_check,
    middle_cantor,
    quadratic_u_system,
    s_bridges,
    thickness,
    u_bridges_quadratic,
)
from .tent import tent_thickness, tent_thickness_lower_bound

__all__ = [
    "BACKEND",
    "Bridge",
    "CantorApprox",
    "ExpandingSystem",
    "Gap",
    "GapLemmaResult",
    "ThicknessReport",
    "affine_s_system",
    "distortion_constant",
    "distortion_report",
    "gap_lemma_check",
    "middle_cantor",
    "quadratic_u_system",
    "s_bridges",
    "tent_thickness",
    "tent_thickness_lower_bound",
    "thickness",
    "u_bridges_quadratic",
]
