"""Stress concentration between nearly touching elastic inclusions.

Gap geometry, boundary data, auxiliary displacement fields, blow-up rate
certificates, gap quadrature, the free-constant factor system, the
asymptotic gradient expansion and a plane-strain finite-element oracle.
"""

from __future__ import annotations

__version__ = "0.1.0"

from .auxiliary_fields import AuxField, LameConstants, leading_term, u_bar, vbar
from .blowup_rates import Rate, RateCertificate, rate_table, rho, rho_selectors
from .boundary_data import BoundaryData, classify_parity, make_family, rigid_basis
from .elasticity_oracle import build_reference_domain, solve_full, solve_lame, sweep
from .errors import (
    AccuracyError,
    CaseNotCovered,
    ConfigError,
    DomainError,
    GeometryError,
    LameGapError,
    MeshError,
    MissingFactorData,
    SingularSystemError,
    ToleranceError,
)
from .expansion import ExpansionConfig, bounds_cylinder, bounds_field, bounds_flat, bounds_segment, grad_u_asymptotic
from .factor_system import FactorData, c_alpha_asymptotic, det_ratio, free_constants
from .gap_quadrature import gap_integral, moment_integral
from .geometry import GapProfile, disk_profile, power_profile, quadratic_profile, validate_conditions

__all__ = [
    "__version__",
    "AuxField", "LameConstants", "leading_term", "u_bar", "vbar",
    "Rate", "RateCertificate", "rate_table", "rho", "rho_selectors",
    "BoundaryData", "classify_parity", "make_family", "rigid_basis",
    "build_reference_domain", "solve_full", "solve_lame", "sweep",
    "AccuracyError", "CaseNotCovered", "ConfigError", "DomainError", "GeometryError", "LameGapError",
    "MeshError", "MissingFactorData", "SingularSystemError", "ToleranceError",
    "ExpansionConfig", "bounds_cylinder", "bounds_field", "bounds_flat", "bounds_segment", "grad_u_asymptotic",
    "FactorData", "c_alpha_asymptotic", "det_ratio", "free_constants",
    "gap_integral", "moment_integral",
    "GapProfile", "disk_profile", "power_profile", "quadratic_profile", "validate_conditions",
]
