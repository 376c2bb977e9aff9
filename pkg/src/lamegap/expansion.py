"""Asymptotic gradient and rate bounds for a configured gap problem."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .auxiliary_fields import AuxField, LameConstants
from .blowup_rates import (
    PARITY_OF_FAMILY,
    RateCertificate,
    cylinder_certificates,
    field_certificate,
    flat_certificates,
    segment_certificates,
)
from .boundary_data import BoundaryData, basis_size, classify_parity
from .errors import CaseNotCovered, DomainError, MissingFactorData
from .factor_system import FactorData, c_alpha_asymptotic
from .geometry import GapProfile

__all__ = [
    "ExpansionConfig",
    "AsymptoticGradient",
    "grad_u_asymptotic",
    "bounds_segment",
    "bounds_cylinder",
    "bounds_field",
    "bounds_flat",
]


@dataclass(frozen=True)
class ExpansionConfig:
    """Everything the expansion needs: geometry, material, data and limiting factors."""

    profile: GapProfile
    lame: LameConstants
    phi: BoundaryData
    starred: FactorData | None = None
    k_star: tuple[float, ...] | None = None
    parity: str | None = None
    gradient_tol: float = 1e-10
    _cache: dict = field(default_factory=dict, compare=False, repr=False)

    @property
    def d(self) -> int:
        return self.profile.d

    def kappas(self) -> tuple[float, float]:
        k1, k2 = self.profile.kappa1, self.profile.kappa2
        if k1 is None or k2 is None:
            raise DomainError("profile needs kappa1 and kappa2 for rate bounds")
        return float(k1), float(k2)

    def parity_case(self) -> str:
        if self.parity is not None:
            return self.parity
        if "parity" not in self._cache:
            self._cache["parity"] = classify_parity(self.phi)
        return self._cache["parity"]

    def family(self) -> str:
        fam = self.phi.family
        if fam in PARITY_OF_FAMILY:
            return fam
        raise CaseNotCovered(f"rate statements are stated for families E1-E3, got {fam!r}")

    def phi_norm(self) -> float:
        if "norm" not in self._cache:
            self._cache["norm"] = self.phi.c2_norm(self.profile.R)
        return self._cache["norm"]


@dataclass(frozen=True)
class AsymptoticGradient:
    gradient: np.ndarray
    uncertainty: float
    coefficients: np.ndarray


def _coefficients(cfg: ExpansionConfig) -> np.ndarray:
    d = cfg.d
    if cfg.starred is None:
        raise MissingFactorData("limiting factor data are required for the expansion")
    if d == 2:
        g0 = np.asarray(cfg.phi.gradient_at_origin())
        if np.abs(g0).max() > cfg.gradient_tol:
            raise DomainError("the d = 2 expansion requires grad phi(0) = 0")
    tau = cfg.profile.curvatures() if d <= 3 else None
    return c_alpha_asymptotic(d, cfg.starred, tau, cfg.lame, cfg.profile.eps, cfg.k_star)


def grad_u_asymptotic(cfg: ExpansionConfig, x) -> AsymptoticGradient:
    """sum_alpha C^alpha grad u_bar_alpha + grad u_bar_0 at gap point(s) x.

    The bounded remainder is returned as ``uncertainty`` = ||phi||_C2 (unit
    constant), never added to the gradient.
    """
    coef = _coefficients(cfg)
    p, lame = cfg.profile, cfg.lame
    grad = AuxField.u_bar(0, p, lame, cfg.phi).gradient(x)
    for alpha in range(1, basis_size(cfg.d) + 1):
        if coef[alpha - 1] != 0:
            grad = grad + coef[alpha - 1] * AuxField.u_bar(alpha, p, lame).gradient(x)
    return AsymptoticGradient(grad, cfg.phi_norm(), coef)


def _rate_args(cfg: ExpansionConfig):
    k1, k2 = cfg.kappas()
    return dict(eta=cfg.phi.eta, kappa1=k1, kappa2=k2, lame=cfg.lame, factors=cfg.starred)


def bounds_segment(cfg: ExpansionConfig) -> tuple[RateCertificate, RateCertificate]:
    """(lower, upper) on x' = 0."""
    p = cfg.profile
    return segment_certificates(cfg.family(), p.d, p.m, cfg.phi.k, **_rate_args(cfg))


def bounds_cylinder(cfg: ExpansionConfig) -> tuple[RateCertificate, RateCertificate]:
    """(lower, upper) on |x'| = eps^(1/m)."""
    p = cfg.profile
    return cylinder_certificates(cfg.family(), p.d, p.m, cfg.phi.k, **_rate_args(cfg))


def bounds_field(cfg: ExpansionConfig, xp) -> RateCertificate:
    """Upper envelope at a tangential point x'."""
    p = cfg.profile
    radius = float(np.linalg.norm(np.atleast_1d(np.asarray(xp, dtype=float))))
    return field_certificate(cfg.parity_case(), p.d, p.m, cfg.phi.k, radius, **_rate_args(cfg))


def bounds_flat(cfg: ExpansionConfig, r: float, sigma: float | None = None):
    """(lower, upper, unified) for a flat contact set B'_r."""
    p = cfg.profile
    k1, k2 = cfg.kappas()
    return flat_certificates(cfg.family(), p.d, p.m, cfg.phi.k, r, cfg.phi.eta, k1, k2, sigma)
