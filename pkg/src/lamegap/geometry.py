"""Near-contact geometry: boundary graphs, the gap width and thin-gap region.

Near the touching point the matrix boundary is the graph x_d = h(x') and the
inclusion boundary is x_d = eps + h1(x'), with x' in R^{d-1}.  Everything
downstream sees the geometry only through :class:`GapProfile`.

Points in the tangential variable x' are passed as arrays of shape
``(n, d-1)``; a single point may be given as a 1-D array (or a scalar when
d = 2) and the result is squeezed accordingly.
"""

from __future__ import annotations

import dataclasses
import itertools
import math
from dataclasses import dataclass, field
from typing import Callable, Mapping, Sequence

import numpy as np

from .errors import DomainError, GeometryError

__all__ = [
    "Graph",
    "ZeroGraph",
    "PowerGraph",
    "QuadraticGraph",
    "PolynomialGraph",
    "SphereCapGraph",
    "CallableGraph",
    "GapProfile",
    "ThinGapRegion",
    "ConditionResult",
    "ConditionReport",
    "power_profile",
    "quadratic_profile",
    "polynomial_profile",
    "disk_profile",
    "delta",
    "principal_relative_curvatures",
    "validate_conditions",
]

_ZERO_TOL = 1e-12


def as_tangential(xp, dim: int) -> tuple[np.ndarray, bool]:
    """Coerce ``xp`` to shape (n, dim); report whether the input was a single point."""
    arr = np.asarray(xp, dtype=float)
    if arr.ndim == 0:
        if dim != 1:
            raise DomainError(f"scalar point given for {dim} tangential dimensions")
        return arr.reshape(1, 1), True
    if arr.ndim == 1:
        if dim == 1 and arr.shape[0] != 1:
            return arr.reshape(-1, 1), False
        if arr.shape[0] != dim:
            raise DomainError(f"expected {dim} tangential coordinates, got {arr.shape[0]}")
        return arr.reshape(1, dim), True
    if arr.ndim != 2 or arr.shape[1] != dim:
        raise DomainError(f"expected points of shape (n, {dim}), got {arr.shape}")
    return arr, False


def _squeeze(values: np.ndarray, single: bool):
    return values[0] if single else values


# ---------------------------------------------------------------------------
# Boundary graphs
# ---------------------------------------------------------------------------


class Graph:
    """Scalar function of x' with analytic value, gradient and Hessian.

    Subclasses implement the three evaluators on arrays of shape (n, dim).
    """

    def value(self, xp: np.ndarray) -> np.ndarray:  # pragma: no cover - interface
        raise NotImplementedError

    def grad(self, xp: np.ndarray) -> np.ndarray:  # pragma: no cover - interface
        raise NotImplementedError

    def hess(self, xp: np.ndarray) -> np.ndarray:  # pragma: no cover - interface
        raise NotImplementedError

    def radial(self) -> bool:
        """True when the function depends on |x'| only."""
        return False


class ZeroGraph(Graph):
    def value(self, xp):
        return np.zeros(len(xp))

    def grad(self, xp):
        return np.zeros_like(xp)

    def hess(self, xp):
        n, dim = xp.shape
        return np.zeros((n, dim, dim))

    def radial(self):
        return True


@dataclass(frozen=True)
class PowerGraph(Graph):
    """coef * |x'|**m."""

    coef: float
    m: float

    def value(self, xp):
        return self.coef * np.linalg.norm(xp, axis=1) ** self.m

    def grad(self, xp):
        r = np.linalg.norm(xp, axis=1)
        return self.coef * self.m * (r ** (self.m - 2))[:, None] * xp

    def hess(self, xp):
        n, dim = xp.shape
        m = self.m
        r = np.linalg.norm(xp, axis=1)
        eye = np.eye(dim)
        if m == 2:
            return np.broadcast_to(2 * self.coef * eye, (n, dim, dim)).copy()
        pos = r > 0
        a = np.zeros(n)
        b = np.zeros(n)
        a[pos] = r[pos] ** (m - 2)
        b[pos] = (m - 2) * r[pos] ** (m - 4)
        out = a[:, None, None] * eye + b[:, None, None] * np.einsum("ni,nj->nij", xp, xp)
        return self.coef * m * out

    def radial(self):
        return True


@dataclass(frozen=True)
class QuadraticGraph(Graph):
    """x'^T H x' / 2 for a symmetric matrix H."""

    hessian: tuple[tuple[float, ...], ...]

    @property
    def matrix(self) -> np.ndarray:
        return np.asarray(self.hessian, dtype=float)

    def value(self, xp):
        return 0.5 * np.einsum("ni,ij,nj->n", xp, self.matrix, xp)

    def grad(self, xp):
        return xp @ self.matrix.T

    def hess(self, xp):
        return np.broadcast_to(self.matrix, (len(xp),) + self.matrix.shape).copy()

    def radial(self):
        h = self.matrix
        return bool(np.allclose(h, h[0, 0] * np.eye(len(h)), rtol=0, atol=1e-15))


@dataclass(frozen=True)
class PolynomialGraph(Graph):
    """Sum of monomials coef * prod_i x_i**p_i, given as ((p_1, ..., p_{d-1}), coef) pairs."""

    terms: tuple[tuple[tuple[int, ...], float], ...]

    @classmethod
    def from_mapping(cls, terms: Mapping[Sequence[int], float] | Sequence) -> "PolynomialGraph":
        items = terms.items() if isinstance(terms, Mapping) else terms
        return cls(tuple((tuple(int(p) for p in powers), float(c)) for powers, c in items))

    @staticmethod
    def _mono(xp, powers):
        out = np.ones(len(xp))
        for i, p in enumerate(powers):
            if p:
                out = out * xp[:, i] ** p
        return out

    def value(self, xp):
        out = np.zeros(len(xp))
        for powers, c in self.terms:
            out += c * self._mono(xp, powers)
        return out

    def grad(self, xp):
        out = np.zeros_like(xp)
        for powers, c in self.terms:
            for i, p in enumerate(powers):
                if p == 0:
                    continue
                dp = list(powers)
                dp[i] -= 1
                out[:, i] += c * p * self._mono(xp, dp)
        return out

    def hess(self, xp):
        n, dim = xp.shape
        out = np.zeros((n, dim, dim))
        for powers, c in self.terms:
            for i, j in itertools.product(range(dim), repeat=2):
                dp = list(powers)
                coef = c * dp[i]
                dp[i] -= 1
                if coef == 0:
                    continue
                coef *= dp[j]
                dp[j] -= 1
                if coef == 0:
                    continue
                out[:, i, j] += coef * self._mono(xp, dp)
        return out


@dataclass(frozen=True)
class SphereCapGraph(Graph):
    """Lower cap of the sphere of given radius centred at (0', radius)."""

    radius: float

    def _root(self, xp):
        s2 = self.radius**2 - np.einsum("ni,ni->n", xp, xp)
        if np.any(s2 <= 0):
            raise DomainError("point outside the sphere cap's graph domain")
        return np.sqrt(s2)

    def value(self, xp):
        # r - sqrt(r^2 - s^2) without cancellation near the pole
        return np.einsum("ni,ni->n", xp, xp) / (self.radius + self._root(xp))

    def grad(self, xp):
        return xp / self._root(xp)[:, None]

    def hess(self, xp):
        s = self._root(xp)
        dim = xp.shape[1]
        return (
            np.eye(dim)[None] / s[:, None, None]
            + np.einsum("ni,nj->nij", xp, xp) / (s**3)[:, None, None]
        )

    def radial(self):
        return True


@dataclass(frozen=True)
class CallableGraph(Graph):
    """User-supplied callables; the Hessian falls back to 5-point differences of ``grad``."""

    fn: Callable[[np.ndarray], np.ndarray]
    grad_fn: Callable[[np.ndarray], np.ndarray]
    hess_fn: Callable[[np.ndarray], np.ndarray] | None = None
    fd_step: float = 1e-5
    is_radial: bool = False

    def value(self, xp):
        return np.asarray(self.fn(xp), dtype=float)

    def grad(self, xp):
        return np.asarray(self.grad_fn(xp), dtype=float)

    def hess(self, xp):
        if self.hess_fn is not None:
            return np.asarray(self.hess_fn(xp), dtype=float)
        n, dim = xp.shape
        h = self.fd_step
        out = np.empty((n, dim, dim))
        for j in range(dim):
            e = np.zeros(dim)
            e[j] = h
            g = (
                -self.grad(xp + 2 * e)
                + 8 * self.grad(xp + e)
                - 8 * self.grad(xp - e)
                + self.grad(xp - 2 * e)
            ) / (12 * h)
            out[:, :, j] = g
        return 0.5 * (out + out.transpose(0, 2, 1))

    def radial(self):
        return self.is_radial


# ---------------------------------------------------------------------------
# Profile
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class GapProfile:
    """Boundary graphs near the touching point together with eps and envelope constants.

    ``kappa`` holds (kappa1, kappa2, kappa3, kappa4); entries may be None when
    a constant is not asserted.  ``tau`` holds the relative principal
    curvatures when m = 2 and is computed on demand if omitted.
    """

    d: int
    m: int
    R: float
    eps: float
    h: Graph
    h1: Graph
    kappa: tuple[float | None, float | None, float | None, float | None] = (None, None, None, None)
    tau: tuple[float, ...] | None = None
    name: str = field(default="custom", compare=False)

    def __post_init__(self):
        if self.d < 2:
            raise GeometryError("dimension must be at least 2")
        if int(self.m) != self.m or self.m < 2:
            raise GeometryError("convexity order m must be an integer >= 2")
        if not self.eps > 0:
            raise GeometryError("eps must be positive")
        if not self.R > 0:
            raise GeometryError("R must be positive")
        kappa = tuple(self.kappa) + (None,) * (4 - len(self.kappa))
        object.__setattr__(self, "kappa", kappa)

    @property
    def dim(self) -> int:
        """Number of tangential variables, d - 1."""
        return self.d - 1

    @property
    def kappa1(self) -> float | None:
        return self.kappa[0]

    @property
    def kappa2(self) -> float | None:
        return self.kappa[1]

    def with_eps(self, eps: float) -> "GapProfile":
        return dataclasses.replace(self, eps=eps)

    def radial(self) -> bool:
        return self.h.radial() and self.h1.radial()

    def _points(self, xp, check: bool = True):
        pts, single = as_tangential(xp, self.dim)
        if check:
            r = np.linalg.norm(pts, axis=1)
            if np.any(r > 2 * self.R * (1 + 1e-12)):
                raise DomainError(f"|x'| = {r.max():.6g} exceeds 2R = {2 * self.R:.6g}")
        return pts, single

    def gap(self, xp, check: bool = True) -> np.ndarray:
        """h1 - h (the eps-free part of the gap)."""
        pts, single = self._points(xp, check)
        return _squeeze(self.h1.value(pts) - self.h.value(pts), single)

    def delta(self, xp, check: bool = True):
        pts, single = self._points(xp, check)
        return _squeeze(self.eps + self.h1.value(pts) - self.h.value(pts), single)

    def delta_grad(self, xp, check: bool = True):
        pts, single = self._points(xp, check)
        return _squeeze(self.h1.grad(pts) - self.h.grad(pts), single)

    def delta_hess(self, xp, check: bool = True):
        pts, single = self._points(xp, check)
        return _squeeze(self.h1.hess(pts) - self.h.hess(pts), single)

    def bottom(self, xp, check: bool = True):
        """Points (x', h(x')) on the matrix boundary."""
        pts, single = self._points(xp, check)
        return _squeeze(np.column_stack([pts, self.h.value(pts)]), single)

    def top(self, xp, check: bool = True):
        """Points (x', eps + h1(x')) on the inclusion boundary."""
        pts, single = self._points(xp, check)
        return _squeeze(np.column_stack([pts, self.eps + self.h1.value(pts)]), single)

    def curvatures(self) -> tuple[float, ...]:
        if self.tau is not None:
            return tuple(self.tau)
        return tuple(principal_relative_curvatures(self))


def delta(profile: GapProfile, xp):
    """Gap width eps + h1(x') - h(x')."""
    return profile.delta(xp)


def principal_relative_curvatures(profile: GapProfile) -> np.ndarray:
    """Ascending eigenvalues of the Hessian of h1 - h at the origin (m = 2 only)."""
    if profile.m != 2:
        raise GeometryError("relative curvatures are defined for m = 2 profiles")
    origin = np.zeros((1, profile.dim))
    hess = profile.h1.hess(origin)[0] - profile.h.hess(origin)[0]
    eig = np.linalg.eigvalsh(0.5 * (hess + hess.T))
    if eig[0] <= 0:
        raise GeometryError(f"Hessian of h1 - h at 0 is not positive definite (min eig {eig[0]:.3g})")
    return eig


# ---------------------------------------------------------------------------
# Factories
# ---------------------------------------------------------------------------


def power_profile(d: int, m: int, eps: float, R: float = 1.0, coef: float = 1.0) -> GapProfile:
    """Flat matrix boundary under the inclusion graph coef * |x'|**m."""
    k3 = coef * m * max(1, m - 1)
    tau = (2.0 * coef,) * (d - 1) if m == 2 else None
    return GapProfile(
        d=d, m=m, R=R, eps=eps, h=ZeroGraph(), h1=PowerGraph(coef, m),
        kappa=(coef, coef, k3, None), tau=tau, name="power",
    )


def quadratic_profile(tau: Sequence[float], eps: float, R: float = 1.0) -> GapProfile:
    """Flat matrix boundary under sum_i tau_i x_i^2 / 2."""
    tau = tuple(float(t) for t in tau)
    d = len(tau) + 1
    h1 = QuadraticGraph(tuple(tuple(t if i == j else 0.0 for j in range(d - 1)) for i, t in enumerate(tau)))
    return GapProfile(
        d=d, m=2, R=R, eps=eps, h=ZeroGraph(), h1=h1,
        kappa=(min(tau) / 2, max(tau) / 2, max(tau), None), tau=tuple(sorted(tau)), name="quadratic",
    )


def polynomial_profile(
    d: int, m: int, eps: float, h1_terms, h_terms=(), R: float = 1.0,
    kappa: Sequence[float | None] = (None, None, None, None),
) -> GapProfile:
    """Profile from monomial coefficient tables for h1 and h."""
    h1 = PolynomialGraph.from_mapping(h1_terms)
    h = PolynomialGraph.from_mapping(h_terms) if h_terms else ZeroGraph()
    return GapProfile(d=d, m=m, R=R, eps=eps, h=h, h1=h1, kappa=tuple(kappa), name="polynomial")


def disk_profile(eps: float, r1: float = 0.5, r0: float = 1.0, d: int = 2, R: float | None = None) -> GapProfile:
    """Inclusion ball of radius r1 lifted by eps above the matrix ball of radius r0.

    Both balls touch the hyperplane x_d = 0 at the origin from above.
    """
    if not 0 < r1 < r0:
        raise GeometryError("need 0 < r1 < r0")
    if R is None:
        R = 0.4 * r1
    if 2 * R >= r1:
        raise GeometryError("2R must stay inside the inclusion's graph domain (2R < r1)")
    s = 2 * R
    k1 = 1 / (2 * r1) - 1 / (2 * r0)
    k2 = 1 / (r1 + math.sqrt(r1**2 - s**2)) - 1 / (r0 + math.sqrt(r0**2 - s**2))
    tau = 1 / r1 - 1 / r0
    k3 = 1 / math.sqrt(r1**2 - s**2) + s**2 / (r1**2 - s**2) ** 1.5
    return GapProfile(
        d=d, m=2, R=R, eps=eps, h=SphereCapGraph(r0), h1=SphereCapGraph(r1),
        kappa=(k1, k2, k3, None), tau=(tau,) * (d - 1), name="disks",
    )


# ---------------------------------------------------------------------------
# Thin-gap region
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class ThinGapRegion:
    """The slab {|x'| < t, h(x') < x_d < eps + h1(x')} and its two graph boundaries.

    Normals point out of the gap region: upward (into the inclusion) on the
    top boundary and downward on the bottom boundary.
    """

    profile: GapProfile
    t: float

    def __post_init__(self):
        if not 0 < self.t <= 2 * self.profile.R * (1 + 1e-12):
            raise DomainError("need 0 < t <= 2R")

    def contains(self, x, center=None) -> np.ndarray:
        p = self.profile
        x = np.atleast_2d(np.asarray(x, dtype=float))
        xp = x[:, : p.dim]
        c = np.zeros(p.dim) if center is None else np.asarray(center, dtype=float).reshape(p.dim)
        inside = np.linalg.norm(xp - c, axis=1) < self.t
        inside &= np.linalg.norm(xp, axis=1) <= 2 * p.R
        out = np.zeros(len(x), dtype=bool)
        if inside.any():
            pts = xp[inside]
            lo = p.h.value(pts)
            hi = p.eps + p.h1.value(pts)
            out[inside] = (x[inside, -1] > lo) & (x[inside, -1] < hi)
        return out

    def normal_top(self, xp):
        pts, single = self.profile._points(xp)
        g = self.profile.h1.grad(pts)
        n = np.column_stack([-g, np.ones(len(pts))])
        return _squeeze(n / np.linalg.norm(n, axis=1)[:, None], single)

    def normal_bottom(self, xp):
        pts, single = self.profile._points(xp)
        g = self.profile.h.grad(pts)
        n = np.column_stack([g, -np.ones(len(pts))])
        return _squeeze(n / np.linalg.norm(n, axis=1)[:, None], single)

    def surface_factor_top(self, xp):
        """sqrt(1 + |grad h1|^2), the area element of the top graph."""
        pts, single = self.profile._points(xp)
        g = self.profile.h1.grad(pts)
        return _squeeze(np.sqrt(1 + np.einsum("ni,ni->n", g, g)), single)


# ---------------------------------------------------------------------------
# Condition validation
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class ConditionResult:
    name: str
    passed: bool
    checked: bool
    margin: float
    worst_point: tuple[float, ...] | None
    note: str = ""


@dataclass(frozen=True)
class ConditionReport:
    results: tuple[ConditionResult, ...]
    n_points: int
    radius: float

    @property
    def passed(self) -> bool:
        return all(r.passed for r in self.results if r.checked)

    def __getitem__(self, name: str) -> ConditionResult:
        for r in self.results:
            if r.name == name:
                return r
        raise KeyError(name)

    def failures(self) -> list[ConditionResult]:
        return [r for r in self.results if r.checked and not r.passed]


def sample_points(dim: int, radius: float, n_samples: int) -> np.ndarray:
    """Deterministic tensor grid plus radial rays inside the closed ball of given radius."""
    n = max(int(n_samples), 1)
    per_axis = n if dim == 1 else max(3, int(round(n ** (1 / dim))) | 1)
    axis = np.linspace(-radius, radius, 2 * per_axis + 1)
    grid = np.array(list(itertools.product(axis, repeat=dim)))
    grid = grid[np.linalg.norm(grid, axis=1) <= radius * (1 + 1e-14)]
    dirs = [np.eye(dim)[i] * s for i in range(dim) for s in (1.0, -1.0)]
    if dim > 1:
        dirs += [np.ones(dim) / math.sqrt(dim), -np.ones(dim) / math.sqrt(dim)]
    radii = radius * np.geomspace(1e-4, 1.0, max(n, 2))
    rays = np.array([r * u for u in dirs for r in radii])
    return np.vstack([grid, rays])


def _worst(values: np.ndarray, pts: np.ndarray) -> tuple[float, tuple[float, ...]]:
    i = int(np.argmin(values))
    return float(values[i]), tuple(float(v) for v in pts[i])


def validate_conditions(profile: GapProfile, n_samples: int = 64, radius: float | None = None) -> ConditionReport:
    """Check the structural conditions on a deterministic sample of B'_radius.

    ``radius`` defaults to R.  Constants left as None in the profile are
    reported as unchecked rather than failed.
    """
    if n_samples < 1:
        raise ValueError("n_samples must be at least 1")
    radius = profile.R if radius is None else radius
    p = profile
    pts = sample_points(p.dim, radius, n_samples)
    r = np.linalg.norm(pts, axis=1)
    nz = r > 0
    results: list[ConditionResult] = []

    origin = np.zeros((1, p.dim))
    vals0 = np.array([
        abs(p.h.value(origin)[0]), abs(p.h1.value(origin)[0]),
        np.abs(p.h.grad(origin)).max(), np.abs(p.h1.grad(origin)).max(),
    ])
    results.append(ConditionResult(
        "normalization", bool(vals0.max() <= _ZERO_TOL), True, float(_ZERO_TOL - vals0.max()),
        tuple(origin[0]),
    ))

    gap = p.h1.value(pts) - p.h.value(pts)
    dlt = p.eps + gap
    margin, worst = _worst(dlt, pts)
    results.append(ConditionResult("positive_gap", margin > 0, True, margin, worst))

    k1, k2, k3, k4 = p.kappa
    rm = r**p.m
    scale = np.maximum(rm, 1e-300)
    if k1 is not None:
        m_lo = (gap[nz] - k1 * rm[nz]) / scale[nz]
        margin, worst = _worst(m_lo + 1e-12, pts[nz])
        results.append(ConditionResult("envelope_lower", margin >= 0, True, margin, worst))
    else:
        results.append(ConditionResult("envelope_lower", True, False, math.nan, None, "kappa1 not given"))
    if k2 is not None:
        m_hi = (k2 * rm[nz] - gap[nz]) / scale[nz]
        margin, worst = _worst(m_hi + 1e-12, pts[nz])
        results.append(ConditionResult("envelope_upper", margin >= 0, True, margin, worst))
    else:
        results.append(ConditionResult("envelope_upper", True, False, math.nan, None, "kappa2 not given"))

    if k3 is not None:
        margins = []
        for g in (p.h, p.h1):
            g1 = np.linalg.norm(g.grad(pts), axis=1)
            g2 = np.linalg.norm(g.hess(pts), ord=2, axis=(1, 2))
            margins.append(k3 * r[nz] ** (p.m - 1) * (1 + 1e-12) - g1[nz])
            margins.append(k3 * r[nz] ** (p.m - 2) * (1 + 1e-12) + 1e-12 - g2[nz])
        allm = np.min(np.vstack(margins), axis=0)
        margin, worst = _worst(allm, pts[nz])
        results.append(ConditionResult("derivative_bounds", margin >= 0, True, margin, worst))
    else:
        results.append(ConditionResult("derivative_bounds", True, False, math.nan, None, "kappa3 not given"))

    if k4 is not None:
        norm = 0.0
        for g in (p.h, p.h1):
            norm += (
                np.abs(g.value(pts)).max()
                + np.linalg.norm(g.grad(pts), axis=1).max()
                + np.linalg.norm(g.hess(pts), ord=2, axis=(1, 2)).max()
            )
        results.append(ConditionResult("c2_norm", norm <= k4, True, float(k4 - norm), None))
    else:
        results.append(ConditionResult("c2_norm", True, False, math.nan, None, "kappa4 not given"))

    odd = 0.0
    for i in range(p.dim):
        flipped = pts.copy()
        flipped[:, i] *= -1
        gf = p.h1.value(flipped) - p.h.value(flipped)
        odd = max(odd, float(np.abs(gf - gap).max()))
    results.append(ConditionResult("even_gap", odd <= _ZERO_TOL, True, _ZERO_TOL - odd, None))

    if p.m == 2:
        try:
            tau0 = float(principal_relative_curvatures(p)[0])
            results.append(ConditionResult("curvature_positive", True, True, tau0, tuple(origin[0])))
        except GeometryError as exc:
            results.append(ConditionResult("curvature_positive", False, True, -1.0, tuple(origin[0]), str(exc)))

    return ConditionReport(tuple(results), len(pts), radius)
