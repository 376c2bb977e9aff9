"""Quadrature for thin-gap integrals of the form int_{|x'|<R} w(x') / delta(x') dx'.

The disk |x'| < R is cut into dyadic radial rings down to the crossover
radius eps^(1/m) plus one core cell; angular directions are split into
coordinate-aligned panels (half-lines, quadrants, octants) so that weights
with kinks or sign changes on the axes are integrated panel by panel and
odd weights cancel exactly.  Each cell uses a tensor Gauss-Legendre rule of
order n, with order 2n as the error estimate; cells are bisected until the
total estimate meets the tolerance.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from functools import lru_cache
from typing import Callable

import numpy as np

from .auxiliary_fields import LameConstants, lame_rate_constant
from .boundary_data import BoundaryData, basis_size
from .errors import DomainError, ToleranceError
from .geometry import GapProfile

__all__ = [
    "QuadResult",
    "gap_integral",
    "moment_integral",
    "closed_form_convex_2d",
    "closed_form_convex_3d",
    "energy_leading",
    "q_leading",
    "ParityCheck",
    "parity_vanish_check",
    "sphere_area",
]

Weight = Callable[[np.ndarray], np.ndarray]


@dataclass(frozen=True)
class QuadResult:
    value: float
    abs_error_estimate: float
    n_evals: int
    ring_depth: int

    def __float__(self) -> float:
        return self.value

    def scaled(self, c: float) -> "QuadResult":
        return QuadResult(c * self.value, abs(c) * self.abs_error_estimate, self.n_evals, self.ring_depth)


@lru_cache(maxsize=None)
def _gauss(n: int) -> tuple[np.ndarray, np.ndarray]:
    x, w = np.polynomial.legendre.leggauss(n)
    return (x + 1) / 2, w / 2


def sphere_area(n: int) -> float:
    """Surface measure of the unit sphere in R^n (n = 1 gives 2)."""
    return 2 * math.pi ** (n / 2) / math.gamma(n / 2)


def _panels(dim: int) -> list[tuple[tuple[float, float], ...]]:
    """Angular panels as boxes in the angle variables."""
    if dim == 1:
        return [((1.0, 1.0),), ((-1.0, -1.0),)]  # the sign of x_1, no integration
    if dim == 2:
        q = math.pi / 2
        return [((i * q, (i + 1) * q),) for i in range(4)]
    if dim == 3:
        q = math.pi / 2
        return [((a * q, (a + 1) * q), (b * q, (b + 1) * q)) for a in range(2) for b in range(4)]
    return [()]


class _Integrand:
    """Maps a cell (r-range, angle box) to points, Jacobian and weighted values."""

    def __init__(self, profile: GapProfile, weight: Weight | None, radial: bool):
        self.profile = profile
        self.weight = weight
        self.radial = radial
        self.dim = profile.dim
        self.evals = 0

    def _values(self, pts: np.ndarray) -> np.ndarray:
        self.evals += len(pts)
        dl = self.profile.delta(pts, check=False)
        w = np.ones(len(pts)) if self.weight is None else np.asarray(self.weight(pts), dtype=float)
        return w / dl

    def cell(self, r0: float, r1: float, box, n: int) -> float:
        xr, wr = _gauss(n)
        r = r0 + (r1 - r0) * xr
        wrad = wr * (r1 - r0)
        dim = self.dim
        if self.radial:
            pts = np.zeros((n, dim))
            pts[:, 0] = r
            vals = self._values(pts) * r ** (dim - 1) * sphere_area(dim)
            return math.fsum(vals * wrad)
        if dim == 1:
            sign = box[0][0]
            pts = (sign * r)[:, None]
            return math.fsum(self._values(pts) * wrad)
        if dim == 2:
            (t0, t1), = box
            t = t0 + (t1 - t0) * xr
            wt = wr * (t1 - t0)
            R, T = np.meshgrid(r, t, indexing="ij")
            pts = np.column_stack([(R * np.cos(T)).ravel(), (R * np.sin(T)).ravel()])
            jac = (R * np.outer(wrad, wt)).ravel()
            return math.fsum(self._values(pts) * jac)
        (a0, a1), (b0, b1) = box
        th = a0 + (a1 - a0) * xr
        ph = b0 + (b1 - b0) * xr
        wth = wr * (a1 - a0)
        wph = wr * (b1 - b0)
        R, TH, PH = np.meshgrid(r, th, ph, indexing="ij")
        st = np.sin(TH)
        pts = np.column_stack([
            (R * st * np.cos(PH)).ravel(), (R * st * np.sin(PH)).ravel(), (R * np.cos(TH)).ravel()
        ])
        jac = (R**2 * st * np.einsum("i,j,k->ijk", wrad, wth, wph)).ravel()
        return math.fsum(self._values(pts) * jac)


def _split_box(box):
    if not box or box[0][0] == box[0][1]:
        return [box]
    out = [()]
    for lo, hi in box:
        mid = 0.5 * (lo + hi)
        out = [b + (iv,) for b in out for iv in ((lo, mid), (mid, hi))]
    return out


def _ring_edges(R: float, crossover: float, extra_depth: int) -> list[float]:
    edges = [R]
    while edges[-1] / 2 > crossover:
        edges.append(edges[-1] / 2)
    for _ in range(extra_depth):
        edges.append(edges[-1] / 2)
    edges.append(0.0)
    return edges[::-1]


def gap_integral(profile: GapProfile, weight: Weight | None = None, R: float | None = None,
                 tol_abs: float = 1e-10, tol_rel: float = 1e-8, max_evals: int = 10_000_000,
                 order: int = 8, radial: bool | None = None, extra_depth: int = 0) -> QuadResult:
    """int_{|x'|<R} weight(x') / delta(x') dx' over the (d-1)-ball.

    ``radial=None`` picks the one-dimensional radial reduction only when
    d - 1 > 3 (it then requires a radial profile and weight).
    """
    R = profile.R if R is None else float(R)
    if not 0 < R <= 2 * profile.R * (1 + 1e-12):
        raise DomainError("R must lie in (0, 2 * profile.R]")
    dim = profile.dim
    if radial is None:
        radial = dim > 3
    if radial and not profile.radial():
        raise DomainError("radial reduction needs a radially symmetric profile")
    if not radial and dim > 3:
        raise DomainError("tensor rules are limited to d - 1 <= 3; use a radial profile")
    f = _Integrand(profile, weight, radial)
    crossover = min(profile.eps ** (1 / profile.m), R)
    edges = _ring_edges(R, crossover, extra_depth)
    panels = [()] if radial else _panels(dim)

    def evaluate(r0, r1, box):
        lo = f.cell(r0, r1, box, order)
        hi = f.cell(r0, r1, box, 2 * order)
        return hi, abs(hi - lo)

    cells = []
    for r0, r1 in zip(edges[:-1], edges[1:]):
        for box in panels:
            v, e = evaluate(r0, r1, box)
            cells.append((r0, r1, box, v, e))
    while True:
        total = math.fsum(c[3] for c in cells)
        err = math.fsum(c[4] for c in cells)
        target = max(tol_abs, tol_rel * abs(total))
        floor = 64 * np.finfo(float).eps * math.fsum(abs(c[3]) for c in cells)
        if err <= target or err <= floor:
            break
        if f.evals > max_evals:
            raise ToleranceError(f"tolerance {target:.3g} not reached within {max_evals} evaluations "
                                 f"(estimate {err:.3g})")
        share = target / len(cells)
        keep, refine = [], []
        for c in cells:
            (refine if c[4] > share else keep).append(c)
        new = []
        for r0, r1, box, _, _ in refine:
            mid = 0.5 * (r0 + r1)
            for ra, rb in ((r0, mid), (mid, r1)):
                for b in _split_box(box):
                    v, e = evaluate(ra, rb, b)
                    new.append((ra, rb, b, v, e))
        cells = keep + new
    return QuadResult(total, err, f.evals, len(edges) - 1)


def moment_integral(profile: GapProfile, k: int, R: float | None = None, **kw) -> QuadResult:
    """int_{|x'|<R} |x'|^k / delta(x') dx'."""
    if k < 0 or int(k) != k:
        raise DomainError("k must be a nonnegative integer")
    R = profile.R if R is None else R
    if R > profile.R * (1 + 1e-12):
        raise DomainError("R must not exceed profile.R")
    weight = None if k == 0 else (lambda p: np.linalg.norm(p, axis=1) ** k)
    return gap_integral(profile, weight, R, **kw)


def closed_form_convex_2d(tau1: float, R: float, eps: float) -> float:
    """sqrt(2) pi / sqrt(tau1) eps^(-1/2) - 4 / (tau1 R)."""
    if tau1 <= 0 or R <= 0 or eps <= 0:
        raise DomainError("tau1, R and eps must be positive")
    return math.sqrt(2) * math.pi / math.sqrt(tau1) / math.sqrt(eps) - 4 / (tau1 * R)


def closed_form_convex_3d(tau1: float, tau2: float, R: float, eps: float) -> float:
    """2 pi / sqrt(tau1 tau2) |ln eps| + 8 / sqrt(tau1 tau2) int_0^{pi/2} ln R(theta) dtheta."""
    if tau1 <= 0 or tau2 <= 0 or R <= 0 or eps <= 0:
        raise DomainError("tau1, tau2, R and eps must be positive")
    x, w = np.polynomial.legendre.leggauss(64)
    th = (x + 1) * math.pi / 4
    r_theta = R / math.sqrt(2) / np.sqrt(np.cos(th) ** 2 / tau1 + np.sin(th) ** 2 / tau2)
    integral = math.pi / 4 * math.fsum(w * np.log(r_theta))
    s = math.sqrt(tau1 * tau2)
    return 2 * math.pi / s * abs(math.log(eps)) + 8 / s * integral


def energy_leading(alpha: int, profile: GapProfile, lame: LameConstants, R: float | None = None,
                   **kw) -> QuadResult:
    """L int 1/delta for translations, L/(d-1) int |x'|^2/delta for rotations."""
    d = profile.d
    L = lame_rate_constant(d, alpha, lame)
    if alpha <= d:
        return moment_integral(profile, 0, R, **kw).scaled(L)
    return moment_integral(profile, 2, R, **kw).scaled(L / (d - 1))


def q_leading(alpha: int, phi: BoundaryData, profile: GapProfile, lame: LameConstants,
              R: float | None = None, **kw) -> QuadResult:
    """Leading part of Q_alpha[phi] as an integral over the inclusion side of the gap.

    alpha < d: mu int phi^alpha / delta nu_d dS; alpha = d: the same with
    lam + 2 mu and phi^d; alpha = d + 1: -(lam + 2 mu) int phi^d x_1 / delta nu_d dS.
    nu is the unit normal of the gap's upper boundary pointing out of the
    matrix region; nu_d dS is evaluated as nu_d times the surface factor.
    The bounded remainder is not included.  The sign matches the energy
    convention Q_beta = -W(u_0, u_beta).
    """
    d = profile.d
    if not 1 <= alpha <= d + 1:
        raise DomainError(f"the leading functional is implemented for alpha in 1..{d + 1}")
    if alpha < d:
        coef, comp, moment = lame.mu, alpha - 1, False
    elif alpha == d:
        coef, comp, moment = lame.lam + 2 * lame.mu, d - 1, False
    else:
        coef, comp, moment = -(lame.lam + 2 * lame.mu), d - 1, True

    def weight(p):
        val = phi.trace(p)[0][:, comp]
        g = profile.h1.grad(p)
        surface = np.sqrt(1 + np.einsum("ni,ni->n", g, g))
        nu_d = 1 / surface
        w = val * nu_d * surface
        return w * p[:, 0] if moment else w

    return gap_integral(profile, weight, R, **kw).scaled(coef)


@dataclass(frozen=True)
class ParityCheck:
    passed: bool
    residual: float
    weight_is_odd: bool
    tolerance: float


def _is_odd(weight: Weight, dim: int, axis: int, n: int = 64) -> bool:
    rng = np.random.default_rng(12345)
    p = rng.uniform(-1, 1, (n, dim)) * 0.5
    q = p.copy()
    q[:, axis] *= -1
    a, b = np.asarray(weight(p)), np.asarray(weight(q))
    return bool(np.allclose(a, -b, rtol=1e-12, atol=1e-14))


def parity_vanish_check(weight: Weight, profile: GapProfile, axis: int = 0, tol: float = 1e-12,
                        R: float | None = None) -> ParityCheck:
    """Integrate weight/delta and test that it vanishes; the weight's oddness is reported."""
    if not 0 <= axis < profile.dim:
        raise DomainError("axis outside the tangential dimensions")
    res = gap_integral(profile, weight, R)
    return ParityCheck(abs(res.value) < tol, abs(res.value), _is_odd(weight, profile.dim, axis), tol)
