"""Explicit thin-gap approximations to the elastic fields, with analytic gradients.

All fields here share one template.  Given a "top" vector function P (the
datum carried by the inclusion boundary) and a "bottom" one Q (the datum on
the matrix boundary), the field is

    P vbar + Q (1 - vbar)
      + c1 f(vbar) (P^d - Q^d) sum_{i<d} d_i delta e_i
      + c2 f(vbar) sum_{i<d} d_i delta (P^i - Q^i) e_d,

with vbar = (x_d - h) / delta, f(v) = (v - 1/2)^2 / 2 - 1/8,
c1 = (lam + mu) / mu and c2 = (lam + mu) / (lam + 2 mu).

* u_bar(alpha), alpha >= 1: P = psi_alpha evaluated at the field point, Q = 0.
* u_bar(0): P = 0, Q = phi(x', h(x')).
* leading_term(psi, phi): P = psi(x', eps + h1(x')), Q = phi(x', h(x')).

The fields are defined on the closed slab over B'_{2R} only.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Protocol

import numpy as np

from .boundary_data import BoundaryData, RigidBasis, basis_size, rigid_basis
from .errors import AccuracyError, DomainError
from .geometry import GapProfile, as_tangential

__all__ = [
    "LameConstants",
    "lame_rate_constant",
    "f_bridge",
    "vbar",
    "RigidTopTrace",
    "AuxField",
    "LinearField",
    "u_bar",
    "leading_term",
    "remainder_envelope",
    "residual_envelope",
    "lame_residual",
    "stress",
]


@dataclass(frozen=True)
class LameConstants:
    """Isotropic Lame constants; ``kappa5`` is the ellipticity constant (derived if omitted)."""

    lam: float
    mu: float
    kappa5: float | None = None

    def __post_init__(self):
        if not self.mu > 0:
            raise DomainError("mu must be positive")

    def ellipticity(self, d: int) -> float:
        """kappa5 with kappa5 <= mu and d lam + 2 mu <= 1/kappa5; raises if impossible."""
        bulk = d * self.lam + 2 * self.mu
        if bulk <= 0:
            raise DomainError(f"d*lam + 2*mu = {bulk:.4g} must be positive")
        k5 = self.kappa5 if self.kappa5 is not None else min(self.mu, 1 / bulk)
        if not (0 < k5 <= self.mu and bulk <= 1 / k5 * (1 + 1e-12)):
            raise DomainError(f"kappa5 = {k5} violates kappa5 <= mu, d*lam + 2*mu <= 1/kappa5")
        return k5

    def tensor(self, d: int) -> np.ndarray:
        """C_ijkl = lam d_ij d_kl + mu (d_ik d_jl + d_il d_jk)."""
        e = np.eye(d)
        return (
            self.lam * np.einsum("ij,kl->ijkl", e, e)
            + self.mu * (np.einsum("ik,jl->ijkl", e, e) + np.einsum("il,jk->ijkl", e, e))
        )

    @property
    def c1(self) -> float:
        return (self.lam + self.mu) / self.mu

    @property
    def c2(self) -> float:
        return (self.lam + self.mu) / (self.lam + 2 * self.mu)


def lame_rate_constant(d: int, alpha: int, lame: LameConstants) -> float:
    """Energy density coefficient of the alpha-th rigid mode across the gap.

    d = 2: (mu, lam + 2mu, lam + 2mu).  d >= 3: mu for the first d-1 modes,
    lam + 2mu for the next d, 2mu for the remaining rotations.
    """
    n = basis_size(d)
    if not 1 <= alpha <= n:
        raise DomainError(f"alpha must lie in 1..{n}")
    if d == 2:
        return (lame.mu, lame.lam + 2 * lame.mu, lame.lam + 2 * lame.mu)[alpha - 1]
    if alpha <= d - 1:
        return lame.mu
    if alpha <= 2 * d - 1:
        return lame.lam + 2 * lame.mu
    return 2 * lame.mu


def f_bridge(v):
    """f(v) = (v - 1/2)^2 / 2 - 1/8; vanishes at 0 and 1."""
    v = np.asarray(v, dtype=float)
    out = 0.5 * (v - 0.5) ** 2 - 0.125
    return float(out) if out.ndim == 0 else out


def _points(x, d: int) -> tuple[np.ndarray, bool]:
    arr = np.asarray(x, dtype=float)
    if arr.ndim == 1:
        if arr.shape[0] != d:
            raise DomainError(f"expected a point in R^{d}")
        return arr.reshape(1, d), True
    if arr.ndim != 2 or arr.shape[1] != d:
        raise DomainError(f"expected points of shape (n, {d})")
    return arr, False


@dataclass(frozen=True)
class _GapData:
    vbar: np.ndarray
    gv: np.ndarray  # (n, d)
    hv: np.ndarray  # (n, d, d)
    delta: np.ndarray
    gdelta: np.ndarray  # (n, d), last entry 0
    hdelta: np.ndarray  # (n, d, d), last row/col 0
    xp: np.ndarray


def _gap_data(profile: GapProfile, pts: np.ndarray, check: bool) -> _GapData:
    d = profile.d
    xp = pts[:, : d - 1]
    if check:
        r = np.linalg.norm(xp, axis=1)
        if np.any(r > 2 * profile.R * (1 + 1e-12)):
            raise DomainError("point outside B'_{2R}")
    h = profile.h.value(xp)
    gh = profile.h.grad(xp)
    hh = profile.h.hess(xp)
    dl = profile.eps + profile.h1.value(xp) - h
    gd = profile.h1.grad(xp) - gh
    hd = profile.h1.hess(xp) - hh
    if check:
        slack = 1e-10 * dl
        if np.any(pts[:, -1] < h - slack) or np.any(pts[:, -1] > h + dl + slack):
            raise DomainError("point outside the gap slab")
    n = len(pts)
    num = pts[:, -1] - h
    v = num / dl
    gn = np.zeros((n, d))
    gn[:, : d - 1] = -gh
    gn[:, -1] = 1.0
    gdl = np.zeros((n, d))
    gdl[:, : d - 1] = gd
    hn = np.zeros((n, d, d))
    hn[:, : d - 1, : d - 1] = -hh
    hdl = np.zeros((n, d, d))
    hdl[:, : d - 1, : d - 1] = hd
    gv = gn / dl[:, None] - num[:, None] * gdl / (dl**2)[:, None]
    outer = np.einsum("ni,nj->nij", gn, gdl)
    hv = (
        hn / dl[:, None, None]
        - (outer + outer.transpose(0, 2, 1)) / (dl**2)[:, None, None]
        - num[:, None, None] * hdl / (dl**2)[:, None, None]
        + 2 * num[:, None, None] * np.einsum("ni,nj->nij", gdl, gdl) / (dl**3)[:, None, None]
    )
    return _GapData(v, gv, hv, dl, gdl, hdl, xp)


def vbar(profile: GapProfile, x, check: bool = True):
    """(x_d - h(x')) / delta(x') with its gradient (d,) and Hessian (d, d)."""
    pts, single = _points(x, profile.d)
    g = _gap_data(profile, pts, check)
    if single:
        return float(g.vbar[0]), g.gv[0], g.hv[0]
    return g.vbar, g.gv, g.hv


# ---------------------------------------------------------------------------
# Sources for the top and bottom data
# ---------------------------------------------------------------------------


class Trace(Protocol):
    """Vector function of x' with x'-gradient and Hessian."""

    def trace(self, xp): ...

    def trace_hessian(self, xp): ...


@dataclass(frozen=True)
class RigidTopTrace:
    """x' -> psi(x', eps + h1(x')) for a rigid displacement psi."""

    basis: RigidBasis
    profile: GapProfile

    def trace(self, xp):
        pts, single = as_tangential(xp, self.profile.dim)
        a = self.basis.matrix
        top = self.profile.top(pts, check=False)
        val = top @ a.T + self.basis.offset
        g1 = self.profile.h1.grad(pts)
        grad = a[None, :, :-1] + np.einsum("i,nj->nij", a[:, -1], g1)
        return (val[0], grad[0]) if single else (val, grad)

    def trace_hessian(self, xp):
        pts, single = as_tangential(xp, self.profile.dim)
        a = self.basis.matrix
        hess = np.einsum("i,njk->nijk", a[:, -1], self.profile.h1.hess(pts))
        return hess[0] if single else hess


def _trace_c2_norm(source, radius: float, dim: int) -> float:
    if isinstance(source, BoundaryData):
        return source.c2_norm(radius)
    per_axis = 201 if dim <= 2 else 41
    axis = np.linspace(-radius, radius, per_axis)
    grids = np.meshgrid(*([axis] * dim), indexing="ij")
    pts = np.column_stack([g.ravel() for g in grids])
    pts = pts[np.linalg.norm(pts, axis=1) <= radius * (1 + 1e-14)]
    val, grad = source.trace(pts)
    hess = source.trace_hessian(pts)
    return float(
        np.linalg.norm(val, axis=1).max()
        + np.sqrt(np.einsum("nij,nij->n", grad, grad)).max()
        + np.sqrt(np.einsum("nijk,nijk->n", hess, hess)).max()
    )


# ---------------------------------------------------------------------------
# Fields
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class AuxField:
    """Auxiliary field built from the template in the module docstring.

    ``top`` is either a :class:`RigidBasis` evaluated at the field point or
    a trace (function of x'); ``bottom`` is a trace or None.
    """

    kind: str
    profile: GapProfile
    lame: LameConstants
    top: RigidBasis | Trace | None = None
    bottom: Trace | None = None
    alpha: int | None = None

    @classmethod
    def u_bar(cls, alpha: int, profile: GapProfile, lame: LameConstants,
              phi: BoundaryData | None = None) -> "AuxField":
        if alpha == 0:
            if phi is None:
                raise DomainError("u_bar(0) needs boundary data phi")
            return cls("u_bar_0", profile, lame, None, phi, 0)
        return cls("u_bar_alpha", profile, lame, rigid_basis(profile.d, alpha), None, alpha)

    @classmethod
    def leading(cls, psi: Trace | None, phi: Trace | None, profile: GapProfile,
                lame: LameConstants) -> "AuxField":
        if isinstance(psi, RigidBasis):
            psi = RigidTopTrace(psi, profile)
        return cls("leading_term", profile, lame, psi, phi)

    def _source(self, src, pts, xp):
        n, d = pts.shape
        if src is None:
            return np.zeros((n, d)), np.zeros((n, d, d))
        if isinstance(src, RigidBasis):
            return src(pts), np.broadcast_to(src.matrix, (n, d, d))
        val, g = src.trace(xp)
        grad = np.zeros((n, d, d))
        grad[:, :, : d - 1] = g
        return val, grad

    def evaluate(self, x, check: bool = True):
        """Value (d,) and gradient (d, d), entry [i, j] = d u^i / d x_j."""
        p = self.profile
        d = p.d
        pts, single = _points(x, d)
        g = _gap_data(p, pts, check)
        P, gP = self._source(self.top, pts, g.xp)
        Q, gQ = self._source(self.bottom, pts, g.xp)
        W = P - Q
        gW = gP - gQ
        v = g.vbar
        f = 0.5 * (v - 0.5) ** 2 - 0.125
        fp = v - 0.5
        c1, c2 = self.lame.c1, self.lame.c2
        gd = g.gdelta[:, : d - 1]

        val = P * v[:, None] + Q * (1 - v)[:, None]
        val[:, : d - 1] += c1 * (f * W[:, -1])[:, None] * gd
        val[:, -1] += c2 * f * np.einsum("ni,ni->n", gd, W[:, : d - 1])

        grad = (
            gP * v[:, None, None]
            + gQ * (1 - v)[:, None, None]
            + np.einsum("na,nb->nab", W, g.gv)
        )
        grad[:, : d - 1, :] += c1 * (
            np.einsum("n,nb,na->nab", fp * W[:, -1], g.gv, gd)
            + np.einsum("n,nb,na->nab", f, gW[:, -1, :], gd)
            + (f * W[:, -1])[:, None, None] * g.hdelta[:, : d - 1, :]
        )
        grad[:, -1, :] += c2 * (
            np.einsum("n,nb->nb", fp * np.einsum("ni,ni->n", gd, W[:, : d - 1]), g.gv)
            + np.einsum("n,nib,ni->nb", f, g.hdelta[:, : d - 1, :], W[:, : d - 1])
            + np.einsum("n,ni,nib->nb", f, gd, gW[:, : d - 1, :])
        )
        if single:
            return val[0], grad[0]
        return val, grad

    def value(self, x, check: bool = True):
        return self.evaluate(x, check)[0]

    def gradient(self, x, check: bool = True):
        return self.evaluate(x, check)[1]

    def gap_width(self, x) -> np.ndarray:
        pts, _ = _points(x, self.profile.d)
        return self.profile.delta(pts[:, :-1], check=False)


@dataclass(frozen=True)
class LinearField:
    """Global field x -> A x + b (rigid motions, patch-test fields)."""

    matrix: np.ndarray
    offset: np.ndarray | None = None

    @classmethod
    def rigid(cls, d: int, alpha: int) -> "LinearField":
        b = rigid_basis(d, alpha)
        return cls(b.matrix, b.offset)

    def value(self, x):
        x = np.asarray(x, dtype=float)
        off = 0.0 if self.offset is None else self.offset
        return x @ np.asarray(self.matrix).T + off

    def gradient(self, x, check: bool = True):
        x = np.atleast_2d(np.asarray(x, dtype=float))
        grad = np.broadcast_to(np.asarray(self.matrix, dtype=float), (len(x),) + np.shape(self.matrix))
        return grad.copy()


def u_bar(alpha: int, profile: GapProfile, lame: LameConstants, x, phi: BoundaryData | None = None):
    """Value and gradient of u_bar(alpha) at x (alpha = 0 uses phi)."""
    return AuxField.u_bar(alpha, profile, lame, phi).evaluate(x)


def leading_term(psi, phi, profile: GapProfile, lame: LameConstants, x):
    """Value and gradient of the two-sided leading term at x."""
    return AuxField.leading(psi, phi, profile, lame).evaluate(x)


# ---------------------------------------------------------------------------
# Envelopes and residuals
# ---------------------------------------------------------------------------


def _difference_trace(psi, phi, profile: GapProfile, xp):
    pts, single = as_tangential(xp, profile.dim)
    n, d = len(pts), profile.d
    W = np.zeros((n, d))
    gW = np.zeros((n, d, d - 1))
    if isinstance(psi, RigidBasis):
        psi = RigidTopTrace(psi, profile)
    if psi is not None:
        v, g = psi.trace(pts)
        W += v
        gW += g
    if phi is not None:
        v, g = phi.trace(pts)
        W -= v
        gW -= g
    return pts, single, W, gW


def remainder_envelope(psi, phi, profile: GapProfile, xp, norms: tuple[float, float] | None = None):
    """|Psi - Phi| delta^((m-2)/m) + delta (||psi|| + ||phi||) + |grad_x' (Psi - Phi)|.

    Psi = psi(x', eps + h1), Phi = phi(x', h).  ``norms`` are the C^2 norms of
    psi and phi; when omitted they are estimated by sampling on B'_R.
    """
    if isinstance(psi, RigidBasis):
        psi = RigidTopTrace(psi, profile)
    if norms is None:
        n_psi = 0.0 if psi is None else _trace_c2_norm(psi, profile.R, profile.dim)
        n_phi = 0.0 if phi is None else _trace_c2_norm(phi, profile.R, profile.dim)
    else:
        n_psi, n_phi = norms
    pts, single, W, gW = _difference_trace(psi, phi, profile, xp)
    dl = profile.delta(pts)
    env = (
        np.linalg.norm(W, axis=1) * dl ** ((profile.m - 2) / profile.m)
        + dl * (n_psi + n_phi)
        + np.sqrt(np.einsum("nij,nij->n", gW, gW))
    )
    return float(env[0]) if single else env


def residual_envelope(psi, phi, profile: GapProfile, xp, norms: tuple[float, float] | None = None):
    """|W| delta^(-2/m) + |grad W| / delta + ||psi|| + ||phi||, with W = Psi - Phi."""
    if isinstance(psi, RigidBasis):
        psi = RigidTopTrace(psi, profile)
    if norms is None:
        n_psi = 0.0 if psi is None else _trace_c2_norm(psi, profile.R, profile.dim)
        n_phi = 0.0 if phi is None else _trace_c2_norm(phi, profile.R, profile.dim)
    else:
        n_psi, n_phi = norms
    pts, single, W, gW = _difference_trace(psi, phi, profile, xp)
    dl = profile.delta(pts)
    env = (
        np.linalg.norm(W, axis=1) * dl ** (-2 / profile.m)
        + np.sqrt(np.einsum("nij,nij->n", gW, gW)) / dl
        + n_psi + n_phi
    )
    return float(env[0]) if single else env


def stress(grad: np.ndarray, lame: LameConstants) -> np.ndarray:
    """C e(u) from displacement gradients of shape (..., d, d)."""
    d = grad.shape[-1]
    tr = np.trace(grad, axis1=-2, axis2=-1)
    return lame.lam * tr[..., None, None] * np.eye(d) + lame.mu * (grad + np.swapaxes(grad, -1, -2))


def lame_residual(field, lame: LameConstants, x, step: float | None = None):
    """div(C e(u)) by central differences of the analytic stress.

    For fields tied to a gap profile the step defaults to delta(x')/20 and
    must not exceed delta(x')/10.
    """
    pts = np.atleast_2d(np.asarray(x, dtype=float))
    single = np.ndim(x) == 1
    n, d = pts.shape
    profile = getattr(field, "profile", None)
    if profile is not None:
        dl = profile.delta(pts[:, :-1], check=False)
        limit = float(dl.min()) / 10
        if step is None:
            step = limit / 2
        elif step > limit * (1 + 1e-12):
            raise AccuracyError(f"step {step:.3g} exceeds delta/10 = {limit:.3g}")
    elif step is None:
        step = 1e-4
    out = np.zeros((n, d))
    for j in range(d):
        e = np.zeros(d)
        e[j] = step
        sp = stress(field.gradient(pts + e, check=False), lame)
        sm = stress(field.gradient(pts - e, check=False), lame)
        out += (sp[:, :, j] - sm[:, :, j]) / (2 * step)
    return out[0] if single else out

