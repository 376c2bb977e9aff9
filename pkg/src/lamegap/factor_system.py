"""Blow-up factor matrices, the free-constant system and its asymptotics.

The Gram matrix ``a`` (energy pairings of the rigid-mode solutions) and the
load vector ``q`` are split at index d into blocks

    F = [[A, B],
         [C, D]]

and the column substitutions F1 (bordered, per translation), F2 (inside D,
per rotation) and F3 (inside F, any mode) give the determinant ratios that
appear as prefactors.  Indices are 1-based throughout the public API to
match the mode ordering of :mod:`lamegap.boundary_data`.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace

import numpy as np
import scipy.linalg

from .auxiliary_fields import LameConstants, lame_rate_constant
from .boundary_data import basis_size
from .errors import DomainError, MissingFactorData, SingularSystemError, ToleranceError

__all__ = [
    "FactorData",
    "SubstitutedMatrix",
    "block_partition",
    "reassemble",
    "substitute_column",
    "f1_matrix",
    "f2_matrix",
    "f3_matrix",
    "log_det",
    "det_ratio",
    "SolveDiagnostics",
    "free_constants",
    "DefinitenessResult",
    "definiteness_check",
    "leading_coefficient",
    "diag_expansion",
    "GeometryFit",
    "fit_geometry_constants",
    "geometry_constant_g",
    "c_alpha_asymptotic",
    "RichardsonFit",
    "richardson_extrapolate",
    "extrapolate_factors",
]


@dataclass(frozen=True)
class FactorData:
    """Energy Gram matrix ``a`` and load vector ``q`` for one gap configuration."""

    d: int
    a: np.ndarray
    q: np.ndarray
    provenance: str = "user"
    eps: float | None = None
    symmetry_tol: float = 1e-8

    def __post_init__(self):
        a = np.array(self.a, dtype=float)
        q = np.array(self.q, dtype=float).reshape(-1)
        n = basis_size(self.d)
        if a.shape != (n, n):
            raise DomainError(f"a must be {n}x{n} for d={self.d}, got {a.shape}")
        if q.shape != (n,):
            raise DomainError(f"q must have length {n}, got {q.shape}")
        scale = max(np.abs(a).max(), 1e-300)
        asym = np.abs(a - a.T).max() / scale
        if asym > self.symmetry_tol:
            raise DomainError(f"a is not symmetric (relative asymmetry {asym:.3g})")
        a.setflags(write=False)
        q.setflags(write=False)
        object.__setattr__(self, "a", a)
        object.__setattr__(self, "q", q)

    @property
    def n(self) -> int:
        return basis_size(self.d)

    def blocks(self):
        return block_partition(self.a, self.d)

    def scaled(self, c: float) -> "FactorData":
        """Same geometry, boundary data multiplied by c."""
        return replace(self, q=self.q * c)

    def symmetrized(self) -> "FactorData":
        return replace(self, a=0.5 * (self.a + self.a.T))


def block_partition(F: np.ndarray, d: int):
    """Split an N x N matrix at index d into (A, B, C, D)."""
    F = np.asarray(F)
    n = basis_size(d)
    if F.shape != (n, n):
        raise DomainError(f"expected a {n}x{n} matrix for d={d}, got {F.shape}")
    return F[:d, :d], F[:d, d:], F[d:, :d], F[d:, d:]


def reassemble(A, B, C, D) -> np.ndarray:
    return np.block([[A, B], [C, D]])


@dataclass(frozen=True)
class SubstitutedMatrix:
    """``base`` with column ``column`` (0-based) replaced by ``y``."""

    kind: str
    alpha: int
    base: np.ndarray
    column: int
    y: np.ndarray
    matrix: np.ndarray = field(repr=False)

    def restore(self) -> np.ndarray:
        out = self.matrix.copy()
        out[:, self.column] = self.base[:, self.column]
        return out

    def det(self) -> float:
        sign, logabs = log_det(self.matrix)
        return sign * math.exp(logabs) if sign != 0 else 0.0


def substitute_column(base, y, alpha: int, kind: str = "F3") -> SubstitutedMatrix:
    """Replace the alpha-th column (1-based) of ``base`` by ``y``."""
    base = np.array(base, dtype=float)
    y = np.array(y, dtype=float).reshape(-1)
    if base.ndim != 2 or base.shape[0] != base.shape[1]:
        raise DomainError("base must be a square matrix")
    if y.shape[0] != base.shape[0]:
        raise DomainError("y length does not match the rows of base")
    if not 1 <= alpha <= base.shape[1]:
        raise DomainError(f"column index {alpha} outside 1..{base.shape[1]}")
    mat = base.copy()
    mat[:, alpha - 1] = y
    return SubstitutedMatrix(kind, alpha, base, alpha - 1, y, mat)


def f1_matrix(factors: FactorData, alpha: int) -> SubstitutedMatrix:
    """Bordered matrix [[Q_alpha, a_alpha,D], [Q_D, D]] for a translation alpha <= d.

    It is the principal submatrix of ``a`` on rows/columns {alpha, d+1..N}
    with its first column replaced by the matching entries of Q.
    """
    d = factors.d
    if not 1 <= alpha <= d:
        raise DomainError(f"F1 is defined for alpha in 1..{d}")
    idx = [alpha - 1] + list(range(d, factors.n))
    base = factors.a[np.ix_(idx, idx)]
    sub = substitute_column(base, factors.q[idx], 1, "F1")
    return replace(sub, alpha=alpha)


def f2_matrix(factors: FactorData, alpha: int) -> SubstitutedMatrix:
    """D block with column alpha - d replaced by Q_D, for a rotation alpha > d."""
    d, n = factors.d, factors.n
    if not d < alpha <= n:
        raise DomainError(f"F2 is defined for alpha in {d + 1}..{n}")
    D = factors.a[d:, d:]
    sub = substitute_column(D, factors.q[d:], alpha - d, "F2")
    return replace(sub, alpha=alpha)


def f3_matrix(factors: FactorData, alpha: int) -> SubstitutedMatrix:
    """Full F with column alpha replaced by Q."""
    return substitute_column(factors.a, factors.q, alpha, "F3")


def log_det(M) -> tuple[float, float]:
    """(sign, log|det M|) on a row-equilibrated copy, corrected for the scaling."""
    M = np.asarray(M, dtype=float)
    if M.size == 0:
        return 1.0, 0.0
    s = np.abs(M).max(axis=1)
    if np.any(s == 0):
        return 0.0, -math.inf
    sign, logabs = np.linalg.slogdet(M / s[:, None])
    if sign == 0:
        return 0.0, -math.inf
    return float(sign), float(logabs + np.log(s).sum())


def det_ratio(factors: FactorData, kind: str, alpha: int) -> float:
    """det F_kind^alpha / det(base): base is D for F1, F2 and F for F3."""
    d = factors.d
    if kind == "F1":
        num = f1_matrix(factors, alpha).matrix
        den = factors.a[d:, d:]
    elif kind == "F2":
        num = f2_matrix(factors, alpha).matrix
        den = factors.a[d:, d:]
    elif kind == "F3":
        num = f3_matrix(factors, alpha).matrix
        den = factors.a
    else:
        raise DomainError(f"unknown substitution kind {kind!r}")
    sn, ln = log_det(num)
    sd, ld = log_det(den)
    if sd == 0:
        raise SingularSystemError(f"base matrix for {kind} is singular")
    if sn == 0:
        return 0.0
    return sn * sd * math.exp(ln - ld)


# ---------------------------------------------------------------------------
# Solving the free-constant system
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class SolveDiagnostics:
    condition: float
    log_abs_det: float
    cramer: np.ndarray
    direct: np.ndarray
    relative_gap: float
    lambda_min: float


def _relative_gap(x, y) -> float:
    scale = max(np.linalg.norm(y), np.finfo(float).tiny)
    return float(np.linalg.norm(x - y) / scale)


def free_constants(factors: FactorData, agreement_tol: float = 1e-10, check_definite: bool = True):
    """Solve sum_alpha C^alpha a_alpha,beta = Q_beta twice: by Cramer and by pivoted LU.

    Returns the LU solution and diagnostics; raises when the routes disagree
    beyond ``agreement_tol`` (relative) or when F is numerically singular.
    """
    a, q = factors.a, factors.q
    n = factors.n
    defin = definiteness_check(factors)
    if check_definite and not defin.passed:
        raise SingularSystemError(f"a is not positive definite (lambda_min = {defin.lambda_min:.3g})")
    sign, logabs = log_det(a)
    # log|det| of the equilibrated matrix measures singularity independent of scale
    s = np.abs(a).max(axis=1)
    if sign == 0 or logabs - np.log(s).sum() < math.log(1e-14):
        raise SingularSystemError("F is numerically singular")
    cramer = np.array([det_ratio(factors, "F3", alpha) for alpha in range(1, n + 1)])
    lu, piv = scipy.linalg.lu_factor(a.T)
    direct = scipy.linalg.lu_solve((lu, piv), q)
    gap = _relative_gap(cramer, direct)
    if gap > agreement_tol:
        raise ToleranceError(f"Cramer and LU solutions disagree (relative gap {gap:.3g})")
    cond = float(np.linalg.cond(a))
    return direct, SolveDiagnostics(cond, logabs, cramer, direct, gap, defin.lambda_min)


@dataclass(frozen=True)
class DefinitenessResult:
    lambda_min: float
    passed: bool
    constant: float  # 1 / lambda_min when positive, inf otherwise


def definiteness_check(factors_or_matrix) -> DefinitenessResult:
    a = factors_or_matrix.a if isinstance(factors_or_matrix, FactorData) else np.asarray(factors_or_matrix)
    lam = float(np.linalg.eigvalsh(0.5 * (a + a.T))[0])
    return DefinitenessResult(lam, lam > 0, 1 / lam if lam > 0 else math.inf)


# ---------------------------------------------------------------------------
# Diagonal-energy asymptotics and geometry constants
# ---------------------------------------------------------------------------


def _check_d_alpha(d: int, alpha: int):
    if d not in (2, 3):
        raise DomainError("the diagonal-energy expansion is available for d = 2, 3")
    if not 1 <= alpha <= d:
        raise DomainError(f"alpha must lie in 1..{d}")


def leading_coefficient(alpha: int, d: int, lame: LameConstants, tau) -> float:
    """sqrt(2) pi L / sqrt(tau1) for d = 2, 2 pi L / sqrt(tau1 tau2) for d = 3."""
    _check_d_alpha(d, alpha)
    tau = np.atleast_1d(np.asarray(tau, dtype=float))
    L = lame_rate_constant(d, alpha, lame)
    if d == 2:
        return math.sqrt(2) * math.pi * L / math.sqrt(tau[0])
    return 2 * math.pi * L / math.sqrt(tau[0] * tau[1])


def _singular_scale(d: int, eps):
    eps = np.asarray(eps, dtype=float)
    return eps**-0.5 if d == 2 else np.abs(np.log(eps))


def diag_expansion(alpha: int, d: int, lame: LameConstants, tau, eps, k_star: float = 0.0):
    """Two-term expansion of a_alpha,alpha: c s(eps) + K*, s = eps^-1/2 (d=2) or |ln eps| (d=3)."""
    c = leading_coefficient(alpha, d, lame, tau)
    out = c * _singular_scale(d, eps) + k_star
    return float(out) if np.ndim(out) == 0 else out


@dataclass(frozen=True)
class GeometryFit:
    leading_coef: float
    k_star: float
    residual: float
    expected_coef: float | None = None

    @property
    def relative_coef_error(self) -> float | None:
        if self.expected_coef is None:
            return None
        return abs(self.leading_coef - self.expected_coef) / abs(self.expected_coef)


def fit_geometry_constants(samples, d: int, lame: LameConstants | None = None, tau=None,
                           alpha: int = 1, fixed_coef: float | None = None) -> GeometryFit:
    """Least squares for a(eps) = c s(eps) + K.

    With ``fixed_coef`` only K is fitted.  ``residual`` is the RMS misfit.
    """
    arr = np.asarray(samples, dtype=float)
    if arr.ndim != 2 or arr.shape[1] != 2 or len(arr) < 2:
        raise DomainError("samples must be a sequence of (eps, value) pairs")
    eps, val = arr[:, 0], arr[:, 1]
    if d not in (2, 3):
        raise DomainError("geometry constants are defined for d = 2, 3")
    s = _singular_scale(d, eps)
    expected = None
    if lame is not None and tau is not None:
        expected = leading_coefficient(alpha, d, lame, tau)
    if fixed_coef is not None:
        c = float(fixed_coef)
        k = float(np.mean(val - c * s))
    else:
        if np.ptp(eps) == 0:
            raise SingularSystemError("rank-deficient design: all eps are equal")
        design = np.column_stack([s, np.ones_like(s)])
        (c, k), *_ = np.linalg.lstsq(design, val, rcond=None)
        c, k = float(c), float(k)
    resid = float(np.sqrt(np.mean((val - c * s - k) ** 2)))
    return GeometryFit(c, k, resid, expected)


def geometry_constant_g(alpha: int, d: int, lame: LameConstants, tau, k_star: float) -> float:
    """G* = K* / (leading coefficient)."""
    return k_star / leading_coefficient(alpha, d, lame, tau)


def c_alpha_asymptotic(d: int, starred: FactorData | None, tau, lame: LameConstants, eps: float,
                       k_star=None) -> np.ndarray:
    """Asymptotic free constants from the limiting factor data.

    d = 2, 3: translations use det F1*/det D* scaled by the inverse diagonal
    energy (with geometry constants G* from K*); rotations use det F2*/det D*.
    d >= 4: det F3*/det F* for every mode.
    """
    if starred is None:
        raise MissingFactorData("limiting factor data are required")
    if starred.d != d:
        raise DomainError("factor data dimension mismatch")
    n = basis_size(d)
    if d >= 4:
        return np.array([det_ratio(starred, "F3", a) for a in range(1, n + 1)])
    if k_star is None:
        raise MissingFactorData("K* values are required for d = 2, 3")
    k_star = np.broadcast_to(np.asarray(k_star, dtype=float), (d,))
    out = np.zeros(n)
    for alpha in range(1, d + 1):
        c = leading_coefficient(alpha, d, lame, tau)
        g = k_star[alpha - 1] / c
        ratio = det_ratio(starred, "F1", alpha)
        if d == 2:
            out[alpha - 1] = ratio * math.sqrt(eps) / c / (1 + g * math.sqrt(eps))
        else:
            out[alpha - 1] = ratio / c / (abs(math.log(eps)) + g)
    for alpha in range(d + 1, n + 1):
        out[alpha - 1] = det_ratio(starred, "F2", alpha)
    return out


# ---------------------------------------------------------------------------
# Extrapolation of the limiting data
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class RichardsonFit:
    limit: float
    coef: float
    power: float
    residual: float


def richardson_extrapolate(eps, values, power: float | None = None,
                           power_bounds: tuple[float, float] = (0.05, 3.0)) -> RichardsonFit:
    """Fit value(eps) = v* + c eps^p; p is fitted unless given."""
    from scipy.optimize import least_squares

    eps = np.asarray(eps, dtype=float)
    values = np.asarray(values, dtype=float)
    if len(eps) < (2 if power is not None else 3):
        raise DomainError("not enough samples for extrapolation")

    def linear(p):
        design = np.column_stack([np.ones_like(eps), eps**p])
        coef, *_ = np.linalg.lstsq(design, values, rcond=None)
        return coef, values - design @ coef

    if power is not None:
        coef, r = linear(power)
        return RichardsonFit(float(coef[0]), float(coef[1]), float(power), float(np.sqrt(np.mean(r**2))))
    # variable projection: the linear part is eliminated for each trial power
    grid = np.linspace(*power_bounds, 60)
    costs = [np.sum(linear(p)[1] ** 2) for p in grid]
    p0 = grid[int(np.argmin(costs))]
    sol = least_squares(lambda p: linear(p[0])[1], [p0], bounds=power_bounds)
    p = float(sol.x[0])
    coef, r = linear(p)
    return RichardsonFit(float(coef[0]), float(coef[1]), p, float(np.sqrt(np.mean(r**2))))


def extrapolate_factors(samples: list[FactorData], power: float | None = None,
                        skip_diagonal: bool = True) -> FactorData:
    """Entrywise Richardson limit of an eps-sweep of factor data.

    Translation diagonals diverge as eps -> 0 and have no finite limit; with
    ``skip_diagonal`` they are carried over from the smallest eps unchanged
    (only ratios involving the D block and Q are used downstream).
    """
    if not samples:
        raise DomainError("no samples")
    d = samples[0].d
    eps = np.array([s.eps for s in samples], dtype=float)
    if np.any(~np.isfinite(eps)):
        raise DomainError("every sample needs its eps")
    order = np.argsort(eps)
    A = np.stack([samples[i].a for i in order])
    Q = np.stack([samples[i].q for i in order])
    eps = eps[order]
    n = basis_size(d)
    a_lim = A[0].copy()
    for i in range(n):
        for j in range(i, n):
            if skip_diagonal and i == j and i < d:
                continue
            v = richardson_extrapolate(eps, A[:, i, j], power).limit
            a_lim[i, j] = a_lim[j, i] = v
    q_lim = np.array([richardson_extrapolate(eps, Q[:, i], power).limit for i in range(n)])
    return FactorData(d, a_lim, q_lim, provenance="extrapolated", eps=None)
