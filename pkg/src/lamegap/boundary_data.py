"""Rigid-displacement basis and Dirichlet boundary data on the matrix boundary.

Boundary data are stored as functions of the tangential variable x': the
value at x' is the datum at the boundary point (x', h(x')).  Each component
is a :class:`~lamegap.geometry.Graph`, so values, gradients and Hessians in
x' are all analytic.
"""

from __future__ import annotations

import dataclasses
import itertools
import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .errors import DomainError
from .geometry import Graph, PolynomialGraph, PowerGraph, ZeroGraph, as_tangential

__all__ = [
    "basis_size",
    "RigidBasis",
    "rigid_basis",
    "AxisSignedPower",
    "ConstantGraph",
    "BoundaryData",
    "make_family",
    "custom_data",
    "classify_parity",
    "smooth_cutoff",
]

FAMILIES = ("E1", "E2", "E3")


def basis_size(d: int) -> int:
    """Number of rigid displacements in R^d, d(d+1)/2."""
    return d * (d + 1) // 2


def _rotation_pairs(d: int) -> list[tuple[int, int]]:
    """Zero-based (i, j) pairs in basis order for the rotational elements."""
    pairs = [(j, d - 1) for j in range(d - 1)]
    pairs += [(i, j) for i, j in itertools.combinations(range(d - 1), 2)]
    return pairs


@dataclass(frozen=True)
class RigidBasis:
    """One rigid displacement psi(x) = A x + b with A antisymmetric.

    For a rotational element with zero-based pair (i, j) the field is
    x_j e_i - x_i e_j.
    """

    d: int
    alpha: int

    def __post_init__(self):
        if not 1 <= self.alpha <= basis_size(self.d):
            raise DomainError(f"alpha must lie in 1..{basis_size(self.d)}")

    @property
    def matrix(self) -> np.ndarray:
        a = np.zeros((self.d, self.d))
        if self.alpha > self.d:
            i, j = _rotation_pairs(self.d)[self.alpha - self.d - 1]
            a[i, j] = 1.0
            a[j, i] = -1.0
        return a

    @property
    def offset(self) -> np.ndarray:
        b = np.zeros(self.d)
        if self.alpha <= self.d:
            b[self.alpha - 1] = 1.0
        return b

    @property
    def is_translation(self) -> bool:
        return self.alpha <= self.d

    def __call__(self, x) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        return x @ self.matrix.T + self.offset

    def gradient(self) -> np.ndarray:
        """Constant gradient, entry [i, j] = d psi^i / d x_j."""
        return self.matrix


def rigid_basis(d: int, alpha: int) -> RigidBasis:
    return RigidBasis(d, alpha)


# ---------------------------------------------------------------------------
# Component building blocks
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class AxisSignedPower(Graph):
    """coef * x_i |x_i|^(k-1), odd in x_i."""

    axis: int
    coef: float
    k: int

    def value(self, xp):
        t = xp[:, self.axis]
        return self.coef * t * np.abs(t) ** (self.k - 1)

    def grad(self, xp):
        t = xp[:, self.axis]
        out = np.zeros_like(xp)
        out[:, self.axis] = self.coef * self.k * np.abs(t) ** (self.k - 1)
        return out

    def hess(self, xp):
        n, dim = xp.shape
        t = xp[:, self.axis]
        out = np.zeros((n, dim, dim))
        if self.k > 1:
            out[:, self.axis, self.axis] = self.coef * self.k * (self.k - 1) * np.sign(t) * np.abs(t) ** (self.k - 2)
        return out


@dataclass(frozen=True)
class ConstantGraph(Graph):
    c: float

    def value(self, xp):
        return np.full(len(xp), self.c)

    def grad(self, xp):
        return np.zeros_like(xp)

    def hess(self, xp):
        n, dim = xp.shape
        return np.zeros((n, dim, dim))

    def radial(self):
        return True


def smooth_cutoff(r: np.ndarray, radius: float) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """C^2 radial cutoff: 1 on [0, radius/2], 0 beyond radius, quintic smoothstep between.

    Returns the value and the first two derivatives in r.
    """
    half = radius / 2
    s = np.clip((r - half) / half, 0.0, 1.0)
    step = s**3 * (10 - 15 * s + 6 * s**2)
    d1 = 30 * s**2 * (1 - s) ** 2
    d2 = 60 * s * (1 - s) * (1 - 2 * s)
    inside = (r > half) & (r < radius)
    return 1 - step, np.where(inside, -d1 / half, 0.0), np.where(inside, -d2 / half**2, 0.0)


# ---------------------------------------------------------------------------
# Boundary data
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class BoundaryData:
    """Dirichlet datum on the matrix boundary, parametrised by x'.

    ``cutoff`` (a radius) multiplies every component by :func:`smooth_cutoff`,
    which is how the datum is extended by zero to the rest of the boundary.
    ``scale`` multiplies the whole datum.
    """

    d: int
    components: tuple[Graph, ...]
    eta: float = 0.0
    k: int = 0
    family: str = "custom"
    cutoff: float | None = None
    scale: float = 1.0
    parts: tuple["BoundaryData", ...] = field(default=(), compare=False)

    def __post_init__(self):
        if not self.parts and len(self.components) != self.d:
            raise DomainError("need one component per space dimension")

    @property
    def dim(self) -> int:
        return self.d - 1

    def _raw(self, pts):
        n = len(pts)
        val = np.empty((n, self.d))
        grad = np.empty((n, self.d, self.dim))
        hess = np.empty((n, self.d, self.dim, self.dim))
        for i, comp in enumerate(self.components):
            val[:, i] = comp.value(pts)
            grad[:, i] = comp.grad(pts)
            hess[:, i] = comp.hess(pts)
        return val, grad, hess

    def _full(self, pts):
        if self.parts:
            out = [np.zeros((len(pts), self.d)), np.zeros((len(pts), self.d, self.dim)),
                   np.zeros((len(pts), self.d, self.dim, self.dim))]
            for part in self.parts:
                for acc, term in zip(out, part._full(pts)):
                    acc += term
            val, grad, hess = out
        else:
            val, grad, hess = self._raw(pts)
        if self.cutoff is not None:
            r = np.linalg.norm(pts, axis=1)
            chi, c1, c2 = smooth_cutoff(r, self.cutoff)
            with np.errstate(divide="ignore", invalid="ignore"):
                unit = np.where(r[:, None] > 0, pts / r[:, None], 0.0)
            gchi = c1[:, None] * unit
            eye = np.eye(self.dim)
            with np.errstate(divide="ignore", invalid="ignore"):
                inv_r = np.where(r > 0, 1 / r, 0.0)
            hchi = (
                c2[:, None, None] * np.einsum("ni,nj->nij", unit, unit)
                + (c1 * inv_r)[:, None, None] * (eye - np.einsum("ni,nj->nij", unit, unit))
            )
            hess = (
                chi[:, None, None, None] * hess
                + np.einsum("nij,nk->nijk", grad, gchi)
                + np.einsum("nj,nik->nijk", gchi, grad)
                + val[:, :, None, None] * hchi[:, None]
            )
            grad = chi[:, None, None] * grad + val[:, :, None] * gchi[:, None, :]
            val = chi[:, None] * val
        if self.scale != 1.0:
            val, grad, hess = self.scale * val, self.scale * grad, self.scale * hess
        return val, grad, hess

    def trace(self, xp):
        """Value (n, d) and x'-gradient (n, d, d-1) of x' -> phi(x', h(x'))."""
        pts, single = as_tangential(xp, self.dim)
        val, grad, _ = self._full(pts)
        return (val[0], grad[0]) if single else (val, grad)

    def trace_hessian(self, xp):
        pts, single = as_tangential(xp, self.dim)
        hess = self._full(pts)[2]
        return hess[0] if single else hess

    def values(self, xp) -> np.ndarray:
        return self.trace(xp)[0]

    def with_cutoff(self, radius: float) -> "BoundaryData":
        return _replace(self, cutoff=radius)

    def scaled(self, c: float) -> "BoundaryData":
        return _replace(self, scale=self.scale * c, eta=abs(c) * self.eta)

    def __add__(self, other: "BoundaryData") -> "BoundaryData":
        if other.d != self.d:
            raise DomainError("dimension mismatch")
        return BoundaryData(self.d, (), eta=self.eta + other.eta, k=min(self.k, other.k) if self.k and other.k else 0,
                            family="custom", parts=(self, other))

    def c2_norm(self, radius: float) -> float:
        """Sampled surrogate for the C^2 norm: sum of max|phi|, max|grad phi|, max|Hess phi|."""
        per_axis = {1: 201, 2: 201}.get(self.dim, 41)
        axis = np.linspace(-radius, radius, per_axis)
        pts = np.array(list(itertools.product(axis, repeat=self.dim)))
        pts = pts[np.linalg.norm(pts, axis=1) <= radius * (1 + 1e-14)]
        val, grad, hess = self._full(pts)
        return float(
            np.linalg.norm(val, axis=1).max()
            + np.sqrt(np.einsum("nij,nij->n", grad, grad)).max()
            + np.sqrt(np.einsum("nijk,nijk->n", hess, hess)).max()
        )

    def growth_margin(self, radius: float, n: int = 201) -> float:
        """min over samples of eta|x'|^k - max_i |phi^i|; nonnegative iff the growth bound holds componentwise."""
        axis = np.linspace(-radius, radius, n)
        pts = np.array(list(itertools.product(axis, repeat=self.dim))) if self.dim <= 2 else \
            np.vstack([np.outer(axis, np.eye(self.dim)[i]) for i in range(self.dim)])
        val = self._full(pts)[0]
        r = np.linalg.norm(pts, axis=1)
        slack = self.eta * r**self.k - np.abs(val).max(axis=1)
        scale = max(1.0, float(np.abs(val).max(initial=0.0)))
        return float(slack.min() + 1e-12 * scale)

    def is_normalized(self) -> bool:
        return bool(np.abs(self.trace(np.zeros(self.dim))[0]).max() <= 1e-14)

    def gradient_at_origin(self) -> np.ndarray:
        return self.trace(np.zeros(self.dim))[1]


def _replace(data: BoundaryData, **changes) -> BoundaryData:
    return dataclasses.replace(data, **changes)


def make_family(tag: str, eta: float, k: int, d: int) -> BoundaryData:
    """One of the three model data families on the matrix boundary.

    E1: every component equals -eta |x'|^k (k >= 2).
    E2: only the last component, eta x_1 |x_1|^(k-1) (k >= 1, k != 2).
    E3: component i < d equals eta x_i |x_i|^(k-1), last component 0 (k >= 1, k != 2).
    """
    if tag not in FAMILIES:
        raise DomainError(f"unknown family {tag!r}")
    if eta < 0:
        raise DomainError("eta must be nonnegative")
    if tag == "E1":
        if k < 2:
            raise DomainError("E1 requires k >= 2")
        comps = tuple(PowerGraph(-eta, k) for _ in range(d))
    else:
        if k < 1 or k == 2:
            raise DomainError(f"{tag} requires k >= 1 and k != 2")
        if tag == "E2":
            comps = tuple(ZeroGraph() for _ in range(d - 1)) + (AxisSignedPower(0, eta, k),)
        else:
            comps = tuple(AxisSignedPower(i, eta, k) for i in range(d - 1)) + (ZeroGraph(),)
    return BoundaryData(d, comps, eta=float(eta), k=int(k), family=tag)


def custom_data(d: int, tables: Sequence, eta: float = 0.0, k: int = 0) -> BoundaryData:
    """Polynomial datum, one monomial table (see PolynomialGraph) per component."""
    if len(tables) != d:
        raise DomainError("need one coefficient table per component")
    comps = tuple(PolynomialGraph.from_mapping(t) if t else ZeroGraph() for t in tables)
    return BoundaryData(d, comps, eta=eta, k=k, family="custom")


def constant_data(vector: Sequence[float]) -> BoundaryData:
    vec = tuple(float(v) for v in vector)
    return BoundaryData(len(vec), tuple(ConstantGraph(v) for v in vec), eta=0.0, k=0, family="custom")


# ---------------------------------------------------------------------------
# Parity
# ---------------------------------------------------------------------------


def _parity_table(phi: BoundaryData, radius: float, n_pairs: int, tol: float):
    """even[i, j], odd[i, j]: whether component i is even / odd in x_j; zero[i]."""
    rng = np.random.default_rng(20240611)
    dim = phi.dim
    pts = rng.uniform(-radius, radius, size=(n_pairs, dim)) / math.sqrt(dim)
    val = phi.values(pts)
    scale = max(1.0, float(np.abs(val).max()))
    even = np.zeros((phi.d, dim), dtype=bool)
    odd = np.zeros((phi.d, dim), dtype=bool)
    for j in range(dim):
        ref = pts.copy()
        ref[:, j] *= -1
        rval = phi.values(ref)
        even[:, j] = np.abs(rval - val).max(axis=0) <= tol * scale
        odd[:, j] = np.abs(rval + val).max(axis=0) <= tol * scale
    zero = np.abs(val).max(axis=0) <= tol * scale
    return even, odd, zero


def classify_parity(phi: BoundaryData, radius: float | None = None, n_pairs: int = 64, tol: float = 1e-12) -> str:
    """Parity class 'A1', 'A2', 'A3' or 'none' from reflection tests.

    Classes are tried most specific first (A1, A3, A2): in two dimensions
    every A3 datum is also A2, and the rate tables treat A3 separately.
    """
    radius = radius if radius is not None else (phi.cutoff or 1.0)
    even, odd, zero = _parity_table(phi, radius, n_pairs, tol)
    d = phi.d
    if even.all():
        return "A1"
    if d == 2:
        if odd[0, 0] and zero[1]:
            return "A3"
        if odd[0, 0] and odd[1, 0]:
            return "A2"
        return "none"
    last = d - 1
    if all(odd[i, i] for i in range(d - 1)) and odd[last, 0] and odd[last, 1]:
        return "A3"
    if all(odd[i].any() for i in range(d - 1)) and odd[last, 0] and even[last, 1:].all():
        return "A2"
    return "none"
