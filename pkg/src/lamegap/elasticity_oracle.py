"""Plane-strain P1 finite elements on two nearly touching disks.

The matrix D is the disk of radius r0 centred at (0, r0), tangent to x_2 = 0
at the origin; the inclusion is the disk of radius r1 centred at
(0, r1 + eps).  The region between them is meshed by a structured ring of
quadrilaterals (split into triangles) whose inner and outer corners are
paired along matched boundary angles: vertically aligned in the neck, a
monotone Hermite blend elsewhere.  Tangential spacing follows the local gap
width so elements stay shape-regular down to eps ~ 1e-3.

The oracle solves the rigid-mode problems and the boundary-data problem,
forms the Gram matrix a_ab = W(u_a, u_b) and Q_b = -W(u_0, u_b) by the
discrete energy pairing, and samples gradients element-wise.
"""

from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .auxiliary_fields import LameConstants
from .boundary_data import BoundaryData, basis_size, rigid_basis
from .errors import DomainError, MeshError, ToleranceError
from .factor_system import FactorData, free_constants
from .geometry import GapProfile, disk_profile

__all__ = [
    "ReferenceDomain",
    "Mesh",
    "build_reference_domain",
    "LameSolver",
    "SolveResult",
    "solve_lame",
    "energy_pairing",
    "q_functional",
    "FullSolution",
    "solve_full",
    "SweepPoint",
    "sweep",
    "write_mesh_text",
    "read_mesh_text",
]

D = 2


@dataclass(frozen=True)
class ReferenceDomain:
    eps: float
    r1: float = 0.5
    r0: float = 1.0

    def __post_init__(self):
        if not 0 < self.r1 < self.r0:
            raise DomainError("need 0 < r1 < r0")
        if not 0 < self.eps < (self.r0 - self.r1) / 2:
            raise DomainError("need 0 < eps < (r0 - r1) / 2")

    @property
    def tau1(self) -> float:
        return 1 / self.r1 - 1 / self.r0

    @property
    def inner_center(self) -> np.ndarray:
        return np.array([0.0, self.r1 + self.eps])

    @property
    def outer_center(self) -> np.ndarray:
        return np.array([0.0, self.r0])

    def inner_point(self, theta):
        """Inclusion boundary; theta = 0 at the bottom."""
        theta = np.asarray(theta, dtype=float)
        return np.stack([self.r1 * np.sin(theta), self.r1 + self.eps - self.r1 * np.cos(theta)], axis=-1)

    def outer_point(self, g):
        g = np.asarray(g, dtype=float)
        return np.stack([self.r0 * np.sin(g), self.r0 - self.r0 * np.cos(g)], axis=-1)

    def gap(self, x1):
        x1 = np.asarray(x1, dtype=float)
        top = self.r1 + self.eps - np.sqrt(self.r1**2 - x1**2)
        bottom = self.r0 - np.sqrt(self.r0**2 - x1**2)
        return top - bottom

    def inclusion_inside_matrix(self) -> bool:
        dist = abs(self.r0 - (self.r1 + self.eps))
        return dist + self.r1 < self.r0

    def profile(self, R: float | None = None) -> GapProfile:
        return disk_profile(self.eps, r1=self.r1, r0=self.r0, R=R)


class _AngleMap:
    """Outer angle g(theta) paired with inner angle theta, for theta in [0, pi]."""

    def __init__(self, dom: ReferenceDomain, neck_angle: float):
        self.q = dom.r1 / dom.r0
        self.tb = neck_angle
        self.gb = math.asin(self.q * math.sin(neck_angle))
        self.mb = self.q * math.cos(neck_angle) / math.cos(self.gb)
        self.h = math.pi - neck_angle
        self.me = (math.pi - self.gb) / self.h

    def __call__(self, theta):
        theta = np.asarray(theta, dtype=float)
        s = np.sign(theta)
        a = np.abs(theta)
        neck = np.arcsin(np.clip(self.q * np.sin(np.minimum(a, self.tb)), -1, 1))
        t = np.clip((a - self.tb) / self.h, 0, 1)
        h00 = 2 * t**3 - 3 * t**2 + 1
        h10 = t**3 - 2 * t**2 + t
        h01 = -2 * t**3 + 3 * t**2
        h11 = t**3 - t**2
        blend = h00 * self.gb + h10 * self.h * self.mb + h01 * math.pi + h11 * self.h * self.me
        return s * np.where(a <= self.tb, neck, blend)

    def slope(self, theta: float) -> float:
        a = abs(theta)
        if a <= self.tb:
            g = math.asin(self.q * math.sin(a))
            return self.q * math.cos(a) / math.cos(g)
        t = (a - self.tb) / self.h
        d00 = 6 * t**2 - 6 * t
        d10 = 3 * t**2 - 4 * t + 1
        d01 = -6 * t**2 + 6 * t
        d11 = 3 * t**2 - 2 * t
        return (d00 * self.gb + d01 * math.pi) / self.h + d10 * self.mb + d11 * self.me


@dataclass(frozen=True)
class Mesh:
    nodes: np.ndarray
    triangles: np.ndarray
    inner: np.ndarray
    outer: np.ndarray
    n_layers: int
    ring_angles: np.ndarray = field(repr=False)

    @property
    def n_nodes(self) -> int:
        return len(self.nodes)

    @property
    def n_elements(self) -> int:
        return len(self.triangles)

    @property
    def boundary(self) -> np.ndarray:
        return np.concatenate([self.inner, self.outer])

    def signed_areas(self) -> np.ndarray:
        p = self.nodes[self.triangles]
        e1 = p[:, 1] - p[:, 0]
        e2 = p[:, 2] - p[:, 0]
        return 0.5 * (e1[:, 0] * e2[:, 1] - e1[:, 1] * e2[:, 0])

    def area(self) -> float:
        return float(self.signed_areas().sum())

    def min_angle_deg(self) -> float:
        p = self.nodes[self.triangles]
        angles = []
        for i in range(3):
            a = p[:, (i + 1) % 3] - p[:, i]
            b = p[:, (i + 2) % 3] - p[:, i]
            cos = np.einsum("ni,ni->n", a, b) / (np.linalg.norm(a, axis=1) * np.linalg.norm(b, axis=1))
            angles.append(np.degrees(np.arccos(np.clip(cos, -1, 1))))
        return float(np.min(angles))

    def check(self, min_angle: float = 5.0):
        if np.any(self.signed_areas() <= 0):
            raise MeshError("inverted or degenerate triangles")
        ang = self.min_angle_deg()
        if ang < min_angle:
            raise MeshError(f"minimum angle {ang:.2f} deg below {min_angle} deg")


def build_reference_domain(eps: float, r1: float = 0.5, r0: float = 1.0, n_layers: int = 8,
                           angular_res: float = 1.0, neck_angle: float = math.pi / 3,
                           h_max: float = 0.04, aspect: float = 2.0):
    """Reference domain and its structured mesh.

    Tangential spacing is min(h_max, aspect * local width / n_layers), both
    divided by ``angular_res``; ``n_layers`` elements span the gap everywhere.
    """
    dom = ReferenceDomain(eps, r1, r0)
    if n_layers < 4:
        raise DomainError("n_layers must be at least 4")
    if angular_res <= 0:
        raise DomainError("angular_res must be positive")
    gmap = _AngleMap(dom, neck_angle)
    hm = h_max / angular_res
    asp = aspect / angular_res

    def spacing(theta):
        width = float(np.linalg.norm(dom.outer_point(gmap(theta)) - dom.inner_point(theta)))
        sigma = min(hm, asp * width / n_layers)
        # balance inner and outer arc spacing
        return sigma / math.sqrt(r1 * r0 * gmap.slope(theta))

    thetas = [0.0]
    while thetas[-1] < math.pi:
        thetas.append(thetas[-1] + spacing(thetas[-1]))
        if len(thetas) > 2_000_000:
            raise MeshError("tangential node count exploded")
    half = np.array(thetas) * (math.pi / thetas[-1])
    if len(half) < 8:
        raise MeshError("too few tangential nodes")
    ring = np.concatenate([-half[-2:0:-1], half])  # -theta_{N-1} .. 0 .. pi
    inner = dom.inner_point(ring)
    outer = dom.outer_point(gmap(ring))
    s = np.linspace(0.0, 1.0, n_layers + 1)
    nodes = (inner[:, None, :] + s[None, :, None] * (outer - inner)[:, None, :]).reshape(-1, 2)
    M, L1 = len(ring), n_layers + 1

    def nid(i, j):
        return (i % M) * L1 + j

    i = np.arange(M)[:, None]
    j = np.arange(n_layers)[None, :]
    a, b = nid(i, j), nid(i + 1, j)
    c, dd = nid(i + 1, j + 1), nid(i, j + 1)
    right = np.broadcast_to((ring >= 0)[:, None], a.shape)
    t1 = np.where(right[..., None], np.stack([a, b, c], -1), np.stack([a, b, dd], -1))
    t2 = np.where(right[..., None], np.stack([a, c, dd], -1), np.stack([b, c, dd], -1))
    tris = np.concatenate([t1.reshape(-1, 3), t2.reshape(-1, 3)])
    # orient counter-clockwise
    p = nodes[tris]
    e1, e2 = p[:, 1] - p[:, 0], p[:, 2] - p[:, 0]
    neg = e1[:, 0] * e2[:, 1] - e1[:, 1] * e2[:, 0] < 0
    tris[neg] = tris[neg][:, [0, 2, 1]]
    mesh = Mesh(nodes, tris, np.arange(M) * L1, np.arange(M) * L1 + n_layers, n_layers, ring)
    mesh.check()
    return dom, mesh


# ---------------------------------------------------------------------------
# Assembly and solves
# ---------------------------------------------------------------------------


def _element_b(mesh: Mesh):
    p = mesh.nodes[mesh.triangles]
    x, y = p[..., 0], p[..., 1]
    area = 0.5 * ((x[:, 1] - x[:, 0]) * (y[:, 2] - y[:, 0]) - (x[:, 2] - x[:, 0]) * (y[:, 1] - y[:, 0]))
    bx = np.stack([y[:, 1] - y[:, 2], y[:, 2] - y[:, 0], y[:, 0] - y[:, 1]], 1) / (2 * area[:, None])
    by = np.stack([x[:, 2] - x[:, 1], x[:, 0] - x[:, 2], x[:, 1] - x[:, 0]], 1) / (2 * area[:, None])
    return area, bx, by


def assemble_stiffness(mesh: Mesh, lame: LameConstants) -> sp.csr_matrix:
    """Global stiffness for dofs ordered (u_x, u_y) per node."""
    area, bx, by = _element_b(mesh)
    m = mesh.n_elements
    B = np.zeros((m, 3, 6))
    B[:, 0, 0::2] = bx
    B[:, 1, 1::2] = by
    B[:, 2, 0::2] = by
    B[:, 2, 1::2] = bx
    lam, mu = lame.lam, lame.mu
    C = np.array([[lam + 2 * mu, lam, 0], [lam, lam + 2 * mu, 0], [0, 0, mu]])
    ke = np.einsum("e,eki,kl,elj->eij", area, B, C, B)
    dofs = np.empty((m, 6), dtype=np.int64)
    dofs[:, 0::2] = 2 * mesh.triangles
    dofs[:, 1::2] = 2 * mesh.triangles + 1
    rows = np.repeat(dofs, 6, axis=1).ravel()
    cols = np.tile(dofs, (1, 6)).ravel()
    K = sp.coo_matrix((ke.ravel(), (rows, cols)), shape=(2 * mesh.n_nodes,) * 2).tocsr()
    return 0.5 * (K + K.T)


class LameSolver:
    """Stiffness with the interior block factorized once, for many Dirichlet data."""

    def __init__(self, mesh: Mesh, lame: LameConstants):
        self.mesh = mesh
        self.lame = lame
        self.K = assemble_stiffness(mesh, lame)
        bnd = np.zeros(mesh.n_nodes, dtype=bool)
        bnd[mesh.boundary] = True
        dof_bnd = np.repeat(bnd, 2)
        self.bdofs = np.flatnonzero(dof_bnd)
        self.idofs = np.flatnonzero(~dof_bnd)
        self.K_ii = self.K[self.idofs][:, self.idofs].tocsc()
        self.K_ib = self.K[self.idofs][:, self.bdofs]
        self.lu = spla.splu(self.K_ii)

    def solve(self, boundary_values: np.ndarray, label: str = "") -> "SolveResult":
        """boundary_values: (n_nodes, 2) array, only boundary rows are read."""
        vals = np.asarray(boundary_values, dtype=float).reshape(-1, 2)
        u = np.zeros(2 * self.mesh.n_nodes)
        u[self.bdofs] = vals.reshape(-1)[self.bdofs]
        rhs = -self.K_ib @ u[self.bdofs]
        ui = self.lu.solve(rhs)
        res = np.linalg.norm(self.K_ii @ ui - rhs) / max(np.linalg.norm(rhs), 1e-300)
        if res > 1e-10 and np.linalg.norm(rhs) > 0:
            raise ToleranceError(f"discrete system residual {res:.3g}")
        u[self.idofs] = ui
        return SolveResult(self.mesh, u.reshape(-1, 2), self, label, float(res))


@dataclass(frozen=True)
class SolveResult:
    mesh: Mesh
    displacement: np.ndarray
    solver: LameSolver = field(repr=False)
    label: str = ""
    residual: float = 0.0

    def energy(self) -> float:
        return energy_pairing(self, self)

    def element_gradients(self) -> np.ndarray:
        """(n_elements, 2, 2), entry [i, j] = d u_i / d x_j."""
        _, bx, by = _element_b(self.mesh)
        u = self.displacement[self.mesh.triangles]  # (m, 3, 2)
        return np.stack([np.einsum("ek,eki->ei", bx, u), np.einsum("ek,eki->ei", by, u)], axis=-1)

    def gradient_at(self, points) -> np.ndarray:
        return _sample(self.mesh, self.element_gradients(), points)


def _containing(mesh: Mesh, point: np.ndarray, tol: float = 1e-9) -> np.ndarray:
    p = mesh.nodes[mesh.triangles]
    v0, v1 = p[:, 1] - p[:, 0], p[:, 2] - p[:, 0]
    w = point - p[:, 0]
    det = v0[:, 0] * v1[:, 1] - v0[:, 1] * v1[:, 0]
    l1 = (w[:, 0] * v1[:, 1] - w[:, 1] * v1[:, 0]) / det
    l2 = (v0[:, 0] * w[:, 1] - v0[:, 1] * w[:, 0]) / det
    l0 = 1 - l1 - l2
    return np.flatnonzero((l0 >= -tol) & (l1 >= -tol) & (l2 >= -tol))


def _sample(mesh: Mesh, grads: np.ndarray, points) -> np.ndarray:
    pts = np.atleast_2d(np.asarray(points, dtype=float))
    out = np.empty((len(pts), 2, 2))
    for n, x in enumerate(pts):
        idx = _containing(mesh, x)
        if len(idx) == 0:
            raise DomainError(f"point {x} is outside the mesh")
        out[n] = grads[idx].mean(axis=0)
    return out[0] if np.ndim(points) == 1 else out


def solve_lame(mesh: Mesh, lame: LameConstants, inner_values, outer_values) -> SolveResult:
    """Dirichlet problem with values (or callables of the node coordinates) on both circles."""
    solver = LameSolver(mesh, lame)
    return solver.solve(_boundary_array(mesh, inner_values, outer_values))


def _boundary_array(mesh: Mesh, inner_values, outer_values) -> np.ndarray:
    vals = np.zeros((mesh.n_nodes, 2))
    for idx, given in ((mesh.inner, inner_values), (mesh.outer, outer_values)):
        if given is None:
            continue
        vals[idx] = given(mesh.nodes[idx]) if callable(given) else np.asarray(given, dtype=float)
    return vals


def energy_pairing(u: SolveResult, v: SolveResult) -> float:
    """Discrete W(u, v) = int (C e(u), e(v))."""
    if u.mesh is not v.mesh:
        raise MeshError("solutions live on different meshes")
    K = u.solver.K
    return float(u.displacement.reshape(-1) @ (K @ v.displacement.reshape(-1)))


def q_functional(u0: SolveResult, ua: SolveResult) -> float:
    """Q_alpha = -W(u_0, u_alpha), the flux functional in volume form."""
    return -energy_pairing(u0, ua)


# ---------------------------------------------------------------------------
# Full problem
# ---------------------------------------------------------------------------


def phi_on_outer(phi: BoundaryData, dom: ReferenceDomain):
    """Boundary datum on the outer circle: the graph datum on the lower half, zero above."""

    def values(x):
        out = np.zeros((len(x), 2))
        lower = x[:, 1] < dom.r0
        if np.any(lower):
            out[lower] = phi.trace(x[lower, :1])[0]
        return out

    return values


@dataclass
class FullSolution:
    domain: ReferenceDomain
    mesh: Mesh
    lame: LameConstants
    phi: BoundaryData
    modes: list[SolveResult]
    u0: SolveResult
    factors: FactorData
    constants: np.ndarray
    flux_residual: float
    _grads: dict = field(default_factory=dict, repr=False)

    def _element_grads(self, key):
        if key not in self._grads:
            sol = self.u0 if key == 0 else self.modes[key - 1]
            self._grads[key] = sol.element_gradients()
        return self._grads[key]

    def gradient(self, points) -> np.ndarray:
        """grad u = sum C^alpha grad u_alpha + grad u_0 at the given points."""
        total = self._element_grads(0).copy()
        for a, c in enumerate(self.constants, start=1):
            total += c * self._element_grads(a)
        return _sample(self.mesh, total, points)

    def u0_gradient(self, points) -> np.ndarray:
        return _sample(self.mesh, self._element_grads(0), points)

    def midgap_point(self) -> np.ndarray:
        return np.array([0.0, self.domain.eps / 2])


def solve_full(phi: BoundaryData, eps: float, lame: LameConstants, r1: float = 0.5, r0: float = 1.0,
               **mesh_kw) -> FullSolution:
    """All N + 1 subproblems, the factor system and the free constants."""
    if phi.d != D:
        raise DomainError("the oracle is two-dimensional")
    if not phi.is_normalized():
        raise DomainError("boundary data must vanish at the origin")
    dom, mesh = build_reference_domain(eps, r1, r0, **mesh_kw)
    solver = LameSolver(mesh, lame)
    n = basis_size(D)
    modes = []
    for alpha in range(1, n + 1):
        psi = rigid_basis(D, alpha)
        modes.append(solver.solve(_boundary_array(mesh, psi, None), f"u_{alpha}"))
    u0 = solver.solve(_boundary_array(mesh, None, phi_on_outer(phi, dom)), "u_0")
    a = np.array([[energy_pairing(modes[i], modes[j]) for j in range(n)] for i in range(n)])
    q = np.array([q_functional(u0, modes[i]) for i in range(n)])
    factors = FactorData(D, 0.5 * (a + a.T), q, provenance="oracle", eps=eps)
    X, _ = free_constants(factors)
    flux = factors.q - factors.a @ X
    scale = max(np.abs(factors.q).max(), np.abs(factors.a).max() * np.abs(X).max(), 1e-300)
    resid = float(np.abs(flux).max() / scale)
    if resid > 1e-9:
        raise ToleranceError(f"flux conditions violated (scaled residual {resid:.3g})")
    return FullSolution(dom, mesh, lame, phi, modes, u0, factors, X, resid)


@dataclass(frozen=True)
class SweepPoint:
    eps: float
    factors: FactorData
    constants: np.ndarray
    grad_midgap: np.ndarray
    n_nodes: int
    n_elements: int
    min_angle: float


def sweep(phi: BoundaryData, eps_list, lame: LameConstants, keep: bool = False, threads: int = 1, **kw):
    """solve_full over an eps list; returns SweepPoints (and the solutions with ``keep``).

    With ``threads`` > 1 the points are solved concurrently; output order is the input order.
    """
    eps_list = [float(e) for e in eps_list]
    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            solved = list(pool.map(lambda e: solve_full(phi, e, lame, **kw), eps_list))
    else:
        solved = [solve_full(phi, e, lame, **kw) for e in eps_list]
    points, sols = [], []
    for eps, sol in zip(eps_list, solved):
        points.append(SweepPoint(float(eps), sol.factors, sol.constants, sol.gradient(sol.midgap_point()),
                                 sol.mesh.n_nodes, sol.mesh.n_elements, sol.mesh.min_angle_deg()))
        if keep:
            sols.append(sol)
    return (points, sols) if keep else points


# ---------------------------------------------------------------------------
# Plain-text dumps
# ---------------------------------------------------------------------------


def write_mesh_text(path, mesh: Mesh, displacement: np.ndarray | None = None) -> None:
    """Write nodes (with optional displacement), triangles and boundary index lists.

    Format (whitespace separated, '#' comments):
        lamegap-mesh 1
        nodes <n> <columns>
        <x> <y> [<u_x> <u_y>]          n lines
        triangles <m>
        <i> <j> <k>                     m lines, 0-based node indices
        inner <k> / outer <k>
        <index> ...                     one line each
    """
    lines = ["lamegap-mesh 1"]
    cols = 2 if displacement is None else 4
    lines.append(f"nodes {mesh.n_nodes} {cols}")
    data = mesh.nodes if displacement is None else np.hstack([mesh.nodes, displacement])
    lines.extend(" ".join(repr(float(v)) for v in row) for row in data)
    lines.append(f"triangles {mesh.n_elements}")
    lines.extend(" ".join(str(int(v)) for v in row) for row in mesh.triangles)
    for name, idx in (("inner", mesh.inner), ("outer", mesh.outer)):
        lines.append(f"{name} {len(idx)}")
        lines.append(" ".join(str(int(v)) for v in idx))
    Path(path).write_text("\n".join(lines) + "\n")


def read_mesh_text(path):
    """Inverse of :func:`write_mesh_text`; returns (nodes, triangles, inner, outer, displacement)."""
    tokens = [ln for ln in Path(path).read_text().splitlines() if ln and not ln.startswith("#")]
    if tokens[0].split() != ["lamegap-mesh", "1"]:
        raise MeshError("not a lamegap mesh file")
    pos = 1
    _, n, cols = tokens[pos].split()
    n, cols = int(n), int(cols)
    data = np.array([[float(v) for v in tokens[pos + 1 + i].split()] for i in range(n)])
    pos += 1 + n
    m = int(tokens[pos].split()[1])
    tris = np.array([[int(v) for v in tokens[pos + 1 + i].split()] for i in range(m)], dtype=np.int64)
    pos += 1 + m
    inner = np.array([int(v) for v in tokens[pos + 1].split()], dtype=np.int64)
    outer = np.array([int(v) for v in tokens[pos + 3].split()], dtype=np.int64)
    disp = data[:, 2:4] if cols == 4 else None
    return data[:, :2], tris, inner, outer, disp
