"""Acceptance checks shared by the ``verify`` subcommand and the test suite.

Each check returns a :class:`CriterionResult` with the measured quantities and
the stated tolerance; nothing is relaxed here.  Checks 6-10 share one cached
finite-element sweep on the reference disks.
"""

from __future__ import annotations

import math
import time
from dataclasses import dataclass, field
from functools import lru_cache

import numpy as np

from .auxiliary_fields import AuxField, LameConstants, lame_rate_constant, remainder_envelope, vbar
from .blowup_rates import rho, rho_rate
from .boundary_data import BoundaryData, make_family, rigid_basis
from .elasticity_oracle import build_reference_domain, solve_lame, sweep
from .expansion import ExpansionConfig, grad_u_asymptotic
from .factor_system import (
    FactorData,
    definiteness_check,
    extrapolate_factors,
    fit_geometry_constants,
    free_constants,
    leading_coefficient,
)
from .gap_quadrature import closed_form_convex_2d, closed_form_convex_3d, moment_integral, parity_vanish_check
from .geometry import disk_profile, power_profile, quadratic_profile

__all__ = [
    "CriterionResult",
    "REFERENCE_SWEEP",
    "reference_sweep",
    "run_criterion",
    "run_suite",
    "SUITES",
]

REFERENCE_SWEEP = (4e-2, 2e-2, 1e-2, 5e-3, 2.5e-3)
EXPANSION_EPS = (4e-2, 1e-2, 2.5e-3)
REFERENCE_R = 0.2


@dataclass
class CriterionResult:
    number: int
    title: str
    passed: bool
    measured: dict = field(default_factory=dict)
    seconds: float = 0.0

    def line(self) -> str:
        status = "PASS" if self.passed else "FAIL"
        items = ", ".join(f"{k}={_fmt(v)}" for k, v in self.measured.items())
        return f"criterion {self.number:2d} {status}  {self.title}  [{items}] ({self.seconds:.1f}s)"


def _fmt(v):
    if isinstance(v, (float, np.floating)):
        return f"{float(v):.6g}"
    if isinstance(v, (list, tuple, np.ndarray)):
        return "[" + ", ".join(_fmt(x) for x in v) + "]"
    return str(v)


def _slope(x, y) -> float:
    return float(np.polyfit(np.log(x), np.log(y), 1)[0])


# ---------------------------------------------------------------------------
# 1-5: quadrature and linear algebra
# ---------------------------------------------------------------------------


def criterion_1() -> CriterionResult:
    diffs, ratios, times = {}, {}, []
    ok = True
    for tau in (1.0, 2.0):
        row = []
        for eps in (1e-4, 1e-6, 1e-8):
            t = time.perf_counter()
            val = moment_integral(quadratic_profile((tau,), eps, R=1.0), 0, tol_abs=1e-12, tol_rel=1e-15).value
            times.append(time.perf_counter() - t)
            diff = abs(val - closed_form_convex_2d(tau, 1.0, eps))
            row.append(diff / eps)
            if eps == 1e-4:
                ok &= diff <= 1e-2
        ratios[tau] = row
        diffs[tau] = row[0] * 1e-4
        # shrinking with eps at a bounded rate
        ok &= max(row) <= 2 * row[0]
    ok &= max(times) < 1.0
    return CriterionResult(1, "two-dimensional closed form", bool(ok), {
        "diff_at_1e-4_tau1": diffs[1.0], "diff_at_1e-4_tau2": diffs[2.0],
        "diff_over_eps_tau1": ratios[1.0], "diff_over_eps_tau2": ratios[2.0], "max_seconds": max(times)})


def criterion_2() -> CriterionResult:
    eps, R = 1e-6, 1.0
    t = time.perf_counter()
    val = moment_integral(quadratic_profile((2.0, 2.0), eps, R=R), 0, tol_abs=1e-12, tol_rel=1e-12).value
    sec = time.perf_counter() - t
    exact = math.pi * math.log((R**2 + eps) / eps)
    two_term = closed_form_convex_3d(2.0, 2.0, R, eps)
    e1 = abs(val - exact) / exact
    e2 = abs(val - two_term) / two_term
    return CriterionResult(2, "three-dimensional closed form", e1 <= 1e-6 and e2 <= 1e-3 and sec < 5, {
        "rel_err_exact": e1, "rel_err_two_term": e2, "seconds": sec})


def criterion_3() -> CriterionResult:
    eps = np.logspace(-8, -4, 9)
    worst_slope, worst_r2, fails = 0.0, 1.0, []
    t = time.perf_counter()
    for d in (2, 3):
        for m in (2, 3, 4, 6):
            for k in (0, 1, 2):
                vals = np.array([moment_integral(power_profile(d, m, e), k).value for e in eps])
                rate = rho_rate(k, d, m)
                if rate.log_power:
                    x = np.abs(np.log(eps))
                    coef = np.polyfit(x, vals, 1)
                    res = vals - np.polyval(coef, x)
                    r2 = 1 - np.sum(res**2) / np.sum((vals - vals.mean()) ** 2)
                    worst_r2 = min(worst_r2, r2)
                    if r2 <= 0.999:
                        fails.append((d, m, k))
                else:
                    dev = abs(_slope(eps, vals) - float(rate.exponent))
                    worst_slope = max(worst_slope, dev)
                    if dev > 0.05:
                        fails.append((d, m, k))
    sec = time.perf_counter() - t
    return CriterionResult(3, "rate recovery on the (d, m, k) grid", not fails and sec < 60, {
        "worst_slope_deviation": worst_slope, "worst_log_r2": worst_r2, "failures": str(fails), "seconds": sec})


def _odd_weights():
    return [
        (lambda p: p[:, 0], 0),
        (lambda p: p[:, 0] ** 3 * np.linalg.norm(p, axis=1) ** 2, 0),
        (lambda p: p[:, 0] * np.abs(p[:, 0]), 0),
        (lambda p: np.sin(3 * p[:, 0]) * np.exp(p[:, -1] ** 2), 0),
        (lambda p: p[:, -1] * np.cos(p[:, 0]), -1),
    ]


def criterion_4() -> CriterionResult:
    profiles = [
        power_profile(2, 2, 1e-6), power_profile(2, 4, 1e-6), power_profile(3, 2, 1e-6),
        power_profile(3, 3, 1e-6), power_profile(4, 2, 1e-4), quadratic_profile((1.0, 3.0), 1e-6),
        disk_profile(1e-3), disk_profile(1e-3, d=3),
    ]
    worst, count = 0.0, 0
    for prof in profiles:
        for w, axis in _odd_weights():
            if prof.dim > 3:
                continue
            ax = prof.dim - 1 if axis == -1 else axis
            res = parity_vanish_check(w, prof, axis=ax, tol=1e-10)
            if not res.weight_is_odd:
                continue
            worst = max(worst, res.residual)
            count += 1
    return CriterionResult(4, "odd-weight gap integrals vanish", worst < 1e-10 and count > 0, {
        "worst_abs": worst, "integrals": count})


def criterion_5(oracle_factors=None) -> CriterionResult:
    rng = np.random.default_rng(20240607)
    worst = 0.0
    for _ in range(1000):
        d = int(rng.integers(1, 4))
        n = d * (d + 1) // 2
        A = rng.normal(size=(n, n))
        a = A @ A.T + 0.1 * np.eye(n)
        q = rng.normal(size=n)
        _, diag = free_constants(FactorData(d, a, q))
        worst = max(worst, diag.relative_gap)
    if oracle_factors is None:
        oracle_factors = [p.factors for p in reference_sweep().points]
    lam = [definiteness_check(f).lambda_min for f in oracle_factors]
    ok = worst <= 1e-10 and all(v > 0 for v in lam)
    return CriterionResult(5, "linear algebra routes and definiteness", ok, {
        "worst_cramer_lu_gap": worst, "oracle_lambda_min": min(lam)})


# ---------------------------------------------------------------------------
# 6-10: finite-element sweep on the reference disks
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class ReferenceSweep:
    phi: BoundaryData
    lame: LameConstants
    points: tuple
    solutions: tuple


@lru_cache(maxsize=4)
def reference_sweep(eps_list: tuple = REFERENCE_SWEEP, n_layers: int = 8, angular_res: float = 1.0,
                    R: float = REFERENCE_R) -> ReferenceSweep:
    """E1 (eta = 1, k = 2) data on the reference disks, lambda = mu = 1."""
    lame = LameConstants(1.0, 1.0)
    phi = make_family("E1", 1.0, 2, 2).with_cutoff(R)
    pts, sols = sweep(phi, eps_list, lame, keep=True, n_layers=n_layers, angular_res=angular_res)
    return ReferenceSweep(phi, lame, tuple(pts), tuple(sols))


def criterion_6(sw: ReferenceSweep | None = None) -> CriterionResult:
    t = time.perf_counter()
    sw = sw or reference_sweep()
    out, ok = {}, True
    for alpha in (1, 2):
        samples = [(p.eps, p.factors.a[alpha - 1, alpha - 1]) for p in sw.points]
        fit = fit_geometry_constants(samples, 2, sw.lame, (1.0,), alpha=alpha)
        out[f"c{alpha}"] = fit.leading_coef
        out[f"c{alpha}_expected"] = fit.expected_coef
        out[f"c{alpha}_rel_err"] = fit.relative_coef_error
        ok &= fit.relative_coef_error <= 0.10
    return CriterionResult(6, "diagonal energy leading coefficient", bool(ok), out, time.perf_counter() - t)


def criterion_7(sw: ReferenceSweep | None = None) -> CriterionResult:
    sw = sw or reference_sweep()
    L = lame_rate_constant(2, 1, sw.lame)
    ratios = np.array([p.factors.q[0] / (sw.phi.eta * L * rho(sw.phi.k, 2, 2, p.eps)) for p in sw.points])
    prof = disk_profile(sw.points[0].eps, R=REFERENCE_R)
    allowed = 4 * (prof.kappa2 / prof.kappa1) ** ((2 + sw.phi.k - 1) / 2)
    same_sign = bool(np.all(ratios > 0) or np.all(ratios < 0))
    spread = float(np.abs(ratios).max() / np.abs(ratios).min()) if same_sign else math.inf
    return CriterionResult(7, "flux functional bracket", same_sign and spread <= allowed, {
        "ratios": ratios, "spread": spread, "allowed": allowed})


def expansion_errors(sw: ReferenceSweep, eps_eval=EXPANSION_EPS):
    """Relative gradient error at (0, midgap) for the asymptotic formula."""
    starred = extrapolate_factors([p.factors for p in sw.points])
    k_star = tuple(
        fit_geometry_constants([(p.eps, p.factors.a[a - 1, a - 1]) for p in sw.points], 2, sw.lame, (1.0,),
                               alpha=a, fixed_coef=leading_coefficient(a, 2, sw.lame, (1.0,))).k_star
        for a in (1, 2)
    )
    errors = []
    for eps in eps_eval:
        p = next(pt for pt in sw.points if math.isclose(pt.eps, eps))
        cfg = ExpansionConfig(disk_profile(eps, R=REFERENCE_R), sw.lame, sw.phi, starred=starred, k_star=k_star)
        asym = grad_u_asymptotic(cfg, np.array([0.0, eps / 2])).gradient
        errors.append(float(np.linalg.norm(asym - p.grad_midgap) / np.linalg.norm(p.grad_midgap)))
    return np.array(errors), starred, k_star


def criterion_8(sw: ReferenceSweep | None = None) -> CriterionResult:
    sw = sw or reference_sweep()
    errors, starred, k_star = expansion_errors(sw)
    ok = bool(np.all(np.diff(errors) < 0) and errors[-1] <= 0.20)
    return CriterionResult(8, "asymptotic gradient at the midgap point", ok, {
        "eps": list(EXPANSION_EPS), "rel_errors": errors, "q_star": starred.q, "k_star": k_star})


def criterion_9(sw: ReferenceSweep | None = None) -> CriterionResult:
    sw = sw or reference_sweep()
    eps = np.array([p.eps for p in sw.points])
    g = np.array([np.linalg.norm(p.grad_midgap) for p in sw.points])
    s = _slope(eps, g)
    return CriterionResult(9, "blow-up exponent at the midgap point", abs(s + 0.5) <= 0.1, {
        "slope": s, "target": -0.5})


def gap_grid(profile, R: float, nx: int = 41, nt: int = 7) -> np.ndarray:
    xs = np.linspace(-R, R, nx)
    ts = np.linspace(0.05, 0.95, nt)
    X, T = np.meshgrid(xs, ts)
    X, T = X.ravel(), T.ravel()
    pts = profile.bottom(X[:, None])
    pts[:, 1] += T * profile.delta(X[:, None])
    return pts


def remainder_ratios(sw: ReferenceSweep) -> np.ndarray:
    out = []
    for p, sol in zip(sw.points, sw.solutions):
        prof = disk_profile(p.eps, R=REFERENCE_R)
        pts = gap_grid(prof, REFERENCE_R)
        diff = sol.u0_gradient(pts) - AuxField.u_bar(0, prof, sw.lame, sw.phi).gradient(pts)
        num = np.sqrt(np.einsum("nij,nij->n", diff, diff)).max()
        env = remainder_envelope(None, sw.phi, prof, pts[:, :1]).max()
        out.append(num / env)
    return np.array(out)


def criterion_10(sw: ReferenceSweep | None = None) -> CriterionResult:
    sw = sw or reference_sweep()
    ratios = remainder_ratios(sw)
    eps = np.array([p.eps for p in sw.points])
    s = _slope(eps, ratios)
    return CriterionResult(10, "boundary-data remainder stays bounded", abs(s) <= 0.15, {
        "ratios": ratios, "slope": s})


# ---------------------------------------------------------------------------
# 11: auxiliary fields and FEM patch tests
# ---------------------------------------------------------------------------


def _fd_gradient(fn, x, h):
    d = len(x)
    cols = []
    for j in range(d):
        e = np.zeros(d)
        e[j] = h
        cols.append((fn(x + e) - fn(x - e)) / (2 * h))
    return np.stack(cols, axis=-1)


def criterion_11() -> CriterionResult:
    rng = np.random.default_rng(7)
    lame = LameConstants(1.3, 0.7)
    worst_fd, worst_bc = 0.0, 0.0
    configs = [(disk_profile(1e-2), 2), (power_profile(2, 4, 1e-2, R=0.5), 2), (power_profile(3, 2, 1e-2, R=0.5), 3)]
    for prof, d in configs:
        phi = make_family("E1", 1.0, 2, d).with_cutoff(prof.R)
        fields = [AuxField.u_bar(a, prof, lame) for a in range(1, d * (d + 1) // 2 + 1)]
        fields.append(AuxField.u_bar(0, prof, lame, phi))
        fields.append(AuxField.leading(rigid_basis(d, 1), phi, prof, lame))
        per = max(1, 100 // len(fields))
        for fld in fields:
            for _ in range(per):
                xp = rng.uniform(-prof.R, prof.R, d - 1) / math.sqrt(d - 1)
                t = rng.uniform(0.05, 0.95)
                x = np.append(xp, prof.bottom(xp)[-1] + t * prof.delta(xp))
                h = 1e-5 * float(prof.delta(xp))
                g = fld.gradient(x)
                fd = _fd_gradient(fld.value, x, h)
                worst_fd = max(worst_fd, np.linalg.norm(fd - g) / max(np.linalg.norm(g), 1e-300))
                # v_bar gradient as well
                vg = vbar(prof, x)[1]
                vfd = _fd_gradient(lambda y: np.atleast_1d(vbar(prof, y)[0]), x, h)[0]
                worst_fd = max(worst_fd, np.linalg.norm(vfd - vg) / np.linalg.norm(vg))
            xp = rng.uniform(-prof.R, prof.R, d - 1) / math.sqrt(d - 1)
            bot, top = prof.bottom(xp), prof.top(xp)
            if fld.kind == "u_bar_alpha":
                want_top, want_bot = rigid_basis(d, fld.alpha)(top[None])[0], np.zeros(d)
            elif fld.kind == "u_bar_0":
                want_top, want_bot = np.zeros(d), phi.trace(xp[None])[0][0]
            else:
                want_top, want_bot = rigid_basis(d, 1)(top[None])[0], phi.trace(xp[None])[0][0]
            worst_bc = max(worst_bc, np.abs(fld.value(top) - want_top).max(), np.abs(fld.value(bot) - want_bot).max())
    _, mesh = build_reference_domain(1e-2, n_layers=6)
    A = np.array([[0.3, -0.1], [-0.1, 0.2]])
    lin = solve_lame(mesh, lame, lambda x: x @ A.T, lambda x: x @ A.T)
    patch = np.abs(lin.displacement - mesh.nodes @ A.T).max()
    psi = rigid_basis(2, 3)
    rig = solve_lame(mesh, lame, psi, psi)
    patch = max(patch, np.abs(rig.displacement - psi(mesh.nodes)).max())
    ok = worst_fd <= 1e-6 and worst_bc <= 1e-12 and patch <= 1e-10
    return CriterionResult(11, "auxiliary fields and FEM patch tests", bool(ok), {
        "worst_fd_rel": worst_fd, "worst_boundary": worst_bc, "patch": patch})


CRITERIA = {
    1: criterion_1, 2: criterion_2, 3: criterion_3, 4: criterion_4, 5: criterion_5, 6: criterion_6,
    7: criterion_7, 8: criterion_8, 9: criterion_9, 10: criterion_10, 11: criterion_11,
}
SUITES = {"quick": (1, 2, 3, 4, 5), "oracle": (6, 7, 8, 9, 10), "full": tuple(range(1, 12))}


def run_criterion(number: int) -> CriterionResult:
    t = time.perf_counter()
    res = CRITERIA[number]()
    res.seconds = time.perf_counter() - t
    return res


def run_suite(name: str) -> list[CriterionResult]:
    return [run_criterion(n) for n in SUITES[name]]
