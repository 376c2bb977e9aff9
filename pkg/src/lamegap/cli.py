"""Command-line entry point: ``lamegap <subcommand> [options]``.

Subcommands and their CSV columns:

  rates    statement,family,d,m,k,case,side,location,exponent,log_power,prefactor_expr,prefactor,note
  quad     kind,eps,value,abs_error,n_evals,ring_depth
  factors  eps,n_nodes,min_angle,a_ij (upper triangle),q_i,X_i,condition; a final row eps=limit
           holds the extrapolated limit
  expand   eps,x1,x2,grad_asym (row major),grad_oracle,rel_error,uncertainty,C_i
  bounds   statement,eps,side,location,exponent,log_power,value,resolved
  verify   criterion,passed,title,measured
  sweep    eps,n_nodes,n_elements,min_angle,a_ii,q_i,X_i,grad_norm_midgap

Exit codes: 0 success, 1 configuration error, 2 case not covered,
3 numerical failure, 4 acceptance failure (verify only).
"""

from __future__ import annotations

import argparse
import copy
import csv
import hashlib
import io
import json
import os
import platform
import sys
from pathlib import Path

import numpy as np
import scipy
import yaml

from . import __version__
from .auxiliary_fields import LameConstants
from .blowup_rates import rate_table
from .boundary_data import make_family
from .elasticity_oracle import sweep as oracle_sweep
from .errors import ConfigError, LameGapError
from .expansion import ExpansionConfig, grad_u_asymptotic
from .factor_system import (
    FactorData,
    extrapolate_factors,
    fit_geometry_constants,
    free_constants,
    leading_coefficient,
)
from .gap_quadrature import (
    closed_form_convex_2d,
    closed_form_convex_3d,
    energy_leading,
    moment_integral,
    q_leading,
)
from .geometry import disk_profile, power_profile, quadratic_profile, validate_conditions

__all__ = ["DEFAULT_CONFIG", "load_config", "apply_override", "main"]

CSV_SCHEMA = 1
OUT_ENV = "LAMEGAP_OUT"

DEFAULT_CONFIG = {
    "geometry": {"kind": "power", "d": 2, "m": 2, "coef": 1.0, "tau": [1.0], "R": 1.0, "r1": 0.5, "r0": 1.0},
    "material": {"lam": 1.0, "mu": 1.0, "kappa5": None},
    "boundary": {"family": "E1", "eta": 1.0, "k": 2, "cutoff": None},
    "execution": {
        "eps": 1.0e-4,
        "eps_list": None,
        "sweep_eps": [4.0e-2, 2.0e-2, 1.0e-2, 5.0e-3, 2.5e-3],
        "tol_abs": 1.0e-10,
        "tol_rel": 1.0e-8,
        "n_layers": 8,
        "angular_res": 1.0,
        "threads": 1,
        "seed": 0,
        "out": None,
    },
    "rates": {"statement": "segment", "case": None, "radius": 0.0, "r": 0.0},
    "quad": {"kind": "moment", "k": 0, "alpha": 1},
    "factors": {"a": None, "q": None, "k_star": None},
    "bounds": {"statement": "segment", "sigma": None},
    "verify": {"suite": "quick"},
}


# ---------------------------------------------------------------------------
# Configuration
# ---------------------------------------------------------------------------


def _numeric(val):
    # YAML 1.1 reads exponent floats without a dot (1e-4) as strings
    if isinstance(val, list):
        return [_numeric(v) for v in val]
    if isinstance(val, str):
        try:
            return float(val)
        except ValueError:
            return val
    return val


def _merge(base: dict, new: dict, path: str = "") -> dict:
    out = copy.deepcopy(base)
    for key, val in new.items():
        where = f"{path}{key}"
        if key not in out:
            raise ConfigError(f"unknown config key {where!r}")
        if isinstance(out[key], dict):
            if not isinstance(val, dict):
                raise ConfigError(f"config key {where!r} must be a mapping")
            out[key] = _merge(out[key], val, where + ".")
        else:
            out[key] = _numeric(val)
    return out


def load_config(path: str | None) -> dict:
    if path is None:
        return copy.deepcopy(DEFAULT_CONFIG)
    try:
        data = yaml.safe_load(Path(path).read_text()) or {}
    except (OSError, yaml.YAMLError) as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    if not isinstance(data, dict):
        raise ConfigError("config root must be a mapping")
    return _merge(DEFAULT_CONFIG, data)


def apply_override(cfg: dict, assignment: str) -> None:
    """``section.key=value`` with the value parsed as YAML."""
    if "=" not in assignment:
        raise ConfigError(f"override {assignment!r} must look like section.key=value")
    path, raw = assignment.split("=", 1)
    keys = path.strip().split(".")
    node = cfg
    for key in keys[:-1]:
        if not isinstance(node.get(key), dict):
            raise ConfigError(f"unknown config key {path!r}")
        node = node[key]
    if keys[-1] not in node or isinstance(node[keys[-1]], dict):
        raise ConfigError(f"unknown config key {path!r}")
    try:
        node[keys[-1]] = _numeric(yaml.safe_load(raw))
    except yaml.YAMLError as exc:
        raise ConfigError(f"cannot parse value for {path!r}: {exc}") from exc


def _number(cfg, section, key, kind=float):
    val = cfg[section][key]
    try:
        return kind(val)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"{section}.{key} must be a number, got {val!r}") from exc


def _lame(cfg) -> LameConstants:
    mat = cfg["material"]
    try:
        lame = LameConstants(_number(cfg, "material", "lam"), _number(cfg, "material", "mu"),
                             None if mat["kappa5"] is None else _number(cfg, "material", "kappa5"))
        lame.ellipticity(_number(cfg, "geometry", "d", int))
    except LameGapError as exc:
        raise ConfigError(f"material: {exc}") from exc
    return lame


def _profile(cfg, eps: float):
    g = cfg["geometry"]
    kind = g["kind"]
    d = _number(cfg, "geometry", "d", int)
    try:
        if kind == "power":
            prof = power_profile(d, _number(cfg, "geometry", "m", int), eps, R=_number(cfg, "geometry", "R"),
                                 coef=_number(cfg, "geometry", "coef"))
        elif kind == "quadratic":
            tau = [float(t) for t in g["tau"]]
            if len(tau) != d - 1:
                raise ConfigError("geometry.tau needs d - 1 entries")
            prof = quadratic_profile(tau, eps, R=_number(cfg, "geometry", "R"))
        elif kind == "disks":
            R = g["R"] if g["R"] is not None and float(g["R"]) < float(g["r1"]) / 2 else None
            prof = disk_profile(eps, r1=float(g["r1"]), r0=float(g["r0"]), d=d, R=R)
        else:
            raise ConfigError(f"geometry.kind must be power, quadratic or disks, got {kind!r}")
    except ConfigError:
        raise
    except LameGapError as exc:
        raise ConfigError(f"geometry: {exc}") from exc
    report = validate_conditions(prof, n_samples=16)
    if not report.passed:
        names = ", ".join(r.name for r in report.failures())
        raise ConfigError(f"geometry: profile violates {names}")
    return prof


def _phi(cfg, d: int, cutoff: float | None = None):
    b = cfg["boundary"]
    try:
        phi = make_family(str(b["family"]), _number(cfg, "boundary", "eta"), _number(cfg, "boundary", "k", int), d)
    except LameGapError as exc:
        raise ConfigError(f"boundary: {exc}") from exc
    radius = b["cutoff"] if b["cutoff"] is not None else cutoff
    return phi.with_cutoff(float(radius)) if radius is not None else phi


def _eps_values(cfg) -> list[float]:
    ex = cfg["execution"]
    vals = ex["eps_list"] if ex["eps_list"] is not None else [ex["eps"]]
    try:
        out = [float(v) for v in vals]
    except (TypeError, ValueError) as exc:
        raise ConfigError("execution.eps / eps_list must be numbers") from exc
    if any(not 0 < v < 1 for v in out):
        raise ConfigError("execution.eps values must lie in (0, 1)")
    return out


def _sweep_eps(cfg) -> list[float]:
    ex = cfg["execution"]
    vals = ex["eps_list"] if ex["eps_list"] is not None else ex["sweep_eps"]
    return [float(v) for v in vals]


def _quad_kw(cfg):
    return {"tol_abs": _number(cfg, "execution", "tol_abs"), "tol_rel": _number(cfg, "execution", "tol_rel")}


def _mesh_kw(cfg):
    g = cfg["geometry"]
    return {"r1": float(g["r1"]), "r0": float(g["r0"]), "n_layers": _number(cfg, "execution", "n_layers", int),
            "angular_res": _number(cfg, "execution", "angular_res")}


def _starred_from_config(cfg, d: int):
    f = cfg["factors"]
    if f["a"] is None or f["q"] is None:
        return None
    try:
        return FactorData(d, np.array(f["a"], dtype=float), np.array(f["q"], dtype=float), provenance="config")
    except LameGapError as exc:
        raise ConfigError(f"factors: {exc}") from exc


# ---------------------------------------------------------------------------
# Subcommands; each returns (header, rows, exit_status)
# ---------------------------------------------------------------------------


def _kappas(prof):
    k1 = prof.kappa1 if prof.kappa1 is not None else 1.0
    k2 = prof.kappa2 if prof.kappa2 is not None else 1.0
    return float(k1), float(k2)


def cmd_rates(cfg):
    g, b, r = cfg["geometry"], cfg["boundary"], cfg["rates"]
    d, m, k = int(g["d"]), int(g["m"]), int(b["k"])
    prof = _profile(cfg, _eps_values(cfg)[0])
    k1, k2 = _kappas(prof)
    certs = rate_table(r["statement"], b["family"], d, m, k, float(b["eta"]), k1, k2, _lame(cfg),
                       _starred_from_config(cfg, d), float(r["radius"]), float(r["r"]), r["case"])
    header = ["statement", "family", "d", "m", "k", "case", "side", "location", "exponent", "log_power",
              "prefactor_expr", "prefactor", "note"]
    rows = [[r["statement"], b["family"], d, m, k, c.case, c.side, c.location, str(c.exponent), c.log_power,
             c.prefactor_expr, "" if c.prefactor is None else c.prefactor, c.note] for c in certs]
    return header, rows, 0


def cmd_quad(cfg):
    q = cfg["quad"]
    kind = q["kind"]
    rows = []
    lame = _lame(cfg)
    for eps in _eps_values(cfg):
        prof = _profile(cfg, eps)
        if kind == "moment":
            res = moment_integral(prof, int(q["k"]), **_quad_kw(cfg))
        elif kind == "energy":
            res = energy_leading(int(q["alpha"]), prof, lame, **_quad_kw(cfg))
        elif kind == "q":
            res = q_leading(int(q["alpha"]), _phi(cfg, prof.d, prof.R), prof, lame, **_quad_kw(cfg))
        elif kind in ("closed2d", "closed3d"):
            tau = prof.curvatures()
            val = (closed_form_convex_2d(tau[0], prof.R, eps) if kind == "closed2d"
                   else closed_form_convex_3d(tau[0], tau[1], prof.R, eps))
            rows.append([kind, eps, val, 0.0, 0, 0])
            continue
        else:
            raise ConfigError(f"quad.kind must be moment, energy, q, closed2d or closed3d, got {kind!r}")
        rows.append([kind, eps, res.value, res.abs_error_estimate, res.n_evals, res.ring_depth])
    return ["kind", "eps", "value", "abs_error", "n_evals", "ring_depth"], rows, 0


def _oracle_sweep(cfg, eps_list, keep=False):
    lame = _lame(cfg)
    if int(cfg["geometry"]["d"]) != 2:
        raise ConfigError("the finite-element oracle is two-dimensional (geometry.d = 2)")
    R = disk_profile(eps_list[0], float(cfg["geometry"]["r1"]), float(cfg["geometry"]["r0"])).R
    phi = _phi(cfg, 2, R)
    out = oracle_sweep(phi, eps_list, lame, keep=keep, threads=_number(cfg, "execution", "threads", int),
                       **_mesh_kw(cfg))
    return phi, lame, out


def _upper(a):
    n = len(a)
    return [a[i][j] for i in range(n) for j in range(i, n)]


def cmd_factors(cfg):
    _, _, pts = _oracle_sweep(cfg, _sweep_eps(cfg))
    n = 3
    header = (["eps", "n_nodes", "min_angle"] + [f"a{i + 1}{j + 1}" for i in range(n) for j in range(i, n)]
              + [f"q{i + 1}" for i in range(n)] + [f"X{i + 1}" for i in range(n)] + ["condition"])
    rows = []
    for p in pts:
        _, diag = free_constants(p.factors)
        rows.append([p.eps, p.n_nodes, p.min_angle] + _upper(p.factors.a.tolist()) + p.factors.q.tolist()
                    + p.constants.tolist() + [diag.condition])
    if len(pts) >= 3:
        lim = extrapolate_factors([p.factors for p in pts])
        rows.append(["limit", "", ""] + _upper(lim.a.tolist()) + lim.q.tolist() + [""] * n + [""])
    return header, rows, 0


def _k_star(pts, lame):
    return tuple(
        fit_geometry_constants([(p.eps, p.factors.a[a - 1, a - 1]) for p in pts], 2, lame, (1.0,), alpha=a,
                               fixed_coef=leading_coefficient(a, 2, lame, (1.0,))).k_star
        for a in (1, 2)
    )


def cmd_expand(cfg):
    d = int(cfg["geometry"]["d"])
    starred = _starred_from_config(cfg, d)
    header = (["eps", "x1", "x2"] + [f"asym_{i}{j}" for i in (1, 2) for j in (1, 2)]
              + [f"oracle_{i}{j}" for i in (1, 2) for j in (1, 2)] + ["rel_error", "uncertainty", "C1", "C2", "C3"])
    rows = []
    if starred is not None:
        lame = _lame(cfg)
        ks = cfg["factors"]["k_star"]
        for eps in _eps_values(cfg):
            prof = _profile(cfg, eps)
            ec = ExpansionConfig(prof, lame, _phi(cfg, d, prof.R), starred=starred,
                                 k_star=None if ks is None else tuple(float(v) for v in ks))
            x = np.array([0.0] * (d - 1) + [eps / 2])
            ag = grad_u_asymptotic(ec, x)
            rows.append([eps, *x[:2]] + ag.gradient.ravel()[:4].tolist() + [""] * 4 + ["", ag.uncertainty]
                        + ag.coefficients.tolist()[:3])
        return header, rows, 0
    phi, lame, pts = _oracle_sweep(cfg, _sweep_eps(cfg))
    starred = extrapolate_factors([p.factors for p in pts])
    ks = _k_star(pts, lame)
    g = cfg["geometry"]
    for p in pts:
        prof = disk_profile(p.eps, float(g["r1"]), float(g["r0"]))
        x = np.array([0.0, p.eps / 2])
        ag = grad_u_asymptotic(ExpansionConfig(prof, lame, phi, starred=starred, k_star=ks), x)
        err = float(np.linalg.norm(ag.gradient - p.grad_midgap) / np.linalg.norm(p.grad_midgap))
        rows.append([p.eps, *x] + ag.gradient.ravel().tolist() + p.grad_midgap.ravel().tolist()
                    + [err, ag.uncertainty] + ag.coefficients.tolist())
    return header, rows, 0


def cmd_bounds(cfg):
    g, b, bo = cfg["geometry"], cfg["boundary"], cfg["bounds"]
    d, m, k = int(g["d"]), int(g["m"]), int(b["k"])
    prof = _profile(cfg, _eps_values(cfg)[0])
    k1, k2 = _kappas(prof)
    statement = bo["statement"]
    rows = []
    for eps in _eps_values(cfg):
        radius = eps ** (1 / m)
        r_flat = float(cfg["rates"]["r"])
        certs = rate_table(statement, b["family"], d, m, k, float(b["eta"]), k1, k2, _lame(cfg),
                           _starred_from_config(cfg, d), radius, r_flat, cfg["rates"]["case"])
        for c in certs:
            rows.append([statement, eps, c.side, c.location, str(c.exponent), c.log_power,
                         float(c.evaluate(eps)), c.resolved])
    return ["statement", "eps", "side", "location", "exponent", "log_power", "value", "resolved"], rows, 0


def cmd_verify(cfg):
    from .verification import SUITES, run_criterion

    suite = cfg["verify"]["suite"]
    if suite not in SUITES:
        raise ConfigError(f"verify.suite must be one of {sorted(SUITES)}, got {suite!r}")
    rows, failed = [], False
    for n in SUITES[suite]:
        res = run_criterion(n)
        print(res.line(), file=sys.stderr, flush=True)
        failed |= not res.passed
        measured = {k: (np.asarray(v).tolist() if isinstance(v, (np.ndarray, tuple, list)) else
                        (float(v) if isinstance(v, (np.floating, float)) else v)) for k, v in res.measured.items()}
        measured.pop("seconds", None)
        measured.pop("max_seconds", None)
        rows.append([n, res.passed, res.title, json.dumps(measured, sort_keys=True)])
    return ["criterion", "passed", "title", "measured"], rows, 4 if failed else 0


def cmd_sweep(cfg):
    _, _, pts = _oracle_sweep(cfg, _sweep_eps(cfg))
    header = ["eps", "n_nodes", "n_elements", "min_angle", "a11", "a22", "a33", "q1", "q2", "q3",
              "X1", "X2", "X3", "grad_norm_midgap"]
    rows = []
    for p in pts:
        rows.append([p.eps, p.n_nodes, p.n_elements, p.min_angle] + np.diag(p.factors.a).tolist() + p.factors.q.tolist() + p.constants.tolist()
                    + [float(np.linalg.norm(p.grad_midgap))])
    return header, rows, 0


COMMANDS = {
    "rates": cmd_rates, "quad": cmd_quad, "factors": cmd_factors, "expand": cmd_expand,
    "bounds": cmd_bounds, "verify": cmd_verify, "sweep": cmd_sweep,
}


# ---------------------------------------------------------------------------
# Output
# ---------------------------------------------------------------------------


def _cell(v):
    if isinstance(v, (bool, np.bool_)):
        return "true" if v else "false"
    if isinstance(v, (float, np.floating)):
        return repr(float(v))
    return str(v)


def render_csv(subcommand: str, header, rows) -> str:
    buf = io.StringIO()
    buf.write(f"# lamegap-csv schema={CSV_SCHEMA} subcommand={subcommand}\n")
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    for row in rows:
        w.writerow([_cell(v) for v in row])
    return buf.getvalue()


def config_hash(cfg: dict) -> str:
    return hashlib.sha256(json.dumps(cfg, sort_keys=True, default=str).encode()).hexdigest()


def manifest(subcommand: str, cfg: dict, csv_name: str, status: int) -> dict:
    return {
        "schema": CSV_SCHEMA,
        "subcommand": subcommand,
        "config_sha256": config_hash(cfg),
        "config": cfg,
        "csv": csv_name,
        "exit_status": status,
        "versions": {"lamegap": __version__, "numpy": np.__version__, "scipy": scipy.__version__,
                     "python": platform.python_version()},
        "tolerances": {"tol_abs": cfg["execution"]["tol_abs"], "tol_rel": cfg["execution"]["tol_rel"]},
    }


# ---------------------------------------------------------------------------
# Argument parsing
# ---------------------------------------------------------------------------


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise ConfigError(message)


def _eps_list(text: str):
    try:
        return [float(v) for v in text.split(",") if v.strip()]
    except ValueError as exc:
        raise ConfigError(f"--eps-list must be comma separated numbers: {text!r}") from exc


def build_parser() -> argparse.ArgumentParser:
    common = _Parser(add_help=False)
    common.add_argument("--config", help="YAML configuration file")
    common.add_argument("--eps", type=float, help="gap width (execution.eps)")
    common.add_argument("--eps-list", help="comma separated eps values (execution.eps_list)")
    common.add_argument("--out", help=f"output directory for CSV and manifest (or ${OUT_ENV}); stdout if unset")
    common.add_argument("--tol", type=float, help="relative quadrature tolerance (execution.tol_rel)")
    common.add_argument("--threads", type=int, help="worker threads for eps sweeps (execution.threads)")
    common.add_argument("--set", action="append", default=[], metavar="KEY=VALUE",
                        help="override any config key, e.g. --set geometry.m=4")
    physical = _Parser(add_help=False)
    physical.add_argument("--family", choices=["E1", "E2", "E3"])
    physical.add_argument("--d", type=int)
    physical.add_argument("--m", type=int)
    physical.add_argument("--k", type=int)
    physical.add_argument("--eta", type=float)

    parser = _Parser(prog="lamegap", description=__doc__, formatter_class=argparse.RawDescriptionHelpFormatter)
    parser.add_argument("--version", action="version", version=f"lamegap {__version__}")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)
    p = sub.add_parser("rates", parents=[common, physical], help="blow-up rate certificates")
    p.add_argument("--statement", choices=["segment", "cylinder", "field", "flat"])
    p = sub.add_parser("quad", parents=[common, physical], help="gap integrals")
    p.add_argument("--kind", choices=["moment", "energy", "q", "closed2d", "closed3d"])
    p.add_argument("--alpha", type=int)
    sub.add_parser("factors", parents=[common, physical], help="oracle factor data over an eps sweep")
    sub.add_parser("expand", parents=[common, physical], help="asymptotic gradient vs the oracle")
    p = sub.add_parser("bounds", parents=[common, physical], help="evaluate rate certificates at eps values")
    p.add_argument("--statement", choices=["segment", "cylinder", "field", "flat"])
    p = sub.add_parser("verify", parents=[common], help="acceptance checks")
    p.add_argument("--suite", choices=["quick", "oracle", "full"])
    sub.add_parser("sweep", parents=[common, physical], help="oracle eps sweep summary")
    return parser


def resolve_config(args) -> dict:
    cfg = load_config(args.config)
    shortcuts = {
        "eps": ("execution", "eps"), "tol": ("execution", "tol_rel"), "threads": ("execution", "threads"),
        "family": ("boundary", "family"), "d": ("geometry", "d"), "m": ("geometry", "m"),
        "eta": ("boundary", "eta"), "kind": ("quad", "kind"),
        "alpha": ("quad", "alpha"), "suite": ("verify", "suite"),
    }
    for name, (section, key) in shortcuts.items():
        val = getattr(args, name, None)
        if val is not None:
            cfg[section][key] = val
    if getattr(args, "k", None) is not None:
        # moment order for quad, data growth exponent elsewhere
        cfg["quad" if args.command == "quad" else "boundary"]["k"] = args.k
    if getattr(args, "statement", None) is not None:
        cfg["rates" if args.command == "rates" else "bounds"]["statement"] = args.statement
    if args.eps_list is not None:
        cfg["execution"]["eps_list"] = _eps_list(args.eps_list)
    if args.out is not None:
        cfg["execution"]["out"] = args.out
    for assignment in args.set:
        apply_override(cfg, assignment)
    return cfg


def main(argv=None) -> int:
    try:
        args = build_parser().parse_args(argv)
        cfg = resolve_config(args)
        header, rows, status = COMMANDS[args.command](cfg)
    except LameGapError as exc:
        print(f"lamegap: {type(exc).__name__}: {exc}", file=sys.stderr)
        return exc.exit_code
    text = render_csv(args.command, header, rows)
    out = cfg["execution"]["out"] or os.environ.get(OUT_ENV)
    if out:
        folder = Path(out)
        folder.mkdir(parents=True, exist_ok=True)
        name = f"{args.command}.csv"
        (folder / name).write_text(text)
        # the output location does not belong to the reproducible configuration
        recorded = copy.deepcopy(cfg)
        recorded["execution"]["out"] = None
        info = manifest(args.command, recorded, name, status)
        (folder / f"{args.command}.manifest.json").write_text(json.dumps(info, indent=2, sort_keys=True) + "\n")
    else:
        sys.stdout.write(text)
    return status


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
