"""Closed-form blow-up rates, envelope constants and rate certificates.

A rate is carried as ``eps**exponent * |ln eps|**log_power`` with an exact
rational exponent, so certificates can be compared symbolically and
evaluated numerically.  Universal constants hidden in the estimates are set
to one.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Callable

import numpy as np

from .auxiliary_fields import LameConstants, lame_rate_constant
from .boundary_data import basis_size
from .errors import CaseNotCovered, DomainError, MissingFactorData
from .factor_system import FactorData, det_ratio

__all__ = [
    "Rate",
    "rho_rate",
    "rho",
    "rho_selectors",
    "envelope_constants",
    "envelope_constant_a",
    "envelope_constant_b",
    "flat_gap_factor",
    "RateCertificate",
    "rate_table",
    "segment_certificates",
    "cylinder_certificates",
    "field_certificate",
    "flat_certificates",
    "PARITY_OF_FAMILY",
]

PARITY_OF_FAMILY = {"E1": "A1", "E2": "A2", "E3": "A3"}
SEGMENT = "segment x'=0"
CYLINDER = "cylinder |x'|=eps^(1/m)"
FIELD = "field point"
FLAT = "flat edge x'=(r,0,...,0)"


@dataclass(frozen=True)
class Rate:
    """eps**exponent * |ln eps|**log_power."""

    exponent: Fraction = Fraction(0)
    log_power: int = 0

    def __mul__(self, other: "Rate") -> "Rate":
        return Rate(self.exponent + other.exponent, self.log_power + other.log_power)

    def __truediv__(self, other: "Rate") -> "Rate":
        return Rate(self.exponent - other.exponent, self.log_power - other.log_power)

    def __call__(self, eps):
        eps = np.asarray(eps, dtype=float)
        out = eps ** float(self.exponent) * np.abs(np.log(eps)) ** self.log_power
        return float(out) if out.ndim == 0 else out

    def describe(self) -> str:
        parts = []
        if self.exponent != 0:
            parts.append(f"eps^({self.exponent})")
        if self.log_power != 0:
            parts.append(f"|ln eps|^({self.log_power})")
        return "*".join(parts) or "1"


def _check_dm(d: int, m: int):
    if d < 2 or int(d) != d:
        raise DomainError("d must be an integer >= 2")
    if m < 2 or int(m) != m:
        raise DomainError("m must be an integer >= 2")


def rho_rate(i: int, d: int, m: int) -> Rate:
    """Symbolic form of rho_i(d, m; eps)."""
    _check_dm(d, m)
    threshold = d + i - 1
    if m > threshold:
        return Rate(Fraction(threshold, m) - 1)
    if m == threshold:
        return Rate(Fraction(0), 1)
    return Rate()


def rho(i: int, d: int, m: int, eps):
    """eps^((d+i-1)/m - 1) if m > d+i-1; |ln eps| if m = d+i-1; 1 otherwise."""
    eps_arr = np.asarray(eps, dtype=float)
    if np.any((eps_arr <= 0) | (eps_arr >= 1)):
        raise DomainError("eps must lie in (0, 1)")
    return rho_rate(i, d, m)(eps)


def _selector_rates(case: str, d: int, m: int, k: int) -> tuple[Rate, Rate]:
    if case not in ("A1", "A2", "A3"):
        raise DomainError(f"unknown parity case {case!r}")
    r0, r2 = rho_rate(0, d, m), rho_rate(2, d, m)
    rate_a = rho_rate(k, d, m) / r0 if case == "A1" else Rate() / r0
    rate_b = rho_rate(k + 1, d, m) / r2 if case == "A2" else Rate() / r2
    return rate_a, rate_b


def rho_selectors(case: str, d: int, m: int, k: int, eps):
    """(rho_A, rho_B): rho_k/rho_0 under A1 else 1/rho_0; rho_{k+1}/rho_2 under A2 else 1/rho_2."""
    rate_a, rate_b = _selector_rates(case, d, m, k)
    return rate_a(eps), rate_b(eps)


# ---------------------------------------------------------------------------
# Envelope constants
# ---------------------------------------------------------------------------


def _need(factors: FactorData | None, what: str) -> FactorData:
    if factors is None:
        raise MissingFactorData(f"limiting factor data are required for {what}")
    return factors


def _max_q_over_l(factors, lame, d, alphas, power) -> float:
    return max(power * abs(factors.q[a - 1]) / lame_rate_constant(d, a, lame) for a in alphas)


def _check_case(case: str, d: int, m: int):
    _check_dm(d, m)
    if case not in ("A1", "A2", "A3"):
        raise DomainError(f"unknown parity case {case!r}")


def envelope_constant_a(case: str, d: int, m: int, k: int, kappa1: float, kappa2: float, eta: float,
                        lame: LameConstants, factors: FactorData | None = None) -> float:
    """H_A*: five branches in m, the first one only under A1."""
    _check_case(case, d, m)
    trans = range(1, d + 1)
    if m >= d + k - 1 and case == "A1":
        return eta * kappa2 ** ((d - 1) / m) * kappa1 ** (-(d + k - 1) / m)
    if m >= d + 1:
        f = _need(factors, "H_A* with Q* entries")
        return _max_q_over_l(f, lame, d, trans, kappa2 ** ((d - 1) / m))
    if m >= d - 1:
        f = _need(factors, "H_A* with det F1*")
        return max(kappa2 ** ((d - 1) / m) * abs(det_ratio(f, "F1", a)) / lame_rate_constant(d, a, lame)
                   for a in trans)
    f = _need(factors, "H_A* with det F3*")
    return max(abs(det_ratio(f, "F3", a)) for a in trans)


def envelope_constant_b(case: str, d: int, m: int, k: int, kappa1: float, kappa2: float, eta: float,
                        lame: LameConstants, factors: FactorData | None = None) -> float:
    """H_B*: five branches in m, the first one only under A2."""
    _check_case(case, d, m)
    rots = range(d + 1, basis_size(d) + 1)
    if m >= d + k and case == "A2":
        return eta * kappa2 ** ((d + 1) / m) * kappa1 ** (-(d + k) / m)
    if m >= d + 1:
        f = _need(factors, "H_B* with Q* entries")
        return _max_q_over_l(f, lame, d, rots, kappa2 ** ((d + 1) / m))
    if m >= d - 1:
        f = _need(factors, "H_B* with det F2*")
        return max(abs(det_ratio(f, "F2", a)) for a in rots)
    f = _need(factors, "H_B* with det F3*")
    return max(abs(det_ratio(f, "F3", a)) for a in rots)


def envelope_constants(case: str, d: int, m: int, k: int, kappa1: float, kappa2: float, eta: float,
                       lame: LameConstants, factors: FactorData | None = None):
    """(H_A*, H_B*) selected by the two five-branch tables."""
    args = (case, d, m, k, kappa1, kappa2, eta, lame, factors)
    return envelope_constant_a(*args), envelope_constant_b(*args)


def flat_gap_factor(i: int, j: int, d: int, m: int, eps: float, sigma: float,
                    kappa1: float = 1.0, kappa2: float = 1.0) -> float:
    """G_ij = s^((d+i-1)/(d-1)) + s^((d-2+i)/(d-1)) kappa_j^(-1/m) eps^(1/m) + kappa_j^(-(d-1+i)/m) eps rho_i."""
    if sigma < 0:
        raise DomainError("sigma must be nonnegative")
    if j not in (1, 2):
        raise DomainError("j must be 1 or 2")
    kj = kappa1 if j == 1 else kappa2
    t1 = sigma ** ((d + i - 1) / (d - 1))
    t2 = sigma ** ((d - 2 + i) / (d - 1)) * kj ** (-1 / m) * eps ** (1 / m) if sigma > 0 else 0.0
    t3 = kj ** (-(d - 1 + i) / m) * eps * rho(i, d, m, eps)
    return t1 + t2 + t3


# ---------------------------------------------------------------------------
# Certificates
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class RateCertificate:
    """One side of a rate statement.

    ``rate`` is the dominant eps-dependence; ``prefactor`` is the resolved
    constant or None (then evaluated as 1).  ``evaluator`` overrides the
    product form for certificates that are not a single power law.
    """

    case: str
    side: str
    location: str
    rate: Rate
    prefactor_expr: str
    prefactor: float | None = None
    note: str = ""
    evaluator: Callable[[float], float] | None = field(default=None, compare=False, repr=False)

    @property
    def exponent(self) -> Fraction:
        return self.rate.exponent

    @property
    def log_power(self) -> int:
        return self.rate.log_power

    @property
    def resolved(self) -> bool:
        return self.prefactor is not None

    def evaluate(self, eps):
        if self.evaluator is not None:
            return self.evaluator(eps)
        pre = 1.0 if self.prefactor is None else self.prefactor
        return pre * self.rate(eps)


def _family(family: str) -> str:
    if family not in PARITY_OF_FAMILY:
        raise DomainError(f"unknown family {family!r}")
    return family


def _validate_kappa(kappa1: float, kappa2: float):
    if not 0 < kappa1 <= kappa2:
        raise DomainError("need 0 < kappa1 <= kappa2")


def _frac(num: int, den: int) -> str:
    f = Fraction(num, den)
    return str(f)


def segment_certificates(family: str, d: int, m: int, k: int, eta: float = 1.0,
                         kappa1: float = 1.0, kappa2: float = 1.0,
                         lame: LameConstants | None = None,
                         factors: FactorData | None = None) -> tuple[RateCertificate, RateCertificate]:
    """(lower, upper) on the shortest segment x' = 0."""
    _family(family)
    _check_dm(d, m)
    _validate_kappa(kappa1, kappa2)
    lame = lame or LameConstants(1.0, 1.0)
    r0 = rho_rate(0, d, m)
    if m <= d:
        if m >= d - 1:
            label = "segment: d-1<=m<=d, F1 determinants"
            rate = Rate(Fraction(-1)) / r0
            up_expr = f"max_a kappa2^({_frac(d - 1, m)}) |det F1*^a| / (L^a det D*)"
            lo_expr = f"kappa1^({_frac(d - 1, m)}) |det F1*^a0| / (L^a0 det D*)"
            up = lo = None
            note = ""
            if factors is not None:
                vals = [abs(det_ratio(factors, "F1", a)) / lame_rate_constant(d, a, lame)
                        for a in range(1, d + 1)]
                up = kappa2 ** ((d - 1) / m) * max(vals)
                a0 = int(np.argmax(vals)) + 1
                if vals[a0 - 1] > 0:
                    lo = kappa1 ** ((d - 1) / m) * vals[a0 - 1]
                    note = f"alpha0={a0}"
                else:
                    note = "lower bound unavailable: all determinants vanish numerically"
        else:
            label = "segment: m<d-1, F3 determinants"
            rate = Rate(Fraction(-1))
            up_expr = "max_a |det F3*^a| / det F*"
            lo_expr = "|det F3*^a0| / det F*"
            up = lo = None
            note = ""
            if factors is not None:
                vals = [abs(det_ratio(factors, "F3", a)) for a in range(1, d + 1)]
                up = max(vals)
                a0 = int(np.argmax(vals)) + 1
                if vals[a0 - 1] > 0:
                    lo = vals[a0 - 1]
                    note = f"alpha0={a0}"
                else:
                    note = "lower bound unavailable: all determinants vanish numerically"
        return (RateCertificate(label, "lower", SEGMENT, rate, lo_expr, lo, note),
                RateCertificate(label, "upper", SEGMENT, rate, up_expr, up, note))
    if family == "E1" and m >= d + k:
        label = "segment: E1, m>=d+k"
        rate = rho_rate(k, d, m) / (Rate(Fraction(1)) * r0)
        lo = eta * kappa1 ** ((d - 1) / m) / kappa2 ** ((d + k - 1) / m)
        up = eta * kappa2 ** ((d - 1) / m) / kappa1 ** ((d + k - 1) / m)
        return (
            RateCertificate(label, "lower", SEGMENT, rate,
                            f"eta kappa1^({_frac(d - 1, m)}) kappa2^(-{_frac(d + k - 1, m)})", lo),
            RateCertificate(label, "upper", SEGMENT, rate,
                            f"eta kappa2^({_frac(d - 1, m)}) kappa1^(-{_frac(d + k - 1, m)})", up),
        )
    raise CaseNotCovered(f"case not covered by the segment estimates: {family}, d={d}, m={m}, k={k}")


def cylinder_certificates(family: str, d: int, m: int, k: int, eta: float = 1.0,
                          kappa1: float = 1.0, kappa2: float = 1.0,
                          lame: LameConstants | None = None,
                          factors: FactorData | None = None) -> tuple[RateCertificate, RateCertificate]:
    """(lower, upper) on the cylinder |x'| = eps^(1/m)."""
    _family(family)
    _check_dm(d, m)
    _validate_kappa(kappa1, kappa2)
    lame = lame or LameConstants(1.0, 1.0)
    n = basis_size(d)
    rots = range(d + 1, n + 1)
    r2 = rho_rate(2, d, m)
    cyl = Rate(Fraction(-1) + Fraction(1, m))  # eps^(1/m - 1)
    growth = Rate(Fraction(k, m) - 1)  # eps^(k/m - 1)
    simple_regime = (m > d + k and k != 2) or (m == d + k and k == 1)
    log_regime = m == d + k and k > 2
    pd1 = Fraction(d + 1, m)
    pdk = Fraction(d + k, m)

    if d < m < d + k and k > 1:
        # d < m < d+1 is empty for integer m, so only the Q* branch is reachable
        label = "cylinder: d+1<=m<d+k, rotational fluxes"
        rate = cyl / r2
        up = lo = None
        note = ""
        if factors is not None:
            up = max(abs(factors.q[a - 1]) / lame_rate_constant(d, a, lame) for a in rots)
            up *= kappa2 ** float(pd1) / (1 + kappa1)
            q1 = factors.q[d]
            if q1 != 0:
                lo = kappa2 ** float(pd1) * abs(q1) / ((1 + kappa2) * lame_rate_constant(d, d + 1, lame))
                note = f"Q*_{d + 1}={q1:.6g}"
            else:
                note = f"lower bound not certified: Q*_{d + 1} vanishes"
        return (
            RateCertificate(label, "lower", CYLINDER, rate,
                            f"kappa2^({pd1}) |Q*_{d + 1}| / ((1+kappa2) L^{d + 1})", lo, note),
            RateCertificate(label, "upper", CYLINDER, rate,
                            f"max_a>d |Q*_a| / L^a * kappa2^({pd1}) / (1+kappa1)", up, note),
        )
    if family == "E2" and simple_regime:
        label = "cylinder: E2, power regime"
        lo = eta * (kappa1 ** float(pd1) * kappa2 ** -float(pdk) + 1) / (1 + kappa2)
        up = eta * (kappa2 ** float(pd1) * kappa1 ** -float(pdk) + 1) / (1 + kappa1)
        return (
            RateCertificate(label, "lower", CYLINDER, growth,
                            f"eta (kappa1^({pd1}) kappa2^(-{pdk}) + 1) / (1+kappa2)", lo),
            RateCertificate(label, "upper", CYLINDER, growth,
                            f"eta (kappa2^({pd1}) kappa1^(-{pdk}) + 1) / (1+kappa1)", up),
        )
    if family == "E2" and log_regime:
        label = "cylinder: E2, m=d+k, k>2"
        rate = rho_rate(k + 1, d, m) * cyl / r2
        lo = eta * kappa1 ** float(pd1) / ((1 + kappa2) * kappa2 ** float(pdk))
        up = eta * kappa2 ** float(pd1) / ((1 + kappa1) * kappa1 ** float(pdk))
        return (
            RateCertificate(label, "lower", CYLINDER, rate,
                            f"eta kappa1^({pd1}) / ((1+kappa2) kappa2^({pdk}))", lo),
            RateCertificate(label, "upper", CYLINDER, rate,
                            f"eta kappa2^({pd1}) / ((1+kappa1) kappa1^({pdk}))", up),
        )
    if family == "E3" and simple_regime:
        label = "cylinder: E3, power regime"
        return (
            RateCertificate(label, "lower", CYLINDER, growth, "eta / (1+kappa2)", eta / (1 + kappa2)),
            RateCertificate(label, "upper", CYLINDER, growth, "eta / (1+kappa1)", eta / (1 + kappa1)),
        )
    if family == "E3" and log_regime:
        label = "cylinder: E3, m=d+k, k>2"
        up = lo = None
        note = ""
        if factors is not None:
            qmax = max(abs(factors.q[a - 1]) / lame_rate_constant(d, a, lame) for a in rots)
            up = (kappa2 ** float(pd1) * qmax + eta) / (1 + kappa1)
            q1 = factors.q[d]
            if q1 != 0:
                lo = kappa1 ** float(pd1) * abs(q1) / ((1 + kappa2) * lame_rate_constant(d, d + 1, lame))
                note = f"Q*_{d + 1}={q1:.6g}"
            else:
                note = f"lower bound not certified: Q*_{d + 1} vanishes"
        return (
            RateCertificate(label, "lower", CYLINDER, growth,
                            f"kappa1^({pd1}) |Q*_{d + 1}| / ((1+kappa2) L^{d + 1})", lo, note),
            RateCertificate(label, "upper", CYLINDER, growth,
                            f"(max_a>d kappa2^({pd1}) |Q*_a| / L^a + eta) / (1+kappa1)", up, note),
        )
    raise CaseNotCovered(f"case not covered by the cylinder estimates: {family}, d={d}, m={m}, k={k}")


def field_certificate(case: str, d: int, m: int, k: int, radius: float, eta: float = 1.0,
                      kappa1: float = 1.0, kappa2: float = 1.0,
                      lame: LameConstants | None = None,
                      factors: FactorData | None = None) -> RateCertificate:
    """Upper envelope (H_A rho_A + H_B rho_B |x'| + eta |x'|^k) / (eps + kappa1 |x'|^m).

    Envelope constants that need missing factor data are left unresolved
    and evaluated as 1.
    """
    if case == "none":
        raise CaseNotCovered("boundary data match none of the parity classes")
    _check_dm(d, m)
    _validate_kappa(kappa1, kappa2)
    lame = lame or LameConstants(1.0, 1.0)
    rate_a, rate_b = _selector_rates(case, d, m, k)
    try:
        h_a, h_b = envelope_constants(case, d, m, k, kappa1, kappa2, eta, lame, factors)
        resolved = True
    except MissingFactorData:
        h_a = h_b = 1.0
        resolved = False
    r = float(radius)

    def evaluator(eps):
        eps = np.asarray(eps, dtype=float)
        out = (h_a * rate_a(eps) + h_b * rate_b(eps) * r + eta * r**k) / (eps + kappa1 * r**m)
        return float(out) if out.ndim == 0 else out

    # dominant behaviour at x' = 0
    rate = rate_a / Rate(Fraction(1))
    return RateCertificate(
        f"field: {case}", "upper", FIELD, rate,
        "(H_A* rho_A + H_B* rho_B |x'| + eta |x'|^k) / (eps + kappa1 |x'|^m)",
        h_a if resolved else None, f"|x'|={r:g}; H_B*={h_b:.6g}" if resolved else f"|x'|={r:g}",
        evaluator,
    )


def _sigma_of_radius(d: int, r: float) -> float:
    """(d-1)-dimensional measure of the ball B'_r."""
    n = d - 1
    return math.pi ** (n / 2) / math.gamma(n / 2 + 1) * r**n


def flat_certificates(family: str, d: int, m: int, k: int, r: float, eta: float = 1.0,
                      kappa1: float = 1.0, kappa2: float = 1.0, sigma: float | None = None):
    """(lower, upper, unified) at x' = (r, 0, ..., 0) for a flat contact set B'_r."""
    _family(family)
    _check_dm(d, m)
    _validate_kappa(kappa1, kappa2)
    s = _sigma_of_radius(d, r) if sigma is None else float(sigma)
    sk = s ** (k / (d - 1))

    def G(i, j, eps):
        return flat_gap_factor(i, j, d, m, eps, s, kappa1, kappa2)

    def vec(fn):
        def ev(eps):
            if np.ndim(eps) == 0:
                return fn(float(eps))
            return np.array([fn(float(e)) for e in np.ravel(eps)])
        return ev

    if family == "E1":
        lo = vec(lambda e: (G(k, 2, e) / G(0, 1, e) + sk) * eta / e)
        up = vec(lambda e: (G(k, 1, e) / G(0, 2, e) + sk) * eta / e)
        lo_expr, up_expr = "(G_k2/G_01 + s^(k/(d-1))) eta/eps", "(G_k1/G_02 + s^(k/(d-1))) eta/eps"
        label = "flat: E1"
    elif family == "E2":
        s1 = s ** (1 / (d - 1))
        lo = vec(lambda e: (s1 * G(k + 1, 2, e) / G(2, 1, e) + sk) * eta / e)
        up = vec(lambda e: (s1 * G(k + 1, 1, e) / G(2, 2, e) + sk) * eta / e)
        lo_expr = "(s^(1/(d-1)) G_{k+1,2}/G_21 + s^(k/(d-1))) eta/eps"
        up_expr = "(s^(1/(d-1)) G_{k+1,1}/G_22 + s^(k/(d-1))) eta/eps"
        label = "flat: E2"
    else:
        lo = up = vec(lambda e: eta * sk / e)
        lo_expr = up_expr = "eta s^(k/(d-1)) / eps"
        label = "flat: E3"
    rate = Rate(Fraction(-1))
    unified = RateCertificate("flat, unified", "two-sided", FLAT, rate, "eta s^(k/(d-1))", eta * sk,
                              f"sigma={s:g}")
    return (RateCertificate(label, "lower", FLAT, rate, lo_expr, None, f"sigma={s:g}", lo),
            RateCertificate(label, "upper", FLAT, rate, up_expr, None, f"sigma={s:g}", up),
            unified)


def rate_table(statement: str, family: str | None = None, d: int = 2, m: int = 2, k: int = 1,
               eta: float = 1.0, kappa1: float = 1.0, kappa2: float = 1.0,
               lame: LameConstants | None = None, factors: FactorData | None = None,
               radius: float = 0.0, r: float = 0.0, case: str | None = None) -> list[RateCertificate]:
    """Certificates for one statement: "segment", "cylinder", "field" or "flat"."""
    kw = dict(eta=eta, kappa1=kappa1, kappa2=kappa2)
    if statement == "segment":
        return list(segment_certificates(family, d, m, k, lame=lame, factors=factors, **kw))
    if statement == "cylinder":
        return list(cylinder_certificates(family, d, m, k, lame=lame, factors=factors, **kw))
    if statement == "field":
        parity = case or PARITY_OF_FAMILY.get(family or "", None)
        if parity is None:
            raise DomainError("the field envelope needs a parity case or a family")
        return [field_certificate(parity, d, m, k, radius, lame=lame, factors=factors, **kw)]
    if statement == "flat":
        return list(flat_certificates(family, d, m, k, r, **kw))
    raise DomainError(f"unknown statement {statement!r}")
