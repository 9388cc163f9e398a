"""Supremum checks for sampler tuning and inversion of the interval targets.

Each self-triggered law is admissible when the perturbation it admits,

    phi(r) = P(r) * L(r) * [(1 + nu0(r) / den(r)) ** (L(r) / nu1(r)) - 1],

stays below ``delta`` for every ``r >= 0``.  ``P`` is the trajectory bound
prefactor and ``den`` the interval denominator.  ``phi`` can be monotone with
its supremum at infinity, so the tail is handled separately from the grid.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .bounds import ExpCertificate, KLCertificate, LipschitzEnvelope, _vectorised
from .errors import ContractViolation
from .samplers import NuCoefficients

__all__ = [
    "TuningReport",
    "golden_section_max",
    "sup_on_halfline",
    "perturbation_sup_exponential",
    "perturbation_sup_asymptotic",
    "perturbation_sup_global",
    "suggest_nu",
]

GRID_POINTS = 10_000
GRID_DECADES = (-9.0, 9.0)
TAIL_PROBES = np.logspace(9, 12, 31)
TAIL_GROWTH_TOL = 1e-3

_INV_PHI = (math.sqrt(5.0) - 1.0) / 2.0


@dataclass(frozen=True)
class TuningReport:
    sup_value: float
    argmax_r: float
    delta_budget: float
    feasible: bool
    margin: float

    @classmethod
    def from_sup(cls, sup_value, argmax_r, delta):
        margin = delta - sup_value
        return cls(float(sup_value), float(argmax_r), float(delta), bool(margin >= 0),
                   float(margin))

    def to_dict(self):
        def enc(v):
            return "inf" if math.isinf(v) and v > 0 else ("-inf" if math.isinf(v) else v)

        return {"sup_value": enc(self.sup_value), "argmax_r": enc(self.argmax_r),
                "delta_budget": self.delta_budget, "feasible": self.feasible,
                "margin": enc(self.margin)}


def golden_section_max(fn, lo, hi, tol=1e-12, max_iter=200):
    """Maximise a unimodal scalar function on ``[lo, hi]``; returns ``(x, fn(x))``."""
    a, b = lo, hi
    c = b - _INV_PHI * (b - a)
    d = a + _INV_PHI * (b - a)
    fc, fd = fn(c), fn(d)
    for _ in range(max_iter):
        if abs(b - a) <= tol * max(1.0, abs(a) + abs(b)):
            break
        if fc >= fd:
            b, d, fd = d, c, fc
            c = b - _INV_PHI * (b - a)
            fc = fn(c)
        else:
            a, c, fc = c, d, fd
            d = a + _INV_PHI * (b - a)
            fd = fn(d)
    return (c, fc) if fc >= fd else (d, fd)


def sup_on_halfline(phi, tail="probe", r_max=math.inf, n_grid=GRID_POINTS):
    """Supremum of ``phi`` over ``[0, r_max]`` (``r_max`` may be infinite).

    ``phi`` maps an array of radii to values.  ``tail`` is either the known
    limit as ``r -> inf`` (a float, possibly ``inf``) or ``"probe"`` for
    numerical probing up to ``r = 1e12``; it is ignored for finite ``r_max``.
    Returns ``(sup, argmax)`` with ``argmax = inf`` for a supremum at infinity.
    """
    lo, hi = GRID_DECADES
    if math.isfinite(r_max):
        hi = min(hi, math.log10(r_max)) if r_max > 0 else lo
    grid = np.concatenate([[0.0], np.logspace(lo, hi, n_grid)])
    if math.isfinite(r_max):
        grid = np.append(grid[grid < r_max], r_max) if r_max > 0 else np.array([0.0])
    vals = np.asarray(phi(grid), dtype=float)
    if np.any(np.isnan(vals)):
        raise ContractViolation("perturbation function is undefined on the grid")
    if np.any(np.isposinf(vals)):
        return math.inf, float(grid[np.argmax(vals)])
    i = int(np.argmax(vals))
    best, arg = float(vals[i]), float(grid[i])

    if 0 < i < len(grid) - 1 and grid[i - 1] > 0:
        s, v = golden_section_max(lambda s: float(phi(np.array([math.exp(s)]))[0]),
                                  math.log(grid[i - 1]), math.log(grid[i + 1]))
        if v > best:
            best, arg = v, math.exp(s)
    elif len(grid) > 1 and i <= 1:
        r, v = golden_section_max(lambda r: float(phi(np.array([r]))[0]), 0.0, grid[min(2, len(grid) - 1)])
        if v > best:
            best, arg = v, r

    if math.isfinite(r_max):
        return best, arg
    if tail == "probe":
        probe = np.asarray(phi(TAIL_PROBES), dtype=float)
        if not np.all(np.isfinite(probe)):
            return math.inf, math.inf
        growing = probe[-1] > probe[-11] * (1 + TAIL_GROWTH_TOL) and probe[-1] > 0
        if growing and np.all(np.diff(probe[-11:]) > 0):
            return math.inf, math.inf
        j = int(np.argmax(probe))
        if probe[j] > best:
            best, arg = float(probe[j]), (math.inf if j == len(probe) - 1 else float(TAIL_PROBES[j]))
    else:
        limit = float(tail)
        if limit > best:
            best, arg = limit, math.inf
    return best, arg


def _bracket(ratio, exponent):
    """``(1 + ratio) ** exponent - 1`` without cancellation."""
    return np.expm1(exponent * np.log1p(ratio))


def perturbation_sup_exponential(cert: ExpCertificate, nu: NuCoefficients) -> TuningReport:
    if not nu.all_constant:
        raise ContractViolation("exponential-case tuning needs constant coefficients")
    nu0, nu1, nu2, nu3 = nu.nu0, nu.nu1, nu.nu2, nu.nu3
    m1, m2w, big_l = cert.M1, cert.M2 * cert.w_bar, cert.L
    p = big_l / nu1

    def phi(r):
        return (m1 * r + m2w) * big_l * _bracket(nu0 / (nu2 * r + nu3), p)

    if m1 == 0:
        tail = 0.0
    elif nu2 == 0:
        tail = math.inf
    else:
        tail = m1 * big_l * p * nu0 / nu2
    sup, arg = sup_on_halfline(phi, tail)
    return TuningReport.from_sup(sup, arg, cert.delta)


def perturbation_sup_asymptotic(cert: KLCertificate, nu: NuCoefficients,
                                delta: float) -> TuningReport:
    if not all(nu.is_constant(n) for n in ("nu0", "nu1", "nu3")):
        raise ContractViolation("only nu2 may depend on the radius here")
    if not delta > 0:
        raise ContractViolation("delta must be positive")
    big_l, p = cert.L, cert.L / nu.nu1
    offset = float(_vectorised(cert.gamma1, np.asarray(cert.w_bar)))

    def phi(r):
        pre = _vectorised(cert.beta0, r) + offset
        return pre * big_l * _bracket(nu.nu0 / nu.denominator(r), p)

    sup, arg = sup_on_halfline(phi, "probe")
    return TuningReport.from_sup(sup, arg, delta)


def perturbation_sup_global(cert: KLCertificate, env: LipschitzEnvelope, nu: NuCoefficients,
                            delta: float) -> TuningReport:
    """Global-case check; restricted to ``[0, env.r_max]`` when the envelope is bounded."""
    if not delta > 0:
        raise ContractViolation("delta must be positive")
    offset = float(_vectorised(cert.gamma1, np.asarray(cert.w_bar)))

    def phi(r):
        l_hat = env(r)
        nu0, nu1, _, _ = nu.at(r)
        pre = _vectorised(cert.beta0, r) + offset
        return pre * l_hat * _bracket(nu0 / nu.denominator(r), l_hat / nu1)

    sup, arg = sup_on_halfline(phi, "probe", r_max=env.r_max)
    return TuningReport.from_sup(sup, arg, delta)


def suggest_nu(cert: ExpCertificate, h_mid: float, h_max: float, b: float, nu2: float = 10.0,
               nu1: float | None = None):
    """Coefficients whose ``h_mid`` and ``h_max`` hit the targets, plus their tuning report.

    With ``nu1`` (default ``cert.L``) and ``nu2`` fixed, the two interval
    equations are linear in ``nu0`` and ``nu3``.  When ``h_mid == h_max`` the
    ``nu2 b`` term has to vanish, so ``nu2`` is set to 0 and ``nu3`` to 1; the
    report then flags the choice as infeasible whenever ``M1 > 0``.
    Infeasible targets are returned as computed, never adjusted.
    """
    if not (0 < h_mid <= h_max):
        raise ContractViolation("targets must satisfy 0 < h_mid <= h_max")
    if not b > 0 or not nu2 >= 0:
        raise ContractViolation("b must be positive and nu2 nonnegative")
    nu1 = cert.L if nu1 is None else float(nu1)
    a_max = math.expm1(nu1 * h_max)
    a_mid = math.expm1(nu1 * h_mid)
    if a_max == a_mid or nu2 == 0:
        nu2, nu3 = 0.0, 1.0
    else:
        nu3 = a_mid * nu2 * b / (a_max - a_mid)
    nu = NuCoefficients(a_max * nu3, nu1, nu2, nu3)
    return nu, perturbation_sup_exponential(cert, nu)


