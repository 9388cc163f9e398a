"""Trigger policies: event rules and closed-form self-triggered intervals.

Every self-triggered law here has the shape
``h = log(1 + nu0 / (nu2 + nu3)) / nu1`` with the coefficients evaluated at
``|x_k|``; they differ only in which coefficients depend on the radius.
All interval functions accept scalars or arrays of ``|x_k|``.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, ClassVar, Union

import numpy as np

from .bounds import (ExpCertificate, KLCertificate, LipschitzEnvelope, _vectorised,
                     as_scalar_function, MONOTONE_CHECK_GRID)
from .dynamics import ControlLaw, PlantModel, _rk4
from .errors import ContractViolation, InfeasibleTuningError

__all__ = [
    "RELATIVE_RULE_COEFF",
    "NuCoefficients",
    "next_interval_lebesgue",
    "next_interval_universal",
    "next_interval_nonlinear",
    "next_interval_global",
    "event_value_lebesgue",
    "event_value_relative",
    "interval_bounds",
    "next_interval_nominal_prediction",
    "TriggerPolicy",
    "Periodic",
    "EventLebesgue",
    "EventRelative",
    "SelfTrigLebesgue",
    "SelfTrigUniversal",
    "SelfTrigNonlinear",
    "SelfTrigGlobal",
    "NominalPrediction",
]

RELATIVE_RULE_COEFF = 0.79
BISECTION_RESOLUTION = 1e-9

Coefficient = Union[float, Callable]


def _scalar_out(value, like):
    return float(value) if np.ndim(like) == 0 else value


@dataclass(frozen=True)
class NuCoefficients:
    """Sampler coefficients; each is a positive constant or a function of ``|x_k|``."""

    nu0: Coefficient
    nu1: Coefficient
    nu2: Coefficient
    nu3: Coefficient

    def __post_init__(self):
        for name in ("nu0", "nu1", "nu2", "nu3"):
            value = getattr(self, name)
            if isinstance(value, (int, float, np.floating)):
                object.__setattr__(self, name, float(value))
            else:
                object.__setattr__(self, name, as_scalar_function(value))
        nu0, nu1, nu2, nu3 = self.at(MONOTONE_CHECK_GRID)
        if not all(np.all(np.isfinite(v)) for v in (nu0, nu1, nu2, nu3)):
            raise ContractViolation("coefficients must be finite")
        if np.any(nu0 <= 0) or np.any(nu1 <= 0):
            raise ContractViolation("nu0 and nu1 must be positive")
        if np.any(nu2 < 0) or np.any(nu3 < 0):
            raise ContractViolation("nu2 and nu3 must be nonnegative")
        if np.any(self.denominator(MONOTONE_CHECK_GRID) <= 0):
            raise ContractViolation("the interval denominator must be positive for all r >= 0")

    def is_constant(self, name: str) -> bool:
        return isinstance(getattr(self, name), float)

    @property
    def all_constant(self) -> bool:
        return all(self.is_constant(n) for n in ("nu0", "nu1", "nu2", "nu3"))

    def coefficient(self, name: str, r):
        value = getattr(self, name)
        if isinstance(value, float):
            return np.full(np.shape(r), value)
        return _vectorised(value, r)

    def nu2_term(self, r):
        """``nu2 * r`` for a constant ``nu2``, ``nu2(r)`` otherwise."""
        r = np.asarray(r, dtype=float)
        if self.is_constant("nu2"):
            return self.nu2 * r
        return self.coefficient("nu2", r)

    def denominator(self, r):
        return self.nu2_term(r) + self.coefficient("nu3", r)

    def at(self, r):
        r = np.asarray(r, dtype=float)
        return tuple(self.coefficient(n, r) for n in ("nu0", "nu1", "nu2", "nu3"))

    def to_dict(self):
        return {n: (v if isinstance(v, float) else str(v))
                for n, v in (("nu0", self.nu0), ("nu1", self.nu1), ("nu2", self.nu2),
                             ("nu3", self.nu3))}


def _log_interval(nu0, nu1, denom):
    return np.log1p(nu0 / denom) / nu1


def next_interval_lebesgue(cert: ExpCertificate, x_k_norm, cap: float = 1.0):
    """Exact inversion of the deviation envelope at level ``delta``.

    When ``M1 |x_k| + M2 w_bar`` vanishes the interval is unbounded and
    ``cap`` is returned instead.
    """
    r = np.asarray(x_k_norm, dtype=float)
    if np.any(r < 0):
        raise ContractViolation("x_k_norm must be nonnegative")
    denom = cert.envelope(r)
    with np.errstate(divide="ignore"):
        h = np.where(denom > 0, np.log1p(cert.delta / np.where(denom > 0, denom, 1.0)) / cert.L,
                     cap)
    return _scalar_out(h, x_k_norm)


def next_interval_universal(nu: NuCoefficients, x_k_norm):
    """``log(1 + nu0 / (nu2 |x_k| + nu3)) / nu1`` with constant coefficients."""
    if not nu.all_constant:
        raise ContractViolation("the universal sampler needs constant coefficients")
    r = np.asarray(x_k_norm, dtype=float)
    return _scalar_out(_log_interval(nu.nu0, nu.nu1, nu.nu2 * r + nu.nu3), x_k_norm)


def next_interval_nonlinear(nu: NuCoefficients, x_k_norm):
    """Same as the universal law with ``nu2 |x_k|`` replaced by ``nu2(|x_k|)``."""
    if not all(nu.is_constant(n) for n in ("nu0", "nu1", "nu3")):
        raise ContractViolation("only nu2 may depend on the radius here")
    r = np.asarray(x_k_norm, dtype=float)
    return _scalar_out(_log_interval(nu.nu0, nu.nu1, nu.nu2_term(r) + nu.nu3), x_k_norm)


def next_interval_global(nu: NuCoefficients, x_k_norm):
    """All coefficients evaluated at ``|x_k|``; constants are used as given.

    A constant ``nu2`` multiplies ``|x_k|`` so that constant coefficients
    reproduce the universal law.
    """
    r = np.asarray(x_k_norm, dtype=float)
    nu0, nu1, _, nu3 = nu.at(r)
    return _scalar_out(_log_interval(nu0, nu1, nu.nu2_term(r) + nu3), x_k_norm)


def event_value_lebesgue(x, x_k, delta):
    x, x_k = np.asarray(x, dtype=float), np.asarray(x_k, dtype=float)
    out = np.linalg.norm(x_k - x, axis=-1) - delta
    return _scalar_out(out, out)


def event_value_relative(x, x_k, sigma):
    x, x_k = np.asarray(x, dtype=float), np.asarray(x_k, dtype=float)
    e = x_k - x
    c = (RELATIVE_RULE_COEFF * sigma) ** 2
    out = np.sum(e * e, axis=-1) - c * np.sum(x * x, axis=-1)
    return _scalar_out(out, out)


def interval_bounds(nu: NuCoefficients, x0_envelope: float, b: float):
    """``(h_min, h_mid, h_max)``: the interval at radius ``x0_envelope``, ``b`` and 0."""
    if x0_envelope < 0 or b < 0:
        raise ContractViolation("x0_envelope and b must be nonnegative")
    h = next_interval_global(nu, np.array([x0_envelope, b, 0.0]))
    return float(h[0]), float(h[1]), float(h[2])


# --- policies ----------------------------------------------------------------

class TriggerPolicy:
    kind: ClassVar[str] = ""
    is_event: ClassVar[bool] = False
    is_self_triggered: ClassVar[bool] = False

    def min_interval(self, max_norm: float) -> float:
        """Smallest interval the policy can emit while ``|x_k| <= max_norm``."""
        return 0.0


@dataclass(frozen=True)
class Periodic(TriggerPolicy):
    h: float
    kind: ClassVar[str] = "periodic"

    def __post_init__(self):
        if not self.h > 0:
            raise ContractViolation("period must be positive")

    def interval(self, x_k_norm):
        return np.full(np.shape(x_k_norm), self.h) if np.ndim(x_k_norm) else self.h

    def min_interval(self, max_norm):
        return self.h

    def to_dict(self):
        return {"kind": self.kind, "h": self.h}


@dataclass(frozen=True)
class EventLebesgue(TriggerPolicy):
    delta: float
    kind: ClassVar[str] = "event_lebesgue"
    is_event: ClassVar[bool] = True

    def __post_init__(self):
        if not self.delta > 0:
            raise ContractViolation("delta must be positive")

    def value(self, x, x_k):
        return event_value_lebesgue(x, x_k, self.delta)

    def to_dict(self):
        return {"kind": self.kind, "delta": self.delta}


@dataclass(frozen=True)
class EventRelative(TriggerPolicy):
    sigma: float = 0.1
    kind: ClassVar[str] = "event_relative"
    is_event: ClassVar[bool] = True

    def __post_init__(self):
        if not 0 < self.sigma < 1:
            raise ContractViolation("sigma must lie in (0, 1)")

    def value(self, x, x_k):
        return event_value_relative(x, x_k, self.sigma)

    def to_dict(self):
        return {"kind": self.kind, "sigma": self.sigma}


def _min_over(fn, max_norm):
    grid = np.concatenate([np.linspace(0.0, max_norm, 2001), [max_norm]])
    return float(np.min(fn(grid)))


@dataclass(frozen=True)
class SelfTrigLebesgue(TriggerPolicy):
    cert: ExpCertificate
    cap: float = 1.0
    kind: ClassVar[str] = "self_trig_lebesgue"
    is_self_triggered: ClassVar[bool] = True

    def interval(self, x_k_norm):
        return next_interval_lebesgue(self.cert, x_k_norm, self.cap)

    def min_interval(self, max_norm):
        return float(next_interval_lebesgue(self.cert, max_norm, self.cap))

    def to_dict(self):
        return {"kind": self.kind, "certificate": self.cert.to_dict(), "cap": self.cap}


def _checked(policy, report, waive):
    object.__setattr__(policy, "report", report)
    if not report.feasible and not waive:
        raise InfeasibleTuningError(
            f"{policy.kind}: perturbation supremum {report.sup_value:g} exceeds "
            f"delta={report.delta_budget:g} (pass waive_check=True to run anyway)", report)


@dataclass(frozen=True)
class SelfTrigUniversal(TriggerPolicy):
    cert: ExpCertificate
    nu: NuCoefficients
    waive_check: bool = False
    report: object = field(default=None, init=False, compare=False, repr=False)
    kind: ClassVar[str] = "self_trig_universal"
    is_self_triggered: ClassVar[bool] = True

    def __post_init__(self):
        from .tuning import perturbation_sup_exponential

        if not self.nu.all_constant:
            raise ContractViolation("the universal sampler needs constant coefficients")
        _checked(self, perturbation_sup_exponential(self.cert, self.nu), self.waive_check)

    def interval(self, x_k_norm):
        return next_interval_universal(self.nu, x_k_norm)

    def min_interval(self, max_norm):
        return float(next_interval_universal(self.nu, max_norm))

    def to_dict(self):
        return {"kind": self.kind, "certificate": self.cert.to_dict(), "nu": self.nu.to_dict(),
                "waive_check": self.waive_check}


@dataclass(frozen=True)
class SelfTrigNonlinear(TriggerPolicy):
    cert: KLCertificate
    nu: NuCoefficients
    delta: float
    waive_check: bool = False
    report: object = field(default=None, init=False, compare=False, repr=False)
    kind: ClassVar[str] = "self_trig_nonlinear"
    is_self_triggered: ClassVar[bool] = True

    def __post_init__(self):
        from .tuning import perturbation_sup_asymptotic

        _checked(self, perturbation_sup_asymptotic(self.cert, self.nu, self.delta),
                 self.waive_check)

    def interval(self, x_k_norm):
        return next_interval_nonlinear(self.nu, x_k_norm)

    def min_interval(self, max_norm):
        return _min_over(self.interval, max_norm)

    def to_dict(self):
        return {"kind": self.kind, "certificate": self.cert.to_dict(), "nu": self.nu.to_dict(),
                "delta": self.delta, "waive_check": self.waive_check}


@dataclass(frozen=True)
class SelfTrigGlobal(TriggerPolicy):
    cert: KLCertificate
    envelope: LipschitzEnvelope
    nu: NuCoefficients
    delta: float
    waive_check: bool = False
    report: object = field(default=None, init=False, compare=False, repr=False)
    kind: ClassVar[str] = "self_trig_global"
    is_self_triggered: ClassVar[bool] = True

    def __post_init__(self):
        from .tuning import perturbation_sup_global

        _checked(self, perturbation_sup_global(self.cert, self.envelope, self.nu, self.delta),
                 self.waive_check)

    def interval(self, x_k_norm):
        return next_interval_global(self.nu, x_k_norm)

    def min_interval(self, max_norm):
        return _min_over(self.interval, max_norm)

    def to_dict(self):
        return {"kind": self.kind, "certificate": self.cert.to_dict(),
                "envelope": self.envelope.to_dict(), "nu": self.nu.to_dict(),
                "delta": self.delta, "waive_check": self.waive_check}


@dataclass(frozen=True)
class NominalPrediction(TriggerPolicy):
    """Self-triggered stand-in that predicts an event rule on the nominal model.

    At each sample the nominal held-input model is integrated forward from
    ``x_k`` until ``rule`` fires; the predicted interval is then applied to
    the true plant without further monitoring.
    """

    nominal_eta: tuple
    rule: TriggerPolicy
    prediction_dt: float | None = None
    horizon: float = 1.0
    kind: ClassVar[str] = "nominal_prediction"
    is_self_triggered: ClassVar[bool] = True

    def __post_init__(self):
        object.__setattr__(self, "nominal_eta",
                           tuple(np.atleast_1d(np.asarray(self.nominal_eta, dtype=float))))
        if not self.rule.is_event:
            raise ContractViolation("the inner rule must be an event rule")
        if self.prediction_dt is not None and not self.prediction_dt > 0:
            raise ContractViolation("prediction dt must be positive")
        if not self.horizon > 0:
            raise ContractViolation("prediction horizon must be positive")

    def predict(self, model, law, x_k, dt):
        return next_interval_nominal_prediction(
            model, law, self.nominal_eta, self.rule, x_k, self.prediction_dt or dt, self.horizon)

    def to_dict(self):
        return {"kind": self.kind, "nominal_eta": list(self.nominal_eta),
                "rule": self.rule.to_dict(), "prediction_dt": self.prediction_dt,
                "horizon": self.horizon}


def _bisect_crossing(f, x_a, u, t_a, t_lo, t_hi, eta_at, w_at, gamma):
    """Refine a sign change of ``gamma`` on ``(t_lo, t_hi]`` for every row.

    States at trial times come from a single RK4 step of length ``t - t_a``
    out of ``x_a``.  Returns the first nonnegative time and the state there.
    """
    lo, hi = t_lo.copy(), t_hi.copy()
    while np.any(hi - lo > BISECTION_RESOLUTION):
        mid = 0.5 * (lo + hi)
        g = gamma(_rk4(f, x_a, u, t_a, mid - t_a, eta_at, w_at))
        up = g >= 0
        hi = np.where(up, mid, hi)
        lo = np.where(up, lo, mid)
    return hi, _rk4(f, x_a, u, t_a, hi - t_a, eta_at, w_at)


def next_interval_nominal_prediction(model: PlantModel, law: ControlLaw, nominal_eta, rule,
                                     x_k, dt: float, horizon: float = 1.0):
    """Predicted time until ``rule`` fires on the nominal model, per row of ``x_k``.

    Returns ``(intervals, capped)``; rows whose rule does not fire within
    ``horizon`` get ``horizon`` and ``capped=True``.
    """
    if not dt > 0 or not horizon > 0:
        raise ContractViolation("prediction dt and horizon must be positive")
    x_k = np.asarray(x_k, dtype=float)
    single = x_k.ndim == 1
    xk = np.atleast_2d(x_k)
    u = law(xk)
    eta = np.broadcast_to(np.atleast_1d(np.asarray(nominal_eta, dtype=float)),
                          (len(xk), model.dim_eta))
    w = np.zeros((len(xk), model.dim_disturbance))

    out = np.full(len(xk), horizon)
    capped = np.ones(len(xk), dtype=bool)
    live = np.arange(len(xk))
    x = xk.copy()
    t = 0.0
    n_steps = int(math.ceil(horizon / dt - 1e-9))
    for n in range(n_steps):
        if live.size == 0:
            break
        t_end = min((n + 1) * dt, horizon)
        e_l, w_l, u_l, xk_l = eta[live], w[live], u[live], xk[live]
        eta_at = lambda _t, e=e_l: e  # noqa: E731
        w_at = lambda _t, v=w_l: v  # noqa: E731
        x_new = _rk4(model.dynamics, x[live], u_l, t, t_end - t, eta_at, w_at)
        g_old = rule.value(x[live], xk_l)
        g_new = rule.value(x_new, xk_l)
        fired = (g_new >= 0) & (g_old < 0)
        if np.any(fired):
            sel = np.nonzero(fired)[0]
            rows = live[sel]
            e_s, w_s, xk_s = eta[rows], w[rows], xk[rows]
            t_hit, _ = _bisect_crossing(
                model.dynamics, x[rows], u[rows], t, np.full(len(rows), t),
                np.full(len(rows), t_end), lambda _t: e_s, lambda _t: w_s,
                lambda xs: rule.value(xs, xk_s))
            out[rows] = t_hit
            capped[rows] = False
        x[live] = x_new
        live = live[~fired & np.all(np.isfinite(x_new), axis=-1)]
        t = t_end
    if single:
        return float(out[0]), bool(capped[0])
    return out, capped
