"""Deviation envelopes, comparison functions and local Lipschitz estimation.

The envelope of the held-input deviation ``g(t) = x_k - x(t)`` is
``(M1 |x_k| + M2 w_bar) (exp(L (t - t_k)) - 1)`` in the exponentially stable
case, with the prefactor replaced by ``beta(|x_k|, 0) + gamma1(w_bar)`` in the
ISS case.  Only ``r -> beta(r, 0)`` is ever needed, so that is all
:class:`KLCertificate` stores.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable

import numpy as np
from scipy.stats import norm as _normal
from scipy.stats import qmc

from .dynamics import ControlLaw, PlantModel
from .errors import ConfigurationError, ContractViolation, DomainError

__all__ = [
    "ScalarFunction",
    "as_scalar_function",
    "ExpCertificate",
    "KLCertificate",
    "LipschitzEnvelope",
    "gronwall_bound",
    "gronwall_bound_kl",
    "estimate_local_lipschitz",
    "MONOTONE_CHECK_GRID",
]

MONOTONE_CHECK_GRID = np.concatenate([[0.0], np.logspace(-6, 6, 241)])


_PRESETS = {
    "zero": (0, lambda r: np.zeros_like(r)),
    "const": (1, lambda r, c: np.full_like(r, c)),
    "linear": (1, lambda r, c: c * r),
    "sqrt": (1, lambda r, c: c * np.sqrt(r)),
    "poly": (2, lambda r, c, p: c * r ** p),
    "affine": (2, lambda r, a, b: a + b * r),
    "sat": (2, lambda r, c, s: c * r / (r + s)),
}


@dataclass(frozen=True)
class ScalarFunction:
    """A named scalar function of a radius, e.g. ``"poly:2,3"`` is ``2 r**3``.

    Presets: ``zero``, ``const:c``, ``linear:c``, ``sqrt:c``, ``poly:c,p``,
    ``affine:a,b`` (``a + b r``) and ``sat:c,s`` (``c r / (r + s)``).
    """

    kind: str
    params: tuple = ()

    def __post_init__(self):
        if self.kind not in _PRESETS:
            raise ConfigurationError(f"unknown function preset {self.kind!r}")
        arity = _PRESETS[self.kind][0]
        if len(self.params) != arity:
            raise ConfigurationError(f"preset {self.kind!r} takes {arity} parameter(s)")

    @classmethod
    def parse(cls, text: str) -> "ScalarFunction":
        kind, _, rest = text.partition(":")
        try:
            params = tuple(float(p) for p in rest.split(",")) if rest else ()
        except ValueError:
            raise ConfigurationError(f"cannot parse function preset {text!r}") from None
        return cls(kind.strip(), params)

    def __call__(self, r):
        r_arr = np.asarray(r, dtype=float)
        out = _PRESETS[self.kind][1](r_arr, *self.params)
        return float(out) if np.ndim(r) == 0 else out

    def __str__(self):
        if not self.params:
            return self.kind
        return f"{self.kind}:" + ",".join(repr(p) for p in self.params)


def as_scalar_function(spec) -> Callable:
    """Accept a preset string, a number (constant) or a callable."""
    if isinstance(spec, str):
        return ScalarFunction.parse(spec)
    if isinstance(spec, (int, float)):
        return ScalarFunction("const", (float(spec),))
    if callable(spec):
        return spec
    raise ConfigurationError(f"cannot interpret {spec!r} as a scalar function")


def _vectorised(fn, r):
    """Evaluate a possibly scalar-only callable on an array."""
    r = np.asarray(r, dtype=float)
    try:
        out = np.asarray(fn(r), dtype=float)
        if out.shape == r.shape:
            return out
    except (TypeError, ValueError):
        pass
    return np.array([fn(float(v)) for v in r.ravel()], dtype=float).reshape(r.shape)


def _check_comparison(fn, name, grid=MONOTONE_CHECK_GRID):
    vals = _vectorised(fn, grid)
    if not np.all(np.isfinite(vals)):
        raise ContractViolation(f"{name} is not finite on the check grid")
    if abs(vals[0]) > 0:
        raise ContractViolation(f"{name}(0) must be 0")
    if np.any(np.diff(vals) < -1e-12 * np.maximum(1.0, np.abs(vals[1:]))):
        raise ContractViolation(f"{name} must be nondecreasing")


@dataclass(frozen=True)
class ExpCertificate:
    """Constants of the exponentially stable case.

    ``|xi(t)| <= M1 |xi_k| + M2 w_bar`` along the continuous loop, ``L`` bounds
    ``L_{f,u} L_{kappa,x}`` over the parameter box, ``delta`` is the
    triggering threshold.
    """

    M1: float
    M2: float
    L: float
    w_bar: float
    delta: float

    def __post_init__(self):
        vals = (self.M1, self.M2, self.L, self.w_bar, self.delta)
        if not all(math.isfinite(v) for v in vals):
            raise ContractViolation("certificate constants must be finite")
        if self.M1 < 1:
            raise ContractViolation("M1 must be >= 1")
        if self.M2 < 0 or self.w_bar < 0:
            raise ContractViolation("M2 and w_bar must be nonnegative")
        if not self.L > 0 or not self.delta > 0:
            raise ContractViolation("L and delta must be positive")

    def envelope(self, x_k_norm):
        return self.M1 * np.asarray(x_k_norm, dtype=float) + self.M2 * self.w_bar

    def to_dict(self):
        return {"m1": self.M1, "m2": self.M2, "l": self.L, "w_bar": self.w_bar,
                "delta": self.delta}

    @classmethod
    def from_dict(cls, d):
        try:
            return cls(float(d["m1"]), float(d.get("m2", 0.0)), float(d["l"]),
                       float(d.get("w_bar", 0.0)), float(d["delta"]))
        except KeyError as exc:
            raise ConfigurationError(f"certificate missing field {exc}") from None


@dataclass(frozen=True)
class KLCertificate:
    """Comparison functions of the ISS case plus the constant ``L``.

    ``beta0`` is ``r -> beta(r, 0)``; ``gamma1`` and ``gamma2`` are the gains
    of the disturbance and of the sampling perturbation.
    """

    beta0: Callable
    gamma1: Callable
    gamma2: Callable
    L: float
    w_bar: float = 0.0

    def __post_init__(self):
        for name in ("beta0", "gamma1", "gamma2"):
            fn = as_scalar_function(getattr(self, name))
            object.__setattr__(self, name, fn)
            _check_comparison(fn, name)
        if not (math.isfinite(self.L) and self.L > 0):
            raise ContractViolation("L must be positive and finite")
        if not self.w_bar >= 0:
            raise ContractViolation("w_bar must be nonnegative")

    def prefactor(self, x_k_norm, w_bar=None):
        w_bar = self.w_bar if w_bar is None else w_bar
        return _vectorised(self.beta0, x_k_norm) + float(_vectorised(self.gamma1, w_bar))

    def to_dict(self):
        return {"beta0": str(self.beta0), "gamma1": str(self.gamma1),
                "gamma2": str(self.gamma2), "l": self.L, "w_bar": self.w_bar}

    @classmethod
    def from_dict(cls, d):
        try:
            return cls(as_scalar_function(d["beta0"]), as_scalar_function(d.get("gamma1", "zero")),
                       as_scalar_function(d.get("gamma2", "zero")), float(d["l"]),
                       float(d.get("w_bar", 0.0)))
        except KeyError as exc:
            raise ConfigurationError(f"certificate missing field {exc}") from None


def gronwall_bound(cert: ExpCertificate, x_k_norm, tau):
    """Upper bound on ``|x_k - x(t_k + tau)|`` under a held input."""
    tau = np.asarray(tau, dtype=float)
    if np.any(tau < 0):
        raise ContractViolation("tau must be nonnegative")
    out = cert.envelope(x_k_norm) * np.expm1(cert.L * tau)
    return float(out) if out.ndim == 0 else out


def gronwall_bound_kl(cert: KLCertificate, x_k_norm, w_bar, tau):
    tau = np.asarray(tau, dtype=float)
    if np.any(tau < 0):
        raise ContractViolation("tau must be nonnegative")
    out = cert.prefactor(x_k_norm, w_bar) * np.expm1(cert.L * tau)
    return float(out) if np.ndim(out) == 0 else out


# --- local Lipschitz estimation ----------------------------------------------

def _directions(dim: int, count: int) -> np.ndarray:
    """First ``count`` points of an unscrambled Halton sequence mapped to the sphere.

    Prefixes are nested, so raising ``count`` only adds directions.
    """
    if dim == 1:
        base = np.array([[1.0], [-1.0]])
        return base[: max(count, 2)]
    pts = qmc.Halton(d=dim, scramble=False).random(count + 1)[1:]
    z = _normal.ppf(np.clip(pts, 1e-12, 1 - 1e-12))
    return z / np.linalg.norm(z, axis=1, keepdims=True)


def _eta_grid(low, high, per_axis):
    axes = [np.linspace(lo, hi, per_axis) if hi > lo else np.array([lo])
            for lo, hi in zip(low, high)]
    mesh = np.meshgrid(*axes, indexing="ij")
    return np.stack([m.ravel() for m in mesh], axis=-1)


def _jacobian_norms(model, law, points, etas, fd_step):
    n = model.dim_state
    x = np.repeat(points, len(etas), axis=0)
    eta = np.tile(etas, (len(points), 1))
    w = np.zeros((len(x), model.dim_disturbance))
    h = fd_step * np.maximum(1.0, np.linalg.norm(x, axis=1))[:, None]
    cols = []
    for j in range(n):
        e = np.zeros(n)
        e[j] = 1.0
        xp, xm = x + h * e, x - h * e
        fp = model.dynamics(eta, xp, law(xp), w)
        fm = model.dynamics(eta, xm, law(xm), w)
        cols.append((fp - fm) / (2.0 * h))
    jac = np.stack(cols, axis=-1)
    return np.linalg.norm(jac, ord=2, axis=(-2, -1))


def estimate_local_lipschitz(model: PlantModel, law: ControlLaw, radius: float, eta_box=None,
                             resolution: int = 8, safety: float = 1.1, min_points: int = 16,
                             fd_step: float = 1e-6) -> float:
    """Sampled Lipschitz constant of ``x -> f(eta, x, kappa(x), 0)`` on ``B_radius x eta_box``.

    Points lie on shells at radii ``R j / resolution`` (``R`` the model's
    domain radius) not exceeding ``radius``, each carrying ``8 * resolution``
    Halton directions; the parameter box is gridded with ``resolution + 1``
    points per axis.  Larger radii and doubled resolutions only add points,
    so the estimate is nondecreasing in both.  The maximum spectral norm of
    the central-difference Jacobian is multiplied by ``safety``.
    """
    if radius < 0:
        raise ContractViolation("radius must be nonnegative")
    big_r = model.state_domain_radius
    if radius > big_r * (1 + 1e-12):
        raise DomainError(f"radius {radius} exceeds the model's valid radius {big_r}")
    resolution = int(resolution)
    n_dirs = 8 * resolution
    if resolution < 1 or 1 + resolution * n_dirs < min_points:
        raise ConfigurationError(
            f"resolution {resolution} gives fewer than {min_points} sample points")
    low, high = (model.eta_low, model.eta_high) if eta_box is None else (
        np.atleast_1d(np.asarray(eta_box[0], dtype=float)),
        np.atleast_1d(np.asarray(eta_box[1], dtype=float)))
    if np.any(low < model.eta_low - 1e-12) or np.any(high > model.eta_high + 1e-12):
        raise DomainError("eta box exceeds the model's parameter range")

    n_shells = int(math.floor(radius * resolution / big_r + 1e-9))
    dirs = _directions(model.dim_state, n_dirs)
    radii = big_r * np.arange(1, n_shells + 1) / resolution
    points = np.vstack([np.zeros((1, model.dim_state)),
                        (radii[:, None, None] * dirs[None]).reshape(-1, model.dim_state)])
    etas = _eta_grid(low, high, resolution + 1)
    best = 0.0
    for chunk in np.array_split(points, max(1, len(points) * len(etas) // 200_000 + 1)):
        if len(chunk):
            best = max(best, float(_jacobian_norms(model, law, chunk, etas, fd_step).max()))
    return safety * best


@dataclass(frozen=True)
class LipschitzEnvelope:
    """Nondecreasing radius-dependent Lipschitz bound ``r -> L_hat(r)``."""

    l_hat: Callable
    r_min: float = 0.0
    r_max: float = math.inf

    def __post_init__(self):
        fn = as_scalar_function(self.l_hat)
        object.__setattr__(self, "l_hat", fn)
        top = min(self.r_max, 1e6)
        grid = np.concatenate([[self.r_min], np.linspace(self.r_min, top, 200)[1:]])
        vals = _vectorised(fn, grid)
        if np.any(vals <= 0) or not np.all(np.isfinite(vals)):
            raise ContractViolation("L_hat must be positive and finite on its range")
        if np.any(np.diff(vals) < -1e-12 * vals[1:]):
            raise ContractViolation("L_hat must be nondecreasing")

    def __call__(self, r):
        r_arr = np.asarray(r, dtype=float)
        if np.any(r_arr < self.r_min) or np.any(r_arr > self.r_max):
            raise DomainError(f"radius outside the envelope range [{self.r_min}, {self.r_max}]")
        out = _vectorised(self.l_hat, r_arr)
        return float(out) if np.ndim(r) == 0 else out

    @classmethod
    def from_estimates(cls, model: PlantModel, law: ControlLaw, radii, **kwargs):
        """Step envelope from :func:`estimate_local_lipschitz` on a radius grid.

        ``L_hat(r)`` is the running maximum at the smallest grid radius ``>= r``.
        """
        radii = np.unique(np.asarray(radii, dtype=float))
        values = np.maximum.accumulate(
            [estimate_local_lipschitz(model, law, r, **kwargs) for r in radii])
        return cls(_StepFunction(tuple(radii), tuple(values)), 0.0, float(radii[-1]))

    def to_dict(self):
        return {"l_hat": str(self.l_hat), "r_min": self.r_min,
                "r_max": None if math.isinf(self.r_max) else self.r_max}


@dataclass(frozen=True)
class _StepFunction:
    radii: tuple
    values: tuple

    def __call__(self, r):
        idx = np.searchsorted(np.asarray(self.radii), np.asarray(r, dtype=float), side="left")
        vals = np.asarray(self.values)[np.minimum(idx, len(self.values) - 1)]
        return float(vals) if np.ndim(r) == 0 else vals

    def __str__(self):
        return "step:" + ";".join(f"{r!r}={v!r}" for r, v in zip(self.radii, self.values))
