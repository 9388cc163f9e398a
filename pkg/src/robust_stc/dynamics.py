"""Plants, control laws, disturbances and the fixed-step RK4 integrator.

All callables are vectorised over leading axes: ``dynamics(eta, x, u, w)``
receives arrays of shape ``(..., n_eta)``, ``(..., n)``, ``(..., m)`` and
``(..., p)`` and returns ``(..., n)``.  The simulator relies on this to
advance a whole batch of runs with one call.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np

from .errors import ContractViolation, DivergenceError, DomainError

__all__ = [
    "PlantModel",
    "ControlLaw",
    "DisturbanceProfile",
    "EtaSchedule",
    "eval_closed_loop",
    "rk4_step",
    "rigid_body_model",
    "rigid_body_law",
    "scalar_decay_model",
    "zero_law",
    "MODELS",
    "build_model",
]


def _frozen_array(values, ndim=1):
    arr = np.array(values, dtype=float, ndmin=ndim)
    arr.setflags(write=False)
    return arr


@dataclass(frozen=True, eq=False)
class PlantModel:
    dim_state: int
    dim_input: int
    dynamics: Callable[..., np.ndarray]
    eta_low: np.ndarray
    eta_high: np.ndarray
    state_domain_radius: float
    dim_disturbance: int = 1
    name: str = "custom"

    def __post_init__(self):
        if self.dim_state < 1 or self.dim_input < 1 or self.dim_disturbance < 1:
            raise ContractViolation("model dimensions must be positive")
        lo, hi = _frozen_array(self.eta_low), _frozen_array(self.eta_high)
        if lo.shape != hi.shape or np.any(lo > hi):
            raise ContractViolation("eta box must satisfy low <= high elementwise")
        if not self.state_domain_radius > 0:
            raise ContractViolation("state_domain_radius must be positive")
        object.__setattr__(self, "eta_low", lo)
        object.__setattr__(self, "eta_high", hi)

    @property
    def dim_eta(self) -> int:
        return self.eta_low.size

    def contains_eta(self, eta, atol=1e-12) -> bool:
        eta = np.asarray(eta, dtype=float)
        return bool(np.all(eta >= self.eta_low - atol) and np.all(eta <= self.eta_high + atol))

    def __call__(self, eta, x, u, w):
        return self.dynamics(eta, x, u, w)


@dataclass(frozen=True, eq=False)
class ControlLaw:
    law: Callable[[np.ndarray], np.ndarray]
    lipschitz_x: float = 0.0
    name: str = "custom"

    def __post_init__(self):
        if self.lipschitz_x < 0:
            raise ContractViolation("lipschitz_x must be nonnegative")

    def __call__(self, x):
        return self.law(x)


@dataclass(frozen=True, eq=False)
class DisturbanceProfile:
    """Piecewise-constant disturbance; zero outside every segment.

    Segments are half-open ``[t_start, t_end)`` intervals.
    """

    segments: tuple = ()
    bound: float = 0.0
    dim: int = 1

    def __post_init__(self):
        segs = []
        for t0, t1, value in self.segments:
            value = _frozen_array(value)
            if value.size != self.dim:
                raise ContractViolation(f"segment value has size {value.size}, expected {self.dim}")
            if not t1 > t0:
                raise ContractViolation("segment end must exceed its start")
            if np.linalg.norm(value) > self.bound * (1 + 1e-12):
                raise ContractViolation("segment value exceeds the declared bound w_bar")
            segs.append((float(t0), float(t1), value))
        segs.sort(key=lambda s: s[0])
        for (_, a_end, _), (b_start, _, _) in zip(segs, segs[1:]):
            if b_start < a_end:
                raise ContractViolation("disturbance segments overlap")
        object.__setattr__(self, "segments", tuple(segs))

    @classmethod
    def zero(cls, dim=1):
        return cls((), 0.0, dim)

    def at(self, t) -> np.ndarray:
        t = np.asarray(t, dtype=float)
        out = np.zeros(t.shape + (self.dim,))
        for t0, t1, value in self.segments:
            mask = (t >= t0) & (t < t1)
            if np.any(mask):
                out[mask] = value
        return out

    @property
    def breakpoints(self):
        return sorted({t for t0, t1, _ in self.segments for t in (t0, t1)})


@dataclass(frozen=True, eq=False)
class EtaSchedule:
    """Piecewise-constant uncertain parameter: ``values[i]`` holds on ``[times[i], times[i+1])``."""

    times: np.ndarray
    values: np.ndarray

    def __post_init__(self):
        times = _frozen_array(self.times)
        values = np.array(self.values, dtype=float)
        if values.ndim == 1:
            values = values[:, None]
        if times.size != values.shape[0] or times.size == 0:
            raise ContractViolation("eta schedule needs one value per breakpoint")
        if times[0] != 0.0 or np.any(np.diff(times) <= 0):
            raise ContractViolation("eta schedule times must start at 0 and increase")
        values.setflags(write=False)
        object.__setattr__(self, "times", times)
        object.__setattr__(self, "values", values)

    @classmethod
    def constant(cls, eta):
        return cls([0.0], [np.atleast_1d(np.asarray(eta, dtype=float))])

    @property
    def is_constant(self) -> bool:
        return self.times.size == 1

    def at(self, t) -> np.ndarray:
        idx = np.searchsorted(self.times, np.asarray(t, dtype=float), side="right") - 1
        return self.values[np.clip(idx, 0, None)]

    def to_list(self):
        return [[float(t), v.tolist()] for t, v in zip(self.times, self.values)]


def _check_dims(model: PlantModel, eta, x, u, w):
    if eta.shape[-1] != model.dim_eta:
        raise ContractViolation(f"eta has size {eta.shape[-1]}, model expects {model.dim_eta}")
    if x.shape[-1] != model.dim_state:
        raise ContractViolation(f"state has size {x.shape[-1]}, model expects {model.dim_state}")
    if u.shape[-1] != model.dim_input:
        raise ContractViolation(f"input has size {u.shape[-1]}, model expects {model.dim_input}")
    if w.shape[-1] != model.dim_disturbance:
        raise ContractViolation(
            f"disturbance has size {w.shape[-1]}, model expects {model.dim_disturbance}")


def eval_closed_loop(model: PlantModel, law: ControlLaw, eta, x, u_held=None, w=None):
    """Right-hand side of the sampled-data loop, ``f(eta, x, u_held, w)``.

    With ``u_held=None`` the input is ``law(x)``, i.e. the continuous closed loop.
    """
    eta = np.atleast_1d(np.asarray(eta, dtype=float))
    x = np.atleast_1d(np.asarray(x, dtype=float))
    u = law(x) if u_held is None else np.atleast_1d(np.asarray(u_held, dtype=float))
    w = np.zeros(x.shape[:-1] + (model.dim_disturbance,)) if w is None else np.atleast_1d(
        np.asarray(w, dtype=float))
    _check_dims(model, eta, x, u, w)
    if not model.contains_eta(eta):
        raise DomainError(f"eta={eta.tolist()} outside [{model.eta_low}, {model.eta_high}]")
    return model.dynamics(eta, x, u, w)


def _rk4(f, x, u, t, h, eta_at, w_at):
    """One classical RK4 step; ``h`` may be a scalar or a per-row column."""
    half = 0.5 * h
    tm, te = t + half, t + h
    eta0, eta_m, eta_e = eta_at(t), eta_at(tm), eta_at(te)
    w0, w_m, w_e = w_at(t), w_at(tm), w_at(te)
    h = np.asarray(h)[..., None] if np.ndim(h) else h
    half = 0.5 * h
    k1 = f(eta0, x, u, w0)
    k2 = f(eta_m, x + half * k1, u, w_m)
    k3 = f(eta_m, x + half * k2, u, w_m)
    k4 = f(eta_e, x + h * k3, u, w_e)
    return x + (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)


def rk4_step(model: PlantModel, u_k, eta, profile: DisturbanceProfile | None, x, t: float,
             dt: float):
    """Advance the held-input dynamics by one RK4 step of length ``dt``.

    ``eta`` is an array or an :class:`EtaSchedule`; the disturbance is read from
    ``profile`` at the stage times.  Raises :class:`DivergenceError` if the
    result is not finite.
    """
    if not dt > 0:
        raise ContractViolation("dt must be positive")
    profile = profile or DisturbanceProfile.zero(model.dim_disturbance)
    if isinstance(eta, EtaSchedule):
        eta_at = eta.at
    else:
        eta_arr = np.atleast_1d(np.asarray(eta, dtype=float))
        eta_at = lambda _t: eta_arr  # noqa: E731
    x = np.atleast_1d(np.asarray(x, dtype=float))
    u = np.atleast_1d(np.asarray(u_k, dtype=float))
    out = _rk4(model.dynamics, x, u, float(t), float(dt), eta_at, profile.at)
    if not np.all(np.isfinite(out)):
        raise DivergenceError(f"non-finite state after step at t={t + dt:g}", t + dt)
    return out


# --- built-in benchmark -----------------------------------------------------

def _rigid_body_dynamics(eta, x, u, w):
    shape = np.broadcast_shapes(x.shape[:-1], u.shape[:-1], w.shape[:-1], eta.shape[:-1])
    out = np.empty(shape + (3,))
    out[..., 0] = u[..., 0]
    out[..., 1] = u[..., 1] + w[..., 0]
    out[..., 2] = eta[..., 0] * x[..., 0] * x[..., 1]
    return out


def rigid_body_model(eta_low=1.0, eta_high=8.2) -> PlantModel:
    """Three-state rigid body with uncertain gain on the xi1*xi2 coupling.

    The scalar disturbance enters additively on the xi2 channel.
    """
    return PlantModel(3, 2, _rigid_body_dynamics, [eta_low], [eta_high],
                      state_domain_radius=5.0, dim_disturbance=1, name="rigid_body")


def rigid_body_law(xi3_sq_coeff: float = 3.0) -> ControlLaw:
    """Stabilising feedback for the rigid body.

    ``u1 = -x1 x2 - 2 x2 x3 - x1 - x3`` and ``u2 = 2 x1 x2 x3 + c x3**2 - x2``
    with ``c = xi3_sq_coeff``.  ``c = 3`` stabilises the loop; ``c = -3`` is
    kept for reproducing the sign as printed in the source article, which is
    unstable from e.g. ``x0 = (0, 0, 1)``.
    """
    c = float(xi3_sq_coeff)

    def law(x):
        x1, x2, x3 = x[..., 0], x[..., 1], x[..., 2]
        out = np.empty(x.shape[:-1] + (2,))
        out[..., 0] = -x1 * x2 - 2.0 * x2 * x3 - x1 - x3
        out[..., 1] = 2.0 * x1 * x2 * x3 + c * x3 * x3 - x2
        return out

    # sup of the spectral norm of the law's Jacobian over the radius-5 ball (sampled estimate)
    return ControlLaw(law, lipschitz_x=43.0, name="rigid_body")


def _scalar_decay_dynamics(eta, x, u, w):
    return -eta[..., :1] * x + u + w


def scalar_decay_model(eta_low=1.0, eta_high=1.0) -> PlantModel:
    """``x' = -eta x + u + w``: the linear test plant used by the unit tests."""
    return PlantModel(1, 1, _scalar_decay_dynamics, [eta_low], [eta_high],
                      state_domain_radius=10.0, dim_disturbance=1, name="scalar_decay")


def zero_law(dim_input: int = 1) -> ControlLaw:
    def law(x):
        return np.zeros(np.shape(x)[:-1] + (dim_input,))

    return ControlLaw(law, 0.0, name="zero")


MODELS: dict[str, Callable[..., tuple[PlantModel, ControlLaw]]] = {
    "rigid_body": lambda **kw: (rigid_body_model(**kw), rigid_body_law()),
    "rigid_body_printed_sign": lambda **kw: (rigid_body_model(**kw), rigid_body_law(-3.0)),
    "scalar_decay": lambda **kw: (scalar_decay_model(**kw), zero_law(1)),
}


def build_model(name: str, eta_box: Sequence[float] | None = None):
    """Look up ``(model, law)`` by registry name, optionally overriding the eta box."""
    try:
        factory = MODELS[name]
    except KeyError:
        raise DomainError(f"unknown model {name!r}; known: {sorted(MODELS)}") from None
    if eta_box is None:
        return factory()
    return factory(eta_low=float(eta_box[0]), eta_high=float(eta_box[1]))
