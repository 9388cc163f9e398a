"""Performance metrics of simulated traces."""
from __future__ import annotations

import math
from dataclasses import asdict, dataclass

import numpy as np
from scipy.stats import norm as _normal
from scipy.stats import qmc

from .errors import ContractViolation, UndefinedStatisticsError
from .simulation import Trace

__all__ = [
    "MetricsReport",
    "quadratic_cost",
    "interval_stats",
    "ultimate_bound_estimate",
    "sphere_initial_conditions",
]


def quadratic_cost(trace: Trace) -> float:
    """Integral of ``|x|^2 + |u|^2`` over the trace.

    The state term uses the trapezoidal rule; the input is constant on each
    row interval, so its term is exact.  A diverged trace is integrated up to
    its truncation point.
    """
    if len(trace.times) < 2:
        return 0.0
    dt = np.diff(trace.times)
    x2 = np.sum(trace.states ** 2, axis=1)
    u2 = np.sum(trace.inputs[:-1] ** 2, axis=1)
    return float(np.sum(dt * (0.5 * (x2[:-1] + x2[1:]) + u2)))


def interval_stats(trace_or_instants):
    """``(mean, min, max)`` of the gaps between consecutive sample instants."""
    instants = (trace_or_instants.sample_instants if isinstance(trace_or_instants, Trace)
                else np.asarray(trace_or_instants, dtype=float))
    if len(instants) < 2:
        raise UndefinedStatisticsError("interval statistics need at least two sample instants")
    gaps = np.diff(instants)
    return float(np.mean(gaps)), float(np.min(gaps)), float(np.max(gaps))


def ultimate_bound_estimate(trace: Trace, transient_cutoff: float | None = None) -> float:
    """Largest ``|x(t)|`` after ``transient_cutoff`` (default: half the horizon)."""
    horizon = trace.horizon or float(trace.times[-1])
    cutoff = 0.5 * horizon if transient_cutoff is None else transient_cutoff
    if cutoff >= horizon:
        raise ContractViolation("transient cutoff must precede the horizon")
    tail = trace.states[trace.times >= cutoff]
    if len(tail) == 0:
        return math.inf if trace.diverged else 0.0
    return float(np.max(np.linalg.norm(tail, axis=1)))


def sphere_initial_conditions(n: int, radius: float = 1.0, seed: int = 0, dim: int = 3):
    """``n`` deterministic points on the sphere of the given radius.

    Three dimensions use a Fibonacci lattice (the seed is not needed); other
    dimensions map a seeded scrambled Sobol sequence through the normal
    quantile function and normalise.
    """
    if n < 1:
        raise ContractViolation("n must be at least 1")
    if dim == 3:
        i = np.arange(n) + 0.5
        z = 1.0 - 2.0 * i / n
        rho = np.sqrt(1.0 - z * z)
        phi = math.pi * (3.0 - math.sqrt(5.0)) * np.arange(n)
        pts = np.stack([rho * np.cos(phi), rho * np.sin(phi), z], axis=1)
    elif dim == 1:
        pts = np.where(np.arange(n) % 2 == 0, 1.0, -1.0)[:, None]
    else:
        u = qmc.Sobol(d=dim, scramble=True, seed=seed).random_base2(max(0, (n - 1).bit_length()))[:n]
        pts = _normal.ppf(np.clip(u, 1e-12, 1 - 1e-12))
    pts = pts / np.linalg.norm(pts, axis=1, keepdims=True)
    return radius * pts


@dataclass(frozen=True)
class MetricsReport:
    J: float
    avg_interval: float
    min_interval: float
    max_interval: float
    ultimate_bound_est: float
    diverged: bool
    n_samples: int = 0
    scenario_id: str = ""
    final_interval: float = math.nan
    max_sample_norm: float = math.nan

    @classmethod
    def from_trace(cls, trace: Trace, transient_cutoff: float | None = None):
        try:
            avg, lo, hi = interval_stats(trace)
        except UndefinedStatisticsError:
            avg = lo = hi = math.nan
        if len(trace.intervals):
            final = float(trace.intervals[-1])
        else:
            final = float(np.diff(trace.sample_instants)[-1]) if math.isfinite(avg) else math.nan
        sample_norms = np.linalg.norm(trace.sample_states, axis=1)
        return cls(J=quadratic_cost(trace), avg_interval=avg, min_interval=lo, max_interval=hi,
                   ultimate_bound_est=ultimate_bound_estimate(trace, transient_cutoff),
                   diverged=trace.diverged, n_samples=len(trace.sample_instants),
                   scenario_id=trace.scenario_id, final_interval=final,
                   max_sample_norm=float(sample_norms.max()) if len(sample_norms) else math.nan)

    def to_dict(self):
        return {k: (None if isinstance(v, float) and not math.isfinite(v) else v)
                for k, v in asdict(self).items()}
