"""JSON configuration for scenarios, policies and table experiments.

A scenario file looks like::

    {"model": "rigid_body", "eta": 8.0, "nominal_eta": 1.0, "x0": [0, 0, 1],
     "T": 15, "dt": 1e-4,
     "disturbance": {"bound": 0.6, "segments": [[7.4, 8.92, 0.6]]},
     "policy": {"kind": "self_trig_universal",
                "certificate": {"m1": 1.0715, "m2": 0, "l": 61.1945, "w_bar": 0, "delta": 2.8},
                "nu": {"nu0": 0.42, "nu1": 61.1945, "nu2": 10, "nu3": 1e-6}}}

``eta`` is a number, a vector, a schedule ``[[t0, value], [t1, value], ...]``
or a seeded draw ``{"uniform": [low, high], "seed": 3}``.
"""
from __future__ import annotations

import json
import math
from pathlib import Path

import numpy as np

from .bounds import ExpCertificate, KLCertificate, LipschitzEnvelope, as_scalar_function
from .dynamics import DisturbanceProfile, EtaSchedule, build_model
from .errors import ConfigurationError
from .samplers import (EventLebesgue, EventRelative, NominalPrediction, NuCoefficients, Periodic,
                       SelfTrigGlobal, SelfTrigLebesgue, SelfTrigNonlinear, SelfTrigUniversal)
from .simulation import Scenario

__all__ = [
    "load_json",
    "parse_certificate",
    "parse_nu",
    "parse_envelope",
    "parse_policy",
    "parse_eta",
    "parse_disturbance",
    "scenario_kwargs",
    "scenario_from_config",
]

SCENARIO_KEYS = {"model", "eta_box", "eta", "nominal_eta", "x0", "T", "dt", "disturbance",
                 "seed", "blowup_radius", "policy", "scenario_id", "tuning"}


def load_json(path):
    try:
        return json.loads(Path(path).read_text())
    except (OSError, json.JSONDecodeError) as exc:
        raise ConfigurationError(f"cannot read {path}: {exc}") from None


def _require(d, key, where):
    try:
        return d[key]
    except (KeyError, TypeError):
        raise ConfigurationError(f"{where}: missing field {key!r}") from None


def parse_certificate(d):
    """Exponential certificate if ``m1`` is present, otherwise a comparison-function one."""
    if not isinstance(d, dict):
        raise ConfigurationError("certificate must be an object")
    if "m1" in d:
        return ExpCertificate.from_dict(d)
    return KLCertificate.from_dict(d)


def parse_nu(d):
    if not isinstance(d, dict):
        raise ConfigurationError("nu must be an object with nu0..nu3")
    vals = []
    for name in ("nu0", "nu1", "nu2", "nu3"):
        v = _require(d, name, "nu")
        vals.append(float(v) if isinstance(v, (int, float)) else as_scalar_function(v))
    return NuCoefficients(*vals)


def parse_envelope(d, model_name="rigid_body", eta_box=None):
    """``{"l_hat": "affine:a,b", "r_max": ...}`` or ``{"estimate": {"radii": [...], ...}}``."""
    if "estimate" in d:
        est = dict(d["estimate"])
        radii = _require(est, "radii", "envelope.estimate")
        model, law = build_model(est.pop("model", model_name), eta_box)
        kwargs = {k: est[k] for k in ("resolution", "safety", "min_points") if k in est}
        return LipschitzEnvelope.from_estimates(model, law, radii, **kwargs)
    r_max = d.get("r_max")
    return LipschitzEnvelope(as_scalar_function(_require(d, "l_hat", "envelope")),
                             float(d.get("r_min", 0.0)),
                             math.inf if r_max is None else float(r_max))


def parse_policy(d, dt=None, nominal_eta=None, model_name="rigid_body", eta_box=None):
    """Build a policy from its JSON object.

    ``{"kind": "continuous"}`` is shorthand for a periodic policy at the
    simulation step ``dt``.
    """
    if not isinstance(d, dict):
        raise ConfigurationError("policy must be an object")
    kind = _require(d, "kind", "policy")
    waive = bool(d.get("waive_check", False))
    if kind == "continuous":
        if dt is None:
            raise ConfigurationError("continuous policy needs the scenario dt")
        return Periodic(float(d.get("h", dt)))
    if kind == "periodic":
        return Periodic(float(_require(d, "h", "policy")))
    if kind == "event_lebesgue":
        return EventLebesgue(float(_require(d, "delta", "policy")))
    if kind == "event_relative":
        return EventRelative(float(d.get("sigma", 0.1)))
    if kind == "self_trig_lebesgue":
        return SelfTrigLebesgue(ExpCertificate.from_dict(_require(d, "certificate", "policy")),
                                float(d.get("cap", 1.0)))
    if kind == "self_trig_universal":
        return SelfTrigUniversal(ExpCertificate.from_dict(_require(d, "certificate", "policy")),
                                 parse_nu(_require(d, "nu", "policy")), waive)
    if kind == "self_trig_nonlinear":
        return SelfTrigNonlinear(KLCertificate.from_dict(_require(d, "certificate", "policy")),
                                 parse_nu(_require(d, "nu", "policy")),
                                 float(_require(d, "delta", "policy")), waive)
    if kind == "self_trig_global":
        return SelfTrigGlobal(KLCertificate.from_dict(_require(d, "certificate", "policy")),
                              parse_envelope(_require(d, "envelope", "policy"), model_name,
                                             eta_box),
                              parse_nu(_require(d, "nu", "policy")),
                              float(_require(d, "delta", "policy")), waive)
    if kind == "nominal_prediction":
        eta_n = d.get("nominal_eta", nominal_eta)
        if eta_n is None:
            raise ConfigurationError("nominal_prediction needs a nominal_eta")
        rule = parse_policy(_require(d, "rule", "policy"), dt, nominal_eta, model_name, eta_box)
        pdt = d.get("prediction_dt")
        return NominalPrediction(tuple(np.atleast_1d(eta_n).astype(float)), rule,
                                 None if pdt is None else float(pdt),
                                 float(d.get("horizon", 1.0)))
    raise ConfigurationError(f"unknown policy kind {kind!r}")


def parse_eta(spec, default_seed=0):
    if isinstance(spec, EtaSchedule):
        return spec
    if isinstance(spec, dict):
        if "uniform" in spec:
            lo, hi = spec["uniform"]
            rng = np.random.default_rng(int(spec.get("seed", default_seed)))
            return EtaSchedule.constant(rng.uniform(lo, hi))
        if "schedule" in spec:
            spec = spec["schedule"]
        else:
            raise ConfigurationError("eta object needs 'uniform' or 'schedule'")
    if isinstance(spec, (int, float)):
        return EtaSchedule.constant(float(spec))
    if isinstance(spec, list) and spec and isinstance(spec[0], list):
        times = [float(item[0]) for item in spec]
        values = [np.atleast_1d(np.asarray(item[1], dtype=float)) for item in spec]
        return EtaSchedule(times, values)
    if isinstance(spec, list):
        return EtaSchedule.constant(np.asarray(spec, dtype=float))
    raise ConfigurationError(f"cannot interpret eta {spec!r}")


def parse_disturbance(spec, dim=1):
    if spec is None:
        return DisturbanceProfile.zero(dim)
    segments = [(float(s[0]), float(s[1]), np.atleast_1d(np.asarray(s[2], dtype=float)))
                for s in spec.get("segments", [])]
    bound = spec.get("bound")
    if bound is None:
        bound = max((float(np.linalg.norm(s[2])) for s in segments), default=0.0)
    return DisturbanceProfile(tuple(segments), float(bound), int(spec.get("dim", dim)))


def scenario_kwargs(d):
    """Everything of a scenario except the policy and ``x0``."""
    unknown = set(d) - SCENARIO_KEYS
    if unknown:
        raise ConfigurationError(f"unknown scenario fields: {sorted(unknown)}")
    model = d.get("model", "rigid_body")
    eta_box = d.get("eta_box")
    plant, _ = build_model(model, eta_box)
    seed = int(d.get("seed", 0))
    out = {
        "model": model,
        "eta_box": None if eta_box is None else tuple(float(v) for v in eta_box),
        "eta": parse_eta(d.get("eta", 1.0), seed),
        "nominal_eta": tuple(np.atleast_1d(d.get("nominal_eta", 1.0)).astype(float)),
        "T": float(d.get("T", 15.0)),
        "dt": float(d.get("dt", 1e-4)),
        "disturbance": parse_disturbance(d.get("disturbance"), plant.dim_disturbance),
        "seed": seed,
    }
    if "blowup_radius" in d:
        out["blowup_radius"] = float(d["blowup_radius"])
    return out


def scenario_from_config(d) -> Scenario:
    kw = scenario_kwargs(d)
    policy = parse_policy(_require(d, "policy", "scenario"), kw["dt"], kw["nominal_eta"],
                          kw["model"], kw["eta_box"])
    return Scenario(policy=policy, x0=np.asarray(_require(d, "x0", "scenario"), dtype=float),
                    scenario_id=str(d.get("scenario_id", "")), **kw)
