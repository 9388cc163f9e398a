import json
from importlib import resources

import numpy as np
import pytest

from robust_stc.bounds import ExpCertificate, KLCertificate
from robust_stc.config import (parse_certificate, parse_disturbance, parse_eta, parse_nu,
                               parse_policy, scenario_from_config)
from robust_stc.errors import ConfigurationError, InfeasibleTuningError
from robust_stc.samplers import (EventLebesgue, EventRelative, NominalPrediction, Periodic,
                                 SelfTrigGlobal, SelfTrigLebesgue, SelfTrigNonlinear,
                                 SelfTrigUniversal)

CERT = {"m1": 1.0715, "m2": 0.0, "l": 61.1945, "w_bar": 0.0, "delta": 2.8}
NU = {"nu0": 0.42, "nu1": 61.1945, "nu2": 10, "nu3": 1e-6}


def test_policy_kinds():
    assert parse_policy({"kind": "continuous"}, dt=1e-4) == Periodic(1e-4)
    assert parse_policy({"kind": "periodic", "h": 0.2}) == Periodic(0.2)
    assert parse_policy({"kind": "event_lebesgue", "delta": 0.1}) == EventLebesgue(0.1)
    assert parse_policy({"kind": "event_relative"}) == EventRelative(0.1)
    assert isinstance(parse_policy({"kind": "self_trig_lebesgue", "certificate": CERT}),
                      SelfTrigLebesgue)
    pol = parse_policy({"kind": "self_trig_universal", "certificate": CERT, "nu": NU})
    assert isinstance(pol, SelfTrigUniversal) and pol.report.feasible
    kl = {"beta0": "linear:1.0715", "gamma1": "zero", "gamma2": "zero", "l": 61.1945}
    nl = parse_policy({"kind": "self_trig_nonlinear", "certificate": kl, "delta": 2.8,
                       "nu": {**NU, "nu2": "linear:10"}})
    assert isinstance(nl, SelfTrigNonlinear)
    gl = parse_policy({"kind": "self_trig_global", "certificate": kl, "delta": 2.8, "nu": NU,
                       "envelope": {"l_hat": "const:61.1945"}})
    assert isinstance(gl, SelfTrigGlobal)
    nom = parse_policy({"kind": "nominal_prediction", "rule": {"kind": "event_relative"}},
                       nominal_eta=(1.0,))
    assert isinstance(nom, NominalPrediction) and nom.nominal_eta == (1.0,)


def test_policy_errors():
    with pytest.raises(ConfigurationError):
        parse_policy({"kind": "bogus"})
    with pytest.raises(ConfigurationError):
        parse_policy({"kind": "periodic"})
    with pytest.raises(ConfigurationError):
        parse_policy({"kind": "continuous"})
    with pytest.raises(InfeasibleTuningError):
        parse_policy({"kind": "self_trig_universal", "certificate": {**CERT, "m1": 2.0},
                      "nu": NU})
    waived = parse_policy({"kind": "self_trig_universal", "certificate": {**CERT, "m1": 2.0},
                           "nu": NU, "waive_check": True})
    assert not waived.report.feasible


def test_envelope_from_estimates():
    kl = {"beta0": "linear:1", "l": 100.0}
    pol = parse_policy({"kind": "self_trig_global", "certificate": kl, "delta": 50.0,
                        "nu": {"nu0": 0.1, "nu1": 100.0, "nu2": 10.0, "nu3": 1.0},
                        "envelope": {"estimate": {"radii": [1, 2, 5], "resolution": 2}}})
    assert pol.envelope.r_max == 5.0


def test_certificates_and_nu():
    assert isinstance(parse_certificate(CERT), ExpCertificate)
    assert isinstance(parse_certificate({"beta0": "sqrt:2", "l": 1.0}), KLCertificate)
    nu = parse_nu({"nu0": 1, "nu1": "affine:1,1", "nu2": "poly:1,3", "nu3": 1})
    assert not nu.all_constant
    with pytest.raises(ConfigurationError):
        parse_nu({"nu0": 1})


def test_eta_forms():
    assert parse_eta(8.0).values[0, 0] == 8.0
    sched = parse_eta([[0.0, 1.0], [5.0, 8.0]])
    assert sched.at(6.0)[0] == 8.0
    a, b = parse_eta({"uniform": [1.0, 8.2], "seed": 4}), parse_eta({"uniform": [1, 8.2], "seed": 4})
    assert a.values[0, 0] == b.values[0, 0] and 1.0 <= a.values[0, 0] <= 8.2
    assert parse_eta({"schedule": [[0, 2.0]]}).values[0, 0] == 2.0
    with pytest.raises(ConfigurationError):
        parse_eta("eight")


def test_disturbance():
    prof = parse_disturbance({"bound": 0.6, "segments": [[7.4, 8.92, 0.6]]})
    assert prof.bound == 0.6 and prof.at(8.0)[0] == 0.6
    assert parse_disturbance({"segments": [[0, 1, 0.3]]}).bound == 0.3
    assert parse_disturbance(None).segments == ()


def test_scenario_from_config():
    sc = scenario_from_config({"model": "rigid_body", "eta": 8.0, "x0": [0, 0, 1], "T": 0.1,
                               "policy": {"kind": "continuous"}})
    assert sc.policy == Periodic(1e-4) and sc.T == 0.1
    np.testing.assert_array_equal(sc.x0, [0, 0, 1])
    with pytest.raises(ConfigurationError):
        scenario_from_config({"x0": [0, 0, 1], "policy": {"kind": "continuous"}, "typo": 1})
    with pytest.raises(ConfigurationError):
        scenario_from_config({"policy": {"kind": "continuous"}})


@pytest.mark.parametrize("name", ["scenario.json", "table1.json", "table2.json"])
def test_bundled_configs_parse(name):
    from robust_stc.experiments import TableConfig

    data = json.loads(resources.files("robust_stc").joinpath("configs", name).read_text())
    if "policies" in data:
        cfg = TableConfig.from_dict(data)
        assert cfg.n_initial == 25 and cfg.checks
    else:
        assert scenario_from_config(data).T == 15.0
