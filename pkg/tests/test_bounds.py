import math

import mpmath
import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from robust_stc.bounds import (ExpCertificate, KLCertificate, LipschitzEnvelope, ScalarFunction,
                               as_scalar_function, estimate_local_lipschitz, gronwall_bound,
                               gronwall_bound_kl)
from robust_stc.dynamics import rigid_body_law, rigid_body_model, scalar_decay_model, zero_law
from robust_stc.errors import ConfigurationError, ContractViolation, DomainError


def test_gronwall_zero_at_zero_tau():
    cert = ExpCertificate(1.3, 0.5, 2.0, 0.4, 1.0)
    assert gronwall_bound(cert, 2.0, 0.0) == 0.0


def test_gronwall_closed_form():
    cert = ExpCertificate(1.0, 0.0, 1.0, 0.0, 1.0)
    assert gronwall_bound(cert, 1.0, math.log(2.0)) == pytest.approx(1.0, rel=1e-15)


def test_gronwall_against_mpmath():
    mpmath.mp.dps = 40
    cert = ExpCertificate(1.0, 0.5, 0.5, 2.0, 1.0)
    exact = (1 * 3 + mpmath.mpf("0.5") * 2) * (mpmath.e - 1)
    assert gronwall_bound(cert, 3.0, 2.0) == pytest.approx(float(exact), rel=1e-14)
    assert float(exact) == pytest.approx(6.8731, abs=1e-4)


def test_gronwall_rejects_negative_tau():
    with pytest.raises(ContractViolation):
        gronwall_bound(ExpCertificate(1, 0, 1, 0, 1), 1.0, -0.1)


@settings(max_examples=60, deadline=None)
@given(m1=st.floats(1, 5), m2=st.floats(0, 3), w=st.floats(0, 2), big_l=st.floats(0.1, 80),
       r=st.floats(0.01, 5))
def test_gronwall_increasing_and_convex(m1, m2, w, big_l, r):
    cert = ExpCertificate(m1, m2, big_l, w, 1.0)
    tau = np.linspace(0, 1.0 / big_l, 200)
    g = gronwall_bound(cert, r, tau)
    assert np.all(np.diff(g) > 0)
    assert np.all(np.diff(g, 2) >= -1e-12 * g[2:])


def test_kl_bound_examples():
    cert = KLCertificate("linear:1", "zero", "zero", 1.0)
    assert gronwall_bound_kl(cert, 2.0, 0.0, 0.0) == 0.0
    exp_cert = ExpCertificate(1.0, 0.0, 1.0, 0.0, 1.0)
    for r, tau in [(0.3, 0.1), (2.0, 0.7), (5.0, 1.3)]:
        assert gronwall_bound_kl(cert, r, 0.0, tau) == gronwall_bound(exp_cert, r, tau)
    sq = KLCertificate("sqrt:2", "linear:0.5", "zero", 1.0)
    # beta(4, 0) = 4, gamma1(2) = 1
    assert gronwall_bound_kl(sq, 4.0, 2.0, 1.0) == pytest.approx(5 * (math.e - 1), rel=1e-14)
    assert 5 * (math.e - 1) == pytest.approx(8.5914, abs=1e-4)


def test_certificate_validation():
    with pytest.raises(ContractViolation):
        ExpCertificate(0.5, 0, 1, 0, 1)
    with pytest.raises(ContractViolation):
        ExpCertificate(1, 0, 0, 0, 1)
    with pytest.raises(ContractViolation):
        ExpCertificate(1, 0, 1, 0, math.inf)
    with pytest.raises(ContractViolation):
        KLCertificate("const:1", "zero", "zero", 1.0)
    with pytest.raises(ContractViolation):
        KLCertificate(lambda r: -np.asarray(r), "zero", "zero", 1.0)


def test_certificate_json_round_trip():
    cert = ExpCertificate(1.0715, 1.0, 61.1945, 0.6, 2.8)
    d = cert.to_dict()
    assert set(d) == {"m1", "m2", "l", "w_bar", "delta"}
    assert ExpCertificate.from_dict(d) == cert
    kl = KLCertificate.from_dict({"beta0": "poly:2,1.5", "gamma1": "linear:3",
                                  "gamma2": "sqrt:1", "l": 4.0, "w_bar": 0.2})
    again = KLCertificate.from_dict(kl.to_dict())
    r = np.linspace(0, 10, 11)
    np.testing.assert_array_equal(again.beta0(r), 2 * r ** 1.5)
    assert again.L == 4.0 and again.w_bar == 0.2
    with pytest.raises(ConfigurationError):
        ExpCertificate.from_dict({"m1": 1.0})


def test_scalar_function_presets():
    assert ScalarFunction.parse("linear:3")(2.0) == 6.0
    assert ScalarFunction.parse("sqrt:2")(4.0) == 4.0
    assert ScalarFunction.parse("poly:2,3")(2.0) == 16.0
    assert str(ScalarFunction.parse("poly:2,3")) == "poly:2.0,3.0"
    assert as_scalar_function(1.5)(7.0) == 1.5
    with pytest.raises(ConfigurationError):
        ScalarFunction.parse("cubic:1")
    with pytest.raises(ConfigurationError):
        ScalarFunction.parse("poly:1")


def test_lipschitz_linear_system():
    model = scalar_decay_model()
    for r in (0.0, 1.0, 7.5):
        assert estimate_local_lipschitz(model, zero_law(), r) == pytest.approx(1.1, rel=1e-8)
    assert estimate_local_lipschitz(model, zero_law(), 3.0, safety=1.0) == pytest.approx(1.0, rel=1e-8)


def test_lipschitz_at_origin_is_local_jacobian():
    # closed-loop Jacobian at 0 is [[-1,0,-1],[0,-1,0],[0,0,0]], spectral norm sqrt(2)
    value = estimate_local_lipschitz(rigid_body_model(), rigid_body_law(), 0.0, safety=1.0)
    assert value == pytest.approx(math.sqrt(2.0), rel=1e-8)


def test_lipschitz_monotone_in_radius_and_resolution():
    model, law = rigid_body_model(), rigid_body_law()
    radii = [0.0, 0.5, 1.0, 2.0, 3.5, 5.0]
    vals = [estimate_local_lipschitz(model, law, r, resolution=4, safety=1.0) for r in radii]
    assert all(b >= a for a, b in zip(vals, vals[1:]))
    coarse = [estimate_local_lipschitz(model, law, 5.0, resolution=n, safety=1.0)
              for n in (2, 4, 8)]
    assert all(b >= a - 1e-6 * a for a, b in zip(coarse, coarse[1:]))


def test_lipschitz_errors():
    model, law = rigid_body_model(), rigid_body_law()
    with pytest.raises(DomainError):
        estimate_local_lipschitz(model, law, 6.0)
    with pytest.raises(ConfigurationError):
        estimate_local_lipschitz(model, law, 1.0, resolution=1, min_points=100)
    with pytest.raises(DomainError):
        estimate_local_lipschitz(model, law, 1.0, eta_box=(0.5, 8.2))


def test_lipschitz_envelope():
    env = LipschitzEnvelope("affine:2,0.5", r_max=10.0)
    assert env(4.0) == 4.0
    with pytest.raises(DomainError):
        env(11.0)
    with pytest.raises(ContractViolation):
        LipschitzEnvelope(lambda r: 5.0 - np.asarray(r), r_max=4.0)
    with pytest.raises(ContractViolation):
        LipschitzEnvelope("zero")
    model, law = rigid_body_model(), rigid_body_law()
    step = LipschitzEnvelope.from_estimates(model, law, [1.0, 2.0, 4.0], resolution=2)
    vals = step(np.array([0.0, 1.0, 1.5, 4.0]))
    assert np.all(np.diff(vals) >= 0) and step.r_min == 0.0 and step.r_max == 4.0
