import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from oracles import brute_force_sup, random_exponential_config
from robust_stc.bounds import ExpCertificate, KLCertificate, LipschitzEnvelope
from robust_stc.errors import ContractViolation
from robust_stc.samplers import NuCoefficients, interval_bounds
from robust_stc.tuning import (TuningReport, golden_section_max, perturbation_sup_asymptotic,
                               perturbation_sup_exponential, perturbation_sup_global,
                               sup_on_halfline, suggest_nu)

L = 61.1945
NU = NuCoefficients(0.42, L, 10.0, 1e-6)


def test_exponent_one_closed_form():
    cert = ExpCertificate(1.0, 0.0, 2.0, 0.0, 1.0)
    rep = perturbation_sup_exponential(cert, NuCoefficients(1.0, 2.0, 4.0, 1.0))
    assert rep.sup_value == pytest.approx(0.5, rel=1e-12)
    assert math.isinf(rep.argmax_r) and rep.feasible


def test_zero_prefactor_is_always_feasible():
    # M1 = M2 = 0 is outside the exponential certificate; the comparison-function
    # form with beta = gamma = 0 is the same degenerate case
    cert = KLCertificate("zero", "zero", "zero", 5.0)
    rep = perturbation_sup_asymptotic(cert, NuCoefficients(3.0, 1.0, "linear:1", 0.1), 1e-9)
    assert rep.sup_value == 0.0 and rep.feasible


def test_against_brute_force_example():
    cert = ExpCertificate(1.0, 1.0, 1.0, 1.0, 10.0)
    rep = perturbation_sup_exponential(cert, NuCoefficients(1.0, 2.0, 1.0, 1.0))
    oracle = brute_force_sup(1.0, 1.0, 1.0, 1.0, 2.0, 1.0, 1.0, n_points=1_000_000)
    assert rep.sup_value == pytest.approx(oracle, rel=1e-6)


def test_randomised_against_brute_force():
    rng = np.random.default_rng(11)
    for _ in range(10):
        c = random_exponential_config(rng)
        cert = ExpCertificate(c["m1"], c["m2"], c["big_l"], c["w_bar"], 1.0)
        nu = NuCoefficients(c["nu0"], c["nu1"], c["nu2"], c["nu3"])
        rep = perturbation_sup_exponential(cert, nu)
        oracle = brute_force_sup(c["m1"], c["m2"] * c["w_bar"], c["big_l"], c["nu0"], c["nu1"],
                                 c["nu2"], c["nu3"], n_points=1_000_000)
        assert rep.sup_value == pytest.approx(oracle, rel=1e-4)


def test_scale_identity():
    rng = np.random.default_rng(5)
    for _ in range(50):
        c = random_exponential_config(rng)
        cert = ExpCertificate(c["m1"], c["m2"], c["big_l"], c["w_bar"], 1.0)
        nu = NuCoefficients(c["nu0"], c["big_l"], c["nu2"], c["nu3"])
        closed = c["big_l"] * c["nu0"] * max(c["m1"] / c["nu2"], c["m2"] * c["w_bar"] / c["nu3"])
        rep = perturbation_sup_exponential(cert, nu)
        assert rep.sup_value == pytest.approx(closed, rel=1e-10)


def test_benchmark_tuning_is_feasible():
    rep = perturbation_sup_exponential(ExpCertificate(1.0715, 0.0, L, 0.0, 2.8), NU)
    assert rep.feasible
    assert rep.sup_value == pytest.approx(1.0715 * L * 0.42 / 10.0, rel=1e-6)


def test_zero_nu2_diverges():
    rep = perturbation_sup_exponential(ExpCertificate(1.0, 0.0, 1.0, 0.0, 1.0),
                                       NuCoefficients(1.0, 1.0, 0.0, 1.0))
    assert math.isinf(rep.sup_value) and not rep.feasible
    assert rep.to_dict()["sup_value"] == "inf"


@settings(max_examples=25, deadline=None)
@given(seed=st.integers(0, 10_000), factor=st.floats(1.05, 3.0))
def test_sup_monotone_in_coefficients(seed, factor):
    c = random_exponential_config(np.random.default_rng(seed))
    cert = ExpCertificate(c["m1"], c["m2"], c["big_l"], c["w_bar"], 1.0)

    def sup(**kw):
        args = {k: c[k] for k in ("nu0", "nu1", "nu2", "nu3")}
        args.update(kw)
        return perturbation_sup_exponential(cert, NuCoefficients(**args)).sup_value

    base = sup()
    tol = 1e-9 * base
    assert sup(nu0=c["nu0"] * factor) >= base - tol
    assert sup(nu2=c["nu2"] * factor) <= base + tol
    assert sup(nu3=c["nu3"] * factor) <= base + tol


def test_asymptotic_reduces_to_exponential():
    kl = KLCertificate("linear:1.0715", "zero", "zero", L)
    a = perturbation_sup_asymptotic(kl, NuCoefficients(0.42, L, "linear:10", 1e-6), 2.8)
    e = perturbation_sup_exponential(ExpCertificate(1.0715, 0.0, L, 0.0, 2.8), NU)
    assert a.sup_value == pytest.approx(e.sup_value, rel=1e-6)


def test_asymptotic_sqrt_calculus_oracle():
    big_l, nu0, nu3 = 3.0, 0.5, 2.0
    kl = KLCertificate("sqrt:1", "zero", "zero", big_l)
    rep = perturbation_sup_asymptotic(kl, NuCoefficients(nu0, big_l, "linear:1", nu3), 10.0)
    assert rep.sup_value == pytest.approx(big_l * nu0 / (2 * math.sqrt(nu3)), rel=1e-9)
    assert rep.argmax_r == pytest.approx(nu3, rel=1e-4)


def test_asymptotic_saturating_is_finite():
    kl = KLCertificate("sat:2,1", "zero", "zero", 4.0)
    rep = perturbation_sup_asymptotic(kl, NuCoefficients(1.0, 1.0, 0.0, 1.0), 100.0)
    assert math.isfinite(rep.sup_value) and rep.sup_value > 0


def test_global_constant_matches_asymptotic():
    kl = KLCertificate("linear:1.2", "linear:1", "zero", 5.0, w_bar=0.3)
    nu = NuCoefficients(0.3, 4.0, 2.0, 0.5)
    env = LipschitzEnvelope(lambda r: np.full(np.shape(r), 5.0))
    g = perturbation_sup_global(kl, env, nu, 1.0)
    a = perturbation_sup_asymptotic(kl, nu, 1.0)
    assert g.sup_value == pytest.approx(a.sup_value, rel=1e-12)


def test_global_polynomial_example():
    # phi = r^2 (1 + r) / (r^3 + 1) = r^2 / (r^2 - r + 1): maximum 4/3 at r = 2
    kl = KLCertificate("poly:1,2", "zero", "zero", 1.0)
    env = LipschitzEnvelope("affine:1,1")
    nu = NuCoefficients(1.0, "affine:1,1", "poly:1,3", 1.0)
    rep = perturbation_sup_global(kl, env, nu, 2.0)
    assert rep.sup_value == pytest.approx(4.0 / 3.0, rel=1e-9)
    assert rep.argmax_r == pytest.approx(2.0, rel=1e-4)
    r = np.logspace(-6, 6, 2_000_001)
    assert rep.sup_value >= np.max(r ** 2 / (r ** 2 - r + 1)) * (1 - 1e-12)


def test_global_divergence_detected():
    kl = KLCertificate("poly:1,2", "zero", "zero", 1.0)
    env = LipschitzEnvelope("const:1")
    rep = perturbation_sup_global(kl, env, NuCoefficients(1.0, 1.0, 1.0, 1.0), 1.0)
    assert math.isinf(rep.sup_value) and not rep.feasible


def test_golden_section_and_halfline():
    x, v = golden_section_max(lambda s: -(s - 0.3) ** 2, 0.0, 1.0)
    assert x == pytest.approx(0.3, abs=1e-6) and v == pytest.approx(0.0, abs=1e-12)
    sup, arg = sup_on_halfline(lambda r: np.asarray(r) * np.exp(-np.asarray(r)), tail=0.0)
    assert sup == pytest.approx(math.exp(-1), rel=1e-12) and arg == pytest.approx(1.0, rel=1e-5)


def test_suggest_nu_round_trip():
    cert = ExpCertificate(1.0715, 0.0, L, 0.0, 2.8)
    _, h_mid, h_max = interval_bounds(NU, 4.7982, 3.9633)
    nu, rep = suggest_nu(cert, h_mid, h_max, 3.9633, nu2=10.0)
    assert nu.nu0 == pytest.approx(0.42, rel=1e-6) and nu.nu3 == pytest.approx(1e-6, rel=1e-6)
    _, mid2, max2 = interval_bounds(nu, 4.7982, 3.9633)
    assert mid2 == pytest.approx(h_mid, rel=1e-9) and max2 == pytest.approx(h_max, rel=1e-9)
    assert rep.feasible


def test_suggest_nu_rounded_targets():
    cert = ExpCertificate(1.0715, 0.0, L, 0.0, 2.8)
    nu, _ = suggest_nu(cert, 0.1723e-3, 211.6e-3, 3.9633, nu2=10.0)
    assert nu.nu0 == pytest.approx(0.42, rel=5e-3)
    assert nu.nu3 == pytest.approx(1e-6, rel=5e-2)
    _, mid, top = interval_bounds(nu, 4.7982, 3.9633)
    assert mid == pytest.approx(0.1723e-3, rel=1e-9) and top == pytest.approx(211.6e-3, rel=1e-9)


def test_suggest_nu_limits_and_errors():
    cert = ExpCertificate(1.0715, 0.0, L, 0.0, 2.8)
    nu, rep = suggest_nu(cert, 1e-3, 1e-3, 3.9633)
    assert nu.nu2 == 0.0 and not rep.feasible
    nu, rep = suggest_nu(cert, 0.05, 0.2, 3.9633)
    assert not rep.feasible and rep.margin < 0
    with pytest.raises(ContractViolation):
        suggest_nu(cert, 0.3, 0.2, 3.9633)


def test_report_semantics():
    assert TuningReport.from_sup(1.0, 2.0, 1.0).feasible
    rep = TuningReport.from_sup(1.5, 2.0, 1.0)
    assert not rep.feasible and rep.margin == -0.5
