from __future__ import annotations

import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from levystab import DivergenceError, DomainError, NoJumpPartError
from levystab.levy_core import (
    DenseExponent,
    LevyModel,
    QuadratureConfig,
    characteristic_exponent,
    exp_moment_domain,
    exponent_function,
    integrate_levy,
    levy_density,
    truncation,
    validate,
)
from oracles import riemann_levy, tempered_stable_density

VG = LevyModel.vg(1.0, 5.0, 5.0)
CGMY_HALF = LevyModel.cgmy(1.0, 5.0, 5.0, 0.5)
CGMY_STEEP = LevyModel.cgmy(0.5, 3.0, 8.0, 1.5, b=0.02, c=0.01)
GMY = LevyModel.gmy(1.0, 5.0, 0.5)
BS = LevyModel.black_scholes(0.05, 0.04)


def oracle_density(m: LevyModel):
    p = m.params
    return lambda x: tempered_stable_density(x, p["C"], p.get("M"), p["N"], m.alpha)


def test_truncation_is_identity_inside_unit_interval():
    assert truncation(0.3) == 0.3
    assert truncation(-1.0) == -1.0
    assert truncation(1.5) == 0.0
    np.testing.assert_array_equal(truncation(np.array([-2.0, 0.5, 3.0])), [0.0, 0.5, 0.0])


def test_density_values_and_support():
    assert levy_density(VG, 1.0) == pytest.approx(math.exp(-5.0))
    assert levy_density(CGMY_HALF, -0.25) == pytest.approx(math.exp(-1.25) / 0.25 ** 1.5)
    with pytest.raises(DomainError):
        levy_density(VG, 0.0)
    with pytest.raises(DomainError):
        levy_density(GMY, -1.0)
    with pytest.raises(NoJumpPartError):
        levy_density(BS, 1.0)


@pytest.mark.parametrize("bad", [
    dict(family="vg", params={"C": -1, "M": 1, "N": 1}),
    dict(family="cgmy", params={"C": 1, "M": 1, "N": 1, "alpha": 2.0}),
    dict(family="bs", c=0.0),
    dict(family="vg", params={"C": 1, "M": 1}),
    dict(family="heston"),
])
def test_invalid_parameters_are_rejected(bad):
    with pytest.raises(DomainError):
        LevyModel.from_dict(bad)


def test_vg_second_moment_is_exact():
    # int x^2 nu(dx) = C (1/M^2 + 1/N^2) Gamma(2) for alpha = 0
    assert integrate_levy(VG, lambda x: x * x) == pytest.approx(0.08, rel=1e-12)


@pytest.mark.parametrize("model", [VG, CGMY_HALF, GMY])
def test_abs_exp_integral_matches_riemann_oracle(model):
    ref = riemann_levy(lambda x: np.abs(np.expm1(x)), oracle_density(model),
                       left=model.has_left, right=model.has_right)
    assert integrate_levy(model, lambda x: abs(math.expm1(x)), order=1) == pytest.approx(ref, rel=1e-6)


def test_order_below_alpha_is_reported_as_divergent():
    with pytest.raises(DivergenceError) as info:
        integrate_levy(CGMY_STEEP, lambda x: abs(x), order=1)
    assert info.value.tail == "zero"


def test_exponential_tail_divergence_is_detected():
    model = LevyModel.vg(1.0, 5.0, 0.5)
    with pytest.raises(DivergenceError):
        characteristic_exponent(model, -1j)


def test_no_jump_part_integrates_to_zero():
    assert integrate_levy(BS, lambda x: x * x) == 0.0


def test_exp_moment_domain_by_family():
    assert exp_moment_domain(VG) == (-5.0, 5.0)
    assert exp_moment_domain(GMY) == (-math.inf, 5.0)
    assert exp_moment_domain(BS) == (-math.inf, math.inf)


def test_black_scholes_exponent_is_gaussian():
    u = 0.7
    assert characteristic_exponent(BS, u) == pytest.approx(1j * 0.05 * u - 0.5 * 0.04 * u * u)


@pytest.mark.parametrize("model", [VG, CGMY_HALF, CGMY_STEEP, GMY])
@pytest.mark.parametrize("u", [0.3, 2.0, 7.5, -1j, 0.5 - 0.5j])
def test_closed_form_exponent_matches_quadrature(model, u):
    closed = complex(exponent_function(model)(np.array([u]))[0])
    quad = characteristic_exponent(model, u)
    assert abs(closed - quad) <= 1e-7 * max(1.0, abs(quad))


def test_dense_rule_matches_closed_form():
    u = np.linspace(-300.0, 300.0, 41)
    dense = DenseExponent(CGMY_HALF, 300.0)(u)
    closed = exponent_function(CGMY_HALF)(u)
    np.testing.assert_allclose(dense, closed, rtol=1e-9, atol=1e-9)


def test_dense_rule_rejects_unresolved_frequencies():
    with pytest.raises(DomainError):
        DenseExponent(VG, 10.0)(np.array([20.0]))


@settings(max_examples=40, deadline=None)
@given(C=st.floats(0.1, 3.0), M=st.floats(1.0, 10.0), N=st.floats(1.5, 10.0),
       alpha=st.sampled_from([0.0, 0.3, 0.7, 1.2]), u=st.floats(-20.0, 20.0))
def test_exponent_properties(C, M, N, alpha, u):
    m = LevyModel.cgmy(C, M, N, alpha, b=0.1, c=0.02)
    psi = exponent_function(m)
    val = complex(psi(np.array([u]))[0])
    # |E e^{iuX}| <= 1 and psi(-u) = conj(psi(u))
    assert val.real <= 1e-12
    assert complex(psi(np.array([-u]))[0]) == pytest.approx(val.conjugate(), abs=1e-10)
    assert abs(complex(psi(np.array([0.0]))[0])) < 1e-12


@settings(max_examples=30, deadline=None)
@given(fam=st.sampled_from(["vg", "cgmy", "gmy", "bs"]), C=st.floats(0.1, 5.0),
       M=st.floats(0.5, 10.0), N=st.floats(0.5, 10.0), a=st.floats(-1.0, 1.9),
       b=st.floats(-1.0, 1.0), c=st.floats(0.0, 0.5))
def test_json_round_trip(fam, C, M, N, a, b, c):
    params = {"vg": {"C": C, "M": M, "N": N}, "cgmy": {"C": C, "M": M, "N": N, "alpha": a},
              "gmy": {"C": C, "N": N, "alpha": a}, "bs": {}}[fam]
    if fam == "bs":
        c = max(c, 1e-3)
    m = LevyModel(fam, b, c, params)
    assert LevyModel.from_json(m.to_json()) == m


def test_validate_flags_special_semimartingale_failure():
    d = validate(LevyModel.cgmy(1.0, 5.0, 0.5, 0.5))
    assert d.checks["special_semimartingale"] is False
    assert validate(VG).ok
    assert validate(BS).ok


def test_quadrature_config_validation():
    with pytest.raises(DomainError):
        QuadratureConfig(rel_tol=-1.0)
