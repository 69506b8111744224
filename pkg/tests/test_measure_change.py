from __future__ import annotations

import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from levystab import DomainError, IntegrabilityError, NoSolutionError
from levystab.levy_core import LevyModel, integrate_levy, truncation
from levystab.measure_change import (
    GirsanovPair,
    MeasureSelector,
    TiltedTriplet,
    esscher_lambda,
    fq_parameters,
    girsanov_for,
    hat_triplet,
    martingale_residual,
    memm_lambda,
    memm_sign_classify,
    tilted_triplet,
)
from oracles import vg_esscher_oracle

VG = LevyModel.vg(1.0, 5.0, 5.0)
CGMY_HALF = LevyModel.cgmy(1.0, 5.0, 5.0, 0.5)


def test_esscher_symmetric_vg_tilt_is_minus_half():
    # symmetric VG with zero compensated drift: lam* = (N - M - 1) / 2
    assert esscher_lambda(VG, 0.0) == pytest.approx(-0.5, abs=1e-12)


@pytest.mark.parametrize("C,M,N,b,r", [(1.0, 4.0, 7.0, 0.1, 0.05), (0.5, 3.0, 10.0, -0.2, 0.0),
                                         (2.0, 6.0, 4.0, 0.0, 0.03)])
def test_esscher_vg_matches_log_closed_form(C, M, N, b, r):
    m = LevyModel.vg(C, M, N, b=b)
    b0 = b - C * (-math.expm1(-N) / N - (-math.expm1(-M) / M))  # int_{|x|<=1} x nu(dx)
    assert esscher_lambda(m, r) == pytest.approx(vg_esscher_oracle(C, M, N, b0, r), abs=1e-10)


@settings(max_examples=20, deadline=None)
@given(b=st.floats(-0.5, 0.5), c=st.floats(0.01, 0.5), r=st.floats(0.0, 0.1))
def test_esscher_black_scholes_closed_form(b, c, r):
    lam = esscher_lambda(LevyModel.black_scholes(b, c), r)
    assert lam == pytest.approx((r - b) / c - 0.5, abs=1e-10)


def test_esscher_report_contains_small_residual():
    lam, rep = esscher_lambda(CGMY_HALF, 0.02, full_output=True)
    assert abs(rep.residual) < 1e-10
    assert rep.bracket[0] <= lam <= rep.bracket[1]


def test_one_sided_pure_jump_without_root_reports_no_solution():
    with pytest.raises(NoSolutionError):
        esscher_lambda(LevyModel.gmy(1.0, 5.0, 0.5, b=2.0), 0.0)


@settings(max_examples=15, deadline=None)
@given(C=st.floats(0.2, 2.0), M=st.floats(2.0, 10.0), N=st.floats(2.0, 10.0),
       alpha=st.sampled_from([0.0, 0.5]), b=st.floats(-0.3, 0.3), r=st.floats(0.0, 0.05))
def test_esscher_solution_makes_discounted_price_a_martingale(C, M, N, alpha, b, r):
    m = LevyModel.cgmy(C, M, N, alpha, b=b)
    try:
        pair = girsanov_for(MeasureSelector("esscher", rate=r), m)
    except NoSolutionError:
        return
    assert abs(martingale_residual(tilted_triplet(m, pair), r)) < 1e-9


def test_esscher_tilt_stays_in_family():
    lam = esscher_lambda(CGMY_HALF, 0.0)
    law = tilted_triplet(CGMY_HALF, GirsanovPair.esscher(lam))
    assert law.family == "cgmy"
    assert law.params["M"] == pytest.approx(5.0 + lam)
    assert law.params["N"] == pytest.approx(5.0 - lam)
    # drift shift int l (e^{lam x} - 1) dnu, checked against an independent quadrature of the tilted measure
    expected = integrate_levy(law, truncation, order=1) - integrate_levy(CGMY_HALF, truncation, order=1)
    assert law.b == pytest.approx(expected, abs=1e-10)


@pytest.mark.parametrize("model", [VG, CGMY_HALF])
def test_memm_root_is_negative_and_solves_the_equation(model):
    lam = memm_lambda(model, 0.0)
    assert lam < 0
    law = tilted_triplet(model, GirsanovPair.memm(lam))
    assert isinstance(law, TiltedTriplet)
    assert abs(martingale_residual(law, 0.0)) < 1e-10


def test_memm_sign_rule_for_heavy_right_tail():
    m = LevyModel.vg(1.0, 5.0, 0.8)
    cls = memm_sign_classify(m, 0.0)
    assert cls.lambda_sign == "Negative"
    assert memm_lambda(m, 0.0) < 0


def test_memm_sign_rule_reports_no_solution_when_fhat_below_rate():
    m = LevyModel.vg(1.0, 5.0, 3.0, b=-1.0)
    cls = memm_sign_classify(m, 0.0)
    assert cls.lambda_sign == "NoSolution"
    assert cls.f_hat0 < 0
    with pytest.raises(NoSolutionError):
        memm_lambda(m, 0.0)


@pytest.mark.parametrize("alpha", [0.5, 1.2])
@pytest.mark.parametrize("r", [0.0, 0.05])
def test_memm_sign_rule_for_symmetric_stable_limit(alpha, r):
    m = LevyModel.cgmy(1.0, 0.0, 0.0, alpha)
    assert memm_sign_classify(m, r).lambda_sign == "Negative"


def test_memm_sign_rule_for_very_heavy_right_tail():
    assert memm_sign_classify(LevyModel.vg(1.0, 5.0, 0.5), 0.0).lambda_sign == "Negative"


def test_memm_sign_rule_cgmy_without_solution():
    m = LevyModel.cgmy(1.0, 5.0, 3.0, 0.5, b=-1.0)
    cls = memm_sign_classify(m, 0.02)
    assert cls.lambda_sign == "NoSolution" and cls.f_hat0 < 0.02
    with pytest.raises(NoSolutionError):
        memm_lambda(m, 0.02)


def test_hat_triplet_mean_rate():
    h = hat_triplet(VG)
    direct = integrate_levy(VG, lambda x: math.expm1(x) - truncation(x))
    assert h.b_hat == pytest.approx(direct, rel=1e-10)
    assert h.c_hat == 0.0
    with pytest.raises(IntegrabilityError):
        hat_triplet(LevyModel.cgmy(1.0, 5.0, 5.0, 1.2))
    with pytest.raises(IntegrabilityError):
        hat_triplet(LevyModel.vg(1.0, 5.0, 0.9))


@pytest.mark.parametrize("q", [2.0, 0.5, 3.0])
@pytest.mark.parametrize("model", [VG, CGMY_HALF])
def test_fq_measure_is_a_martingale_measure(model, q):
    beta, pair, support_ok = fq_parameters(model, q, 0.0)
    assert abs(martingale_residual(tilted_triplet(model, pair), 0.0)) < 1e-10
    kappa = (q - 1.0) * beta
    assert support_ok == (0.0 <= kappa <= 1.0)


def test_fq_positive_part_cuts_the_right_tail():
    beta, pair, ok = fq_parameters(VG, 2.0, 0.0)
    assert beta == pytest.approx(-0.446, abs=2e-3)
    assert not ok
    cut = pair.zero_points()[0]
    assert pair.Y(cut + 1e-6) == 0.0 and pair.Y(cut - 1e-3) > 0.0


def test_fq_q_below_one_keeps_full_support():
    beta, pair, ok = fq_parameters(VG, 0.5, 0.0)
    assert ok
    x = np.linspace(-10, 10, 201)
    assert np.all(pair.Y_array(x[x != 0]) > 0)


def test_fq_rejects_degenerate_exponents():
    with pytest.raises(DomainError):
        fq_parameters(VG, 1.0)
    with pytest.raises(DomainError):
        MeasureSelector("fq", q=0.0)


@pytest.mark.parametrize("kind,kw", [("identity", {}), ("esscher", {"lam": -0.3}), ("memm", {"lam": -0.3}),
                                     ("fq", {"q": 2.0, "beta": -0.2})])
def test_girsanov_pair_scalar_and_array_agree(kind, kw):
    if kind == "identity":
        p = GirsanovPair.identity()
    elif kind == "fq":
        p = GirsanovPair.fq(kw["q"], kw["beta"])
    else:
        p = getattr(GirsanovPair, kind)(kw["lam"])
    x = np.linspace(-3, 3, 13)
    np.testing.assert_allclose(p.Y_array(x), [p.Y(v) for v in x], rtol=1e-14)
    np.testing.assert_allclose([p.ym1(v) + 1 for v in x], [p.Y(v) for v in x], rtol=1e-13)


def test_black_scholes_tilts_coincide_for_all_selectors():
    bs = LevyModel.black_scholes(0.1, 0.04)
    laws = [tilted_triplet(bs, girsanov_for(MeasureSelector(k, q, 0.02), bs))
            for k, q in (("esscher", None), ("memm", None), ("fq", 2.0))]
    for law in laws:
        assert law.b == pytest.approx(0.02 - 0.02, abs=1e-12)  # r - c/2
        assert law.c == 0.04


def test_selector_round_trip():
    s = MeasureSelector("fq", q=0.5, rate=0.01)
    assert MeasureSelector.from_dict(s.to_dict()) == s
    with pytest.raises(DomainError):
        MeasureSelector("bogus")
