from __future__ import annotations

import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from levystab import DomainError, UnsupportedSimulation
from levystab.levy_core import LevyModel
from levystab.measure_change import MeasureSelector, esscher_lambda
from levystab.pricing import (
    PayoffSpec,
    SimConfig,
    cf_price,
    law_under,
    mc_price,
    model_price,
    payoff_growth,
    price_gap,
    simulate_terminal,
)
from oracles import black_call

R = 0.02
ESSCHER = MeasureSelector("esscher", rate=R)
VG = LevyModel.vg(1.0, 5.0, 5.0)
CGMY_HALF = LevyModel.cgmy(1.0, 5.0, 5.0, 0.5)


def test_payoff_growth_constants():
    assert payoff_growth("call", 1.2) == (1.0, 0.0)
    assert payoff_growth("put", 0.9) == (0.0, 0.9)
    assert payoff_growth("custom", declared=(2.0, 0.5)) == (2.0, 0.5)
    with pytest.raises(DomainError):
        payoff_growth("custom")
    with pytest.raises(DomainError):
        payoff_growth("call", -1.0)


@pytest.mark.parametrize("K", [0.6, 0.9, 1.0, 1.1, 1.5])
@pytest.mark.parametrize("T", [0.25, 1.0, 3.0])
def test_black_scholes_call_matches_black_formula(K, T):
    law = law_under(LevyModel.black_scholes(0.07, 0.04), ESSCHER)
    assert cf_price(law, "call", K, T, R).value == pytest.approx(black_call(K, 0.04 * T, R, T), abs=1e-8)


@pytest.mark.parametrize("model", [VG, CGMY_HALF])
def test_put_call_parity(model):
    law = law_under(model, ESSCHER)
    for K in (0.8, 1.0, 1.2):
        c = cf_price(law, "call", K, 1.0, R).value
        p = cf_price(law, "put", K, 1.0, R).value
        assert c - p == pytest.approx(1.0 - K * math.exp(-R), abs=1e-8)


@pytest.mark.parametrize("model,tol", [(LevyModel.black_scholes(0.0, 0.04), 1e-8), (CGMY_HALF, 1e-8),
                                       # C T = 1 gives a kinked density and algebraic convergence
                                       (VG, 2e-7)])
def test_cosine_expansion_is_converged(model, tol):
    law = law_under(model, ESSCHER)
    a = cf_price(law, "put", 1.0, 1.0, R).value
    b = cf_price(law, "put", 1.0, 1.0, R, n_terms=2 ** 14, L=14.0).value
    assert abs(a - b) < tol


@settings(max_examples=15, deadline=None)
@given(K1=st.floats(0.5, 1.5), K2=st.floats(0.5, 1.5))
def test_call_price_is_decreasing_and_convex_bounded(K1, K2):
    law = law_under(VG, ESSCHER)
    lo, hi = sorted((K1, K2))
    c_lo, c_hi = cf_price(law, "call", lo, 1.0, R).value, cf_price(law, "call", hi, 1.0, R).value
    assert c_hi <= c_lo + 1e-10
    # no-arbitrage slope bound: C(K1) - C(K2) <= e^{-rT} (K2 - K1)
    assert c_lo - c_hi <= math.exp(-R) * (hi - lo) + 1e-10
    assert c_hi >= max(1.0 - hi * math.exp(-R), 0.0) - 1e-10


def test_identity_and_constant_payoffs():
    for kind in ("esscher", "memm"):
        law = law_under(CGMY_HALF, MeasureSelector(kind, rate=R))
        assert cf_price(law, PayoffSpec.identity(), T=2.0, r=R).value == pytest.approx(1.0, abs=1e-9)
    law = law_under(VG, ESSCHER)
    assert cf_price(law, PayoffSpec.constant(3.0), T=1.0, r=R).value == pytest.approx(3.0 * math.exp(-R))
    assert mc_price(law, PayoffSpec.constant(3.0), 1.0, R).stderr == 0.0
    with pytest.raises(DomainError):
        cf_price(law, PayoffSpec.custom(lambda s: s ** 2, (1.0, 0.0)))


@pytest.mark.parametrize("model,cutoff", [(LevyModel.black_scholes(0.05, 0.04), 1e-3), (VG, 1e-3), (CGMY_HALF, 1e-3),
                                          (LevyModel.cgmy(1.0, 5.0, 5.0, -0.5), 1e-3),
                                          (LevyModel.cgmy(0.5, 6.0, 8.0, 1.2), 1e-2)])
def test_monte_carlo_agrees_with_cosine_price(model, cutoff):
    law = law_under(model, ESSCHER)
    for payoff in (PayoffSpec.call(1.0), PayoffSpec.put(0.9), PayoffSpec.identity()):
        mc = mc_price(law, payoff, 1.0, R, SimConfig(n_paths=100_000, seed=7, small_jump_cutoff=cutoff))
        cf = cf_price(law, payoff, T=1.0, r=R).value
        assert abs(mc.value - cf) <= 3.5 * mc.stderr


def test_simulation_is_deterministic_and_batch_layout_independent_of_total():
    law = law_under(CGMY_HALF, ESSCHER)
    a = simulate_terminal(law, 1.0, SimConfig(n_paths=30_000, seed=3, batch_size=10_000))
    b = simulate_terminal(law, 1.0, SimConfig(n_paths=30_000, seed=3, batch_size=10_000))
    np.testing.assert_array_equal(a, b)
    c = simulate_terminal(law, 1.0, SimConfig(n_paths=20_000, seed=3, batch_size=10_000))
    np.testing.assert_array_equal(a[:20_000], c)
    assert not np.array_equal(a, simulate_terminal(law, 1.0, SimConfig(n_paths=30_000, seed=4, batch_size=10_000)))


def test_vg_sample_variance_matches_second_cumulant():
    x = simulate_terminal(VG, 1.0, SimConfig(n_paths=200_000, seed=11))
    var = 1.0 * (1 / 25 + 1 / 25)  # C Gamma(2) (M^-2 + N^-2)
    assert x.var() == pytest.approx(var, rel=0.02)


def test_tilted_laws_cannot_be_simulated():
    law = law_under(VG, MeasureSelector("memm", rate=R))
    with pytest.raises(UnsupportedSimulation):
        simulate_terminal(law, 1.0, SimConfig(n_paths=10))


def test_black_scholes_drift_shift_leaves_price_unchanged():
    bs, bs_t = LevyModel.black_scholes(0.01, 0.04), LevyModel.black_scholes(0.09, 0.04)
    gap, se = price_gap(bs, bs_t, ESSCHER, PayoffSpec.call(1.0), 1.0, R)
    assert gap < 1e-12 and se == 0.0
    gap, se = price_gap(bs, bs_t, ESSCHER, PayoffSpec.custom(lambda s: np.maximum(s - 1, 0), (1.0, 0.0)), 1.0, R,
                        sim=SimConfig(n_paths=20_000, seed=1))
    assert gap == 0.0


def test_esscher_price_is_tilted_family_price():
    lam = esscher_lambda(VG, R)
    direct = LevyModel.vg(1.0, 5.0 + lam, 5.0 - lam, b=law_under(VG, ESSCHER).b)
    assert model_price(VG, ESSCHER, PayoffSpec.call(1.0), 1.0, R) == pytest.approx(
        cf_price(direct, "call", 1.0, 1.0, R).value, abs=1e-12)


def test_sim_config_validation():
    with pytest.raises(DomainError):
        SimConfig(n_paths=0)
    assert SimConfig.from_dict(SimConfig(seed=5).to_dict()) == SimConfig(seed=5)
