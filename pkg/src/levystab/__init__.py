"""Martingale measures, Hellinger price-gap bounds and stability experiments for exponential Lévy models."""
from __future__ import annotations

from .errors import (
    ConfigError,
    DivergenceError,
    DomainError,
    EnvelopeError,
    EquivalenceError,
    IntegrabilityError,
    LevyError,
    NoJumpPartError,
    NoSolutionError,
    QuadratureError,
    UnsupportedSimulation,
)
from .levy_core import (
    LevyModel,
    QuadratureConfig,
    characteristic_exponent,
    exp_moment_domain,
    integrate_levy,
    levy_density,
    truncation,
    validate,
)
from .measure_change import (
    GirsanovPair,
    MeasureSelector,
    esscher_lambda,
    fq_parameters,
    girsanov_for,
    hat_triplet,
    martingale_residual,
    memm_lambda,
    memm_sign_classify,
    tilted_triplet,
)
from .parametric import ParametricFamily, equivalent_drift
from .pricing import PayoffSpec, PriceEstimate, SimConfig, cf_price, mc_price, payoff_growth, price_gap
from .stability_bounds import BoundReport, EnvelopeConstants, ModelPair, compute_bound_report
from .estimation import ReturnSample, cumulant_estimator, estimator_distribution, simulate_returns

__version__ = "0.1.0"
