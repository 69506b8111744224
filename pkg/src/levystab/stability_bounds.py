"""Hellinger-type distances between martingale measures and option-price gap bounds.

For a pair of Lévy laws ``P`` (base) and ``P~`` (tilde) with martingale measures
``Q`` and ``Q~`` chosen by the same selector, all Hellinger quantities are
deterministic and linear in the horizon ``T``.  Every integral is taken against
the base Lévy measure ``nu``; ``Y = dnu~/dnu``.

Conventions
-----------
* ``A = 4 a T int |e^x - 1| e^{kx} dnu`` carries the factor ``T``.
* Payoff growth ``(c, d)`` means ``|g| <= c S_T + d``.
"""
from __future__ import annotations

import itertools
import json
import math
from dataclasses import asdict, dataclass, field
from typing import Any, Callable, Mapping, Sequence

import numpy as np

from .errors import (
    DivergenceError,
    DomainError,
    EnvelopeError,
    EquivalenceError,
    IntegrabilityError,
    LevyError,
)
from .levy_core import LevyModel, QuadratureConfig, integrate_levy
from .measure_change import GirsanovPair, MeasureSelector, girsanov_for
from .parametric import ParametricFamily, check_equivalence, density_ratio, equivalent_drift

__all__ = [
    "ModelPair",
    "EnvelopeConstants",
    "BoundReport",
    "ParametricBound",
    "rho_pair",
    "constant_A",
    "envelope_for",
    "processes_UVR",
    "hellinger_T",
    "variation_bounds",
    "price_gap_bound_thm1",
    "price_gap_bound_cor1",
    "esscher_gap_bound_eq14",
    "memm_gap_bound_m12",
    "parametric_bound_thm2",
    "convergence_curve_cor3",
    "compute_bound_report",
    "equivalent_drift",
    "ENVELOPE_GRID",
]

ENVELOPE_GRID = np.linspace(-20.0, 20.0, 1000)


@dataclass(frozen=True)
class ModelPair:
    base: LevyModel
    tilde: LevyModel
    selector: MeasureSelector
    T: float = 1.0

    def __post_init__(self):
        if not self.T > 0:
            raise DomainError("maturity T must be positive")
        object.__setattr__(self, "T", float(self.T))

    def swapped(self) -> "ModelPair":
        return ModelPair(self.tilde, self.base, self.selector, self.T)

    def check(self) -> None:
        check_equivalence(self.base, self.tilde)

    def to_dict(self) -> dict[str, Any]:
        return {"base": self.base.to_dict(), "tilde": self.tilde.to_dict(),
                "selector": self.selector.to_dict(), "T": self.T}

    @classmethod
    def from_dict(cls, data: Mapping[str, Any]) -> "ModelPair":
        return cls(LevyModel.from_dict(data["base"]), LevyModel.from_dict(data["tilde"]),
                   MeasureSelector.from_dict(data["selector"]), float(data.get("T", 1.0)))


@dataclass(frozen=True)
class EnvelopeConstants:
    """``Y^Q, Y^Q~ <= a e^{kx}``; ``certified`` records whether the grid check passed."""

    a: float
    k: float
    certified: bool = True
    rule: str = ""

    def to_dict(self) -> dict[str, Any]:
        return asdict(self)


@dataclass
class BoundReport:
    rho_QQ: float
    rho_PP: float
    A: float
    U_T: float
    V_T: float
    R_T: float
    h_T_PP: float
    bound_thm1: float
    bound_cor1: float
    bound_eq14: float | None
    bound_m12: float | None
    variation_bound_h1: float
    metadata: dict[str, Any] = field(default_factory=dict)

    def to_dict(self) -> dict[str, Any]:
        return asdict(self)

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True, indent=2)


# ---------------------------------------------------------------------------
# Girsanov data for both legs
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class _Legs:
    pair: ModelPair
    g: GirsanovPair
    g_tilde: GirsanovPair
    Y: Callable[[float], float]

    @property
    def breakpoints(self) -> tuple[float, ...]:
        return self.g.zero_points() + self.g_tilde.zero_points()


def _legs(pair: ModelPair, cfg: QuadratureConfig | None = None,
          girsanov: tuple[GirsanovPair, GirsanovPair] | None = None) -> _Legs:
    pair.check()
    if girsanov is None:
        g = girsanov_for(pair.selector, pair.base, cfg)
        g_t = g if pair.tilde == pair.base else girsanov_for(pair.selector, pair.tilde, cfg)
    else:
        g, g_t = girsanov
    return _Legs(pair, g, g_t, density_ratio(pair.base, pair.tilde))


def _sqrt_gap_sq(a: float, b: float) -> float:
    d = math.sqrt(a) - math.sqrt(b)
    return d * d


def _integrate(legs: _Legs, f, cfg, label: str) -> float:
    try:
        return integrate_levy(legs.pair.base, f, cfg, order=2, breakpoints=legs.breakpoints)
    except DivergenceError as exc:
        raise IntegrabilityError(f"{label} diverges ({exc.tail or 'unknown'} tail): {exc}",
                                 tail=exc.tail) from None


def _rho_densities(legs: _Legs):
    """Integrands of ``rho(Q, Q~)`` and ``rho(P, P~)`` against ``nu``."""
    g, g_t, Y = legs.g, legs.g_tilde, legs.Y
    return (lambda x: _sqrt_gap_sq(g_t.Y(x), g.Y(x))), (lambda x: _sqrt_gap_sq(1.0, Y(x)))


def rho_pair(pair: ModelPair, cfg: QuadratureConfig | None = None, *, _legs_cache: _Legs | None = None):
    """``(rho_T(Q, Q~), rho_T(P, P~)) = (T int (sqrt Y^Q~ - sqrt Y^Q)^2 dnu, T int (1 - sqrt Y)^2 dnu)``."""
    legs = _legs_cache or _legs(pair, cfg)
    if not pair.base.has_jumps:
        return 0.0, 0.0
    dqq, dpp = _rho_densities(legs)
    T = pair.T
    return T * _integrate(legs, dqq, cfg, "rho(Q,Q~)"), T * _integrate(legs, dpp, cfg, "rho(P,P~)")


def _growth_of(g: GirsanovPair | float, kind: str) -> GirsanovPair:
    if isinstance(g, GirsanovPair):
        return g
    lam = float(g)
    return GirsanovPair.memm(lam) if kind == "memm" else GirsanovPair.esscher(lam)


def _on_support(model: LevyModel | None) -> np.ndarray:
    x = ENVELOPE_GRID
    if model is None or not model.has_jumps:
        return x[x != 0]
    keep = ((x > 0) & model.has_right) | ((x < 0) & model.has_left)
    return x[keep]


def _certify(env_a: float, env_k: float, pairs: Sequence[GirsanovPair], model) -> bool:
    x = _on_support(model)
    bound = env_a * np.exp(env_k * x) * (1.0 + 1e-12)
    return all(bool(np.all(p.Y_array(x) <= bound)) for p in pairs)


def envelope_for(selector: MeasureSelector | str, lam, lam_tilde, model: LevyModel | None = None) -> EnvelopeConstants:
    """Envelope ``(a, k)`` with ``Y^Q, Y^Q~ <= a e^{kx}``.

    ``lam``/``lam_tilde`` are tilt parameters or :class:`GirsanovPair` objects (the
    latter is required for f^q).  The Esscher and MEMM envelopes follow the closed
    rules; their certificate on ``[-20, 20]`` is reported, not enforced.  The f^q
    envelope is fitted on the grid and must certify.
    """
    kind = selector.kind if isinstance(selector, MeasureSelector) else str(selector).lower()
    if kind == "fq":
        if not (isinstance(lam, GirsanovPair) and isinstance(lam_tilde, GirsanovPair)):
            raise DomainError("f^q envelopes need the Girsanov pairs")
        pairs = (lam, lam_tilde)
        g_right = max(p.growth()[1] for p in pairs)
        if not math.isfinite(g_right) and g_right > 0:
            raise EnvelopeError("f^q density ratio grows faster than any exponential")
        k = max(0.0, math.ceil(max(g_right, 0.0) * 2.0 - 1e-12) / 2.0)
        x = _on_support(model)
        w = np.exp(-k * x)
        a = max(1.0, max(float(np.max(p.Y_array(x) * w)) for p in pairs))
        if not math.isfinite(a):
            raise EnvelopeError("f^q envelope is not finite on the certification grid")
        if not _certify(a, k, pairs, model):
            raise EnvelopeError(f"f^q envelope (a={a:g}, k={k:g}) failed grid certification")
        return EnvelopeConstants(a, k, True, "fq grid fit")
    p, p_t = _growth_of(lam, kind), _growth_of(lam_tilde, kind)
    l1, l2 = p.lam, p_t.lam
    if kind == "esscher":
        if l1 <= 0 and l2 <= 0:
            a, k, rule = 1.0, 0.0, "esscher, non-positive tilts"
        else:
            a, k, rule = 1.0, max(l1, l2, 0.0), "esscher, general"
    elif kind == "memm":
        if l1 > 0 or l2 > 0:
            raise EnvelopeError("MEMM envelope requires non-positive tilts")
        a, k, rule = math.exp(max(abs(l1), abs(l2))), 0.0, "memm, non-positive tilts"
    else:
        raise DomainError(f"unknown selector {kind!r}")
    return EnvelopeConstants(a, k, _certify(a, k, (p, p_t), model), rule)


def constant_A(pair: ModelPair, env: EnvelopeConstants, cfg: QuadratureConfig | None = None) -> float:
    """``A = 4 a T int |e^x - 1| e^{kx} dnu``."""
    m = pair.base
    if not m.has_jumps:
        return 0.0
    if m.has_right:
        N = m.params["N"]
        if not N > 1.0 + env.k:
            raise IntegrabilityError(
                f"int |e^x - 1| e^(kx) dnu diverges on the right tail: N = {N:g} <= 1 + k = {1 + env.k:g}",
                tail="right")
    if m.alpha >= 1.0:
        raise IntegrabilityError(f"int |e^x - 1| dnu diverges at zero for alpha = {m.alpha:g} >= 1", tail="zero")
    k = env.k
    try:
        val = integrate_levy(m, lambda x: abs(math.expm1(x)) * math.exp(k * x), cfg, order=1)
    except DivergenceError as exc:
        raise IntegrabilityError(f"constant A diverges: {exc}", tail=exc.tail) from None
    return 4.0 * env.a * pair.T * val


def _weights(A: float):
    p = lambda x: 0.25 * A * abs(math.expm1(x)) + 1.0
    q = lambda x: 0.25 * A * abs(math.expm1(x)) + math.exp(x)
    f = lambda x: 0.5 * A * abs(math.expm1(x)) + max(1.0, math.exp(x))
    return p, q, f


def processes_UVR(pair: ModelPair, env: EnvelopeConstants, cfg: QuadratureConfig | None = None, *,
                  A: float | None = None, _legs_cache: _Legs | None = None) -> tuple[float, float, float]:
    """``U_T, V_T, R_T``: weighted ``rho(Q,Q~)`` plus ``a e^{kx}``-weighted ``rho(P,P~)``."""
    if not pair.base.has_jumps:
        return 0.0, 0.0, 0.0
    legs = _legs_cache or _legs(pair, cfg)
    if A is None:
        A = constant_A(pair, env, cfg)
    dqq, dpp = _rho_densities(legs)
    a, k, T = env.a, env.k, pair.T
    out = []
    for name, w in zip("UVR", _weights(A)):
        def integrand(x, w=w):
            return w(x) * (dqq(x) + a * math.exp(k * x) * dpp(x))
        out.append(T * _integrate(legs, integrand, cfg, name))
    return tuple(out)


def _drift_defect(base: LevyModel, tilde: LevyModel, cfg) -> float:
    """``b~ - b - int l (Y - 1) dnu``."""
    return tilde.b - equivalent_drift(base, tilde, cfg)


def hellinger_T(pair: ModelPair, cfg: QuadratureConfig | None = None) -> float:
    """``h_T(1/2, P, P~) = T [beta^2 c / 8 + int (1 - sqrt Y)^2 dnu / 2]``."""
    base, tilde = pair.base, pair.tilde
    check_equivalence(base, tilde)
    defect = _drift_defect(base, tilde, cfg)
    gauss = 0.0
    if base.c > 0:
        beta = defect / base.c
        gauss = 0.125 * beta * beta * base.c
    elif abs(defect) > 1e-9 * max(1.0, abs(base.b), abs(tilde.b)):
        raise EquivalenceError(
            f"pure-jump laws with drift defect {defect:.3g} are singular "
            "(b~ must equal b + int l (Y - 1) dnu)")
    jumps = 0.0
    if base.has_jumps:
        Y = density_ratio(base, tilde)
        jumps = integrate_levy(base, lambda x: _sqrt_gap_sq(1.0, Y(x)), cfg, order=2)
    return pair.T * (gauss + 0.5 * jumps)


def variation_bounds(h_T: float, eps: float | None = None) -> tuple[float, float]:
    """Variation-distance bounds ``4 sqrt(h_T)`` and ``3 sqrt(2 eps) + 2 1{h_T >= eps}``.

    Without ``eps`` the second bound is its infimum over ``eps > h_T``, ``3 sqrt(2 h_T)``.
    """
    if h_T < 0:
        raise DomainError("Hellinger process must be nonnegative")
    b1 = 4.0 * math.sqrt(h_T)
    if eps is None:
        return b1, 3.0 * math.sqrt(2.0 * h_T)
    return b1, 3.0 * math.sqrt(2.0 * eps) + (2.0 if h_T >= eps else 0.0)


def price_gap_bound_thm1(U_T: float, V_T: float, c_growth: float, d_growth: float) -> float:
    return 4.0 * c_growth * math.sqrt(U_T) + 4.0 * d_growth * math.sqrt(V_T)


def price_gap_bound_cor1(R_T: float, c_growth: float, d_growth: float) -> float:
    return 3.0 * math.sqrt(2.0) * (c_growth + d_growth) * math.sqrt(R_T)


def _tilt_gap_bound(pair: ModelPair, lam: float, lam_tilde: float, moment, cfg) -> float:
    m = pair.base
    if not m.has_jumps:
        return 0.0
    T = pair.T
    A = constant_A(pair, EnvelopeConstants(1.0, 0.0), cfg)
    f = _weights(A)[2]
    Y = density_ratio(m, pair.tilde)
    first = integrate_levy(m, lambda x: f(x) * moment(x), cfg, order=2) if lam != lam_tilde else 0.0
    second = integrate_levy(m, lambda x: f(x) * _sqrt_gap_sq(1.0, Y(x)), cfg, order=2)
    return T * (lam - lam_tilde) ** 2 * first + T * second


def esscher_gap_bound_eq14(pair: ModelPair, lam: float, lam_tilde: float,
                           cfg: QuadratureConfig | None = None) -> tuple[float, bool]:
    """``T (lam - lam~)^2 int f x^2 dnu + T int f (sqrt dnu - sqrt dnu~)^2`` with ``a = 1, k = 0``.

    Returns ``(value, fallback)``; for a positive tilt the general R-type bound
    ``3 sqrt(2) sqrt(R_T)`` (call growth) with the general envelope is returned
    and ``fallback`` is true.
    """
    if lam > 0 or lam_tilde > 0:
        return _fallback(pair, GirsanovPair.esscher(lam), GirsanovPair.esscher(lam_tilde), cfg), True
    return _tilt_gap_bound(pair, lam, lam_tilde, lambda x: x * x, cfg), False


def memm_gap_bound_m12(pair: ModelPair, lam: float, lam_tilde: float,
                       cfg: QuadratureConfig | None = None) -> tuple[float, bool]:
    """As :func:`esscher_gap_bound_eq14` with ``(e^x - 1)^2`` in place of ``x^2``."""
    if lam > 0 or lam_tilde > 0:
        return _fallback(pair, GirsanovPair.memm(lam), GirsanovPair.memm(lam_tilde), cfg), True
    return _tilt_gap_bound(pair, lam, lam_tilde, lambda x: math.expm1(x) ** 2, cfg), False


def _fallback(pair: ModelPair, g: GirsanovPair, g_t: GirsanovPair, cfg) -> float:
    env = envelope_for(pair.selector, g, g_t, pair.base)
    legs = _legs(pair, cfg, (g, g_t))
    _, _, R = processes_UVR(pair, env, cfg, _legs_cache=legs)
    return price_gap_bound_cor1(R, 1.0, 0.0)


def compute_bound_report(pair: ModelPair, growth: tuple[float, float] = (1.0, 0.0),
                         cfg: QuadratureConfig | None = None) -> BoundReport:
    """All intermediate quantities and bounds for one model pair."""
    legs = _legs(pair, cfg)
    g, g_t = legs.g, legs.g_tilde
    kind = pair.selector.kind
    env_args = (g, g_t) if kind == "fq" else (g.lam, g_t.lam)
    env = envelope_for(pair.selector, *env_args, pair.base)
    rho_qq, rho_pp = rho_pair(pair, cfg, _legs_cache=legs)
    A = constant_A(pair, env, cfg)
    U, V, R = processes_UVR(pair, env, cfg, A=A, _legs_cache=legs)
    h = hellinger_T(pair, cfg)
    c_g, d_g = growth
    b14 = b12 = None
    flags: dict[str, Any] = {
        "A_includes_T": True,
        "envelope_certified": env.certified,
        "gaussian_only_difference": bool(
            pair.base.c > 0 and rho_pp == 0.0 and pair.base.b != pair.tilde.b),
    }
    if kind == "esscher":
        b14, flags["eq14_fallback"] = esscher_gap_bound_eq14(pair, g.lam, g_t.lam, cfg)
    elif kind == "memm":
        b12, flags["m12_fallback"] = memm_gap_bound_m12(pair, g.lam, g_t.lam, cfg)
    h1, h2 = variation_bounds(h)
    meta = {
        "pair": pair.to_dict(),
        "girsanov": {"base": g.to_dict(), "tilde": g_t.to_dict()},
        "envelope": env.to_dict(),
        "growth": {"c": c_g, "d": d_g},
        "variation_bound_h2_inf": h2,
        "flags": flags,
    }
    return BoundReport(rho_qq, rho_pp, A, U, V, R, h,
                       price_gap_bound_thm1(U, V, c_g, d_g), price_gap_bound_cor1(R, c_g, d_g),
                       b14, b12, h1, meta)


# ---------------------------------------------------------------------------
# parametric bounds
# ---------------------------------------------------------------------------

@dataclass
class ParametricBound:
    value: float
    exceed_prob: float
    sup_R_T: float
    sup_point: list[float] | None
    eps: float
    n_grid: int
    excluded: list[dict[str, Any]]
    certified: bool

    def to_dict(self) -> dict[str, Any]:
        return asdict(self)


def _ball_grid(theta: np.ndarray, eps: float) -> list[np.ndarray]:
    offsets = (-eps, 0.0, eps) if eps > 0 else (0.0,)
    pts, seen = [], set()
    for off in itertools.product(offsets, repeat=theta.size):
        key = tuple(off)
        if key in seen:
            continue
        seen.add(key)
        pts.append(theta + np.asarray(off))
    return pts


def sup_R_over_ball(family: ParametricFamily, theta: Sequence[float], eps: float,
                    selector: MeasureSelector, T: float = 1.0,
                    cfg: QuadratureConfig | None = None) -> tuple[float, list[float] | None, int, list[dict[str, Any]]]:
    """Max of ``R_T(theta, theta')`` over the 3-point-per-axis grid of the max-norm ball."""
    theta = np.asarray(theta, dtype=float)
    base = family.model(theta, cfg)
    g = girsanov_for(selector, base, cfg)
    grid = _ball_grid(theta, eps)
    best, arg, excluded = 0.0, None, []
    for point in grid:
        try:
            tilde = family.model(point, cfg)
            pair = ModelPair(base, tilde, selector, T)
            legs = _legs(pair, cfg, (g, girsanov_for(selector, tilde, cfg)))
            env_args = (legs.g, legs.g_tilde) if selector.kind == "fq" else (legs.g.lam, legs.g_tilde.lam)
            env = envelope_for(selector, *env_args, base)
            _, _, R = processes_UVR(pair, env, cfg, _legs_cache=legs)
        except (LevyError, ValueError) as exc:
            excluded.append({"theta": [float(v) for v in point], "reason": f"{type(exc).__name__}: {exc}"})
            continue
        if R > best or arg is None:
            best, arg = max(best, R), [float(v) for v in point]
    return best, arg, len(grid), excluded


def parametric_bound_thm2(family: ParametricFamily, theta: Sequence[float], samples: Sequence[Sequence[float]],
                          eps: float, growth: tuple[float, float], selector: MeasureSelector,
                          T: float = 1.0, cfg: QuadratureConfig | None = None) -> ParametricBound:
    """``2(c+d) P(|theta^ - theta| > eps) + 3 sqrt(2) (c+d) sqrt(sup_{ball} R_T)``.

    The exceedance probability is the empirical fraction of ``samples`` outside the
    max-norm ball; the supremum runs over the 3-point-per-axis grid.  Grid points
    whose pair is not equivalent or not solvable are excluded and the result is
    marked uncertified.
    """
    samples = np.atleast_2d(np.asarray(samples, dtype=float))
    if samples.size == 0:
        raise DomainError("at least one estimator sample is required")
    if eps < 0:
        raise DomainError("eps must be nonnegative")
    theta = np.asarray(theta, dtype=float)
    dist = np.max(np.abs(samples - theta[None, :]), axis=1)
    exceed = float(np.mean(dist > eps))
    sup_R, arg, n_grid, excluded = sup_R_over_ball(family, theta, eps, selector, T, cfg)
    cd = growth[0] + growth[1]
    value = 2.0 * cd * exceed + price_gap_bound_cor1(sup_R, *growth)
    return ParametricBound(value, exceed, sup_R, arg, float(eps), n_grid, excluded, not excluded)


def convergence_curve_cor3(family: ParametricFamily, estimator, sample_sizes: Sequence[int], *,
                           batches: int = 50, dt: float = 1.0, payoff=None,
                           selector: MeasureSelector | None = None, T: float = 1.0, r: float = 0.0,
                           seed: int = 0, quantile: float = 0.95,
                           cfg: QuadratureConfig | None = None) -> list[dict[str, Any]]:
    """Empirical price error of plug-in estimates versus the parametric bound, per sample size.

    For each ``n``: ``batches`` return samples of length ``n`` are drawn from the
    reference law, ``estimator`` maps each to ``theta^``, and the table row holds
    ``eps_n`` (the ``quantile`` of ``|theta^ - theta|``), ``sup R_T`` over the
    ``eps_n``-ball, the bound, the mean absolute price error and its standard error.
    """
    from .estimation import estimator_distribution
    from .pricing import PayoffSpec, model_price

    payoff = payoff or PayoffSpec.call(1.0)
    selector = selector or MeasureSelector("esscher", rate=r)
    theta = family.theta0
    ref_price = model_price(family.reference, selector, payoff, T, r, cfg)
    rows = []
    ss = np.random.SeedSequence(seed)
    for n, child in zip(sample_sizes, ss.spawn(len(sample_sizes))):
        dist = estimator_distribution(family, estimator, int(n), batches, child, dt=dt)
        thetas = dist.thetas
        errors, failed = [], dist.failed
        for th in thetas:
            try:
                p = model_price(family.model(th, cfg), selector, payoff, T, r, cfg)
            except (LevyError, ValueError):
                failed += 1
                continue
            errors.append(abs(p - ref_price))
        errors = np.asarray(errors)
        eps_n = float(np.quantile(dist.distances(theta), quantile)) if len(thetas) else math.nan
        pb = parametric_bound_thm2(family, theta, thetas, eps_n, payoff.growth, selector, T, cfg)
        rows.append({
            "n": int(n),
            "eps_n": eps_n,
            "sup_R_T": pb.sup_R_T,
            "bound": pb.value,
            "empirical_gap": float(errors.mean()) if errors.size else math.nan,
            "stderr": float(errors.std(ddof=1) / math.sqrt(errors.size)) if errors.size > 1 else 0.0,
            "exceed_prob": pb.exceed_prob,
            "certified": pb.certified,
            "n_excluded": len(pb.excluded),
            "failed_batches": failed,
        })
    return rows
