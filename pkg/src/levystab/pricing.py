"""European option prices under a chosen martingale measure.

Two independent routes: Fourier-cosine expansion of the terminal log-price density
(``cf_price``) and Monte Carlo on exact or near-exact samplers of ``X_T``
(``mc_price``).  ``S_0 = 1`` throughout, so strikes are moneyness ratios.
"""
from __future__ import annotations

import math
from dataclasses import asdict, dataclass, field
from typing import Any, Callable, Mapping

import numpy as np
from scipy import special

from .errors import DomainError, UnsupportedSimulation
from .levy_core import LevyModel, QuadratureConfig, exponent_function, integrate_levy, truncation
from .measure_change import MeasureSelector, TiltedTriplet, girsanov_for, tilted_triplet

__all__ = [
    "PayoffSpec",
    "PriceEstimate",
    "SimConfig",
    "payoff_growth",
    "simulate_terminal",
    "mc_price",
    "cf_price",
    "price_gap",
    "model_price",
    "law_under",
    "cos_interval",
]

COS_L = 10.0
COS_TERMS = 2 ** 10


def payoff_growth(kind: str, K: float | None = None, declared: tuple[float, float] | None = None) -> tuple[float, float]:
    """Constants ``(c, d)`` with ``|g| <= c S_T + d``."""
    kind = kind.lower()
    if kind in ("call", "put"):
        if K is None or K < 0:
            raise DomainError("strike must be nonnegative")
        return (1.0, 0.0) if kind == "call" else (0.0, float(K))
    if kind == "custom":
        if declared is None:
            raise DomainError("custom payoffs must declare their growth constants")
        c, d = (float(v) for v in declared)
        if c < 0 or d < 0:
            raise DomainError("growth constants must be nonnegative")
        return (c, d)
    raise DomainError(f"unknown payoff kind {kind!r}")


@dataclass(frozen=True)
class PayoffSpec:
    """Terminal payoff ``g(S_T)``; ``evaluator`` acts on an array of terminal prices."""

    kind: str
    K: float | None = None
    growth: tuple[float, float] = (1.0, 0.0)
    evaluator: Callable[[np.ndarray], np.ndarray] | None = field(default=None, compare=False)
    label: str = ""

    @classmethod
    def call(cls, K: float) -> "PayoffSpec":
        return cls("call", float(K), payoff_growth("call", K))

    @classmethod
    def put(cls, K: float) -> "PayoffSpec":
        return cls("put", float(K), payoff_growth("put", K))

    @classmethod
    def custom(cls, evaluator, growth: tuple[float, float], label: str = "custom") -> "PayoffSpec":
        return cls("custom", None, payoff_growth("custom", declared=growth), evaluator, label)

    @classmethod
    def identity(cls) -> "PayoffSpec":
        return cls.custom(lambda s: s, (1.0, 0.0), "identity")

    @classmethod
    def constant(cls, value: float) -> "PayoffSpec":
        return cls.custom(lambda s: np.full_like(s, value), (0.0, abs(value)), f"constant:{value!r}")

    def __call__(self, s: np.ndarray) -> np.ndarray:
        if self.kind == "call":
            return np.maximum(s - self.K, 0.0)
        if self.kind == "put":
            return np.maximum(self.K - s, 0.0)
        return self.evaluator(s)

    def to_dict(self) -> dict[str, Any]:
        return {"kind": self.kind, "K": self.K, "growth": list(self.growth), "label": self.label}

    @classmethod
    def from_dict(cls, data: Mapping[str, Any]) -> "PayoffSpec":
        kind = str(data.get("kind", "call")).lower()
        if kind == "call":
            return cls.call(float(data["K"]))
        if kind == "put":
            return cls.put(float(data["K"]))
        if kind == "identity":
            return cls.identity()
        if kind == "constant":
            return cls.constant(float(data["value"]))
        raise DomainError(f"payoff kind {kind!r} cannot be built from a config")


@dataclass(frozen=True)
class PriceEstimate:
    value: float
    stderr: float
    method: str
    n_paths: int = 0
    seed: int | None = None

    def to_dict(self) -> dict[str, Any]:
        return asdict(self)


@dataclass(frozen=True)
class SimConfig:
    n_paths: int = 100_000
    n_steps: int = 1
    seed: int = 0
    small_jump_cutoff: float = 1e-3
    batch_size: int = 50_000

    def __post_init__(self):
        if self.n_paths <= 0 or self.n_steps <= 0 or self.batch_size <= 0:
            raise DomainError("simulation counts must be positive")
        if not self.small_jump_cutoff > 0:
            raise DomainError("small-jump cutoff must be positive")

    def to_dict(self) -> dict[str, Any]:
        return asdict(self)

    @classmethod
    def from_dict(cls, data: Mapping[str, Any]) -> "SimConfig":
        return cls(**{k: data[k] for k in ("n_paths", "n_steps", "seed", "small_jump_cutoff", "batch_size")
                      if k in data})


# ---------------------------------------------------------------------------
# laws under Q
# ---------------------------------------------------------------------------

def law_under(model: LevyModel, selector: MeasureSelector, cfg: QuadratureConfig | None = None):
    return tilted_triplet(model, girsanov_for(selector, model, cfg), cfg)


def _moments(law, T: float, cfg=None) -> tuple[float, float, float]:
    """Mean, variance and fourth cumulant of ``X_T``."""
    mean, var, k4 = law.b, law.c, 0.0
    if law.has_jumps:
        bps = getattr(law, "breakpoints", ())
        mean += integrate_levy(law, lambda x: x - truncation(x), cfg, order=4, breakpoints=bps)
        var += integrate_levy(law, lambda x: x * x, cfg, order=2, breakpoints=bps)
        k4 = integrate_levy(law, lambda x: x ** 4, cfg, order=4, breakpoints=bps)
    return T * mean, T * var, T * k4


def cos_interval(law, T: float, L: float = COS_L, cfg=None) -> tuple[float, float]:
    c1, c2, c4 = _moments(law, T, cfg)
    half = L * math.sqrt(c2 + math.sqrt(c4))
    return c1 - half, c1 + half


def _cos_put(phi, a: float, b: float, K: float, n_terms: int, disc: float) -> float:
    if K <= 0:
        return 0.0
    k_log = math.log(K)
    if k_log <= a:
        return 0.0
    d = min(k_log, b)
    k = np.arange(n_terms)
    w = k * math.pi / (b - a)
    # chi_k = int_a^d e^y cos(w (y - a)) dy, psi_k = int_a^d cos(w (y - a)) dy
    cd, sd = np.cos(w * (d - a)), np.sin(w * (d - a))
    chi = (cd * math.exp(d) - math.exp(a) + w * sd * math.exp(d)) / (1.0 + w * w)
    psi = np.empty(n_terms)
    psi[0] = d - a
    psi[1:] = sd[1:] / w[1:]
    v = 2.0 / (b - a) * (K * psi - chi)
    terms = (phi * np.exp(-1j * w * a)).real * v
    terms[0] *= 0.5
    return disc * float(terms.sum())


class _Fourier:
    """Characteristic function of ``X_T`` on the cosine frequencies plus the forward."""

    def __init__(self, law, T: float, L: float, n_terms: int, cfg=None):
        self.a, self.b = cos_interval(law, T, L, cfg)
        self.n_terms = n_terms
        u = np.arange(n_terms) * math.pi / (self.b - self.a)
        psi = exponent_function(law, u_max=float(u[-1]))
        self.phi = np.exp(T * np.asarray(psi(u)))
        self.forward = float(np.exp(T * np.asarray(psi(np.array([-1j])))).real[0])


def cf_price(law, payoff: PayoffSpec | str, K: float | None = None, T: float = 1.0, r: float = 0.0, *,
             L: float = COS_L, n_terms: int = COS_TERMS, cfg: QuadratureConfig | None = None,
             _fourier: _Fourier | None = None) -> PriceEstimate:
    """Cosine-expansion price of a call, put, identity or constant payoff.

    Puts are expanded directly; calls follow from parity with the forward
    ``E_Q[S_T] = exp(T psi(-i))``.
    """
    if isinstance(payoff, str):
        payoff = PayoffSpec.call(K) if payoff.lower() == "call" else PayoffSpec.put(K)
    disc = math.exp(-r * T)
    if payoff.kind == "custom" and payoff.label.startswith("constant:"):
        return PriceEstimate(disc * float(payoff(np.array([1.0]))[0]), 0.0, "CF")
    if payoff.kind == "custom" and payoff.label != "identity":
        raise DomainError("characteristic-function pricing supports call, put, identity and constant payoffs")
    fr = _fourier or _Fourier(law, T, L, n_terms, cfg)
    if payoff.kind == "custom":
        return PriceEstimate(disc * fr.forward, 0.0, "CF")
    put = _cos_put(fr.phi, fr.a, fr.b, payoff.K, fr.n_terms, disc)
    if payoff.kind == "put":
        return PriceEstimate(put, 0.0, "CF")
    return PriceEstimate(put + disc * (fr.forward - payoff.K), 0.0, "CF")


def model_price(model: LevyModel, selector: MeasureSelector, payoff: PayoffSpec, T: float = 1.0,
                r: float = 0.0, cfg: QuadratureConfig | None = None) -> float:
    """CF price of ``payoff`` under the measure ``selector`` picks for ``model``."""
    sel = selector if selector.rate == r else MeasureSelector(selector.kind, selector.q, r)
    return cf_price(law_under(model, sel, cfg), payoff, T=T, r=r, cfg=cfg).value


# ---------------------------------------------------------------------------
# simulation
# ---------------------------------------------------------------------------

def _upper_gamma(s: float, x: float) -> float:
    """Upper incomplete gamma ``Gamma(s, x)`` for any real ``s`` and ``x > 0``."""
    if s > 0:
        return float(special.gamma(s) * special.gammaincc(s, x))
    if s == 0:
        return float(special.exp1(x))
    return (_upper_gamma(s + 1.0, x) - x ** s * math.exp(-x)) / s


@dataclass(frozen=True)
class _Side:
    """One half-line of a tempered-stable Lévy measure, ``C x^{-1-alpha} e^{-rate x}``."""

    C: float
    rate: float
    alpha: float

    def mass_above(self, eps: float) -> float:
        return self.C * self.rate ** self.alpha * _upper_gamma(-self.alpha, self.rate * eps)

    def first_moment_between(self, lo: float, hi: float) -> float:
        s = 1.0 - self.alpha
        r = self.rate
        return self.C * r ** (-s) * (_upper_gamma(s, r * lo) - _upper_gamma(s, r * hi))

    def second_moment_below(self, eps: float) -> float:
        s = 2.0 - self.alpha
        return self.C * self.rate ** (-s) * float(special.gamma(s) * special.gammainc(s, self.rate * eps))

    def sample_above(self, rng: np.random.Generator, n: int, eps: float) -> np.ndarray:
        """Pareto proposal ``eps U^{-1/alpha}`` thinned by ``exp(-rate (x - eps))``."""
        out = np.empty(n)
        filled = 0
        a = self.alpha
        while filled < n:
            m = int((n - filled) * 1.3) + 16
            x = eps * rng.random(m) ** (-1.0 / a)
            keep = x[rng.random(m) < np.exp(-self.rate * (x - eps))]
            take = min(keep.size, n - filled)
            out[filled:filled + take] = keep[:take]
            filled += take
        return out


def _sides(model: LevyModel) -> list[tuple[float, _Side]]:
    p, a = model.params, model.alpha
    sides = [(1.0, _Side(p["C"], p["N"], a))]
    if model.has_left:
        sides.append((-1.0, _Side(p["C"], p["M"], a)))
    return sides


def _simulate_batch(model: LevyModel, T: float, n: int, rng: np.random.Generator, eps: float) -> np.ndarray:
    c = model.c
    if not model.has_jumps:
        return model.b * T + math.sqrt(c * T) * rng.standard_normal(n)
    a = model.alpha
    sides = _sides(model)
    if a == 0.0:
        # tempered alpha = 0: difference of gamma variables, drift excludes int l dnu
        drift = model.b - sum(sgn * s.first_moment_between(0.0, 1.0) for sgn, s in sides)
        x = np.full(n, drift * T)
        for sgn, s in sides:
            x += sgn * rng.gamma(s.C * T, 1.0 / s.rate, size=n)
    elif a < 0:
        drift = model.b - sum(sgn * s.first_moment_between(0.0, 1.0) for sgn, s in sides)
        x = np.full(n, drift * T)
        for sgn, s in sides:
            lam = s.C * float(special.gamma(-a)) * s.rate ** a
            counts = rng.poisson(lam * T, size=n)
            jumps = rng.gamma(-a, 1.0 / s.rate, size=int(counts.sum()))
            x += sgn * np.bincount(np.repeat(np.arange(n), counts), weights=jumps, minlength=n)
    else:
        drift = model.b - sum(sgn * s.first_moment_between(eps, 1.0) for sgn, s in sides)
        small_var = sum(s.second_moment_below(eps) for _, s in sides)
        x = np.full(n, drift * T)
        for sgn, s in sides:
            counts = rng.poisson(s.mass_above(eps) * T, size=n)
            jumps = s.sample_above(rng, int(counts.sum()), eps)
            x += sgn * np.bincount(np.repeat(np.arange(n), counts), weights=jumps, minlength=n)
        c = c + small_var
    if c > 0:
        x += math.sqrt(c * T) * rng.standard_normal(n)
    return x


def simulate_terminal(law, T: float, cfg: SimConfig) -> np.ndarray:
    """``cfg.n_paths`` i.i.d. draws of ``X_T``; batch ``i`` uses the ``i``-th spawned seed."""
    if isinstance(law, TiltedTriplet) or not isinstance(law, LevyModel):
        raise UnsupportedSimulation(
            "laws outside the parametric families (MEMM and f^q tilts) are priced with cf_price")
    if law.family not in ("bs", "vg", "gmy", "cgmy"):
        raise UnsupportedSimulation(f"no sampler for family {law.family!r}")
    if law.has_jumps and law.alpha >= 2:
        raise UnsupportedSimulation("alpha must be below 2")
    n_batches = -(-cfg.n_paths // cfg.batch_size)
    seeds = np.random.SeedSequence(cfg.seed).spawn(n_batches)
    out = np.empty(cfg.n_paths)
    for i, ss in enumerate(seeds):
        lo = i * cfg.batch_size
        hi = min(cfg.n_paths, lo + cfg.batch_size)
        out[lo:hi] = _simulate_batch(law, T, hi - lo, np.random.default_rng(ss), cfg.small_jump_cutoff)
    return out


def mc_price(law, payoff: PayoffSpec, T: float = 1.0, r: float = 0.0,
             cfg: SimConfig | None = None) -> PriceEstimate:
    cfg = cfg or SimConfig()
    disc = math.exp(-r * T)
    if payoff.kind == "custom" and payoff.label.startswith("constant:"):
        return PriceEstimate(disc * float(payoff(np.array([1.0]))[0]), 0.0, "MC", cfg.n_paths, cfg.seed)
    values = payoff(np.exp(simulate_terminal(law, T, cfg)))
    return PriceEstimate(disc * float(values.mean()),
                         disc * float(values.std(ddof=1)) / math.sqrt(values.size),
                         "MC", cfg.n_paths, cfg.seed)


def _cf_supported(payoff: PayoffSpec) -> bool:
    return payoff.kind in ("call", "put") or payoff.label == "identity" or payoff.label.startswith("constant:")


def price_gap(base: LevyModel, tilde: LevyModel, selector: MeasureSelector, payoff: PayoffSpec,
              T: float = 1.0, r: float = 0.0, sim: SimConfig | None = None,
              cfg: QuadratureConfig | None = None, method: str = "auto") -> tuple[float, float]:
    """``|C_T - C~_T|`` and its standard error; CF when the payoff allows it, else MC with common seeds."""
    sel = selector if selector.rate == r else MeasureSelector(selector.kind, selector.q, r)
    law, law_t = law_under(base, sel, cfg), law_under(tilde, sel, cfg)
    if method == "cf" or (method == "auto" and _cf_supported(payoff)):
        p = cf_price(law, payoff, T=T, r=r, cfg=cfg).value
        p_t = cf_price(law_t, payoff, T=T, r=r, cfg=cfg).value
        return abs(p - p_t), 0.0
    sim = sim or SimConfig()
    disc = math.exp(-r * T)
    v = payoff(np.exp(simulate_terminal(law, T, sim)))
    v_t = payoff(np.exp(simulate_terminal(law_t, T, sim)))
    diff = disc * (v - v_t)
    return abs(float(diff.mean())), float(diff.std(ddof=1)) / math.sqrt(diff.size)
