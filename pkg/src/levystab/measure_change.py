"""Esscher, minimal-entropy and f^q martingale measures for exponential Lévy models.

Every selector reduces to a scalar equation ``F(theta) = r`` where

    F(theta) = b + (1/2 + theta) c + int ((e^x - 1) Y_theta(x) - l(x)) nu(dx)

and ``Y_theta`` is the jump density ratio of the candidate measure.  ``F`` is
nondecreasing in ``theta`` for all three families, so the root is bracketed by
stepping away from a start point inside the admissible interval and then polished
with Brent's method.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Any, Mapping

import numpy as np
from scipy import optimize

from .errors import (
    DivergenceError,
    DomainError,
    IntegrabilityError,
    NoSolutionError,
    QuadratureError,
)
from .levy_core import (
    LevyModel,
    QuadratureConfig,
    exp_moment_domain,
    integrate_levy,
    truncation,
)

__all__ = [
    "MeasureSelector",
    "GirsanovPair",
    "SolverReport",
    "SignClassification",
    "TiltedTriplet",
    "HatTriplet",
    "SOLVER_QUADRATURE",
    "esscher_lambda",
    "memm_lambda",
    "memm_sign_classify",
    "hat_triplet",
    "fq_parameters",
    "tilted_triplet",
    "girsanov_for",
    "martingale_residual",
]

SOLVER_QUADRATURE = QuadratureConfig(rel_tol=1e-11, abs_tol=1e-14)
_EDGE_SHRINK = 1e-6
_MAX_ABS_PARAMETER = 500.0


def _expm1_minus_x(x: float) -> float:
    if abs(x) < 1e-3:
        return x * x * (0.5 + x * (1.0 / 6.0 + x * (1.0 / 24.0 + x / 120.0)))
    return math.expm1(x) - x


def _kernel(x: float, ym1: float) -> float:
    """``(e^x - 1) Y(x) - l(x)`` from ``Y - 1``, without cancellation near zero."""
    y = math.expm1(x)
    if abs(x) <= 1.0:
        return _expm1_minus_x(x) + y * ym1
    return y * (1.0 + ym1)


# ---------------------------------------------------------------------------
# selectors and Girsanov parameters
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class MeasureSelector:
    kind: str
    q: float | None = None
    rate: float = 0.0

    def __post_init__(self):
        kind = str(self.kind).lower()
        if kind not in ("esscher", "memm", "fq"):
            raise DomainError(f"unknown measure selector {self.kind!r}")
        object.__setattr__(self, "kind", kind)
        if kind == "fq":
            if self.q is None or float(self.q) in (0.0, 1.0):
                raise DomainError("f^q selector needs q outside {0, 1}")
            object.__setattr__(self, "q", float(self.q))
        if self.rate < 0:
            raise DomainError("interest rate must be nonnegative")
        object.__setattr__(self, "rate", float(self.rate))

    def to_dict(self) -> dict[str, Any]:
        d: dict[str, Any] = {"kind": self.kind, "rate": self.rate}
        if self.kind == "fq":
            d["q"] = self.q
        return d

    @classmethod
    def from_dict(cls, data: Mapping[str, Any]) -> "MeasureSelector":
        return cls(data.get("kind", "esscher"), data.get("q"), float(data.get("rate", 0.0)))


@dataclass(frozen=True)
class SolverReport:
    kind: str
    value: float
    residual: float
    bracket: tuple[float, float]
    iterations: int
    interval: tuple[float, float]

    def to_dict(self) -> dict[str, Any]:
        return {
            "kind": self.kind,
            "value": self.value,
            "residual": self.residual,
            "bracket": list(self.bracket),
            "iterations": self.iterations,
            "interval": list(self.interval),
        }


@dataclass(frozen=True)
class GirsanovPair:
    """Deterministic Girsanov parameters ``(beta, Y)`` of a measure change ``P -> Q``.

    ``kind`` is one of ``identity``, ``esscher``, ``memm``, ``fq``; ``lam`` holds the
    tilt for Esscher/MEMM and ``q`` the exponent for f^q (with ``beta`` = ``beta_q``).
    """

    beta: float
    kind: str
    lam: float | None = None
    q: float | None = None
    report: SolverReport | None = field(default=None, compare=False)

    @classmethod
    def identity(cls) -> "GirsanovPair":
        return cls(0.0, "identity")

    @classmethod
    def esscher(cls, lam: float, report: SolverReport | None = None) -> "GirsanovPair":
        return cls(float(lam), "esscher", lam=float(lam), report=report)

    @classmethod
    def memm(cls, lam: float, report: SolverReport | None = None) -> "GirsanovPair":
        return cls(float(lam), "memm", lam=float(lam), report=report)

    @classmethod
    def fq(cls, q: float, beta: float, report: SolverReport | None = None) -> "GirsanovPair":
        return cls(float(beta), "fq", q=float(q), report=report)

    @property
    def kappa(self) -> float:
        """``(q - 1) beta_q`` for f^q pairs."""
        return (self.q - 1.0) * self.beta

    def ym1(self, x: float) -> float:
        """``Y(x) - 1``."""
        if self.kind == "identity":
            return 0.0
        if self.kind == "esscher":
            return math.expm1(self.lam * x)
        if self.kind == "memm":
            return math.expm1(self.lam * math.expm1(x))
        base = self.kappa * math.expm1(x)
        if base <= -1.0:
            return -1.0
        return math.expm1(math.log1p(base) / (self.q - 1.0))

    def Y(self, x: float) -> float:
        if self.kind == "identity":
            return 1.0
        if self.kind == "esscher":
            return math.exp(self.lam * x)
        if self.kind == "memm":
            return math.exp(self.lam * math.expm1(x))
        base = 1.0 + self.kappa * math.expm1(x)
        if base <= 0.0:
            return 0.0
        return base ** (1.0 / (self.q - 1.0))

    def Y_array(self, x) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        with np.errstate(over="ignore", invalid="ignore", divide="ignore"):
            if self.kind == "identity":
                return np.ones_like(x)
            if self.kind == "esscher":
                return np.exp(self.lam * x)
            if self.kind == "memm":
                return np.exp(self.lam * np.expm1(x))
            base = 1.0 + self.kappa * np.expm1(x)
            out = np.zeros_like(x)
            pos = base > 0
            out[pos] = base[pos] ** (1.0 / (self.q - 1.0))
            return out

    def zero_points(self) -> tuple[float, ...]:
        """Points where ``Y`` switches to zero (f^q positive part)."""
        if self.kind != "fq":
            return ()
        k = self.kappa
        if k < 0 or k > 1:
            return (math.log1p(-1.0 / k),)
        return ()

    def growth(self) -> tuple[float, float]:
        """Exponential rates ``(g_left, g_right)`` with ``Y ~ e^{g x}`` as ``x -> -inf / +inf``.

        ``-inf`` means faster than any exponential decay (or eventually zero).
        """
        if self.kind == "identity":
            return (0.0, 0.0)
        if self.kind == "esscher":
            return (self.lam, self.lam)
        if self.kind == "memm":
            return (0.0, -math.inf if self.lam < 0 else (0.0 if self.lam == 0 else math.inf))
        k, e = self.kappa, 1.0 / (self.q - 1.0)
        right = e if k > 0 else (0.0 if k == 0 else -math.inf)
        if k < 1:
            left = 0.0
        elif k == 1:
            left = e
        else:
            left = -math.inf
        return (left, right)

    def support_violation(self, model) -> tuple[float, float] | None:
        """Interval of the support of ``nu`` where ``Y = 0``, if any."""
        if self.kind != "fq" or not getattr(model, "has_jumps", False):
            return None
        k = self.kappa
        if k < 0 and model.has_right:
            return (math.log1p(-1.0 / k), math.inf)
        if k > 1 and model.has_left:
            return (-math.inf, math.log1p(-1.0 / k))
        return None

    def to_dict(self) -> dict[str, Any]:
        d: dict[str, Any] = {"beta": self.beta, "kind": self.kind}
        if self.lam is not None:
            d["lambda"] = self.lam
        if self.q is not None:
            d["q"] = self.q
        if self.report is not None:
            d["solver"] = self.report.to_dict()
        return d


@dataclass(frozen=True)
class SignClassification:
    lambda_sign: str  # "Negative" | "Unknown" | "NoSolution"
    rule_applied: str
    f_hat0: float

    def to_dict(self) -> dict[str, Any]:
        return {"lambda_sign": self.lambda_sign, "rule_applied": self.rule_applied, "f_hat0": self.f_hat0}


@dataclass(frozen=True)
class TiltedTriplet:
    """Law of ``X`` under ``Q`` when ``nu^Q = Y nu`` leaves the parametric family."""

    base: LevyModel
    pair: GirsanovPair
    b: float
    c: float
    family: str = "tilted"

    @property
    def has_jumps(self) -> bool:
        return self.base.has_jumps

    @property
    def has_left(self) -> bool:
        return self.base.has_left

    @property
    def has_right(self) -> bool:
        return self.base.has_right

    @property
    def alpha(self) -> float:
        return self.base.alpha

    @property
    def breakpoints(self) -> tuple[float, ...]:
        return self.pair.zero_points()

    def density(self, x: float) -> float:
        d = self.base.density(x)
        if d == 0.0:
            return 0.0
        y = self.pair.Y(x)
        return y * d if y != 0.0 else 0.0

    def density_array(self, x) -> np.ndarray:
        return self.pair.Y_array(x) * self.base.density_array(x)

    def exp_moment_domain(self) -> tuple[float, float]:
        lo, hi = exp_moment_domain(self.base)
        g_left, g_right = self.pair.growth()
        return (lo - g_left, hi - g_right)

    def to_dict(self) -> dict[str, Any]:
        return {"family": "tilted", "b": self.b, "c": self.c, "base": self.base.to_dict(),
                "girsanov": self.pair.to_dict()}


@dataclass(frozen=True)
class HatTriplet:
    """Triplet of the stochastic logarithm ``X_hat`` with ``S = S_0 E(X_hat)``.

    ``b_hat`` is the mean rate ``b + c/2 + int (e^x - 1 - l(x)) nu(dx)``; the jump
    part is recorded only as the transform descriptor ``(e^x - 1) . nu``.
    """

    b_hat: float
    c_hat: float
    base: LevyModel
    nu_transform: str = "(e^x - 1) . nu"

    def to_dict(self) -> dict[str, Any]:
        return {"b_hat": self.b_hat, "c_hat": self.c_hat, "nu_transform": self.nu_transform,
                "base": self.base.to_dict()}


# ---------------------------------------------------------------------------
# root finding
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class _Interval:
    lo: float
    hi: float
    lo_closed: bool = False
    hi_closed: bool = False

    def shrunk(self) -> tuple[float, float]:
        lo = self.lo if self.lo_closed or not math.isfinite(self.lo) else self.lo + _EDGE_SHRINK
        hi = self.hi if self.hi_closed or not math.isfinite(self.hi) else self.hi - _EDGE_SHRINK
        lo = max(lo, -_MAX_ABS_PARAMETER)
        hi = min(hi, _MAX_ABS_PARAMETER)
        if not lo < hi:
            raise DivergenceError(f"admissible interval ({self.lo:g}, {self.hi:g}) is degenerate")
        return lo, hi


def _solve_increasing(fun, interval: _Interval, kind: str, start: float = 0.0) -> tuple[float, SolverReport]:
    """Root of a nondecreasing ``fun`` on ``interval``: bracket expansion then Brent."""
    lo, hi = interval.shrunk()
    if lo < start < hi:
        x0 = start
    else:
        x0 = lo + min(0.5, 0.5 * (hi - lo)) if start <= lo else hi - min(0.5, 0.5 * (hi - lo))
    f0 = fun(x0)
    evals = 1
    if f0 == 0.0:
        return x0, SolverReport(kind, x0, 0.0, (x0, x0), evals, (lo, hi))
    direction = -1.0 if f0 > 0 else 1.0
    edge = lo if direction < 0 else hi
    a, fa = x0, f0
    step = 0.5
    while True:
        b = a + direction * step
        at_edge = (b <= edge) if direction < 0 else (b >= edge)
        if at_edge:
            b = edge
        try:
            fb = fun(b)
        except (DivergenceError, QuadratureError):
            # treat as outside the numerically usable domain: pull back halfway
            if abs(b - a) < 1e-9:
                raise NoSolutionError(f"{kind}: residual not evaluable near {b:g}", (a, b)) from None
            edge = 0.5 * (a + b)
            step = abs(edge - a)
            continue
        evals += 1
        if fb == 0.0:
            return b, SolverReport(kind, b, 0.0, (b, b), evals, (lo, hi))
        if (fb > 0) != (fa > 0):
            break
        if at_edge:
            raise NoSolutionError(
                f"{kind}: martingale equation has no root on ({lo:g}, {hi:g}); "
                f"residual keeps sign {'+' if fa > 0 else '-'} up to the boundary",
                (min(x0, b), max(x0, b)),
            )
        a, fa = b, fb
        if evals > 8:
            step *= 2.0
    left, right = (a, b) if a < b else (b, a)
    root, res = optimize.brentq(fun, left, right, xtol=1e-13, rtol=4 * np.finfo(float).eps,
                                maxiter=200, full_output=True)
    residual = fun(root)
    return root, SolverReport(kind, float(root), float(residual), (left, right),
                              evals + res.function_calls + 1, (lo, hi))


def _martingale_fun(model: LevyModel, r: float, ym1_of, cfg, breakpoints_of=None):
    def fun(theta: float) -> float:
        val = model.b + (0.5 + theta) * model.c - r
        if model.has_jumps:
            ym1 = ym1_of(theta)
            bps = breakpoints_of(theta) if breakpoints_of else ()
            val += integrate_levy(model, lambda x: _kernel(x, ym1(x)), cfg, order=2, breakpoints=bps)
        if not math.isfinite(val):
            raise DivergenceError("martingale residual is not finite")
        return val
    return fun


def esscher_lambda(model: LevyModel, r: float = 0.0, cfg: QuadratureConfig | None = None,
                   *, full_output: bool = False):
    """Esscher parameter: root of ``b + (1/2 + lam) c + int ((e^x - 1) e^{lam x} - l) dnu = r``."""
    cfg = cfg or SOLVER_QUADRATURE
    lo, hi = exp_moment_domain(model)
    # [lam, lam + 1] must lie in the exponential-moment domain
    interval = _Interval(lo, hi - 1.0)
    fun = _martingale_fun(model, r, lambda lam: (lambda x: math.expm1(lam * x)), cfg)
    lam, report = _solve_increasing(fun, interval, "esscher")
    return (lam, report) if full_output else lam


def _memm_interval(model: LevyModel) -> _Interval:
    if not model.has_jumps or not model.has_right:
        return _Interval(-math.inf, math.inf)
    N, a = model.params["N"], model.alpha
    finite_at_zero = N > 1 or (N == 1 and a > 0)
    return _Interval(-math.inf, 0.0, hi_closed=finite_at_zero)


def memm_lambda(model: LevyModel, r: float = 0.0, cfg: QuadratureConfig | None = None,
                *, full_output: bool = False):
    """Minimal-entropy parameter: root of ``b + (1/2 + lam) c + int ((e^x-1) e^{lam(e^x-1)} - l) dnu = r``."""
    cfg = cfg or SOLVER_QUADRATURE
    fun = _martingale_fun(model, r, lambda lam: (lambda x: math.expm1(lam * math.expm1(x))), cfg)
    lam, report = _solve_increasing(fun, _memm_interval(model), "memm")
    return (lam, report) if full_output else lam


def _f_hat0(model: LevyModel, cfg: QuadratureConfig | None = None) -> float:
    """Left side of the MEMM equation at ``lam = 0``; ``inf`` when ``int_{x>1} e^x dnu`` diverges."""
    if model.has_jumps and model.has_right:
        N, a = model.params["N"], model.alpha
        if N < 1 or (N == 1 and a <= 0):
            return math.inf
    val = model.b + 0.5 * model.c
    if model.has_jumps:
        val += integrate_levy(model, lambda x: _kernel(x, 0.0), cfg or SOLVER_QUADRATURE, order=2)
    return val


def memm_sign_classify(model: LevyModel, r: float = 0.0, cfg: QuadratureConfig | None = None) -> SignClassification:
    """Sign of the MEMM parameter from the tail rate ``N`` and ``f_hat(0)`` versus ``r``."""
    if model.family not in ("vg", "gmy", "cgmy"):
        raise DomainError("sign rules apply to VG, GMY and CGMY models only")
    p = model.params
    if model.family == "cgmy" and p["M"] == 0 and p["N"] == 0 and 0 < model.alpha < 2 and p["C"] > 0:
        return SignClassification("Negative", "symmetric stable (M = N = 0, 0 < alpha < 2, C > 0)", math.inf)
    N = p["N"]
    fh = _f_hat0(model, cfg)
    if N <= 1:
        return SignClassification("Negative", "0 <= N <= 1", fh)
    if fh >= r:
        return SignClassification("Negative", "N > 1 and f_hat(0) >= r", fh)
    return SignClassification("NoSolution", "N > 1 and f_hat(0) < r", fh)


def hat_triplet(model: LevyModel, cfg: QuadratureConfig | None = None) -> HatTriplet:
    if model.has_jumps:
        N, a = model.params["N"], model.alpha
        if model.has_right and (N < 1 or (N == 1 and a <= 0)):
            raise IntegrabilityError(f"int |e^x - 1| dnu diverges on the right tail (N = {N:g})", tail="right")
        if a >= 1:
            raise IntegrabilityError(f"int |e^x - 1| dnu diverges at zero (alpha = {a:g} >= 1)", tail="zero")
    drift = model.b + 0.5 * model.c
    if model.has_jumps:
        drift += integrate_levy(model, lambda x: _kernel(x, 0.0), cfg, order=2)
    return HatTriplet(drift, model.c, model)


def _fq_interval(model: LevyModel, q: float) -> _Interval:
    """Admissible ``beta_q`` range, derived from the admissible ``kappa = (q-1) beta_q``."""
    if not model.has_jumps:
        return _Interval(-math.inf, math.inf)
    N = model.params["N"] if model.has_right else math.inf
    M = model.params["M"] if model.has_left else math.inf
    a = model.alpha
    right_ok_at_one = N > 1 or (N == 1 and a > 0)
    inf = math.inf
    if q > 1:
        if not model.has_right or N > q / (q - 1.0):
            k_lo, k_hi, hi_closed = -inf, inf, False
        else:
            k_lo, k_hi, hi_closed = -inf, 0.0, right_ok_at_one
        lo_closed = False
    else:
        # negative exponent 1/(q-1): Y must stay finite, so 1 + kappa (e^x - 1) > 0 on the support
        k_lo = 0.0 if model.has_right else -inf
        k_hi = 1.0 if model.has_left else inf
        lo_closed = model.has_right and right_ok_at_one
        hi_closed = model.has_left and M > 1.0 / (1.0 - q)
    s = q - 1.0
    if s > 0:
        return _Interval(k_lo / s, k_hi / s, lo_closed, hi_closed)
    return _Interval(k_hi / s, k_lo / s, hi_closed, lo_closed)


def fq_parameters(model: LevyModel, q: float, r: float = 0.0, cfg: QuadratureConfig | None = None):
    """``(beta_q, GirsanovPair, support_ok)`` for the f^q-minimal martingale measure.

    ``Y_q(x) = (1 + (q-1) beta_q (e^x - 1))_+^{1/(q-1)}`` with ``beta_q`` fixed by the
    martingale condition.  ``support_ok`` is false when ``Y_q`` vanishes on part of
    the support of ``nu`` (the measure is then only absolutely continuous).
    """
    q = float(q)
    if q in (0.0, 1.0):
        raise DomainError("q must differ from 0 and 1")
    if model.has_jumps and model.has_right and not model.has_left and model.c == 0:
        pass  # one-sided pure-jump: may be monotone; the solver reports failure if so
    cfg = cfg or SOLVER_QUADRATURE

    def ym1_of(beta):
        pair = GirsanovPair.fq(q, beta)
        return pair.ym1

    def bps_of(beta):
        return GirsanovPair.fq(q, beta).zero_points()

    fun = _martingale_fun(model, r, ym1_of, cfg, bps_of)
    beta, report = _solve_increasing(fun, _fq_interval(model, q), "fq")
    pair = GirsanovPair.fq(q, beta, report)
    support_ok = pair.support_violation(model) is None
    return beta, pair, support_ok


def tilted_triplet(model: LevyModel, pair: GirsanovPair, cfg: QuadratureConfig | None = None):
    """Law of ``X`` under ``Q``: ``b^Q = b + beta c + int l (Y - 1) dnu``, ``c^Q = c``, ``nu^Q = Y nu``.

    Esscher tilts of the parametric families stay in the family (``M -> M + lam``,
    ``N -> N - lam``); other tilts return a :class:`TiltedTriplet`.
    """
    if pair.kind == "identity":
        return model
    drift = model.b + pair.beta * model.c
    if not model.has_jumps:
        return model.replace(b=drift)
    if pair.kind == "esscher":
        lo, hi = exp_moment_domain(model)
        if not lo <= pair.lam <= hi:
            raise IntegrabilityError(f"Esscher tilt {pair.lam:g} outside the exponential-moment domain")
    try:
        drift += integrate_levy(model, lambda x: truncation(x) * pair.ym1(x), cfg, order=2,
                                breakpoints=pair.zero_points())
    except DivergenceError as exc:
        raise IntegrabilityError(f"l (Y - 1) is not nu-integrable: {exc}", tail=exc.tail) from None
    if pair.kind == "esscher":
        lam = pair.lam
        new = {"N": model.params["N"] - lam}
        if model.has_left:
            new["M"] = model.params["M"] + lam
        return model.replace(b=drift, **new)
    return TiltedTriplet(model, pair, drift, model.c)


def girsanov_for(selector: MeasureSelector, model: LevyModel, cfg: QuadratureConfig | None = None) -> GirsanovPair:
    r = selector.rate
    if selector.kind == "esscher":
        lam, rep = esscher_lambda(model, r, cfg, full_output=True)
        return GirsanovPair.esscher(lam, rep)
    if selector.kind == "memm":
        lam, rep = memm_lambda(model, r, cfg, full_output=True)
        return GirsanovPair.memm(lam, rep)
    _, pair, _ = fq_parameters(model, selector.q, r, cfg)
    return pair


def martingale_residual(law, r: float = 0.0, cfg: QuadratureConfig | None = None) -> float:
    """``psi^Q(-i) - r = b^Q + c^Q/2 + int (e^x - 1 - l) dnu^Q - r`` for a law under ``Q``."""
    val = law.b + 0.5 * law.c - r
    if law.has_jumps:
        bps = law.pair.zero_points() if isinstance(law, TiltedTriplet) else ()
        val += integrate_levy(law, lambda x: _kernel(x, 0.0), cfg or SOLVER_QUADRATURE,
                              order=2, breakpoints=bps)
    return val
