"""Moment (cumulant) estimators and estimator-distribution harnesses."""
from __future__ import annotations

import csv
import io
import math
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Any, Callable, Sequence

import numpy as np
from scipy import optimize, special, stats

from .errors import DomainError, UnsupportedSimulation
from .levy_core import LevyModel, integrate_levy, truncation
from .parametric import ParametricFamily
from .pricing import SimConfig, simulate_terminal

__all__ = [
    "ReturnSample",
    "EstimatorReport",
    "EstimatorDistribution",
    "simulate_returns",
    "cumulants",
    "jump_first_moment",
    "cumulant_estimator",
    "estimator_distribution",
]


@dataclass(frozen=True)
class ReturnSample:
    increments: np.ndarray
    dt: float

    def __post_init__(self):
        x = np.asarray(self.increments, dtype=float).ravel()
        if x.size == 0:
            raise DomainError("return sample is empty")
        if not np.all(np.isfinite(x)):
            raise DomainError("return sample contains non-finite values")
        if not self.dt > 0:
            raise DomainError("dt must be positive")
        object.__setattr__(self, "increments", x)

    @property
    def n(self) -> int:
        return self.increments.size

    def to_csv(self, path: str | Path | None = None) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["log_return"])
        for v in self.increments:
            w.writerow([repr(float(v))])
        text = buf.getvalue()
        if path is not None:
            Path(path).write_text(text)
        return text

    @classmethod
    def from_csv(cls, source: str | Path, dt: float) -> "ReturnSample":
        text = Path(source).read_text() if isinstance(source, Path) or "\n" not in str(source) else str(source)
        rows = list(csv.reader(io.StringIO(text)))
        if not rows or [h.strip() for h in rows[0]] != ["log_return"]:
            raise DomainError("expected a single-column CSV with header 'log_return'")
        return cls(np.array([float(r[0]) for r in rows[1:] if r]), dt)


@dataclass
class EstimatorReport:
    theta_hat: np.ndarray
    n: int
    converged: bool
    diagnostics: dict[str, Any] = field(default_factory=dict)

    def to_dict(self) -> dict[str, Any]:
        d = asdict(self)
        d["theta_hat"] = [float(v) for v in self.theta_hat]
        return d


def simulate_returns(model: LevyModel, n: int, dt: float, seed: int) -> ReturnSample:
    """``n`` i.i.d. increments of ``X`` over ``dt`` under the physical law."""
    try:
        x = simulate_terminal(model, dt, SimConfig(n_paths=int(n), seed=int(seed)))
    except UnsupportedSimulation as exc:
        raise DomainError(str(exc)) from None
    return ReturnSample(x, dt)


def jump_first_moment(C: float, M: float | None, N: float, alpha: float) -> float:
    """Analytic ``int x nu(dx)`` of a tempered-stable measure, continued to ``alpha >= 1``.

    Differences of this quantity between measures with equal ``C`` and ``alpha``
    are genuine integrals even when each term diverges.
    """
    def side(rate: float) -> float:
        if alpha == 1.0:
            return -math.log(rate)
        return float(special.gamma(1.0 - alpha)) * rate ** (alpha - 1.0)

    out = side(N)
    if M is not None:
        out -= side(M)
    return C * out


def cumulants(model: LevyModel, dt: float = 1.0, n_max: int = 4) -> np.ndarray:
    """``kappa_1 .. kappa_{n_max}`` of ``X_dt`` from the analytic jump cumulants."""
    out = np.zeros(n_max)
    mean = model.b
    if model.has_jumps:
        mean += integrate_levy(model, lambda x: x - truncation(x), order=4)
    out[0] = dt * mean
    if n_max >= 2:
        out[1] = dt * model.c
    if model.has_jumps:
        p, a = model.params, model.alpha
        for n in range(2, n_max + 1):
            g = float(special.gamma(n - a))
            k = p["N"] ** (a - n)
            if model.has_left:
                k += (-1) ** n * p["M"] ** (a - n)
            out[n - 1] += dt * p["C"] * g * k
    return out


def _sample_scales(x: np.ndarray) -> np.ndarray:
    """Rough standard errors of the first four sample cumulants."""
    n = x.size
    d = x - x.mean()
    return np.array([np.std(d ** j) for j in (1, 2, 3, 4)]) / math.sqrt(n)


def cumulant_estimator(sample: ReturnSample, family: ParametricFamily) -> EstimatorReport:
    """Match the first four sample cumulants to the model cumulants.

    Black-Scholes reduces to ``(mean / dt, var / dt)``.  For tempered-stable
    families ``(C, M, N)`` (``alpha`` fixed) are fitted by least squares in log
    coordinates, keeping the drift part ``b - int l dnu`` of the reference law.
    """
    x, dt = sample.increments, sample.dt
    ref = family.reference
    if ref.family == "bs":
        theta = np.array([x.mean() / dt, x.var(ddof=1) / dt])
        return EstimatorReport(theta, x.size, bool(theta[1] > 0), {"method": "sample moments"})
    if x.size < 100:
        raise DomainError("cumulant estimation needs at least 100 increments")
    if ref.family not in ("vg", "cgmy"):
        raise DomainError(f"no cumulant estimator for family {ref.family!r}")
    k_hat = np.array([stats.kstat(x, n) for n in (1, 2, 3, 4)])
    scales = np.maximum(_sample_scales(x), 1e-300)
    a = ref.alpha
    p_ref = ref.params
    m_ref = cumulants(ref, 1.0, 1)[0]
    k1_ref = jump_first_moment(p_ref["C"], p_ref["M"], p_ref["N"], a)

    def model_cumulants(theta: np.ndarray) -> np.ndarray:
        C, M, N = theta
        out = np.empty(4)
        out[0] = dt * (m_ref + jump_first_moment(C, M, N, a) - k1_ref)
        for n in (2, 3, 4):
            out[n - 1] = dt * C * special.gamma(n - a) * (N ** (a - n) + (-1) ** n * M ** (a - n))
        out[1] += dt * ref.c
        return out

    def residuals(z: np.ndarray) -> np.ndarray:
        return (model_cumulants(np.exp(z)) - k_hat) / scales

    k2j = max(k_hat[1] - dt * ref.c, 1e-12 * k_hat[1])
    if k_hat[3] > 0:
        rate0 = math.sqrt((3.0 - a) * (2.0 - a) * k2j / k_hat[3])
    else:
        rate0 = 10.0
    C0 = k2j / dt * rate0 ** (2.0 - a) / (2.0 * special.gamma(2.0 - a))
    z0 = np.log([C0, rate0, rate0])
    diag: dict[str, Any] = {"sample_cumulants": k_hat.tolist(), "init": np.exp(z0).tolist()}
    try:
        res = optimize.least_squares(residuals, z0, method="trf", bounds=(np.log(1e-8), np.log(1e8)),
                                     x_scale=1.0, xtol=1e-12, ftol=1e-12, gtol=1e-12, max_nfev=2000)
    except (ValueError, FloatingPointError) as exc:
        diag["error"] = str(exc)
        return EstimatorReport(np.exp(z0), x.size, False, diag)
    theta = np.exp(res.x)
    ok = bool(res.status > 0 and np.all(np.isfinite(theta)) and np.all(theta > 0)
              and np.all(theta < 1e7))
    diag.update({"residuals": res.fun.tolist(), "cost": float(res.cost), "status": int(res.status),
                 "nfev": int(res.nfev)})
    return EstimatorReport(theta, x.size, ok, diag)


@dataclass
class EstimatorDistribution:
    theta0: np.ndarray
    thetas: np.ndarray
    failed: int

    def distances(self, theta: Sequence[float] | None = None) -> np.ndarray:
        ref = self.theta0 if theta is None else np.asarray(theta, dtype=float)
        if self.thetas.size == 0:
            return np.zeros(0)
        return np.max(np.abs(self.thetas - ref[None, :]), axis=1)

    def exceedance(self, eps: float) -> float:
        """Empirical ``P(|theta^ - theta|_max > eps)``."""
        d = self.distances()
        return float(np.mean(d > eps)) if d.size else math.nan

    def to_dict(self) -> dict[str, Any]:
        return {"theta0": self.theta0.tolist(), "thetas": self.thetas.tolist(), "failed": self.failed}


def estimator_distribution(family: ParametricFamily, estimator: Callable[[ReturnSample, ParametricFamily], EstimatorReport] | None,
                           n: int, batches: int, seed: int | np.random.SeedSequence, *,
                           dt: float = 1.0) -> EstimatorDistribution:
    """Independent batch estimates from the reference law; failed fits are counted and dropped."""
    if batches < 2:
        raise DomainError("at least two batches are required")
    estimator = estimator or cumulant_estimator
    ss = seed if isinstance(seed, np.random.SeedSequence) else np.random.SeedSequence(int(seed))
    thetas, failed = [], 0
    for child in ss.spawn(batches):
        batch_seed = int(child.generate_state(1, dtype=np.uint64)[0])
        sample = simulate_returns(family.reference, n, dt, batch_seed)
        rep = estimator(sample, family)
        if rep.converged:
            thetas.append(np.asarray(rep.theta_hat, dtype=float))
        else:
            failed += 1
    arr = np.array(thetas) if thetas else np.zeros((0, len(family.names)))
    return EstimatorDistribution(family.theta0, arr, failed)
