"""Parameter-vector views of the model families used by estimation and parametric bounds."""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Any, Mapping, Sequence

import numpy as np

from .errors import DomainError, EquivalenceError
from .levy_core import LevyModel, QuadratureConfig, integrate_levy, truncation

__all__ = ["ParametricFamily", "equivalent_drift", "check_equivalence", "density_ratio"]

_FREE = {"bs": ("b", "c"), "vg": ("C", "M", "N"), "gmy": ("C", "N"), "cgmy": ("C", "M", "N")}


def check_equivalence(base: LevyModel, tilde: LevyModel) -> None:
    """Raise :class:`EquivalenceError` unless the Lévy measures and Gaussian parts are compatible.

    Infinite-activity measures with different ``C`` or ``alpha`` are mutually
    singular (the Hellinger integral ``int (1 - sqrt(Y))^2 dnu`` diverges at zero).
    """
    if not math.isclose(base.c, tilde.c, rel_tol=1e-14, abs_tol=0.0):
        raise EquivalenceError(f"Gaussian variances differ ({base.c!r} vs {tilde.c!r})")
    if base.c == 0 and not base.has_jumps and not tilde.has_jumps:
        raise EquivalenceError("degenerate models without Gaussian or jump part")
    if (base.has_jumps, base.has_left, base.has_right) != (tilde.has_jumps, tilde.has_left, tilde.has_right):
        raise EquivalenceError("Lévy measures have different supports")
    if not base.has_jumps:
        return
    if base.alpha >= 0 or tilde.alpha >= 0:
        if base.alpha != tilde.alpha:
            raise EquivalenceError(
                f"infinite-activity measures with alpha {base.alpha:g} and {tilde.alpha:g} are singular")
        if not math.isclose(base.C, tilde.C, rel_tol=1e-14):
            raise EquivalenceError(
                f"infinite-activity measures with C {base.C:g} and {tilde.C:g} are singular")


def density_ratio(base: LevyModel, tilde: LevyModel):
    """``x -> (dnu_tilde / dnu)(x)``; zero where the base density underflows."""

    def Y(x: float) -> float:
        d = base.density(x)
        if d == 0.0:
            return 0.0
        return tilde.density(x) / d

    return Y


def _same_small_jumps(base: LevyModel, tilde: LevyModel) -> bool:
    return base.alpha == tilde.alpha and math.isclose(base.C, tilde.C, rel_tol=1e-14)


def equivalent_drift(base: LevyModel, tilde: LevyModel, cfg: QuadratureConfig | None = None) -> float:
    """Drift ``b + int l(x) (nu_tilde - nu)(dx)`` that keeps a pure-jump pair equivalent.

    With ``c = 0`` the drifts of equivalent Lévy laws must satisfy this identity;
    it is also the natural drift for a perturbed parameter vector when ``c > 0``.
    """
    if not base.has_jumps:
        return base.b
    Y = density_ratio(base, tilde)
    order = 2 if _same_small_jumps(base, tilde) else 1
    return base.b + integrate_levy(base, lambda x: truncation(x) * (Y(x) - 1.0), cfg, order=order)


@dataclass(frozen=True)
class ParametricFamily:
    """``theta -> LevyModel`` around a reference model.

    Free coordinates: ``(b, c)`` for Black-Scholes, ``(C, M, N)`` for VG and CGMY
    (alpha held fixed), ``(C, N)`` for GMY.  Jump models keep ``c`` and move the
    drift with :func:`equivalent_drift`, so the perturbed law stays equivalent to
    the reference whenever the Lévy measures are.
    """

    reference: LevyModel

    @property
    def names(self) -> tuple[str, ...]:
        return _FREE[self.reference.family]

    @property
    def theta0(self) -> np.ndarray:
        return self.theta_of(self.reference)

    def theta_of(self, model: LevyModel) -> np.ndarray:
        if model.family == "bs":
            return np.array([model.b, model.c])
        return np.array([model.params[n] for n in self.names])

    def model(self, theta: Sequence[float], cfg: QuadratureConfig | None = None) -> LevyModel:
        theta = [float(v) for v in theta]
        if len(theta) != len(self.names):
            raise DomainError(f"expected {len(self.names)} parameters {self.names}, got {len(theta)}")
        ref = self.reference
        if ref.family == "bs":
            return LevyModel.black_scholes(theta[0], theta[1])
        m = ref.replace(**dict(zip(self.names, theta)))
        return m.replace(b=equivalent_drift(ref, m, cfg))

    def to_dict(self) -> dict[str, Any]:
        return {"reference": self.reference.to_dict(), "names": list(self.names)}

    @classmethod
    def from_dict(cls, data: Mapping[str, Any]) -> "ParametricFamily":
        return cls(LevyModel.from_dict(data["reference"]))
