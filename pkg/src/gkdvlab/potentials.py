"""Slowly varying nonlinearity-coefficient profiles a(r) and their validation.

The laboratory's standing assumptions on the profile are

  (1) 1 < a < 2 on the line (limits approached at the two ends),
  (2) a' > 0 everywhere (monotone transition),
  (3) |a^(k)| <= K exp(-gamma |r|) for k = 1, 2, 3 and some K, gamma > 0,
  (4) |(a^(1/m))'''| <= K (a^(1/m))' for some K (third-derivative domination).

`validate_hypotheses` checks all four on a sampled window, fitting the decay
constants by log-linear regression on the tails.  The monotone tanh family is
the laboratory default; a constant profile is provided as a deliberate control
that fails (2), and a reflected profile (decreasing transition, used by the
time-reversal experiments) fails (2) as well.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

__all__ = [
    "PotentialSpec",
    "HypothesisReport",
    "tanh_potential",
    "constant_potential",
    "reflected_potential",
    "nonlinearity_weight",
    "nonlinearity_weight_derivative",
    "validate_hypotheses",
]


@dataclass(frozen=True)
class PotentialSpec:
    """Coefficient profile bundle: a and its first three derivatives.

    Evaluators take the slow coordinate r = eps*x.  `gamma` is the steepness
    parameter for families that have one (NaN otherwise); `family` is a short
    label recorded in run manifests.
    """

    family: str
    gamma: float
    a: Callable
    da: Callable
    d2a: Callable
    d3a: Callable
    lower: float = 1.0
    upper: float = 2.0


@dataclass(frozen=True)
class HypothesisReport:
    """Outcome of the standing-assumption checks for a profile."""

    in_band: bool
    monotone: bool
    derivative_decay: bool
    third_derivative_domination: bool
    fitted: dict = field(default_factory=dict)

    @property
    def ok(self) -> bool:
        return (
            self.in_band
            and self.monotone
            and self.derivative_decay
            and self.third_derivative_domination
        )


def tanh_potential(gamma: float = 1.0) -> PotentialSpec:
    """Monotone transition a(r) = (3 + tanh(gamma*r)) / 2 from 1 to 2.

    Satisfies every standing assumption; all derivatives carry a
    sech^2(gamma*r) factor and decay at rate 2*gamma.
    """
    if not gamma > 0:
        raise ValueError(f"steepness gamma must be positive, got {gamma}")

    def _sech2(r):
        e = np.exp(-np.abs(gamma * np.asarray(r, dtype=float)))
        s = 2.0 * e / (1.0 + e * e)
        return s * s

    def a(r):
        return (3.0 + np.tanh(gamma * np.asarray(r, dtype=float))) / 2.0

    def da(r):
        return 0.5 * gamma * _sech2(r)

    def d2a(r):
        return -(gamma**2) * _sech2(r) * np.tanh(gamma * np.asarray(r, dtype=float))

    def d3a(r):
        t = np.tanh(gamma * np.asarray(r, dtype=float))
        s2 = _sech2(r)
        return -(gamma**3) * s2 * (s2 - 2.0 * t * t)

    return PotentialSpec(family="tanh", gamma=float(gamma), a=a, da=da, d2a=d2a, d3a=d3a)


def constant_potential(value: float = 1.0) -> PotentialSpec:
    """Flat profile a == value; control case (fails the monotonicity check)."""

    def a(r):
        return np.full_like(np.asarray(r, dtype=float), value, dtype=float)

    def zero(r):
        return np.zeros_like(np.asarray(r, dtype=float))

    return PotentialSpec(
        family="constant", gamma=float("nan"), a=a, da=zero, d2a=zero, d3a=zero
    )


def reflected_potential(spec: PotentialSpec) -> PotentialSpec:
    """Profile r -> a(-r): the transition traversed the other way.

    Used by the time-reversal experiments, where the backward evolution sees
    the mirrored coefficient.  A reflected monotone-increasing profile is
    decreasing, so it deliberately fails the monotonicity hypothesis.
    """
    base_a, base_da, base_d2a, base_d3a = spec.a, spec.da, spec.d2a, spec.d3a
    return PotentialSpec(
        family=spec.family + "-reflected",
        gamma=spec.gamma,
        a=lambda r: base_a(-np.asarray(r, dtype=float)),
        da=lambda r: -base_da(-np.asarray(r, dtype=float)),
        d2a=lambda r: base_d2a(-np.asarray(r, dtype=float)),
        d3a=lambda r: -base_d3a(-np.asarray(r, dtype=float)),
        lower=spec.lower,
        upper=spec.upper,
    )


def nonlinearity_weight(spec: PotentialSpec, r, m: int):
    """a(r)**(1/(m-1)) — the amplitude weight of the slowly modulated soliton.

    A profile of the scaling family rides the flow as weight^(-1) * Q_c, since
    the u**m coefficient a rescales amplitudes by a**(-1/(m-1)).
    """
    return spec.a(r) ** (1.0 / (m - 1))


def nonlinearity_weight_derivative(spec: PotentialSpec, r, m: int):
    """d/dr of `nonlinearity_weight`: weight * a' / ((m-1) a)."""
    return nonlinearity_weight(spec, r, m) * spec.da(r) / ((m - 1) * spec.a(r))


def _tail_decay_fit(r: np.ndarray, vals: np.ndarray) -> tuple[float, float, float]:
    """Fit |vals| ~ K exp(-gamma |r|) on the outer halves of the window.

    Returns (gamma, K, max_residual) of the log-linear regression; gamma > 0
    means the samples genuinely decay.  Samples below the subnormal guard or
    at exact zeros (odd derivatives cross zero) are excluded from the fit.
    """
    absv = np.abs(vals)
    tail = (np.abs(r) >= 0.5 * np.max(np.abs(r))) & (absv > 1e-290)
    if np.count_nonzero(tail) < 8:
        return float("nan"), float("nan"), float("inf")
    x = np.abs(r[tail])
    y = np.log(absv[tail])
    slope, intercept = np.polyfit(x, y, 1)
    gamma = -float(slope)
    big = absv > 1e-290
    k_fit = float(np.max(absv[big] * np.exp(gamma * np.abs(r[big])))) if gamma > 0 else float("inf")
    resid = float(np.max(np.abs(y - (slope * x + intercept))))
    return gamma, k_fit, resid


def validate_hypotheses(
    spec: PotentialSpec, m: int, r_max: float = 40.0, n: int = 4001
) -> HypothesisReport:
    """Check the four standing assumptions on [-r_max, r_max].

    The band and monotonicity checks are pointwise on the sample; the decay
    check fits (K, gamma) per derivative order by log-linear regression on the
    tails and requires gamma > 0 with a coherent fit; the domination check
    bounds |(a^(1/m))'''| / (a^(1/m))' over the sample.
    """
    r = np.linspace(-r_max, r_max, n)
    a = np.asarray(spec.a(r), dtype=float)
    da = np.asarray(spec.da(r), dtype=float)
    d2a = np.asarray(spec.d2a(r), dtype=float)
    d3a = np.asarray(spec.d3a(r), dtype=float)

    # (1) band: open bounds are approached asymptotically, so allow the sampled
    # extremes to sit on the closure to rounding precision, but demand the
    # center be strictly inside.
    tol = 1e-12
    in_band = bool(
        np.all(a >= spec.lower - tol)
        and np.all(a <= spec.upper + tol)
        and spec.lower < float(spec.a(0.0)) < spec.upper
    )

    # (2) strict monotonicity
    monotone = bool(np.all(da > 0.0))

    fitted: dict = {}
    decay_ok = True
    for order, vals in ((1, da), (2, d2a), (3, d3a)):
        gamma_fit, k_fit, resid = _tail_decay_fit(r, vals)
        fitted[f"gamma{order}"] = gamma_fit
        fitted[f"K{order}"] = k_fit
        fitted[f"fit_residual{order}"] = resid
        decay_ok = decay_ok and math.isfinite(gamma_fit) and gamma_fit > 0 and resid < 0.5

    # (4) third-derivative domination for b = a^(1/m)
    if monotone:
        p = 1.0 / m
        db = p * a ** (p - 1.0) * da
        d3b = p * (
            (p - 1.0) * (p - 2.0) * a ** (p - 3.0) * da**3
            + 3.0 * (p - 1.0) * a ** (p - 2.0) * da * d2a
            + a ** (p - 1.0) * d3a
        )
        ratio = float(np.max(np.abs(d3b) / db))
        fitted["K_ratio"] = ratio
        domination = math.isfinite(ratio)
    else:
        fitted["K_ratio"] = float("inf")
        domination = False

    return HypothesisReport(
        in_band=in_band,
        monotone=monotone,
        derivative_decay=decay_ok,
        third_derivative_domination=domination,
        fitted=fitted,
    )
