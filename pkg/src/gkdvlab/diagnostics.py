"""Monotone functionals and localized norms for field diagnostics.

The exponential virial weight family psi_A underlies the almost-monotonicity
arguments: its derivative is trapped between e^{-|x|/A} and 3 e^{-|x|/A}, it
is positive, increasing, and saturates at both ends.  The weighted masses
give the computable monotone quantities for fields governed by the variable
coefficient, and the scale projection turns the residual of a modulated
decomposition into a corrected estimate of the scaling parameter.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from functools import lru_cache

import numpy as np
from scipy.interpolate import CubicSpline

from gkdvlab.effective import EffectiveParams, neutral_lambda
from gkdvlab.potentials import nonlinearity_weight
from gkdvlab.runio import write_csv
from gkdvlab.solitons import scale_derivative, soliton_integrals
from gkdvlab.spectral import FieldState, Grid, StepperConfig, spectral_derivative

__all__ = [
    "VirialWeight",
    "ChiC",
    "FunctionalSeries",
    "bump_exponent",
    "decay_envelope",
    "weighted_mass",
    "inverse_weighted_mass",
    "localized_h1_mass",
    "virial_functional",
    "cumulative_scale_derivative",
    "scale_projection",
    "write_functional_csv",
]


# ---------------------------------------------------------------------------
# the envelope function phi and its antiderivative psi
# ---------------------------------------------------------------------------

def bump_exponent(tau):
    """Blend exponent h on [0, 1]: h(0)=1, h(1)=0, h'(0)=1, h'(1)=0,
    h''(0)=h''(1)=0, with 0 <= h < ln 3 and h' <= 1 throughout.

    Those endpoint conditions make exp(h(x-1) - x) a C^2 bridge between the
    constant 1 (for x <= 1) and the tail e^{-x} (for x >= 2); the range and
    slope bounds keep the bridge inside [e^{-x}, 3 e^{-x}] and decreasing.
    """
    tau = np.asarray(tau, dtype=float)
    return 1.0 + tau - 21.0 * tau**3 + 38.0 * tau**4 - 24.0 * tau**5 + 5.0 * tau**6


def decay_envelope(x):
    """Even C^2 envelope phi: 1 on [0,1], exp(h(x-1)-x) on [1,2], e^{-x} after.

    Satisfies e^{-x} <= phi(x) <= 3 e^{-x} for x >= 0 and phi' <= 0.
    """
    ax = np.abs(np.asarray(x, dtype=float))
    out = np.empty_like(ax)
    flat = ax <= 1.0
    tail = ax >= 2.0
    mid = ~flat & ~tail
    out[flat] = 1.0
    out[tail] = np.exp(-ax[tail])
    amid = ax[mid]
    out[mid] = np.exp(bump_exponent(amid - 1.0) - amid)
    return out if out.ndim else float(out)


@lru_cache(maxsize=1)
def _psi_mid_spline() -> CubicSpline:
    """Antiderivative of phi on [1, 2], as a spline starting at 0."""
    grid = np.linspace(1.0, 2.0, 2049)
    return CubicSpline(grid, decay_envelope(grid)).antiderivative()


@lru_cache(maxsize=1)
def _psi_two() -> float:
    """psi(2) = 1 + int_1^2 phi."""
    return 1.0 + float(_psi_mid_spline()(2.0))


def _psi(x):
    """Odd antiderivative of phi with psi(0) = 0."""
    x = np.asarray(x, dtype=float)
    s = np.sign(x)
    ax = np.abs(x)
    out = np.empty_like(ax)
    flat = ax <= 1.0
    tail = ax >= 2.0
    mid = ~flat & ~tail
    out[flat] = ax[flat]
    out[mid] = 1.0 + _psi_mid_spline()(ax[mid])
    out[tail] = _psi_two() + math.exp(-2.0) - np.exp(-ax[tail])
    out *= s
    return out if out.ndim else float(out)


@dataclass(frozen=True)
class VirialWeight:
    """Positive increasing weight x -> A (psi_inf + psi(x/A)).

    Its derivative equals phi(|x|/A), pinched between e^{-|x|/A} and
    3 e^{-|x|/A}; the weight itself increases from 0 to 2 A psi_inf.
    """

    decay_scale: float = 10.0

    def __post_init__(self):
        if not (self.decay_scale > 0):
            raise ValueError(f"decay scale must be positive, got {self.decay_scale}")

    @property
    def psi_infinity(self) -> float:
        """Limit of psi at +infinity: psi(2) + e^{-2}."""
        return _psi_two() + math.exp(-2.0)

    @property
    def saturation(self) -> float:
        """Limit of the weight at +infinity."""
        return 2.0 * self.decay_scale * self.psi_infinity

    def __call__(self, x):
        A = self.decay_scale
        ax = np.asarray(x, dtype=float) / A
        out = A * (self.psi_infinity + _psi(ax))
        # deep negative tail: psi_inf + psi cancels to A e^{x/A} exactly,
        # which the direct form loses to rounding — keep strict positivity
        deep = ax <= -2.0
        out = np.where(deep, A * np.exp(ax), out)
        return out if out.ndim else float(out)

    def derivative(self, x):
        return decay_envelope(np.asarray(x, dtype=float) / self.decay_scale)


# ---------------------------------------------------------------------------
# weighted masses of a field
# ---------------------------------------------------------------------------

def weighted_mass(state: FieldState, cfg: StepperConfig) -> float:
    """Half the integral of a(eps x)^{1/m} u^2 — non-increasing in time."""
    a = cfg.potential.a(cfg.eps * state.grid.x)
    return 0.5 * float(np.sum(a ** (1.0 / cfg.m) * state.values**2) * state.grid.dx)


def inverse_weighted_mass(state: FieldState, cfg: StepperConfig) -> float:
    """Half the integral of u^2 / a(eps x)."""
    a = cfg.potential.a(cfg.eps * state.grid.x)
    return 0.5 * float(np.sum(state.values**2 / a) * state.grid.dx)


def localized_h1_mass(
    z: np.ndarray, grid: Grid, center: float, width: float = 10.0
) -> float:
    """Integral of (z^2 + z_x^2) e^{-|x-center|/width} over the torus."""
    y = grid.wrap(grid.x - center)
    dz = spectral_derivative(z, grid)
    return float(np.sum((z**2 + dz**2) * np.exp(-np.abs(y) / width)) * grid.dx)


def virial_functional(
    z: np.ndarray, grid: Grid, center: float, weight: VirialWeight
) -> float:
    """Half the psi_A-weighted squared mass of the residual about `center`."""
    y = grid.wrap(grid.x - center)
    return 0.5 * float(np.sum(z**2 * weight(y)) * grid.dx)


# ---------------------------------------------------------------------------
# scale projection of the residual
# ---------------------------------------------------------------------------

class ChiC:
    """Cumulative integral of the scale derivative of the soliton.

    chi_c(y) = int_{-infty}^y d/dc Q_c(s) ds, increasing from 0 to its finite
    limit (which vanishes for m = 3, where the soliton mass is c-independent).
    """

    def __init__(self, c: float, m: int, cutoff: float = 45.0):
        if not (c > 0):
            raise ValueError(f"scaling parameter must be positive, got {c}")
        self.c = float(c)
        self.m = int(m)
        half_width = cutoff / math.sqrt(self.c)
        s = np.linspace(-half_width, half_width, 16385)
        values = scale_derivative(self.c, self.m)(s)
        spline = CubicSpline(s, values).antiderivative()
        self._spline = spline
        self._lo = -half_width
        self._hi = half_width
        self._offset = float(spline(-half_width))
        sigma = 1.0 / (self.m - 1) - 0.5
        ints = soliton_integrals(1.0, self.m)
        self.limit = sigma * self.c ** (sigma - 1.0) * ints.int_Q

    def __call__(self, y):
        y = np.asarray(y, dtype=float)
        clipped = np.clip(y, self._lo, self._hi)
        out = self._spline(clipped) - self._offset
        out = np.where(y >= self._hi, self.limit, out)
        out = np.where(y <= self._lo, 0.0, out)
        return out if out.ndim else float(out)


@lru_cache(maxsize=32)
def cumulative_scale_derivative(c: float, m: int) -> ChiC:
    """Cached evaluator for the cumulative scale derivative at (c, m)."""
    return ChiC(c, m)


def scale_projection(
    z: np.ndarray,
    grid: Grid,
    c: float,
    rho: float,
    par: EffectiveParams,
) -> float:
    """First-order correction to the extracted scaling parameter.

    Projects the residual z against the cumulative scale derivative centered
    at rho, normalized so that the projection converts residual mass into an
    equivalent shift of c:

        J = e * int chi_c(x - rho) z dx,
        e = (3 lam0 c - lam) tilde_a(eps rho) / (2 theta c^{2 theta - 1} M[Q]),

    with theta = 1/(m-1) - 1/4 and M[Q] half the squared mass of the ground
    state.  The sign of e flips across the neutral scaling c = lam / (3 lam0).
    """
    m, lam, eps = par.m, par.lam, par.eps
    theta = 1.0 / (m - 1) - 0.25
    ints = soliton_integrals(1.0, m)
    mass = 0.5 * ints.int_Q2
    lam0 = neutral_lambda(m)
    tilde_a = float(nonlinearity_weight(par.potential, eps * rho, m))
    e = (3.0 * lam0 * c - lam) * tilde_a / (2.0 * theta * c ** (2.0 * theta - 1.0) * mass)
    chi = cumulative_scale_derivative(c, m)
    y = grid.wrap(grid.x - rho)
    return e * float(np.sum(chi(y) * z) * grid.dx)


# ---------------------------------------------------------------------------
# time series of functionals
# ---------------------------------------------------------------------------

@dataclass
class FunctionalSeries:
    """Sampled time series of one scalar functional."""

    name: str
    t: np.ndarray
    values: np.ndarray

    def __post_init__(self):
        self.t = np.asarray(self.t, dtype=float)
        self.values = np.asarray(self.values, dtype=float)
        if self.t.shape != self.values.shape:
            raise ValueError("time and value arrays must have matching shapes")


def write_functional_csv(series: FunctionalSeries, path, comments=()) -> None:
    """Write a functional series as `t,value` rows with the name in a comment."""
    extra = (f"functional={series.name}",)
    write_csv(path, "t,value", zip(series.t, series.values), comments=tuple(comments) + extra)
