"""Effective two-parameter dynamics of a soliton crossing the transition.

At leading order the wave is described by a scaling parameter C(t) (local
speed) and a center P(t) obeying the slow system

    C'(t) = eps * p * C * (C - lam/lam0) * (a'/a)(eps*P),   p = 4/(m+3),
    P'(t) = C - lam,

with C = 1 and P = (1-lam)*t at the start, where lam0 = (5-m)/(m+3) is the
neutral value of lam at which a unit soliton transits with no scaling change.
The system has an exact first integral

    C**lam0 * |lam/lam0 - C|**(1-lam0) * a(eps*P)**(-p) = const,

which fixes the terminal scaling c_inf by pure algebra: the soliton either
crosses the transition (refraction, lam below a threshold lam_tilde) or is
turned around (reflection, lam above it).  This module solves the threshold
and terminal-scaling root problems, integrates the system forward (with escape
and turning detected by events) and backward from prescribed terminal data,
and evaluates the interaction integral that measures the total scaling kick
in both its time-domain and scaling-domain forms.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from functools import lru_cache
from typing import Callable, Optional

import numpy as np
from scipy.integrate import quad, solve_ivp

from gkdvlab.potentials import PotentialSpec, tanh_potential
from gkdvlab.solitons import soliton_integrals

__all__ = [
    "EffectiveParams",
    "EffectiveTrajectory",
    "ScalingLaw",
    "BackwardGap",
    "RefractionIntegral",
    "EscapeNotReached",
    "NearThreshold",
    "neutral_lambda",
    "scaling_rate",
    "center_drift",
    "scaling_rate_second_order",
    "reflection_threshold",
    "terminal_scaling",
    "integrate_forward",
    "integrate_backward",
    "trajectory_deviation",
    "refraction_integral",
    "first_integral",
    "flat_start_radius",
    "write_trajectory_csv",
]

THRESHOLD_GUARD = 1e-6  # refuse scaling-law queries closer to lam_tilde than this


class EscapeNotReached(RuntimeError):
    """The slow system did not reach its escape condition within the time cap."""


class NearThreshold(ValueError):
    """lam is too close to the refraction/reflection threshold to classify."""


def neutral_lambda(m: int) -> float:
    """The coefficient value lam0 = (5-m)/(m+3) at which a unit soliton
    transits with C identically 1."""
    if m not in (2, 3, 4):
        raise ValueError(f"nonlinearity power m must be 2, 3 or 4, got {m!r}")
    return (5.0 - m) / (m + 3.0)


@dataclass(frozen=True)
class EffectiveParams:
    """Parameter bundle for the slow system."""

    m: int
    lam: float
    eps: float
    potential: PotentialSpec = field(default_factory=tanh_potential)

    def __post_init__(self) -> None:
        if self.m not in (2, 3, 4):
            raise ValueError(f"nonlinearity power m must be 2, 3 or 4, got {self.m!r}")
        if not 0.0 <= self.lam < 1.0:
            raise ValueError(f"lam must lie in [0, 1), got {self.lam}")
        if not self.eps > 0:
            raise ValueError(f"eps must be positive, got {self.eps}")

    @property
    def lam0(self) -> float:
        return neutral_lambda(self.m)

    @property
    def interaction_time(self) -> float:
        """Default half-duration eps**(-1-1/100) / (1-lam) of the strict
        start convention; the start sits at t = -interaction_time."""
        return self.eps ** (-1.01) / (1.0 - self.lam)


@lru_cache(maxsize=None)
def _unit_integral_ratio(m: int) -> float:
    """(int Q)**2 / int Q**2 at unit scaling."""
    ints = soliton_integrals(1.0, m)
    return ints.int_Q**2 / ints.int_Q2


def _drift_shape_constant(m: int) -> float:
    """xi_m = (3-m)/(5-m)**2 * (int Q)**2 / int Q**2 (zero for m = 3)."""
    return (3.0 - m) / (5.0 - m) ** 2 * _unit_integral_ratio(m)


def scaling_rate(C: float, P: float, par: EffectiveParams) -> float:
    """First-order rate of change of the scaling parameter: C' = eps * this."""
    r = par.eps * P
    ratio = par.potential.da(r) / par.potential.a(r)
    return (4.0 / (par.m + 3.0)) * C * (C - par.lam / par.lam0) * ratio


def center_drift(c: float, rho: float, par: EffectiveParams) -> float:
    """First-order correction to the center speed: rho' = c - lam + eps * this.

    Proportional to (3-m), hence identically zero for the cubic nonlinearity.
    """
    r = par.eps * rho
    ratio = par.potential.da(r) / par.potential.a(r)
    return -_drift_shape_constant(par.m) / math.sqrt(c) * (par.lam - 3.0 * par.lam0 * c) * ratio


def scaling_rate_second_order(c: float, rho: float, par: EffectiveParams) -> float:
    """Second-order scaling rate for the cubic case: C' = eps**2 * this (m=3).

    Only the cubic nonlinearity has a vanishing first-order drift, making the
    second-order rate the leading correction; it is undefined otherwise.
    """
    if par.m != 3:
        raise ValueError("the second-order scaling rate is defined for m = 3 only")
    r = par.eps * rho
    ratio = par.potential.da(r) / par.potential.a(r)
    shape = 0.5 * par.lam * _unit_integral_ratio(3)
    return shape / math.sqrt(c) * (c - par.lam) * ratio**2


def first_integral(par: EffectiveParams, C, P):
    """Exact invariant C**lam0 |lam/lam0 - C|**(1-lam0) a(eps P)**(-4/(m+3)).

    The absolute value matters: for lam < lam0 the factor lam/lam0 - C is
    negative along the whole trajectory (and C never crosses lam/lam0, which
    is an equilibrium of the C-equation), so the invariant is smooth.
    """
    lam0 = par.lam0
    C = np.asarray(C, dtype=float)
    P = np.asarray(P, dtype=float)
    p = 4.0 / (par.m + 3.0)
    return C**lam0 * np.abs(par.lam / lam0 - C) ** (1.0 - lam0) * par.potential.a(par.eps * P) ** (-p)


# ---------------------------------------------------------------- root laws


def _bisect_newton(
    f: Callable[[float], float],
    df: Callable[[float], float],
    lo: float,
    hi: float,
    xtol: float = 1e-13,
) -> float:
    """Bracketing bisection to xtol, then a single Newton polish.

    The bracket endpoints must straddle a sign change; the polish is kept only
    if it stays inside the bracket.
    """
    f_lo = f(lo)
    f_hi = f(hi)
    if f_lo == 0.0:
        return lo
    if f_hi == 0.0:
        return hi
    if np.sign(f_lo) == np.sign(f_hi):
        raise ValueError(f"root not bracketed on [{lo}, {hi}]: f = ({f_lo}, {f_hi})")
    a, b, f_a = lo, hi, f_lo
    while (b - a) > xtol * max(1.0, abs(a) + abs(b)):
        mid = 0.5 * (a + b)
        f_mid = f(mid)
        if f_mid == 0.0:
            a = b = mid
            break
        if np.sign(f_mid) == np.sign(f_a):
            a, f_a = mid, f_mid
        else:
            b = mid
    x = 0.5 * (a + b)
    slope = df(x)
    if slope != 0.0:
        polished = x - f(x) / slope
        if a - 1e-15 <= polished <= b + 1e-15:
            x = polished
    return x


@lru_cache(maxsize=None)
def reflection_threshold(m: int) -> float:
    """The critical lam separating refraction (below) from reflection (above).

    Defined as the root in (lam0, 1) of

        h(x) = x * ((1 - lam0)/(x - lam0))**(1 - lam0) = 2**(4/(m+3)),

    where h decreases strictly from +inf to 1.  Solved by bisection with a
    Newton polish in log form; the defining residual is below 1e-12.
    """
    lam0 = neutral_lambda(m)
    log_target = (4.0 / (m + 3.0)) * math.log(2.0)

    def g(x: float) -> float:
        return (
            math.log(x)
            + (1.0 - lam0) * (math.log(1.0 - lam0) - math.log(x - lam0))
            - log_target
        )

    def dg(x: float) -> float:
        return 1.0 / x - (1.0 - lam0) / (x - lam0)

    return _bisect_newton(g, dg, lam0 + 1e-9, 1.0 - 1e-12)


@dataclass(frozen=True)
class ScalingLaw:
    """Classification and terminal scaling for one (m, lam)."""

    m: int
    lam: float
    lam_tilde: float
    branch: str  # "refraction" | "reflection"
    c_inf: float
    kappa: float  # terminal amplitude factor relative to the plain profile


def terminal_scaling(lam: float, m: int) -> ScalingLaw:
    """Terminal scaling c_inf after the interaction, from the first integral.

    Refraction (lam < lam_tilde): c_inf solves, on the branch c > lam,

        c**lam0 ((lam - c lam0)/(lam - lam0))**(1-lam0) = 2**(4/(m+3)),

    and the escaped wave carries amplitude factor kappa = 2**(-1/(m-1)).
    Reflection (lam > lam_tilde): the right side is 1 (the potential factor
    cancels between the symmetric endpoints), the root lies in (0, lam), and
    kappa = 1.  Queries within 1e-6 of lam_tilde are refused as unclassifiable
    at this tolerance; lam = lam0 returns the defined limit c_inf = 1 (the
    algebraic equation degenerates to 0/0 there but the law is continuous).
    """
    if m not in (2, 3, 4):
        raise ValueError(f"nonlinearity power m must be 2, 3 or 4, got {m!r}")
    if not 0.0 <= lam < 1.0:
        raise ValueError(f"lam must lie in [0, 1), got {lam}")
    lam0 = neutral_lambda(m)
    lam_tilde = reflection_threshold(m)
    if abs(lam - lam_tilde) <= THRESHOLD_GUARD:
        raise NearThreshold(
            f"lam = {lam} is within {THRESHOLD_GUARD} of the threshold {lam_tilde}; "
            "the branch cannot be classified reliably"
        )
    if lam == lam0:
        return ScalingLaw(m, lam, lam_tilde, "refraction", 1.0, 2.0 ** (-1.0 / (m - 1)))

    p = 4.0 / (m + 3.0)

    def log_lhs(c: float) -> float:
        # log of c**lam0 ((lam - c lam0)/(lam - lam0))**(1-lam0), valid on the
        # branch where the ratio is positive
        return lam0 * math.log(c) + (1.0 - lam0) * (
            math.log(abs(lam - c * lam0)) - math.log(abs(lam - lam0))
        )

    def dlog_lhs(c: float) -> float:
        return lam0 / c - (1.0 - lam0) * lam0 / (lam - c * lam0)

    if lam < lam_tilde:
        branch = "refraction"
        kappa = 2.0 ** (-1.0 / (m - 1))
        target = p * math.log(2.0)
        if lam < lam0:
            # increasing from -inf on (lam/lam0, inf)
            lo = lam / lam0 + 1e-13 if lam > 0 else 1e-13
            hi = 2.0
            while log_lhs(hi) - target < 0:
                hi *= 2.0
                if hi > 1e6:  # pragma: no cover - defensive
                    raise RuntimeError("terminal-scaling bracket failed to close")
        else:
            # decreasing from h(lam) > target on (lam, lam/lam0)
            lo = lam * (1.0 + 1e-13)
            hi = lam / lam0 * (1.0 - 1e-13)
    else:
        branch = "reflection"
        kappa = 1.0
        target = 0.0
        lo = 1e-13
        hi = lam * (1.0 - 1e-13)

    root = _bisect_newton(lambda c: log_lhs(c) - target, dlog_lhs, lo, hi)
    return ScalingLaw(m, lam, lam_tilde, branch, root, kappa)


# ------------------------------------------------------------- integration


@dataclass(frozen=True)
class EffectiveTrajectory:
    """Sampled forward or backward solution of the slow system.

    `I` is the cumulative interaction integral
    int eps (3 lam0 C - lam)**2 / sqrt(C) * (a'/a)(eps P) dt from the first
    sample, accumulated by the integrator itself.  `dense` interpolates
    (C, P, I) at arbitrary times inside [t[0], t[-1]].
    """

    params: EffectiveParams
    branch: str
    t: np.ndarray
    C: np.ndarray
    P: np.ndarray
    I: np.ndarray
    t_start: float
    t_escape: float
    turning_time: Optional[float]
    dense: Callable

    def at(self, t):
        """Interpolated (C, P) at time(s) t."""
        y = self.dense(t)
        return y[0], y[1]

    def first_integral_series(self) -> np.ndarray:
        return first_integral(self.params, self.C, self.P)

    def first_integral_drift(self) -> float:
        """Relative peak-to-peak variation of the exact invariant."""
        series = self.first_integral_series()
        return float((series.max() - series.min()) / np.mean(series))


def flat_start_radius(
    spec: PotentialSpec, threshold: float = 1e-12, r_max: float = 1e6
) -> float:
    """Smallest radius s with |a'(+-s)| <= threshold (the profile flat to
    machine precision outside).  Bisection on the sampled envelope."""
    def envelope(s: float) -> float:
        return max(abs(float(spec.da(s))), abs(float(spec.da(-s))))

    lo, hi = 0.0, 1.0
    while envelope(hi) > threshold:
        lo, hi = hi, 2.0 * hi
        if hi > r_max:
            raise ValueError("profile derivative does not fall below the flatness threshold")
    for _ in range(200):
        mid = 0.5 * (lo + hi)
        if envelope(mid) > threshold:
            lo = mid
        else:
            hi = mid
        if hi - lo < 1e-9 * max(1.0, hi):
            break
    return hi


def _slow_rhs(par: EffectiveParams):
    lam, lam0, eps, m = par.lam, par.lam0, par.eps, par.m
    p = 4.0 / (m + 3.0)
    a, da = par.potential.a, par.potential.da

    def rhs(t, y):
        C, P, _ = y
        r = eps * P
        ratio = float(da(r)) / float(a(r))
        dC = eps * p * C * (C - lam / lam0) * ratio
        dP = C - lam
        dI = eps * (3.0 * lam0 * C - lam) ** 2 / math.sqrt(C) * ratio
        return (dC, dP, dI)

    return rhs


class _PiecewiseDense:
    """Chain of solve_ivp dense outputs presented as one callable."""

    def __init__(self, sols):
        self._sols = sols
        self._breaks = [s.t[-1] for s in sols[:-1]]

    def __call__(self, t):
        t_arr = np.atleast_1d(np.asarray(t, dtype=float))
        out = np.empty((3, t_arr.size))
        idx = np.searchsorted(self._breaks, t_arr, side="right")
        for i in np.unique(idx):
            mask = idx == i
            out[:, mask] = self._sols[i].sol(t_arr[mask])
        if np.isscalar(t) or np.asarray(t).ndim == 0:
            return out[:, 0]
        return out


def integrate_forward(
    par: EffectiveParams,
    start: str = "strict",
    rtol: float = 1e-10,
    atol: float = 1e-12,
    n_samples: int = 4001,
    flat_threshold: float = 1e-12,
    max_time_factor: float = 60.0,
) -> EffectiveTrajectory:
    """Integrate the slow system from C = 1 on the far incoming side until
    escape.

    start = "strict" puts the initial center at P = -(1-lam) * interaction
    half-duration (so |eps P| ~ eps**(-1/100), where the profile is not yet
    flat); start = "flat" instead starts where |a'| first falls below
    `flat_threshold`, making start-position effects machine-negligible.  The
    escape condition is symmetric: P back at -P(start) for refraction, P back
    at P(start) for reflection (after the turning point, which is recorded).
    An embedded 4(5) pair integrates with the given tolerances and detects
    escape/turning via events; the interaction-integral quadrature rides along
    as an extra state.
    """
    if start not in ("strict", "flat"):
        raise ValueError(f"start must be 'strict' or 'flat', got {start!r}")
    law = terminal_scaling(par.lam, par.m)

    if start == "strict":
        t0 = -par.interaction_time
        P0 = (1.0 - par.lam) * t0
    else:
        radius = flat_start_radius(par.potential, flat_threshold)
        P0 = -radius / par.eps
        t0 = P0 / (1.0 - par.lam)

    rhs = _slow_rhs(par)
    y0 = (1.0, P0, 0.0)
    t_cap = t0 + max_time_factor * abs(t0)
    sols = []
    turning_time = None

    if law.branch == "refraction":
        escape_target = -P0

        def escape(t, y):
            return y[1] - escape_target

        escape.terminal = True
        escape.direction = 1.0
        sol = solve_ivp(
            rhs, (t0, t_cap), y0, method="RK45", rtol=rtol, atol=atol,
            dense_output=True, events=(escape,),
        )
        if not sol.t_events[0].size:
            raise EscapeNotReached(
                f"no escape before t = {t_cap} (refraction, lam={par.lam}, eps={par.eps})"
            )
        t_escape = float(sol.t_events[0][0])
        sols.append(sol)
    else:
        def turning(t, y):
            return y[0] - par.lam

        turning.terminal = True
        turning.direction = -1.0
        sol1 = solve_ivp(
            rhs, (t0, t_cap), y0, method="RK45", rtol=rtol, atol=atol,
            dense_output=True, events=(turning,),
        )
        if not sol1.t_events[0].size:
            raise EscapeNotReached(
                f"no turning before t = {t_cap} (reflection, lam={par.lam}, eps={par.eps})"
            )
        turning_time = float(sol1.t_events[0][0])
        y_turn = sol1.y_events[0][0]

        def escape(t, y):
            return y[1] - P0

        escape.terminal = True
        escape.direction = -1.0
        sol2 = solve_ivp(
            rhs, (turning_time, t_cap), y_turn, method="RK45", rtol=rtol, atol=atol,
            dense_output=True, events=(escape,),
        )
        if not sol2.t_events[0].size:
            raise EscapeNotReached(
                f"no escape before t = {t_cap} (reflection, lam={par.lam}, eps={par.eps})"
            )
        t_escape = float(sol2.t_events[0][0])
        sols.extend([sol1, sol2])

    dense = _PiecewiseDense(sols)
    t = np.linspace(t0, t_escape, n_samples)
    y = dense(t)
    return EffectiveTrajectory(
        params=par,
        branch=law.branch,
        t=t,
        C=y[0],
        P=y[1],
        I=y[2],
        t_start=t0,
        t_escape=t_escape,
        turning_time=turning_time,
        dense=dense,
    )


def integrate_backward(
    par: EffectiveParams,
    c_plus: float,
    X0: float,
    forward: EffectiveTrajectory,
    rtol: float = 1e-10,
    atol: float = 1e-12,
    n_samples: int = 4001,
) -> EffectiveTrajectory:
    """Integrate the slow system backward from terminal data at the forward
    escape time: C = c_plus and P = P_escape + X0 there.

    Used to check that the terminal state determines the incoming wave: with
    c_plus = c_inf and X0 = 0 the backward solution shadows the forward one.
    """
    t_end = forward.t_escape
    P_end = float(forward.dense(t_end)[1]) + X0
    rhs = _slow_rhs(par)
    sol = solve_ivp(
        rhs, (t_end, forward.t_start), (c_plus, P_end, 0.0),
        method="RK45", rtol=rtol, atol=atol, dense_output=True,
    )
    t = np.linspace(forward.t_start, t_end, n_samples)
    y = sol.sol(t)
    return EffectiveTrajectory(
        params=par,
        branch=forward.branch,
        t=t,
        C=y[0],
        P=y[1],
        I=y[2] - y[2][0],
        t_start=forward.t_start,
        t_escape=t_end,
        turning_time=None,
        dense=sol.sol,
    )


@dataclass(frozen=True)
class BackwardGap:
    """Sup-norm gaps between two trajectories over their common time range."""

    sup_dC: float
    sup_eps_dP: float

    @property
    def total(self) -> float:
        return self.sup_dC + self.sup_eps_dP


def trajectory_deviation(
    first: EffectiveTrajectory, second: EffectiveTrajectory, n: int = 2001
) -> BackwardGap:
    lo = max(first.t[0], second.t[0])
    hi = min(first.t[-1], second.t[-1])
    t = np.linspace(lo, hi, n)
    ya = first.dense(t)
    yb = second.dense(t)
    eps = first.params.eps
    return BackwardGap(
        sup_dC=float(np.max(np.abs(ya[0] - yb[0]))),
        sup_eps_dP=float(eps * np.max(np.abs(ya[1] - yb[1]))),
    )


# ------------------------------------------------- interaction integral


@dataclass(frozen=True)
class RefractionIntegral:
    """The interaction integral in its two independently computed forms.

    time_domain : accumulated along the trajectory by the ODE integrator,
        int eps (3 lam0 C - lam)**2 / sqrt(C) (a'/a)(eps P) dt.
    c_domain : the same quantity after the exact change of variables to the
        scaling parameter, ((5-m)/4) * int (3 lam0 c - lam)**2 /
        (c**(3/2) (lam0 c - lam)) dc over [1, C(escape)]; for lam = lam0
        (where C does not move) the closed form
        (4 lam0**2 / (1 - lam0)) * log(a(eps P_escape)/a(eps P_start))
        is used instead.
    """

    time_domain: float
    c_domain: float

    @property
    def relative_gap(self) -> float:
        scale = max(abs(self.time_domain), abs(self.c_domain))
        return abs(self.time_domain - self.c_domain) / scale if scale else 0.0


def refraction_integral(par: EffectiveParams, traj: EffectiveTrajectory) -> RefractionIntegral:
    """Evaluate both forms of the interaction integral for a forward run."""
    lam, lam0, m = par.lam, par.lam0, par.m
    time_value = float(traj.I[-1] - traj.I[0])

    c_end = float(traj.C[-1])
    if lam == lam0:
        a = par.potential.a
        ratio = float(a(par.eps * traj.P[-1])) / float(a(par.eps * traj.P[0]))
        c_value = 4.0 * lam0**2 / (1.0 - lam0) * math.log(ratio)
    else:
        def integrand(c):
            return (3.0 * lam0 * c - lam) ** 2 / (c**1.5 * (lam0 * c - lam))

        c_value, quad_err = quad(integrand, 1.0, c_end, epsabs=1e-13, epsrel=1e-12, limit=200)
        c_value *= (5.0 - m) / 4.0
    return RefractionIntegral(time_domain=time_value, c_domain=float(c_value))


# ----------------------------------------------------------------- output


def write_trajectory_csv(traj: EffectiveTrajectory, path, comments=()) -> None:
    """Write the sampled trajectory as CSV columns t,C,P (17 significant
    digits, enough to round-trip doubles)."""
    lines = [f"# {c}" for c in comments]
    lines.append("t,C,P")
    for t, c, p in zip(traj.t, traj.C, traj.P):
        lines.append(f"{t:.17g},{c:.17g},{p:.17g}")
    with open(path, "w") as fh:
        fh.write("\n".join(lines) + "\n")
