"""Acceptance suite: one test per numbered acceptance item.

Each test exercises a package-level claim end to end, at the tolerance the
package commits to.  The three heavyweight scenarios (slowness sweep,
reflection run, reverse run) are session-scoped fixtures driven through the
CLI entry point, so this file doubles as an integration test of the installed
command.  Item 8 is reported clause by clause (8a/8b/8c) because the clauses
have independent data sources.

Expect a total runtime around 15 minutes; the slow fixtures print nothing
while they integrate.
"""

import math
from pathlib import Path

import numpy as np
import pytest

from gkdvlab import cli
from gkdvlab.correction import ansatz_residual, recovered_drift, solve_correction
from gkdvlab.diagnostics import cumulative_scale_derivative
from gkdvlab.effective import (
    EffectiveParams,
    center_drift,
    integrate_forward,
    neutral_lambda,
    reflection_threshold,
    refraction_integral,
    terminal_scaling,
)
from gkdvlab.potentials import constant_potential, tanh_potential
from gkdvlab.runio import RunManifest
from gkdvlab.solitons import ScaledSoliton
from gkdvlab.spectral import (
    FieldState,
    Grid,
    StepperConfig,
    energy,
    h1_norm,
    mass_and_flux,
    place_soliton,
    step,
)

# --------------------------------------------------------------------------
# helpers
# --------------------------------------------------------------------------


def read_report(rundir: Path) -> RunManifest:
    return RunManifest.read(rundir / "report.txt")


def read_csv_with_comments(path: Path):
    """Split a CSV into (comment dict, header list, row dicts)."""
    comments, rows = {}, []
    for line in path.read_text().splitlines():
        if line.startswith("#"):
            body = line[1:].strip()
            if "=" in body:
                key, value = body.split("=", 1)
                comments[key] = value
        elif line:
            rows.append(line.split(","))
    header, data = rows[0], [dict(zip(rows[0], r)) for r in rows[1:]]
    return comments, header, data


def run_cli(argv) -> None:
    rc = cli.main(argv)
    assert rc == 0, f"command {argv} exited with {rc}"


# --------------------------------------------------------------------------
# heavyweight scenario fixtures (shared across tests)
# --------------------------------------------------------------------------

SWEEP_EPS = "0.2,0.14,0.1,0.07,0.05"


@pytest.fixture(scope="session")
def sweep_dir(tmp_path_factory) -> Path:
    """Slowness sweep m=2, lam=0.3 with matched flat controls (~3 min)."""
    out = tmp_path_factory.mktemp("acceptance") / "sweep"
    run_cli([
        "sweep", "--quiet", "--set", "m=2", "--set", "lam=0.3",
        "--eps", SWEEP_EPS, "--jobs", "1", "--out", str(out),
    ])
    return out


@pytest.fixture(scope="session")
def reflection_dir(tmp_path_factory) -> Path:
    """Reflection scenario m=2, lam=0.95, eps=0.1 (~6 min).

    The run is long enough for wrapped radiation to reach the dealiasing
    guard band, so the seam sponge is enabled; the soliton never comes near
    the absorbing strip.
    """
    out = tmp_path_factory.mktemp("acceptance") / "reflection"
    run_cli([
        "simulate", "--quiet", "--set", "m=2", "--set", "lam=0.95",
        "--set", "eps=0.1", "--set", "sponge=true", "--out", str(out),
    ])
    return out


@pytest.fixture(scope="session")
def reverse_dir(tmp_path_factory) -> Path:
    """Forward interaction run plus its reflect-and-reverse twin (~3 min).

    The planner's stability step is coarse enough that time-discretization
    asymmetry would dominate the reversal mismatch, so the step is pinned to
    0.002 where the mismatch sits well inside the acceptance tolerance.
    """
    out = tmp_path_factory.mktemp("acceptance") / "forward"
    run_cli([
        "simulate", "--quiet", "--set", "m=2", "--set", "lam=0.3",
        "--set", "eps=0.2", "--set", "dt=0.002", "--out", str(out),
    ])
    run_cli(["reverse", "--quiet", "--from", str(out)])
    return out


# --------------------------------------------------------------------------
# 1. algebraic root laws
# --------------------------------------------------------------------------


def test_criterion_1_root_laws():
    """Threshold root and neutral-coupling terminal scaling, to 1e-12."""
    for m in (2, 3, 4):
        lam0 = neutral_lambda(m)
        lam_t = reflection_threshold(m)
        assert lam0 < lam_t < 1.0
        # residual of the defining equation, evaluated independently
        residual = abs(
            lam_t * ((1.0 - lam0) / (lam_t - lam0)) ** (1.0 - lam0)
            - 2.0 ** (4.0 / (m + 3))
        )
        assert residual < 1e-12, f"m={m}: threshold residual {residual}"

        # at the neutral coupling the terminal scaling is exactly unity
        law = terminal_scaling(lam0, m)
        assert abs(law.c_inf - 1.0) <= 1e-12
        # and the law is continuous there, not special-cased into a jump
        for nudge in (-1e-4, 1e-4):
            near = terminal_scaling(lam0 + nudge, m)
            assert abs(near.c_inf - 1.0) < 1e-3


# --------------------------------------------------------------------------
# 2. the slow modulation system
# --------------------------------------------------------------------------

FIRST_INTEGRAL_POINTS = [
    (m, lam, eps)
    for m, lams in ((2, (0.1, 0.3, 0.5, 0.8)), (3, (0.1, 0.2, 0.35)), (4, (0.05, 0.1, 0.2)))
    for lam in lams
    for eps in (0.2, 0.05)
]


def test_criterion_2_effective_ode():
    """Invariant drift < 1e-8 on 20 trajectories; neutral coupling pins the
    scaling at 1 to 1e-10; strict-start deviation shrinks with slowness."""
    assert len(FIRST_INTEGRAL_POINTS) == 20
    for m, lam, eps in FIRST_INTEGRAL_POINTS:
        par = EffectiveParams(m=m, lam=lam, eps=eps)
        traj = integrate_forward(par, start="flat")
        drift = traj.first_integral_drift()
        assert drift < 1e-8, f"(m,lam,eps)=({m},{lam},{eps}): drift {drift}"

    for m in (2, 3, 4):
        par = EffectiveParams(m=m, lam=neutral_lambda(m), eps=0.1)
        traj = integrate_forward(par, start="flat")
        assert np.max(np.abs(traj.C - 1.0)) <= 1e-10

    c_inf = terminal_scaling(0.3, 2).c_inf
    deviations = []
    for eps in (0.2, 0.1, 0.05):
        par = EffectiveParams(m=2, lam=0.3, eps=eps)
        traj = integrate_forward(par, start="strict")
        c_mid = traj.at(par.interaction_time)[0]
        deviations.append(abs(c_mid - c_inf))
    assert deviations[0] > deviations[1] > deviations[2], deviations


# --------------------------------------------------------------------------
# 3. the interaction integral in its two forms
# --------------------------------------------------------------------------

INTERACTION_POINTS = [
    (2, 0.3, 0.2), (2, 0.3, 0.1), (2, 0.1, 0.2), (2, 0.5, 0.1),
    (2, neutral_lambda(2), 0.1),
    (3, 0.2, 0.2), (3, 0.3, 0.1), (3, neutral_lambda(3), 0.2),
    (4, 0.1, 0.1), (4, 0.2, 0.2),
]


def test_criterion_3_interaction_integral():
    """Trajectory-accumulated and scaling-substituted forms agree to 1e-4."""
    for m, lam, eps in INTERACTION_POINTS:
        par = EffectiveParams(m=m, lam=lam, eps=eps)
        traj = integrate_forward(par, start="flat")
        both = refraction_integral(par, traj)
        assert both.relative_gap < 1e-4, (
            f"(m,lam,eps)=({m},{lam},{eps}): forms differ by {both.relative_gap}"
        )


# --------------------------------------------------------------------------
# 4. full-field solver fidelity
# --------------------------------------------------------------------------


def test_criterion_4_pde_fidelity():
    """Soliton transport to 1e-5 in H1 over 50 time units; weighted-energy
    drift < 1e-8 and mass-balance residual < 1e-6 on a varying-coefficient
    run."""
    # (a) constant-coefficient transport against the exact profile
    grid = Grid(N=4096, L=400.0)
    cfg = StepperConfig(m=2, lam=0.3, eps=0.1,
                        potential=constant_potential(1.0), dt=1e-3)
    state = FieldState(t=0.0, values=place_soliton(grid, 1.0, 2, 0.0), grid=grid)
    n_steps = 50_000
    for _ in range(n_steps):
        state = step(state, cfg)
    exact = place_soliton(grid, 1.0, 2, (1.0 - cfg.lam) * n_steps * cfg.dt)
    rel_err = h1_norm(state.values - exact, grid) / h1_norm(exact, grid)
    assert rel_err < 1e-5, f"transport H1 relative error {rel_err}"

    # (b, c) varying coefficient: weighted energy and the mass balance,
    # with the balance flux sampled at every step
    grid = Grid(N=2048, L=240.0)
    cfg = StepperConfig(m=2, lam=0.3, eps=0.2, potential=tanh_potential(1.0), dt=1e-3)
    state = FieldState(t=0.0, values=place_soliton(grid, 1.0, 2, -20.0), grid=grid)
    e0 = energy(state, cfg)
    mass0, flux0 = mass_and_flux(state, cfg)
    fluxes = [flux0]
    n_steps = 20_000
    for _ in range(n_steps):
        state = step(state, cfg)
        fluxes.append(mass_and_flux(state, cfg)[1])
    e1 = energy(state, cfg)
    mass1 = mass_and_flux(state, cfg)[0]

    energy_drift = abs(e1 - e0) / abs(e0)
    assert energy_drift < 1e-8, f"weighted-energy relative drift {energy_drift}"

    balance = np.trapezoid(np.asarray(fluxes), dx=cfg.dt)
    residual = abs(mass1 - mass0 - balance) / mass0
    assert residual < 1e-6, f"mass-balance relative residual {residual}"


# --------------------------------------------------------------------------
# 5. the dichotomy: forward escape vs bounce-back
# --------------------------------------------------------------------------


def test_criterion_5_dichotomy(sweep_dir, reflection_dir):
    """Below the threshold the soliton escapes forward with terminal scaling
    above the coupling; above it the center turns around and the terminal
    scaling drops below the coupling."""
    refraction = read_report(sweep_dir / "eps_0.1" / "member")
    assert refraction.get("branch") == "refraction"
    assert float(refraction.get("c_plus")) > 0.3
    assert float(refraction.get("terminal_center_speed")) > 0.0

    reflection = read_report(reflection_dir)
    assert reflection.get("branch") == "reflection"
    assert float(reflection.get("terminal_center_speed")) < 0.0
    assert float(reflection.get("c_plus")) < 0.95


# --------------------------------------------------------------------------
# 6. slowness scaling of the terminal gap and the defect
# --------------------------------------------------------------------------


def test_criterion_6_scaling_brackets(sweep_dir):
    """Fitted terminal-gap exponent >= 0.45; defect exponent within
    [0.45, 1.1]; every member defect at least 10x its flat control floor."""
    comments, _, rows = read_csv_with_comments(sweep_dir / "sweep.csv")
    assert comments.get("fit_valid") == "true"

    gap_exp = float(comments["c_gap_exponent"])
    assert gap_exp >= 0.45, f"terminal-gap exponent {gap_exp}"

    defect_exp = float(comments["defect_exponent"])
    assert 0.45 <= defect_exp <= 1.1, f"defect exponent {defect_exp}"

    assert len(rows) == 5
    for row in rows:
        assert row["status"] == "ok"
        liminf = float(row["liminf"])
        floor = float(row["control_floor"])
        assert liminf > 10.0 * floor, (
            f"eps={row['eps']}: defect {liminf} not above 10x control {floor}"
        )


# --------------------------------------------------------------------------
# 7. first-order correction machinery
# --------------------------------------------------------------------------

DRIFT_POINTS = [
    (0.8, 0.1, -5.0), (1.0, 0.3, 0.0), (1.3, 0.5, 5.0),
    (1.7, 0.2, 8.0), (2.2, 0.05, -8.0),
]


def test_criterion_7_correction_machinery():
    """Center-drift correction recovered from the solved profile matches the
    closed form to 1e-6 (quadratic and quartic nonlinearities), vanishes to
    1e-10 for the cubic one, and the corrected-description residual shrinks
    with slowness at a fitted rate of at least 1.4."""
    for m in (2, 4):
        for c, lam, rho in DRIFT_POINTS:
            par = EffectiveParams(m=m, lam=lam, eps=0.1)
            profile = solve_correction(c, m, lam)
            got = recovered_drift(profile, rho, par)
            want = center_drift(c, rho, par)
            assert abs(got - want) < 1e-6, (
                f"(m,c,lam,rho)=({m},{c},{lam},{rho}): |{got} - {want}|"
            )

    # cubic nonlinearity: the drift correction is structurally absent
    par3 = EffectiveParams(m=3, lam=0.2, eps=0.1)
    profile3 = solve_correction(1.3, 3, 0.2, step=0.0025)
    assert abs(recovered_drift(profile3, 0.0, par3)) < 1e-10

    # corrected description gains better than 1.4 in the slowness exponent
    eps_list = (0.2, 0.1, 0.05)
    for m in (2, 4):
        sizes = [
            ansatz_residual(EffectiveParams(m=m, lam=0.3, eps=eps)).h1
            for eps in eps_list
        ]
        slope = np.polyfit(np.log(eps_list), np.log(sizes), 1)[0]
        assert slope >= 1.4, f"m={m}: residual slowness slope {slope}"


# --------------------------------------------------------------------------
# 8. monotone functionals and localized-mass accounting
# --------------------------------------------------------------------------


def test_criterion_8a_cumulative_scale_identity():
    """For the cubic nonlinearity the cumulative scale derivative equals
    y Q_c(y) / (2c) everywhere, to 1e-8 in the sup norm."""
    for c in (1.0, 1.4):
        chi = cumulative_scale_derivative(c, 3)
        profile = ScaledSoliton(c, 3)
        y = np.linspace(-40.0 / math.sqrt(c), 40.0 / math.sqrt(c), 20001)
        exact = y * profile(y) / (2.0 * c)
        sup_gap = float(np.max(np.abs(chi(y) - exact)))
        assert sup_gap < 1e-8, f"c={c}: sup gap {sup_gap}"


def test_criterion_8b_weighted_mass_monotone(sweep_dir):
    """The coefficient-weighted mass never increases along interaction runs
    (tolerance 1e-6 per sampling interval)."""
    for eps in ("0.2", "0.1", "0.05"):
        path = sweep_dir / f"eps_{eps}" / "member" / "functionals" / "weighted_mass.csv"
        _, _, rows = read_csv_with_comments(path)
        values = np.array([float(r["value"]) for r in rows])
        assert len(values) > 100
        increments = np.diff(values)
        assert increments.max() <= 1e-6, (
            f"eps={eps}: weighted mass rose by {increments.max()}"
        )


def test_criterion_8c_localized_mass_exponent(sweep_dir):
    """Fitted slowness exponent of the time-integrated localized residual
    mass should land in [1.3, 1.7].

    At desk-scale slowness the residual is dominated by the smooth
    first-order dressing of the soliton (an O(eps) field held for an
    O(1/eps) crossing, hence a cumulative exponent near 1), not by the
    radiative part the bracket targets.  Re-measuring with the solved
    dressing profile subtracted from the residual gives a remainder whose
    fitted exponent is near 2.1, so the targeted radiative rate is crossed,
    not reached, inside the affordable slowness range; the raw and
    dressing-subtracted fits straddle the bracket.  The assertion states the
    committed bracket and is expected to fail until runs at far smaller
    slowness are affordable.
    """
    comments, _, _ = read_csv_with_comments(sweep_dir / "sweep.csv")
    exponent = float(comments["localized_mass_exponent"])
    ci = comments.get("localized_mass_exponent_ci", "?")
    assert 1.3 <= exponent <= 1.7, (
        f"localized-mass exponent {exponent} (CI {ci}) outside [1.3, 1.7]; "
        "dominated by the first-order dressing at affordable slowness"
    )


# --------------------------------------------------------------------------
# 9. reflect-and-reverse symmetry
# --------------------------------------------------------------------------


def test_criterion_9_reverse_run(reverse_dir):
    """Reflecting the final state and stepping backward reproduces the
    forward run to 1e-6 in H1, and the center-drift observable flips sign
    while the scaling-drift observable keeps it."""
    forward = read_report(reverse_dir)
    backward = read_report(reverse_dir / "reverse")

    mismatch = float(backward.get("max_h1_abs"))
    assert mismatch < 1e-6, f"reversal H1 mismatch {mismatch}"
    assert int(backward.get("checked_snapshots")) >= 5

    p_fwd = float(forward.get("drift_prediction"))
    p_rev = float(backward.get("drift_prediction"))
    assert p_fwd != 0.0 and p_rev != 0.0
    assert p_fwd * p_rev < 0.0, f"center drift did not flip: {p_fwd} vs {p_rev}"
    assert abs(p_rev + p_fwd) / abs(p_fwd) < 1e-3

    d_fwd = float(forward.get("drift_excess"))
    d_rev = float(backward.get("drift_excess"))
    assert d_fwd * d_rev > 0.0, f"scaling drift flipped sign: {d_fwd} vs {d_rev}"
    assert abs(d_rev - d_fwd) / abs(d_fwd) < 1e-3
