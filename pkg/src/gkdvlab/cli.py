"""Command-line driver tying the laboratory into reproducible experiments.

Subcommands
-----------
roots     tabulate the reflection threshold and terminal scaling laws
simulate  plan and run one scattering scenario end to end
sweep     run the slowness sweep with matched controls and fit exponents
reverse   reflect a finished run and step it back, checking the symmetry
track     re-extract soliton parameters from stored snapshots
defect    re-measure the terminal defect from stored snapshots
selftest  fast cross-module invariant suite

Configuration is a flat key=value text file (``--config``) with repeatable
``--set key=value`` overrides.  Unset numerical parameters (domain size, grid,
time step, horizon, measurement window) are filled by a planner that
integrates the slow effective system first and sizes the discretization
around the predicted soliton path.  Exit codes: 0 success, 1 numerical
failure, 2 bad input.
"""

from __future__ import annotations

import argparse
import math
import sys
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional

import numpy as np

from gkdvlab import __version__
from gkdvlab.diagnostics import (
    FunctionalSeries,
    VirialWeight,
    inverse_weighted_mass,
    localized_h1_mass,
    virial_functional,
    weighted_mass,
    write_functional_csv,
)
from gkdvlab.effective import (
    EffectiveParams,
    EffectiveTrajectory,
    ScalingLaw,
    center_drift,
    integrate_forward,
    neutral_lambda,
    reflection_threshold,
    terminal_scaling,
    flat_start_radius,
)
from gkdvlab.modulation import (
    ModulationTrack,
    decompose,
    measure_defect,
    track as track_states,
    write_defect_csv,
    write_track_csv,
)
from gkdvlab.potentials import (
    PotentialSpec,
    constant_potential,
    nonlinearity_weight,
    reflected_potential,
    tanh_potential,
)
from gkdvlab.runio import (
    RunManifest,
    apply_overrides,
    parse_config_file,
    sha256_bytes,
    sha256_file,
    write_csv,
)
from gkdvlab.solitons import ScaledSoliton
from gkdvlab.spectral import (
    FieldState,
    Grid,
    SnapshotMeta,
    SpongeConfig,
    Stepper,
    StepperConfig,
    h1_norm,
    load_snapshot,
    mass_and_flux,
    place_soliton,
    save_snapshot,
    energy,
    stable_dt,
)

SEAM_FLATNESS = 1e-12
START_FLATNESS = 1e-12


# ----------------------------------------------------------- configuration


def _merge_config(args) -> dict:
    config = {}
    if getattr(args, "config", None):
        config.update(parse_config_file(args.config))
    config = apply_overrides(config, getattr(args, "set", None) or [])
    return config


def _config_text(config: dict) -> str:
    return "\n".join(f"{k}={config[k]}" for k in sorted(config)) + "\n"


def _get_float(config: dict, key: str, default: float) -> float:
    try:
        return float(config.get(key, default))
    except (TypeError, ValueError) as exc:
        raise ValueError(f"config key {key!r} is not a number: {config.get(key)!r}") from exc


def _get_int(config: dict, key: str, default: int) -> int:
    try:
        return int(config.get(key, default))
    except (TypeError, ValueError) as exc:
        raise ValueError(f"config key {key!r} is not an integer: {config.get(key)!r}") from exc


def _get_bool(config: dict, key: str, default: bool) -> bool:
    raw = str(config.get(key, default)).strip().lower()
    if raw in ("1", "true", "on", "yes"):
        return True
    if raw in ("0", "false", "off", "no"):
        return False
    raise ValueError(f"config key {key!r} is not a boolean: {config.get(key)!r}")


def _build_potential(family: str, gamma_a: float, a_value: float, reflected: bool) -> PotentialSpec:
    if family == "tanh":
        spec = tanh_potential(gamma_a)
    elif family == "constant":
        spec = constant_potential(a_value)
    else:
        raise ValueError(f"unknown coefficient family {family!r} (expected tanh or constant)")
    return reflected_potential(spec) if reflected else spec


# ------------------------------------------------------------------ planner


@dataclass
class RunPlan:
    """Everything needed to execute one run reproducibly."""

    config: dict
    par: EffectiveParams
    law: ScalingLaw
    grid: Grid
    cfg: StepperConfig
    c0: float
    x0: float
    n_steps: int
    every: int            # steps between series samples
    snap_stride: int      # series samples between stored snapshots
    window: tuple
    traj: Optional[EffectiveTrajectory]
    manifest: RunManifest = field(repr=False)

    @property
    def T(self) -> float:
        return self.n_steps * self.cfg.dt

    @property
    def dt_series(self) -> float:
        return self.every * self.cfg.dt

    @property
    def n_calls(self) -> int:
        return self.n_steps // self.every + 1


def plan_run(raw_config: dict) -> RunPlan:
    """Size grid, step and horizon for a scenario, filling unset keys.

    For the tanh coefficient family the slow effective system is integrated
    first; its predicted path sets the horizon, the measurement window and
    the symmetric domain (seam flat below 1e-12).  Explicit keys always win.
    """
    config = dict(raw_config)
    family = config.setdefault("family", "tanh")
    reflected = _get_bool(config, "reflected", False)
    m = _get_int(config, "m", 2)
    lam = _get_float(config, "lam", 0.3)
    eps = _get_float(config, "eps", 0.1)
    gamma_a = _get_float(config, "gamma_a", 1.0)
    a_value = _get_float(config, "a_value", 1.0)
    c0 = _get_float(config, "c0", 1.0)
    spec = _build_potential(family, gamma_a, a_value, reflected)
    par = EffectiveParams(m=m, lam=lam, eps=eps, potential=spec)

    traj = None
    if family == "tanh" and not reflected:
        law = terminal_scaling(lam, m)
        traj = integrate_forward(par, start="flat")
        duration = traj.t_escape - traj.t_start
        default_x0 = float(traj.P[0])
    else:
        # No interaction scaling law applies; the terminal soliton is the
        # incoming one.  Used for control runs and reflected re-runs.
        law = ScalingLaw(
            m=m, lam=lam, lam_tilde=reflection_threshold(m),
            branch="refraction", c_inf=c0, kappa=1.0,
        )
        duration = None
        default_x0 = 0.0

    x0 = _get_float(config, "x0", default_x0)
    if abs(float(spec.da(eps * x0))) > START_FLATNESS:
        raise ValueError(
            f"initial center x0={x0:g} sits where the coefficient still varies "
            f"(|a'({eps * x0:g})| > {START_FLATNESS:g}); start in the flat region"
        )

    # Horizon and measurement window.
    settle = _get_float(config, "settle", 10.0)
    if "T" in config:
        T_target = _get_float(config, "T", 0.0)
        if duration is None:
            win_default = (0.6 * T_target, T_target)
        else:
            win_default = (duration + settle, T_target)
    else:
        if duration is None:
            T_target = 50.0
            win_default = (0.6 * T_target, T_target)
        else:
            window_len = max(50.0 / law.c_inf, 30.0)
            T_target = duration + settle + window_len + 5.0
            win_default = (duration + settle, duration + settle + window_len)
    window = (
        _get_float(config, "window_lo", win_default[0]),
        _get_float(config, "window_hi", win_default[1]),
    )
    if not 0.0 <= window[0] < window[1] <= T_target + 1e-9:
        raise ValueError(f"window {window} must satisfy 0 <= lo < hi <= T={T_target:g}")

    # Domain: symmetric about the coefficient transition, covering the
    # predicted path (plus free flight after escape) with margin.
    margin = 30.0
    if traj is not None:
        v_escape = law.c_inf - lam
        tail = max(T_target - duration, 0.0)
        p_lo = float(traj.P.min()) + min(v_escape, 0.0) * tail
        p_hi = float(traj.P.max()) + max(v_escape, 0.0) * tail
        c_max = max(float(traj.C.max()), c0)
        half_L = max(abs(p_lo), abs(p_hi)) + margin
        half_L = max(half_L, flat_start_radius(spec) / eps + 25.0)
    else:
        p_hi = x0 + max(c0 - lam, 0.0) * T_target
        p_lo = x0 + min(c0 - lam, 0.0) * T_target
        c_max = c0
        half_L = max(abs(p_lo), abs(p_hi)) + margin
    L = _get_float(config, "L", 2.0 * math.ceil(half_L))

    if family == "tanh":
        for seam in (-L / 2.0, L / 2.0):
            if abs(float(spec.da(eps * seam))) > SEAM_FLATNESS:
                raise ValueError(
                    f"domain seam at x={seam:g} is not in the flat region of the "
                    f"coefficient (|a'| > {SEAM_FLATNESS:g}); increase L"
                )

    dx_target = min(0.15, 0.19 / math.sqrt(c_max))
    default_N = 2 ** math.ceil(math.log2(max(L / dx_target, 256.0)))
    N = _get_int(config, "N", default_N)
    grid = Grid(N=N, L=L)
    if not grid.resolves(c_max):
        raise ValueError(
            f"grid spacing {grid.dx:g} too coarse for scaling up to {c_max:g}"
        )

    dealias = _get_float(config, "dealias", 2.0 / 3.0)
    alias_threshold = _get_float(config, "alias_threshold", 1e-8)
    sponge = None
    if _get_bool(config, "sponge", False):
        sponge = SpongeConfig(
            strength=_get_float(config, "sponge_strength", 1.0),
            width=_get_float(config, "sponge_width", 40.0),
        )

    # Time step from the advective stability bound with amplitude headroom.
    if traj is not None:
        amps = ScaledSoliton(1.0, m)(0.0) * traj.C ** (1.0 / (m - 1)) / np.asarray(
            nonlinearity_weight(spec, eps * traj.P, m)
        )
        u_max = 1.25 * float(np.max(amps))
    else:
        u_max = 1.25 * float(ScaledSoliton(c0, m)(0.0)) / float(
            nonlinearity_weight(spec, eps * x0, m)
        )
    probe = StepperConfig(
        m=m, lam=lam, eps=eps, potential=spec, dt=1.0,
        dealias_fraction=dealias, alias_threshold=alias_threshold, sponge=sponge,
    )
    dt_raw = stable_dt(grid, probe, u_max, safety=_get_float(config, "dt_safety", 0.45))
    dt_series_target = _get_float(config, "dt_series", 0.5)
    if "dt" in config:
        dt = _get_float(config, "dt", 0.0)
        if not 0.0 < dt:
            raise ValueError(f"dt must be positive, got {dt:g}")
    else:
        dt = dt_series_target / math.ceil(dt_series_target / dt_raw)
    every = max(1, round(dt_series_target / dt))
    dt_series = every * dt
    n_steps = every * math.ceil(T_target / dt_series - 1e-9)
    T = n_steps * dt

    snap_target = _get_float(config, "dt_snap", max(1.0, math.ceil(T / 400.0)))
    snap_stride = max(1, round(snap_target / dt_series))
    dt_snap = snap_stride * dt_series

    cfg = StepperConfig(
        m=m, lam=lam, eps=eps, potential=spec, dt=dt,
        dealias_fraction=dealias, alias_threshold=alias_threshold, sponge=sponge,
    )

    # Record the fully resolved parameter set.
    for key, value in (
        ("family", family), ("reflected", reflected), ("m", m), ("lam", lam),
        ("eps", eps), ("gamma_a", gamma_a), ("a_value", a_value), ("c0", c0),
        ("x0", x0), ("L", L), ("N", N), ("dt", dt), ("T", T),
        ("dt_series", dt_series), ("dt_snap", dt_snap), ("dealias", dealias),
        ("alias_threshold", alias_threshold),
        ("sponge", sponge is not None),
        ("window_lo", window[0]), ("window_hi", min(window[1], T)),
    ):
        config[key] = value
    if sponge is not None:
        config["sponge_strength"] = sponge.strength
        config["sponge_width"] = sponge.width

    manifest = RunManifest()
    for key, value in config.items():
        manifest.set(key, value)
    manifest.set("version", __version__)
    manifest.set("branch", law.branch)
    manifest.set("c_inf", law.c_inf)
    manifest.set("kappa", law.kappa)
    manifest.set("lambda_tilde", law.lam_tilde)
    manifest.set("hash.config", sha256_bytes(_config_text(raw_config).encode()))

    return RunPlan(
        config={k: str(v) for k, v in config.items()},
        par=par, law=law, grid=grid, cfg=cfg, c0=c0, x0=x0,
        n_steps=n_steps, every=every, snap_stride=snap_stride,
        window=(window[0], min(window[1], T)), traj=traj, manifest=manifest,
    )


# ---------------------------------------------------------------- execution


class _SeriesObserver:
    """Inline sampling during a run: conserved quantities, warm-started
    parameter extraction, diagnostic functionals, and snapshot emission."""

    def __init__(self, plan: RunPlan, snapdir: Path):
        self.plan = plan
        self.snapdir = snapdir
        self.weight = VirialWeight()
        self.meta = SnapshotMeta(
            m=plan.cfg.m, lam=plan.cfg.lam, eps=plan.cfg.eps,
            gamma_a=float(plan.config["gamma_a"])
            if plan.config["family"] == "tanh" and plan.config["reflected"] == "False"
            else float("nan"),
        )
        self.rows = []          # t, mass, energy, h1 defect, c, rho
        self.func = {name: [] for name in (
            "weighted_mass", "inverse_weighted_mass",
            "localized_residual_mass", "virial",
        )}
        self.t = []
        self.prev = (plan.c0, plan.x0)
        self.prev_t: Optional[float] = None
        self.index = 0
        self.snap_count = 0
        self.ortho_max = 0.0
        self.max_jump = 0.0
        self.jump_violations = 0
        self.z_h1 = []
        self.z_h1_loc = []

    def __call__(self, state: FieldState) -> None:
        plan = self.plan
        par, cfg, grid = plan.par, plan.cfg, state.grid
        if self.prev_t is None:
            guess = self.prev
        else:
            guess = (self.prev[0], self.prev[1] + (state.t - self.prev_t) * (self.prev[0] - par.lam))
        dec = decompose(state, par, guess=guess)
        shift = round((dec.rho - guess[1]) / grid.L)
        rho = dec.rho - shift * grid.L
        if self.prev_t is not None:
            allowed = 10.0 * (state.t - self.prev_t) * (abs(self.prev[0] - par.lam) + par.eps)
            jump = abs(dec.c - self.prev[0]) + abs(rho - guess[1])
            self.max_jump = max(self.max_jump, jump)
            if jump > allowed:
                self.jump_violations += 1
        self.ortho_max = max(self.ortho_max, dec.ortho_residual)

        mass, _ = mass_and_flux(state, cfg)
        e_val = energy(state, cfg)
        h1_z = h1_norm(dec.z, grid)
        loc = localized_h1_mass(dec.z, grid, rho, 10.0)
        self.rows.append((state.t, mass, e_val, h1_z, dec.c, rho))
        self.t.append(state.t)
        self.z_h1.append(h1_z)
        self.z_h1_loc.append(loc)
        self.func["weighted_mass"].append(weighted_mass(state, cfg))
        self.func["inverse_weighted_mass"].append(inverse_weighted_mass(state, cfg))
        self.func["localized_residual_mass"].append(loc)
        self.func["virial"].append(virial_functional(dec.z, grid, rho, self.weight))

        if self.index % plan.snap_stride == 0 or self.index == plan.n_calls - 1:
            path = self.snapdir / f"snap_{self.snap_count:06d}.bin"
            save_snapshot(path, state, self.meta)
            self.snap_count += 1

        self.prev = (dec.c, rho)
        self.prev_t = state.t
        self.index += 1

    def as_track(self) -> ModulationTrack:
        rows = np.asarray(self.rows)
        return ModulationTrack(
            t=rows[:, 0], c=rows[:, 4], rho=rows[:, 5],
            z_h1=np.asarray(self.z_h1), z_h1_loc=np.asarray(self.z_h1_loc),
            ortho_max=self.ortho_max, max_jump=self.max_jump,
            jump_violations=self.jump_violations,
        )


def _drift_observable(t: np.ndarray, c: np.ndarray, rho: np.ndarray, par: EffectiveParams):
    """Integrated center-drift observable and its first-order prediction.

    D accumulates the measured excess center motion over the leading-order
    speed; P is the closed-form first-order prediction along the same
    extracted path, with the run's own coefficient profile.
    """
    excess = float(rho[-1] - rho[0]) - float(np.trapezoid(c - par.lam, t))
    rates = np.array([center_drift(float(ci), float(ri), par) for ci, ri in zip(c, rho)])
    prediction = par.eps * float(np.trapezoid(rates, t))
    return excess, prediction


def _window_states(snapdir: Path, window: tuple):
    states = []
    for path in sorted(snapdir.glob("snap_*.bin")):
        state = load_snapshot(path)
        if window[0] - 1e-9 <= state.t <= window[1] + 1e-9:
            states.append(state)
    return states


def run_simulation(plan: RunPlan, outdir, quiet: bool = True) -> dict:
    """Execute a planned run, writing every artifact next to its manifest.

    Artifacts: manifest.txt, series.csv (t,M,Ea,H1defect,c,rho), track.csv,
    snapshots/snap_*.bin, functionals/<name>.csv, defect.csv (when the
    measurement window holds at least three snapshots), report.txt.
    """
    outdir = Path(outdir)
    snapdir = outdir / "snapshots"
    funcdir = outdir / "functionals"
    for d in (outdir, snapdir, funcdir):
        d.mkdir(parents=True, exist_ok=True)
    manifest = plan.manifest
    manifest.set("command", manifest.get("command", "simulate"))
    manifest.write(outdir / "manifest.txt")
    msha = manifest.sha()
    link = f"manifest_sha={msha}"

    if not quiet:
        print(
            f"plan: branch={plan.law.branch} L={plan.grid.L:g} N={plan.grid.N} "
            f"dt={plan.cfg.dt:g} T={plan.T:g} steps={plan.n_steps} "
            f"window=[{plan.window[0]:g},{plan.window[1]:g}]"
        )
    t0 = time.monotonic()
    scale = 1.0 / float(nonlinearity_weight(plan.par.potential, plan.par.eps * plan.x0, plan.par.m))
    values = place_soliton(plan.grid, plan.c0, plan.par.m, plan.x0, scale=scale)
    state = FieldState(t=0.0, values=values, grid=plan.grid)
    stepper = Stepper(plan.cfg, plan.grid)
    observer = _SeriesObserver(plan, snapdir)
    state = stepper.run(state, plan.n_steps, observer=observer, every=plan.every)
    runtime = time.monotonic() - t0

    rows = observer.rows
    write_csv(outdir / "series.csv", "t,M,Ea,H1defect,c,rho", rows, comments=[link])
    trk = observer.as_track()
    write_track_csv(trk, outdir / "track.csv", comments=[link])
    times = np.asarray(observer.t)
    for name, values_list in observer.func.items():
        series = FunctionalSeries(name=name, t=times, values=np.asarray(values_list))
        write_functional_csv(series, funcdir / f"{name}.csv", comments=[link])

    report = {
        "manifest_sha": msha,
        "status": "ok",
        "runtime_s": runtime,
        "branch": plan.law.branch,
        "c_inf": plan.law.c_inf,
        "kappa": plan.law.kappa,
        "ortho_max": observer.ortho_max,
        "max_jump": observer.max_jump,
        "jump_violations": observer.jump_violations,
        "final_t": state.t,
        "final_c": trk.c[-1],
        "final_rho": trk.rho[-1],
    }
    report["cumulative_localized_mass"] = float(np.trapezoid(trk.z_h1_loc, trk.t))
    in_window = (trk.t >= plan.window[0] - 1e-9) & (trk.t <= plan.window[1] + 1e-9)
    if np.count_nonzero(in_window) >= 2:
        slope = np.polyfit(trk.t[in_window], trk.rho[in_window], 1)[0]
        report["terminal_center_speed"] = float(slope)
    excess, prediction = _drift_observable(trk.t, trk.c, trk.rho, plan.par)
    report["drift_excess"] = excess
    report["drift_prediction"] = prediction

    states = _window_states(snapdir, plan.window)
    if len(states) >= 3:
        defect = measure_defect(states, plan.par, plan.law, plan.window)
        write_defect_csv(defect, outdir / "defect.csv", comments=[link])
        report.update(
            c_plus=defect.c_plus,
            c_gap=defect.c_gap,
            defect_min=float(defect.defect_h1.min()),
            defect_max=float(defect.defect_h1.max()),
            liminf_estimate=defect.liminf_estimate,
            contamination=defect.contamination,
            contaminated=defect.contaminated,
        )
    else:
        report["defect_note"] = "window holds fewer than three snapshots"

    rep = RunManifest()
    for key, value in report.items():
        rep.set(key, value)
    rep.write(outdir / "report.txt")
    if not quiet:
        for key in ("final_c", "terminal_center_speed", "c_plus", "c_gap",
                    "liminf_estimate", "contaminated", "jump_violations"):
            if key in report:
                print(f"{key}={report[key]}")
        print(f"done in {runtime:.1f}s -> {outdir}")
    return report


# ------------------------------------------------------------- subcommands


def _parse_grid_spec(text: str):
    parts = text.split(":")
    if len(parts) != 3:
        raise ValueError(f"grid spec must be lo:hi:count, got {text!r}")
    lo, hi = float(parts[0]), float(parts[1])
    count = int(parts[2])
    if count < 2 or not 0.0 <= lo < hi < 1.0:
        raise ValueError(f"grid spec needs 0 <= lo < hi < 1 and count >= 2, got {text!r}")
    return np.linspace(lo, hi, count)


def cmd_roots(args) -> int:
    m = args.m
    lam_tilde = reflection_threshold(m)
    lam0 = neutral_lambda(m)
    values = sorted(set(float(v) for v in _parse_grid_spec(args.grid)) | {lam0})
    guard = 1e-6
    bad = [v for v in values if abs(v - lam_tilde) < guard]
    if bad:
        raise ValueError(
            f"grid value {bad[0]:.8g} lies within {guard:g} of the branch "
            f"threshold {lam_tilde:.17g}; choose a grid that avoids it"
        )
    rows = []
    for lam in values:
        law = terminal_scaling(lam, m)
        rows.append((lam, law.c_inf, law.kappa, law.branch))
    flips = sum(1 for a, b in zip(rows, rows[1:]) if a[3] != b[3])

    def monotone(branch: str) -> str:
        cs = [r[1] for r in rows if r[3] == branch]
        if len(cs) < 2:
            return "n/a"
        diffs = np.diff(cs)
        return str(bool(np.all(diffs > 0) or np.all(diffs < 0))).lower()

    outdir = Path(args.out)
    outdir.mkdir(parents=True, exist_ok=True)
    manifest = RunManifest()
    manifest.set("command", "roots")
    manifest.set("m", m)
    manifest.set("grid", args.grid)
    manifest.set("version", __version__)
    manifest.set("lambda_tilde", lam_tilde)
    manifest.set("lambda_neutral", lam0)
    manifest.write(outdir / f"roots_m{m}_manifest.txt")
    comments = [
        f"manifest_sha={manifest.sha()}",
        f"lambda_tilde={lam_tilde:.17g}",
        f"lambda_neutral={lam0:.17g}",
        f"branch_flips={flips}",
        f"c_inf_monotone_refraction={monotone('refraction')}",
        f"c_inf_monotone_reflection={monotone('reflection')}",
    ]
    path = outdir / f"roots_m{m}.csv"
    write_csv(path, "lam,c_inf,kappa,branch", rows, comments=comments)
    if not args.quiet:
        print(f"{len(rows)} rows, {flips} branch flip(s) -> {path}")
    return 0


def cmd_simulate(args) -> int:
    plan = plan_run(_merge_config(args))
    run_simulation(plan, args.out, quiet=args.quiet)
    return 0


def _sweep_member(payload: dict) -> dict:
    """One slowness value: scattering member plus its matched flat control.

    Runs in its own process; returns a plain row for the sweep table.  The
    control reuses every resolved numerical parameter of the member so that
    its terminal defect is the honest noise floor for the comparison.
    """
    outdir = Path(payload["outdir"])
    row = {"eps": payload["eps"], "status": "ok"}
    try:
        config = dict(payload["config"])
        config["eps"] = str(payload["eps"])
        plan = plan_run(config)
        member = run_simulation(plan, outdir / "member", quiet=True)
        row.update(
            manifest_sha=member["manifest_sha"],
            c_inf=plan.law.c_inf,
            c_plus=member.get("c_plus", float("nan")),
            c_gap=member.get("c_gap", float("nan")),
            defect_min=member.get("defect_min", float("nan")),
            defect_max=member.get("defect_max", float("nan")),
            liminf=member.get("liminf_estimate", float("nan")),
            contaminated=member.get("contaminated", True),
            cumulative_localized_mass=member["cumulative_localized_mass"],
            member_dir=str(outdir / "member"),
        )
        if payload["control"]:
            control_config = dict(plan.config)
            control_config.update(family="constant", a_value="1.0", reflected="False")
            control_plan = plan_run(control_config)
            control = run_simulation(control_plan, outdir / "control", quiet=True)
            row["control_floor"] = control.get("liminf_estimate", float("nan"))
            row["control_sha"] = control["manifest_sha"]
        else:
            row["control_floor"] = float("nan")
    except Exception as exc:  # reported per member; the sweep flags the fit
        row["status"] = f"failed: {type(exc).__name__}: {exc}"
    return row


def _fit_exponent(eps, values):
    """Log-log slope with a 95% confidence interval (ordinary least squares)."""
    from scipy import stats

    eps = np.asarray(eps, dtype=float)
    values = np.asarray(values, dtype=float)
    keep = np.isfinite(values) & (values > 0)
    if np.count_nonzero(keep) < 2:
        return float("nan"), (float("nan"), float("nan"))
    res = stats.linregress(np.log(eps[keep]), np.log(values[keep]))
    n = int(np.count_nonzero(keep))
    if n > 2 and np.isfinite(res.stderr):
        half = stats.t.ppf(0.975, n - 2) * res.stderr
    else:
        half = float("inf")
    return float(res.slope), (float(res.slope - half), float(res.slope + half))


def run_sweep(base_config: dict, eps_list, outdir, jobs: int = 0,
              control: bool = True, quiet: bool = True) -> dict:
    """Run the slowness sweep: one member per value, parallel jobs, matched
    controls, and fitted scaling exponents over the surviving members."""
    eps_values = sorted(set(float(e) for e in eps_list), reverse=True)
    if len(eps_values) < 4:
        raise ValueError(f"sweep needs at least 4 slowness values, got {len(eps_values)}")
    if any(not 0.0 < e < 1.0 for e in eps_values):
        raise ValueError("slowness values must lie in (0, 1)")
    if eps_values[0] / eps_values[-1] < 4.0:
        raise ValueError(
            f"slowness values must span at least a factor 4, got "
            f"{eps_values[0]:g}..{eps_values[-1]:g}"
        )
    outdir = Path(outdir)
    outdir.mkdir(parents=True, exist_ok=True)
    jobs = jobs or min(len(eps_values), __import__("os").cpu_count() or 1)

    payloads = [
        {
            "eps": e,
            "config": dict(base_config),
            "outdir": str(outdir / f"eps_{e:g}"),
            "control": control,
        }
        for e in eps_values
    ]
    if jobs > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            rows = list(pool.map(_sweep_member, payloads))
    else:
        rows = [_sweep_member(p) for p in payloads]

    ok = [r for r in rows if r["status"] == "ok"]
    fit_valid = len(ok) == len(rows)
    eps_ok = [r["eps"] for r in ok]
    c_gap_exp, c_gap_ci = _fit_exponent(eps_ok, [r["c_gap"] for r in ok])
    defect_exp, defect_ci = _fit_exponent(eps_ok, [r["liminf"] for r in ok])
    mass_exp, mass_ci = _fit_exponent(
        eps_ok, [r["cumulative_localized_mass"] for r in ok]
    )

    manifest = RunManifest()
    manifest.set("command", "sweep")
    manifest.set("version", __version__)
    manifest.set("eps_list", ",".join(f"{e:g}" for e in eps_values))
    manifest.set("control", control)
    for key, value in sorted(base_config.items()):
        manifest.set(f"scenario.{key}", value)
    for r in rows:
        if "manifest_sha" in r:
            manifest.set(f"hash.member_{r['eps']:g}", r["manifest_sha"])
    manifest.write(outdir / "sweep_manifest.txt")

    comments = [
        f"manifest_sha={manifest.sha()}",
        f"fit_valid={str(fit_valid).lower()}",
        f"c_gap_exponent={c_gap_exp:.17g}",
        f"c_gap_exponent_ci={c_gap_ci[0]:.17g}..{c_gap_ci[1]:.17g}",
        f"defect_exponent={defect_exp:.17g}",
        f"defect_exponent_ci={defect_ci[0]:.17g}..{defect_ci[1]:.17g}",
        f"localized_mass_exponent={mass_exp:.17g}",
        f"localized_mass_exponent_ci={mass_ci[0]:.17g}..{mass_ci[1]:.17g}",
    ]
    header = (
        "eps,c_plus,c_gap,defect_min,defect_max,liminf,control_floor,"
        "cumulative_localized_mass,contaminated,status,manifest_sha"
    )
    table = [
        (
            r["eps"], r.get("c_plus", float("nan")), r.get("c_gap", float("nan")),
            r.get("defect_min", float("nan")), r.get("defect_max", float("nan")),
            r.get("liminf", float("nan")), r.get("control_floor", float("nan")),
            r.get("cumulative_localized_mass", float("nan")),
            r.get("contaminated", ""), r["status"].split(":")[0],
            r.get("manifest_sha", ""),
        )
        for r in rows
    ]
    write_csv(outdir / "sweep.csv", header, table, comments=comments)

    result = {
        "rows": rows,
        "fit_valid": fit_valid,
        "c_gap_exponent": c_gap_exp,
        "c_gap_exponent_ci": c_gap_ci,
        "defect_exponent": defect_exp,
        "defect_exponent_ci": defect_ci,
        "localized_mass_exponent": mass_exp,
        "localized_mass_exponent_ci": mass_ci,
        "manifest_sha": manifest.sha(),
        "outdir": str(outdir),
    }
    if not quiet:
        for r in rows:
            print(
                f"eps={r['eps']:g}: {r['status']}"
                + (f" c_plus={r['c_plus']:.6g} liminf={r['liminf']:.3g}" if r["status"] == "ok" else "")
            )
        print(
            f"exponents: c_gap={c_gap_exp:.3f} defect={defect_exp:.3f} "
            f"CI=[{defect_ci[0]:.3f},{defect_ci[1]:.3f}] "
            f"localized_mass={mass_exp:.3f} fit_valid={fit_valid}"
        )
    if not fit_valid:
        raise RuntimeError(
            "one or more sweep members failed; partial results written to "
            f"{outdir}/sweep.csv"
        )
    return result


def cmd_sweep(args) -> int:
    eps_list = [part for part in args.eps.split(",") if part.strip()]
    run_sweep(
        _merge_config(args), eps_list, args.out,
        jobs=args.jobs, control=not args.no_control, quiet=args.quiet,
    )
    return 0


def _params_from_manifest(man: RunManifest):
    family = man.get("family", "tanh")
    reflected = str(man.get("reflected", "False")).lower() in ("1", "true", "on", "yes")
    m = int(man.get("m"))
    lam = float(man.get("lam"))
    eps = float(man.get("eps"))
    gamma_a = float(man.get("gamma_a", "1.0"))
    a_value = float(man.get("a_value", "1.0"))
    spec = _build_potential(family, gamma_a, a_value, reflected)
    par = EffectiveParams(m=m, lam=lam, eps=eps, potential=spec)
    if family == "tanh" and not reflected:
        law = terminal_scaling(lam, m)
    else:
        c0 = float(man.get("c0", "1.0"))
        law = ScalingLaw(
            m=m, lam=lam, lam_tilde=reflection_threshold(m),
            branch="refraction", c_inf=c0, kappa=1.0,
        )
    return par, law


def _load_run(rundir: Path):
    manifest_path = rundir / "manifest.txt"
    if not manifest_path.exists():
        raise ValueError(f"{rundir} does not contain manifest.txt")
    man = RunManifest.read(manifest_path)
    snapdir = rundir / "snapshots"
    paths = sorted(snapdir.glob("snap_*.bin"))
    if not paths:
        raise ValueError(f"{rundir} holds no snapshots")
    return man, paths


def cmd_track(args) -> int:
    rundir = Path(getattr(args, "from"))
    man, paths = _load_run(rundir)
    par, _ = _params_from_manifest(man)
    states = [load_snapshot(p) for p in paths]
    guess = (float(man.get("c0", "1.0")), float(man.get("x0", "0.0")))
    trk = track_states(states, par, guess=guess)
    out = Path(args.out) if args.out else rundir / "track_snapshots.csv"
    comments = [
        f"manifest_sha={man.sha()}",
        f"ortho_max={trk.ortho_max:.17g}",
        f"max_jump={trk.max_jump:.17g}",
        f"jump_violations={trk.jump_violations}",
    ]
    write_track_csv(trk, out, comments=comments)
    if not args.quiet:
        print(
            f"{len(states)} snapshots: c {trk.c[0]:.6g} -> {trk.c[-1]:.6g}, "
            f"rho {trk.rho[0]:.6g} -> {trk.rho[-1]:.6g}, "
            f"jump_violations={trk.jump_violations} -> {out}"
        )
    return 0


def cmd_defect(args) -> int:
    rundir = Path(getattr(args, "from"))
    man, paths = _load_run(rundir)
    par, law = _params_from_manifest(man)
    if args.window:
        lo, _, hi = args.window.partition(":")
        window = (float(lo), float(hi))
    else:
        if man.get("window_lo") is None or man.get("window_hi") is None:
            raise ValueError("manifest records no measurement window; pass --window lo:hi")
        window = (float(man.get("window_lo")), float(man.get("window_hi")))
    states = [s for s in (load_snapshot(p) for p in paths) if window[0] - 1e-9 <= s.t <= window[1] + 1e-9]
    if len(states) < 3:
        raise ValueError(
            f"window [{window[0]:g},{window[1]:g}] holds {len(states)} snapshots; need >= 3"
        )
    report = measure_defect(states, par, law, window)
    out = Path(args.out) if args.out else rundir / "defect_snapshots.csv"
    write_defect_csv(report, out, comments=[f"manifest_sha={man.sha()}"])
    if not args.quiet:
        print(
            f"c_plus={report.c_plus:.8g} c_gap={report.c_gap:.3g} "
            f"liminf={report.liminf_estimate:.6g} "
            f"contaminated={report.contaminated} -> {out}"
        )
    return 0


def _reflect_values(values: np.ndarray) -> np.ndarray:
    """Spatial reflection on the periodic grid (x=-L/2 is its own image)."""
    return np.roll(values[::-1], 1)


def cmd_reverse(args) -> int:
    fwd_dir = Path(getattr(args, "from"))
    man, paths = _load_run(fwd_dir)
    if str(man.get("sponge", "False")).lower() in ("1", "true", "on", "yes"):
        raise ValueError("the forward run used an absorbing strip; it cannot be stepped back")
    family = man.get("family", "tanh")
    fwd_reflected = str(man.get("reflected", "False")).lower() in ("1", "true", "on", "yes")
    m = int(man.get("m"))
    lam = float(man.get("lam"))
    eps = float(man.get("eps"))
    gamma_a = float(man.get("gamma_a", "1.0"))
    a_value = float(man.get("a_value", "1.0"))
    dt = float(man.get("dt"))
    T = float(man.get("T"))
    dt_series = float(man.get("dt_series"))
    spec_rev = _build_potential(family, gamma_a, a_value, not fwd_reflected)
    par_rev = EffectiveParams(m=m, lam=lam, eps=eps, potential=spec_rev)

    snaps = [load_snapshot(p) for p in paths]
    grid = snaps[0].grid
    n_steps = round(T / dt)
    every = max(1, round(dt_series / dt))
    targets = {}
    for snap in snaps:
        j = round((T - snap.t) / dt)
        if 0 <= j <= n_steps:
            targets[j] = snap

    outdir = Path(args.out) if args.out else fwd_dir / "reverse"
    outdir.mkdir(parents=True, exist_ok=True)
    manifest = RunManifest()
    for key in ("family", "m", "lam", "eps", "gamma_a", "a_value", "L", "N",
                "dt", "T", "dt_series", "dealias", "alias_threshold", "c0", "x0"):
        if man.get(key) is not None:
            manifest.set(key, man.get(key))
    manifest.set("command", "reverse")
    manifest.set("reflected", not fwd_reflected)
    manifest.set("version", __version__)
    manifest.set("hash.forward_manifest", man.sha())
    manifest.write(outdir / "manifest.txt")
    link = f"manifest_sha={manifest.sha()}"

    cfg = StepperConfig(
        m=m, lam=lam, eps=eps, potential=spec_rev, dt=dt,
        dealias_fraction=float(man.get("dealias", str(2.0 / 3.0))),
        alias_threshold=float(man.get("alias_threshold", "1e-8")),
    )
    stepper = Stepper(cfg, grid)
    state = FieldState(t=0.0, values=_reflect_values(snaps[-1].values), grid=grid)

    series_rows = []
    mismatch_rows = []
    prev = None
    prev_t = None

    def observer(st: FieldState) -> None:
        nonlocal prev, prev_t
        j = round(st.t / dt)
        if j in targets:
            diff = st.values - _reflect_values(targets[j].values)
            h1_abs = h1_norm(diff, grid)
            h1_ref = h1_norm(st.values, grid)
            mismatch_rows.append((targets[j].t, h1_abs, h1_abs / h1_ref))
        guess = None if prev is None else (prev[0], prev[1] + (st.t - prev_t) * (prev[0] - lam))
        dec = decompose(st, par_rev, guess=guess)
        rho = dec.rho
        if guess is not None:
            rho -= round((rho - guess[1]) / grid.L) * grid.L
        mass, _ = mass_and_flux(st, cfg)
        series_rows.append((st.t, mass, energy(st, cfg), h1_norm(dec.z, grid), dec.c, rho))
        prev = (dec.c, rho)
        prev_t = st.t

    t0 = time.monotonic()
    stepper.run(state, n_steps, observer=observer, every=every)
    runtime = time.monotonic() - t0

    write_csv(outdir / "reverse_series.csv", "t,M,Ea,H1defect,c,rho", series_rows, comments=[link])
    write_csv(outdir / "mismatch.csv", "t_forward,h1_abs,h1_rel", mismatch_rows, comments=[link])

    arr = np.asarray(series_rows)
    d_rev, p_rev = _drift_observable(arr[:, 0], arr[:, 4], arr[:, 5], par_rev)
    report = {
        "manifest_sha": manifest.sha(),
        "status": "ok",
        "runtime_s": runtime,
        "max_h1_abs": max(r[1] for r in mismatch_rows),
        "max_h1_rel": max(r[2] for r in mismatch_rows),
        "checked_snapshots": len(mismatch_rows),
        "drift_excess": d_rev,
        "drift_prediction": p_rev,
    }
    fwd_report_path = fwd_dir / "report.txt"
    if fwd_report_path.exists():
        fwd_report = RunManifest.read(fwd_report_path)
        if fwd_report.get("drift_excess") is not None:
            report["forward_drift_excess"] = float(fwd_report.get("drift_excess"))
            report["forward_drift_prediction"] = float(fwd_report.get("drift_prediction"))
    rep = RunManifest()
    for key, value in report.items():
        rep.set(key, value)
    rep.write(outdir / "report.txt")
    if not args.quiet:
        print(
            f"checked {len(mismatch_rows)} snapshots: max H1 mismatch "
            f"{report['max_h1_abs']:.3g} (rel {report['max_h1_rel']:.3g}); "
            f"drift D={d_rev:.6g} prediction P={p_rev:.6g} -> {outdir}"
        )
    return 0


# ----------------------------------------------------------------- selftest


def _selftest_checks():
    """Small, fast invariant checks spanning every module."""
    import tempfile

    def soliton_profile_ode():
        prof = ScaledSoliton(1.3, 2)
        y = np.linspace(-12.0, 12.0, 2001)
        residual = prof.second_derivative(y) - 1.3 * prof(y) + prof(y) ** 2
        assert np.max(np.abs(residual)) < 1e-9, np.max(np.abs(residual))

    def potential_hypotheses():
        from gkdvlab.potentials import validate_hypotheses

        report = validate_hypotheses(tanh_potential(1.0), 2)
        assert report.ok, report

    def effective_root_laws():
        for m in (2, 3, 4):
            lam_t = reflection_threshold(m)
            assert neutral_lambda(m) < lam_t < 1.0
            law = terminal_scaling(neutral_lambda(m), m)
            assert abs(law.c_inf - 1.0) < 1e-12, law.c_inf

    def effective_first_integral():
        par = EffectiveParams(m=2, lam=0.3, eps=0.2)
        traj = integrate_forward(par, start="flat")
        assert traj.first_integral_drift() < 1e-8, traj.first_integral_drift()

    def spectral_transport():
        grid = Grid(N=2048, L=100.0)
        cfg = StepperConfig(m=2, lam=0.3, eps=0.1, potential=constant_potential(1.0), dt=2e-3)
        u0 = place_soliton(grid, 1.0, 2, -20.0)
        state = FieldState(t=0.0, values=u0, grid=grid)
        state = Stepper(cfg, grid).run(state, 2500)
        exact = place_soliton(grid, 1.0, 2, -20.0 + (1.0 - 0.3) * state.t)
        err = h1_norm(state.values - exact, grid) / h1_norm(exact, grid)
        assert err < 1e-8, err

    def snapshot_corruption_detected():
        from gkdvlab.spectral import SnapshotFormatError

        grid = Grid(N=256, L=50.0)
        state = FieldState(t=1.5, values=place_soliton(grid, 1.0, 2, 0.0), grid=grid)
        meta = SnapshotMeta(m=2, lam=0.3, eps=0.1, gamma_a=1.0)
        with tempfile.TemporaryDirectory() as tmp:
            path = Path(tmp) / "snap.bin"
            save_snapshot(path, state, meta)
            load_snapshot(path)  # the pristine fixture must load
            data = bytearray(path.read_bytes())
            data[0] ^= 0xFF
            bad = Path(tmp) / "bad_magic.bin"
            bad.write_bytes(bytes(data))
            try:
                load_snapshot(bad)
            except SnapshotFormatError:
                pass
            else:
                raise AssertionError("corrupted header accepted")
            short = Path(tmp) / "truncated.bin"
            short.write_bytes(path.read_bytes()[:-16])
            try:
                load_snapshot(short)
            except SnapshotFormatError:
                pass
            else:
                raise AssertionError("truncated payload accepted")

    def modulation_recovery():
        grid = Grid(N=1024, L=120.0)
        par = EffectiveParams(m=2, lam=0.3, eps=0.1)
        scale = 1.0 / float(nonlinearity_weight(par.potential, par.eps * 7.5, 2))
        values = place_soliton(grid, 1.21, 2, 7.5, scale=scale)
        dec = decompose(FieldState(t=0.0, values=values, grid=grid), par)
        assert abs(dec.c - 1.21) < 1e-10 and abs(dec.rho - 7.5) < 1e-10, (dec.c, dec.rho)

    def correction_drift_and_sensitivity():
        from gkdvlab.correction import solve_correction
        from gkdvlab.solitons import soliton_integrals

        profile = solve_correction(c=1.0, m=2, lam=0.3)
        ints = soliton_integrals(1.0, 2)
        shape = (3 - 2) / (5 - 2) ** 2 * ints.int_Q**2 / ints.int_Q2
        closed = -shape * (0.3 - 3.0 * neutral_lambda(2) * 1.0)
        assert abs(profile.mu - closed) < 1e-6, profile.mu - closed
        tampered = closed * 1.01
        assert abs(profile.mu - tampered) > 1e-6, "1% shape-constant tamper not detected"

    def diagnostics_identities():
        from gkdvlab.diagnostics import cumulative_scale_derivative

        chi = cumulative_scale_derivative(1.4, 3)
        y = np.linspace(-30.0, 30.0, 4001)
        exact = y * ScaledSoliton(1.4, 3)(y) / (2.0 * 1.4)
        assert np.max(np.abs(chi(y) - exact)) < 1e-8
        weight = VirialWeight(decay_scale=10.0)
        x = np.linspace(-80.0, 80.0, 2001)
        deriv = weight.derivative(x)
        envelope = np.exp(-np.abs(x) / 10.0)
        assert np.all(deriv >= envelope - 1e-12) and np.all(deriv <= 3.0 * envelope + 1e-12)

    def cli_roots_table():
        with tempfile.TemporaryDirectory() as tmp:
            code = main(["roots", "--m", "2", "--out", tmp, "--quiet"])
            assert code == 0, code
            text = (Path(tmp) / "roots_m2.csv").read_text()
            assert "manifest_sha=" in text
            neutral_rows = [
                line for line in text.splitlines()
                if line.startswith(f"{neutral_lambda(2):.17g},")
            ]
            assert neutral_rows, "neutral-coupling row missing"
            c_inf = float(neutral_rows[0].split(",")[1])
            assert abs(c_inf - 1.0) < 1e-12, c_inf

    def cli_determinism():
        base = {
            "family": "constant", "a_value": "1.0", "m": "2", "lam": "0.3",
            "eps": "0.1", "c0": "1.0", "x0": "-10.0", "L": "80.0", "N": "1024",
            "dt": "0.01", "T": "2.0", "dt_series": "0.5", "dt_snap": "1.0",
            "window_lo": "1.0", "window_hi": "2.0",
        }
        with tempfile.TemporaryDirectory() as tmp:
            shas = []
            for name in ("a", "b"):
                run_simulation(plan_run(dict(base)), Path(tmp) / name, quiet=True)
                rundir = Path(tmp) / name
                digest = [sha256_file(rundir / "series.csv")]
                digest += [sha256_file(p) for p in sorted((rundir / "snapshots").glob("*.bin"))]
                shas.append(digest)
            assert shas[0] == shas[1], "identical manifests produced different artifacts"

    def cli_artifacts_link_manifest():
        base = {
            "family": "constant", "a_value": "1.0", "m": "2", "lam": "0.3",
            "eps": "0.1", "c0": "1.0", "x0": "-10.0", "L": "80.0", "N": "1024",
            "dt": "0.01", "T": "2.0", "dt_series": "0.5", "dt_snap": "1.0",
            "window_lo": "1.0", "window_hi": "2.0",
        }
        with tempfile.TemporaryDirectory() as tmp:
            plan = plan_run(dict(base))
            run_simulation(plan, tmp, quiet=True)
            sha = plan.manifest.sha()
            orphans = [
                str(p) for p in Path(tmp).rglob("*.csv")
                if f"manifest_sha={sha}" not in p.read_text()
            ]
            assert not orphans, f"orphan artifacts: {orphans}"

    return [
        ("soliton_core", "profile_ode_residual", soliton_profile_ode),
        ("potential", "hypotheses", potential_hypotheses),
        ("effective_dynamics", "root_laws", effective_root_laws),
        ("effective_dynamics", "first_integral", effective_first_integral),
        ("spectral_pde", "transport_accuracy", spectral_transport),
        ("spectral_pde", "snapshot_corruption_detected", snapshot_corruption_detected),
        ("modulation", "parameter_recovery", modulation_recovery),
        ("linearized_correction", "drift_constant_sensitivity", correction_drift_and_sensitivity),
        ("diagnostics", "weight_and_cubic_identities", diagnostics_identities),
        ("experiment_cli", "roots_table", cli_roots_table),
        ("experiment_cli", "determinism", cli_determinism),
        ("experiment_cli", "artifacts_link_manifest", cli_artifacts_link_manifest),
    ]


def cmd_selftest(args) -> int:
    failures = []
    t_start = time.monotonic()
    for module, name, fn in _selftest_checks():
        t0 = time.monotonic()
        try:
            fn()
        except Exception as exc:
            failures.append((module, name, exc))
            print(f"FAIL {module}.{name}: {type(exc).__name__}: {exc}")
        else:
            if not args.quiet:
                print(f"ok   {module}.{name} ({time.monotonic() - t0:.1f}s)")
    total = time.monotonic() - t_start
    if failures:
        print(f"{len(failures)} failed of {len(_selftest_checks())} in {total:.1f}s")
        raise RuntimeError(
            "selftest failures: " + ", ".join(f"{m}.{n}" for m, n, _ in failures)
        )
    print(f"all {len(_selftest_checks())} checks passed in {total:.1f}s")
    return 0


# --------------------------------------------------------------- dispatcher


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="gkdvlab",
        description="Numerical laboratory for soliton scattering by a slowly "
        "varying nonlinearity coefficient.",
    )
    sub = parser.add_subparsers(dest="subcommand", required=True)

    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--quiet", "-q", action="store_true", help="suppress progress output")

    config_args = argparse.ArgumentParser(add_help=False)
    config_args.add_argument("--config", help="key=value configuration file")
    config_args.add_argument(
        "--set", action="append", metavar="KEY=VALUE",
        help="override one configuration key (repeatable)",
    )

    p = sub.add_parser("roots", parents=[common], help="tabulate threshold and terminal scaling laws")
    p.add_argument("--m", type=int, default=2, choices=(2, 3, 4), help="nonlinearity power")
    p.add_argument("--grid", default="0.02:0.92:19", help="coupling grid lo:hi:count")
    p.add_argument("--out", default=".", help="output directory")
    p.set_defaults(func=cmd_roots)

    p = sub.add_parser("simulate", parents=[common, config_args], help="plan and run one scenario")
    p.add_argument("--out", required=True, help="run directory")
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("sweep", parents=[common, config_args], help="slowness sweep with exponent fits")
    p.add_argument("--eps", default="0.2,0.14,0.1,0.07,0.05", help="comma-separated slowness values")
    p.add_argument("--out", required=True, help="sweep directory")
    p.add_argument("--jobs", type=int, default=0, help="parallel member jobs (0 = cpu count)")
    p.add_argument("--no-control", action="store_true", help="skip the matched flat controls")
    p.set_defaults(func=cmd_sweep)

    p = sub.add_parser("reverse", parents=[common], help="reflect a finished run and step it back")
    p.add_argument("--from", required=True, help="forward run directory")
    p.add_argument("--out", help="output directory (default <from>/reverse)")
    p.set_defaults(func=cmd_reverse)

    p = sub.add_parser("track", parents=[common], help="re-extract parameters from snapshots")
    p.add_argument("--from", required=True, help="run directory")
    p.add_argument("--out", help="output CSV (default <from>/track_snapshots.csv)")
    p.set_defaults(func=cmd_track)

    p = sub.add_parser("defect", parents=[common], help="re-measure the terminal defect")
    p.add_argument("--from", required=True, help="run directory")
    p.add_argument("--window", help="measurement window lo:hi (default: manifest)")
    p.add_argument("--out", help="output CSV (default <from>/defect_snapshots.csv)")
    p.set_defaults(func=cmd_defect)

    p = sub.add_parser("selftest", parents=[common], help="fast cross-module invariant suite")
    p.set_defaults(func=cmd_selftest)

    return parser


def main(argv=None) -> int:
    args = _build_parser().parse_args(argv)
    try:
        return args.func(args) or 0
    except ValueError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except (RuntimeError, OSError) as exc:
        print(f"failure: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
