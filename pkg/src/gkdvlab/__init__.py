"""Numerical laboratory for solitons of a generalized KdV equation with a
slowly varying nonlinearity coefficient.

The equation under study is

    u_t + (u_xx - lam*u + a(eps*x) * u**m)_x = 0,     m in {2, 3, 4},

with 0 <= lam < 1 and a smooth monotone coefficient profile a.  The package
provides the solitary-wave family and its integrals, coefficient-profile
validation, the effective two-parameter dynamics (scaling and center) with its
scaling laws, a periodic pseudospectral time stepper, modulation decomposition
and defect measurement, the first-order profile correction, and the diagnostic
functionals used to monitor mass/energy balance, all wired into a small CLI.
"""

from gkdvlab.solitons import (
    GroundState,
    ScaledSoliton,
    SolitonIntegrals,
    ground_state,
    scaled_soliton,
    scale_derivative,
    soliton_integrals,
)
from gkdvlab.potentials import (
    PotentialSpec,
    HypothesisReport,
    tanh_potential,
    constant_potential,
    reflected_potential,
    nonlinearity_weight,
    validate_hypotheses,
)
from gkdvlab.effective import (
    EffectiveParams,
    EffectiveTrajectory,
    ScalingLaw,
    NearThreshold,
    neutral_lambda,
    reflection_threshold,
    terminal_scaling,
    integrate_forward,
    integrate_backward,
    refraction_integral,
)
from gkdvlab.spectral import (
    Grid,
    FieldState,
    StepperConfig,
    Stepper,
    SpongeConfig,
    SnapshotMeta,
    AliasingAlarm,
    BlowUpError,
    SnapshotFormatError,
    place_soliton,
    save_snapshot,
    load_snapshot,
    energy,
    mass_and_flux,
    h1_norm,
    stable_dt,
)
from gkdvlab.modulation import (
    Decomposition,
    ModulationTrack,
    DefectReport,
    decompose,
    track,
    measure_defect,
)
from gkdvlab.diagnostics import (
    VirialWeight,
    FunctionalSeries,
    weighted_mass,
    inverse_weighted_mass,
    localized_h1_mass,
    virial_functional,
    cumulative_scale_derivative,
    scale_projection,
)
from gkdvlab.correction import (
    LinearizedOperator,
    CorrectionProfile,
    ResidualReport,
    solve_correction,
    recovered_drift,
    ansatz_residual,
)

__version__ = "0.1.0"
