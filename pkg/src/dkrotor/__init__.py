"""Quantum doubly-kicked rotor simulations and analysis."""

from .core import (
    DEFAULT_KBAR,
    DEFAULT_PULSE_FRAC,
    MomentumDistribution,
    SimParams,
    WaveFunction,
    expectation_p2,
    initial_state,
    momentum_distribution,
    p0_population,
    to_momentum,
    to_position,
)
from .errors import (
    BasisError,
    ConfigError,
    FitConvergenceError,
    RotorError,
    TrackingError,
    TruncationError,
    ValidityError,
    WraparoundError,
)
from .propagate import (
    EvolutionRecord,
    KickEvent,
    KickSchedule,
    build_schedule,
    evolve,
    evolve_product,
    evolve_schedule,
    finite_pulse_kick,
    free_segment,
    kick,
    lambda_of_n,
    one_period,
)
from .floquet import (
    ACRecord,
    FloquetSpectrum,
    LevelDynamics,
    attach_crossings,
    build_U_matrix,
    default_lambda_grid,
    delta_lambda_c,
    detect_avoided_crossings,
    diagonalize,
    floquet_weights,
    incoherent_p2,
    incoherent_p2_swept,
    landau_zener_c_min,
    level_dynamics_sweep,
    spectrum_at,
    state_p2,
)
from .classical import (
    ClassicalEnsemble,
    doubly_kicked_step,
    ensemble_init,
    estimate_D_cl,
    standard_map_step,
)
from .analysis import (
    CuspReport,
    DiffusionFit,
    LineshapeFit,
    LocalizationFit,
    ResonanceScan,
    cusp_test,
    fit_diffusion,
    fit_lineshape,
    fit_lineshape_shared,
    fit_localization,
    peak_fwhm,
    resonance_scan,
)

__version__ = "0.1.0"
