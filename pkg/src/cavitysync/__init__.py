"""Collective dynamics of broadened emitter ensembles in a narrow cavity.

Second-order mean-field moment equations with an exact small-system
Lindblad oracle, adaptive time integration, steady-state sweeps under
incoherent pumping, and analysis of Rabi sidebands and synchronization.
"""

from .model import (
    CumulantState,
    DrivePulse,
    FrequencyClass,
    ModelError,
    PhysicalParams,
    StateLayout,
    build_layout,
    expand_pair_moment,
    ground_state,
)
from .spectra import SpectrumSpec, SpectrumError, discretize_gaussian, discretize_power_law
from .eom import (
    ModelSystem,
    collective_purcell_rate,
    factorize_third_order,
    rhs,
    rhs_flat,
    rhs_reference,
    total_excitation,
)
from .integrate import IntegrationError, IntegratorConfig, TimeSeries, integrate
from .steadystate import (
    SteadyStateResult,
    SweepResult,
    find_steady_state,
    sweep_grid,
    two_ensemble_system,
    write_sweep_csv,
)
from .oracle import (
    ExactTimeSeries,
    Liouvillian,
    OracleError,
    SmallSystemSpec,
    build_liouvillian,
    choose_fock_cutoff,
    compare_channels,
    evolve_exact,
    ground_rho,
)
from .analysis import (
    AnalysisError,
    RabiEstimate,
    SyncReport,
    detect_sidebands,
    extract_rabi_frequency,
    purcell_rate,
    sigma_ratio,
    sync_boundary,
)

__version__ = "0.1.0"
