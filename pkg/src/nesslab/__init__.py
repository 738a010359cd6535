"""Steady states and transport for a two-lead tight-binding mean-field model.

Construct the self-consistent nonequilibrium steady state of a finite
sample coupled to two semi-infinite hard-wall chains, evaluate
Landauer-Buttiker-type steady currents and transmission densities, and
cross-check everything against a time-domain nonlinear Liouville solver on
truncated lattices.
"""

from .exceptions import (
    ConfigError,
    NesslabError,
    NoConvergenceError,
    NonDecayingPropagatorError,
    NoPlateauError,
    NotEquilibriumError,
    RecurrenceHorizonWarning,
    SingularSError,
    WindowTooLargeError,
)
from .model import (
    CompactVector,
    SystemSpec,
    TruncatedOperator,
    assemble_truncated,
    fermi_dirac,
    hartree_potential,
)
from .greens import (
    DispersiveConstants,
    SEMatrix,
    SpectralConditionReport,
    dirichlet_green,
    dispersive_constants,
    full_line_green,
    resolvent_H,
    s_matrix,
    sample_propagator,
    spectral_condition_check,
)
from .grids import EnergyGrid, band_grid
from .scattering import (
    GeneralizedEigenfunction,
    fourier_lead,
    lead_eigenfunction,
    lippmann_schwinger,
    scattering_matrix,
    t_matrix,
    transmittance0,
    wave_transform,
)
from .equilibrium import SampleEquilibrium, solve_mu, solve_sample_equilibrium
from .ness import (
    MNResult,
    SpectralAmplitudes,
    SteadyStateResult,
    effective_expectation,
    effective_hamiltonian,
    effective_transmittance,
    free_amplitudes,
    mn_fixed_point,
    solve_steady_state,
    solve_w,
    steady_amplitude,
    steady_current,
    steady_expectation,
    steady_occupations,
    steady_transmittance,
)
from .dynamics import (
    EvolutionState,
    SteadyComparison,
    Trajectory,
    evolve_liouville,
    initial_state_truncated,
    picard_propagator,
    recurrence_horizon,
    steady_diagnostics,
)

__version__ = "0.1.0"
