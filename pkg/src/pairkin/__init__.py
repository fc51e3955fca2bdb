"""Two-species pair generation-recombination kinetics on the flat torus.

A deterministic phase-space integrator with structural guarantees (sandwich
bounds, mass-difference conservation), entropy and dissipation diagnostics,
an independent Picard oracle, and a reaction-diffusion reference solver for
the stiff-scattering limit.
"""

__version__ = "0.1.0"

from .equilibria import (
    Equilibrium,
    diffusion_coefficient,
    make_gaussian,
    tabulated,
    validate_equilibrium,
)
from .phase import (
    EquilibriumState,
    MacroFields,
    PhaseGrid,
    ProfileSpec,
    StatePair,
    conserved_mass_difference,
    equilibrium_state,
    gaussian_grid,
    make_initial_condition,
    make_state,
    moments,
    projection_pi,
    projection_pi_omega,
    weighted_inner,
    weighted_norm_sq,
)
from .solver import ModelParams, SolverConfig, check_bounds, run, step
from .oracle import PicardConfig, picard_solve, q_factor
from .rd import RDState, rd_run, rd_step
from .diagnostics import (
    CsvSink,
    DiagnosticsRecord,
    ListSink,
    compute_record,
    decay_rate_fit,
    dissipation_D3,
    dissipation_D12,
    entropy_balance_check,
    entropy_H,
    modified_entropy_Gamma,
    verify_inequalities,
)
