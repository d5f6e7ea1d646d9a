"""Photon thermalization in weakly coupled molecular microcavities.

Rate matrices for vibration-mediated photon transfer between cavity modes
(microscopic per-molecule sums and macroscopic estimates), occupation
kinetics to Bose-Einstein equilibrium, area-scaling threshold scans, and an
exact few-mode Lindblad oracle for desk-scale validation.
"""

__version__ = "0.1.0"

from .constants import KB_MEV_PER_K, MEV_TO_INV_PS, thermal_energy
from .model import (
    CavityMode,
    CavityModeSet,
    ConfigurationError,
    MolecularEnsemble,
    Molecule,
    SpectralProduct,
    ValidationError,
    VibrationalBath,
    WeakCouplingReport,
    build_planar_dispersion,
    exciton_linewidth,
    linewidth_diagnostic,
    planck_occupation,
    square_k_grid,
    validate_weak_coupling,
)
from .rates import (
    PairCutoff,
    RateMatrix,
    RegularizationPolicy,
    ResonanceError,
    DetuningError,
    assemble_rate_matrix,
    enumerate_cut_pairs,
    estimated_pair_rate,
    kms_complete,
    kms_residual,
    microscopic_pair_rate,
    rate_matrix_from_csv,
    rate_matrix_from_json,
    rate_matrix_to_csv,
    rate_matrix_to_json,
    regularize_degenerate,
)
from .kinetics import (
    ConvergenceError,
    DriveSpec,
    KineticState,
    StiffnessError,
    Trajectory,
    free_energy,
    full_rhs,
    integrate,
    steady_state,
    thermalization_rhs,
    trajectory_to_csv,
)
from .equilibrium import (
    EquilibriumResult,
    ThresholdScanResult,
    bose_einstein_occupations,
    effective_thermalization_rate,
    scan_summary_json,
    scan_to_csv,
    solve_chemical_potential,
    threshold_scan,
)
from .lindblad import (
    ClosureReport,
    CutoffSaturationWarning,
    DensityMatrix,
    FockSpace,
    ThermalLindbladian,
    boundary_population,
    build_thermal_lindbladian,
    closure_error,
    evolve_exact,
    evolve_trajectory,
    fock_state,
    mode_occupations,
    moment_derivatives,
    pair_moments,
    pure_state,
    run_oracle_check,
    thermal_product_state,
    total_photon_number,
    vacuum_state,
)
from .config import ConfigError, ScenarioConfig, parse_config
