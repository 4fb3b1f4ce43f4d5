"""filterlab: a desk-scale laboratory for random-sampling spectral filtering.

Eigenstate properties and eigenenergies are estimated by applying the
Gaussian filter e^{-tau^2 (H - omega)^2}, realized as a randomly sampled
composite LCU over Trotterized real-time evolutions with sampled remainder
compensation.  A companion gate-count engine compares the approach against
coherent fault-tolerant baselines.
"""

from __future__ import annotations

from .estimator import (
    EstimateReport,
    FilterSampler,
    InfeasiblePlanError,
    NoPeakError,
    ShotRecord,
    UnstableRatioError,
    accumulate,
    amplification_factor,
    ancilla_free_amplitude_phase,
    denominator_shots,
    dump_shot_records,
    estimate_observable,
    numerator_shots,
    parameter_selection,
    search_eigenenergy,
    vacuum_amplitude,
)
from .lcu import (
    CompensationTable,
    FilterPlan,
    SeriesOverflowError,
    TableCache,
    TermBasis,
    build_compensation_table,
    certify_formula,
    exact_filter_matrix,
    gaussian_density,
    make_basis,
    mc_targets,
    nu_c_actual,
    nu_c_lattice,
    pauli_basis,
    reconstruct_filter_matrix,
    remainder_series,
    sample_instance,
    segment_count,
    symmetry_basis,
    truncated_mass,
    truncation_order,
)
from .oracle import (
    EigenSystem,
    apply_filter_exact,
    default_initial_state,
    diagonalize,
    exact_D_curve,
    exact_N_and_D,
    load_state,
    overlap_eta,
)
from .pauli import (
    HamiltonianParseError,
    HamiltonianSpec,
    HamiltonianStats,
    PauliString,
    PauliTerm,
    build_model,
    hamiltonian_stats,
    load_hamiltonian,
    make_hamiltonian,
    multiply,
    parse_hamiltonian_lines,
    to_symmetry_basis,
)
from .resources import (
    GateCounts,
    TaskSpec,
    block_encoding_costs,
    fitted_gap,
    gaussian_discretization,
    loglog_slope,
    qetu_cost,
    qpe_qw_cost,
    qpe_trotter_cost,
    qsp_cost,
    qsp_degree,
    rlcu_cost,
    rz_to_t,
    sweep_row,
    trotter_segments,
)
from .simulator import (
    CircuitInstance,
    Segment,
    StateVector,
    apply_exp_pauli,
    apply_pauli,
    run_instance,
    total_z_expectation,
    trotter_step,
    trotter_unitary,
)

__version__ = "0.1.0"
