"""Density-operator simulator for Deutsch closed timelike curves and CTC-assisted cloning."""

from .circuits import (
    ClonerSpec,
    Netlist,
    cloner_input,
    cloner_interaction,
    cyclic_shift_unitary,
    decohere_in_basis,
    modular_add_gate,
)
from .cloning import (
    CloneRunConfig,
    CloneRunResult,
    apply_nonlinear_map,
    discriminate,
    empirical_frequencies,
    hoeffding_bound,
    labeled_mixture_behavior,
    plan_samples,
    required_n,
    run_protocol,
)
from .ctc import (
    DctcInteraction,
    FixedPointResult,
    apply_phi,
    ctc_output,
    phi_superoperator,
    solve_fixed_point_iterate,
    solve_fixed_point_spectral,
)
from .povm import (
    Povm,
    ReconstructionFrame,
    build_frame,
    completeness_rank,
    measurement_map,
    outcome_probabilities,
    random_ic_povm,
    reconstruct,
    sic_qubit,
    stinespring_unitary,
)
from .qmath import (
    DensityOperator,
    SubsystemLayout,
    UnitaryOperator,
    apply_unitary,
    fidelity,
    nearest_density_operator,
    partial_trace,
    random_density_operator,
    tensor_product,
    trace_distance,
)

__version__ = "0.1.0"
