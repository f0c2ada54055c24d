"""Hyperbolicity analysis of first-order-in-time, N-th-order-in-space systems."""

from .tensors import (
    MultiIndexTensor,
    PermutationTable,
    symmetrize,
    alternate_part,
    contract_direction,
    levi_civita,
    sym_index_basis,
)
from .systems import (
    FTNSSystem,
    Direction,
    PrincipalObjects,
    StateBasis,
    validate,
    principal_matrix,
    principal_symbol,
)
from .systemio import load_system, dump_system, loads_system, dumps_system
from .directions import DirectionSample, icosphere, fibonacci_sphere, default_sample
from .hyperbolicity import (
    StrongHypReport,
    eigenstructure,
    build_Hs,
    classify_strong,
)
from .reduction import (
    IterativeReductionParams,
    ReducedSystem,
    Decomposition21,
    reduce_once,
    partial_choice,
    epsilon_choice,
    choose_lambda,
    decompose_21,
    lift_diagonalizer,
    iterate_to_first_order,
    constraint_evolution,
)
from .symmetrizer import (
    SymCandidate,
    TJTensors,
    DirectReductionVars,
    DirectReduction,
    is_candidate,
    solve_candidate,
    build_direct_ft1s,
    partial_choice_direct,
    solve_J,
    extract_HN_from_H1,
    energy_density,
)
from .evolution import (
    FourierModeRun,
    GridRun,
    GridSpec,
    fourier_evolve,
    grid_evolve,
    compare_parent_child,
)

__version__ = "0.1.0"
