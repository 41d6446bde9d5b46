"""Gaussian-packet toolkit for quantum reference frame thought experiments in one dimension."""

from .canon import (
    CorrelatedState,
    LinearCoordinateMap,
    LinearPhaseSpaceForm,
    commutator,
    cm_relative_map,
    conjugate_momenta,
    conjugate_positions,
    correlated_inner,
    correlated_transform,
    exact_transform_report,
    gamma_mass,
    physical_relative_map,
    relative_momentum_forms,
    relative_q_frame,
    relative_x_frame,
    transform_state,
)
from .errors import (
    ContractError,
    DegenerateStateError,
    DomainError,
    QRefError,
    ResolutionError,
    UnsupportedCaseError,
)
from .packets import (
    Branch,
    ComplexGaussian,
    GaussianPacket,
    MassConfig,
    SuperposedState,
    WeylShift,
    apply_weyl,
    evolve_free,
    normalize,
    packet_overlap,
)
from .reduce import (
    GaussianMixtureOperator,
    KernelTerm,
    GridSpec,
    detector_probabilities,
    expectation_weyl,
    fringe_profile,
    partial_trace,
    purity,
    shift_expectation,
    visibility,
)

__all__ = [name for name in dir() if not name.startswith("_")]
