"""blochspec: Floquet-Bloch spectra of periodic non-self-adjoint ODE systems,
singularity classification and bracketed spectral expansions."""

__version__ = "0.1.0"

from .errors import (
    AmbiguousMatching,
    BlochspecError,
    DegenerateMeanMatrix,
    EigensolveFailure,
    EpsilonTooLarge,
    IntegratorFailure,
    MalformedSpec,
    MultiplicityUnstable,
    NoConvergence,
    NotCauchy,
    NumericalError,
    OverlappingWindows,
    SpecError,
    TruncationTooSmall,
    WindowContaminated,
    ZeroFunction,
)
from .operators import (
    FourierMatrixSeries,
    MeanEigensystem,
    OperatorSpec,
    load_operator,
    operator_from_dict,
    operator_to_dict,
    quasiperiodic_norm_factor,
    save_operator,
    unperturbed_eigenpair,
    unperturbed_eigenvalue,
    validate_spec,
    wrap_quasimomentum,
)
from .solver import (
    BandTable,
    BlochPair,
    BlochSpectrum,
    assemble_bloch_matrix,
    asymptotic_residuals,
    band_table_from_json,
    band_table_to_csv,
    band_table_to_json,
    disk_census,
    solve_bloch,
    track_bands,
)
from .monodromy import (
    characteristic_determinant,
    monodromy_matrix,
    newton_correction,
    refine_eigenvalue,
)
from .gelfand import (
    BlochField,
    CellFunction,
    gelfand_transform,
    invert_transform,
    load_cell_function,
    parseval_residual,
    save_cell_function,
    split_support,
)
from .singularities import (
    DegeneracyCandidate,
    DegeneracyReport,
    classify_cluster,
    find_degeneracies,
    probe_ess_at_infinity,
    refine_degeneracy,
)
from .expansion import (
    ExpansionPlan,
    ReconstructionResult,
    approximation_check,
    bracket_integral,
    coefficients,
    paired_window_integral,
    plan_expansion,
    reconstruct,
    reconstruct_many,
    semicircle_cluster_integral,
    window_contributions,
)

__all__ = [name for name in dir() if not name.startswith("_")]
