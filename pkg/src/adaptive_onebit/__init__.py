"""Adaptive one-bit compressed sensing of dictionary-sparse signals."""

from .core import (
    RNG_ALGORITHM,
    DimensionError,
    RngStream,
    SignalModel,
    analysis_coefficients,
    effective_sparsity,
    gaussian_matrix,
    normalized_error,
    sign_vector,
)
from .dictionaries import (
    Dictionary,
    SparseSignalSpec,
    SupportInfeasibleError,
    exact_sparse_signal,
    haar_dictionary_2d,
    identity_dictionary,
    random_tight_dictionary,
)
from .pipeline import (
    MeasurementEnsemble,
    RecoveryConfig,
    SamplingRecord,
    StageTrace,
    adaptive_recover,
    adaptive_sample,
    hdtg,
    one_bit_measure,
    ssr,
)
from .solvers import (
    InfeasibleProblemError,
    SignConstraintSet,
    SolverParams,
    project_analysis_l1,
    project_l1_ball,
    solve_sign_constrained_l1,
)

__version__ = "0.1.0"
