"""povmlab: a numerical laboratory for optimal quantum measurements.

Optimize POVMs against fidelity kernels, certify optimality through the
stationarity conditions, compress measurements with sampled square-root
(pretty good) block measurements, filter with typical-subspace projectors,
and account for every bit of measurement output against the von Neumann
entropy of the source.  All entropies are base 2.
"""

from .block import (
    NO_GUESS,
    BlockPovm,
    block_fidelity,
    product_povm,
    product_rank_one,
    reduced_operator,
    reduced_operator_sum,
)
from .ensemble import (
    DensityMatrix,
    Ensemble,
    density_matrix,
    orthogonal_pair_ensemble,
    pure_state,
    tensor_ensemble,
    trine_ensemble,
    two_state_ensemble,
    uniform_bloch_ensemble,
    von_neumann_entropy,
)
from .exceptions import (
    AlignmentError,
    BadWeights,
    CapExceeded,
    ConfigError,
    DecompositionFailure,
    DimensionMismatch,
    EntropyBoundExceeded,
    IndexOutOfRange,
    InvalidProbability,
    InvalidState,
    NonConvergence,
    PovmLabError,
    ShapeMismatch,
    UnknownDemo,
)
from .fidelity import (
    FidelityKernel,
    OptimalityCertificate,
    ScoreOperators,
    certify,
    guess_score_kernel,
    matrix_kernel,
    mean_fidelity,
    optimize_povm,
    overlap_kernel,
    perturbation_gap,
    projective_grid_search,
    quartic_kernel,
    random_rank_one_povm,
    score_matrix,
    score_operators,
)
from .io import RunManifest, build_ensemble, build_kernel, load_config
from .mc import RunningStats, rng_stream
from .pipeline import (
    ProtocolConfig,
    ProtocolReport,
    build_super_problem,
    entropy_accounting,
    run_protocol,
    sequence_kernel,
)
from .povm import (
    Povm,
    PovmValidation,
    RankOnePovm,
    mutual_information,
    outcome_distribution,
    prune_zero_outcomes,
    refine_to_rank_one,
    shannon_entropy,
    validate,
)
from .sqrtm import (
    SampledBlocks,
    SqrtMeasurementReport,
    build_sqrt_measurement,
    evaluate_sqrt_measurement,
    n_for_eta,
    sample_blocks,
    sqrt_fidelity_floor,
)
from .typical import TypicalProjector, restrict_povm, typical_projector

__version__ = "0.1.0"
