"""Certified simulation of Lindblad dynamics on truncated bosonic spaces.

The package simulates open quantum systems on finite Fock-basis
truncations while accumulating a rigorous a posteriori upper bound xi on
the truncation (and optionally time-discretization) error in trace norm,
and can adaptively grow/shrink the truncated space against a user error
budget.
"""

from .estimators import (
    EstimatorError,
    EstimatorLedger,
    LedgerEntry,
    cosine_defect,
    defect_cat_closed_form,
    defect_drive_closed_form,
    dissipator_defect_blocks,
    euler_timedep_step_bound,
    gkp_defect_bound,
    global_time_bound,
    model_space_defect,
    space_defect_generic,
    taylor_step_bound,
    unitary_dissipator_bound,
    unitary_offblock_norm,
    xi_step,
)
from .fockspace import (
    BasisMap,
    DenseOperator,
    Rect,
    ShapeError,
    TruncationShape,
    WeightedTotal,
    basis_map,
    contains,
    dimension,
    discarded_tail_norm,
    embed,
    grow,
    project,
    shrink,
)
from .lindblad import (
    CoefficientFn,
    CosineExpr,
    DensityState,
    GkpDissipator,
    LindbladModel,
    ModelError,
    PolyExpr,
    apply_exact_embedded,
    apply_truncated,
    growth_margin,
    lindblad_superoperator,
    tensor_assemble,
    truncated_expr,
    validate_state,
)
from .modelfile import ModelFile, ModelFileError, load_state_json, dump_state_json
from .operators import (
    DisplacementQ,
    OperatorError,
    PolyOperator,
    Rotation,
    UnitarySpec,
    cosine_of,
    creation,
    displacement_q,
    fock_density,
    herm_part,
    ladder,
    materialize_poly,
    rotation,
    trace_norm,
    truncated_unitary,
)
from .solver import (
    CertificationError,
    RunResult,
    SolverConfig,
    SolverError,
    TrajectoryRecord,
    adaptive_solve_one_step,
    euler_stepper,
    rk4_stepper,
    run_adaptive,
    run_fixed,
    taylor_stepper,
)

__version__ = "0.1.0"
