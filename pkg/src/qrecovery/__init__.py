"""Synthesis and verification of quantum error-recovery channels.

Given a fixed encoding (a code subspace) and an error channel, the package
solves a semidefinite relaxation of the worst-case-fidelity recovery problem
and independently audits the resulting guarantee by brute force.
"""

from .channels import (
    ChoiMatrix,
    DensityOperator,
    KrausChannel,
    TransferMatrix,
    apply,
    bit_flip_channel,
    check_cp,
    check_tp,
    choi_from_kraus,
    compose,
    kraus_from_choi,
    load_channel,
    max_entangled_vec,
    rearrange,
    save_channel,
    transfer_from_kraus,
    vectorize_state,
)
from .codes import (
    CodeSpace,
    code_projector,
    kl_check,
    load_code,
    perfect_recovery_gram,
    repetition_code,
    s_matrix,
    save_code,
)
from .sdp import (
    SdpBlock,
    SdpProblem,
    SdpSolution,
    SolverOptions,
    eliminate_equalities,
    realify_hermitian_constraint,
    solve_sdp,
    write_sdpa_sparse,
)
from .synthesis import (
    SynthesisError,
    SynthesisOptions,
    SynthesisResult,
    assemble_alternative,
    assemble_standard,
    certify,
    load_result,
    save_result,
    synthesize,
)
from .verification import (
    FidelityReport,
    fidelity,
    majority_min_fidelity,
    majority_rule_channel,
    relaxed_worst,
    reproduce_report,
    worst_fidelity,
)

__version__ = "0.1.0"
