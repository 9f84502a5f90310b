//! Strategic Gaussian semantic rate-distortion.
//!
//! Posterior-covariance design for an encoder whose loss is defined on the
//! semantic variable `Θ = BX + V` while the decoder answers with `E[X | M]`.
//! All rates are in nats.

pub mod curve;
mod design;
pub mod direct;
pub mod error;
pub mod full;
pub mod instances;
pub mod matrix;
pub mod model;
pub mod multimodal;
pub mod oracle;
pub mod remote;
pub mod scaling;
pub mod simulate;
pub mod waterfill;

pub use error::{Error, Result};
pub use matrix::{
    loewner_leq, matrix_sqrt, validate_covariance, Covariance, SpdMatrix, SymmetricMatrix,
};
pub use model::{
    direct_distortion, effective_weight, normalized_weight, rate_lower_bound, semantic_offset,
    PosteriorCovariance, SemanticModel,
};
pub use waterfill::{solve_min_rate_given_budget, solve_min_trace_given_rate, WaterfillSolution};
pub use curve::{RdCurve, RdPoint, Regime};
pub use direct::{direct_curve, solve_direct_given_distortion, solve_direct_given_rate, DirectSolution};
pub use remote::{
    remote_curve, remote_statistics, solve_remote_given_distortion, solve_remote_given_rate,
    RemoteSolution, RemoteStats,
};
pub use oracle::{solve_logdet_program, OracleOptions, OracleResult};
pub use full::{
    check_assumption1, full_curve, full_infinite_rate_limit, joint_model, solve_full,
    solve_full_diagonal, solve_full_diagonal_given_distortion, solve_full_general, FullSolution,
    JointModel, PersuasionBlock,
};
pub use multimodal::{
    cumulative_precision, gap_to_direct, multimodal_curve, multimodal_distortion,
    posterior_given_modalities, recoverability, solve_multimodal, Modality, ModalityStack,
    MultimodalSolution, Recoverability,
};
pub use scaling::{d_opt, interior_onset, scaling_curve, ScalingPoint};
pub use simulate::{
    build_test_channel, simulate_direct, simulate_full, simulate_remote, EmpiricalReport,
    NoiseVariance, TestChannel,
};
