//! Differentially private noisy gradient descent with heavy-tailed (α-stable)
//! noise: samplers, loss models, the optimizer, a privacy accountant built on
//! Lyapunov drift bounds, and Monte-Carlo verifiers for those bounds.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod accountant;
pub mod error;
pub mod optimizer;
pub mod problems;
pub mod report;
pub mod rng;
pub mod special;
pub mod stable_noise;
pub mod vecops;
pub mod verifier;

#[cfg(test)]
mod end_to_end;

pub use accountant::{
    c_gamma, c_gamma_hat, chi_moment_c, delta_bound, dimension_scaling_report, drift_large_p,
    drift_small_p, initial_condition_check, kl_conditional, per_step_vnorm_bound, privacy_budget,
    step_size_limit, Algorithm, BudgetRequest, DriftParams, ErgodicityParams, GammaChain,
    GammaIngredients, KlConvention, LyapunovExponent, PrivacyBudget, Regime, ScalingParams,
    ScalingReport,
};
pub use error::{Error, Result};
pub use optimizer::{
    run_chain, run_neighbor_pair, run_neighbor_pair_at, run_replicas, run_replicas_at,
    sample_batch, sgd_step, ChainConfig, ChainRun, ChainState, InitPolicy, PairMode, StepStreams,
};
pub use problems::{
    build_model, check_dissipativity, check_pseudo_lipschitz, data_diameter, find_stable_point,
    generate_dataset, logistic_constants, logistic_grad, make_neighbor, ridge_constants,
    ridge_grad, stable_point_norm_bound, DataPoint, Dataset, Logistic, LossModel, ModelKind,
    Objective, RealizableRidge, RegularityConstants, Ridge,
};
pub use report::{AuditReport, KeyValues};
pub use rng::{Purpose, StreamFactory};
pub use stable_noise::{
    sample_stable_vector, sample_subordinator, stable_abs_moment, subordinator_neg_half_moment,
    subordinator_power_moment, StableSampler, StableSpec, SubordinatedDraw, Subordinator,
};
pub use vecops::Samples;
pub use verifier::{
    ecf_audit, ecf_directions, ecf_table, estimate_tv_histogram, falsification_controls,
    gamma_profile, isotropy_audit, radial_grid, verify_drift, verify_gamma, verify_tv_stability,
    verify_vp_norm_lemmas, wrong_beta_audit, ControlOutcome, ControlSuite, DriftAudit, EcfRow,
    FalsificationReport, GammaAudit, GammaPoint, HistogramOptions, TvEstimate, TvRow,
    TvStabilityReport,
};
