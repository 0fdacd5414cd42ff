//! Synthetic instances, exact empirical risks, brute-force verification of
//! the bound, and the rank-correlation protocol at desk scale.

mod instance;
mod rank;
mod risk;
pub mod rng;
mod verify;

pub use instance::{gen_instance, Perturbation, Sizes, SyntheticInstance, FEATURE_SCALE, HEAD_GAIN};
pub use rank::{
    average_ranks, rank_experiment, spearman, KindRanking, RankConfig, RankPoint, RankSummary,
    DEFAULT_GRID, MONOTONE_MIN_RS,
};
pub use risk::{cross_entropy, empirical_risk, per_sample_losses};
pub use verify::{
    run_sweep, verify_bound, verify_bound_detailed, write_sweep_csv, SweepConfig, SweepRecord,
    SweepSummary, VerificationRecord, DEFAULT_MAGNITUDES, SWEEP_CSV_HEADER, VIOLATION_TOL,
};
