//! Diagnostics for how far a proxy model's risk can drift from a target's,
//! split into a feature-geometry term (scale plus shape) and a head term.
//!
//! ```
//! use prism_core::{prism_bound, FeatureMatrix, HeadMatrix, KFeatMode, OrthogonalAlignment};
//!
//! let z_t = FeatureMatrix::from_row_slice(2, 2, &[1.0, 0.0, 0.0, 1.0]).unwrap();
//! let z_p = FeatureMatrix::from_row_slice(2, 2, &[0.9, 0.1, 0.0, 1.1]).unwrap();
//! let h = HeadMatrix::from_row_slice(2, 3, &[1.0, 0.0, -1.0, 0.0, 1.0, 0.5]).unwrap();
//! let r = prism_bound(&z_t, &z_p, &h, &h, &OrthogonalAlignment::identity(), KFeatMode::Exact).unwrap();
//! assert_eq!(r.gamma, 0.0);
//! assert!(r.bound > 0.0);
//! ```

pub mod bound;
pub mod error;
pub mod exec;
pub mod geometry;
pub mod headterm;
pub mod lipschitz;
pub mod matio;
pub mod matrix;
pub mod oracle;
pub mod regularizer;
pub mod report;

pub use bound::{
    ar_bound, ar_stack, lora_bound, prism_bound, prism_bound_with, ArBoundReport, BoundReport,
    SequenceWeighting,
};
pub use error::{PrismError, Result};
pub use exec::Execution;
pub use geometry::{
    alignment_residual, cka, decompose, feature_delta, omega_aligned, omega_frobenius,
    omega_nuclear, omega_trace, procrustes_align, rms_scale, shape_gap, AlignmentKind, AlignmentMode,
    OrthogonalAlignment, ScaleShapeDecomposition,
};
pub use headterm::{covariance, gamma, head_difference, Covariance, GammaPath};
pub use lipschitz::{kfeat_exact, kfeat_exact_with, kfeat_spectral, kpred, KFeatMode, KFeatOptions, LipschitzConstants};
pub use matio::{read_labels, read_manifest, read_matrix, write_labels, write_matrix, Dtype, VariantManifest, VariantRecord};
pub use matrix::{FeatureMatrix, HeadMatrix};
pub use regularizer::{drift_demo, gradcheck, shape_penalty, shape_penalty_grad, DemoResult, PenaltyGradient};
