//! Assembly of the risk-gap bound `B = δ + γ`.
//!
//! The bound certifies the gap between *empirical* risks over the rows that
//! were passed in: every inequality used (triangle, Lipschitz, Jensen) holds
//! for the empirical measure, so `|R_T − R_P| ≤ B` is exact on the supplied
//! samples. Nothing is claimed about population risk.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{PrismError, Result};
use crate::geometry::{
    decompose, feature_delta, AlignmentKind, AlignmentMode, OrthogonalAlignment,
    ScaleShapeDecomposition,
};
use crate::headterm::{gamma, GammaPath};
use crate::lipschitz::{KFeatMode, LipschitzConstants};
use crate::matrix::{same_shape, FeatureMatrix, HeadMatrix};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BoundReport {
    pub variant_id: String,
    pub k_feat: f64,
    pub k_feat_mode: KFeatMode,
    pub k_pred: f64,
    pub decomposition: ScaleShapeDecomposition,
    pub delta: f64,
    pub gamma: f64,
    pub bound: f64,
    pub alignment: AlignmentKind,
    /// `H_P` was not supplied and was taken to equal `H_T`.
    pub frozen_head: bool,
    pub empirical_gap: Option<f64>,
}

impl BoundReport {
    pub fn with_variant(mut self, variant_id: impl Into<String>, empirical_gap: Option<f64>) -> Self {
        self.variant_id = variant_id.into();
        self.empirical_gap = empirical_gap;
        self
    }

    pub fn with_frozen_head(mut self, frozen: bool) -> Self {
        self.frozen_head = frozen;
        self
    }

    /// `gap / B`; 0 when both vanish.
    pub fn slack_ratio(&self) -> Option<f64> {
        self.empirical_gap.map(|g| slack_ratio(g, self.bound))
    }
}

pub(crate) fn slack_ratio(gap: f64, bound: f64) -> f64 {
    if bound == 0.0 {
        if gap == 0.0 {
            0.0
        } else {
            f64::INFINITY
        }
    } else {
        gap / bound
    }
}

fn check_heads(z: &FeatureMatrix, h_t: &HeadMatrix, h_p: &HeadMatrix) -> Result<()> {
    same_shape("H_T", h_t.shape(), "H_P", h_p.shape())?;
    if z.d() != h_t.d() {
        return Err(PrismError::ShapeMismatch {
            left: "Z_T",
            left_shape: z.shape(),
            right: "H_T",
            right_shape: h_t.shape(),
        });
    }
    Ok(())
}

/// Full bound with `K_feat` derived from `H_T` in the requested mode.
pub fn prism_bound(
    z_t: &FeatureMatrix,
    z_p: &FeatureMatrix,
    h_t: &HeadMatrix,
    h_p: &HeadMatrix,
    alignment: &OrthogonalAlignment,
    k_feat_mode: KFeatMode,
) -> Result<BoundReport> {
    check_heads(z_t, h_t, h_p)?;
    let constants = LipschitzConstants::for_target(h_t, k_feat_mode)?;
    prism_bound_with(z_t, z_p, h_t, h_p, alignment, &constants, GammaPath::default())
}

/// Full bound with precomputed constants, so that one target's `K_feat` is
/// shared across all of its proxies.
pub fn prism_bound_with(
    z_t: &FeatureMatrix,
    z_p: &FeatureMatrix,
    h_t: &HeadMatrix,
    h_p: &HeadMatrix,
    alignment: &OrthogonalAlignment,
    constants: &LipschitzConstants,
    path: GammaPath,
) -> Result<BoundReport> {
    check_heads(z_t, h_t, h_p)?;
    let decomposition = decompose(z_t, z_p, alignment)?;
    let delta = feature_delta(&decomposition, constants.k_feat)?;
    let gamma = gamma(z_p, h_t, h_p, alignment, path)?;
    Ok(BoundReport {
        variant_id: String::new(),
        k_feat: constants.k_feat,
        k_feat_mode: constants.k_feat_mode,
        k_pred: constants.k_pred,
        decomposition,
        delta,
        gamma,
        bound: delta + gamma,
        alignment: alignment.kind(),
        frozen_head: false,
        empirical_gap: None,
    })
}

/// Frozen-head specialization: `γ = 0`, identity alignment, and the bound
/// is the backbone drift between `Z_0` (reference) and `Z_t` alone.
///
/// The supplied `k_feat` is reported under [`KFeatMode::Exact`].
pub fn lora_bound(z_0: &FeatureMatrix, z_t: &FeatureMatrix, k_feat: f64) -> Result<BoundReport> {
    let constants = LipschitzConstants::with_k_feat(k_feat, KFeatMode::Exact)?;
    let alignment = OrthogonalAlignment::identity();
    let decomposition = decompose(z_0, z_t, &alignment)?;
    let delta = feature_delta(&decomposition, constants.k_feat)?;
    Ok(BoundReport {
        variant_id: String::new(),
        k_feat: constants.k_feat,
        k_feat_mode: constants.k_feat_mode,
        k_pred: constants.k_pred,
        decomposition,
        delta,
        gamma: 0.0,
        bound: delta,
        alignment: AlignmentKind::Identity,
        frozen_head: true,
        empirical_gap: None,
    })
}

/// Stack per-sequence `|y| × d` feature blocks in order.
pub fn ar_stack(sequences: &[FeatureMatrix]) -> Result<FeatureMatrix> {
    let first = sequences
        .first()
        .ok_or_else(|| PrismError::invalid("sequences", "empty sequence list"))?;
    let d = first.d();
    let mut total = 0usize;
    for s in sequences {
        if s.d() != d {
            return Err(PrismError::ShapeMismatch {
                left: "first sequence",
                left_shape: first.shape(),
                right: "sequence",
                right_shape: s.shape(),
            });
        }
        total += s.n();
    }
    if total == 0 {
        return Err(PrismError::EmptyRows("stacked sequences"));
    }
    let mut out = DMatrix::zeros(total, d);
    let mut row = 0;
    for s in sequences {
        out.rows_mut(row, s.n()).copy_from(s.values());
        row += s.n();
    }
    FeatureMatrix::new(out)
}

/// How per-token bounds are aggregated across sequences of unequal length.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SequenceWeighting {
    /// One bound over all stacked tokens; every token weighs the same.
    #[default]
    TokenUniform,
    /// Additionally bound each sequence on its own and average the per-
    /// sequence bounds, matching a per-sequence `1/|y|` risk average.
    SequenceMean,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ArBoundReport {
    pub stacked: BoundReport,
    /// One report per non-empty sequence, in input order (only with
    /// [`SequenceWeighting::SequenceMean`]).
    pub per_sequence: Vec<BoundReport>,
    pub sequence_mean_bound: Option<f64>,
}

#[allow(clippy::too_many_arguments)]
pub fn ar_bound(
    seqs_t: &[FeatureMatrix],
    seqs_p: &[FeatureMatrix],
    h_t: &HeadMatrix,
    h_p: &HeadMatrix,
    mode: AlignmentMode,
    constants: &LipschitzConstants,
    weighting: SequenceWeighting,
) -> Result<ArBoundReport> {
    if seqs_t.len() != seqs_p.len() {
        return Err(PrismError::LengthMismatch {
            left: "target sequences",
            left_len: seqs_t.len(),
            right: "proxy sequences",
            right_len: seqs_p.len(),
        });
    }
    for (a, b) in seqs_t.iter().zip(seqs_p) {
        same_shape("target sequence", a.shape(), "proxy sequence", b.shape())?;
    }
    let z_t = ar_stack(seqs_t)?;
    let z_p = ar_stack(seqs_p)?;
    let w = mode.resolve(&z_t, &z_p)?;
    let stacked = prism_bound_with(&z_t, &z_p, h_t, h_p, &w, constants, GammaPath::default())?;

    let (per_sequence, sequence_mean_bound) = match weighting {
        SequenceWeighting::TokenUniform => (Vec::new(), None),
        SequenceWeighting::SequenceMean => {
            let mut reports = Vec::new();
            for (a, b) in seqs_t.iter().zip(seqs_p).filter(|(a, _)| a.n() > 0) {
                let w = mode.resolve(a, b)?;
                reports.push(prism_bound_with(a, b, h_t, h_p, &w, constants, GammaPath::default())?);
            }
            let mean = reports.iter().map(|r| r.bound).sum::<f64>() / reports.len() as f64;
            (reports, Some(mean))
        }
    };
    Ok(ArBoundReport {
        stacked,
        per_sequence,
        sequence_mean_bound,
    })
}
