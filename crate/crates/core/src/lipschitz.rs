//! Lipschitz constants of cross-entropy through a linear head.
//!
//! `K_feat` is the pairwise diameter of the head's columns and bounds the
//! feature gradient `H (softmax(zH) − e_y)`. The spectral alternative
//! `√2 ‖H‖₂` is always at least as large. `K_pred = √2` bounds
//! `‖softmax(v) − e_y‖₂` for every logit vector.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{PrismError, Result};
use crate::exec::Execution;
use crate::matrix::HeadMatrix;

pub const DEFAULT_BLOCK: usize = 1024;
pub const DEFAULT_VOCAB_CEILING: usize = 65_536;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum KFeatMode {
    Exact,
    Spectral,
}

impl KFeatMode {
    pub fn as_str(self) -> &'static str {
        match self {
            KFeatMode::Exact => "exact",
            KFeatMode::Spectral => "spectral",
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct KFeatOptions {
    /// Columns per Gram block.
    pub block: usize,
    /// Largest vocabulary accepted by exact mode.
    pub vocab_ceiling: usize,
    pub execution: Execution,
}

impl Default for KFeatOptions {
    fn default() -> Self {
        Self {
            block: DEFAULT_BLOCK,
            vocab_ceiling: DEFAULT_VOCAB_CEILING,
            execution: Execution::default(),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct LipschitzConstants {
    pub k_feat: f64,
    pub k_feat_mode: KFeatMode,
    pub k_pred: f64,
}

impl LipschitzConstants {
    /// Constants for a target head. `K_feat` depends on `H_T` only.
    pub fn for_target(h_t: &HeadMatrix, mode: KFeatMode) -> Result<Self> {
        let k_feat = match mode {
            KFeatMode::Exact => kfeat_exact(h_t)?,
            KFeatMode::Spectral => kfeat_spectral(h_t)?,
        };
        Ok(Self {
            k_feat,
            k_feat_mode: mode,
            k_pred: kpred(),
        })
    }

    /// Caller-supplied `K_feat` (e.g. a reported per-model value).
    pub fn with_k_feat(k_feat: f64, mode: KFeatMode) -> Result<Self> {
        if !k_feat.is_finite() || k_feat < 0.0 {
            return Err(PrismError::invalid("k_feat", format!("must be finite and >= 0, got {k_feat}")));
        }
        Ok(Self {
            k_feat,
            k_feat_mode: mode,
            k_pred: kpred(),
        })
    }
}

pub fn kfeat_exact(h: &HeadMatrix) -> Result<f64> {
    kfeat_exact_with(h, KFeatOptions::default())
}

/// `max_{j,k} ‖h_j − h_k‖₂` by blocked Gram expansion
/// `‖h_j − h_k‖² = ‖h_j‖² + ‖h_k‖² − 2 h_j·h_k`.
pub fn kfeat_exact_with(h: &HeadMatrix, opts: KFeatOptions) -> Result<f64> {
    let vocab = h.vocab();
    if vocab > opts.vocab_ceiling {
        return Err(PrismError::VocabCeiling {
            vocab,
            ceiling: opts.vocab_ceiling,
        });
    }
    if opts.block == 0 {
        return Err(PrismError::invalid("block", "must be positive"));
    }
    let hv = h.values();
    let sq: Vec<f64> = hv.column_iter().map(|c| c.norm_squared()).collect();

    let blocks = vocab.div_ceil(opts.block);
    let pairs: Vec<(usize, usize)> = (0..blocks)
        .flat_map(|a| (a..blocks).map(move |b| (a, b)))
        .collect();

    let max_sq = opts.execution.max_range(pairs.len(), |idx| {
        let (a, b) = pairs[idx];
        let (a0, a1) = (a * opts.block, ((a + 1) * opts.block).min(vocab));
        let (b0, b1) = (b * opts.block, ((b + 1) * opts.block).min(vocab));
        let left = hv.columns(a0, a1 - a0);
        let right = hv.columns(b0, b1 - b0);
        let gram: DMatrix<f64> = left.tr_mul(&right);
        let mut best = 0.0f64;
        for (jj, j) in (b0..b1).enumerate() {
            for (ii, i) in (a0..a1).enumerate() {
                let dist = sq[i] + sq[j] - 2.0 * gram[(ii, jj)];
                best = best.max(dist);
            }
        }
        best
    });
    Ok(max_sq.max(0.0).sqrt())
}

/// `√2 · σ_max(H)`.
pub fn kfeat_spectral(h: &HeadMatrix) -> Result<f64> {
    let svd = h
        .values()
        .clone()
        .try_svd(false, false, 1e-15, 10_000)
        .ok_or(PrismError::NoConvergence("SVD"))?;
    let smax = svd.singular_values.iter().copied().fold(0.0, f64::max);
    Ok(std::f64::consts::SQRT_2 * smax)
}

pub fn kpred() -> f64 {
    std::f64::consts::SQRT_2
}
