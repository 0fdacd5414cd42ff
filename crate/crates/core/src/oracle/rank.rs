use serde::{Deserialize, Serialize};

use super::instance::{gen_instance, Perturbation, Sizes};
use super::verify::verify_bound_detailed;
use crate::error::{PrismError, Result};
use crate::exec::Execution;
use crate::geometry::AlignmentMode;
use crate::lipschitz::KFeatMode;

/// Average (fractional) ranks, 1-based; ties share the mean of their
/// positions.
pub fn average_ranks(xs: &[f64]) -> Result<Vec<f64>> {
    if let Some(i) = xs.iter().position(|x| x.is_nan()) {
        return Err(PrismError::invalid("ranks", format!("NaN at index {i}")));
    }
    let mut order: Vec<usize> = (0..xs.len()).collect();
    order.sort_by(|&a, &b| xs[a].total_cmp(&xs[b]));
    let mut ranks = vec![0.0; xs.len()];
    let mut i = 0;
    while i < order.len() {
        let mut j = i;
        while j + 1 < order.len() && xs[order[j + 1]] == xs[order[i]] {
            j += 1;
        }
        let avg = (i + j) as f64 / 2.0 + 1.0;
        for &k in &order[i..=j] {
            ranks[k] = avg;
        }
        i = j + 1;
    }
    Ok(ranks)
}

fn pearson(xs: &[f64], ys: &[f64], what: (&'static str, &'static str)) -> Result<f64> {
    let n = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for (x, y) in xs.iter().zip(ys) {
        let (dx, dy) = (x - mx, y - my);
        sxy += dx * dy;
        sxx += dx * dx;
        syy += dy * dy;
    }
    if sxx == 0.0 {
        return Err(PrismError::ConstantInput(what.0));
    }
    if syy == 0.0 {
        return Err(PrismError::ConstantInput(what.1));
    }
    Ok((sxy / (sxx * syy).sqrt()).clamp(-1.0, 1.0))
}

/// Spearman rank correlation with average ranks for ties.
pub fn spearman(xs: &[f64], ys: &[f64]) -> Result<f64> {
    if xs.len() != ys.len() {
        return Err(PrismError::LengthMismatch {
            left: "xs",
            left_len: xs.len(),
            right: "ys",
            right_len: ys.len(),
        });
    }
    if xs.len() < 2 {
        return Err(PrismError::invalid("spearman", "need at least 2 observations"));
    }
    pearson(&average_ranks(xs)?, &average_ranks(ys)?, ("xs", "ys"))
}

pub const DEFAULT_GRID: [f64; 8] = [0.05, 0.1, 0.15, 0.2, 0.3, 0.4, 0.5, 0.6];

/// Threshold for a monotone perturbation family.
pub const MONOTONE_MIN_RS: f64 = 0.9;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RankConfig {
    pub seed: u64,
    pub grid: Vec<f64>,
    pub sizes: Sizes,
    pub kinds: Vec<Perturbation>,
    pub alignment: AlignmentMode,
    pub k_feat_mode: KFeatMode,
    pub execution: Execution,
}

impl Default for RankConfig {
    fn default() -> Self {
        Self {
            seed: 0,
            grid: DEFAULT_GRID.to_vec(),
            sizes: Sizes::DEFAULT,
            kinds: Perturbation::ALL.to_vec(),
            alignment: AlignmentMode::Identity,
            k_feat_mode: KFeatMode::Exact,
            execution: Execution::default(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RankPoint {
    pub magnitude: f64,
    pub bound: f64,
    pub gap: f64,
    pub scale_term: f64,
    pub shape_term: f64,
    pub gamma: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct KindRanking {
    pub kind: Perturbation,
    pub r_s: f64,
    pub points: Vec<RankPoint>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RankSummary {
    /// Sorted by kind.
    pub per_kind: Vec<KindRanking>,
    /// Unweighted mean of `r_s` over kinds.
    pub mean_r_s: f64,
    /// Standard error of that mean (0 with a single kind).
    pub sem_r_s: f64,
}

/// For each perturbation kind, sweep the magnitude grid on one seed and
/// correlate the bound with the empirical gap.
pub fn rank_experiment(cfg: &RankConfig) -> Result<RankSummary> {
    if cfg.grid.len() < 3 {
        return Err(PrismError::invalid("grid", "need at least 3 magnitudes"));
    }
    if cfg.grid.iter().all(|&m| m == cfg.grid[0]) {
        return Err(PrismError::ConstantInput("magnitude grid"));
    }
    if cfg.kinds.is_empty() {
        return Err(PrismError::invalid("kinds", "must be non-empty"));
    }
    let mut kinds = cfg.kinds.clone();
    kinds.sort();
    kinds.dedup();

    let results = cfg.execution.map(&kinds, |&kind| -> Result<KindRanking> {
        let points = cfg
            .grid
            .iter()
            .map(|&m| {
                let inst = gen_instance(cfg.seed, cfg.sizes, kind, m)?;
                let (rec, rep) = verify_bound_detailed(&inst, cfg.alignment, cfg.k_feat_mode)?;
                Ok(RankPoint {
                    magnitude: m,
                    bound: rec.bound,
                    gap: rec.gap,
                    scale_term: rep.decomposition.scale_term,
                    shape_term: rep.decomposition.shape_term,
                    gamma: rep.gamma,
                })
            })
            .collect::<Result<Vec<_>>>()?;
        let bounds: Vec<f64> = points.iter().map(|p| p.bound).collect();
        let gaps: Vec<f64> = points.iter().map(|p| p.gap).collect();
        let r_s = spearman(&bounds, &gaps)?;
        Ok(KindRanking { kind, r_s, points })
    });
    let per_kind = results.into_iter().collect::<Result<Vec<_>>>()?;

    let k = per_kind.len() as f64;
    let mean_r_s = per_kind.iter().map(|r| r.r_s).sum::<f64>() / k;
    let sem_r_s = if per_kind.len() > 1 {
        let var = per_kind.iter().map(|r| (r.r_s - mean_r_s).powi(2)).sum::<f64>() / (k - 1.0);
        (var / k).sqrt()
    } else {
        0.0
    };
    Ok(RankSummary {
        per_kind,
        mean_r_s,
        sem_r_s,
    })
}
