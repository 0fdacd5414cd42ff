use std::io::Write;

use serde::{Deserialize, Serialize};

use super::instance::{gen_instance, Perturbation, Sizes, SyntheticInstance};
use super::risk::empirical_risk;
use crate::bound::{prism_bound, slack_ratio, BoundReport};
use crate::error::{PrismError, Result};
use crate::exec::Execution;
use crate::geometry::AlignmentMode;
use crate::lipschitz::KFeatMode;

/// Slack allowed on `gap ≤ B` for floating-point roundoff.
pub const VIOLATION_TOL: f64 = 1e-9;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct VerificationRecord {
    pub risk_t: f64,
    pub risk_p: f64,
    pub gap: f64,
    pub bound: f64,
    pub holds: bool,
    /// `gap / bound`, 0 when both are 0.
    pub slack_ratio: f64,
}

/// Exact empirical risks of both models on the instance, the bound, and the
/// full report behind it.
pub fn verify_bound_detailed(
    inst: &SyntheticInstance,
    alignment: AlignmentMode,
    k_feat_mode: KFeatMode,
) -> Result<(VerificationRecord, BoundReport)> {
    let risk_t = empirical_risk(&inst.z_t, &inst.h_t, &inst.labels)?;
    let risk_p = empirical_risk(&inst.z_p, &inst.h_p, &inst.labels)?;
    let w = alignment.resolve(&inst.z_t, &inst.z_p)?;
    let gap = (risk_t - risk_p).abs();
    let report = prism_bound(&inst.z_t, &inst.z_p, &inst.h_t, &inst.h_p, &w, k_feat_mode)?
        .with_variant(format!("{}@{}", inst.perturbation, inst.magnitude), Some(gap));
    let record = VerificationRecord {
        risk_t,
        risk_p,
        gap,
        bound: report.bound,
        holds: gap <= report.bound + VIOLATION_TOL,
        slack_ratio: slack_ratio(gap, report.bound),
    };
    Ok((record, report))
}

pub fn verify_bound(
    inst: &SyntheticInstance,
    alignment: AlignmentMode,
    k_feat_mode: KFeatMode,
) -> Result<VerificationRecord> {
    verify_bound_detailed(inst, alignment, k_feat_mode).map(|(r, _)| r)
}

/// Parameters of a verification sweep. Trial `t` uses instance seed
/// `seed + t` for every kind and magnitude (common random numbers).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SweepConfig {
    pub seed: u64,
    pub trials: usize,
    pub kinds: Vec<Perturbation>,
    pub magnitudes: Vec<f64>,
    /// Exact sizes, or per-trial upper bounds when `random_sizes` is set.
    pub sizes: Sizes,
    pub random_sizes: bool,
    pub alignments: Vec<AlignmentMode>,
    pub k_feat_mode: KFeatMode,
    pub execution: Execution,
}

pub const DEFAULT_MAGNITUDES: [f64; 5] = [0.05, 0.1, 0.2, 0.4, 0.8];

impl Default for SweepConfig {
    fn default() -> Self {
        Self {
            seed: 0,
            trials: 8,
            kinds: Perturbation::ALL.to_vec(),
            magnitudes: DEFAULT_MAGNITUDES.to_vec(),
            sizes: Sizes::DEFAULT,
            random_sizes: false,
            alignments: AlignmentMode::ALL.to_vec(),
            k_feat_mode: KFeatMode::Exact,
            execution: Execution::default(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SweepRecord {
    pub seed: u64,
    pub kind: Perturbation,
    pub magnitude: f64,
    pub sizes: Sizes,
    pub alignment: AlignmentMode,
    pub scale_term: f64,
    pub shape_term: f64,
    pub delta: f64,
    pub gamma: f64,
    #[serde(flatten)]
    pub record: VerificationRecord,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SweepSummary {
    pub instances: usize,
    pub records: usize,
    pub violations: usize,
    pub max_slack_ratio: f64,
}

impl SweepSummary {
    pub fn from_records(records: &[SweepRecord], instances: usize) -> Self {
        Self {
            instances,
            records: records.len(),
            violations: records.iter().filter(|r| !r.record.holds).count(),
            max_slack_ratio: records
                .iter()
                .map(|r| r.record.slack_ratio)
                .fold(0.0, f64::max),
        }
    }
}

/// Run every (trial, kind, magnitude) instance under every alignment.
/// Records come back in that nesting order regardless of execution policy.
pub fn run_sweep(cfg: &SweepConfig) -> Result<Vec<SweepRecord>> {
    if cfg.trials == 0 {
        return Err(PrismError::invalid("trials", "must be >= 1"));
    }
    if cfg.kinds.is_empty() || cfg.magnitudes.is_empty() || cfg.alignments.is_empty() {
        return Err(PrismError::invalid("sweep", "kinds, magnitudes and alignments must be non-empty"));
    }
    let mut jobs = Vec::new();
    for t in 0..cfg.trials {
        for &kind in &cfg.kinds {
            for &m in &cfg.magnitudes {
                jobs.push((cfg.seed.wrapping_add(t as u64), kind, m));
            }
        }
    }
    let per_job = cfg.execution.map(&jobs, |&(seed, kind, m)| -> Result<Vec<SweepRecord>> {
        let sizes = if cfg.random_sizes {
            cfg.sizes.sample_up_to(seed)?
        } else {
            cfg.sizes
        };
        let inst = gen_instance(seed, sizes, kind, m)?;
        cfg.alignments
            .iter()
            .map(|&alignment| {
                let (record, report) = verify_bound_detailed(&inst, alignment, cfg.k_feat_mode)?;
                Ok(SweepRecord {
                    seed,
                    kind,
                    magnitude: m,
                    sizes,
                    alignment,
                    scale_term: report.decomposition.scale_term,
                    shape_term: report.decomposition.shape_term,
                    delta: report.delta,
                    gamma: report.gamma,
                    record,
                })
            })
            .collect()
    });
    let mut out = Vec::with_capacity(jobs.len() * cfg.alignments.len());
    for r in per_job {
        out.extend(r?);
    }
    Ok(out)
}

pub const SWEEP_CSV_HEADER: [&str; 17] = [
    "seed", "kind", "magnitude", "n", "d", "v", "alignment", "risk_t", "risk_p", "gap", "bound",
    "holds", "slack_ratio", "scale_term", "shape_term", "delta", "gamma",
];

pub fn write_sweep_csv<W: Write>(records: &[SweepRecord], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    let csv_err = |e: csv::Error| PrismError::io("<csv>", std::io::Error::other(e));
    w.write_record(SWEEP_CSV_HEADER).map_err(csv_err)?;
    for r in records {
        let f = crate::report::fmt_exact;
        w.write_record([
            r.seed.to_string(),
            r.kind.to_string(),
            f(r.magnitude),
            r.sizes.n.to_string(),
            r.sizes.d.to_string(),
            r.sizes.v.to_string(),
            r.alignment.as_str().to_string(),
            f(r.record.risk_t),
            f(r.record.risk_p),
            f(r.record.gap),
            f(r.record.bound),
            r.record.holds.to_string(),
            f(r.record.slack_ratio),
            f(r.scale_term),
            f(r.shape_term),
            f(r.delta),
            f(r.gamma),
        ])
        .map_err(csv_err)?;
    }
    w.flush().map_err(|e| PrismError::io("<csv>", e))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_magnitude_instance() {
        for kind in Perturbation::ALL {
            let inst = gen_instance(1, Sizes::DEFAULT, kind, 0.0).unwrap();
            for a in AlignmentMode::ALL {
                let r = verify_bound(&inst, a, KFeatMode::Exact).unwrap();
                assert_eq!(r.gap, 0.0);
                if a == AlignmentMode::Identity {
                    assert_eq!(r.bound, 0.0);
                    assert_eq!(r.slack_ratio, 0.0);
                }
                assert!(r.holds);
            }
        }
    }

    #[test]
    fn head_noise_isolates_gamma() {
        for seed in 0..10 {
            let inst = gen_instance(seed, Sizes::DEFAULT, Perturbation::HeadNoise, 0.5).unwrap();
            let (rec, rep) = verify_bound_detailed(&inst, AlignmentMode::Identity, KFeatMode::Exact).unwrap();
            assert_eq!(rep.delta, 0.0);
            assert!(rec.gap <= rep.gamma + VIOLATION_TOL);
        }
    }

    #[test]
    fn sweep_is_schedule_independent() {
        let base = SweepConfig {
            trials: 2,
            sizes: Sizes { n: 12, d: 4, v: 5 },
            ..SweepConfig::default()
        };
        let seq = run_sweep(&SweepConfig {
            execution: Execution::Sequential,
            ..base.clone()
        })
        .unwrap();
        let par = run_sweep(&SweepConfig {
            execution: Execution::Parallel,
            ..base
        })
        .unwrap();
        assert_eq!(seq, par);
        assert_eq!(seq.len(), 2 * 5 * 5 * 2);
        assert_eq!(SweepSummary::from_records(&seq, 50).violations, 0);
    }

    #[test]
    fn sweep_rejects_zero_trials() {
        let cfg = SweepConfig {
            trials: 0,
            ..SweepConfig::default()
        };
        assert!(run_sweep(&cfg).is_err());
    }

    #[test]
    fn scale_shrink_records_are_scale_dominated() {
        let cfg = SweepConfig {
            trials: 3,
            kinds: vec![Perturbation::ScaleShrink],
            ..SweepConfig::default()
        };
        for r in run_sweep(&cfg).unwrap() {
            assert!(r.scale_term >= r.shape_term, "{r:?}");
        }
    }
}
