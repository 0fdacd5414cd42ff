//! Shape penalty `1 − Ω(Z_0, Z_t)` on a fixed reference batch, its
//! closed-form gradient, and a small end-to-end drift demo.
//!
//! With `a = ‖Z_0‖`, `b = ‖Z_t‖` and `T = Tr(Z_0ᵀ Z_t)`:
//!
//! ```text
//! ∂Ω/∂Z_t = Z_0 / (a b) − T Z_t / (a b³)
//! ```
//!
//! and the penalty gradient is its negation. The gradient is orthogonal to
//! `Z_t`, so it vanishes along the ray `Z_t = c Z_0`, `c > 0`.

use nalgebra::DMatrix;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{PrismError, Result};
use crate::geometry::{shape_gap, OrthogonalAlignment};
use crate::matrix::{same_shape, FeatureMatrix, HeadMatrix};
use crate::oracle::rng::{standard_normal_matrix, stream_rng};
use crate::oracle::{cross_entropy, empirical_risk};

#[derive(Clone, Debug, PartialEq)]
pub struct PenaltyGradient {
    pub value: f64,
    /// `∂(1 − Ω)/∂Z_t`, same shape as `Z_t`.
    pub grad: DMatrix<f64>,
}

pub fn shape_penalty(z_0: &FeatureMatrix, z_t: &FeatureMatrix) -> Result<f64> {
    same_shape("Z_0", z_0.shape(), "Z_t", z_t.shape())?;
    if z_0.values().norm() == 0.0 {
        return Err(PrismError::ZeroNorm("Z_0"));
    }
    shape_gap(z_0, z_t, &OrthogonalAlignment::identity())
}

pub fn shape_penalty_grad(z_0: &FeatureMatrix, z_t: &FeatureMatrix) -> Result<PenaltyGradient> {
    same_shape("Z_0", z_0.shape(), "Z_t", z_t.shape())?;
    z_0.require_rows("Z_0")?;
    let a = z_0.values().norm();
    let b = z_t.values().norm();
    if a == 0.0 {
        return Err(PrismError::ZeroNorm("Z_0"));
    }
    if b == 0.0 {
        return Err(PrismError::ZeroNorm("Z_t"));
    }
    let t = z_0.values().dot(z_t.values());
    let omega = t / (a * b);
    // -(Z_0 - Ω (a/b) Z_t) / (a b)
    let grad = (z_t.values() * (omega * a / b) - z_0.values()) / (a * b);
    Ok(PenaltyGradient {
        value: shape_gap(z_0, z_t, &OrthogonalAlignment::identity())?,
        grad,
    })
}

/// Outcome of comparing the analytic gradient against central differences.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct GradCheckReport {
    pub instances: usize,
    pub coordinates: usize,
    pub max_rel_error: f64,
}

/// Relative error floor: entries much smaller than the gradient's largest
/// entry are compared against that scale instead of their own magnitude.
pub const GRADCHECK_FLOOR_REL: f64 = 1e-3;

/// Central-difference step `1e-5 · (1 + |x|)`.
pub fn fd_step(x: f64) -> f64 {
    1e-5 * (1.0 + x.abs())
}

/// Check the analytic gradient on random `n × d` pairs at randomly chosen
/// coordinates.
pub fn gradcheck(seed: u64, instances: usize, coordinates: usize, n: usize, d: usize) -> Result<GradCheckReport> {
    if instances == 0 || coordinates == 0 || n == 0 || d == 0 {
        return Err(PrismError::invalid("gradcheck", "counts and sizes must be >= 1"));
    }
    let mut worst = 0.0f64;
    for i in 0..instances {
        let mut rng = stream_rng(seed.wrapping_add(i as u64), 0);
        let z_0 = FeatureMatrix::new(standard_normal_matrix(&mut rng, n, d))?;
        let z_t = FeatureMatrix::new(standard_normal_matrix(&mut rng, n, d))?;
        let analytic = shape_penalty_grad(&z_0, &z_t)?;
        let scale = analytic.grad.amax();
        for _ in 0..coordinates {
            let (r, c) = (rng.random_range(0..n), rng.random_range(0..d));
            let x = z_t.values()[(r, c)];
            let h = fd_step(x);
            let mut plus = z_t.values().clone();
            plus[(r, c)] = x + h;
            let mut minus = z_t.values().clone();
            minus[(r, c)] = x - h;
            let fp = shape_penalty(&z_0, &FeatureMatrix::new(plus)?)?;
            let fm = shape_penalty(&z_0, &FeatureMatrix::new(minus)?)?;
            let numeric = (fp - fm) / (2.0 * h);
            let a = analytic.grad[(r, c)];
            let denom = a.abs().max(numeric.abs()).max(GRADCHECK_FLOOR_REL * scale);
            if denom > 0.0 {
                worst = worst.max((a - numeric).abs() / denom);
            }
        }
    }
    Ok(GradCheckReport {
        instances,
        coordinates,
        max_rel_error: worst,
    })
}

/// Sizes and data of the drift demo.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct DemoConfig {
    pub input_dim: usize,
    pub hidden_dim: usize,
    pub vocab: usize,
    pub task_samples: usize,
    pub reference_samples: usize,
    pub downstream_samples: usize,
}

impl Default for DemoConfig {
    fn default() -> Self {
        Self {
            input_dim: 8,
            hidden_dim: 6,
            vocab: 5,
            task_samples: 128,
            reference_samples: 32,
            downstream_samples: 128,
        }
    }
}

pub const DEFAULT_SEEDS: [u64; 8] = [0, 1, 2, 3, 4, 5, 6, 7];
pub const DEFAULT_LAMBDAS: [f64; 6] = [0.0, 0.01, 0.05, 0.1, 0.5, 1.0];
pub const DEFAULT_STEPS: usize = 200;
pub const DEFAULT_LR: f64 = 0.5;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DemoResult {
    pub lambda: f64,
    pub steps: usize,
    /// `Ω(Z_0, Z_t)` on the reference batch, one entry per recorded step
    /// starting at step 0.
    pub omega_trajectory: Vec<f64>,
    pub task_loss_trajectory: Vec<f64>,
    /// `|R_down(B_t) − R_down(B_0)|` on the downstream set.
    pub downstream_gap_trajectory: Vec<f64>,
    /// Step at which the objective became non-finite; trajectories stop
    /// before it.
    pub diverged_at: Option<usize>,
}

impl DemoResult {
    pub fn final_omega(&self) -> f64 {
        *self.omega_trajectory.last().expect("trajectories always hold step 0")
    }

    pub fn write_csv<W: std::io::Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        let err = |e: csv::Error| PrismError::io("<csv>", std::io::Error::other(e));
        w.write_record(["step", "omega", "task_loss", "downstream_gap"]).map_err(err)?;
        for (i, ((o, l), g)) in self
            .omega_trajectory
            .iter()
            .zip(&self.task_loss_trajectory)
            .zip(&self.downstream_gap_trajectory)
            .enumerate()
        {
            let f = crate::report::fmt_exact;
            w.write_record([i.to_string(), f(*o), f(*l), f(*g)]).map_err(err)?;
        }
        w.flush().map_err(|e| PrismError::io("<csv>", e))
    }
}

fn sample_softmax_labels<R: Rng>(logits: &DMatrix<f64>, rng: &mut R) -> Vec<usize> {
    (0..logits.nrows())
        .map(|i| {
            let row = logits.row(i);
            let max = row.max();
            let w: Vec<f64> = row.iter().map(|v| (v - max).exp()).collect();
            let mut u = rng.random::<f64>() * w.iter().sum::<f64>();
            for (j, wj) in w.iter().enumerate() {
                if u < *wj {
                    return j;
                }
                u -= wj;
            }
            w.len() - 1
        })
        .collect()
}

/// Mean cross-entropy and its gradient with respect to the backbone `B`,
/// for logits `X B H`.
fn task_loss_and_grad(x: &DMatrix<f64>, b: &DMatrix<f64>, h: &DMatrix<f64>, y: &[usize]) -> (f64, DMatrix<f64>) {
    let logits = x * b * h;
    let n = x.nrows() as f64;
    let mut resid = DMatrix::zeros(logits.nrows(), logits.ncols());
    let mut loss = 0.0;
    for (i, &label) in y.iter().enumerate() {
        let row = logits.row(i);
        loss += cross_entropy(row.iter().copied(), row[label]);
        let max = row.max();
        let e: Vec<f64> = row.iter().map(|v| (v - max).exp()).collect();
        let s: f64 = e.iter().sum();
        for (j, ej) in e.iter().enumerate() {
            resid[(i, j)] = ej / s - if j == label { 1.0 } else { 0.0 };
        }
    }
    let grad = x.transpose() * resid * h.transpose() / n;
    (loss / n, grad)
}

/// Train a linear backbone `B` (fixed head `H`) on a shifted task by full-
/// batch gradient descent on `CE + λ(1 − Ω(X_ref B_0, X_ref B))`.
///
/// Stream layout for `seed`: 0 backbone, 1 head, 2 teacher backbone,
/// 3 task inputs, 4 reference inputs, 5 downstream inputs, 6 labels.
pub fn drift_demo(seed: u64, lambda: f64, steps: usize, lr: f64) -> Result<DemoResult> {
    drift_demo_with(seed, lambda, steps, lr, DemoConfig::default())
}

pub fn drift_demo_with(seed: u64, lambda: f64, steps: usize, lr: f64, cfg: DemoConfig) -> Result<DemoResult> {
    if steps == 0 {
        return Err(PrismError::invalid("steps", "must be >= 1"));
    }
    if !lr.is_finite() || lr <= 0.0 {
        return Err(PrismError::invalid("lr", format!("must be finite and > 0, got {lr}")));
    }
    if !lambda.is_finite() || lambda < 0.0 {
        return Err(PrismError::invalid("lambda", format!("must be finite and >= 0, got {lambda}")));
    }
    let DemoConfig {
        input_dim: p,
        hidden_dim: d,
        vocab: v,
        task_samples,
        reference_samples,
        downstream_samples,
    } = cfg;
    if [p, d, v, task_samples, reference_samples, downstream_samples].contains(&0) {
        return Err(PrismError::invalid("demo config", "all sizes must be >= 1"));
    }

    let inv_sqrt_p = 1.0 / (p as f64).sqrt();
    let b0 = standard_normal_matrix(&mut stream_rng(seed, 0), p, d) * inv_sqrt_p;
    let head = standard_normal_matrix(&mut stream_rng(seed, 1), d, v) * (2.0 / (d as f64).sqrt());
    let teacher = standard_normal_matrix(&mut stream_rng(seed, 2), p, d) * inv_sqrt_p;
    let x_task = standard_normal_matrix(&mut stream_rng(seed, 3), task_samples, p);
    let x_ref = standard_normal_matrix(&mut stream_rng(seed, 4), reference_samples, p);
    let x_down = standard_normal_matrix(&mut stream_rng(seed, 5), downstream_samples, p);

    let mut label_rng = stream_rng(seed, 6);
    let y_task = sample_softmax_labels(&(&x_task * &teacher * &head), &mut label_rng);
    let y_down = sample_softmax_labels(&(&x_down * &b0 * &head), &mut label_rng);

    let head_m = HeadMatrix::new(head.clone())?;
    let z_0 = FeatureMatrix::new(&x_ref * &b0)?;
    let down_risk = |b: &DMatrix<f64>| -> Result<f64> {
        empirical_risk(&FeatureMatrix::new(&x_down * b)?, &head_m, &y_down)
    };
    let r_down_0 = down_risk(&b0)?;

    let mut b = b0.clone();
    let mut result = DemoResult {
        lambda,
        steps,
        omega_trajectory: Vec::with_capacity(steps + 1),
        task_loss_trajectory: Vec::with_capacity(steps + 1),
        downstream_gap_trajectory: Vec::with_capacity(steps + 1),
        diverged_at: None,
    };

    for step in 0..=steps {
        let (loss, mut grad) = task_loss_and_grad(&x_task, &b, &head, &y_task);
        let z_t = match FeatureMatrix::new(&x_ref * &b) {
            Ok(z) if loss.is_finite() => z,
            _ => {
                result.diverged_at = Some(step);
                return Ok(result);
            }
        };
        let penalty = shape_penalty_grad(&z_0, &z_t)?;
        result.omega_trajectory.push(1.0 - penalty.value);
        result.task_loss_trajectory.push(loss);
        result.downstream_gap_trajectory.push((down_risk(&b)? - r_down_0).abs());
        if step == steps {
            break;
        }
        if lambda > 0.0 {
            grad += x_ref.transpose() * &penalty.grad * lambda;
        }
        b -= grad * lr;
    }
    Ok(result)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn fm(m: DMatrix<f64>) -> FeatureMatrix {
        FeatureMatrix::new(m).unwrap()
    }

    #[test]
    fn penalty_examples() {
        let z = fm(standard_normal_matrix(&mut stream_rng(61, 0), 6, 4));
        assert!(shape_penalty(&z, &z).unwrap().abs() < 1e-15);
        let neg = fm(-z.values());
        assert!((shape_penalty(&z, &neg).unwrap() - 2.0).abs() < 1e-15);
        let zero = fm(DMatrix::zeros(6, 4));
        assert!(matches!(shape_penalty(&zero, &z), Err(PrismError::ZeroNorm(_))));
        assert!(matches!(shape_penalty_grad(&z, &zero), Err(PrismError::ZeroNorm(_))));
    }

    #[test]
    fn gradient_vanishes_on_the_ray() {
        let z = fm(standard_normal_matrix(&mut stream_rng(62, 0), 6, 4));
        for c in [1.0, 3.0, 0.25] {
            let zc = fm(z.values() * c);
            let g = shape_penalty_grad(&z, &zc).unwrap();
            assert!(g.grad.amax() <= 1e-12, "c = {c}: {}", g.grad.amax());
        }
    }

    #[test]
    fn gradient_is_orthogonal_to_z_t() {
        let mut rng = stream_rng(63, 0);
        let z0 = fm(standard_normal_matrix(&mut rng, 5, 3));
        let zt = fm(standard_normal_matrix(&mut rng, 5, 3));
        let g = shape_penalty_grad(&z0, &zt).unwrap();
        assert!(g.grad.dot(zt.values()).abs() < 1e-14);
    }

    #[test]
    fn gradcheck_passes() {
        let r = gradcheck(5, 10, 20, 6, 4).unwrap();
        assert!(r.max_rel_error <= 1e-5, "{r:?}");
        assert!(gradcheck(5, 0, 20, 6, 4).is_err());
    }

    #[test]
    fn demo_bookkeeping() {
        assert!(drift_demo(0, 0.0, 0, 0.1).is_err());
        assert!(drift_demo(0, 0.0, 1, 0.0).is_err());
        let r = drift_demo(0, 0.0, 1, 0.1).unwrap();
        assert_eq!(r.omega_trajectory.len(), 2);
        assert_eq!(r.task_loss_trajectory.len(), 2);
        assert_eq!(r.downstream_gap_trajectory.len(), 2);
        assert!((r.omega_trajectory[0] - 1.0).abs() < 1e-15);
        assert_eq!(r.downstream_gap_trajectory[0], 0.0);
    }

    #[test]
    fn unregularized_training_drifts() {
        for seed in DEFAULT_SEEDS {
            let r = drift_demo(seed, 0.0, DEFAULT_STEPS, DEFAULT_LR).unwrap();
            assert!(r.diverged_at.is_none());
            assert!(r.final_omega() < r.omega_trajectory[0], "seed {seed}");
            assert!(r.task_loss_trajectory.last().unwrap() < &r.task_loss_trajectory[0]);
        }
    }

    #[test]
    fn strong_regularization_keeps_shape() {
        for seed in DEFAULT_SEEDS {
            let free = drift_demo(seed, 0.0, DEFAULT_STEPS, DEFAULT_LR).unwrap();
            let pinned = drift_demo(seed, 1e3, DEFAULT_STEPS, DEFAULT_LR).unwrap();
            assert!(pinned.diverged_at.is_none(), "seed {seed}");
            assert!(pinned.final_omega() >= free.final_omega(), "seed {seed}");
        }
    }

    #[test]
    fn final_omega_rises_with_lambda() {
        let finals: Vec<f64> = [0.0, 0.01, 0.1, 1.0]
            .iter()
            .map(|&l| drift_demo(2, l, DEFAULT_STEPS, DEFAULT_LR).unwrap().final_omega())
            .collect();
        assert!(finals.windows(2).all(|w| w[0] <= w[1]), "{finals:?}");
    }

    #[test]
    fn csv_columns() {
        let r = drift_demo(1, 0.1, 3, 0.1).unwrap();
        let mut buf = Vec::new();
        r.write_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert!(text.starts_with("step,omega,task_loss,downstream_gap\n"));
        assert_eq!(text.lines().count(), 5);
    }
}
