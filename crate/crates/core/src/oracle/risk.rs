use crate::error::{PrismError, Result};
use crate::matrix::{FeatureMatrix, HeadMatrix};

fn check_labels(z: &FeatureMatrix, h: &HeadMatrix, labels: &[usize]) -> Result<()> {
    if labels.len() != z.n() {
        return Err(PrismError::LengthMismatch {
            left: "labels",
            left_len: labels.len(),
            right: "feature rows",
            right_len: z.n(),
        });
    }
    if z.d() != h.d() {
        return Err(PrismError::ShapeMismatch {
            left: "Z",
            left_shape: z.shape(),
            right: "H",
            right_shape: h.shape(),
        });
    }
    for (row, &label) in labels.iter().enumerate() {
        if label >= h.vocab() {
            return Err(PrismError::LabelOutOfRange {
                row,
                label,
                vocab: h.vocab(),
            });
        }
    }
    Ok(())
}

/// `ℓ(v, y) = −v_y + log Σ_j exp(v_j)`, evaluated with a max shift and
/// `ln_1p` over the non-maximal terms, so confident correct predictions keep
/// full relative precision.
pub fn cross_entropy(logits: impl Iterator<Item = f64> + Clone, label_logit: f64) -> f64 {
    let max = logits.clone().fold(f64::NEG_INFINITY, f64::max);
    let mut seen_max = false;
    let rest: f64 = logits
        .filter(|&v| {
            if v == max && !seen_max {
                seen_max = true;
                false
            } else {
                true
            }
        })
        .map(|v| (v - max).exp())
        .sum();
    (max - label_logit) + rest.ln_1p()
}

/// Per-row cross-entropy of logits `Z · H` against `labels`.
pub fn per_sample_losses(z: &FeatureMatrix, h: &HeadMatrix, labels: &[usize]) -> Result<Vec<f64>> {
    check_labels(z, h, labels)?;
    let logits = z.values() * h.values();
    Ok(labels
        .iter()
        .enumerate()
        .map(|(i, &y)| {
            let row = logits.row(i);
            cross_entropy(row.iter().copied(), row[y])
        })
        .collect())
}

/// Mean cross-entropy over the rows.
pub fn empirical_risk(z: &FeatureMatrix, h: &HeadMatrix, labels: &[usize]) -> Result<f64> {
    z.require_rows("Z")?;
    let losses = per_sample_losses(z, h, labels)?;
    Ok(losses.iter().sum::<f64>() / losses.len() as f64)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::oracle::rng::{standard_normal_matrix, stream_rng};
    use nalgebra::DMatrix;

    #[test]
    fn uniform_logits_give_log_v() {
        let z = FeatureMatrix::new(DMatrix::zeros(3, 2)).unwrap();
        let h = HeadMatrix::new(standard_normal_matrix(&mut stream_rng(51, 0), 2, 2)).unwrap();
        let r = empirical_risk(&z, &h, &[0, 1, 1]).unwrap();
        assert!((r - 2f64.ln()).abs() < 1e-15);
    }

    #[test]
    fn peaked_logits() {
        // logits [10, 0, 0], y = 0: ln(1 + 2 e^-10)
        let z = FeatureMatrix::from_row_slice(1, 1, &[1.0]).unwrap();
        let h = HeadMatrix::from_row_slice(1, 3, &[10.0, 0.0, 0.0]).unwrap();
        let r = empirical_risk(&z, &h, &[0]).unwrap();
        let hand = (2.0 * (-10f64).exp()).ln_1p();
        assert!((r - hand).abs() <= 1e-15 * hand);
        assert!((r - 9.08e-5).abs() < 1e-7);
    }

    #[test]
    fn matches_naive_summation() {
        let mut rng = stream_rng(52, 0);
        let z = standard_normal_matrix(&mut rng, 9, 4) * 0.3;
        let h = standard_normal_matrix(&mut rng, 4, 6) * 0.3;
        let labels = [0, 5, 2, 3, 1, 1, 4, 0, 2];
        let mut naive = 0.0;
        for (i, &y) in labels.iter().enumerate() {
            let v = z.row(i) * &h;
            let s: f64 = v.iter().map(|x| x.exp()).sum();
            naive += -(v[y].exp() / s).ln();
        }
        naive /= labels.len() as f64;
        let r = empirical_risk(&FeatureMatrix::new(z).unwrap(), &HeadMatrix::new(h).unwrap(), &labels).unwrap();
        assert!((r - naive).abs() < 1e-10);
    }

    #[test]
    fn label_errors() {
        let z = FeatureMatrix::new(DMatrix::zeros(2, 2)).unwrap();
        let h = HeadMatrix::new(DMatrix::zeros(2, 3)).unwrap();
        assert!(matches!(
            empirical_risk(&z, &h, &[0, 3]),
            Err(PrismError::LabelOutOfRange { row: 1, label: 3, vocab: 3 })
        ));
        assert!(matches!(empirical_risk(&z, &h, &[0]), Err(PrismError::LengthMismatch { .. })));
    }
}
