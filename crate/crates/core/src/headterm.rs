//! Covariance-weighted head discrepancy
//! `γ = K_pred ‖Σ_P^{1/2} (W H_T − H_P)‖_F` with `Σ_P = Z_Pᵀ Z_P / n`.
//!
//! Two routes compute the same number. The matmul route uses
//! `‖Σ_P^{1/2} ΔH‖_F² = ‖Z_P ΔH‖_F² / n` and is the default. The eigen route
//! forms `Σ_P^{1/2}` explicitly and serves as a cross-check.

use nalgebra::{DMatrix, SymmetricEigen};
use serde::{Deserialize, Serialize};

use crate::error::{PrismError, Result};
use crate::geometry::OrthogonalAlignment;
use crate::lipschitz::kpred;
use crate::matrix::{same_shape, FeatureMatrix, HeadMatrix};

/// Relative floor for negative eigenvalues: anything below
/// `-EIGEN_CLAMP_REL * max|λ|` is treated as corrupted input.
pub const EIGEN_CLAMP_REL: f64 = 1e-8;

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GammaPath {
    Eigen,
    #[default]
    Matmul,
}

/// Uncentered second-moment matrix of a feature matrix.
#[derive(Clone, Debug, PartialEq)]
pub struct Covariance {
    values: DMatrix<f64>,
    n_source: usize,
}

impl Covariance {
    pub fn values(&self) -> &DMatrix<f64> {
        &self.values
    }

    pub fn n_source(&self) -> usize {
        self.n_source
    }

    /// Symmetric PSD square root, clamping roundoff-level negative
    /// eigenvalues to zero.
    pub fn sqrt(&self) -> Result<DMatrix<f64>> {
        let eig = SymmetricEigen::try_new(self.values.clone(), 1e-15, 10_000)
            .ok_or(PrismError::NoConvergence("symmetric eigendecomposition"))?;
        let scale = eig.eigenvalues.iter().fold(0.0f64, |m, l| m.max(l.abs()));
        let floor = -EIGEN_CLAMP_REL * scale;
        let mut roots = eig.eigenvalues.clone();
        for l in roots.iter_mut() {
            if *l < floor {
                return Err(PrismError::NegativeEigenvalue { value: *l, floor });
            }
            *l = l.max(0.0).sqrt();
        }
        let q = &eig.eigenvectors;
        Ok(q * DMatrix::from_diagonal(&roots) * q.transpose())
    }
}

pub fn covariance(z_p: &FeatureMatrix) -> Result<Covariance> {
    z_p.require_rows("Z_P")?;
    let z = z_p.values();
    let a = z.tr_mul(z) / z_p.n() as f64;
    let values = (&a + a.transpose()) * 0.5;
    Ok(Covariance {
        values,
        n_source: z_p.n(),
    })
}

/// `ΔH = W H_T − H_P`.
pub fn head_difference(
    h_t: &HeadMatrix,
    h_p: &HeadMatrix,
    alignment: &OrthogonalAlignment,
) -> Result<DMatrix<f64>> {
    same_shape("H_T", h_t.shape(), "H_P", h_p.shape())?;
    alignment.check_dim(h_t.d())?;
    Ok(alignment.apply_left(h_t.values()) - h_p.values())
}

pub fn gamma(
    z_p: &FeatureMatrix,
    h_t: &HeadMatrix,
    h_p: &HeadMatrix,
    alignment: &OrthogonalAlignment,
    path: GammaPath,
) -> Result<f64> {
    z_p.require_rows("Z_P")?;
    if z_p.d() != h_t.d() {
        return Err(PrismError::ShapeMismatch {
            left: "Z_P",
            left_shape: z_p.shape(),
            right: "H_T",
            right_shape: h_t.shape(),
        });
    }
    let dh = head_difference(h_t, h_p, alignment)?;
    let weighted = match path {
        GammaPath::Matmul => (z_p.values() * &dh).norm() / (z_p.n() as f64).sqrt(),
        GammaPath::Eigen => {
            let root = covariance(z_p)?.sqrt()?;
            (root * &dh).norm()
        }
    };
    Ok(kpred() * weighted)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::oracle::rng::{random_orthogonal, standard_normal_matrix, stream_rng};

    fn fm(m: DMatrix<f64>) -> FeatureMatrix {
        FeatureMatrix::new(m).unwrap()
    }

    fn hm(m: DMatrix<f64>) -> HeadMatrix {
        HeadMatrix::new(m).unwrap()
    }

    #[test]
    fn covariance_examples() {
        let c = covariance(&fm(DMatrix::identity(2, 2))).unwrap();
        assert_eq!(c.values(), &(DMatrix::<f64>::identity(2, 2) * 0.5));
        assert_eq!(c.n_source(), 2);

        let r = DMatrix::from_row_slice(1, 3, &[1.0, -2.0, 0.5]);
        let c = covariance(&fm(r.clone())).unwrap();
        assert_eq!(c.values(), &(r.transpose() * &r));

        let z = standard_normal_matrix(&mut stream_rng(31, 0), 20, 6);
        let c = covariance(&fm(z.clone())).unwrap();
        for a in 0..6 {
            for b in 0..6 {
                let mut s = 0.0;
                for i in 0..20 {
                    s += z[(i, a)] * z[(i, b)];
                }
                assert!((c.values()[(a, b)] - s / 20.0).abs() <= 1e-12);
            }
        }
        assert!(covariance(&fm(DMatrix::zeros(0, 3))).is_err());
    }

    #[test]
    fn frozen_head_is_exactly_zero() {
        let z = fm(standard_normal_matrix(&mut stream_rng(32, 0), 10, 4));
        let h = hm(standard_normal_matrix(&mut stream_rng(32, 1), 4, 7));
        let id = OrthogonalAlignment::identity();
        assert_eq!(gamma(&z, &h, &h, &id, GammaPath::Matmul).unwrap(), 0.0);
        assert_eq!(gamma(&z, &h, &h, &id, GammaPath::Eigen).unwrap(), 0.0);
    }

    #[test]
    fn null_space_disagreement_is_free() {
        // Z_P lives in span(e0, e1); ΔH only touches e2, e3
        let mut z = standard_normal_matrix(&mut stream_rng(33, 0), 12, 4);
        z.columns_mut(2, 2).fill(0.0);
        let h_t = standard_normal_matrix(&mut stream_rng(33, 1), 4, 6);
        let mut h_p = h_t.clone();
        let bump = standard_normal_matrix(&mut stream_rng(33, 2), 2, 6);
        let shifted = h_t.rows(2, 2) + bump;
        h_p.rows_mut(2, 2).copy_from(&shifted);
        let id = OrthogonalAlignment::identity();
        for path in [GammaPath::Matmul, GammaPath::Eigen] {
            let g = gamma(&fm(z.clone()), &hm(h_t.clone()), &hm(h_p.clone()), &id, path).unwrap();
            assert!(g.abs() <= 1e-9, "{path:?}: {g}");
        }
    }

    #[test]
    fn paths_agree() {
        for seed in 0..20 {
            let mut rng = stream_rng(34, seed);
            let z = fm(standard_normal_matrix(&mut rng, 15, 5));
            let h_t = hm(standard_normal_matrix(&mut rng, 5, 8));
            let h_p = hm(standard_normal_matrix(&mut rng, 5, 8));
            let w = OrthogonalAlignment::explicit(random_orthogonal(&mut rng, 5)).unwrap();
            let a = gamma(&z, &h_t, &h_p, &w, GammaPath::Matmul).unwrap();
            let b = gamma(&z, &h_t, &h_p, &w, GammaPath::Eigen).unwrap();
            assert!((a - b).abs() <= 1e-8 * a.abs().max(b.abs()));
        }
    }

    #[test]
    fn shape_errors() {
        let z = fm(DMatrix::zeros(3, 4));
        let h4 = hm(DMatrix::zeros(4, 5));
        let h3 = hm(DMatrix::zeros(3, 5));
        let h4v = hm(DMatrix::zeros(4, 6));
        let id = OrthogonalAlignment::identity();
        assert!(matches!(
            gamma(&z, &h3, &h3, &id, GammaPath::Matmul),
            Err(PrismError::ShapeMismatch { .. })
        ));
        assert!(matches!(
            gamma(&z, &h4, &h4v, &id, GammaPath::Matmul),
            Err(PrismError::ShapeMismatch { .. })
        ));
    }

    #[test]
    fn corrupted_covariance_rejected() {
        let c = Covariance {
            values: DMatrix::from_diagonal(&nalgebra::DVector::from_vec(vec![1.0, -0.5])),
            n_source: 1,
        };
        assert!(matches!(c.sqrt(), Err(PrismError::NegativeEigenvalue { .. })));
        let c = Covariance {
            values: DMatrix::from_diagonal(&nalgebra::DVector::from_vec(vec![1.0, -1e-12])),
            n_source: 1,
        };
        let root = c.sqrt().unwrap();
        assert_eq!(root[(1, 1)], 0.0);
    }
}
