//! Validated matrix newtypes shared by every module.

use nalgebra::DMatrix;

use crate::error::{PrismError, Result};

fn check_finite(m: &DMatrix<f64>, what: &'static str) -> Result<()> {
    // nalgebra storage is column-major
    for (idx, v) in m.iter().enumerate() {
        if !v.is_finite() {
            let rows = m.nrows().max(1);
            return Err(PrismError::NonFinite {
                what,
                row: idx % rows,
                col: idx / rows,
            });
        }
    }
    Ok(())
}

/// An n×d matrix of backbone features, one row per (sample, position).
///
/// Entries are finite and `d > 0`. `n = 0` is representable so that empty
/// sequences can be passed to [`crate::bound::ar_stack`]; every geometric
/// operation rejects it.
#[derive(Clone, Debug, PartialEq)]
pub struct FeatureMatrix(DMatrix<f64>);

impl FeatureMatrix {
    pub fn new(values: DMatrix<f64>) -> Result<Self> {
        if values.ncols() == 0 {
            return Err(PrismError::EmptyColumns("feature matrix"));
        }
        check_finite(&values, "feature matrix")?;
        Ok(Self(values))
    }

    pub fn from_row_slice(n: usize, d: usize, data: &[f64]) -> Result<Self> {
        if data.len() != n * d {
            return Err(PrismError::LengthMismatch {
                left: "n*d",
                left_len: n * d,
                right: "data",
                right_len: data.len(),
            });
        }
        Self::new(DMatrix::from_row_slice(n, d, data))
    }

    pub fn n(&self) -> usize {
        self.0.nrows()
    }

    pub fn d(&self) -> usize {
        self.0.ncols()
    }

    pub fn shape(&self) -> (usize, usize) {
        self.0.shape()
    }

    pub fn values(&self) -> &DMatrix<f64> {
        &self.0
    }

    pub fn into_inner(self) -> DMatrix<f64> {
        self.0
    }

    pub(crate) fn require_rows(&self, what: &'static str) -> Result<()> {
        if self.n() == 0 {
            Err(PrismError::EmptyRows(what))
        } else {
            Ok(())
        }
    }
}

/// A d×V linear prediction head; column j embeds vocabulary token j.
#[derive(Clone, Debug, PartialEq)]
pub struct HeadMatrix(DMatrix<f64>);

impl HeadMatrix {
    pub fn new(values: DMatrix<f64>) -> Result<Self> {
        if values.ncols() == 0 {
            return Err(PrismError::EmptyColumns("head matrix"));
        }
        if values.nrows() == 0 {
            return Err(PrismError::EmptyRows("head matrix"));
        }
        check_finite(&values, "head matrix")?;
        Ok(Self(values))
    }

    pub fn from_row_slice(d: usize, vocab: usize, data: &[f64]) -> Result<Self> {
        if data.len() != d * vocab {
            return Err(PrismError::LengthMismatch {
                left: "d*V",
                left_len: d * vocab,
                right: "data",
                right_len: data.len(),
            });
        }
        Self::new(DMatrix::from_row_slice(d, vocab, data))
    }

    pub fn d(&self) -> usize {
        self.0.nrows()
    }

    pub fn vocab(&self) -> usize {
        self.0.ncols()
    }

    pub fn shape(&self) -> (usize, usize) {
        self.0.shape()
    }

    pub fn values(&self) -> &DMatrix<f64> {
        &self.0
    }

    pub fn into_inner(self) -> DMatrix<f64> {
        self.0
    }
}

pub(crate) fn same_shape(
    left: &'static str,
    a: (usize, usize),
    right: &'static str,
    b: (usize, usize),
) -> Result<()> {
    if a == b {
        Ok(())
    } else {
        Err(PrismError::ShapeMismatch {
            left,
            left_shape: a,
            right,
            right_shape: b,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rejects_non_finite() {
        let m = DMatrix::from_row_slice(2, 2, &[1.0, 2.0, f64::NAN, 4.0]);
        match FeatureMatrix::new(m) {
            Err(PrismError::NonFinite { row, col, .. }) => assert_eq!((row, col), (1, 0)),
            other => panic!("unexpected {other:?}"),
        }
        let h = DMatrix::from_row_slice(1, 2, &[1.0, f64::INFINITY]);
        assert!(matches!(
            HeadMatrix::new(h),
            Err(PrismError::NonFinite { .. })
        ));
    }

    #[test]
    fn shape_rules() {
        assert!(FeatureMatrix::new(DMatrix::zeros(0, 3)).is_ok());
        assert!(FeatureMatrix::new(DMatrix::zeros(3, 0)).is_err());
        assert!(HeadMatrix::new(DMatrix::zeros(3, 0)).is_err());
        assert!(HeadMatrix::new(DMatrix::zeros(2, 1)).is_ok());
    }
}
