//! Feature-side geometry: RMS scale, the trace/nuclear/Frobenius similarity
//! family, linear CKA, Procrustes alignment and the exact scale-shape
//! decomposition of the alignment residual.
//!
//! Zero-norm convention for the trace similarity: if exactly one of the two
//! feature matrices is zero, Ω = 0 (the shape term still vanishes because
//! ρ_T·ρ_P = 0); if both are zero, Ω = 1. This keeps the residual identity
//! exact on degenerate inputs.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{PrismError, Result};
use crate::matrix::{same_shape, FeatureMatrix};

/// Orthogonality tolerance on `max |WᵀW − I|`.
pub const ORTHOGONALITY_TOL: f64 = 1e-8;

const SVD_EPS: f64 = 1e-15;
const SVD_MAX_ITER: usize = 10_000;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AlignmentKind {
    Identity,
    Procrustes,
    Explicit,
}

impl AlignmentKind {
    pub fn as_str(self) -> &'static str {
        match self {
            AlignmentKind::Identity => "identity",
            AlignmentKind::Procrustes => "procrustes",
            AlignmentKind::Explicit => "explicit",
        }
    }
}

/// Which alignment to derive for a pair of feature matrices.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AlignmentMode {
    Identity,
    Procrustes,
}

impl AlignmentMode {
    pub const ALL: [AlignmentMode; 2] = [AlignmentMode::Identity, AlignmentMode::Procrustes];

    pub fn resolve(self, z_t: &FeatureMatrix, z_p: &FeatureMatrix) -> Result<OrthogonalAlignment> {
        match self {
            AlignmentMode::Identity => Ok(OrthogonalAlignment::identity()),
            AlignmentMode::Procrustes => procrustes_align(z_t, z_p),
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            AlignmentMode::Identity => "identity",
            AlignmentMode::Procrustes => "procrustes",
        }
    }
}

/// An orthogonal map applied on the proxy side, `Z_P · W`.
#[derive(Clone, Debug, PartialEq)]
pub struct OrthogonalAlignment {
    kind: AlignmentKind,
    matrix: Option<DMatrix<f64>>,
}

impl OrthogonalAlignment {
    pub fn identity() -> Self {
        Self {
            kind: AlignmentKind::Identity,
            matrix: None,
        }
    }

    /// A caller-supplied orthogonal matrix.
    pub fn explicit(w: DMatrix<f64>) -> Result<Self> {
        check_orthogonal(&w)?;
        Ok(Self {
            kind: AlignmentKind::Explicit,
            matrix: Some(w),
        })
    }

    pub fn kind(&self) -> AlignmentKind {
        self.kind
    }

    pub fn matrix(&self) -> Option<&DMatrix<f64>> {
        self.matrix.as_ref()
    }

    /// `W` as a dense d×d matrix.
    pub fn to_dense(&self, d: usize) -> DMatrix<f64> {
        match &self.matrix {
            Some(w) => w.clone(),
            None => DMatrix::identity(d, d),
        }
    }

    pub(crate) fn check_dim(&self, d: usize) -> Result<()> {
        match &self.matrix {
            Some(w) => same_shape("alignment", w.shape(), "d x d", (d, d)),
            None => Ok(()),
        }
    }

    /// `Z · W`, without a multiply for the identity.
    pub(crate) fn apply_right(&self, z: &DMatrix<f64>) -> DMatrix<f64> {
        match &self.matrix {
            Some(w) => z * w,
            None => z.clone(),
        }
    }

    /// `W · H`, without a multiply for the identity.
    pub(crate) fn apply_left(&self, h: &DMatrix<f64>) -> DMatrix<f64> {
        match &self.matrix {
            Some(w) => w * h,
            None => h.clone(),
        }
    }
}

fn check_orthogonal(w: &DMatrix<f64>) -> Result<()> {
    if !w.is_square() {
        return Err(PrismError::invalid(
            "alignment",
            format!("expected a square matrix, found {:?}", w.shape()),
        ));
    }
    let dev = orthogonality_defect(w);
    if dev.is_finite() && dev <= ORTHOGONALITY_TOL {
        Ok(())
    } else {
        Err(PrismError::NotOrthogonal(dev))
    }
}

/// `max |WᵀW − I|`.
pub fn orthogonality_defect(w: &DMatrix<f64>) -> f64 {
    let d = w.ncols();
    let g = w.transpose() * w - DMatrix::<f64>::identity(d, d);
    g.amax()
}

pub fn frobenius_norm(m: &DMatrix<f64>) -> f64 {
    m.norm()
}

/// `‖Z‖_F / √n`.
pub fn rms_scale(z: &FeatureMatrix) -> Result<f64> {
    z.require_rows("feature matrix")?;
    Ok(z.values().norm() / (z.n() as f64).sqrt())
}

fn check_pair(z_t: &FeatureMatrix, z_p: &FeatureMatrix) -> Result<()> {
    same_shape("Z_T", z_t.shape(), "Z_P", z_p.shape())?;
    z_t.require_rows("Z_T")
}

fn normalized_or_convention(inner: f64, norm_t: f64, norm_p: f64) -> f64 {
    match (norm_t == 0.0, norm_p == 0.0) {
        (true, true) => 1.0,
        (true, false) | (false, true) => 0.0,
        (false, false) => (inner / (norm_t * norm_p)).clamp(-1.0, 1.0),
    }
}

/// Trace similarity at the identity alignment, `Tr(Z_Tᵀ Z_P) / (‖Z_T‖ ‖Z_P‖)`.
pub fn omega_trace(z_t: &FeatureMatrix, z_p: &FeatureMatrix) -> Result<f64> {
    check_pair(z_t, z_p)?;
    let inner = z_t.values().dot(z_p.values());
    Ok(normalized_or_convention(
        inner,
        z_t.values().norm(),
        z_p.values().norm(),
    ))
}

/// Trace similarity at an arbitrary orthogonal alignment, `Tr(Z_Tᵀ Z_P W) / (‖Z_T‖ ‖Z_P‖)`.
pub fn omega_aligned(
    z_t: &FeatureMatrix,
    z_p: &FeatureMatrix,
    alignment: &OrthogonalAlignment,
) -> Result<f64> {
    check_pair(z_t, z_p)?;
    alignment.check_dim(z_t.d())?;
    let aligned = alignment.apply_right(z_p.values());
    let inner = z_t.values().dot(&aligned);
    Ok(normalized_or_convention(
        inner,
        z_t.values().norm(),
        z_p.values().norm(),
    ))
}

/// `1 − Ω_W`, computed as `½ ‖Z_T/‖Z_T‖ − Z_P W/‖Z_P‖‖_F²` so that it is
/// exactly zero for identical inputs instead of roundoff-sized.
pub fn shape_gap(
    z_t: &FeatureMatrix,
    z_p: &FeatureMatrix,
    alignment: &OrthogonalAlignment,
) -> Result<f64> {
    check_pair(z_t, z_p)?;
    alignment.check_dim(z_t.d())?;
    let (nt, np) = (z_t.values().norm(), z_p.values().norm());
    if nt == 0.0 || np == 0.0 {
        return Ok(1.0 - normalized_or_convention(0.0, nt, np));
    }
    let aligned = alignment.apply_right(z_p.values());
    let diff = z_t.values() / nt - aligned / np;
    Ok((0.5 * diff.norm_squared()).clamp(0.0, 2.0))
}

fn nonzero_norms(z_t: &FeatureMatrix, z_p: &FeatureMatrix) -> Result<(f64, f64)> {
    check_pair(z_t, z_p)?;
    let nt = z_t.values().norm();
    let np = z_p.values().norm();
    if nt == 0.0 {
        return Err(PrismError::ZeroNorm("Z_T"));
    }
    if np == 0.0 {
        return Err(PrismError::ZeroNorm("Z_P"));
    }
    Ok((nt, np))
}

fn cross_moment(z_t: &FeatureMatrix, z_p: &FeatureMatrix) -> DMatrix<f64> {
    z_t.values().tr_mul(z_p.values())
}

fn singular_values(m: DMatrix<f64>) -> Result<Vec<f64>> {
    let svd = m
        .try_svd(false, false, SVD_EPS, SVD_MAX_ITER)
        .ok_or(PrismError::NoConvergence("SVD"))?;
    Ok(svd.singular_values.iter().copied().collect())
}

/// Nuclear-form similarity: the maximum of the trace similarity over all
/// orthogonal alignments.
pub fn omega_nuclear(z_t: &FeatureMatrix, z_p: &FeatureMatrix) -> Result<f64> {
    let (nt, np) = nonzero_norms(z_t, z_p)?;
    let nuclear: f64 = singular_values(cross_moment(z_t, z_p))?.iter().sum();
    Ok((nuclear / (nt * np)).min(1.0))
}

/// `‖Z_Tᵀ Z_P‖_F / (‖Z_T‖ ‖Z_P‖)`.
pub fn omega_frobenius(z_t: &FeatureMatrix, z_p: &FeatureMatrix) -> Result<f64> {
    let (nt, np) = nonzero_norms(z_t, z_p)?;
    Ok(cross_moment(z_t, z_p).norm() / (nt * np))
}

/// Linear (uncentered) CKA.
pub fn cka(z_t: &FeatureMatrix, z_p: &FeatureMatrix) -> Result<f64> {
    check_pair(z_t, z_p)?;
    let gt = z_t.values().tr_mul(z_t.values()).norm();
    let gp = z_p.values().tr_mul(z_p.values()).norm();
    if gt == 0.0 {
        return Err(PrismError::ZeroNorm("Z_T"));
    }
    if gp == 0.0 {
        return Err(PrismError::ZeroNorm("Z_P"));
    }
    let c = cross_moment(z_t, z_p).norm();
    Ok(c * c / (gt * gp))
}

/// Orthogonal Procrustes: `W_N = V Uᵀ` from `Z_Tᵀ Z_P = U Σ Vᵀ`, the
/// minimizer of `‖Z_T − Z_P W‖_F` over orthogonal `W`.
///
/// With repeated singular values the minimizer is not unique; any one is
/// returned.
pub fn procrustes_align(z_t: &FeatureMatrix, z_p: &FeatureMatrix) -> Result<OrthogonalAlignment> {
    same_shape("Z_T", z_t.shape(), "Z_P", z_p.shape())?;
    let svd = cross_moment(z_t, z_p)
        .try_svd(true, true, SVD_EPS, SVD_MAX_ITER)
        .ok_or(PrismError::NoConvergence("SVD"))?;
    let (u, v_t) = match (svd.u, svd.v_t) {
        (Some(u), Some(v_t)) => (u, v_t),
        _ => return Err(PrismError::NoConvergence("SVD")),
    };
    let w = v_t.transpose() * u.transpose();
    let dev = orthogonality_defect(&w);
    if dev.is_nan() || dev > ORTHOGONALITY_TOL {
        return Err(PrismError::NotOrthogonal(dev));
    }
    Ok(OrthogonalAlignment {
        kind: AlignmentKind::Procrustes,
        matrix: Some(w),
    })
}

/// `(1/n) ‖Z_T − Z_P W‖_F²`, computed directly.
pub fn alignment_residual(
    z_t: &FeatureMatrix,
    z_p: &FeatureMatrix,
    alignment: &OrthogonalAlignment,
) -> Result<f64> {
    check_pair(z_t, z_p)?;
    alignment.check_dim(z_t.d())?;
    let diff = z_t.values() - alignment.apply_right(z_p.values());
    Ok(diff.norm_squared() / z_t.n() as f64)
}

/// Scale/shape split of the alignment residual.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ScaleShapeDecomposition {
    pub rho_t: f64,
    pub rho_p: f64,
    pub omega: f64,
    /// `(ρ_T − ρ_P)²`
    pub scale_term: f64,
    /// `2 ρ_T ρ_P (1 − Ω)`
    pub shape_term: f64,
    /// `(1/n) ‖Z_T − Z_P W‖_F²`, computed directly rather than from the terms.
    pub residual: f64,
    pub alignment: AlignmentKind,
}

impl ScaleShapeDecomposition {
    pub fn zero(alignment: AlignmentKind) -> Self {
        Self {
            rho_t: 0.0,
            rho_p: 0.0,
            omega: 1.0,
            scale_term: 0.0,
            shape_term: 0.0,
            residual: 0.0,
            alignment,
        }
    }

    /// Build from the three reported summary numbers; the residual is
    /// taken from the identity.
    pub fn from_summary(rho_t: f64, rho_p: f64, omega: f64, alignment: AlignmentKind) -> Self {
        let scale_term = (rho_t - rho_p).powi(2);
        let shape_term = 2.0 * rho_t * rho_p * (1.0 - omega);
        Self {
            rho_t,
            rho_p,
            omega,
            scale_term,
            shape_term,
            residual: scale_term + shape_term,
            alignment,
        }
    }

    /// `|residual − (scale + shape)|`.
    pub fn identity_defect(&self) -> f64 {
        (self.residual - (self.scale_term + self.shape_term)).abs()
    }
}

pub fn decompose(
    z_t: &FeatureMatrix,
    z_p: &FeatureMatrix,
    alignment: &OrthogonalAlignment,
) -> Result<ScaleShapeDecomposition> {
    let residual = alignment_residual(z_t, z_p, alignment)?;
    let rho_t = rms_scale(z_t)?;
    let rho_p = rms_scale(z_p)?;
    let omega = omega_aligned(z_t, z_p, alignment)?;
    let gap = shape_gap(z_t, z_p, alignment)?;
    Ok(ScaleShapeDecomposition {
        rho_t,
        rho_p,
        omega,
        scale_term: (rho_t - rho_p).powi(2),
        shape_term: 2.0 * rho_t * rho_p * gap,
        residual,
        alignment: alignment.kind(),
    })
}

/// Feature alignment error `K_feat · √(scale + shape)`.
pub fn feature_delta(decomp: &ScaleShapeDecomposition, k_feat: f64) -> Result<f64> {
    if !k_feat.is_finite() || k_feat < 0.0 {
        return Err(PrismError::invalid("k_feat", format!("must be finite and >= 0, got {k_feat}")));
    }
    let mismatch = (decomp.scale_term + decomp.shape_term).max(0.0);
    Ok(k_feat * mismatch.sqrt())
}
