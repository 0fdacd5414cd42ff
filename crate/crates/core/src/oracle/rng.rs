//! Seeded random streams.
//!
//! Every random matrix is drawn from its own ChaCha8 stream: the generator is
//! seeded with `ChaCha8Rng::seed_from_u64(seed)` and then switched to a fixed
//! stream id with `set_stream`, so adding a draw to one matrix never shifts
//! another. Matrices are filled in row-major order with standard normals
//! from `rand_distr::StandardNormal`.

use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

/// Stream ids used by instance generation.
pub mod streams {
    pub const TARGET_FEATURES: u64 = 0;
    pub const TARGET_HEAD: u64 = 1;
    pub const LABELS: u64 = 2;
    pub const FEATURE_NOISE: u64 = 3;
    pub const ROTATION: u64 = 4;
    pub const HEAD_NOISE: u64 = 5;
    pub const SIZES: u64 = 6;
}

pub fn stream_rng(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

pub fn standard_normal_matrix<R: Rng + ?Sized>(rng: &mut R, rows: usize, cols: usize) -> DMatrix<f64> {
    let data: Vec<f64> = (0..rows * cols).map(|_| rng.sample(StandardNormal)).collect();
    DMatrix::from_row_slice(rows, cols, &data)
}

/// Orthogonalize a square standard-normal draw by QR and fix signs so that
/// `R` has a positive diagonal.
pub fn random_orthogonal<R: Rng + ?Sized>(rng: &mut R, d: usize) -> DMatrix<f64> {
    let g = standard_normal_matrix(rng, d, d);
    let qr = g.qr();
    let mut q = qr.q();
    let r = qr.r();
    for j in 0..d {
        if r[(j, j)] < 0.0 {
            q.column_mut(j).neg_mut();
        }
    }
    q
}
