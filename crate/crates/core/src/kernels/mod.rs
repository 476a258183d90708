//! Shared numerical machinery used by every model family.

mod adam;
mod cholesky;
mod fdiff;
mod lstsq;

pub use adam::{adam_step, AdamState};
pub use cholesky::{cholesky_logdet_solve, factor_with_jitter, Cholesky};
pub use fdiff::{finite_diff_grad, relative_gradient_error};
pub use lstsq::{numerical_rank, solve_least_squares_qr};

/// Spectral radius of a square matrix.
pub fn spectral_radius(a: &nalgebra::DMatrix<f64>) -> f64 {
    if a.nrows() == 0 {
        return 0.0;
    }
    a.complex_eigenvalues().iter().map(|z| z.norm()).fold(0.0, f64::max)
}

/// Mixes a base seed with integer tags (splitmix64), so every restart of
/// every candidate gets an independent, reproducible stream.
pub fn derive_seed(base: u64, tags: &[u64]) -> u64 {
    let mut z = base;
    for &t in tags {
        z = z.wrapping_add(t.wrapping_add(1).wrapping_mul(0x9E37_79B9_7F4A_7C15));
        z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
        z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
        z ^= z >> 31;
    }
    z
}
