//! Kernel evaluation, dense factorizations, space-filling designs and scalar
//! probability helpers shared by the emulators.

mod kernel;
mod lhs;
mod linalg;
mod special;

pub use kernel::{correlation_matrix, kernel_eval, kernel_grad, kernel_hessian_diag, KernelParams};
pub(crate) use kernel::cross_corr;
pub use lhs::{
    maximin_lhs, maximin_lhs_with_rng, min_pairwise_distance, random_lhs, random_lhs_with_rng,
    DEFAULT_MAXIMIN_DRAWS,
};
pub use linalg::{chol_factor, chol_solve, CholFactor, CHOL_JITTER};
pub use special::{std_normal_cdf, std_normal_pdf};

pub(crate) fn row(x: &nalgebra::DMatrix<f64>, i: usize) -> Vec<f64> {
    x.row(i).iter().copied().collect()
}

pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}
