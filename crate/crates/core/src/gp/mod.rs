//! Single-layer zero-mean GP conditioned on data: predictive mean/variance and
//! the Gaussian posterior of the gradient.

mod emulator;
mod fit;
mod likelihood;
pub(crate) mod optim;

use std::sync::atomic::{AtomicU64, Ordering};

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

pub use emulator::GpEmulator;
pub use fit::{gp_fit, optional_prior, FitOptions, GammaPrior, ParamBounds};
pub use likelihood::{log_marginal_likelihood, log_marginal_likelihood_grad, LikelihoodTerms};
pub(crate) use fit::fit_params;
pub(crate) use likelihood::gaussian_log_density;

use crate::error::{check_dim, Error, Result};
use crate::mathcore::{chol_factor, correlation_matrix, cross_corr, dot, kernel_hessian_diag, CholFactor, KernelParams};

static CLAMPED_VARIANCES: AtomicU64 = AtomicU64::new(0);

/// Number of predictive variances clamped to zero since process start.
pub fn clamped_variance_count() -> u64 {
    CLAMPED_VARIANCES.load(Ordering::Relaxed)
}

pub(crate) fn clamp_variance(v: f64) -> f64 {
    if v < 0.0 {
        CLAMPED_VARIANCES.fetch_add(1, Ordering::Relaxed);
        log::debug!("clamping negative predictive variance {v:e} to zero");
        0.0
    } else {
        v
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GaussianPrediction {
    pub mean: f64,
    pub variance: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct GradientPosterior {
    pub mean: DVector<f64>,
    pub cov: DMatrix<f64>,
}

impl GradientPosterior {
    pub fn dim(&self) -> usize {
        self.mean.len()
    }
}

/// Everything the linked layers need from one GP at one test location.
#[derive(Debug, Clone)]
pub struct LocalPosterior {
    pub mean: f64,
    pub variance: f64,
    /// d mean / d x*
    pub grad_mean: Vec<f64>,
    /// d variance / d x*
    pub grad_variance: Vec<f64>,
}

/// Trained GP: immutable after construction.
#[derive(Debug, Clone)]
pub struct GpModel {
    x: DMatrix<f64>,
    y: DVector<f64>,
    params: KernelParams,
    chol: CholFactor,
    alpha: Vec<f64>,
}

impl GpModel {
    /// Conditions the GP on `(x, y)` with fixed hyperparameters.
    pub fn new(x: DMatrix<f64>, y: DVector<f64>, params: KernelParams) -> Result<Self> {
        check_dim(x.nrows(), y.len())?;
        check_dim(params.dim(), x.ncols())?;
        if x.nrows() == 0 {
            return Err(Error::invalid("no training points"));
        }
        let r = correlation_matrix(&params, &x)?;
        let chol = chol_factor(&r)?;
        let alpha = chol.solve(y.as_slice());
        Ok(Self {
            x,
            y,
            params,
            chol,
            alpha,
        })
    }

    pub fn x(&self) -> &DMatrix<f64> {
        &self.x
    }

    pub fn y(&self) -> &DVector<f64> {
        &self.y
    }

    pub fn params(&self) -> &KernelParams {
        &self.params
    }

    pub fn chol(&self) -> &CholFactor {
        &self.chol
    }

    /// `R(X)^{-1} y`
    pub fn alpha(&self) -> &[f64] {
        &self.alpha
    }

    pub fn n(&self) -> usize {
        self.x.nrows()
    }

    pub fn dim(&self) -> usize {
        self.x.ncols()
    }

    pub fn log_likelihood(&self) -> f64 {
        let n = self.n() as f64;
        let s2 = self.params.signal_variance();
        let q = dot(self.y.as_slice(), &self.alpha);
        -0.5 * q / s2 - 0.5 * self.chol.log_det() - 0.5 * n * (2.0 * std::f64::consts::PI * s2).ln()
    }

    /// Rows of `grad r(x*)`: entry `(i, k)` is `d k(x*, x_i) / d x*_k`.
    fn grad_r(&self, x_star: &[f64], r: &[f64]) -> DMatrix<f64> {
        let ls = self.params.lengthscales();
        DMatrix::from_fn(self.n(), self.dim(), |i, k| {
            -2.0 * (x_star[k] - self.x[(i, k)]) / (ls[k] * ls[k]) * r[i]
        })
    }

    pub fn predict(&self, x_star: &[f64]) -> Result<GaussianPrediction> {
        check_dim(self.dim(), x_star.len())?;
        let r = cross_corr(&self.params, &self.x, x_star);
        let mean = dot(&r, &self.alpha);
        let q = self.chol.quad_form(&r);
        let s2 = self.params.signal_variance();
        let variance = clamp_variance(s2 * (1.0 + self.params.nugget() - q));
        Ok(GaussianPrediction { mean, variance })
    }

    pub fn gradient(&self, x_star: &[f64]) -> Result<GradientPosterior> {
        check_dim(self.dim(), x_star.len())?;
        let d = self.dim();
        let r = cross_corr(&self.params, &self.x, x_star);
        let gr = self.grad_r(x_star, &r);
        let mean = gr.tr_mul(&DVector::from_column_slice(&self.alpha));
        // L^{-1} grad r, column by column
        let mut z = gr.clone();
        for k in 0..d {
            let mut col: Vec<f64> = z.column(k).iter().copied().collect();
            self.chol.solve_lower_in_place(&mut col);
            z.column_mut(k).copy_from_slice(&col);
        }
        let h = kernel_hessian_diag(&self.params);
        let s2 = self.params.signal_variance();
        let mut cov = z.tr_mul(&z) * -s2;
        for k in 0..d {
            cov[(k, k)] += s2 * h[k];
        }
        for k in 0..d {
            for j in 0..k {
                let v = 0.5 * (cov[(k, j)] + cov[(j, k)]);
                cov[(k, j)] = v;
                cov[(j, k)] = v;
            }
            cov[(k, k)] = clamp_variance(cov[(k, k)]);
        }
        Ok(GradientPosterior { mean, cov })
    }

    /// `grad r(x*)^T R^{-1} y` alone, skipping the covariance solves.
    pub fn gradient_mean(&self, x_star: &[f64]) -> Result<Vec<f64>> {
        check_dim(self.dim(), x_star.len())?;
        let ls = self.params.lengthscales();
        let r = cross_corr(&self.params, &self.x, x_star);
        let mut g = vec![0.0; self.dim()];
        for i in 0..self.n() {
            let w = r[i] * self.alpha[i];
            for (k, gk) in g.iter_mut().enumerate() {
                *gk += -2.0 * (x_star[k] - self.x[(i, k)]) / (ls[k] * ls[k]) * w;
            }
        }
        Ok(g)
    }

    /// Derivative of the predictive variance, `-2 sigma^2 (d r / d x*)^T R^{-1} r`.
    pub fn dsigma2_dx(&self, x_star: &[f64]) -> Result<Vec<f64>> {
        Ok(self.local(x_star)?.grad_variance)
    }

    /// Mean, variance and their first derivatives in one pass.
    pub fn local(&self, x_star: &[f64]) -> Result<LocalPosterior> {
        check_dim(self.dim(), x_star.len())?;
        let ls = self.params.lengthscales();
        let r = cross_corr(&self.params, &self.x, x_star);
        let rinv_r = self.chol.solve(&r);
        let mean = dot(&r, &self.alpha);
        let s2 = self.params.signal_variance();
        let variance = clamp_variance(s2 * (1.0 + self.params.nugget() - dot(&r, &rinv_r)));
        let d = self.dim();
        let mut grad_mean = vec![0.0; d];
        let mut grad_variance = vec![0.0; d];
        for i in 0..self.n() {
            for k in 0..d {
                let gik = -2.0 * (x_star[k] - self.x[(i, k)]) / (ls[k] * ls[k]) * r[i];
                grad_mean[k] += gik * self.alpha[i];
                grad_variance[k] += gik * rinv_r[i];
            }
        }
        grad_variance.iter_mut().for_each(|v| *v *= -2.0 * s2);
        Ok(LocalPosterior {
            mean,
            variance,
            grad_mean,
            grad_variance,
        })
    }
}
