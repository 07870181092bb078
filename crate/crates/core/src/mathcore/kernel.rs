//! Product squared-exponential kernel, `k(x, x') = prod_d exp(-(x_d - x'_d)^2 / gamma_d^2)`.
//!
//! The signal variance scales covariances, never the correlation values
//! returned here. The nugget only enters on the diagonal of a correlation
//! matrix (`same_point`).

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{check_dim, Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KernelParams {
    lengthscales: Vec<f64>,
    signal_variance: f64,
    nugget: f64,
}

impl KernelParams {
    pub fn new(lengthscales: Vec<f64>, signal_variance: f64, nugget: f64) -> Result<Self> {
        if lengthscales.is_empty() {
            return Err(Error::invalid("at least one lengthscale is required"));
        }
        if let Some(bad) = lengthscales.iter().find(|g| !(g.is_finite() && **g > 0.0)) {
            return Err(Error::invalid(format!("lengthscale must be positive, got {bad}")));
        }
        if !(signal_variance.is_finite() && signal_variance > 0.0) {
            return Err(Error::invalid(format!(
                "signal variance must be positive, got {signal_variance}"
            )));
        }
        if !(nugget.is_finite() && nugget >= 0.0) {
            return Err(Error::invalid(format!("nugget must be nonnegative, got {nugget}")));
        }
        Ok(Self {
            lengthscales,
            signal_variance,
            nugget,
        })
    }

    /// Unit variance, zero nugget.
    pub fn isotropic(dim: usize, lengthscale: f64) -> Result<Self> {
        Self::new(vec![lengthscale; dim], 1.0, 0.0)
    }

    pub fn dim(&self) -> usize {
        self.lengthscales.len()
    }

    pub fn lengthscales(&self) -> &[f64] {
        &self.lengthscales
    }

    pub fn signal_variance(&self) -> f64 {
        self.signal_variance
    }

    pub fn nugget(&self) -> f64 {
        self.nugget
    }

    pub fn with_signal_variance(mut self, v: f64) -> Result<Self> {
        if !(v.is_finite() && v > 0.0) {
            return Err(Error::invalid(format!("signal variance must be positive, got {v}")));
        }
        self.signal_variance = v;
        Ok(self)
    }

    pub fn with_nugget(mut self, eta: f64) -> Result<Self> {
        if !(eta.is_finite() && eta >= 0.0) {
            return Err(Error::invalid(format!("nugget must be nonnegative, got {eta}")));
        }
        self.nugget = eta;
        Ok(self)
    }

    /// Correlation between two points without the nugget; no dimension checks.
    #[inline]
    pub(crate) fn corr(&self, x: &[f64], xp: &[f64]) -> f64 {
        let mut s = 0.0;
        for ((a, b), g) in x.iter().zip(xp).zip(&self.lengthscales) {
            let r = (a - b) / g;
            s += r * r;
        }
        (-s).exp()
    }

    #[inline]
    pub(crate) fn corr_row(&self, x: &DMatrix<f64>, i: usize, xp: &[f64]) -> f64 {
        let mut s = 0.0;
        for (k, g) in self.lengthscales.iter().enumerate() {
            let r = (x[(i, k)] - xp[k]) / g;
            s += r * r;
        }
        (-s).exp()
    }
}

pub fn kernel_eval(params: &KernelParams, x: &[f64], xp: &[f64], same_point: bool) -> Result<f64> {
    check_dim(params.dim(), x.len())?;
    check_dim(params.dim(), xp.len())?;
    let k = params.corr(x, xp);
    Ok(if same_point { k + params.nugget } else { k })
}

/// Partial derivatives of `k(x_star, x)` with respect to each coordinate of `x_star`.
pub fn kernel_grad(params: &KernelParams, x_star: &[f64], x: &[f64]) -> Result<Vec<f64>> {
    check_dim(params.dim(), x_star.len())?;
    check_dim(params.dim(), x.len())?;
    let k = params.corr(x_star, x);
    Ok(x_star
        .iter()
        .zip(x)
        .zip(params.lengthscales())
        .map(|((a, b), g)| -2.0 * (a - b) / (g * g) * k)
        .collect())
}

/// Diagonal of the Hessian of `k(x*, x*)` in `x*` at zero displacement.
///
/// The sign follows the convention used for the gradient covariance,
/// `H = d/dx* d/dx' k(x*, x')` at `x' = x*`, which is positive.
pub fn kernel_hessian_diag(params: &KernelParams) -> Vec<f64> {
    params
        .lengthscales()
        .iter()
        .map(|g| 2.0 / (g * g))
        .collect()
}

/// `R(X)_ij = k(x_i, x_j) + eta * 1{i = j}` for the rows of `x`.
pub fn correlation_matrix(params: &KernelParams, x: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    check_dim(params.dim(), x.ncols())?;
    let n = x.nrows();
    let mut r = DMatrix::zeros(n, n);
    let rows: Vec<Vec<f64>> = (0..n).map(|i| x.row(i).iter().copied().collect()).collect();
    for i in 0..n {
        r[(i, i)] = 1.0 + params.nugget;
        for j in 0..i {
            let k = params.corr(&rows[i], &rows[j]);
            r[(i, j)] = k;
            r[(j, i)] = k;
        }
    }
    Ok(r)
}

/// Kernel vector `r(x*) = [k(x_1, x*), ..., k(x_n, x*)]`.
pub(crate) fn cross_corr(params: &KernelParams, x: &DMatrix<f64>, x_star: &[f64]) -> Vec<f64> {
    (0..x.nrows()).map(|i| params.corr_row(x, i, x_star)).collect()
}
