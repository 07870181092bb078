//! Log marginal likelihood of the zero-mean GP and its gradient in log-parameters.

use nalgebra::{DMatrix, DVector};

use crate::error::{check_dim, Result};
use crate::mathcore::{chol_factor, correlation_matrix, dot, CholFactor, KernelParams};

/// How the signal variance enters the objective.
#[derive(Debug, Clone, Copy, PartialEq)]
pub(crate) enum Variance {
    /// Replaced by its closed-form maximizer `y^T R^{-1} y / n`.
    Profiled,
    Fixed(f64),
}

#[derive(Debug, Clone, PartialEq)]
pub struct LikelihoodTerms {
    pub value: f64,
    /// Ordered as `[log gamma_1, ..., log gamma_d, log sigma^2, log eta]`.
    pub gradient: Vec<f64>,
}

pub(crate) struct Evaluated {
    pub value: f64,
    pub grad_lengthscales: Vec<f64>,
    pub grad_log_variance: f64,
    pub grad_log_nugget: f64,
    /// Variance actually used (the profiled maximizer when profiling).
    pub variance: f64,
}

pub(crate) fn evaluate(
    x: &DMatrix<f64>,
    y: &[f64],
    lengthscales: &[f64],
    nugget: f64,
    variance: Variance,
) -> Result<Evaluated> {
    let n = x.nrows();
    let d = x.ncols();
    let unit = KernelParams::new(lengthscales.to_vec(), 1.0, nugget)?;
    let r = correlation_matrix(&unit, x)?;
    let chol = chol_factor(&r)?;
    let alpha = chol.solve(y);
    let q = dot(y, &alpha).max(f64::MIN_POSITIVE);
    let nf = n as f64;
    let ln2pi = (2.0 * std::f64::consts::PI).ln();
    let (s2, value) = match variance {
        Variance::Profiled => {
            let s2 = q / nf;
            (s2, -0.5 * nf - 0.5 * chol.log_det() - 0.5 * nf * (ln2pi + s2.ln()))
        }
        Variance::Fixed(s2) => (s2, -0.5 * q / s2 - 0.5 * chol.log_det() - 0.5 * nf * (ln2pi + s2.ln())),
    };
    let rinv = chol.inverse();
    // W = alpha alpha^T / s2 - R^{-1}; dl/dtheta = 0.5 tr(W dR/dtheta)
    let mut grad_ls = vec![0.0; d];
    let mut trace_w = 0.0;
    for i in 0..n {
        trace_w += alpha[i] * alpha[i] / s2 - rinv[(i, i)];
        for j in 0..i {
            let w = alpha[i] * alpha[j] / s2 - rinv[(i, j)];
            let rij = r[(i, j)];
            if rij == 0.0 {
                continue;
            }
            for k in 0..d {
                let del = (x[(i, k)] - x[(j, k)]) / lengthscales[k];
                // both (i, j) and (j, i) contribute, cancelling the 0.5
                grad_ls[k] += w * rij * 2.0 * del * del;
            }
        }
    }
    Ok(Evaluated {
        value,
        grad_lengthscales: grad_ls,
        grad_log_variance: 0.5 * q / s2 - 0.5 * nf,
        grad_log_nugget: 0.5 * nugget * trace_w,
        variance: s2,
    })
}

/// `log N(y | 0, sigma^2 C)` given the Cholesky factor of `C`.
pub(crate) fn gaussian_log_density(chol: &CholFactor, y: &[f64], variance: f64) -> f64 {
    let n = y.len() as f64;
    -0.5 * chol.quad_form(y) / variance - 0.5 * chol.log_det() - 0.5 * n * (2.0 * std::f64::consts::PI * variance).ln()
}

/// `log N(y | 0, sigma^2 R(X))` at the given parameters.
pub fn log_marginal_likelihood(x: &DMatrix<f64>, y: &DVector<f64>, params: &KernelParams) -> Result<f64> {
    Ok(log_marginal_likelihood_grad(x, y, params)?.value)
}

/// Log marginal likelihood and its gradient with respect to all log-parameters.
pub fn log_marginal_likelihood_grad(
    x: &DMatrix<f64>,
    y: &DVector<f64>,
    params: &KernelParams,
) -> Result<LikelihoodTerms> {
    check_dim(x.nrows(), y.len())?;
    check_dim(params.dim(), x.ncols())?;
    let e = evaluate(
        x,
        y.as_slice(),
        params.lengthscales(),
        params.nugget(),
        Variance::Fixed(params.signal_variance()),
    )?;
    let mut gradient = e.grad_lengthscales;
    gradient.push(e.grad_log_variance);
    gradient.push(e.grad_log_nugget);
    Ok(LikelihoodTerms {
        value: e.value,
        gradient,
    })
}
