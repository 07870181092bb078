//! Distribution of the emulator gradient norm: noncentral chi CDF,
//! exceedance probabilities, and moments of the squared norm.

use std::sync::atomic::{AtomicU64, Ordering};

use serde::{Deserialize, Serialize};
use statrs::function::gamma::{gamma_lr, ln_gamma};

use crate::error::{Error, Result};
use crate::gp::GradientPosterior;

pub const SERIES_TAIL: f64 = 1e-12;
pub const SERIES_MAX_TERMS: usize = 10_000;
pub const SIGMA_FLOOR: f64 = 1e-10;
/// Above this noncentrality the CDF uses a normal approximation instead of the series.
pub const LARGE_NONCENTRALITY: f64 = 150.0;

static CAP_HITS: AtomicU64 = AtomicU64::new(0);

/// Number of CDF evaluations that exhausted the series term budget.
pub fn series_cap_hits() -> u64 {
    CAP_HITS.load(Ordering::Relaxed)
}

fn central_chi2_cdf(x: f64, dof: f64) -> f64 {
    if x <= 0.0 {
        0.0
    } else if x.is_infinite() {
        1.0
    } else {
        gamma_lr(0.5 * dof, 0.5 * x)
    }
}

fn poisson_weight(j: usize, mean: f64) -> f64 {
    let jf = j as f64;
    (-mean + jf * mean.ln() - ln_gamma(jf + 1.0)).exp()
}

/// `P(Y <= y)` for `Y` noncentral chi with `k` degrees of freedom and
/// noncentrality `lambda`, via the Poisson mixture of central chi-square CDFs
/// evaluated at `y^2`, summed outward from the Poisson mode.
pub fn noncentral_chi_cdf(y: f64, k: usize, lambda: f64) -> f64 {
    if !(y > 0.0) {
        return 0.0;
    }
    if y.is_infinite() {
        return 1.0;
    }
    let kf = k as f64;
    if lambda.is_infinite() {
        return 0.0;
    }
    if lambda > LARGE_NONCENTRALITY {
        // |lambda e1 + Z| ~ lambda + Z1 + (k-1)/(2 lambda) to first order
        let m = lambda + 0.5 * (kf - 1.0) / lambda;
        return 0.5 * libm::erfc(-(y - m) / std::f64::consts::SQRT_2);
    }
    let x = y * y;
    if lambda == 0.0 {
        return central_chi2_cdf(x, kf);
    }
    let mean = 0.5 * lambda * lambda;
    let mode = mean.floor() as usize;
    let term = |j: usize| central_chi2_cdf(x, kf + 2.0 * j as f64);
    let w0 = poisson_weight(mode, mean);
    let mut mass = w0;
    let mut sum = w0 * term(mode);
    let (mut lo, mut hi) = (mode, mode);
    let (mut w_lo, mut w_hi) = (w0, w0);
    let mut terms = 1;
    while 1.0 - mass >= SERIES_TAIL {
        if terms >= SERIES_MAX_TERMS {
            if CAP_HITS.fetch_add(1, Ordering::Relaxed) == 0 {
                log::warn!(
                    "noncentral chi series hit {SERIES_MAX_TERMS} terms (lambda = {lambda}); renormalizing"
                );
            }
            return (sum / mass).clamp(0.0, 1.0);
        }
        // weights decay monotonically away from the mode: take the larger side
        let next_lo = if lo > 0 { w_lo * lo as f64 / mean } else { 0.0 };
        let next_hi = w_hi * mean / (hi + 1) as f64;
        if next_lo == 0.0 && next_hi == 0.0 {
            break;
        }
        if lo > 0 && next_lo >= next_hi {
            lo -= 1;
            w_lo = next_lo;
            mass += w_lo;
            sum += w_lo * term(lo);
        } else {
            hi += 1;
            w_hi = next_hi;
            mass += w_hi;
            sum += w_hi * term(hi);
        }
        terms += 1;
    }
    sum.clamp(0.0, 1.0)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GradNormDist {
    pub dof: usize,
    pub noncentrality: f64,
    pub norm_scale: f64,
    pub mean: Vec<f64>,
    /// Per-dimension standard deviations after flooring.
    pub sd: Vec<f64>,
}

/// Builds the norm distribution from the diagonal of the gradient covariance.
pub fn make_dist(grad: &GradientPosterior) -> Result<GradNormDist> {
    let d = grad.dim();
    if d == 0 {
        return Err(Error::invalid("empty gradient"));
    }
    let mut sd = Vec::with_capacity(d);
    for i in 0..d {
        let v = grad.cov[(i, i)];
        if v < 0.0 || v.is_nan() {
            return Err(Error::invalid(format!("negative gradient variance {v} in dimension {i}")));
        }
        sd.push(v.sqrt().max(SIGMA_FLOOR));
    }
    let mean: Vec<f64> = grad.mean.iter().copied().collect();
    let noncentrality = mean.iter().zip(&sd).map(|(m, s)| (m / s).powi(2)).sum::<f64>().sqrt();
    let norm_scale = sd.iter().map(|s| s * s).sum::<f64>().sqrt();
    Ok(GradNormDist {
        dof: d,
        noncentrality,
        norm_scale,
        mean,
        sd,
    })
}

/// `1 - F_chi(l / S; d, lambda)`.
pub fn exceedance_prob(dist: &GradNormDist, l: f64) -> Result<f64> {
    exceedance_prob_with(dist, l, NormScale::Sum)
}

/// How the threshold is normalized before entering the chi CDF.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum NormScale {
    /// `S = sqrt(sum sigma_i^2)`.
    #[default]
    Sum,
    /// `S = sqrt(sum sigma_i^2 / d)`; exact when all sigma_i are equal.
    Rms,
}

impl NormScale {
    pub fn scale(self, dist: &GradNormDist) -> f64 {
        match self {
            NormScale::Sum => dist.norm_scale,
            NormScale::Rms => dist.norm_scale / (dist.dof as f64).sqrt(),
        }
    }
}

pub fn exceedance_prob_with(dist: &GradNormDist, l: f64, scale: NormScale) -> Result<f64> {
    if !(l >= 0.0) {
        return Err(Error::invalid(format!("threshold must be nonnegative, got {l}")));
    }
    Ok(1.0 - noncentral_chi_cdf(l / scale.scale(dist), dist.dof, dist.noncentrality))
}

/// Mean and variance of the squared gradient norm under the full covariance.
pub fn gradnorm_sq_moments(grad: &GradientPosterior) -> (f64, f64) {
    let d = grad.dim();
    let mu = &grad.mean;
    let s = &grad.cov;
    let mean: f64 = (0..d).map(|i| mu[i] * mu[i] + s[(i, i)]).sum();
    let quad = (mu.transpose() * s * mu)[(0, 0)];
    let tr_sq: f64 = (0..d).flat_map(|i| (0..d).map(move |j| (i, j))).map(|(i, j)| s[(i, j)] * s[(j, i)]).sum();
    (mean, 4.0 * quad + 2.0 * tr_sq)
}
