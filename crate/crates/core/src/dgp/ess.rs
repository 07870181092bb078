use std::f64::consts::PI;

use rand::Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};
use crate::mathcore::CholFactor;

/// Shrinkage steps after which the current state is returned unchanged.
const MAX_SHRINKS: usize = 200;

/// One elliptical slice sampling move for a `N(0, L L^T)` prior, where
/// `prior_chol` holds `L`.
pub fn ess_update<R, F>(w_current: &[f64], prior_chol: &CholFactor, mut loglik: F, rng: &mut R) -> Result<Vec<f64>>
where
    R: Rng + ?Sized,
    F: FnMut(&[f64]) -> f64,
{
    let n = w_current.len();
    if prior_chol.dim() != n {
        return Err(Error::DimensionMismatch {
            expected: prior_chol.dim(),
            got: n,
        });
    }
    let current = loglik(w_current);
    if current.is_nan() {
        return Err(Error::Sampler(format!("log-likelihood is NaN at {w_current:?}")));
    }
    let z: Vec<f64> = (0..n).map(|_| rng.sample(StandardNormal)).collect();
    let nu: Vec<f64> = (0..n).map(|i| (0..=i).map(|j| prior_chol.l(i, j) * z[j]).sum()).collect();
    let threshold = current + rng.gen::<f64>().ln();
    let mut theta = rng.gen_range(0.0..2.0 * PI);
    let (mut lo, mut hi) = (theta - 2.0 * PI, theta);
    let mut proposal = vec![0.0; n];
    for _ in 0..MAX_SHRINKS {
        let (s, c) = theta.sin_cos();
        for i in 0..n {
            proposal[i] = w_current[i] * c + nu[i] * s;
        }
        let l = loglik(&proposal);
        if l.is_nan() {
            return Err(Error::Sampler(format!("log-likelihood is NaN at {proposal:?}")));
        }
        if l > threshold {
            return Ok(proposal);
        }
        if theta < 0.0 {
            lo = theta;
        } else {
            hi = theta;
        }
        theta = rng.gen_range(lo..hi);
    }
    log::warn!("elliptical slice sampler hit {MAX_SHRINKS} shrinks; keeping current state");
    Ok(w_current.to_vec())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mathcore::chol_factor;
    use nalgebra::DMatrix;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    /// Standard error of a chain average by non-overlapping batch means.
    fn batch_se(v: &[f64]) -> f64 {
        let b = 50;
        let size = v.len() / b;
        let means: Vec<f64> = (0..b).map(|k| v[k * size..(k + 1) * size].iter().sum::<f64>() / size as f64).collect();
        let m = means.iter().sum::<f64>() / b as f64;
        (means.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (b - 1) as f64 / b as f64).sqrt()
    }

    #[test]
    fn conjugate_posterior() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let chol = chol_factor(&DMatrix::identity(2, 2)).unwrap();
        let b = [1.5, -0.5];
        let tau2 = 0.5;
        let ll = |w: &[f64]| -0.5 * w.iter().zip(&b).map(|(x, y)| (x - y).powi(2)).sum::<f64>() / tau2;
        let mut w = vec![0.0, 0.0];
        for _ in 0..1000 {
            w = ess_update(&w, &chol, ll, &mut rng).unwrap();
        }
        let mut draws = vec![Vec::new(), Vec::new()];
        for _ in 0..20_000 {
            w = ess_update(&w, &chol, ll, &mut rng).unwrap();
            draws[0].push(w[0]);
            draws[1].push(w[1]);
        }
        for k in 0..2 {
            let post_mean = b[k] / (1.0 + tau2);
            let post_var = tau2 / (1.0 + tau2);
            let m = draws[k].iter().sum::<f64>() / draws[k].len() as f64;
            assert!((m - post_mean).abs() < 3.0 * batch_se(&draws[k]));
            let sq: Vec<f64> = draws[k].iter().map(|x| (x - post_mean).powi(2)).collect();
            let v = sq.iter().sum::<f64>() / sq.len() as f64;
            assert!((v - post_var).abs() < 3.0 * batch_se(&sq), "{v} vs {post_var}");
        }
    }

    #[test]
    fn always_moves_and_rejects_nan() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let chol = chol_factor(&DMatrix::identity(3, 3)).unwrap();
        let w = vec![0.1, 0.2, 0.3];
        let next = ess_update(&w, &chol, |_| 0.0, &mut rng).unwrap();
        assert_ne!(next, w);
        assert!(matches!(ess_update(&w, &chol, |_| f64::NAN, &mut rng), Err(Error::Sampler(_))));
    }
}
