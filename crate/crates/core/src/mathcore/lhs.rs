//! Latin hypercube designs, with a pick-best-of-K maximin variant.

use nalgebra::DMatrix;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};

pub const DEFAULT_MAXIMIN_DRAWS: usize = 50;

fn check_bounds(n: usize, bounds: &[(f64, f64)]) -> Result<()> {
    if n < 1 {
        return Err(Error::invalid("design size must be at least 1"));
    }
    if bounds.is_empty() {
        return Err(Error::invalid("at least one dimension is required"));
    }
    for (k, (lo, hi)) in bounds.iter().enumerate() {
        if !(lo.is_finite() && hi.is_finite() && lo < hi) {
            return Err(Error::invalid(format!("degenerate bounds in dimension {k}: [{lo}, {hi}]")));
        }
    }
    Ok(())
}

/// One plain random Latin hypercube draw.
pub fn random_lhs_with_rng<R: Rng + ?Sized>(
    rng: &mut R,
    n: usize,
    bounds: &[(f64, f64)],
) -> Result<DMatrix<f64>> {
    check_bounds(n, bounds)?;
    let d = bounds.len();
    let mut out = DMatrix::zeros(n, d);
    let mut strata: Vec<usize> = (0..n).collect();
    for (k, (lo, hi)) in bounds.iter().enumerate() {
        strata.shuffle(rng);
        let width = (hi - lo) / n as f64;
        for (i, s) in strata.iter().enumerate() {
            let u: f64 = rng.gen();
            out[(i, k)] = lo + width * (*s as f64 + u);
        }
    }
    Ok(out)
}

pub fn random_lhs(n: usize, bounds: &[(f64, f64)], seed: u64) -> Result<DMatrix<f64>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    random_lhs_with_rng(&mut rng, n, bounds)
}

/// Smallest pairwise Euclidean distance between rows.
pub fn min_pairwise_distance(x: &DMatrix<f64>) -> f64 {
    let n = x.nrows();
    let mut best = f64::INFINITY;
    for i in 0..n {
        for j in 0..i {
            let d2: f64 = (0..x.ncols()).map(|k| (x[(i, k)] - x[(j, k)]).powi(2)).sum();
            best = best.min(d2);
        }
    }
    best.sqrt()
}

/// Best of `draws` random Latin hypercubes under the maximin criterion.
///
/// The first draw uses the same RNG stream as [`random_lhs_with_rng`], so the
/// result never has a smaller minimum distance than the plain draw.
pub fn maximin_lhs_with_rng<R: Rng + ?Sized>(
    rng: &mut R,
    n: usize,
    bounds: &[(f64, f64)],
    draws: usize,
) -> Result<DMatrix<f64>> {
    if n < 2 {
        return Err(Error::invalid("maximin design needs at least two points"));
    }
    let mut best = random_lhs_with_rng(rng, n, bounds)?;
    let mut best_d = min_pairwise_distance(&best);
    for _ in 1..draws.max(1) {
        let cand = random_lhs_with_rng(rng, n, bounds)?;
        let d = min_pairwise_distance(&cand);
        if d > best_d {
            best = cand;
            best_d = d;
        }
    }
    Ok(best)
}

pub fn maximin_lhs(n: usize, d: usize, bounds: &[(f64, f64)], seed: u64) -> Result<DMatrix<f64>> {
    if bounds.len() != d {
        return Err(Error::DimensionMismatch { expected: d, got: bounds.len() });
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    maximin_lhs_with_rng(&mut rng, n, bounds, DEFAULT_MAXIMIN_DRAWS)
}
