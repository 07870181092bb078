//! Stochastic EM: Gibbs sweeps over the latent layer alternating with
//! per-GP likelihood maximization.

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::ess::ess_update;
use super::{DgpConfig, DgpModel, Theta, TraceEntry};
use crate::error::{check_dim, Error, Result};
use crate::gp::{fit_params, gaussian_log_density, FitOptions};
use crate::mathcore::{chol_factor, correlation_matrix, KernelParams};

/// Correlation matrix of the second layer with latent column `skip` left out.
fn partial_corr(w: &DMatrix<f64>, ls: &[f64], skip: usize) -> DMatrix<f64> {
    let n = w.nrows();
    let mut r = DMatrix::from_element(n, n, 1.0);
    for i in 0..n {
        for j in 0..i {
            let mut s = 0.0;
            for (k, g) in ls.iter().enumerate() {
                if k != skip {
                    let t = (w[(i, k)] - w[(j, k)]) / g;
                    s += t * t;
                }
            }
            let v = (-s).exp();
            r[(i, j)] = v;
            r[(j, i)] = v;
        }
    }
    r
}

/// One Gibbs sweep: each latent column in turn gets an elliptical slice move
/// under its GP prior on `x`, with the second-layer marginal likelihood of `y`.
pub fn gibbs_sweep<R: Rng + ?Sized>(
    w: &DMatrix<f64>,
    layer1: &[KernelParams],
    layer2: &KernelParams,
    x: &DMatrix<f64>,
    y: &[f64],
    rng: &mut R,
) -> Result<DMatrix<f64>> {
    let n = x.nrows();
    let p = w.ncols();
    check_dim(n, w.nrows())?;
    check_dim(n, y.len())?;
    check_dim(p, layer1.len())?;
    check_dim(p, layer2.dim())?;
    let mut w = w.clone();
    let ls2 = layer2.lengthscales();
    let s2 = layer2.signal_variance();
    let eta = layer2.nugget();
    for k in 0..p {
        let prior = chol_factor(&correlation_matrix(&layer1[k], x)?)?;
        let base = partial_corr(&w, ls2, k);
        let g2 = ls2[k] * ls2[k];
        let mut r = base.clone();
        let loglik = |col: &[f64]| -> f64 {
            for i in 0..n {
                r[(i, i)] = 1.0 + eta;
                for j in 0..i {
                    let v = base[(i, j)] * (-(col[i] - col[j]).powi(2) / g2).exp();
                    r[(i, j)] = v;
                    r[(j, i)] = v;
                }
            }
            match chol_factor(&r) {
                Ok(c) => gaussian_log_density(&c, y, s2),
                Err(_) => f64::NEG_INFINITY,
            }
        };
        let col: Vec<f64> = w.column(k).iter().copied().collect();
        let next = ess_update(&col, &prior, loglik, rng)?;
        w.column_mut(k).copy_from_slice(&next);
    }
    Ok(w)
}

/// `log p(y, W | X, theta)`.
pub(crate) fn complete_log_likelihood(
    x: &DMatrix<f64>,
    w: &DMatrix<f64>,
    y: &[f64],
    theta: &Theta,
) -> Result<f64> {
    let mut total = 0.0;
    for (k, p) in theta.layer1.iter().enumerate() {
        let c = chol_factor(&correlation_matrix(p, x)?)?;
        let col: Vec<f64> = w.column(k).iter().copied().collect();
        total += gaussian_log_density(&c, &col, p.signal_variance());
    }
    let c = chol_factor(&correlation_matrix(&theta.layer2, w)?)?;
    Ok(total + gaussian_log_density(&c, y, theta.layer2.signal_variance()))
}

fn m_step(
    x: &DMatrix<f64>,
    w: &DMatrix<f64>,
    y: &[f64],
    prev: &Theta,
    cfg: &DgpConfig,
    starts: usize,
    seed: u64,
) -> Result<Theta> {
    let base = FitOptions {
        starts,
        max_iter: cfg.mstep_max_iter,
        seed,
        lengthscale_prior: cfg.lengthscale_prior,
        ..FitOptions::default()
    };
    let mut layer1 = Vec::with_capacity(prev.layer1.len());
    for (k, p) in prev.layer1.iter().enumerate() {
        let col: Vec<f64> = w.column(k).iter().copied().collect();
        let opts = FitOptions {
            fixed_nugget: Some(cfg.layer1_nugget),
            fixed_variance: Some(cfg.layer1_variance),
            init: Some(p.clone()),
            seed: seed.wrapping_add(k as u64 + 1),
            ..base.clone()
        };
        // a latent column that collapsed to a constant keeps its previous parameters
        layer1.push(match fit_params(x, &col, &opts) {
            Ok(p) => p,
            Err(Error::Fit(_)) => p.clone(),
            Err(e) => return Err(e),
        });
    }
    let opts = FitOptions {
        fixed_nugget: Some(cfg.layer2_nugget),
        init: Some(prev.layer2.clone()),
        ..base
    };
    let layer2 = fit_params(w, y, &opts)?;
    Ok(Theta { layer1, layer2 })
}

fn log_average(thetas: &[Theta]) -> Result<Theta> {
    let m = thetas.len() as f64;
    let avg = |get: &dyn Fn(&Theta) -> &KernelParams| -> Result<KernelParams> {
        let first = get(&thetas[0]);
        let d = first.dim();
        let mut ls = vec![0.0; d];
        let (mut s2, mut eta) = (0.0, 0.0);
        for t in thetas {
            let p = get(t);
            for (a, b) in ls.iter_mut().zip(p.lengthscales()) {
                *a += b.ln() / m;
            }
            s2 += p.signal_variance().ln() / m;
            eta += p.nugget().ln() / m;
        }
        KernelParams::new(ls.iter().map(|v| v.exp()).collect(), s2.exp(), eta.exp())
    };
    let p = thetas[0].layer1.len();
    let layer1 = (0..p).map(|k| avg(&|t: &Theta| &t.layer1[k])).collect::<Result<Vec<_>>>()?;
    Ok(Theta {
        layer1,
        layer2: avg(&|t: &Theta| &t.layer2)?,
    })
}

/// Where the chain starts and whether the first M-step uses multistart.
pub(crate) struct Start {
    pub theta: Theta,
    pub w: DMatrix<f64>,
    pub multistart: bool,
}

pub(crate) fn run_sem(x: &DMatrix<f64>, y: &[f64], cfg: &DgpConfig, start: Start) -> Result<DgpModel> {
    cfg.validate()?;
    let n = x.nrows();
    check_dim(n, y.len())?;
    if y.iter().all(|v| v.is_nan()) {
        return Err(Error::Fit("all outputs are NaN".into()));
    }
    if y.iter().any(|v| !v.is_finite()) {
        return Err(Error::Fit("non-finite output".into()));
    }
    let d = x.ncols();
    if n < 2 * (d + 2) {
        log::warn!("deep GP trained on {n} points in {d} dimensions; at least {} recommended", 2 * (d + 2));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut theta = start.theta;
    let mut w = start.w;
    let mut trace = Vec::with_capacity(cfg.iterations);
    let mut kept = Vec::new();
    let burn = ((cfg.iterations as f64) * cfg.burn_in_fraction).floor() as usize;
    for t in 1..=cfg.iterations {
        w = gibbs_sweep(&w, &theta.layer1, &theta.layer2, x, y, &mut rng)?;
        let starts = if t == 1 && start.multistart { cfg.initial_starts } else { 1 };
        let seed = rng.gen::<u64>();
        theta = m_step(x, &w, y, &theta, cfg, starts, seed)?;
        let log_likelihood = complete_log_likelihood(x, &w, y, &theta).unwrap_or(f64::NEG_INFINITY);
        trace.push(TraceEntry {
            iteration: t,
            log_likelihood,
            theta: theta.clone(),
        });
        if t > burn {
            kept.push(theta.clone());
        }
    }
    let theta_hat = log_average(&kept)?;
    let mut imputations = Vec::with_capacity(cfg.imputations);
    for _ in 0..cfg.imputations {
        for _ in 0..cfg.thinning {
            w = gibbs_sweep(&w, &theta_hat.layer1, &theta_hat.layer2, x, y, &mut rng)?;
        }
        imputations.push(w.clone());
    }
    DgpModel::from_parts(x.clone(), DVector::from_column_slice(y), theta_hat, imputations, trace)
}

/// Trains from scratch: unit lengthscales and the inputs themselves as the
/// initial latent layer.
pub fn sem_train(x: &DMatrix<f64>, y: &[f64], cfg: &DgpConfig) -> Result<DgpModel> {
    let d = x.ncols();
    let p = cfg.width.unwrap_or(d);
    let mut layer1 = Vec::with_capacity(p);
    for _ in 0..p {
        layer1.push(KernelParams::new(vec![1.0; d], cfg.layer1_variance, cfg.layer1_nugget)?);
    }
    let layer2 = KernelParams::new(vec![1.0; p], 1.0, cfg.layer2_nugget)?;
    let w = DMatrix::from_fn(x.nrows(), p, |i, k| x[(i, k % d)]);
    run_sem(
        x,
        y,
        cfg,
        Start {
            theta: Theta { layer1, layer2 },
            w,
            multistart: true,
        },
    )
}

/// Retrains on an enlarged dataset, starting from a previous model's
/// parameters and latent draw. Latent values for the new rows start at the
/// first-layer predictive means.
pub fn sem_retrain(prev: &DgpModel, x: &DMatrix<f64>, y: &[f64], cfg: &DgpConfig) -> Result<DgpModel> {
    let old_n = prev.x().nrows();
    if x.nrows() < old_n || x.ncols() != prev.x().ncols() {
        return Err(Error::invalid("retraining data must extend the previous design"));
    }
    let last = prev.imputed().last().ok_or_else(|| Error::invalid("model has no imputations"))?;
    let w_prev = prev.latent().last().expect("imputations and latent draws match");
    let p = w_prev.ncols();
    let mut w = DMatrix::zeros(x.nrows(), p);
    for i in 0..x.nrows() {
        if i < old_n {
            w.set_row(i, &w_prev.row(i));
        } else {
            let xi: Vec<f64> = x.row(i).iter().copied().collect();
            for (k, g) in last.layer1().iter().enumerate() {
                w[(i, k)] = g.predict(&xi)?.mean;
            }
        }
    }
    run_sem(
        x,
        y,
        cfg,
        Start {
            theta: prev.theta().clone(),
            w,
            multistart: false,
        },
    )
}
