//! Two-layer deep GP trained by stochastic imputation. Predictions and
//! gradients aggregate a set of linked GPs, one per imputed latent layer.

mod emulator;
mod ess;
mod io;
mod sem;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

pub use emulator::DgpEmulator;
pub use ess::ess_update;
pub use io::{load_model, save_model, ModelFile};
pub use sem::{gibbs_sweep, sem_retrain, sem_train};

use crate::error::{check_dim, Error, Result};
use crate::gp::{clamp_variance, GammaPrior, GaussianPrediction, GpModel, GradientPosterior};
use crate::lgp::{lgp_gradient, lgp_predict, LgpModel};
use crate::mathcore::KernelParams;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct DgpConfig {
    /// Latent width p; the input dimension when unset.
    pub width: Option<usize>,
    pub iterations: usize,
    pub burn_in_fraction: f64,
    pub imputations: usize,
    /// Gibbs sweeps between successive imputations.
    pub thinning: usize,
    pub seed: u64,
    pub layer1_nugget: f64,
    pub layer2_nugget: f64,
    pub layer1_variance: f64,
    /// Optimizer iterations per M-step.
    pub mstep_max_iter: usize,
    /// Multistart count for the first M-step of a fresh fit.
    pub initial_starts: usize,
    /// Prior on every lengthscale in both layers; plain likelihood when unset.
    #[serde(with = "crate::gp::optional_prior")]
    pub lengthscale_prior: Option<GammaPrior>,
}

impl Default for DgpConfig {
    fn default() -> Self {
        Self {
            width: None,
            iterations: 500,
            burn_in_fraction: 0.75,
            imputations: 10,
            thinning: 10,
            seed: 0,
            layer1_nugget: 1e-6,
            layer2_nugget: 1e-6,
            layer1_variance: 1.0,
            mstep_max_iter: 200,
            initial_starts: 5,
            lengthscale_prior: Some(GammaPrior::default()),
        }
    }
}

impl DgpConfig {
    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }

    pub fn with_iterations(mut self, t: usize) -> Self {
        self.iterations = t;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.burn_in_fraction > 0.0 && self.burn_in_fraction < 1.0) {
            return Err(Error::invalid(format!("burn-in fraction must be in (0, 1), got {}", self.burn_in_fraction)));
        }
        if self.imputations < 1 {
            return Err(Error::invalid("at least one imputation is required"));
        }
        if self.iterations < 2 {
            return Err(Error::invalid("at least two SEM iterations are required"));
        }
        if self.thinning < 1 || self.width == Some(0) || self.initial_starts < 1 {
            return Err(Error::invalid("thinning, width and start count must be positive"));
        }
        if ((self.iterations as f64) * self.burn_in_fraction).floor() as usize >= self.iterations {
            return Err(Error::invalid("burn-in leaves no iterations to average"));
        }
        Ok(())
    }
}

/// Hyperparameters of the p first-layer GPs and the second-layer GP.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Theta {
    pub layer1: Vec<KernelParams>,
    pub layer2: KernelParams,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceEntry {
    pub iteration: usize,
    /// `log p(y, W | X, theta)` after the M-step.
    pub log_likelihood: f64,
    pub theta: Theta,
}

#[derive(Debug, Clone)]
pub struct DgpModel {
    x: DMatrix<f64>,
    y: DVector<f64>,
    theta: Theta,
    latent: Vec<DMatrix<f64>>,
    imputed: Vec<LgpModel>,
    trace: Vec<TraceEntry>,
}

impl DgpModel {
    /// Builds the imputed linked GPs from the averaged parameters and latent draws.
    pub fn from_parts(
        x: DMatrix<f64>,
        y: DVector<f64>,
        theta: Theta,
        latent: Vec<DMatrix<f64>>,
        trace: Vec<TraceEntry>,
    ) -> Result<Self> {
        if latent.is_empty() {
            return Err(Error::invalid("at least one latent draw is required"));
        }
        check_dim(x.nrows(), y.len())?;
        let mut imputed = Vec::with_capacity(latent.len());
        for w in &latent {
            check_dim(x.nrows(), w.nrows())?;
            check_dim(theta.layer1.len(), w.ncols())?;
            let layer1 = theta
                .layer1
                .iter()
                .enumerate()
                .map(|(k, p)| GpModel::new(x.clone(), w.column(k).into_owned(), p.clone()))
                .collect::<Result<Vec<_>>>()?;
            let layer2 = GpModel::new(w.clone(), y.clone(), theta.layer2.clone())?;
            imputed.push(LgpModel::new(layer1, layer2)?);
        }
        Ok(Self {
            x,
            y,
            theta,
            latent,
            imputed,
            trace,
        })
    }

    pub fn x(&self) -> &DMatrix<f64> {
        &self.x
    }

    pub fn y(&self) -> &DVector<f64> {
        &self.y
    }

    pub fn theta(&self) -> &Theta {
        &self.theta
    }

    pub fn latent(&self) -> &[DMatrix<f64>] {
        &self.latent
    }

    pub fn imputed(&self) -> &[LgpModel] {
        &self.imputed
    }

    pub fn trace(&self) -> &[TraceEntry] {
        &self.trace
    }

    pub fn dim(&self) -> usize {
        self.x.ncols()
    }

    /// Predictive moments and gradient posterior in one pass per imputation.
    pub fn posterior(&self, x_star: &[f64]) -> Result<(GaussianPrediction, GradientPosterior)> {
        let parts = self
            .imputed
            .iter()
            .map(|m| m.posterior(x_star))
            .collect::<Result<Vec<_>>>()?;
        let preds: Vec<GaussianPrediction> = parts.iter().map(|p| p.0).collect();
        let grads: Vec<GradientPosterior> = parts.into_iter().map(|p| p.1).collect();
        Ok((aggregate_predictions(&preds), aggregate_gradients(&grads)))
    }
}

/// Mixture moments of equally weighted Gaussian components.
pub fn aggregate_predictions(parts: &[GaussianPrediction]) -> GaussianPrediction {
    let m = parts.len() as f64;
    let mean = parts.iter().map(|p| p.mean).sum::<f64>() / m;
    // E[mu^2 + var] - mean^2, written as within plus between spread
    let variance = parts.iter().map(|p| p.variance + (p.mean - mean).powi(2)).sum::<f64>() / m;
    GaussianPrediction {
        mean,
        variance: clamp_variance(variance),
    }
}

/// Plain average of gradient means and covariances.
pub fn aggregate_gradients(parts: &[GradientPosterior]) -> GradientPosterior {
    let m = parts.len() as f64;
    let d = parts[0].dim();
    let mut mean = DVector::zeros(d);
    let mut cov = DMatrix::zeros(d, d);
    for p in parts {
        mean += &p.mean;
        cov += &p.cov;
    }
    GradientPosterior {
        mean: mean / m,
        cov: cov / m,
    }
}

pub fn dgp_predict(model: &DgpModel, x_star: &[f64]) -> Result<GaussianPrediction> {
    let preds = model
        .imputed
        .iter()
        .map(|m| lgp_predict(m, x_star))
        .collect::<Result<Vec<_>>>()?;
    Ok(aggregate_predictions(&preds))
}

pub fn dgp_gradient(model: &DgpModel, x_star: &[f64]) -> Result<GradientPosterior> {
    let grads = model
        .imputed
        .iter()
        .map(|m| lgp_gradient(m, x_star))
        .collect::<Result<Vec<_>>>()?;
    Ok(aggregate_gradients(&grads))
}
