use nalgebra::{DMatrix, DVector};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::likelihood::{evaluate, Variance};
use super::optim::{minimize, Settings};
use super::GpModel;
use crate::error::{check_dim, Error, Result};
use crate::mathcore::{random_lhs_with_rng, KernelParams};

/// Box constraints on the hyperparameters (natural scale).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ParamBounds {
    pub lengthscale: (f64, f64),
    pub nugget: (f64, f64),
    pub variance: (f64, f64),
}

impl Default for ParamBounds {
    fn default() -> Self {
        Self {
            lengthscale: (1e-3, 1e3),
            nugget: (1e-8, 1.0),
            variance: (1e-6, 1e6),
        }
    }
}

/// Gamma(shape, rate) prior on each lengthscale, added to the log-likelihood.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GammaPrior {
    pub shape: f64,
    pub rate: f64,
}

impl Default for GammaPrior {
    fn default() -> Self {
        Self { shape: 1.6, rate: 0.3 }
    }
}

/// Serde form of an optional prior: a `{ shape, rate }` table, or the string
/// `"none"`. TOML has no null, so an absent prior needs a spelling of its own.
pub mod optional_prior {
    use super::GammaPrior;
    use serde::{Deserialize, Deserializer, Serialize, Serializer};

    #[derive(Serialize, Deserialize)]
    #[serde(untagged)]
    enum Repr {
        Name(String),
        Prior(GammaPrior),
    }

    pub fn serialize<S: Serializer>(v: &Option<GammaPrior>, s: S) -> Result<S::Ok, S::Error> {
        match v {
            Some(p) => Repr::Prior(*p).serialize(s),
            None => Repr::Name("none".into()).serialize(s),
        }
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Option<GammaPrior>, D::Error> {
        match Repr::deserialize(d)? {
            Repr::Prior(p) => Ok(Some(p)),
            Repr::Name(n) if n == "none" => Ok(None),
            Repr::Name(n) => Err(serde::de::Error::custom(format!("unknown prior '{n}', expected \"none\" or {{ shape, rate }}"))),
        }
    }
}

impl GammaPrior {
    /// Log density up to a constant, and its derivative in `ln(gamma)`.
    pub fn log_density(&self, gamma: f64) -> (f64, f64) {
        (
            (self.shape - 1.0) * gamma.ln() - self.rate * gamma,
            (self.shape - 1.0) - self.rate * gamma,
        )
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct FitOptions {
    /// Nugget held at this value; jointly optimized when `None`.
    pub fixed_nugget: Option<f64>,
    /// Signal variance held at this value; set to its maximizer when `None`.
    pub fixed_variance: Option<f64>,
    pub starts: usize,
    pub max_iter: usize,
    pub grad_tol: f64,
    pub seed: u64,
    /// Warm start. Counts as the first of `starts`.
    pub init: Option<KernelParams>,
    /// Range the random lengthscale starts are drawn from.
    pub start_lengthscales: (f64, f64),
    pub bounds: ParamBounds,
    /// Turns the fit into a MAP estimate when set.
    #[serde(with = "optional_prior")]
    pub lengthscale_prior: Option<GammaPrior>,
}

impl Default for FitOptions {
    fn default() -> Self {
        Self {
            fixed_nugget: None,
            fixed_variance: None,
            starts: 5,
            max_iter: 200,
            grad_tol: 1e-6,
            seed: 0,
            init: None,
            start_lengthscales: (0.05, 2.0),
            bounds: ParamBounds::default(),
            lengthscale_prior: None,
        }
    }
}

impl FitOptions {
    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }

    pub fn with_fixed_nugget(mut self, eta: f64) -> Self {
        self.fixed_nugget = Some(eta);
        self
    }
}

/// Maximum-likelihood fit of a zero-mean GP.
pub fn gp_fit(x: &DMatrix<f64>, y: &DVector<f64>, opts: &FitOptions) -> Result<GpModel> {
    let params = fit_params(x, y.as_slice(), opts)?;
    GpModel::new(x.clone(), y.clone(), params).map_err(|e| Error::Fit(e.to_string()))
}

pub(crate) fn fit_params(x: &DMatrix<f64>, y: &[f64], opts: &FitOptions) -> Result<KernelParams> {
    let n = x.nrows();
    let d = x.ncols();
    check_dim(n, y.len())?;
    if n < 2 {
        return Err(Error::Fit(format!("need at least 2 points, got {n}")));
    }
    if d == 0 {
        return Err(Error::Fit("zero input dimension".into()));
    }
    if y.iter().any(|v| !v.is_finite()) {
        return Err(Error::Fit("non-finite output".into()));
    }
    let lo_y = y.iter().cloned().fold(f64::INFINITY, f64::min);
    let hi_y = y.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    if hi_y - lo_y <= 0.0 {
        return Err(Error::Fit("outputs are constant (zero variance)".into()));
    }
    let b = opts.bounds;
    let free_nugget = opts.fixed_nugget.is_none();
    let variance = match opts.fixed_variance {
        Some(v) => Variance::Fixed(v),
        None => Variance::Profiled,
    };
    let nugget_of = |theta: &[f64]| match opts.fixed_nugget {
        Some(eta) => eta,
        None => theta[d].exp(),
    };

    let mut lo = vec![b.lengthscale.0.ln(); d];
    let mut hi = vec![b.lengthscale.1.ln(); d];
    if free_nugget {
        lo.push(b.nugget.0.ln());
        hi.push(b.nugget.1.ln());
    }

    let mut starts: Vec<Vec<f64>> = Vec::new();
    if let Some(init) = &opts.init {
        check_dim(d, init.dim())?;
        let mut s: Vec<f64> = init.lengthscales().iter().map(|v| v.ln()).collect();
        if free_nugget {
            s.push(init.nugget().max(b.nugget.0).ln());
        }
        starts.push(s);
    }
    let random = opts.starts.max(1).saturating_sub(starts.len());
    if random > 0 {
        let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
        let (a, c) = opts.start_lengthscales;
        let mut box_ = vec![(a.ln(), c.ln()); d];
        if free_nugget {
            box_.push((1e-6f64.ln(), 1e-2f64.ln()));
        }
        let draws = if random == 1 {
            // a single random start sits at the box center
            DMatrix::from_fn(1, box_.len(), |_, j| 0.5 * (box_[j].0 + box_[j].1))
        } else {
            random_lhs_with_rng(&mut rng, random, &box_)?
        };
        for i in 0..random {
            starts.push(draws.row(i).iter().copied().collect());
        }
    }

    let settings = Settings {
        max_iter: opts.max_iter,
        grad_tol: opts.grad_tol,
    };
    let objective = |theta: &[f64]| -> Option<(f64, Vec<f64>)> {
        let ls: Vec<f64> = theta[..d].iter().map(|v| v.exp()).collect();
        let e = evaluate(x, y, &ls, nugget_of(theta), variance).ok()?;
        let mut value = e.value;
        let mut g: Vec<f64> = e.grad_lengthscales.iter().map(|v| -v).collect();
        if let Some(prior) = opts.lengthscale_prior {
            for (gk, &l) in g.iter_mut().zip(&ls) {
                let (lp, dlp) = prior.log_density(l);
                value += lp;
                *gk -= dlp;
            }
        }
        if free_nugget {
            g.push(-e.grad_log_nugget);
        }
        Some((-value, g))
    };

    let mut best: Option<(f64, Vec<f64>)> = None;
    for s in &starts {
        if let Some(m) = minimize(objective, s, &lo, &hi, &settings) {
            if best.as_ref().map_or(true, |(v, _)| m.value < *v) {
                best = Some((m.value, m.x));
            }
        }
    }
    let (_, theta) = best.ok_or_else(|| Error::Fit("likelihood could not be evaluated at any start".into()))?;
    let ls: Vec<f64> = theta[..d].iter().map(|v| v.exp()).collect();
    let eta = nugget_of(&theta);
    let s2 = match variance {
        Variance::Fixed(v) => v,
        Variance::Profiled => {
            let e = evaluate(x, y, &ls, eta, Variance::Profiled).map_err(|e| Error::Fit(e.to_string()))?;
            e.variance.clamp(b.variance.0, b.variance.1)
        }
    };
    KernelParams::new(ls, s2, eta).map_err(|e| Error::Fit(e.to_string()))
}
