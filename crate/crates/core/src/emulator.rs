//! Common interface over trained emulators, in user coordinates, and a
//! name-indexed registry of emulator builders.

use std::any::Any;
use std::collections::BTreeMap;
use std::sync::Arc;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::dgp::{DgpConfig, DgpEmulator};
use crate::error::{Error, Result};
use crate::gp::{FitOptions, GammaPrior, GaussianPrediction, GpEmulator, GradientPosterior};

pub trait Emulator: Send + Sync {
    fn dim(&self) -> usize;
    fn predict(&self, x: &[f64]) -> Result<GaussianPrediction>;
    fn gradient(&self, x: &[f64]) -> Result<GradientPosterior>;

    fn posterior(&self, x: &[f64]) -> Result<(GaussianPrediction, GradientPosterior)> {
        Ok((self.predict(x)?, self.gradient(x)?))
    }

    fn as_any(&self) -> &dyn Any;
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct EmulatorSettings {
    pub gp: FitOptions,
    pub dgp: DgpConfig,
    /// SEM iterations when refitting a deep GP on an enlarged design.
    pub retrain_iterations: usize,
}

impl Default for EmulatorSettings {
    fn default() -> Self {
        Self {
            gp: FitOptions {
                lengthscale_prior: Some(GammaPrior::default()),
                ..FitOptions::default()
            },
            dgp: DgpConfig::default(),
            retrain_iterations: 100,
        }
    }
}

/// Trains emulators of one kind. `refit` may reuse state from a previous fit
/// on a subset of the data.
pub trait EmulatorBuilder: Send + Sync {
    fn name(&self) -> &str;
    fn fit(&self, x: &DMatrix<f64>, y: &[f64], bounds: &[(f64, f64)], seed: u64) -> Result<Arc<dyn Emulator>>;

    fn refit(
        &self,
        _prev: &dyn Emulator,
        x: &DMatrix<f64>,
        y: &[f64],
        bounds: &[(f64, f64)],
        seed: u64,
    ) -> Result<Arc<dyn Emulator>> {
        self.fit(x, y, bounds, seed)
    }
}

pub struct GpBuilder {
    pub opts: FitOptions,
}

impl EmulatorBuilder for GpBuilder {
    fn name(&self) -> &str {
        "gp"
    }

    fn fit(&self, x: &DMatrix<f64>, y: &[f64], bounds: &[(f64, f64)], seed: u64) -> Result<Arc<dyn Emulator>> {
        let opts = FitOptions {
            seed,
            ..self.opts.clone()
        };
        Ok(Arc::new(GpEmulator::fit(x, y, bounds, &opts)?))
    }

    fn refit(
        &self,
        prev: &dyn Emulator,
        x: &DMatrix<f64>,
        y: &[f64],
        bounds: &[(f64, f64)],
        seed: u64,
    ) -> Result<Arc<dyn Emulator>> {
        let init = prev.as_any().downcast_ref::<GpEmulator>().map(|g| g.model().params().clone());
        let opts = FitOptions {
            seed,
            init,
            ..self.opts.clone()
        };
        Ok(Arc::new(GpEmulator::fit(x, y, bounds, &opts)?))
    }
}

pub struct DgpBuilder {
    pub cfg: DgpConfig,
    pub retrain_iterations: usize,
}

impl EmulatorBuilder for DgpBuilder {
    fn name(&self) -> &str {
        "dgp"
    }

    fn fit(&self, x: &DMatrix<f64>, y: &[f64], bounds: &[(f64, f64)], seed: u64) -> Result<Arc<dyn Emulator>> {
        let cfg = self.cfg.clone().with_seed(seed);
        Ok(Arc::new(DgpEmulator::fit(x, y, bounds, &cfg)?))
    }

    fn refit(
        &self,
        prev: &dyn Emulator,
        x: &DMatrix<f64>,
        y: &[f64],
        bounds: &[(f64, f64)],
        seed: u64,
    ) -> Result<Arc<dyn Emulator>> {
        match prev.as_any().downcast_ref::<DgpEmulator>() {
            Some(d) => {
                let cfg = self.cfg.clone().with_seed(seed).with_iterations(self.retrain_iterations);
                Ok(Arc::new(d.retrain(x, y, &cfg)?))
            }
            None => self.fit(x, y, bounds, seed),
        }
    }
}

pub type BuilderCtor = fn(&EmulatorSettings) -> Box<dyn EmulatorBuilder>;

pub struct EmulatorRegistry {
    ctors: BTreeMap<String, BuilderCtor>,
}

impl EmulatorRegistry {
    pub fn empty() -> Self {
        Self { ctors: BTreeMap::new() }
    }

    pub fn register(&mut self, name: &str, ctor: BuilderCtor) {
        self.ctors.insert(name.to_string(), ctor);
    }

    pub fn names(&self) -> Vec<&str> {
        self.ctors.keys().map(String::as_str).collect()
    }

    pub fn build(&self, name: &str, settings: &EmulatorSettings) -> Result<Box<dyn EmulatorBuilder>> {
        let ctor = self
            .ctors
            .get(name)
            .ok_or_else(|| Error::invalid(format!("unknown emulator '{name}' (known: {:?})", self.names())))?;
        Ok(ctor(settings))
    }
}

impl Default for EmulatorRegistry {
    fn default() -> Self {
        let mut r = Self::empty();
        r.register("gp", |s| Box::new(GpBuilder { opts: s.gp.clone() }));
        r.register("dgp", |s| {
            Box::new(DgpBuilder {
                cfg: s.dgp.clone(),
                retrain_iterations: s.retrain_iterations,
            })
        });
        r
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn registry_round_trip() {
        let r = EmulatorRegistry::default();
        assert_eq!(r.names(), vec!["dgp", "gp"]);
        assert!(r.build("mlp", &EmulatorSettings::default()).is_err());
        let b = r.build("gp", &EmulatorSettings::default()).unwrap();
        let x = DMatrix::from_fn(8, 1, |i, _| i as f64 / 7.0);
        let y: Vec<f64> = (0..8).map(|i| (3.0 * i as f64 / 7.0).sin()).collect();
        let e = b.fit(&x, &y, &[(0.0, 1.0)], 1).unwrap();
        let e2 = b.refit(e.as_ref(), &x, &y, &[(0.0, 1.0)], 2).unwrap();
        let (p, p2) = (e.predict(&[0.4]).unwrap(), e2.predict(&[0.4]).unwrap());
        assert!((p.mean - p2.mean).abs() < 1e-3);
    }
}
