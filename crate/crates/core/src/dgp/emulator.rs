use nalgebra::DMatrix;

use super::{sem_retrain, sem_train, DgpConfig, DgpModel};
use crate::emulator::Emulator;
use crate::error::{check_dim, Result};
use crate::gp::{GaussianPrediction, GradientPosterior};
use crate::scaling::{rescale_gradient, InputScaling, OutputScaling};

/// A deep GP trained in unit-cube inputs and standardized outputs.
#[derive(Debug, Clone)]
pub struct DgpEmulator {
    model: DgpModel,
    input: InputScaling,
    output: OutputScaling,
}

impl DgpEmulator {
    pub fn fit(x: &DMatrix<f64>, y: &[f64], bounds: &[(f64, f64)], cfg: &DgpConfig) -> Result<Self> {
        check_dim(x.nrows(), y.len())?;
        let input = InputScaling::new(bounds)?;
        let output = OutputScaling::fit(y)?;
        let ys = output.standardize(y);
        let model = sem_train(&input.matrix_to_unit(x)?, ys.as_slice(), cfg)?;
        Ok(Self { model, input, output })
    }

    /// Refits on an enlarged dataset warm-started from this emulator.
    pub fn retrain(&self, x: &DMatrix<f64>, y: &[f64], cfg: &DgpConfig) -> Result<Self> {
        check_dim(x.nrows(), y.len())?;
        let output = OutputScaling::fit(y)?;
        let ys = output.standardize(y);
        let model = sem_retrain(&self.model, &self.input.matrix_to_unit(x)?, ys.as_slice(), cfg)?;
        Ok(Self {
            model,
            input: self.input.clone(),
            output,
        })
    }

    pub fn from_parts(model: DgpModel, input: InputScaling, output: OutputScaling) -> Result<Self> {
        check_dim(input.dim(), model.dim())?;
        Ok(Self { model, input, output })
    }

    pub fn model(&self) -> &DgpModel {
        &self.model
    }

    pub fn input_scaling(&self) -> &InputScaling {
        &self.input
    }

    pub fn output_scaling(&self) -> &OutputScaling {
        &self.output
    }
}

impl Emulator for DgpEmulator {
    fn dim(&self) -> usize {
        self.input.dim()
    }

    fn predict(&self, x: &[f64]) -> Result<GaussianPrediction> {
        let u = self.input.to_unit(x)?;
        Ok(self.output.prediction(super::dgp_predict(&self.model, &u)?))
    }

    fn gradient(&self, x: &[f64]) -> Result<GradientPosterior> {
        let u = self.input.to_unit(x)?;
        Ok(rescale_gradient(super::dgp_gradient(&self.model, &u)?, &self.input, &self.output))
    }

    fn posterior(&self, x: &[f64]) -> Result<(GaussianPrediction, GradientPosterior)> {
        let u = self.input.to_unit(x)?;
        let (p, g) = self.model.posterior(&u)?;
        Ok((self.output.prediction(p), rescale_gradient(g, &self.input, &self.output)))
    }

    fn as_any(&self) -> &dyn std::any::Any {
        self
    }
}
