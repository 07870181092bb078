use nalgebra::DMatrix;

use super::fit::{gp_fit, FitOptions};
use super::{GaussianPrediction, GpModel, GradientPosterior};
use crate::emulator::Emulator;
use crate::error::{check_dim, Result};
use crate::scaling::{rescale_gradient, InputScaling, OutputScaling};

/// A GP trained in unit-cube inputs and standardized outputs, answering in user units.
#[derive(Debug, Clone)]
pub struct GpEmulator {
    model: GpModel,
    input: InputScaling,
    output: OutputScaling,
}

impl GpEmulator {
    pub fn fit(x: &DMatrix<f64>, y: &[f64], bounds: &[(f64, f64)], opts: &FitOptions) -> Result<Self> {
        check_dim(x.nrows(), y.len())?;
        let input = InputScaling::new(bounds)?;
        let output = OutputScaling::fit(y)?;
        let model = gp_fit(&input.matrix_to_unit(x)?, &output.standardize(y), opts)?;
        Ok(Self { model, input, output })
    }

    pub fn model(&self) -> &GpModel {
        &self.model
    }

    pub fn input_scaling(&self) -> &InputScaling {
        &self.input
    }

    pub fn output_scaling(&self) -> &OutputScaling {
        &self.output
    }
}

impl Emulator for GpEmulator {
    fn dim(&self) -> usize {
        self.input.dim()
    }

    fn predict(&self, x: &[f64]) -> Result<GaussianPrediction> {
        let u = self.input.to_unit(x)?;
        Ok(self.output.prediction(self.model.predict(&u)?))
    }

    fn gradient(&self, x: &[f64]) -> Result<GradientPosterior> {
        let u = self.input.to_unit(x)?;
        Ok(rescale_gradient(self.model.gradient(&u)?, &self.input, &self.output))
    }

    fn as_any(&self) -> &dyn std::any::Any {
        self
    }
}
