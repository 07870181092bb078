//! Single-file JSON container for a trained deep GP emulator. The linked GPs
//! are rebuilt on load from the stored design, parameters and latent draws.

use std::path::Path;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use super::{DgpEmulator, DgpModel, Theta, TraceEntry};
use crate::error::{Error, Result};
use crate::mathcore::KernelParams;
use crate::scaling::{InputScaling, OutputScaling};

pub const MODEL_FORMAT: &str = "dgpgrad-dgp";
pub const MODEL_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelFile {
    pub format: String,
    pub version: u32,
    pub input_scaling: InputScaling,
    pub output_scaling: OutputScaling,
    /// Training inputs in unit-cube coordinates.
    pub x: DMatrix<f64>,
    /// Standardized training outputs.
    pub y: DVector<f64>,
    pub theta: Theta,
    pub latent: Vec<DMatrix<f64>>,
    pub trace: Vec<TraceEntry>,
}

impl ModelFile {
    pub fn from_emulator(e: &DgpEmulator) -> Self {
        let m = e.model();
        Self {
            format: MODEL_FORMAT.into(),
            version: MODEL_VERSION,
            input_scaling: e.input_scaling().clone(),
            output_scaling: *e.output_scaling(),
            x: m.x().clone(),
            y: m.y().clone(),
            theta: m.theta().clone(),
            latent: m.latent().to_vec(),
            trace: m.trace().to_vec(),
        }
    }

    pub fn into_emulator(self) -> Result<DgpEmulator> {
        if self.format != MODEL_FORMAT || self.version != MODEL_VERSION {
            return Err(Error::Serialization(format!(
                "unsupported model container {} v{}",
                self.format, self.version
            )));
        }
        let check = |p: &KernelParams| {
            KernelParams::new(p.lengthscales().to_vec(), p.signal_variance(), p.nugget())
                .map_err(|e| Error::Serialization(e.to_string()))
        };
        let theta = Theta {
            layer1: self.theta.layer1.iter().map(check).collect::<Result<Vec<_>>>()?,
            layer2: check(&self.theta.layer2)?,
        };
        let model = DgpModel::from_parts(self.x, self.y, theta, self.latent, self.trace)?;
        DgpEmulator::from_parts(model, self.input_scaling, self.output_scaling)
    }

    pub fn to_json(&self) -> Result<String> {
        serde_json::to_string(self).map_err(|e| Error::Serialization(e.to_string()))
    }

    pub fn from_json(s: &str) -> Result<Self> {
        serde_json::from_str(s).map_err(|e| Error::Serialization(e.to_string()))
    }
}

pub fn save_model(e: &DgpEmulator, path: &Path) -> Result<()> {
    std::fs::write(path, ModelFile::from_emulator(e).to_json()?)
        .map_err(|err| Error::Serialization(format!("{}: {err}", path.display())))
}

pub fn load_model(path: &Path) -> Result<DgpEmulator> {
    let s = std::fs::read_to_string(path).map_err(|err| Error::Serialization(format!("{}: {err}", path.display())))?;
    ModelFile::from_json(&s)?.into_emulator()
}
