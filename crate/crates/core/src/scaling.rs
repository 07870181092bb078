//! Affine maps between user coordinates and the unit-cube / standardized
//! coordinates the emulators are trained in.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{check_dim, Error, Result};
use crate::gp::{GaussianPrediction, GradientPosterior};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InputScaling {
    lo: Vec<f64>,
    width: Vec<f64>,
}

impl InputScaling {
    pub fn new(bounds: &[(f64, f64)]) -> Result<Self> {
        if bounds.is_empty() {
            return Err(Error::invalid("empty bounds"));
        }
        for (i, (a, b)) in bounds.iter().enumerate() {
            if !(a < b) || !a.is_finite() || !b.is_finite() {
                return Err(Error::invalid(format!("degenerate bounds in dimension {i}: [{a}, {b}]")));
            }
        }
        Ok(Self {
            lo: bounds.iter().map(|b| b.0).collect(),
            width: bounds.iter().map(|b| b.1 - b.0).collect(),
        })
    }

    pub fn identity(d: usize) -> Self {
        Self {
            lo: vec![0.0; d],
            width: vec![1.0; d],
        }
    }

    pub fn dim(&self) -> usize {
        self.lo.len()
    }

    pub fn bounds(&self) -> Vec<(f64, f64)> {
        self.lo.iter().zip(&self.width).map(|(l, w)| (*l, l + w)).collect()
    }

    pub fn widths(&self) -> &[f64] {
        &self.width
    }

    pub fn to_unit(&self, x: &[f64]) -> Result<Vec<f64>> {
        check_dim(self.dim(), x.len())?;
        Ok(x.iter().zip(&self.lo).zip(&self.width).map(|((v, l), w)| (v - l) / w).collect())
    }

    pub fn from_unit(&self, u: &[f64]) -> Vec<f64> {
        u.iter().zip(&self.lo).zip(&self.width).map(|((v, l), w)| l + v * w).collect()
    }

    pub fn matrix_to_unit(&self, x: &DMatrix<f64>) -> Result<DMatrix<f64>> {
        check_dim(self.dim(), x.ncols())?;
        Ok(DMatrix::from_fn(x.nrows(), x.ncols(), |i, j| (x[(i, j)] - self.lo[j]) / self.width[j]))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OutputScaling {
    pub mean: f64,
    pub sd: f64,
}

impl OutputScaling {
    pub fn fit(y: &[f64]) -> Result<Self> {
        if y.is_empty() {
            return Err(Error::invalid("empty outputs"));
        }
        if y.iter().any(|v| !v.is_finite()) {
            return Err(Error::Fit("non-finite output".into()));
        }
        let n = y.len() as f64;
        let mean = y.iter().sum::<f64>() / n;
        let sd = (y.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n).sqrt();
        if !(sd > 0.0) {
            return Err(Error::Fit("outputs are constant (zero variance)".into()));
        }
        Ok(Self { mean, sd })
    }

    pub fn identity() -> Self {
        Self { mean: 0.0, sd: 1.0 }
    }

    pub fn standardize(&self, y: &[f64]) -> DVector<f64> {
        DVector::from_iterator(y.len(), y.iter().map(|v| (v - self.mean) / self.sd))
    }

    pub fn prediction(&self, p: GaussianPrediction) -> GaussianPrediction {
        GaussianPrediction {
            mean: self.mean + self.sd * p.mean,
            variance: self.sd * self.sd * p.variance,
        }
    }
}

/// Maps a gradient posterior in unit/standardized coordinates to user units.
pub fn rescale_gradient(g: GradientPosterior, input: &InputScaling, output: &OutputScaling) -> GradientPosterior {
    let d = g.dim();
    let f: Vec<f64> = input.widths().iter().map(|w| output.sd / w).collect();
    GradientPosterior {
        mean: DVector::from_fn(d, |i, _| g.mean[i] * f[i]),
        cov: DMatrix::from_fn(d, d, |i, j| g.cov[(i, j)] * f[i] * f[j]),
    }
}
