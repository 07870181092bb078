use anyhow::{bail, Result};
use serde::{Deserialize, Serialize};

/// RMSE divided by the range of `truth`.
pub fn nrmsep(pred: &[f64], truth: &[f64]) -> Result<f64> {
    if pred.len() != truth.len() || truth.len() < 2 {
        bail!("need at least two paired values, got {} and {}", pred.len(), truth.len());
    }
    let (lo, hi) = truth.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), &v| (a.min(v), b.max(v)));
    if !(hi > lo) {
        bail!("truth is constant; range-normalized error undefined");
    }
    let mse = pred.iter().zip(truth).map(|(p, t)| (p - t).powi(2)).sum::<f64>() / truth.len() as f64;
    Ok(mse.sqrt() / (hi - lo))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GradError {
    pub nrmse: f64,
    /// Points dropped because the true gradient vanishes.
    pub excluded: usize,
}

/// Mean over points of `|true - pred| / |true|`.
pub fn grad_nrmse(pred: &[Vec<f64>], truth: &[Vec<f64>]) -> Result<GradError> {
    if pred.len() != truth.len() {
        bail!("{} predicted gradients for {} true ones", pred.len(), truth.len());
    }
    let norm = |v: &[f64]| v.iter().map(|x| x * x).sum::<f64>().sqrt();
    let mut sum = 0.0;
    let mut used = 0;
    for (p, t) in pred.iter().zip(truth) {
        if p.len() != t.len() {
            bail!("gradient dimension mismatch");
        }
        let nt = norm(t);
        if nt == 0.0 {
            continue;
        }
        let diff: Vec<f64> = p.iter().zip(t).map(|(a, b)| a - b).collect();
        sum += norm(&diff) / nt;
        used += 1;
    }
    let excluded = truth.len() - used;
    if used == 0 {
        bail!("every true gradient is zero");
    }
    if excluded > 0 {
        log::info!("{excluded} points with zero true gradient excluded");
    }
    Ok(GradError {
        nrmse: sum / used as f64,
        excluded,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsRow {
    pub method: String,
    pub replicate: usize,
    pub seed: u64,
    /// Design size at the checkpoint.
    pub checkpoint: usize,
    pub global_nrmsep: f64,
    pub local_nrmsep: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TimingRow {
    pub method: String,
    pub replicate: usize,
    pub iteration: usize,
    pub wall_time: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GradRow {
    pub dim: usize,
    pub n: usize,
    pub method: String,
    pub replicate: usize,
    pub seed: u64,
    pub nrmse: f64,
    pub excluded: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SummaryRow {
    pub method: String,
    pub checkpoint: usize,
    pub replicates: usize,
    pub global_mean: f64,
    pub global_sd: f64,
    pub local_mean: Option<f64>,
    pub local_sd: Option<f64>,
}

fn mean_sd(v: &[f64]) -> (f64, f64) {
    let n = v.len() as f64;
    let m = v.iter().sum::<f64>() / n;
    let var = if v.len() > 1 {
        v.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (n - 1.0)
    } else {
        0.0
    };
    (m, var.sqrt())
}

/// Mean and sample standard deviation across replicates, per method and checkpoint.
pub fn summarize(rows: &[MetricsRow]) -> Vec<SummaryRow> {
    let mut keys: Vec<(String, usize)> = rows.iter().map(|r| (r.method.clone(), r.checkpoint)).collect();
    keys.sort();
    keys.dedup();
    keys.into_iter()
        .map(|(method, checkpoint)| {
            let sel: Vec<&MetricsRow> = rows.iter().filter(|r| r.method == method && r.checkpoint == checkpoint).collect();
            let g: Vec<f64> = sel.iter().map(|r| r.global_nrmsep).collect();
            let l: Vec<f64> = sel.iter().filter_map(|r| r.local_nrmsep).collect();
            let (global_mean, global_sd) = mean_sd(&g);
            let (local_mean, local_sd) = if l.is_empty() {
                (None, None)
            } else {
                let (m, s) = mean_sd(&l);
                (Some(m), Some(s))
            };
            SummaryRow {
                method,
                checkpoint,
                replicates: sel.len(),
                global_mean,
                global_sd,
                local_mean,
                local_sd,
            }
        })
        .collect()
}
