//! CSV persistence and the per-experiment manifest.

use std::collections::BTreeMap;
use std::fs::File;
use std::io::Write;
use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use dgpgrad::design::{DesignState, DesignTrace, StepRecord};
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::config::ExperimentConfig;

pub fn write_csv<T: Serialize>(path: &Path, rows: &[T]) -> Result<()> {
    let mut w = csv::Writer::from_path(path).with_context(|| format!("creating {}", path.display()))?;
    for r in rows {
        w.serialize(r)?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_csv<T: DeserializeOwned>(path: &Path) -> Result<Vec<T>> {
    let mut r = csv::Reader::from_path(path).with_context(|| format!("reading {}", path.display()))?;
    r.deserialize().map(|row| row.map_err(Into::into)).collect()
}

pub fn acquisition_header(d: usize) -> Vec<String> {
    let mut h = vec!["iteration".to_string()];
    h.extend((1..=d).map(|i| format!("x{i}")));
    h.extend(["y", "L_DGP", "p_x", "j_ent", "pred_var", "frontier_size", "seed"].map(String::from));
    h
}

fn opt(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

fn initial_fields(x: &[f64], y: f64, seed: u64) -> Vec<String> {
    let mut f = vec!["0".to_string()];
    f.extend(x.iter().map(|v| v.to_string()));
    f.push(y.to_string());
    f.extend(["", "", "", "", ""].map(String::from));
    f.push(seed.to_string());
    f
}

pub fn step_record_fields(s: &StepRecord, seed: u64) -> Vec<String> {
    let mut f = vec![s.iteration.to_string()];
    f.extend(s.x.iter().map(|v| v.to_string()));
    f.extend([
        s.y.to_string(),
        opt(s.l_dgp),
        s.p_x.to_string(),
        s.j_ent.to_string(),
        s.pred_var.to_string(),
        s.frontier_size.to_string(),
        seed.to_string(),
    ]);
    f
}

/// Initial design rows (iteration 0, acquisition columns empty) followed by
/// one row per acquisition.
pub fn write_acquisition_log(path: &Path, trace: &DesignTrace) -> Result<()> {
    let d = trace.initial_x.ncols();
    let mut w = csv::Writer::from_path(path).with_context(|| format!("creating {}", path.display()))?;
    w.write_record(acquisition_header(d))?;
    for i in 0..trace.initial_x.nrows() {
        let x: Vec<f64> = (0..d).map(|k| trace.initial_x[(i, k)]).collect();
        w.write_record(initial_fields(&x, trace.initial_y[i], trace.seed))?;
    }
    for s in trace.steps() {
        w.write_record(step_record_fields(s, trace.seed))?;
    }
    w.flush()?;
    Ok(())
}

/// Appends rows to an acquisition log as a run progresses.
pub struct LiveLog {
    file: File,
    n0: usize,
    started: bool,
}

impl LiveLog {
    pub fn create(path: &Path, d: usize, n0: usize) -> Result<Self> {
        let mut file = File::create(path).with_context(|| format!("creating {}", path.display()))?;
        writeln!(file, "{}", acquisition_header(d).join(","))?;
        Ok(Self {
            file,
            n0,
            started: false,
        })
    }

    /// Writes the newest acquisition, preceded by the initial design on the first call.
    pub fn update(&mut self, state: &DesignState, seed: u64) -> Result<()> {
        if !self.started {
            for i in 0..self.n0 {
                let x: Vec<f64> = state.x.row(i).iter().copied().collect();
                writeln!(self.file, "{}", initial_fields(&x, state.y[i], seed).join(","))?;
            }
            self.started = true;
        }
        if let Some(s) = state.log.last() {
            writeln!(self.file, "{}", step_record_fields(s, seed).join(","))?;
        }
        self.file.flush()?;
        Ok(())
    }
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub command: String,
    pub config_sha256: String,
    pub config: ExperimentConfig,
    /// Output file name to content hash.
    pub files: BTreeMap<String, String>,
}

impl Manifest {
    pub fn new(command: &str, config: &ExperimentConfig) -> Result<Self> {
        Ok(Self {
            command: command.to_string(),
            config_sha256: sha256_hex(config.to_toml()?.as_bytes()),
            config: config.clone(),
            files: BTreeMap::new(),
        })
    }

    pub fn add_file(&mut self, dir: &Path, path: &Path) -> Result<()> {
        let bytes = std::fs::read(path).with_context(|| format!("hashing {}", path.display()))?;
        let name = path.strip_prefix(dir).unwrap_or(path).to_string_lossy().into_owned();
        self.files.insert(name, sha256_hex(&bytes));
        Ok(())
    }

    pub fn write(&self, dir: &Path) -> Result<PathBuf> {
        let path = dir.join("manifest.toml");
        std::fs::write(&path, toml::to_string(self)?)?;
        Ok(path)
    }
}
