//! Experiment configuration, read from TOML. Every field has a default, so a
//! config file only lists what it changes.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use dgpgrad::design::DesignConfig;
use dgpgrad::emulator::EmulatorSettings;
use dgpgrad::testbeds::TestbedSpec;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub name: String,
    pub testbed: TestbedSpec,
    /// Acquisition strategies for the design benchmark.
    pub methods: Vec<String>,
    /// Emulator kind (`gp` or `dgp`) behind each acquisition method; unlisted
    /// methods use `dgp`.
    pub method_emulators: BTreeMap<String, String>,
    pub design: DesignConfig,
    pub emulator: EmulatorSettings,
    pub replicates: usize,
    pub base_seed: u64,
    pub output_dir: PathBuf,
    pub test_sets: TestSetConfig,
    pub grad_bench: GradBenchConfig,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            name: "experiment".into(),
            testbed: TestbedSpec::default(),
            methods: vec!["gradent".into(), "alm".into()],
            method_emulators: BTreeMap::from([("alm".to_string(), "gp".to_string())]),
            design: DesignConfig::default(),
            emulator: EmulatorSettings::default(),
            replicates: 3,
            base_seed: 0,
            output_dir: PathBuf::from("results"),
            test_sets: TestSetConfig::default(),
            grad_bench: GradBenchConfig::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TestSetConfig {
    pub global: usize,
    pub local: usize,
}

impl Default for TestSetConfig {
    fn default() -> Self {
        Self { global: 400, local: 200 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GradCase {
    pub dim: usize,
    pub n: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct GradBenchConfig {
    /// Testbed name; its dimension comes from each case.
    pub testbed: String,
    pub cases: Vec<GradCase>,
    pub methods: Vec<String>,
    pub n_test: usize,
    pub fd_step: f64,
}

impl Default for GradBenchConfig {
    fn default() -> Self {
        Self {
            testbed: "sin".into(),
            cases: vec![GradCase { dim: 1, n: 50 }, GradCase { dim: 2, n: 100 }],
            methods: vec!["gp-grad".into(), "dgp".into(), "dgp-fd".into()],
            n_test: 400,
            fd_step: 1e-6,
        }
    }
}

impl ExperimentConfig {
    pub fn emulator_for(&self, method: &str) -> &str {
        self.method_emulators.get(method).map(String::as_str).unwrap_or("dgp")
    }

    pub fn from_toml(s: &str) -> Result<Self> {
        let cfg: Self = toml::from_str(s).context("parsing experiment config")?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let s = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
        Self::from_toml(&s)
    }

    pub fn to_toml(&self) -> Result<String> {
        Ok(toml::to_string(self)?)
    }

    pub fn validate(&self) -> Result<()> {
        if self.replicates < 1 {
            bail!("replicates must be at least 1");
        }
        if self.methods.is_empty() {
            bail!("no methods configured");
        }
        self.design.validate()?;
        self.emulator.dgp.validate()?;
        if self.test_sets.global < 2 {
            bail!("global test set needs at least two points");
        }
        if self.grad_bench.n_test < 1 || !(self.grad_bench.fd_step > 0.0) {
            bail!("gradient benchmark needs test points and a positive FD step");
        }
        Ok(())
    }
}
