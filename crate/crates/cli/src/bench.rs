//! Gradient-accuracy and sequential-design benchmarks.

use std::collections::BTreeMap;
use std::sync::Arc;

use anyhow::{anyhow, bail, Context, Result};
use dgpgrad::design::{run_design, DesignConfig, DesignTrace, StrategyRegistry};
use dgpgrad::emulator::{Emulator, EmulatorRegistry};
use dgpgrad::mathcore::{maximin_lhs_with_rng, DEFAULT_MAXIMIN_DRAWS};
use dgpgrad::testbeds::{fd_gradient, Testbed, TestbedRegistry, TestbedSpec};
use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::config::ExperimentConfig;
use crate::metrics::{grad_nrmse, nrmsep, GradRow, MetricsRow, TimingRow};

/// Random stream ids; every stream of replicate `i` is seeded with `base + i`.
const STREAM_TRAIN: u64 = 1;
const STREAM_TEST: u64 = 2;
const STREAM_LOCAL: u64 = 3;

pub fn replicate_rng(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

fn rows(x: &DMatrix<f64>) -> Vec<Vec<f64>> {
    (0..x.nrows()).map(|i| x.row(i).iter().copied().collect()).collect()
}

/// Gradient of one trained emulator at a test point.
pub trait GradientMethod: Send + Sync {
    fn name(&self) -> &str;
    /// Emulator registry key this method needs.
    fn emulator(&self) -> &str;
    fn gradient(&self, em: &dyn Emulator, x: &[f64], bounds: &[(f64, f64)]) -> Result<Vec<f64>>;
}

pub struct AnalyticGradient {
    name: &'static str,
    emulator: &'static str,
}

impl GradientMethod for AnalyticGradient {
    fn name(&self) -> &str {
        self.name
    }
    fn emulator(&self) -> &str {
        self.emulator
    }
    fn gradient(&self, em: &dyn Emulator, x: &[f64], _bounds: &[(f64, f64)]) -> Result<Vec<f64>> {
        Ok(em.gradient(x)?.mean.iter().copied().collect())
    }
}

/// Finite differences of the predictive mean.
pub struct FdGradientMethod {
    name: &'static str,
    emulator: &'static str,
    step: f64,
}

impl GradientMethod for FdGradientMethod {
    fn name(&self) -> &str {
        self.name
    }
    fn emulator(&self) -> &str {
        self.emulator
    }
    fn gradient(&self, em: &dyn Emulator, x: &[f64], bounds: &[(f64, f64)]) -> Result<Vec<f64>> {
        Ok(fd_gradient(|p| em.predict(p).map(|q| q.mean), x, self.step, Some(bounds))?.gradient)
    }
}

pub fn gradient_method(name: &str, fd_step: f64) -> Result<Box<dyn GradientMethod>> {
    Ok(match name {
        "gp-grad" => Box::new(AnalyticGradient {
            name: "gp-grad",
            emulator: "gp",
        }),
        "dgp" => Box::new(AnalyticGradient {
            name: "dgp",
            emulator: "dgp",
        }),
        "dgp-fd" => Box::new(FdGradientMethod {
            name: "dgp-fd",
            emulator: "dgp",
            step: fd_step,
        }),
        "gp-fd" => Box::new(FdGradientMethod {
            name: "gp-fd",
            emulator: "gp",
            step: fd_step,
        }),
        other => bail!("unknown gradient method '{other}' (known: gp-grad, dgp, dgp-fd, gp-fd)"),
    })
}

/// Gradient accuracy of each configured method on every (dim, n) case and replicate.
pub fn run_gradient_benchmark(cfg: &ExperimentConfig) -> Result<Vec<GradRow>> {
    let gb = &cfg.grad_bench;
    let methods = gb
        .methods
        .iter()
        .map(|m| gradient_method(m, gb.fd_step))
        .collect::<Result<Vec<_>>>()?;
    let testbeds = TestbedRegistry::default();
    let emulators = EmulatorRegistry::default();
    let mut jobs = Vec::new();
    for case in &gb.cases {
        for r in 0..cfg.replicates {
            jobs.push((case.clone(), r));
        }
    }
    let per_job = jobs
        .par_iter()
        .map(|(case, r)| -> Result<Vec<GradRow>> {
            let seed = cfg.base_seed + *r as u64;
            let spec = TestbedSpec {
                name: gb.testbed.clone(),
                dim: case.dim,
                ..TestbedSpec::default()
            };
            let target = testbeds.build(&spec)?;
            let bounds = target.bounds();
            let x = maximin_lhs_with_rng(&mut replicate_rng(seed, STREAM_TRAIN), case.n, &bounds, DEFAULT_MAXIMIN_DRAWS)?;
            let y = rows(&x).iter().map(|p| target.evaluate(p)).collect::<dgpgrad::Result<Vec<_>>>()?;
            let test = rows(&maximin_lhs_with_rng(
                &mut replicate_rng(seed, STREAM_TEST),
                gb.n_test.max(2),
                &bounds,
                DEFAULT_MAXIMIN_DRAWS,
            )?);
            let truth = test
                .iter()
                .map(|p| {
                    target
                        .gradient(p)
                        .ok_or_else(|| anyhow!("testbed '{}' has no analytic gradient", spec.name))?
                        .map_err(Into::into)
                })
                .collect::<Result<Vec<_>>>()?;
            let mut trained: BTreeMap<String, Arc<dyn Emulator>> = BTreeMap::new();
            let mut out = Vec::new();
            for m in &methods {
                if !trained.contains_key(m.emulator()) {
                    let b = emulators.build(m.emulator(), &cfg.emulator)?;
                    trained.insert(m.emulator().to_string(), b.fit(&x, &y, &bounds, seed)?);
                }
                let em = trained[m.emulator()].as_ref();
                let pred = test.iter().map(|p| m.gradient(em, p, &bounds)).collect::<Result<Vec<_>>>()?;
                let e = grad_nrmse(&pred, &truth)?;
                out.push(GradRow {
                    dim: case.dim,
                    n: case.n,
                    method: m.name().to_string(),
                    replicate: *r,
                    seed,
                    nrmse: e.nrmse,
                    excluded: e.excluded,
                });
            }
            Ok(out)
        })
        .collect::<Vec<_>>();
    let mut all = Vec::new();
    for r in per_job {
        all.extend(r?);
    }
    Ok(all)
}

#[derive(Debug, Clone)]
pub struct TestSets {
    pub global: Vec<Vec<f64>>,
    pub global_y: Vec<f64>,
    pub local: Vec<Vec<f64>>,
    pub local_y: Vec<f64>,
}

fn collides(p: &[f64], train: &[Vec<f64>]) -> bool {
    train
        .iter()
        .any(|t| t.iter().zip(p).map(|(a, b)| (a - b).powi(2)).sum::<f64>().sqrt() < 1e-9)
}

fn uniform_point(rng: &mut ChaCha8Rng, bounds: &[(f64, f64)]) -> Vec<f64> {
    bounds.iter().map(|(lo, hi)| rng.gen_range(*lo..*hi)).collect()
}

/// Held-out points for replicate seed `seed`: a maximin Latin hypercube over
/// the domain and, when the testbed defines one, points drawn uniformly from
/// its local region. Points within 1e-9 of a training input are redrawn.
pub fn make_test_sets(target: &dyn Testbed, cfg: &ExperimentConfig, seed: u64, train: &[Vec<f64>]) -> Result<TestSets> {
    let bounds = target.bounds();
    let mut rng = replicate_rng(seed, STREAM_TEST);
    let mut global = rows(&maximin_lhs_with_rng(&mut rng, cfg.test_sets.global, &bounds, DEFAULT_MAXIMIN_DRAWS)?);
    for p in global.iter_mut() {
        while collides(p, train) {
            *p = uniform_point(&mut rng, &bounds);
        }
    }
    let mut local = Vec::new();
    if target.local_width().is_some() && cfg.test_sets.local > 0 {
        let mut rng = replicate_rng(seed, STREAM_LOCAL);
        let mut tries = 0usize;
        while local.len() < cfg.test_sets.local {
            tries += 1;
            if tries > 1_000_000 * cfg.test_sets.local.max(1) {
                bail!("could not sample the local test region");
            }
            let p = uniform_point(&mut rng, &bounds);
            if target.in_local_region(&p) && !collides(&p, train) {
                local.push(p);
            }
        }
    }
    let eval = |pts: &Vec<Vec<f64>>| -> Result<Vec<f64>> {
        pts.par_iter()
            .map(|p| target.evaluate(p).with_context(|| format!("evaluating test point {p:?}")))
            .collect()
    };
    Ok(TestSets {
        global_y: eval(&global)?,
        local_y: eval(&local)?,
        global,
        local,
    })
}

pub fn evaluate_emulator(em: &dyn Emulator, sets: &TestSets) -> Result<(f64, Option<f64>)> {
    let mean = |pts: &Vec<Vec<f64>>| -> Result<Vec<f64>> { pts.iter().map(|p| Ok(em.predict(p)?.mean)).collect() };
    let g = nrmsep(&mean(&sets.global)?, &sets.global_y)?;
    let l = if sets.local.len() >= 2 {
        Some(nrmsep(&mean(&sets.local)?, &sets.local_y)?)
    } else {
        None
    };
    Ok((g, l))
}

#[derive(Clone)]
pub struct RunOutcome {
    pub method: String,
    pub replicate: usize,
    pub seed: u64,
    pub result: std::result::Result<(DesignTrace, Vec<MetricsRow>), String>,
}

pub struct DesignBenchOutput {
    pub runs: Vec<RunOutcome>,
}

impl DesignBenchOutput {
    pub fn metrics(&self) -> Vec<MetricsRow> {
        self.runs
            .iter()
            .filter_map(|r| r.result.as_ref().ok())
            .flat_map(|(_, m)| m.iter().cloned())
            .collect()
    }

    pub fn timings(&self) -> Vec<TimingRow> {
        let mut out = Vec::new();
        for r in &self.runs {
            if let Ok((trace, _)) = &r.result {
                for s in trace.steps() {
                    out.push(TimingRow {
                        method: r.method.clone(),
                        replicate: r.replicate,
                        iteration: s.iteration,
                        wall_time: s.wall_time,
                    });
                }
            }
        }
        out
    }

    pub fn failures(&self) -> Vec<(String, usize, String)> {
        self.runs
            .iter()
            .filter_map(|r| r.result.as_ref().err().map(|e| (r.method.clone(), r.replicate, e.clone())))
            .collect()
    }
}

/// One design run with checkpoint metrics.
pub fn run_one(cfg: &ExperimentConfig, method: &str, replicate: usize) -> Result<(DesignTrace, Vec<MetricsRow>)> {
    let seed = cfg.base_seed + replicate as u64;
    let target = TestbedRegistry::default().build(&cfg.testbed)?;
    let strategy = StrategyRegistry::default().build(method)?;
    let builder = EmulatorRegistry::default().build(cfg.emulator_for(method), &cfg.emulator)?;
    let dcfg = DesignConfig {
        seed,
        ..cfg.design.clone()
    };
    let trace = run_design(target.as_ref(), &dcfg, strategy.as_ref(), builder.as_ref())?;
    let train = rows(&trace.state.x);
    let sets = make_test_sets(target.as_ref(), cfg, seed, &train)?;
    let metrics = trace
        .snapshots
        .iter()
        .map(|s| {
            let (g, l) = evaluate_emulator(s.emulator.as_ref(), &sets)?;
            Ok(MetricsRow {
                method: method.to_string(),
                replicate,
                seed,
                checkpoint: s.n,
                global_nrmsep: g,
                local_nrmsep: l,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok((trace, metrics))
}

/// Every configured method on every replicate. A failed run is recorded and
/// does not stop the others.
pub fn run_design_benchmark(cfg: &ExperimentConfig) -> Result<DesignBenchOutput> {
    cfg.validate()?;
    let registry = StrategyRegistry::default();
    for m in &cfg.methods {
        registry.build(m)?;
    }
    let jobs: Vec<(String, usize)> = cfg
        .methods
        .iter()
        .flat_map(|m| (0..cfg.replicates).map(move |r| (m.clone(), r)))
        .collect();
    let runs = jobs
        .par_iter()
        .map(|(m, r)| {
            let result = run_one(cfg, m, *r).map_err(|e| format!("{e:#}"));
            if let Err(e) = &result {
                log::error!("{m} replicate {r} failed: {e}");
            }
            RunOutcome {
                method: m.clone(),
                replicate: *r,
                seed: cfg.base_seed + *r as u64,
                result,
            }
        })
        .collect();
    Ok(DesignBenchOutput { runs })
}
