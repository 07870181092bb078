//! Subcommand bodies, callable without going through argument parsing.

use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use dgpgrad::dgp::{load_model, save_model, DgpConfig, DgpEmulator};
use dgpgrad::design::{run_design_with, DesignConfig, StrategyRegistry};
use dgpgrad::emulator::{Emulator, EmulatorRegistry};
use dgpgrad::testbeds::TestbedRegistry;
use nalgebra::DMatrix;

use crate::bench::{run_design_benchmark, run_gradient_benchmark, DesignBenchOutput};
use crate::config::ExperimentConfig;
use crate::metrics::summarize;
use crate::output::{write_acquisition_log, write_csv, LiveLog, Manifest};

/// Input rows and outputs from a CSV with one column per input and a `y` column.
pub fn read_data(path: &Path) -> Result<(DMatrix<f64>, Vec<f64>)> {
    let mut r = csv::Reader::from_path(path).with_context(|| format!("reading {}", path.display()))?;
    let header = r.headers()?.clone();
    let y_col = header.iter().position(|h| h == "y");
    let x_cols: Vec<usize> = (0..header.len()).filter(|&i| Some(i) != y_col).collect();
    let mut xs = Vec::new();
    let mut ys = Vec::new();
    for (line, rec) in r.records().enumerate() {
        let rec = rec?;
        let parse = |i: usize| -> Result<f64> {
            rec[i]
                .trim()
                .parse::<f64>()
                .with_context(|| format!("row {}: bad number '{}'", line + 2, &rec[i]))
        };
        for &i in &x_cols {
            xs.push(parse(i)?);
        }
        if let Some(i) = y_col {
            ys.push(parse(i)?);
        }
    }
    let d = x_cols.len();
    if d == 0 {
        bail!("no input columns in {}", path.display());
    }
    let n = xs.len() / d;
    Ok((DMatrix::from_row_slice(n, d, &xs), ys))
}

/// `lo:hi` pairs separated by commas.
pub fn parse_bounds(s: &str) -> Result<Vec<(f64, f64)>> {
    s.split(',')
        .map(|p| {
            let (a, b) = p.split_once(':').with_context(|| format!("bound '{p}' is not lo:hi"))?;
            Ok((a.trim().parse()?, b.trim().parse()?))
        })
        .collect()
}

fn data_bounds(x: &DMatrix<f64>) -> Vec<(f64, f64)> {
    (0..x.ncols())
        .map(|k| {
            let c = x.column(k);
            (c.min(), c.max())
        })
        .collect()
}

pub fn fit(data: &Path, out: &Path, bounds: Option<Vec<(f64, f64)>>, cfg: &DgpConfig) -> Result<()> {
    let (x, y) = read_data(data)?;
    if y.len() != x.nrows() {
        bail!("data file needs a 'y' column");
    }
    let bounds = bounds.unwrap_or_else(|| data_bounds(&x));
    let em = DgpEmulator::fit(&x, &y, &bounds, cfg)?;
    save_model(&em, out)?;
    Ok(())
}

pub fn predict(model: &Path, points: &Path, out: &Path) -> Result<()> {
    let em = load_model(model)?;
    let (x, _) = read_data(points)?;
    let d = em.dim();
    if x.ncols() != d {
        bail!("model has {d} inputs, points file has {}", x.ncols());
    }
    let mut w = csv::Writer::from_path(out)?;
    let mut header: Vec<String> = (1..=d).map(|i| format!("x{i}")).collect();
    header.extend(["mean".to_string(), "variance".to_string()]);
    header.extend((1..=d).map(|i| format!("grad_mean{i}")));
    header.extend((1..=d).map(|i| format!("grad_var{i}")));
    w.write_record(&header)?;
    for i in 0..x.nrows() {
        let p: Vec<f64> = x.row(i).iter().copied().collect();
        let (pred, grad) = em.posterior(&p)?;
        let mut f: Vec<String> = p.iter().map(|v| v.to_string()).collect();
        f.push(pred.mean.to_string());
        f.push(pred.variance.to_string());
        f.extend(grad.mean.iter().map(|v| v.to_string()));
        f.extend((0..d).map(|k| grad.cov[(k, k)].to_string()));
        w.write_record(&f)?;
    }
    w.flush()?;
    Ok(())
}

pub fn grad_bench(cfg: &ExperimentConfig) -> Result<PathBuf> {
    let dir = cfg.output_dir.clone();
    std::fs::create_dir_all(&dir)?;
    let rows = run_gradient_benchmark(cfg)?;
    let path = dir.join("grad_bench.csv");
    write_csv(&path, &rows)?;
    let mut m = Manifest::new("grad-bench", cfg)?;
    m.add_file(&dir, &path)?;
    m.write(&dir)?;
    Ok(path)
}

/// Writes metrics, a per-checkpoint summary, timings, failures and one
/// acquisition log per run under the output directory.
pub fn design_bench(cfg: &ExperimentConfig) -> Result<PathBuf> {
    let out = run_design_benchmark(cfg)?;
    write_design_outputs(cfg, &out)
}

pub fn write_design_outputs(cfg: &ExperimentConfig, out: &DesignBenchOutput) -> Result<PathBuf> {
    let dir = cfg.output_dir.clone();
    let logs = dir.join("logs");
    std::fs::create_dir_all(&logs)?;
    let mut m = Manifest::new("design-bench", cfg)?;
    let metrics = out.metrics();
    let files = [
        ("metrics.csv", write_csv(&dir.join("metrics.csv"), &metrics)),
        ("summary.csv", write_csv(&dir.join("summary.csv"), &summarize(&metrics))),
        ("failures.csv", write_csv(&dir.join("failures.csv"), &out.failures())),
    ];
    for (name, res) in files {
        res?;
        m.add_file(&dir, &dir.join(name))?;
    }
    write_csv(&dir.join("timings.csv"), &out.timings())?;
    for r in &out.runs {
        if let Ok((trace, _)) = &r.result {
            let p = logs.join(format!("{}_rep{}.csv", r.method, r.replicate));
            write_acquisition_log(&p, trace)?;
            m.add_file(&dir, &p)?;
        }
    }
    m.write(&dir)?;
    Ok(dir.join("metrics.csv"))
}

/// A single design run whose acquisition log grows as points are added.
pub fn design_run(cfg: &ExperimentConfig, method: &str, seed: u64, log_path: &Path) -> Result<()> {
    let target = TestbedRegistry::default().build(&cfg.testbed)?;
    let strategy = StrategyRegistry::default().build(method)?;
    let builder = EmulatorRegistry::default().build(cfg.emulator_for(method), &cfg.emulator)?;
    let dcfg = DesignConfig {
        seed,
        ..cfg.design.clone()
    };
    if let Some(parent) = log_path.parent() {
        std::fs::create_dir_all(parent)?;
    }
    let mut log = LiveLog::create(log_path, target.dim(), dcfg.n0)?;
    run_design_with(target.as_ref(), &dcfg, strategy.as_ref(), builder.as_ref(), &mut |s| {
        log.update(s, seed).map_err(|e| dgpgrad::Error::Serialization(e.to_string()))
    })?;
    Ok(())
}
