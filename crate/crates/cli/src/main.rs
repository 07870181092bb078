use std::path::PathBuf;

use anyhow::{Context, Result};
use clap::{Args, Parser, Subcommand};
use dgpgrad::dgp::DgpConfig;
use dgpgrad_cli::commands;
use dgpgrad_cli::ExperimentConfig;

#[derive(Parser)]
#[command(name = "dgpgrad", version, about = "Deep GP emulators with gradient posteriors and gradient-entropy sequential design")]
struct Cli {
    /// Worker threads for parallel sections (defaults to all cores).
    #[arg(long, global = true)]
    threads: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Train a DGP emulator on a CSV data file and save it as JSON.
    Fit {
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Input box as lo:hi,lo:hi,... (defaults to the data range).
        #[arg(long)]
        bounds: Option<String>,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// SEM iterations.
        #[arg(long)]
        iterations: Option<usize>,
    },
    /// Predictive mean, variance and gradient posterior at points from a CSV file.
    Predict {
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        points: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Gradient-accuracy benchmark on the sin test function.
    GradBench(ExperimentArgs),
    /// Replicated sequential-design benchmark.
    DesignBench(ExperimentArgs),
    /// One design run, appending to its acquisition log after every step.
    DesignRun {
        #[command(flatten)]
        exp: ExperimentArgs,
        /// Acquisition strategy (gradent, gradent-rms, alm).
        #[arg(long, default_value = "gradent")]
        method: String,
        /// Log file; defaults to <out-dir>/<method>_seed<seed>.csv.
        #[arg(long)]
        log: Option<PathBuf>,
    },
}

#[derive(Args)]
struct ExperimentArgs {
    /// TOML experiment config; every key is optional.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    out_dir: Option<PathBuf>,
    /// Base seed; replicate i uses seed + i.
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    replicates: Option<usize>,
    /// Comma-separated method list.
    #[arg(long, value_delimiter = ',')]
    methods: Option<Vec<String>>,
    #[arg(long)]
    n0: Option<usize>,
    #[arg(long)]
    n_total: Option<usize>,
    #[arg(long)]
    n_cand: Option<usize>,
    #[arg(long)]
    checkpoint_stride: Option<usize>,
}

impl ExperimentArgs {
    fn resolve(&self) -> Result<ExperimentConfig> {
        let mut cfg = match &self.config {
            Some(p) => ExperimentConfig::load(p)?,
            None => ExperimentConfig::default(),
        };
        if let Some(v) = &self.out_dir {
            cfg.output_dir = v.clone();
        }
        if let Some(v) = self.seed {
            cfg.base_seed = v;
        }
        if let Some(v) = self.replicates {
            cfg.replicates = v;
        }
        if let Some(v) = &self.methods {
            cfg.methods = v.clone();
        }
        if let Some(v) = self.n0 {
            cfg.design.n0 = v;
        }
        if let Some(v) = self.n_total {
            cfg.design.n_total = v;
        }
        if let Some(v) = self.n_cand {
            cfg.design.n_cand = v;
        }
        if let Some(v) = self.checkpoint_stride {
            cfg.design.checkpoint_stride = v;
        }
        cfg.validate()?;
        Ok(cfg)
    }
}

fn main() -> Result<()> {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = Cli::parse();
    if let Some(n) = cli.threads {
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .context("configuring thread pool")?;
    }
    match cli.command {
        Command::Fit {
            data,
            out,
            bounds,
            seed,
            iterations,
        } => {
            let bounds = bounds.as_deref().map(commands::parse_bounds).transpose()?;
            let mut cfg = DgpConfig {
                seed,
                ..DgpConfig::default()
            };
            if let Some(it) = iterations {
                cfg.iterations = it;
            }
            commands::fit(&data, &out, bounds, &cfg)?;
            log::info!("model written to {}", out.display());
        }
        Command::Predict { model, points, out } => {
            commands::predict(&model, &points, &out)?;
            log::info!("predictions written to {}", out.display());
        }
        Command::GradBench(args) => {
            let p = commands::grad_bench(&args.resolve()?)?;
            log::info!("results written to {}", p.display());
        }
        Command::DesignBench(args) => {
            let p = commands::design_bench(&args.resolve()?)?;
            log::info!("results written to {}", p.display());
        }
        Command::DesignRun { exp, method, log } => {
            let cfg = exp.resolve()?;
            let seed = cfg.base_seed;
            let path = log.unwrap_or_else(|| cfg.output_dir.join(format!("{method}_seed{seed}.csv")));
            commands::design_run(&cfg, &method, seed, &path)?;
            log::info!("acquisition log written to {}", path.display());
        }
    }
    Ok(())
}
