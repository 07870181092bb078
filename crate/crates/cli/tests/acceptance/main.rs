//! Acceptance suite. Prints one PASS/FAIL line per criterion. A failing
//! criterion is reported, not fatal, unless `--strict` is given, so that the
//! workspace test run still completes and records every verdict.
//!
//! Flags (after `--`):
//!   --strict      exit nonzero if any criterion fails
//!   --quick       skip the long design and gradient benchmarks (7, 8, 9)
//!   --full        also run the Lorenz-63 design benchmark under criterion 10
//!   --only N,M    run only the listed criteria

mod criteria;
mod stats;

use std::process::ExitCode;
use std::time::Instant;

use criteria::Check;

struct Options {
    strict: bool,
    quick: bool,
    full: bool,
    only: Option<Vec<usize>>,
}

fn parse_args() -> Options {
    let args: Vec<String> = std::env::args().skip(1).collect();
    let mut opts = Options {
        strict: false,
        quick: false,
        full: false,
        only: None,
    };
    let mut i = 0;
    while i < args.len() {
        match args[i].as_str() {
            "--strict" => opts.strict = true,
            "--quick" => opts.quick = true,
            "--full" => opts.full = true,
            "--only" if i + 1 < args.len() => {
                i += 1;
                opts.only = Some(args[i].split(',').filter_map(|v| v.trim().parse().ok()).collect());
            }
            // cargo test passes harness flags through; ignore them
            _ => {}
        }
        i += 1;
    }
    opts
}

fn report(id: usize, name: &str, started: Instant, result: anyhow::Result<Check>, tally: &mut (usize, usize)) -> bool {
    let secs = started.elapsed().as_secs_f64();
    let (passed, detail) = match result {
        Ok(c) => (c.passed, c.detail),
        Err(e) => (false, format!("error: {e:#}")),
    };
    println!(
        "criterion {id:>2} {} {name}: {detail} [{secs:.1}s]",
        if passed { "PASS" } else { "FAIL" }
    );
    if passed {
        tally.0 += 1;
    } else {
        tally.1 += 1;
    }
    passed
}

fn main() -> ExitCode {
    let _ = env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("error")).try_init();
    let opts = parse_args();
    let wanted = |id: usize| opts.only.as_ref().map_or(true, |v| v.contains(&id));
    let long = |id: usize| opts.only.as_ref().is_some_and(|v| v.contains(&id)) || !opts.quick;
    let mut all_ok = true;
    let mut tally = (0usize, 0usize);

    let simple: [(usize, &str, fn() -> anyhow::Result<Check>); 6] = [
        (1, "analytic gradient matches finite differences", criteria::gradient_mean_consistency),
        (2, "linked-GP closed forms match Monte Carlo", criteria::lgp_closed_forms),
        (3, "noncentral chi CDF and exceedance probability", criteria::noncentral_chi),
        (4, "squared gradient-norm moments", criteria::gradnorm_moments),
        (5, "elliptical slice sampler targets the right posterior", criteria::ess_correctness),
        (6, "Pareto frontier matches brute force", criteria::pareto),
    ];
    for (id, name, f) in simple {
        if wanted(id) {
            let t = Instant::now();
            all_ok &= report(id, name, t, f(), &mut tally);
        }
    }
    if wanted(7) && long(7) {
        let t = Instant::now();
        all_ok &= report(7, "DGP gradients beat GP and finite differences", t, criteria::gradient_benchmark(), &mut tally);
    }
    if (wanted(8) && long(8)) || (wanted(9) && long(9)) {
        let t = Instant::now();
        match criteria::plateau_design() {
            Ok((c8, c9)) => {
                if wanted(8) {
                    all_ok &= report(8, "plateau design accuracy", t, Ok(c8), &mut tally);
                }
                if wanted(9) {
                    all_ok &= report(9, "GradEnt samples concentrate at the transition", t, Ok(c9), &mut tally);
                }
            }
            Err(e) => {
                let msg = format!("{e:#}");
                for id in [8, 9] {
                    if wanted(id) {
                        all_ok &= report(id, "plateau design", t, Err(anyhow::anyhow!(msg.clone())), &mut tally);
                    }
                }
            }
        }
    }
    if wanted(10) {
        let t = Instant::now();
        all_ok &= report(10, "Lorenz-63 physics", t, criteria::lorenz_physics(), &mut tally);
        if opts.full {
            let t = Instant::now();
            all_ok &= report(10, "Lorenz-63 design benchmark", t, criteria::lorenz_benchmark(), &mut tally);
        } else {
            println!("criterion 10 SKIP Lorenz-63 design benchmark: run with --full");
        }
    }
    if wanted(11) {
        let t = Instant::now();
        all_ok &= report(11, "reruns are byte-identical", t, criteria::determinism(), &mut tally);
    }
    if opts.quick && opts.only.is_none() {
        println!("criteria 7, 8, 9 SKIP: quick mode");
    }
    println!("acceptance: {} passed, {} failed", tally.0, tally.1);
    if all_ok || !opts.strict {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
