use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use regime_harvest::cli::{self, Overrides};
use regime_harvest::config::ExperimentConfig;
use regime_harvest::Error;

#[derive(Parser)]
#[command(name = "regime-harvest", version, about = "Optimal harvesting and stocking under regime switching")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Common {
    /// Experiment file.
    #[arg(long)]
    config: PathBuf,
    /// Output directory.
    #[arg(long, default_value = "out")]
    out: PathBuf,
    /// Worker threads (default: all cores).
    #[arg(long)]
    threads: Option<usize>,
    /// Monte Carlo seed override.
    #[arg(long)]
    seed: Option<u64>,
    /// Population mesh override.
    #[arg(long = "grid-h")]
    grid_h: Option<f64>,
}

#[derive(Subcommand)]
enum Command {
    /// Solve for the value function and policy.
    Solve(Common),
    /// Monte Carlo estimates of the computed policy.
    Simulate {
        #[command(flatten)]
        common: Common,
        /// Solution CSV from `solve`; solved afresh when omitted.
        #[arg(long)]
        policy: Option<PathBuf>,
        /// Allowed bias between the estimate and the chain value.
        #[arg(long, default_value_t = 0.05)]
        slack: f64,
    },
    /// Solve once per value of a parameter.
    Sweep {
        #[command(flatten)]
        common: Common,
        /// Dotted config path, e.g. dynamics.switching_rate.
        #[arg(long)]
        param: Option<String>,
        /// Comma-separated values; `inf` is accepted.
        #[arg(long, value_delimiter = ',')]
        values: Option<Vec<f64>>,
    },
    /// Exhaustive local consistency check of the kernel.
    Check {
        #[command(flatten)]
        common: Common,
        #[arg(long, default_value_t = 1e-12)]
        tolerance: f64,
    },
    /// Write every kernel row as CSV.
    DumpKernel(Common),
}

impl Command {
    fn common(&self) -> &Common {
        match self {
            Command::Solve(c) | Command::DumpKernel(c) => c,
            Command::Simulate { common, .. } | Command::Sweep { common, .. } | Command::Check { common, .. } => common,
        }
    }
}

fn load(common: &Common) -> regime_harvest::Result<ExperimentConfig> {
    cli::load_config(&common.config, &Overrides { seed: common.seed, grid_h: common.grid_h })
}

fn run(command: &Command) -> regime_harvest::Result<bool> {
    let common = command.common();
    if let Some(n) = common.threads {
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| Error::Config(format!("--threads: {e}")))?;
    }
    let cfg = load(common)?;
    match command {
        Command::Solve(_) => {
            let outcome = cli::run_solve(&cfg, &common.out)?;
            let r = &outcome.solution.report;
            println!(
                "{}: {} sweeps, {} policy evaluations, final sup change {:.3e} (tol {:.1e}), {:.2?}",
                cfg.name(),
                r.iterations,
                r.policy_evaluations,
                r.final_sup_change,
                r.tolerance,
                r.wall_time
            );
            for f in &outcome.files {
                println!("wrote {}", f.display());
            }
            Ok(true)
        }
        Command::Simulate { policy, slack, .. } => {
            let rows = cli::run_simulate(&cfg, policy.as_deref(), *slack, &common.out)?;
            for r in &rows {
                let e = &r.estimate;
                println!(
                    "x0={} regime={} {:>12}: {:.4} ± {:.4} (tail {:.1e}) V_h={:.4} {}",
                    r.x0,
                    r.regime,
                    r.law,
                    e.mean,
                    e.std_error,
                    e.tail_bound,
                    r.value,
                    if r.pass { "PASS" } else { "FAIL" }
                );
            }
            Ok(true)
        }
        Command::Sweep { param, values, .. } => {
            let sweep = cfg.sweep.clone();
            let parameter = param
                .clone()
                .or_else(|| sweep.as_ref().map(|s| s.parameter.clone()))
                .ok_or_else(|| Error::Config("sweep needs --param or a [sweep] section".into()))?;
            let values = values
                .clone()
                .or_else(|| sweep.map(|s| s.values))
                .ok_or_else(|| Error::Config("sweep needs --values or a [sweep] section".into()))?;
            for e in cli::run_sweep(&cfg, &parameter, &values, &common.out)? {
                let fmt = |g: Option<f64>| g.map_or("-".to_string(), |g| format!("{g:.6e}"));
                println!(
                    "{parameter}={}: {} sweeps, gap to previous {}, gap to last {}",
                    e.value,
                    e.iterations,
                    fmt(e.gap_to_previous),
                    fmt(e.gap_to_last)
                );
            }
            Ok(true)
        }
        Command::Check { tolerance, .. } => {
            let report = cli::run_check(&cfg, *tolerance, &common.out)?;
            println!(
                "{}: {} rows, max row-sum error {:.2e}, max first-moment error {:.2e}, max variance ratio {:.3}, {} violations",
                if report.passed() { "PASS" } else { "FAIL" },
                report.rows_checked,
                report.max_row_sum_error,
                report.max_first_moment_error,
                report.max_variance_ratio,
                report.violation_count
            );
            Ok(report.passed())
        }
        Command::DumpKernel(_) => {
            let path = cli::run_dump_kernel(&cfg, &common.out)?;
            println!("wrote {}", path.display());
            Ok(true)
        }
    }
}

fn main() -> ExitCode {
    let args = Cli::parse();
    match run(&args.command) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(2),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(if e.is_numerical() { 2 } else { 1 })
        }
    }
}
