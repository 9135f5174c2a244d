use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use pdomd::cli::trace::{export_price_trace, generate_price_trace};
use pdomd::cli::{build_problem, parse_config, parse_seed_range, run_experiment, sweep_rates, ExperimentConfig};
use pdomd::telemetry::{dpp_audit, import_record, ExportFormat};
use pdomd::Error;

#[derive(Parser)]
#[command(name = "pdomd", version, about = "Primal-dual online mirror descent experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run the configured experiment for every seed.
    Run {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
        /// Inclusive seed range `a..b`, or a single seed.
        #[arg(long)]
        seeds: Option<String>,
    },
    /// Sweep the horizons in `sweep_T` and fit convergence rates.
    Sweep {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long)]
        seeds: Option<String>,
    },
    /// Write a synthetic price trace.
    GenTrace {
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 10_000)]
        slots: usize,
        #[arg(long, default_value_t = 5)]
        zones: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Replay a recorded run and check the drift-plus-penalty inequality.
    Audit {
        #[arg(long)]
        config: PathBuf,
        /// Record CSV or JSON written by `run`.
        #[arg(long)]
        record: PathBuf,
        #[arg(long, default_value_t = 100)]
        samples: usize,
        #[arg(long, default_value_t = 0)]
        audit_seed: u64,
        #[arg(long, default_value_t = 1e-6)]
        tolerance: f64,
    },
}

enum Failure {
    Config(String),
    Runtime(String),
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        match e {
            Error::Config { .. } => Failure::Config(e.to_string()),
            other => Failure::Runtime(other.to_string()),
        }
    }
}

fn load(config: &PathBuf, out: Option<PathBuf>, seeds: Option<String>) -> Result<ExperimentConfig, Failure> {
    let mut cfg = parse_config(config)?;
    if let Some(out) = out {
        cfg.output_dir = Some(out);
    }
    if let Some(s) = seeds {
        cfg.seeds = parse_seed_range(&s)?;
    }
    Ok(cfg)
}

fn execute(cli: Cli) -> Result<(), Failure> {
    match cli.command {
        Command::Run { config, out, seeds } => {
            let cfg = load(&config, out, seeds)?;
            let report = run_experiment(&cfg)?;
            println!("config_hash {}", report.config_hash);
            println!("hindsight value {} (kkt residual {:.3e})", report.hindsight.value, report.hindsight.kkt_residual);
            for (label, s) in &report.summaries {
                println!(
                    "{label}: regret {:.6} ineq {:.3e} eq {:.3e} max dual/sqrt(T) {:.4}",
                    s.expected_regret.unwrap_or(s.realized_regret),
                    s.ineq_violation.unwrap_or(s.realized_ineq_violation),
                    s.eq_violation.unwrap_or(s.realized_eq_violation),
                    s.dual_norm_ratio
                );
            }
            if let Some(dir) = &cfg.output_dir {
                println!("wrote {}", dir.display());
            }
        }
        Command::Sweep { config, out, seeds } => {
            let cfg = load(&config, out, seeds)?;
            let report = sweep_rates(&cfg)?;
            for p in &report.points {
                println!(
                    "T={}: regret {:.4} ± {:.4}, ineq {:.3e}, eq {:.3e}, dual/sqrt(T) {:.4}",
                    p.horizon, p.regret_mean, p.regret_stderr, p.ineq_violation_mean, p.eq_violation_mean, p.dual_ratio_mean
                );
            }
            for (name, fit) in [("regret", &report.regret), ("T*ineq", &report.ineq_violation), ("T*eq", &report.eq_violation)] {
                match (fit.slope, fit.ci_low, fit.ci_high) {
                    (Some(s), Some(lo), Some(hi)) => println!("{name} slope {s:.4} [{lo:.4}, {hi:.4}]"),
                    (Some(s), _, _) => println!("{name} slope {s:.4}"),
                    _ => println!("{name} slope undefined (degenerate)"),
                }
            }
        }
        Command::GenTrace { out, slots, zones, seed } => {
            export_price_trace(&generate_price_trace(slots, zones, seed), &out)?;
            println!("wrote {} slots x {zones} zones to {}", slots, out.display());
        }
        Command::Audit { config, record, samples, audit_seed, tolerance } => {
            let cfg = parse_config(&config)?;
            let format = ExportFormat::from_path(&record)
                .ok_or_else(|| Failure::Config(format!("{}: expected a .csv or .json record", record.display())))?;
            let rec = import_record(&record, format)?;
            if let Some(h) = &rec.header.config_hash {
                if *h != cfg.hash() {
                    return Err(Failure::Config(format!("record was produced by config {h}, not {}", cfg.hash())));
                }
            }
            let problem = build_problem(&cfg, rec.len().max(2))?;
            let audit = dpp_audit(&rec, problem.as_dyn(), samples, audit_seed)?;
            println!(
                "checks {} worst residual {:.3e} lower-bound slack {:.3e} telescoping error {:.3e}",
                audit.checks, audit.worst_residual, audit.lower_bound_slack, audit.telescoping_error
            );
            if audit.worst_residual > tolerance || audit.lower_bound_slack < -tolerance {
                return Err(Failure::Runtime(format!("audit failed at slot {:?}", audit.worst_slot)));
            }
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(2) } else { ExitCode::SUCCESS };
        }
    };
    match execute(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Config(msg)) => {
            eprintln!("config error: {msg}");
            ExitCode::from(2)
        }
        Err(Failure::Runtime(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(3)
        }
    }
}
