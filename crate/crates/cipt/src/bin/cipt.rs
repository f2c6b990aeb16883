//! Command-line driver for sweep execution and analysis.
//!
//! Exit codes: 2 invalid configuration or arguments, 3 I/O failure,
//! 4 numeric invariant violation.

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use cipt::experiment::{
    analyze_coherence, analyze_distribution, analyze_fss, analyze_tail, run, ErrPolicy,
    ExperimentConfig,
};
use cipt::scaling::{CollapseOptions, TailRescaling};
use cipt::Error;

#[derive(Parser)]
#[command(name = "cipt", about = "Adaptive monitored circuit sweeps and scaling analysis")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Execute a sweep and write raw/summary/distribution CSVs plus a
    /// manifest.
    Run(RunArgs),
    /// Fit and report on existing output files.
    #[command(subcommand)]
    Analyze(AnalyzeCmd),
}

#[derive(Args)]
struct RunArgs {
    /// Flat key = value config file; CLI flags override its entries.
    #[arg(long)]
    config: Option<PathBuf>,
    /// bernoulli | absorbing
    #[arg(long)]
    model: Option<String>,
    /// classical | quantum
    #[arg(long)]
    mode: Option<String>,
    /// Comma-separated register sizes.
    #[arg(long)]
    sizes: Option<String>,
    /// Comma-separated control / measurement rates.
    #[arg(long)]
    probs: Option<String>,
    #[arg(long)]
    circuits: Option<String>,
    #[arg(long)]
    trajectories: Option<String>,
    #[arg(long)]
    shots: Option<String>,
    #[arg(long)]
    seed: Option<String>,
    #[arg(long)]
    epsilon: Option<String>,
    /// final | window
    #[arg(long)]
    record: Option<String>,
    /// half | one | ones — initial product state
    #[arg(long)]
    initial: Option<String>,
    #[arg(long)]
    coherence: Option<String>,
    #[arg(long)]
    bit_dist: Option<String>,
    #[arg(long)]
    out: Option<String>,
    #[arg(long)]
    workers: Option<String>,
}

#[derive(Subcommand)]
enum AnalyzeCmd {
    /// Finite-size-scaling collapse of one summary column.
    Fss(FssArgs),
    /// Coherence growth fit log2(c) = a1 L + a0 + a_-1 / L per rate.
    Coherence {
        #[arg(long)]
        input: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Tail exponent of the first-domain-wall distribution per (L, p).
    Distribution {
        #[arg(long)]
        input: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Shape comparison of rescaled basis distributions across sizes.
    Tail {
        #[arg(long)]
        input: PathBuf,
        #[arg(long)]
        p: f64,
        /// none | inverse_x | flat
        #[arg(long, default_value = "none")]
        rescaling: String,
        #[arg(long)]
        out: PathBuf,
    },
}

#[derive(Args)]
struct FssArgs {
    /// summary.csv from a run.
    #[arg(long)]
    input: PathBuf,
    /// Summary column to collapse (e.g. k_var_circuit, k_order_traj).
    #[arg(long)]
    value_col: String,
    /// Pre-scale values by L^power (e.g. -2 for a variance per L^2).
    #[arg(long, default_value_t = 0.0)]
    l_power: f64,
    /// Assign binomial standard errors (for order-parameter fractions).
    #[arg(long)]
    binomial_err: bool,
    /// Pin beta = 0 (collapse a dimensionless quantity).
    #[arg(long)]
    no_beta: bool,
    /// Pin the critical point instead of fitting it.
    #[arg(long)]
    p_c: Option<f64>,
    /// Fit a multiplicative 1 + c/L finite-size correction.
    #[arg(long)]
    size_correction: bool,
    #[arg(long, default_value_t = 2.0)]
    u_max: f64,
    #[arg(long, default_value_t = 100)]
    bootstrap: usize,
    #[arg(long, default_value_t = 7)]
    fit_seed: u64,
    #[arg(long)]
    out: PathBuf,
}

fn exit_code_for(err: &Error) -> u8 {
    match err {
        Error::Io(_) | Error::Csv(_) => 3,
        Error::NumericInvariant(_) | Error::NonUnitary(_) | Error::NormCorruption(_) => 4,
        _ => 2,
    }
}

fn build_config(args: &RunArgs) -> cipt::Result<ExperimentConfig> {
    let mut cfg = match &args.config {
        Some(path) => ExperimentConfig::from_file(path)?,
        None => ExperimentConfig::default(),
    };
    let overrides: [(&str, &Option<String>); 15] = [
        ("model", &args.model),
        ("mode", &args.mode),
        ("sizes", &args.sizes),
        ("probs", &args.probs),
        ("circuits", &args.circuits),
        ("trajectories", &args.trajectories),
        ("shots", &args.shots),
        ("seed", &args.seed),
        ("epsilon", &args.epsilon),
        ("record", &args.record),
        ("initial", &args.initial),
        ("coherence", &args.coherence),
        ("bit_dist", &args.bit_dist),
        ("out", &args.out),
        ("workers", &args.workers),
    ];
    for (key, value) in overrides {
        if let Some(v) = value {
            cfg.set(key, v)?;
        }
    }
    cfg.validate()?;
    Ok(cfg)
}

fn dispatch(cli: Cli) -> cipt::Result<()> {
    match cli.command {
        Command::Run(args) => {
            let cfg = build_config(&args)?;
            let report = run(&cfg)?;
            println!(
                "wrote {} raw rows, {} summary rows under {}",
                report.raw_rows,
                report.summary_rows,
                cfg.out.display()
            );
            println!("content hash {}", report.content_hash);
        }
        Command::Analyze(AnalyzeCmd::Fss(args)) => {
            let err = if args.binomial_err { ErrPolicy::Binomial } else { ErrPolicy::Constant };
            let opts = CollapseOptions {
                fit_beta: !args.no_beta,
                u_max: args.u_max,
                n_bootstrap: args.bootstrap,
                seed: args.fit_seed,
                p_c_fixed: args.p_c,
                size_correction: args.size_correction,
            };
            let report =
                analyze_fss(&args.input, &args.value_col, args.l_power, err, &opts, &args.out)?;
            let f = &report.fit;
            println!(
                "{}: nu = {:.4} +- {:.4}, p_c = {:.4} +- {:.4}, beta = {:.4} +- {:.4} ({} points)",
                report.value_col, f.nu, f.nu_err, f.p_c, f.p_c_err, f.beta, f.beta_err,
                f.n_points_used
            );
        }
        Command::Analyze(AnalyzeCmd::Coherence { input, out }) => {
            for (p, fit) in analyze_coherence(&input, &out)? {
                println!(
                    "p = {p:.4}: a1 = {:.4}, a0 = {:.4}, a_-1 = {:.4} (rms {:.2e})",
                    fit.a1, fit.a0, fit.am1, fit.rms_residual
                );
            }
        }
        Command::Analyze(AnalyzeCmd::Distribution { input, out }) => {
            for (l, p, s, se) in analyze_distribution(&input, &out)? {
                println!("L = {l}, p = {p:.4}: s = {s:.4} +- {se:.4}");
            }
        }
        Command::Analyze(AnalyzeCmd::Tail { input, p, rescaling, out }) => {
            let rescaling = match rescaling.as_str() {
                "none" => TailRescaling::None,
                "inverse_x" => TailRescaling::InverseX,
                "flat" => TailRescaling::Flat,
                other => {
                    return Err(Error::InvalidInput(format!("unknown rescaling: {other}")));
                }
            };
            let report = analyze_tail(&input, p, rescaling, &out)?;
            println!(
                "p = {:.4} ({:?}): max sup-distance {:.4} over sizes {:?}",
                report.p, report.rescaling, report.residual, report.sizes
            );
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match dispatch(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code_for(&e))
        }
    }
}
