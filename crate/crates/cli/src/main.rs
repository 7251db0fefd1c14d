use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use mqlv::bsm::{digital_price, digital_probability, BsmInputs};
use mqlv::config::ExperimentFile;
use mqlv::experiments::{run_calibration_demo, run_compare_file, run_curve_file};
use mqlv::io::{read_paths_csv, write_paths_csv, write_phi_csv, write_series_csv, write_weights_csv};
use mqlv::learner::ActionObjective;
use mqlv::vasicek::{analytic_mean, analytic_var};
use mqlv::{event_probability, fit, simulate, LearnerConfig, MqlvError, VasicekParams};

const USAGE: u8 = 1;
const NUMERICAL: u8 = 2;
const IO: u8 = 3;

#[derive(Parser, Debug)]
#[command(
    name = "mqlv",
    version,
    about = "Event probabilities of Vasicek paths by fitted Q-iteration"
)]
struct Cli {
    /// Worker threads; results do not depend on this.
    #[arg(long, global = true, env = "MQLV_THREADS")]
    threads: Option<usize>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Simulate Vasicek paths and write them to CSV.
    Generate(GenerateArgs),
    /// Fit Vasicek parameters to a series and regenerate a path from them.
    Calibrate(CalibrateArgs),
    /// Estimate P(S_T >= K) with the Q-learner.
    Probability(ProbabilityArgs),
    /// Black-Scholes digital probability N(d2).
    Bsm(BsmArgs),
    /// Compare learner, BSM and empirical frequency for every dataset of a config.
    Compare(ExperimentArgs),
    /// Learner and BSM probabilities over a strike grid.
    Curve(ExperimentArgs),
}

#[derive(Args, Debug, Clone)]
struct ModelArgs {
    /// Mean-reversion speed.
    #[arg(long, default_value_t = 0.01)]
    kappa: f64,
    /// Long-run level.
    #[arg(long, default_value_t = 1.0)]
    b: f64,
    /// Volatility.
    #[arg(long, default_value_t = 0.15)]
    sigma: f64,
    /// Initial value.
    #[arg(long, default_value_t = 1.0)]
    s0: f64,
}

impl ModelArgs {
    fn params(&self) -> mqlv::Result<VasicekParams> {
        VasicekParams::new(self.kappa, self.b, self.sigma, self.s0)
    }
}

#[derive(ValueEnum, Debug, Clone, Copy, PartialEq, Eq)]
enum PathFormat {
    /// path_id,step,time,value
    Long,
    /// time,value for the first path only
    Series,
}

#[derive(Args, Debug)]
struct GenerateArgs {
    #[command(flatten)]
    model: ModelArgs,
    #[arg(long, default_value_t = 0.5)]
    maturity: f64,
    #[arg(long, default_value_t = 5)]
    steps: usize,
    #[arg(long, default_value_t = 40_000)]
    paths: usize,
    #[arg(long, default_value_t = 1)]
    seed: u64,
    /// Output CSV.
    #[arg(long)]
    out: PathBuf,
    #[arg(long, value_enum, default_value_t = PathFormat::Long)]
    format: PathFormat,
}

#[derive(Args, Debug)]
struct CalibrateArgs {
    /// `time,value` CSV.
    #[arg(long)]
    series: PathBuf,
    /// Spacing of the observations.
    #[arg(long, default_value_t = 1.0)]
    dt: f64,
    /// Seed of the regenerated path.
    #[arg(long, default_value_t = 1)]
    seed: u64,
    /// Write the regenerated path as `time,value` CSV.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(ValueEnum, Debug, Clone, Copy, PartialEq, Eq)]
enum Objective {
    RiskMinimizing,
    MeanVariance,
}

#[derive(Args, Debug)]
struct ProbabilityArgs {
    /// Read paths from a long-form CSV instead of simulating them.
    #[arg(long, conflicts_with_all = ["maturity", "steps", "paths"])]
    paths_file: Option<PathBuf>,
    /// Model used for simulation and for centring the states.
    #[command(flatten)]
    model: ModelArgs,
    #[arg(long, default_value_t = 0.5)]
    maturity: f64,
    #[arg(long, default_value_t = 5)]
    steps: usize,
    #[arg(long, default_value_t = 40_000)]
    paths: usize,
    #[arg(long, default_value_t = 1.0)]
    strike: f64,
    #[arg(long, default_value_t = 1e-3)]
    lambda: f64,
    /// Keep-probability of the dropout mask.
    #[arg(long, default_value_t = 1.0)]
    dropout_p: f64,
    #[arg(long, default_value_t = 12)]
    m_basis: usize,
    #[arg(long, default_value_t = 3)]
    degree: usize,
    #[arg(long, default_value_t = 0.0)]
    r: f64,
    #[arg(long, default_value_t = 1e-8)]
    ridge: f64,
    #[arg(long, value_enum, default_value_t = Objective::RiskMinimizing)]
    objective: Objective,
    /// Seed of the simulation and of the dropout mask.
    #[arg(long, default_value_t = 1)]
    seed: u64,
    /// Write the action coefficients per step.
    #[arg(long)]
    phi_out: Option<PathBuf>,
    /// Write the Q-function weights per step.
    #[arg(long)]
    weights_out: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct BsmArgs {
    #[arg(long, default_value_t = 1.0)]
    s0: f64,
    #[arg(long, default_value_t = 1.0)]
    k: f64,
    #[arg(long, default_value_t = 0.15)]
    sigma: f64,
    #[arg(long, default_value_t = 0.0)]
    r: f64,
    #[arg(long, default_value_t = 0.5)]
    t: f64,
}

#[derive(Args, Debug)]
struct ExperimentArgs {
    /// TOML experiment file.
    #[arg(long)]
    config: PathBuf,
    /// Overrides `[output] dir`.
    #[arg(long)]
    output_dir: Option<PathBuf>,
}

fn exit_code(err: &MqlvError) -> u8 {
    if err.is_io() {
        IO
    } else if err.is_numerical() {
        NUMERICAL
    } else {
        USAGE
    }
}

fn generate(args: &GenerateArgs) -> mqlv::Result<()> {
    let params = args.model.params()?;
    let grid = simulate(&params, args.maturity, args.steps, args.paths, args.seed)?;
    match args.format {
        PathFormat::Long => write_paths_csv(&args.out, &grid)?,
        PathFormat::Series => write_series_csv(&args.out, grid.dt, grid.values.row(0))?,
    }
    let terminal = grid.terminal();
    let n = terminal.len() as f64;
    let mean = terminal.iter().sum::<f64>() / n;
    let var = terminal.iter().map(|s| (s - mean).powi(2)).sum::<f64>() / (n - 1.0).max(1.0);
    println!(
        "wrote {} paths x {} steps to {}",
        args.paths,
        args.steps,
        args.out.display()
    );
    println!(
        "terminal mean     {mean:.6}  analytic {:.6}",
        analytic_mean(&params, args.maturity)
    );
    println!(
        "terminal variance {var:.6}  analytic {:.6}",
        analytic_var(&params, args.maturity)
    );
    Ok(())
}

fn calibrate(args: &CalibrateArgs) -> mqlv::Result<()> {
    let report = run_calibration_demo(&args.series, args.dt, args.seed)?;
    let p = report.params;
    println!("calibrated on {} points, dt = {}", report.n_points, report.dt);
    println!("kappa = {:.6}", p.kappa);
    println!("b     = {:.6}", p.b);
    println!("sigma = {:.6}", p.sigma);
    println!("s0    = {:.6}", p.s0);
    println!("rmse of regenerated path (seed {}) = {:.6}", report.seed, report.rmse);
    if let Some(out) = &args.out {
        write_series_csv(out, report.dt, &report.regenerated)?;
    }
    Ok(())
}

fn probability(args: &ProbabilityArgs) -> mqlv::Result<()> {
    let params = args.model.params()?;
    let config = LearnerConfig {
        r: args.r,
        lambda: args.lambda,
        dropout_p: args.dropout_p,
        ridge: args.ridge,
        m_basis: args.m_basis,
        degree: args.degree,
        objective: match args.objective {
            Objective::RiskMinimizing => ActionObjective::RiskMinimizing,
            Objective::MeanVariance => ActionObjective::MeanVariance,
        },
        seed: args.seed,
    };
    config.validate()?;
    if !(args.strike > 0.0 && args.strike.is_finite()) {
        return Err(MqlvError::InvalidInput(format!(
            "strike must be > 0, got {}",
            args.strike
        )));
    }
    let grid = match &args.paths_file {
        Some(path) => read_paths_csv(path)?,
        None => simulate(&params, args.maturity, args.steps, args.paths, args.seed)?,
    };
    let result = fit(&grid, &params, args.strike, &config)?;
    let estimate = event_probability(&result);
    if let Some(path) = &args.phi_out {
        write_phi_csv(path, &result)?;
    }
    if let Some(path) = &args.weights_out {
        write_weights_csv(path, &result)?;
    }
    println!("{}", estimate.to_json());
    Ok(())
}

fn bsm(args: &BsmArgs) -> mqlv::Result<()> {
    let inputs = BsmInputs {
        s0: args.s0,
        k: args.k,
        sigma: args.sigma,
        r: args.r,
        t: args.t,
    };
    let p = digital_probability(&inputs)?;
    println!("probability N(d2) = {p:.8} [{:.3}%]", 100.0 * p);
    println!("discounted price  = {:.8}", digital_price(&inputs)?);
    Ok(())
}

fn compare(args: &ExperimentArgs) -> mqlv::Result<()> {
    let file = ExperimentFile::load(&args.config)?;
    let outcome = run_compare_file(&file, args.output_dir.as_deref())?;
    print!("{}", outcome.report);
    println!(
        "wrote comparison.csv and report.txt to {}",
        outcome.output_dir.display()
    );
    Ok(())
}

fn curve(args: &ExperimentArgs) -> mqlv::Result<()> {
    let file = ExperimentFile::load(&args.config)?;
    let outcome = run_curve_file(&file, args.output_dir.as_deref())?;
    print!("{}", outcome.report);
    println!("wrote curve.csv and report.txt to {}", outcome.output_dir.display());
    Ok(())
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() {
                ExitCode::from(USAGE)
            } else {
                ExitCode::SUCCESS
            };
        }
    };
    if let Some(threads) = cli.threads {
        if threads == 0 {
            eprintln!("error: --threads must be at least 1");
            return ExitCode::from(USAGE);
        }
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(threads).build_global() {
            eprintln!("error: could not start thread pool: {e}");
            return ExitCode::from(USAGE);
        }
    }
    let outcome = match &cli.command {
        Command::Generate(a) => generate(a),
        Command::Calibrate(a) => calibrate(a),
        Command::Probability(a) => probability(a),
        Command::Bsm(a) => bsm(a),
        Command::Compare(a) => compare(a),
        Command::Curve(a) => curve(a),
    };
    match outcome {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}
