//! Experiment harness: digital-probability comparisons against the BSM
//! reference and the empirical terminal frequency, strike curves, and the
//! calibration round trip.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::Serialize;

use crate::bsm::{digital_probability, BsmInputs};
use crate::config::{ExperimentConfig, ExperimentFile};
use crate::error::{MqlvError, Result};
use crate::io::read_series_csv;
use crate::learner::{event_probability, fit_with_bases, step_bases, LearnerConfig, ProbabilityEstimate};
use crate::vasicek::{calibrate, delta_s, rmse, simulate, to_state, PathGrid, VasicekParams};

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ComparisonRow {
    pub dataset_id: usize,
    pub n_paths: usize,
    pub strike: f64,
    /// Percent.
    pub bsm_value: f64,
    /// Percent.
    pub mqlv_value: f64,
    /// `|bsm − mqlv|`, percentage points.
    pub abs_difference: f64,
    /// Percent.
    pub empirical_frequency: f64,
}

/// Fraction of paths finishing at or above `strike`.
pub fn empirical_frequency(grid: &PathGrid, strike: f64) -> f64 {
    let terminal = grid.terminal();
    terminal.iter().filter(|s| **s >= strike).count() as f64 / terminal.len() as f64
}

/// Estimates for several strikes on one grid. Bases depend only on the
/// states, so they are built once and shared by every strike.
pub fn estimates_on_grid(
    grid: &PathGrid,
    params: &VasicekParams,
    strikes: &[f64],
    learner: &LearnerConfig,
) -> Result<Vec<ProbabilityEstimate>> {
    learner.validate()?;
    let states = to_state(grid, params);
    let increments = delta_s(grid, learner.r)?;
    let bases = step_bases(&states.values, learner)?;
    strikes
        .par_iter()
        .map(|&strike| {
            fit_with_bases(grid, &bases, &increments, strike, learner)
                .map(|f| event_probability(&f))
                .map_err(|e| MqlvError::AtStrike {
                    strike,
                    source: Box::new(e),
                })
        })
        .collect()
}

fn bsm_template(config: &ExperimentConfig) -> BsmInputs {
    BsmInputs {
        s0: config.vasicek.s0,
        k: 1.0,
        sigma: config.vasicek.sigma,
        r: config.learner.r,
        t: config.maturity,
    }
}

fn simulate_dataset(config: &ExperimentConfig) -> Result<PathGrid> {
    config.validate()?;
    simulate(
        &config.vasicek,
        config.maturity,
        config.n_steps,
        config.n_paths,
        config.seed,
    )
}

/// Rows plus the estimates that produced them.
#[derive(Debug, Clone)]
pub struct Comparison {
    pub rows: Vec<ComparisonRow>,
    pub estimates: Vec<ProbabilityEstimate>,
}

pub fn compare_on_grid(config: &ExperimentConfig, grid: &PathGrid) -> Result<Comparison> {
    let estimates = estimates_on_grid(grid, &config.vasicek, &config.strikes, &config.learner)?;
    let template = bsm_template(config);
    let rows = config
        .strikes
        .iter()
        .zip(&estimates)
        .map(|(&strike, est)| {
            let bsm = 100.0 * digital_probability(&template.with_strike(strike))?;
            let mqlv = 100.0 * est.probability;
            Ok(ComparisonRow {
                dataset_id: config.dataset_id,
                n_paths: grid.n_paths(),
                strike,
                bsm_value: bsm,
                mqlv_value: mqlv,
                abs_difference: (bsm - mqlv).abs(),
                empirical_frequency: 100.0 * empirical_frequency(grid, strike),
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(Comparison { rows, estimates })
}

/// Simulates the dataset once and compares every strike on it.
pub fn run_comparison(config: &ExperimentConfig) -> Result<Vec<ComparisonRow>> {
    let grid = simulate_dataset(config)?;
    Ok(compare_on_grid(config, &grid)?.rows)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CurvePoint {
    pub strike: f64,
    /// Percent.
    pub mqlv: f64,
    /// Percent.
    pub bsm: f64,
}

#[derive(Debug, Clone)]
pub struct StrikeCurve {
    pub points: Vec<CurvePoint>,
    /// Root-mean-square gap between the two curves, percentage points.
    pub rmse: f64,
    pub estimates: Vec<ProbabilityEstimate>,
}

pub fn curve_rmse(points: &[CurvePoint]) -> Result<f64> {
    let mqlv: Vec<f64> = points.iter().map(|p| p.mqlv).collect();
    let bsm: Vec<f64> = points.iter().map(|p| p.bsm).collect();
    rmse(&mqlv, &bsm)
}

pub fn run_strike_curve(config: &ExperimentConfig) -> Result<StrikeCurve> {
    let grid = simulate_dataset(config)?;
    let comparison = compare_on_grid(config, &grid)?;
    let points: Vec<CurvePoint> = comparison
        .rows
        .iter()
        .map(|r| CurvePoint {
            strike: r.strike,
            mqlv: r.mqlv_value,
            bsm: r.bsm_value,
        })
        .collect();
    let rmse = curve_rmse(&points)?;
    Ok(StrikeCurve {
        points,
        rmse,
        estimates: comparison.estimates,
    })
}

#[derive(Debug, Clone, Serialize)]
pub struct CalibrationReport {
    pub params: VasicekParams,
    pub n_points: usize,
    pub dt: f64,
    /// RMSE between the observed series and one path regenerated from the
    /// calibrated parameters.
    pub rmse: f64,
    pub seed: u64,
    #[serde(skip)]
    pub regenerated: Vec<f64>,
}

pub fn calibration_demo(series: &[f64], dt: f64, seed: u64) -> Result<CalibrationReport> {
    let params = calibrate(series, dt)?;
    let steps = series.len() - 1;
    let regenerated = simulate(&params, dt * steps as f64, steps, 1, seed)?
        .values
        .row(0)
        .to_vec();
    Ok(CalibrationReport {
        params,
        n_points: series.len(),
        dt,
        rmse: rmse(series, &regenerated)?,
        seed,
        regenerated,
    })
}

pub fn run_calibration_demo(series_file: &Path, dt: f64, seed: u64) -> Result<CalibrationReport> {
    calibration_demo(&read_series_csv(series_file)?, dt, seed)
}

/// Percentages carry three decimals.
pub fn comparison_csv(rows: &[ComparisonRow]) -> String {
    let mut out = String::from("dataset_id,n_paths,strike,bsm_value,mqlv_value,abs_difference,empirical_frequency\n");
    for r in rows {
        let _ = writeln!(
            out,
            "{},{},{},{:.3},{:.3},{:.3},{:.3}",
            r.dataset_id, r.n_paths, r.strike, r.bsm_value, r.mqlv_value, r.abs_difference, r.empirical_frequency
        );
    }
    out
}

pub fn curve_csv(points: &[CurvePoint]) -> String {
    let mut out = String::from("strike,mqlv,bsm\n");
    for p in points {
        let _ = writeln!(out, "{},{:.3},{:.3}", p.strike, p.mqlv, p.bsm);
    }
    out
}

fn describe_dataset(out: &mut String, config: &ExperimentConfig) {
    let v = &config.vasicek;
    let l = &config.learner;
    let _ = writeln!(
        out,
        "dataset {}: kappa={} b={} sigma={} s0={} maturity={} steps={} paths={} seed={}",
        config.dataset_id, v.kappa, v.b, v.sigma, v.s0, config.maturity, config.n_steps, config.n_paths, config.seed
    );
    let _ = writeln!(
        out,
        "  learner: r={} lambda={} dropout_p={} ridge={:e} m_basis={} degree={} objective={:?} seed={}",
        l.r, l.lambda, l.dropout_p, l.ridge, l.m_basis, l.degree, l.objective, l.seed
    );
}

fn describe_estimates(out: &mut String, estimates: &[ProbabilityEstimate]) {
    for est in estimates {
        let worst_action = est.diagnostics.iter().map(|d| d.action_condition).fold(0.0, f64::max);
        let worst_weight = est.diagnostics.iter().map(|d| d.weight_condition).fold(0.0, f64::max);
        let _ = writeln!(
            out,
            "  K={:<8} probability={:.5} raw={:.5} max cond(A)={:.3e} max cond(S)={:.3e}",
            est.strike, est.probability, est.raw_probability, worst_action, worst_weight
        );
    }
}

fn write_file(path: &Path, contents: &str) -> Result<()> {
    fs::write(path, contents).map_err(|e| MqlvError::io(path, e))
}

fn prepare_dir(dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| MqlvError::io(dir, e))
}

/// Everything a `compare` run produced.
#[derive(Debug, Clone)]
pub struct CompareOutcome {
    pub rows: Vec<ComparisonRow>,
    pub report: String,
    pub output_dir: PathBuf,
}

/// Runs every dataset of a config file and writes `comparison.csv` and
/// `report.txt` into `output_dir` (or the file's `[output] dir`).
pub fn run_compare_file(file: &ExperimentFile, output_dir: Option<&Path>) -> Result<CompareOutcome> {
    let datasets = file.datasets()?;
    let dir = output_dir
        .map(Path::to_path_buf)
        .unwrap_or_else(|| file.output.dir.clone());
    let mut rows = Vec::new();
    let mut report = String::from("digital event probabilities: MQLV vs BSM vs empirical frequency\n\n");
    for config in &datasets {
        let grid = simulate_dataset(config)?;
        let comparison = compare_on_grid(config, &grid)?;
        describe_dataset(&mut report, config);
        describe_estimates(&mut report, &comparison.estimates);
        let worst = comparison
            .rows
            .iter()
            .map(|r| (r.mqlv_value - r.empirical_frequency).abs())
            .fold(0.0, f64::max);
        let _ = writeln!(report, "  max |mqlv - empirical| = {worst:.3} pp\n");
        rows.extend(comparison.rows);
    }
    rows.sort_by(|a, b| a.dataset_id.cmp(&b.dataset_id).then(a.strike.total_cmp(&b.strike)));
    let _ = writeln!(report, "{}", comparison_csv(&rows));
    prepare_dir(&dir)?;
    write_file(&dir.join("comparison.csv"), &comparison_csv(&rows))?;
    write_file(&dir.join("report.txt"), &report)?;
    Ok(CompareOutcome {
        rows,
        report,
        output_dir: dir,
    })
}

#[derive(Debug, Clone)]
pub struct CurveOutcome {
    pub curve: StrikeCurve,
    pub report: String,
    pub output_dir: PathBuf,
}

/// Single-dataset strike curve; writes `curve.csv` and `report.txt`.
pub fn run_curve_file(file: &ExperimentFile, output_dir: Option<&Path>) -> Result<CurveOutcome> {
    let datasets = file.datasets()?;
    if datasets.len() != 1 {
        return Err(MqlvError::InvalidConfig(format!(
            "a strike curve needs exactly one dataset, config defines {}",
            datasets.len()
        )));
    }
    let config = &datasets[0];
    let dir = output_dir
        .map(Path::to_path_buf)
        .unwrap_or_else(|| file.output.dir.clone());
    let curve = run_strike_curve(config)?;
    let mut report = String::from("strike curve: MQLV vs BSM\n\n");
    describe_dataset(&mut report, config);
    describe_estimates(&mut report, &curve.estimates);
    let _ = writeln!(
        report,
        "\ncurve RMSE = {:.3} pp over {} strikes\n",
        curve.rmse,
        curve.points.len()
    );
    let _ = writeln!(report, "{}", curve_csv(&curve.points));
    prepare_dir(&dir)?;
    write_file(&dir.join("curve.csv"), &curve_csv(&curve.points))?;
    write_file(&dir.join("report.txt"), &report)?;
    Ok(CurveOutcome {
        curve,
        report,
        output_dir: dir,
    })
}
