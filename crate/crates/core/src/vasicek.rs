//! Vasicek (Ornstein–Uhlenbeck) diffusion `dS = κ(b − S)dt + σ dB`.
//!
//! Paths are drawn from the exact Gaussian transition, so the grid carries no
//! discretisation bias whatever the step size. Every path owns an RNG
//! substream keyed by `(seed, path index)`; the output therefore does not
//! depend on how rayon splits the work.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{MqlvError, Result};
use crate::matrix::PathMatrix;

/// Below this value of `κ·Δt` the transition uses its `κ → 0` limit.
const KAPPA_LIMIT: f64 = 1e-8;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct VasicekParams {
    /// Speed of mean reversion.
    pub kappa: f64,
    /// Long-term mean level.
    pub b: f64,
    pub sigma: f64,
    /// Level at `t = 0`.
    pub s0: f64,
}

impl VasicekParams {
    pub fn new(kappa: f64, b: f64, sigma: f64, s0: f64) -> Result<Self> {
        let p = Self { kappa, b, sigma, s0 };
        p.validate()?;
        Ok(p)
    }

    /// `κ=0.01, b=1, σ=0.15, S₀=1`, the synthetic-dataset regime.
    pub fn reference() -> Self {
        Self {
            kappa: 0.01,
            b: 1.0,
            sigma: 0.15,
            s0: 1.0,
        }
    }

    /// Checks the parameter domain. `σ = 0` is accepted so that the
    /// deterministic limit can be simulated; negative values are not.
    pub fn validate(&self) -> Result<()> {
        let finite = [self.kappa, self.b, self.sigma, self.s0].iter().all(|v| v.is_finite());
        if !finite {
            return Err(MqlvError::InvalidInput(format!(
                "non-finite Vasicek parameters {self:?}"
            )));
        }
        if self.kappa < 0.0 {
            return Err(MqlvError::InvalidInput(format!(
                "kappa must be >= 0, got {}",
                self.kappa
            )));
        }
        if self.sigma < 0.0 {
            return Err(MqlvError::InvalidInput(format!(
                "sigma must be >= 0, got {}",
                self.sigma
            )));
        }
        if self.s0 <= 0.0 {
            return Err(MqlvError::InvalidInput(format!("s0 must be > 0, got {}", self.s0)));
        }
        Ok(())
    }
}

/// Simulated diffusion levels, one row per path, `n_steps + 1` columns.
#[derive(Debug, Clone, PartialEq)]
pub struct PathGrid {
    pub values: PathMatrix,
    pub dt: f64,
    pub maturity: f64,
    /// Master seed, absent when the grid was loaded from a file.
    pub seed: Option<u64>,
}

impl PathGrid {
    pub fn new(values: PathMatrix, maturity: f64, seed: Option<u64>) -> Result<Self> {
        if values.cols() < 2 || values.rows() == 0 {
            return Err(MqlvError::InvalidConfig(format!(
                "path grid needs at least one path and one step, got {}x{}",
                values.rows(),
                values.cols()
            )));
        }
        if !(maturity > 0.0 && maturity.is_finite()) {
            return Err(MqlvError::InvalidConfig(format!(
                "maturity must be > 0, got {maturity}"
            )));
        }
        let dt = maturity / (values.cols() - 1) as f64;
        Ok(Self {
            values,
            dt,
            maturity,
            seed,
        })
    }

    pub fn n_paths(&self) -> usize {
        self.values.rows()
    }

    pub fn n_steps(&self) -> usize {
        self.values.cols() - 1
    }

    pub fn time(&self, step: usize) -> f64 {
        step as f64 * self.dt
    }

    pub fn terminal(&self) -> Vec<f64> {
        self.values.column(self.n_steps())
    }
}

/// Detrended states `X_t = S_t − E[S_t]`, aligned with a [`PathGrid`].
#[derive(Debug, Clone, PartialEq)]
pub struct StateGrid {
    pub values: PathMatrix,
    pub dt: f64,
    pub maturity: f64,
}

/// One exact transition over `dt` driven by the standard normal draw `z`.
pub fn exact_step(s: f64, params: &VasicekParams, dt: f64, z: f64) -> Result<f64> {
    if !(s.is_finite() && dt.is_finite() && z.is_finite()) {
        return Err(MqlvError::InvalidInput(format!(
            "non-finite step input s={s} dt={dt} z={z}"
        )));
    }
    if dt <= 0.0 {
        return Err(MqlvError::InvalidInput(format!("dt must be > 0, got {dt}")));
    }
    params.validate()?;
    Ok(transition(s, params, dt, z))
}

#[inline]
fn transition(s: f64, p: &VasicekParams, dt: f64, z: f64) -> f64 {
    let kdt = p.kappa * dt;
    if kdt < KAPPA_LIMIT {
        return s + p.sigma * dt.sqrt() * z;
    }
    // 1 − e^{−κΔt} without cancellation
    let pull = -(-kdt).exp_m1();
    let sd = p.sigma * (-(-2.0 * kdt).exp_m1() / (2.0 * p.kappa)).sqrt();
    s + (p.b - s) * pull + sd * z
}

pub fn analytic_mean(params: &VasicekParams, t: f64) -> f64 {
    let pull = -(-params.kappa * t).exp_m1();
    params.s0 + (params.b - params.s0) * pull
}

pub fn analytic_var(params: &VasicekParams, t: f64) -> f64 {
    let two_kt = 2.0 * params.kappa * t;
    if two_kt < KAPPA_LIMIT {
        return params.sigma * params.sigma * t;
    }
    params.sigma * params.sigma * (-(-two_kt).exp_m1()) / (2.0 * params.kappa)
}

/// RNG for path `index` under master `seed`.
pub(crate) fn substream(seed: u64, index: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(index);
    rng
}

pub fn simulate(params: &VasicekParams, maturity: f64, n_steps: usize, n_paths: usize, seed: u64) -> Result<PathGrid> {
    params.validate()?;
    if n_steps == 0 || n_paths == 0 {
        return Err(MqlvError::InvalidConfig(format!(
            "simulation needs n_steps >= 1 and n_paths >= 1, got {n_steps} and {n_paths}"
        )));
    }
    if !(maturity > 0.0 && maturity.is_finite()) {
        return Err(MqlvError::InvalidConfig(format!(
            "maturity must be > 0, got {maturity}"
        )));
    }
    let dt = maturity / n_steps as f64;
    let cols = n_steps + 1;
    let mut values = PathMatrix::zeros(n_paths, cols);
    values
        .as_mut_slice()
        .par_chunks_mut(cols)
        .enumerate()
        .for_each(|(k, path)| {
            let mut rng = substream(seed, k as u64);
            path[0] = params.s0;
            for t in 1..cols {
                let z: f64 = StandardNormal.sample(&mut rng);
                path[t] = transition(path[t - 1], params, dt, z);
            }
        });
    PathGrid::new(values, maturity, Some(seed))
}

pub fn to_state(grid: &PathGrid, params: &VasicekParams) -> StateGrid {
    let mean: Vec<f64> = (0..=grid.n_steps())
        .map(|t| analytic_mean(params, grid.time(t)))
        .collect();
    let values = PathMatrix::from_fn(grid.n_paths(), grid.n_steps() + 1, |k, t| {
        grid.values.get(k, t) - mean[t]
    });
    StateGrid {
        values,
        dt: grid.dt,
        maturity: grid.maturity,
    }
}

/// Inverse of [`to_state`].
pub fn from_state(states: &StateGrid, params: &VasicekParams) -> PathMatrix {
    let cols = states.values.cols();
    let mean: Vec<f64> = (0..cols).map(|t| analytic_mean(params, t as f64 * states.dt)).collect();
    PathMatrix::from_fn(states.values.rows(), cols, |k, t| states.values.get(k, t) + mean[t])
}

/// Hedge-portfolio increments `ΔS_t = S_{t+1} − e^{rΔt} S_t`, `n_steps` columns.
pub fn delta_s(grid: &PathGrid, r: f64) -> Result<PathMatrix> {
    if !r.is_finite() {
        return Err(MqlvError::InvalidInput(format!("rate must be finite, got {r}")));
    }
    let growth = (r * grid.dt).exp();
    Ok(PathMatrix::from_fn(grid.n_paths(), grid.n_steps(), |k, t| {
        grid.values.get(k, t + 1) - growth * grid.values.get(k, t)
    }))
}

/// Least-squares calibration through the AR(1) representation of the exact
/// transition, `S_{t+1} = c0 + c1·S_t + ε`.
pub fn calibrate(series: &[f64], dt: f64) -> Result<VasicekParams> {
    if series.len() < 3 {
        return Err(MqlvError::InvalidInput(format!(
            "calibration needs at least 3 observations, got {}",
            series.len()
        )));
    }
    if !(dt > 0.0 && dt.is_finite()) {
        return Err(MqlvError::InvalidInput(format!("dt must be > 0, got {dt}")));
    }
    if series.iter().any(|v| !v.is_finite()) {
        return Err(MqlvError::InvalidInput("series contains non-finite values".into()));
    }
    let x = &series[..series.len() - 1];
    let y = &series[1..];
    let n = x.len() as f64;
    let x_mean = x.iter().sum::<f64>() / n;
    let y_mean = y.iter().sum::<f64>() / n;
    let (mut sxx, mut sxy) = (0.0, 0.0);
    for (xi, yi) in x.iter().zip(y) {
        sxx += (xi - x_mean) * (xi - x_mean);
        sxy += (xi - x_mean) * (yi - y_mean);
    }
    let scale = x_mean.abs().max(1.0);
    if sxx <= f64::EPSILON * scale * scale * n {
        return Err(MqlvError::Calibration(format!(
            "regressor has zero variance (series is constant at {x_mean})"
        )));
    }
    let c1 = sxy / sxx;
    let c0 = y_mean - c1 * x_mean;
    if !(c1 > 0.0 && c1 < 1.0) {
        return Err(MqlvError::Calibration(format!(
            "AR(1) slope {c1} outside (0, 1): sample is not mean reverting"
        )));
    }
    let ssr: f64 = x
        .iter()
        .zip(y)
        .map(|(xi, yi)| {
            let e = yi - c0 - c1 * xi;
            e * e
        })
        .sum();
    let resid_sd = (ssr / (n - 2.0).max(1.0)).sqrt();
    let log_c1 = c1.ln();
    let kappa = -log_c1 / dt;
    let b = c0 / (1.0 - c1);
    let sigma = resid_sd * (-2.0 * log_c1 / (dt * (1.0 - c1 * c1))).sqrt();
    if !(sigma > 0.0) {
        return Err(MqlvError::Calibration("residual variance is zero".into()));
    }
    VasicekParams::new(kappa, b, sigma, series[0]).map_err(|e| MqlvError::Calibration(e.to_string()))
}

pub fn rmse(a: &[f64], b: &[f64]) -> Result<f64> {
    if a.len() != b.len() {
        return Err(MqlvError::InvalidInput(format!(
            "rmse needs equal lengths, got {} and {}",
            a.len(),
            b.len()
        )));
    }
    if a.is_empty() {
        return Err(MqlvError::InvalidInput("rmse of empty series".into()));
    }
    let sum: f64 = a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum();
    Ok((sum / a.len() as f64).sqrt())
}
