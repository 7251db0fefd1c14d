//! Backward fitted-Q-iteration over a path grid.
//!
//! Starting from the digital payoff at maturity, each step `t = T−1, …, 0`
//! solves two regularised least-squares problems on the cross-section of
//! paths: one for the coefficients of the optimal action (a risk-penalised
//! hedge), one for the weights of the quadratic-in-action Q-function. The
//! event probability is read off the Q-values at `t = 0`.

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::basis::{build_spec, BasisSpec, DEFAULT_BASIS_SIZE, DEFAULT_DEGREE};
use crate::error::{MqlvError, Result};
use crate::linalg::{accumulate_paths, mean, ridge_solve};
use crate::matrix::PathMatrix;
use crate::vasicek::{delta_s, substream, to_state, PathGrid, VasicekParams};

pub const MAX_BASIS: usize = 64;

/// Which one-step objective the optimal action minimises.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum ActionObjective {
    /// Hedge that only minimises the conditional variance of the portfolio.
    #[default]
    RiskMinimizing,
    /// Adds the expected-gain term `ΔS / (2γλ)` to the right-hand side.
    MeanVariance,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct LearnerConfig {
    /// Risk-free rate; the per-step discount is `e^{−rΔt}`.
    pub r: f64,
    /// Risk aversion λ.
    pub lambda: f64,
    /// Bernoulli keep-probability of the dropout mask on the Q targets.
    pub dropout_p: f64,
    /// Diagonal regulariser added to every normal-equation matrix.
    pub ridge: f64,
    pub m_basis: usize,
    pub degree: usize,
    pub objective: ActionObjective,
    /// Seed of the dropout mask.
    pub seed: u64,
}

impl Default for LearnerConfig {
    fn default() -> Self {
        Self {
            r: 0.0,
            lambda: 1e-3,
            dropout_p: 1.0,
            ridge: 1e-8,
            m_basis: DEFAULT_BASIS_SIZE,
            degree: DEFAULT_DEGREE,
            objective: ActionObjective::default(),
            seed: 0,
        }
    }
}

impl LearnerConfig {
    pub fn gamma(&self, dt: f64) -> f64 {
        (-self.r * dt).exp()
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(MqlvError::InvalidConfig(msg));
        if !(self.r.is_finite() && self.r >= 0.0) {
            return bad(format!(
                "rate must be finite and >= 0 so that gamma lies in (0, 1], got {}",
                self.r
            ));
        }
        if !(self.lambda > 0.0 && self.lambda.is_finite()) {
            return bad(format!("lambda must be > 0, got {}", self.lambda));
        }
        if !(self.dropout_p > 0.0 && self.dropout_p <= 1.0) {
            return bad(format!("dropout_p must lie in (0, 1], got {}", self.dropout_p));
        }
        if !(self.ridge >= 0.0 && self.ridge.is_finite()) {
            return bad(format!("ridge must be >= 0, got {}", self.ridge));
        }
        if self.m_basis < self.degree + 1 || self.m_basis > MAX_BASIS {
            return bad(format!(
                "m_basis {} must lie between degree + 1 and {MAX_BASIS}",
                self.m_basis
            ));
        }
        Ok(())
    }
}

/// A basis spec together with its evaluation on one cross-section of states.
#[derive(Debug, Clone)]
pub struct BasisMatrix {
    pub spec: BasisSpec,
    /// `N × M` values `Φ_n(X^k)`.
    pub values: PathMatrix,
}

impl BasisMatrix {
    pub fn new(spec: BasisSpec, states: &[f64]) -> Self {
        let m = spec.m();
        let mut values = PathMatrix::zeros(states.len(), m);
        values
            .as_mut_slice()
            .par_chunks_mut(m)
            .zip(states.par_iter())
            .for_each(|(row, x)| spec.evaluate_into(*x, row));
        Self { spec, values }
    }

    /// Per-step spec from the cross-section; a degenerate cross-section
    /// (all paths in the same state, as at `t = 0`) gets the constant basis.
    pub fn for_cross_section(states: &[f64], m: usize, degree: usize) -> Result<Self> {
        let spec = match build_spec(states, m, degree) {
            Ok(spec) => spec,
            Err(MqlvError::DegenerateDomain { lo, .. }) => BasisSpec::constant(lo),
            Err(e) => return Err(e),
        };
        Ok(Self::new(spec, states))
    }

    pub fn m(&self) -> usize {
        self.spec.m()
    }

    pub fn n_paths(&self) -> usize {
        self.values.rows()
    }

    #[inline]
    fn row(&self, k: usize) -> &[f64] {
        self.values.row(k)
    }
}

/// Indicator `1{S_T ≥ K}`; the boundary pays.
pub fn terminal_payoff(terminal: &[f64], strike: f64) -> Result<Vec<f64>> {
    if !(strike > 0.0 && strike.is_finite()) {
        return Err(MqlvError::InvalidInput(format!("strike must be > 0, got {strike}")));
    }
    Ok(terminal.iter().map(|s| if *s >= strike { 1.0 } else { 0.0 }).collect())
}

fn population_variance(values: &[f64]) -> f64 {
    let m = mean(values);
    let centered: Vec<f64> = values.iter().map(|v| (v - m) * (v - m)).collect();
    mean(&centered)
}

/// `Q_T = −Π_T − λ·Var[Π_T]` with the cross-sectional population variance.
pub fn terminal_q(payoff: &[f64], lambda: f64) -> Vec<f64> {
    let penalty = lambda * population_variance(payoff);
    payoff.iter().map(|p| -p - penalty).collect()
}

fn demeaned(values: &[f64]) -> Vec<f64> {
    let m = mean(values);
    values.iter().map(|v| v - m).collect()
}

#[derive(Debug, Clone)]
pub struct ActionFit {
    pub coeffs: Vec<f64>,
    pub condition: f64,
}

/// Coefficients of the optimal action at step `t` from the system
/// `A φ = B` with `A = Σ Φ Φᵀ ΔŜ²`.
pub fn optimal_action_coeffs(
    t: usize,
    basis: &BasisMatrix,
    delta_s_col: &[f64],
    pi_next: &[f64],
    gamma: f64,
    config: &LearnerConfig,
) -> Result<ActionFit> {
    let n = basis.n_paths();
    check_aligned(n, &[delta_s_col.len(), pi_next.len()])?;
    let m = basis.m();
    let ds_hat = demeaned(delta_s_col);
    let pi_hat = demeaned(pi_next);
    let drift = match config.objective {
        ActionObjective::RiskMinimizing => 0.0,
        ActionObjective::MeanVariance => 1.0 / (2.0 * gamma * config.lambda),
    };
    let sums = accumulate_paths(n, m * m + m, |k, buf| {
        let phi = basis.row(k);
        let w = ds_hat[k] * ds_hat[k];
        let rhs = pi_hat[k] * ds_hat[k] + drift * delta_s_col[k];
        let (gram_a, b) = buf.split_at_mut(m * m);
        for i in 0..m {
            if phi[i] == 0.0 {
                continue;
            }
            let wi = phi[i] * w;
            for j in 0..m {
                gram_a[i * m + j] += wi * phi[j];
            }
            b[i] += phi[i] * rhs;
        }
    });
    let gram_a = DMatrix::from_row_slice(m, m, &sums[..m * m]);
    let b = DVector::from_column_slice(&sums[m * m..]);
    let sol = ridge_solve(&gram_a, &b, config.ridge).map_err(|condition| MqlvError::Solver {
        step: t,
        system: "optimal action",
        condition,
    })?;
    Ok(ActionFit {
        coeffs: sol.x.iter().copied().collect(),
        condition: sol.condition,
    })
}

/// `a*(X) = Σ_n φ_n Φ_n(X)` on every path.
pub fn optimal_action(coeffs: &[f64], basis: &BasisMatrix) -> Vec<f64> {
    assert_eq!(coeffs.len(), basis.m(), "coefficient length must match the basis");
    (0..basis.n_paths())
        .map(|k| basis.row(k).iter().zip(coeffs).map(|(p, c)| p * c).sum())
        .collect()
}

/// `Π_t = γ(Π_{t+1} − a_t ΔS_t)`.
pub fn pi_backward(pi_next: &[f64], actions: &[f64], delta_s_col: &[f64], gamma: f64) -> Vec<f64> {
    pi_next
        .iter()
        .zip(actions)
        .zip(delta_s_col)
        .map(|((p, a), d)| gamma * (p - a * d))
        .collect()
}

/// One-step reward `γ a ΔS − λ γ² (Π̂² − 2 a ΔŜ Π̂ + a² ΔŜ²)` per path.
pub fn reward(pi_next: &[f64], actions: &[f64], delta_s_col: &[f64], gamma: f64, lambda: f64) -> Vec<f64> {
    let ds_hat = demeaned(delta_s_col);
    let pi_hat = demeaned(pi_next);
    (0..pi_next.len())
        .map(|k| {
            let a = actions[k];
            let risk = pi_hat[k] * pi_hat[k] - 2.0 * a * ds_hat[k] * pi_hat[k] + a * a * ds_hat[k] * ds_hat[k];
            gamma * a * delta_s_col[k] - lambda * gamma * gamma * risk
        })
        .collect()
}

/// Bernoulli(`p`) keep-mask for step `t`, one substream per path.
pub fn dropout_mask(seed: u64, t: usize, n_paths: usize, p: f64) -> Vec<f64> {
    if p >= 1.0 {
        return vec![1.0; n_paths];
    }
    (0..n_paths)
        .into_par_iter()
        .map(|k| {
            let stream = ((t as u64 + 1) << 40) | k as u64;
            let mut rng = substream(seed, stream);
            if rng.random::<f64>() < p {
                1.0
            } else {
                0.0
            }
        })
        .collect()
}

/// `(1, a, a²/2)`, the action monomials multiplying the rows of `W`.
#[inline]
fn action_features(a: f64) -> [f64; 3] {
    [1.0, a, 0.5 * a * a]
}

#[derive(Debug, Clone)]
pub struct WeightFit {
    /// `3 × M`.
    pub w: DMatrix<f64>,
    pub condition: f64,
}

/// Least-squares fit of the Q-function weights at step `t` against the
/// Bellman targets `R_t + γ Q*_{t+1}`, with the dropout mask applied to the
/// right-hand side only.
#[allow(clippy::too_many_arguments)]
pub fn fqi_weights(
    t: usize,
    basis: &BasisMatrix,
    actions: &[f64],
    rewards: &[f64],
    q_next: &[f64],
    gamma: f64,
    ridge: f64,
    mask: &[f64],
) -> Result<WeightFit> {
    let n = basis.n_paths();
    check_aligned(n, &[actions.len(), rewards.len(), q_next.len(), mask.len()])?;
    let m = basis.m();
    let d = 3 * m;
    let sums = accumulate_paths(n, d * d + d, |k, buf| {
        let phi = basis.row(k);
        let af = action_features(actions[k]);
        let mut psi = [0.0; 3 * MAX_BASIS];
        let psi = &mut psi[..d];
        for (row, f) in af.iter().enumerate() {
            for (col, p) in phi.iter().enumerate() {
                psi[row * m + col] = f * p;
            }
        }
        let target = mask[k] * (rewards[k] + gamma * q_next[k]);
        let (gram_s, rhs) = buf.split_at_mut(d * d);
        for i in 0..d {
            if psi[i] == 0.0 {
                continue;
            }
            for j in 0..d {
                gram_s[i * d + j] += psi[i] * psi[j];
            }
            rhs[i] += psi[i] * target;
        }
    });
    let gram_s = DMatrix::from_row_slice(d, d, &sums[..d * d]);
    let rhs = DVector::from_column_slice(&sums[d * d..]);
    let sol = ridge_solve(&gram_s, &rhs, ridge).map_err(|condition| MqlvError::Solver {
        step: t,
        system: "q weights",
        condition,
    })?;
    Ok(WeightFit {
        w: DMatrix::from_row_slice(3, m, sol.x.as_slice()),
        condition: sol.condition,
    })
}

/// `Q*(X, a) = (1, a, a²/2) · W · Φ(X)` on every path.
pub fn q_value(w: &DMatrix<f64>, basis: &BasisMatrix, actions: &[f64]) -> Vec<f64> {
    assert_eq!(w.shape(), (3, basis.m()), "weights must be 3 x M");
    (0..basis.n_paths())
        .map(|k| {
            let phi = basis.row(k);
            action_features(actions[k])
                .iter()
                .enumerate()
                .map(|(row, f)| f * phi.iter().enumerate().map(|(col, p)| w[(row, col)] * p).sum::<f64>())
                .sum()
        })
        .collect()
}

fn check_aligned(n: usize, lens: &[usize]) -> Result<()> {
    if lens.iter().any(|l| *l != n) {
        return Err(MqlvError::InvalidInput(format!(
            "columns are not aligned over {n} paths: {lens:?}"
        )));
    }
    Ok(())
}

#[derive(Debug, Clone, Serialize)]
pub struct StepDiagnostics {
    pub step: usize,
    pub m_basis: usize,
    pub action_condition: f64,
    pub weight_condition: f64,
}

#[derive(Debug, Clone)]
pub struct FitResult {
    /// Action coefficients `φ_t` for `t = 0 … T−1`.
    pub phi: Vec<Vec<f64>>,
    /// Q-function weights `W_t` (3 × M) for `t = 0 … T−1`.
    pub w: Vec<DMatrix<f64>>,
    pub bases: Vec<BasisSpec>,
    pub actions: PathMatrix,
    pub q_values: PathMatrix,
    pub pi_values: PathMatrix,
    pub strike: f64,
    pub gamma: f64,
    pub config: LearnerConfig,
    pub diagnostics: Vec<StepDiagnostics>,
}

impl FitResult {
    pub fn n_paths(&self) -> usize {
        self.q_values.rows()
    }

    pub fn n_steps(&self) -> usize {
        self.q_values.cols() - 1
    }
}

/// Runs the full backward recursion for one strike.
pub fn fit(grid: &PathGrid, params: &VasicekParams, strike: f64, config: &LearnerConfig) -> Result<FitResult> {
    config.validate()?;
    params.validate()?;
    let states = to_state(grid, params);
    let increments = delta_s(grid, config.r)?;
    fit_prepared(grid, &states.values, &increments, strike, config)
}

/// Bases depend only on the states, so one set serves every strike.
pub fn step_bases(states: &PathMatrix, config: &LearnerConfig) -> Result<Vec<BasisMatrix>> {
    (0..states.cols() - 1)
        .map(|t| BasisMatrix::for_cross_section(&states.column(t), config.m_basis, config.degree))
        .collect()
}

fn fit_prepared(
    grid: &PathGrid,
    states: &PathMatrix,
    increments: &PathMatrix,
    strike: f64,
    config: &LearnerConfig,
) -> Result<FitResult> {
    let bases = step_bases(states, config)?;
    fit_with_bases(grid, &bases, increments, strike, config)
}

/// Backward recursion on precomputed per-step bases.
pub fn fit_with_bases(
    grid: &PathGrid,
    bases: &[BasisMatrix],
    increments: &PathMatrix,
    strike: f64,
    config: &LearnerConfig,
) -> Result<FitResult> {
    let n = grid.n_paths();
    let steps = grid.n_steps();
    assert_eq!(bases.len(), steps);
    let gamma = config.gamma(grid.dt);

    let mut actions = PathMatrix::zeros(n, steps + 1);
    let mut q_values = PathMatrix::zeros(n, steps + 1);
    let mut pi_values = PathMatrix::zeros(n, steps + 1);

    let mut pi_next = terminal_payoff(&grid.terminal(), strike)?;
    let mut q_next = terminal_q(&pi_next, config.lambda);
    pi_values.set_column(steps, &pi_next);
    q_values.set_column(steps, &q_next);

    let mut phi = vec![Vec::new(); steps];
    let mut weights = vec![DMatrix::zeros(0, 0); steps];
    let mut diagnostics = Vec::with_capacity(steps);

    for t in (0..steps).rev() {
        let basis = &bases[t];
        let ds = increments.column(t);
        let action_fit = optimal_action_coeffs(t, basis, &ds, &pi_next, gamma, config)?;
        let a_t = optimal_action(&action_fit.coeffs, basis);
        let pi_t = pi_backward(&pi_next, &a_t, &ds, gamma);
        let r_t = reward(&pi_next, &a_t, &ds, gamma, config.lambda);
        let mask = dropout_mask(config.seed, t, n, config.dropout_p);
        let weight_fit = fqi_weights(t, basis, &a_t, &r_t, &q_next, gamma, config.ridge, &mask)?;
        let q_t = q_value(&weight_fit.w, basis, &a_t);

        actions.set_column(t, &a_t);
        pi_values.set_column(t, &pi_t);
        q_values.set_column(t, &q_t);
        diagnostics.push(StepDiagnostics {
            step: t,
            m_basis: basis.m(),
            action_condition: action_fit.condition,
            weight_condition: weight_fit.condition,
        });
        phi[t] = action_fit.coeffs;
        weights[t] = weight_fit.w;
        pi_next = pi_t;
        q_next = q_t;
    }
    diagnostics.reverse();

    Ok(FitResult {
        phi,
        w: weights,
        bases: bases.iter().map(|b| b.spec.clone()).collect(),
        actions,
        q_values,
        pi_values,
        strike,
        gamma,
        config: config.clone(),
        diagnostics,
    })
}

#[derive(Debug, Clone, Serialize)]
pub struct ProbabilityEstimate {
    pub probability: f64,
    pub raw_probability: f64,
    pub n_paths: usize,
    pub strike: f64,
    pub lambda: f64,
    pub dropout_p: f64,
    pub m_basis: usize,
    pub seed: u64,
    pub diagnostics: Vec<StepDiagnostics>,
}

/// Flat report record of a [`ProbabilityEstimate`].
#[derive(Debug, Clone, Serialize)]
pub struct ProbabilityRecord {
    pub strike: f64,
    pub probability: f64,
    pub raw_probability: f64,
    pub n_paths: usize,
    pub lambda: f64,
    pub dropout_p: f64,
    pub m_basis: usize,
    pub seed: u64,
}

impl ProbabilityEstimate {
    pub fn record(&self) -> ProbabilityRecord {
        ProbabilityRecord {
            strike: self.strike,
            probability: self.probability,
            raw_probability: self.raw_probability,
            n_paths: self.n_paths,
            lambda: self.lambda,
            dropout_p: self.dropout_p,
            m_basis: self.m_basis,
            seed: self.seed,
        }
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(&self.record()).expect("record serialises")
    }
}

/// `−mean(Q*_0)`, clipped to `[0, 1]`; Q-values carry the sign of `−Π`.
pub fn event_probability(fit: &FitResult) -> ProbabilityEstimate {
    let raw = -mean(&fit.q_values.column(0));
    ProbabilityEstimate {
        probability: raw.clamp(0.0, 1.0),
        raw_probability: raw,
        n_paths: fit.n_paths(),
        strike: fit.strike,
        lambda: fit.config.lambda,
        dropout_p: fit.config.dropout_p,
        m_basis: fit.config.m_basis,
        seed: fit.config.seed,
        diagnostics: fit.diagnostics.clone(),
    }
}
