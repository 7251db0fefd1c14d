//! Clamped B-spline basis on the detrended state.
//!
//! The same family expands both the optimal action and the Q-function. The
//! clamped knot vector makes the functions a partition of unity, so a
//! constant is always representable and regression means are preserved.

use serde::Serialize;

use crate::error::{MqlvError, Result};

pub const DEFAULT_BASIS_SIZE: usize = 12;
pub const DEFAULT_DEGREE: usize = 3;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BasisSpec {
    m: usize,
    degree: usize,
    knots: Vec<f64>,
    domain: (f64, f64),
}

impl BasisSpec {
    /// Builds a spec from an explicit knot vector of length `m + degree + 1`.
    pub fn from_knots(knots: Vec<f64>, degree: usize) -> Result<Self> {
        if degree > 7 {
            return Err(MqlvError::InvalidConfig(format!(
                "spline degree {degree} above 7 is not supported"
            )));
        }
        if knots.len() < 2 * (degree + 1) {
            return Err(MqlvError::InvalidConfig(format!(
                "{} knots cannot carry a degree-{degree} basis",
                knots.len()
            )));
        }
        if knots.iter().any(|k| !k.is_finite()) || knots.windows(2).any(|w| w[1] < w[0]) {
            return Err(MqlvError::InvalidConfig(
                "knot vector must be finite and non-decreasing".into(),
            ));
        }
        let m = knots.len() - degree - 1;
        let domain = (knots[degree], knots[m]);
        if !(domain.0 < domain.1) {
            return Err(MqlvError::DegenerateDomain {
                lo: domain.0,
                hi: domain.1,
            });
        }
        Ok(Self {
            m,
            degree,
            knots,
            domain,
        })
    }

    /// The single function `Φ ≡ 1`, a degree-0 spline on one span around `center`.
    pub fn constant(center: f64) -> Self {
        Self {
            m: 1,
            degree: 0,
            knots: vec![center - 0.5, center + 0.5],
            domain: (center - 0.5, center + 0.5),
        }
    }

    pub fn m(&self) -> usize {
        self.m
    }

    pub fn degree(&self) -> usize {
        self.degree
    }

    pub fn knots(&self) -> &[f64] {
        &self.knots
    }

    pub fn domain(&self) -> (f64, f64) {
        self.domain
    }

    /// Index of the knot span containing `x`, already clamped to the domain.
    fn span(&self, x: f64) -> usize {
        let interior = &self.knots[self.degree + 1..self.m];
        self.degree + interior.partition_point(|k| *k <= x)
    }

    /// Writes the `degree + 1` non-zero basis values at `x` into `out` and
    /// returns the index of the first one.
    pub fn evaluate_local(&self, x: f64, out: &mut [f64]) -> usize {
        let p = self.degree;
        debug_assert!(out.len() > p);
        let x = x.clamp(self.domain.0, self.domain.1);
        let i = self.span(x);
        let mut left = [0.0; 8];
        let mut right = [0.0; 8];
        out[0] = 1.0;
        for j in 1..=p {
            left[j] = x - self.knots[i + 1 - j];
            right[j] = self.knots[i + j] - x;
            let mut saved = 0.0;
            for r in 0..j {
                let temp = out[r] / (right[r + 1] + left[j - r]);
                out[r] = saved + right[r + 1] * temp;
                saved = left[j - r] * temp;
            }
            out[j] = saved;
        }
        i - p
    }

    /// Dense evaluation `(Φ_1(x), …, Φ_M(x))`.
    pub fn evaluate(&self, x: f64) -> Vec<f64> {
        let mut dense = vec![0.0; self.m];
        self.evaluate_into(x, &mut dense);
        dense
    }

    pub fn evaluate_into(&self, x: f64, dense: &mut [f64]) {
        debug_assert_eq!(dense.len(), self.m);
        let mut local = [0.0; 8];
        let first = self.evaluate_local(x, &mut local);
        dense.iter_mut().for_each(|v| *v = 0.0);
        dense[first..=first + self.degree].copy_from_slice(&local[..=self.degree]);
    }
}

/// Clamped uniform knots over the padded sample range, yielding `m` functions.
pub fn build_spec(x_samples: &[f64], m: usize, degree: usize) -> Result<BasisSpec> {
    if degree > 7 {
        return Err(MqlvError::InvalidConfig(format!(
            "spline degree {degree} above 7 is not supported"
        )));
    }
    if m < degree + 1 {
        return Err(MqlvError::InvalidConfig(format!(
            "basis size {m} is below degree + 1 = {}",
            degree + 1
        )));
    }
    let (lo, hi) = x_samples
        .iter()
        .filter(|x| x.is_finite())
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &x| {
            (lo.min(x), hi.max(x))
        });
    if !(lo.is_finite() && hi.is_finite()) {
        return Err(MqlvError::InvalidInput("no finite samples to place knots on".into()));
    }
    let range = hi - lo;
    if !(range > 1e-14 * lo.abs().max(hi.abs()).max(1.0)) {
        return Err(MqlvError::DegenerateDomain { lo, hi });
    }
    let pad = 1e-6 * range;
    let (lo, hi) = (lo - pad, hi + pad);
    let spans = m - degree;
    let width = (hi - lo) / spans as f64;
    let mut knots = Vec::with_capacity(m + degree + 1);
    knots.extend(std::iter::repeat_n(lo, degree + 1));
    knots.extend((1..spans).map(|i| lo + i as f64 * width));
    knots.extend(std::iter::repeat_n(hi, degree + 1));
    BasisSpec::from_knots(knots, degree)
}
