//! Black–Scholes–Merton cash-or-nothing reference values.

use libm::erfc;
use serde::{Deserialize, Serialize};

use crate::error::{MqlvError, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BsmInputs {
    pub s0: f64,
    pub k: f64,
    pub sigma: f64,
    pub r: f64,
    pub t: f64,
}

impl BsmInputs {
    pub fn validate(&self) -> Result<()> {
        let all_finite = [self.s0, self.k, self.sigma, self.r, self.t]
            .iter()
            .all(|v| v.is_finite());
        if !all_finite || self.s0 <= 0.0 || self.k <= 0.0 || self.sigma < 0.0 || self.t <= 0.0 {
            return Err(MqlvError::InvalidInput(format!(
                "BSM inputs need finite s0 > 0, k > 0, sigma >= 0, t > 0; got {self:?}"
            )));
        }
        Ok(())
    }

    pub fn with_strike(self, k: f64) -> Self {
        Self { k, ..self }
    }

    fn d2(&self) -> f64 {
        let vol = self.sigma * self.t.sqrt();
        ((self.s0 / self.k).ln() + (self.r - 0.5 * self.sigma * self.sigma) * self.t) / vol
    }
}

/// Standard normal CDF through the complementary error function.
pub fn norm_cdf(x: f64) -> f64 {
    0.5 * erfc(-x / std::f64::consts::SQRT_2)
}

/// Risk-neutral probability `N(d2)` of finishing at or above the strike.
pub fn digital_probability(inputs: &BsmInputs) -> Result<f64> {
    inputs.validate()?;
    if inputs.sigma == 0.0 {
        let forward = inputs.s0 * (inputs.r * inputs.t).exp();
        return Ok(if forward >= inputs.k { 1.0 } else { 0.0 });
    }
    Ok(norm_cdf(inputs.d2()))
}

/// Discounted cash-or-nothing price `e^{−rT} N(d2)`.
pub fn digital_price(inputs: &BsmInputs) -> Result<f64> {
    Ok((-inputs.r * inputs.t).exp() * digital_probability(inputs)?)
}

/// Vanilla European call, used to cross-check the digital via a call spread.
pub fn call_price(inputs: &BsmInputs) -> Result<f64> {
    inputs.validate()?;
    let discount = (-inputs.r * inputs.t).exp();
    if inputs.sigma == 0.0 {
        return Ok((inputs.s0 - inputs.k * discount).max(0.0));
    }
    let d2 = inputs.d2();
    let d1 = d2 + inputs.sigma * inputs.t.sqrt();
    Ok(inputs.s0 * norm_cdf(d1) - inputs.k * discount * norm_cdf(d2))
}

pub fn digital_curve(template: &BsmInputs, strikes: &[f64]) -> Result<Vec<f64>> {
    if strikes.is_empty() {
        return Err(MqlvError::InvalidInput("strike grid is empty".into()));
    }
    strikes
        .iter()
        .map(|k| digital_probability(&template.with_strike(*k)))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn reference(k: f64) -> BsmInputs {
        BsmInputs {
            s0: 1.0,
            k,
            sigma: 0.15,
            r: 0.0,
            t: 0.5,
        }
    }

    #[test]
    fn cdf_values() {
        assert_eq!(norm_cdf(0.0), 0.5);
        // 40-digit reference values
        assert!((norm_cdf(1.0) - 0.841_344_746_068_542_9).abs() < 1e-15);
        assert!((norm_cdf(-2.5) - 0.006_209_665_325_776_135).abs() < 1e-16);
        assert!((norm_cdf(5.0) - 0.999_999_713_348_428_1).abs() < 1e-15);
    }

    #[test]
    fn cdf_symmetry_and_monotonicity() {
        let mut prev = 0.0;
        for i in -800..=800 {
            let x = i as f64 * 0.01;
            let v = norm_cdf(x);
            assert!((v + norm_cdf(-x) - 1.0).abs() < 1e-14);
            assert!(v >= prev);
            prev = v;
        }
    }

    #[test]
    fn reference_strikes() {
        for (k, published) in [(0.92, 0.76810), (1.00, 0.47867)] {
            let v = digital_probability(&reference(k)).unwrap();
            assert!((v - published).abs() < 5e-4, "k={k} v={v}");
        }
    }

    #[test]
    fn deterministic_limit() {
        let inputs = BsmInputs {
            sigma: 0.0,
            ..reference(0.9)
        };
        assert_eq!(digital_probability(&inputs).unwrap(), 1.0);
        assert_eq!(digital_probability(&inputs.with_strike(1.1)).unwrap(), 0.0);
        let tiny = BsmInputs {
            sigma: 1e-9,
            ..reference(0.9)
        };
        assert!((digital_probability(&tiny).unwrap() - 1.0).abs() < 1e-15);
        assert!(digital_probability(&tiny.with_strike(1.1)).unwrap() < 1e-15);
    }

    #[test]
    fn curve_examples() {
        let curve = digital_curve(&reference(1.0), &[0.5, 1.0, 1.5]).unwrap();
        assert!(curve[0] > curve[1] && curve[1] > curve[2]);
        let single = digital_curve(&reference(1.0), &[1.02]).unwrap();
        assert_eq!(single, vec![digital_probability(&reference(1.02)).unwrap()]);
        assert!(digital_curve(&reference(1.0), &[]).is_err());
    }

    #[test]
    fn call_spread_converges_to_digital() {
        for k in [0.8, 0.95, 1.0, 1.1] {
            for r in [0.0, 0.03] {
                let inputs = BsmInputs { r, ..reference(k) };
                let h = 1e-4;
                let spread = (call_price(&inputs.with_strike(k - h)).unwrap()
                    - call_price(&inputs.with_strike(k + h)).unwrap())
                    / (2.0 * h);
                let digital = digital_price(&inputs).unwrap();
                assert!((spread - digital).abs() < 1e-6, "k={k} r={r}");
                assert!((spread * (r * 0.5f64).exp() - digital_probability(&inputs).unwrap()).abs() < 1e-6);
            }
        }
    }

    #[test]
    fn rejects_bad_inputs() {
        assert!(digital_probability(&reference(0.0)).is_err());
        assert!(digital_probability(&BsmInputs {
            t: 0.0,
            ..reference(1.0)
        })
        .is_err());
        assert!(digital_probability(&BsmInputs {
            s0: f64::NAN,
            ..reference(1.0)
        })
        .is_err());
    }
}
