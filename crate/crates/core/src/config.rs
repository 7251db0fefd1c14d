//! Experiment configuration files.
//!
//! TOML with the sections `[vasicek]`, `[grid]`, `[learner]`, `[strikes]`
//! and `[output]`; unknown sections and keys are rejected. Any Vasicek or
//! grid key may hold a list instead of a scalar. Lists define a sweep of
//! datasets: all lists must have the same length, scalars are broadcast,
//! and dataset `i` (1-based) takes the `i`-th entry of every list. A scalar
//! grid seed gives dataset `i` the seed `seed + i − 1`.
//!
//! ```toml
//! [vasicek]
//! kappa = 0.01
//! b = 1.0
//! sigma = 0.15
//! s0 = 1.0
//!
//! [grid]
//! maturity = 0.5
//! steps = 5
//! paths = [20000, 30000, 40000]
//! seed = 1
//!
//! [learner]
//! lambda = 0.001
//!
//! [strikes]
//! values = [0.92, 0.98, 1.00, 1.02]
//!
//! [output]
//! dir = "out/table2"
//! ```

use std::path::{Path, PathBuf};

use serde::Deserialize;

use crate::error::{MqlvError, Result};
use crate::learner::LearnerConfig;
use crate::vasicek::VasicekParams;

/// Smallest path count an experiment accepts.
pub const MIN_EXPERIMENT_PATHS: usize = 1000;

#[derive(Debug, Clone, Deserialize, PartialEq)]
#[serde(untagged)]
pub enum OneOrMany<T> {
    One(T),
    Many(Vec<T>),
}

impl<T: Clone> OneOrMany<T> {
    fn len(&self) -> Option<usize> {
        match self {
            OneOrMany::One(_) => None,
            OneOrMany::Many(v) => Some(v.len()),
        }
    }

    fn at(&self, i: usize) -> T {
        match self {
            OneOrMany::One(v) => v.clone(),
            OneOrMany::Many(v) => v[i].clone(),
        }
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct VasicekSection {
    #[serde(default = "defaults::kappa")]
    pub kappa: OneOrMany<f64>,
    #[serde(default = "defaults::b")]
    pub b: OneOrMany<f64>,
    #[serde(default = "defaults::sigma")]
    pub sigma: OneOrMany<f64>,
    #[serde(default = "defaults::s0")]
    pub s0: OneOrMany<f64>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridSection {
    #[serde(default = "defaults::maturity")]
    pub maturity: OneOrMany<f64>,
    #[serde(default = "defaults::steps")]
    pub steps: OneOrMany<usize>,
    #[serde(default = "defaults::paths")]
    pub paths: OneOrMany<usize>,
    #[serde(default = "defaults::seed")]
    pub seed: OneOrMany<u64>,
}

#[derive(Debug, Clone, Deserialize, Default)]
#[serde(deny_unknown_fields)]
pub struct StrikesSection {
    pub values: Option<Vec<f64>>,
    pub start: Option<f64>,
    pub stop: Option<f64>,
    pub count: Option<usize>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputSection {
    #[serde(default = "defaults::output_dir")]
    pub dir: PathBuf,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentFile {
    #[serde(default = "defaults::vasicek")]
    pub vasicek: VasicekSection,
    #[serde(default = "defaults::grid")]
    pub grid: GridSection,
    #[serde(default)]
    pub learner: LearnerConfig,
    #[serde(default)]
    pub strikes: StrikesSection,
    #[serde(default = "defaults::output")]
    pub output: OutputSection,
}

mod defaults {
    use super::*;

    pub fn kappa() -> OneOrMany<f64> {
        OneOrMany::One(0.01)
    }
    pub fn b() -> OneOrMany<f64> {
        OneOrMany::One(1.0)
    }
    pub fn sigma() -> OneOrMany<f64> {
        OneOrMany::One(0.15)
    }
    pub fn s0() -> OneOrMany<f64> {
        OneOrMany::One(1.0)
    }
    pub fn maturity() -> OneOrMany<f64> {
        OneOrMany::One(0.5)
    }
    pub fn steps() -> OneOrMany<usize> {
        OneOrMany::One(5)
    }
    pub fn paths() -> OneOrMany<usize> {
        OneOrMany::One(40_000)
    }
    pub fn seed() -> OneOrMany<u64> {
        OneOrMany::One(1)
    }
    pub fn output_dir() -> PathBuf {
        PathBuf::from("out")
    }
    pub fn vasicek() -> VasicekSection {
        VasicekSection {
            kappa: kappa(),
            b: b(),
            sigma: sigma(),
            s0: s0(),
        }
    }
    pub fn grid() -> GridSection {
        GridSection {
            maturity: maturity(),
            steps: steps(),
            paths: paths(),
            seed: seed(),
        }
    }
    pub fn output() -> OutputSection {
        OutputSection { dir: output_dir() }
    }
}

/// One fully specified dataset of an experiment.
#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentConfig {
    /// 1-based position in the sweep.
    pub dataset_id: usize,
    pub vasicek: VasicekParams,
    pub n_paths: usize,
    pub n_steps: usize,
    pub maturity: f64,
    pub strikes: Vec<f64>,
    pub learner: LearnerConfig,
    pub output_dir: PathBuf,
    pub seed: u64,
}

impl ExperimentConfig {
    pub fn validate(&self) -> Result<()> {
        self.vasicek.validate()?;
        self.learner.validate()?;
        validate_strikes(&self.strikes)?;
        if self.n_paths < MIN_EXPERIMENT_PATHS {
            return Err(MqlvError::InvalidConfig(format!(
                "experiments need at least {MIN_EXPERIMENT_PATHS} paths, got {}",
                self.n_paths
            )));
        }
        if self.n_steps == 0 || !(self.maturity > 0.0) {
            return Err(MqlvError::InvalidConfig(
                "grid needs steps >= 1 and maturity > 0".into(),
            ));
        }
        Ok(())
    }
}

fn validate_strikes(strikes: &[f64]) -> Result<()> {
    if strikes.is_empty() {
        return Err(MqlvError::InvalidConfig("strike grid is empty".into()));
    }
    if strikes.iter().any(|k| !(k.is_finite() && *k > 0.0)) {
        return Err(MqlvError::InvalidConfig("strikes must be finite and > 0".into()));
    }
    if strikes.windows(2).any(|w| w[1] <= w[0]) {
        return Err(MqlvError::InvalidConfig("strikes must be strictly increasing".into()));
    }
    Ok(())
}

/// `count` evenly spaced strikes from `start` to `stop`, rounded to 1e-9.
pub fn strike_grid(start: f64, stop: f64, count: usize) -> Vec<f64> {
    match count {
        0 => Vec::new(),
        1 => vec![start],
        _ => (0..count)
            .map(|i| {
                let k = start + (stop - start) * i as f64 / (count - 1) as f64;
                (k * 1e9).round() / 1e9
            })
            .collect(),
    }
}

impl StrikesSection {
    pub fn resolve(&self) -> Result<Vec<f64>> {
        let strikes = match (&self.values, self.start, self.stop, self.count) {
            (Some(v), None, None, None) => v.clone(),
            (None, Some(start), Some(stop), Some(count)) => strike_grid(start, stop, count),
            (None, None, None, None) => vec![1.0],
            _ => {
                return Err(MqlvError::InvalidConfig(
                    "[strikes] takes either `values` or all of `start`, `stop`, `count`".into(),
                ))
            }
        };
        validate_strikes(&strikes)?;
        Ok(strikes)
    }
}

impl ExperimentFile {
    pub fn parse(text: &str, origin: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| MqlvError::Parse {
            path: origin.to_string(),
            message: e.to_string(),
        })
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| MqlvError::io(path, e))?;
        Self::parse(&text, &path.display().to_string())
    }

    /// Expands list-valued keys into one [`ExperimentConfig`] per dataset.
    pub fn datasets(&self) -> Result<Vec<ExperimentConfig>> {
        let v = &self.vasicek;
        let g = &self.grid;
        let lens = [
            ("kappa", v.kappa.len()),
            ("b", v.b.len()),
            ("sigma", v.sigma.len()),
            ("s0", v.s0.len()),
            ("maturity", g.maturity.len()),
            ("steps", g.steps.len()),
            ("paths", g.paths.len()),
            ("seed", g.seed.len()),
        ];
        let mut n = None;
        for (key, len) in lens {
            match (len, n) {
                (None, _) => {}
                (Some(0), _) => return Err(MqlvError::InvalidConfig(format!("list `{key}` is empty"))),
                (Some(l), None) => n = Some(l),
                (Some(l), Some(expected)) if l != expected => {
                    return Err(MqlvError::InvalidConfig(format!(
                        "list `{key}` has {l} entries, expected {expected}"
                    )))
                }
                _ => {}
            }
        }
        let strikes = self.strikes.resolve()?;
        (0..n.unwrap_or(1))
            .map(|i| {
                let seed = match &g.seed {
                    OneOrMany::One(s) => s.wrapping_add(i as u64),
                    many => many.at(i),
                };
                let config = ExperimentConfig {
                    dataset_id: i + 1,
                    vasicek: VasicekParams::new(v.kappa.at(i), v.b.at(i), v.sigma.at(i), v.s0.at(i))?,
                    n_paths: g.paths.at(i),
                    n_steps: g.steps.at(i),
                    maturity: g.maturity.at(i),
                    strikes: strikes.clone(),
                    learner: self.learner.clone(),
                    output_dir: self.output.dir.clone(),
                    seed,
                };
                config.validate()?;
                Ok(config)
            })
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_fill_every_section() {
        let file = ExperimentFile::parse("", "inline").unwrap();
        let sets = file.datasets().unwrap();
        assert_eq!(sets.len(), 1);
        let d = &sets[0];
        assert_eq!(d.vasicek, VasicekParams::reference());
        assert_eq!((d.n_paths, d.n_steps, d.maturity, d.seed), (40_000, 5, 0.5, 1));
        assert_eq!(d.strikes, vec![1.0]);
        assert_eq!(d.learner, LearnerConfig::default());
    }

    #[test]
    fn lists_expand_into_datasets() {
        let text = r#"
            [vasicek]
            sigma = [0.10, 0.30]
            [grid]
            paths = [2000, 3000]
            seed = 10
            [strikes]
            start = 0.8
            stop = 1.2
            count = 21
        "#;
        let sets = ExperimentFile::parse(text, "inline").unwrap().datasets().unwrap();
        assert_eq!(sets.len(), 2);
        assert_eq!(sets[1].vasicek.sigma, 0.30);
        assert_eq!(sets[1].n_paths, 3000);
        assert_eq!(sets[1].seed, 11);
        assert_eq!(sets[1].dataset_id, 2);
        assert_eq!(sets[0].strikes.len(), 21);
        assert_eq!(sets[0].strikes[1], 0.82);
        assert_eq!(sets[0].strikes[20], 1.2);
    }

    #[test]
    fn unknown_keys_and_sections_are_errors() {
        for text in [
            "[vasicek]\nkapa = 0.1",
            "[extra]\nx = 1",
            "[learner]\nlamda = 0.1",
            "top = 1",
        ] {
            assert!(
                matches!(ExperimentFile::parse(text, "inline"), Err(MqlvError::Parse { .. })),
                "{text}"
            );
        }
    }

    #[test]
    fn inconsistent_configs_are_rejected() {
        let cases = [
            "[vasicek]\nsigma = [0.1, 0.2]\n[grid]\npaths = [2000, 3000, 4000]",
            "[strikes]\nvalues = [1.0, 0.9]",
            "[strikes]\nvalues = []",
            "[strikes]\nvalues = [1.0]\nstart = 0.5",
            "[grid]\npaths = 10",
            "[learner]\nlambda = -1.0",
        ];
        for text in cases {
            let file = ExperimentFile::parse(text, "inline").unwrap();
            assert!(matches!(file.datasets(), Err(MqlvError::InvalidConfig(_))), "{text}");
        }
    }
}
