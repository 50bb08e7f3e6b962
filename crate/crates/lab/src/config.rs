//! Versioned JSON experiment configuration.

use std::path::{Path, PathBuf};

use otbound::campanato::StepConfig;
use serde::{Deserialize, Serialize};

use crate::families::{Family, ALPHA};
use crate::{LabError, Result};

pub const SCHEMA_VERSION: u32 = 1;

/// Parameter grid. Family parameters are read from the list matching the
/// family (`eps` for the counterexamples, `a` for saddle, perturbation and
/// power-graph amplitudes, `delta` for translation shifts and tilt angles,
/// `lambda` for the dilation target density); `theta`, `tau` and `alpha`
/// configure the iteration and are crossed with everything else.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ParameterGrid {
    #[serde(default)]
    pub eps: Vec<f64>,
    #[serde(default)]
    pub a: Vec<f64>,
    #[serde(default)]
    pub delta: Vec<f64>,
    #[serde(default)]
    pub lambda: Vec<f64>,
    #[serde(default)]
    pub theta: Vec<f64>,
    #[serde(default)]
    pub tau: Vec<f64>,
    #[serde(default)]
    pub alpha: Vec<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub schema_version: u32,
    pub family: String,
    #[serde(default)]
    pub grid: ParameterGrid,
    pub resolutions: Vec<usize>,
    #[serde(default)]
    pub seed: u64,
    pub output: PathBuf,
    #[serde(default = "default_depth")]
    pub depth: usize,
}

fn default_depth() -> usize {
    3
}

/// One fully specified instance of a run.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Job {
    pub index: usize,
    pub family: Family,
    pub per_unit: usize,
    pub step: StepConfig,
    pub depth: usize,
    pub seed: u64,
}

impl ExperimentConfig {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| LabError::Config(format!("cannot read {}: {e}", path.display())))?;
        let cfg: ExperimentConfig =
            serde_json::from_str(&text).map_err(|e| LabError::Config(format!("{}: {e}", path.display())))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(LabError::Config(m));
        if self.schema_version != SCHEMA_VERSION {
            return bad(format!("schema_version {} unsupported (expected {SCHEMA_VERSION})", self.schema_version));
        }
        if self.resolutions.is_empty() {
            return bad("resolutions must be nonempty".into());
        }
        if let Some(n) = self.resolutions.iter().find(|n| !(4..=512).contains(*n)) {
            return bad(format!("resolution {n} outside [4, 512]"));
        }
        let g = &self.grid;
        if let Some(t) = g.theta.iter().find(|t| !(**t > 0.0 && **t < 1.0)) {
            return bad(format!("theta {t} not in (0, 1)"));
        }
        if let Some(t) = g.tau.iter().find(|t| !(**t > 0.0 && **t < 0.25)) {
            return bad(format!("tau {t} not in (0, 1/4)"));
        }
        if let Some(a) = g.alpha.iter().find(|a| !(**a > 0.0 && **a < 1.0)) {
            return bad(format!("alpha {a} not in (0, 1)"));
        }
        if let Some(l) = g.lambda.iter().find(|l| !(0.5..=2.0).contains(*l)) {
            return bad(format!("lambda {l} outside [0.5, 2]"));
        }
        if self.depth > 8 {
            return bad(format!("depth {} exceeds 8", self.depth));
        }
        self.families().map(|_| ())
    }

    /// Family members named by the parameter grid.
    pub fn families(&self) -> Result<Vec<Family>> {
        let g = &self.grid;
        let values = match self.family.as_str() {
            "layer-split" | "layer-split-product" => &g.eps,
            "saddle" | "flat-perturbation" | "perturbation" | "power-graph" => &g.a,
            "translation" | "tilted-tangency" => &g.delta,
            "dilation" => &g.lambda,
            _ => return Ok(vec![Family::parse(&self.family, None)?]),
        };
        let convert = |v: f64| if self.family == "dilation" { 1.0 / v - 1.0 } else { v };
        if values.is_empty() {
            return Ok(vec![Family::parse(&self.family, None)?]);
        }
        values.iter().map(|&v| Family::parse(&self.family, Some(convert(v)))).collect()
    }

    /// Expands the grid into jobs in a fixed order: family member, then
    /// resolution, then `theta`, `tau`, `alpha`.
    pub fn jobs(&self) -> Result<Vec<Job>> {
        let or_default = |v: &Vec<f64>, d: f64| if v.is_empty() { vec![d] } else { v.clone() };
        let base = StepConfig::default();
        let thetas = or_default(&self.grid.theta, base.theta);
        let taus = or_default(&self.grid.tau, base.tau);
        let alphas = or_default(&self.grid.alpha, ALPHA);
        let mut jobs = Vec::new();
        for family in self.families()? {
            for &per_unit in &self.resolutions {
                for &theta in &thetas {
                    for &tau in &taus {
                        for &alpha in &alphas {
                            jobs.push(Job {
                                index: jobs.len(),
                                family: family.clone(),
                                per_unit,
                                step: StepConfig { theta, tau, alpha, ..base.clone() },
                                depth: self.depth,
                                seed: self.seed,
                            });
                        }
                    }
                }
            }
        }
        Ok(jobs)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample() -> ExperimentConfig {
        ExperimentConfig {
            schema_version: 1,
            family: "flat-perturbation".into(),
            grid: ParameterGrid { a: vec![0.01, 0.02], tau: vec![0.05, 0.1], ..Default::default() },
            resolutions: vec![32, 64],
            seed: 7,
            output: "out".into(),
            depth: 2,
        }
    }

    #[test]
    fn grid_expands_in_fixed_order() {
        let jobs = sample().jobs().unwrap();
        assert_eq!(jobs.len(), 8);
        assert_eq!(jobs[0].family, Family::FlatPerturbation { a: 0.01 });
        assert_eq!((jobs[1].per_unit, jobs[1].step.tau), (32, 0.1));
        assert_eq!(jobs[2].per_unit, 64);
        assert!(jobs.iter().enumerate().all(|(i, j)| j.index == i));
    }

    #[test]
    fn rejects_bad_schema_and_unknown_fields() {
        let mut cfg = sample();
        cfg.schema_version = 9;
        assert!(matches!(cfg.validate(), Err(LabError::Config(_))));
        let text = r#"{"schema_version":1,"family":"identity","resolutions":[8],"output":"o","bogus":1}"#;
        assert!(serde_json::from_str::<ExperimentConfig>(text).is_err());
    }

    #[test]
    fn round_trips_through_json() {
        let cfg = sample();
        let text = serde_json::to_string(&cfg).unwrap();
        assert_eq!(serde_json::from_str::<ExperimentConfig>(&text).unwrap(), cfg);
    }
}
