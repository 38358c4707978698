//! Declarative run configuration (TOML); command-line flags override it.

use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use serde::{Deserialize, Serialize};

use screenhist::sampler::SamplerConfig;
use screenhist::sim::ScheduleSpec;
use screenhist::{ModelSpec, PriorSpec};

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub model: ModelSpec,
    /// Replace the progression-rate prior with the mean-sojourn prior
    /// matching each progression shape.
    pub sojourn_prior: bool,
    pub sampler: SamplerConfig,
    pub simulate: SimulateConfig,
    pub compare: CompareConfig,
    pub overdx: OverdxConfig,
    pub paths: Paths,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Truth {
    pub onset_rate: f64,
    pub prog_rate: f64,
    pub psi: f64,
    pub beta: f64,
}

impl Default for Truth {
    fn default() -> Self {
        Self {
            onset_rate: 6.5e-5,
            prog_rate: 3.14e-2,
            psi: 0.1,
            beta: 0.85,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SimulateConfig {
    pub n: usize,
    pub seed: u64,
    pub truth: Truth,
    pub schedule: ScheduleSpec,
}

impl Default for SimulateConfig {
    fn default() -> Self {
        Self {
            n: 5000,
            seed: 1,
            truth: Truth::default(),
            schedule: ScheduleSpec::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CompareConfig {
    pub alpha_h: Vec<f64>,
    pub alpha_prog: Vec<f64>,
    pub j_inner: usize,
    pub seed: u64,
    /// Predictive sojourn density grid `(0, sojourn_max]` and tail cut-offs.
    pub sojourn_max: f64,
    pub sojourn_points: usize,
    pub sojourn_lower: f64,
    pub sojourn_upper: f64,
}

impl Default for CompareConfig {
    fn default() -> Self {
        Self {
            alpha_h: vec![1.0, 2.0],
            alpha_prog: vec![2.0],
            j_inner: screenhist::compare::DEFAULT_J,
            seed: 1,
            sojourn_max: 20.0,
            sojourn_points: 200,
            sojourn_lower: 0.5,
            sojourn_upper: 15.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OverdxConfig {
    pub program_ages: Vec<f64>,
    pub life_table: Option<PathBuf>,
    pub sims_per_draw: usize,
    pub seed: u64,
}

impl Default for OverdxConfig {
    fn default() -> Self {
        Self {
            program_ages: (0..13).map(|k| 50.0 + 2.0 * k as f64).collect(),
            life_table: None,
            sims_per_draw: 10_000,
            seed: 1,
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Paths {
    pub screens: Option<PathBuf>,
    pub endpoints: Option<PathBuf>,
    pub out: Option<PathBuf>,
}

impl RunConfig {
    pub fn load(path: Option<&Path>) -> Result<Self> {
        let Some(path) = path else {
            return Ok(Self::default());
        };
        let text = std::fs::read_to_string(path).with_context(|| format!("reading config {}", path.display()))?;
        toml::from_str(&text).with_context(|| format!("parsing config {}", path.display()))
    }

    /// The model for one pair of shapes.
    pub fn model_for(&self, alpha_h: f64, alpha_prog: f64) -> Result<ModelSpec> {
        let mut m = self.model;
        m.onset_shape = alpha_h;
        m.prog_shape = alpha_prog;
        if self.sojourn_prior {
            m.prior.prog_rate = PriorSpec::with_sojourn_prior(alpha_prog)?.prog_rate;
        }
        m.validate()?;
        Ok(m)
    }

    pub fn validate(&self) -> Result<()> {
        self.model_for(self.model.onset_shape, self.model.prog_shape)?;
        self.sampler.validate()?;
        if self.compare.j_inner == 0 {
            bail!("compare.j_inner must be at least 1");
        }
        if self.compare.alpha_h.is_empty() || self.compare.alpha_prog.is_empty() {
            bail!("the comparison grid is empty");
        }
        if self.overdx.sims_per_draw == 0 {
            bail!("overdx.sims_per_draw must be at least 1");
        }
        Ok(())
    }
}

/// Parse `first:last:step` or a comma-separated list of ages.
pub fn parse_ages(s: &str) -> Result<Vec<f64>> {
    let parts: Vec<&str> = s.split(':').collect();
    if parts.len() == 3 {
        let v: Vec<f64> = parts
            .iter()
            .map(|p| p.trim().parse::<f64>())
            .collect::<std::result::Result<_, _>>()
            .with_context(|| format!("bad age range `{s}`"))?;
        if !(v[2] > 0.0 && v[1] >= v[0]) {
            bail!("age range `{s}` needs first <= last and a positive step");
        }
        let n = ((v[1] - v[0]) / v[2] + 1e-9).floor() as usize;
        return Ok((0..=n).map(|k| v[0] + k as f64 * v[2]).collect());
    }
    s.split(',')
        .map(|p| p.trim().parse::<f64>().with_context(|| format!("bad age `{p}`")))
        .collect()
}

/// Parse a comma-separated list of shapes.
pub fn parse_list(s: &str) -> Result<Vec<f64>> {
    s.split(',')
        .map(|p| p.trim().parse::<f64>().with_context(|| format!("bad number `{p}`")))
        .collect()
}
