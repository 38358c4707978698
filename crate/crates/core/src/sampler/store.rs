//! Retained posterior draws.

use serde::{Deserialize, Serialize};

use crate::model::{LatentState, ModelSpec};

/// The four sampled scalar parameters.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Parameter {
    OnsetRate,
    ProgRate,
    Psi,
    Beta,
}

impl Parameter {
    pub const ALL: [Parameter; 4] = [
        Parameter::OnsetRate,
        Parameter::ProgRate,
        Parameter::Psi,
        Parameter::Beta,
    ];

    pub fn name(&self) -> &'static str {
        match self {
            Parameter::OnsetRate => "lambda_h",
            Parameter::ProgRate => "lambda_prog",
            Parameter::Psi => "psi",
            Parameter::Beta => "beta",
        }
    }

    pub fn from_name(name: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|p| p.name() == name)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Draw {
    pub iteration: u64,
    pub onset_rate: f64,
    pub prog_rate: f64,
    pub psi: f64,
    pub beta: f64,
}

impl Draw {
    pub fn get(&self, p: Parameter) -> f64 {
        match p {
            Parameter::OnsetRate => self.onset_rate,
            Parameter::ProgRate => self.prog_rate,
            Parameter::Psi => self.psi,
            Parameter::Beta => self.beta,
        }
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct AcceptanceCounter {
    pub attempts: u64,
    pub accepts: u64,
}

impl AcceptanceCounter {
    pub fn record(&mut self, accepted: bool) {
        self.attempts += 1;
        self.accepts += accepted as u64;
    }

    pub fn rate(&self) -> f64 {
        if self.attempts == 0 {
            f64::NAN
        } else {
            self.accepts as f64 / self.attempts as f64
        }
    }
}

/// Post-warm-up acceptance counts of each update type.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct AcceptanceStats {
    pub onset_rate: AcceptanceCounter,
    pub prog_rate: AcceptanceCounter,
    pub psi_block: AcceptanceCounter,
    /// Pooled over individuals.
    pub onset_age: AcceptanceCounter,
}

/// Proposal variances of the random-walk updates.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StepSizes {
    pub onset_rate: f64,
    pub prog_rate: f64,
    pub psi: f64,
}

impl Default for StepSizes {
    fn default() -> Self {
        Self {
            onset_rate: 1e-10,
            prog_rate: 1e-5,
            psi: 1e-3,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChainDraws {
    pub chain: usize,
    pub draws: Vec<Draw>,
    /// Latent states at each retained draw, when requested.
    pub latents: Option<Vec<Vec<LatentState>>>,
    pub acceptance: AcceptanceStats,
    /// Step sizes in use after warm-up.
    pub step_sizes: StepSizes,
}

impl ChainDraws {
    pub fn values(&self, p: Parameter) -> Vec<f64> {
        self.draws.iter().map(|d| d.get(p)).collect()
    }
}

/// Draws from every chain of a run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DrawStore {
    pub model: ModelSpec,
    pub chains: Vec<ChainDraws>,
}

impl DrawStore {
    pub fn n_chains(&self) -> usize {
        self.chains.len()
    }

    /// Per-chain traces of one parameter.
    pub fn traces(&self, p: Parameter) -> Vec<Vec<f64>> {
        self.chains.iter().map(|c| c.values(p)).collect()
    }

    /// All draws pooled across chains.
    pub fn pooled(&self) -> Vec<Draw> {
        self.chains.iter().flat_map(|c| c.draws.iter().copied()).collect()
    }
}
