//! Step-size adaptation for random-walk updates during warm-up.

use serde::{Deserialize, Serialize};

pub const GAMMA: f64 = 0.05;
pub const M0: f64 = 10.0;
pub const KAPPA: f64 = 0.75;
/// Target acceptance rate of the univariate rate updates.
pub const RATE_TARGET: f64 = 0.44;
/// Target acceptance rate of the `(ψ, indolence)` block update.
pub const BLOCK_TARGET: f64 = 0.24;

/// Running state of the adaptation for one step size (a proposal variance).
///
/// Proposals during warm-up use the latest iterate `ξ`; the averaged
/// `log ε` is what remains in force after warm-up.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StepSizeAdapter {
    /// Averaged log step size.
    pub log_eps: f64,
    /// Latest iterate `ξ`.
    pub log_eps_iter: f64,
    pub sum_h: f64,
    pub m: u64,
    pub delta: f64,
    pub gamma: f64,
    pub m0: f64,
    pub kappa: f64,
}

impl StepSizeAdapter {
    pub fn new(eps: f64, delta: f64) -> Self {
        Self {
            log_eps: eps.ln(),
            log_eps_iter: eps.ln(),
            sum_h: 0.0,
            m: 0,
            delta,
            gamma: GAMMA,
            m0: M0,
            kappa: KAPPA,
        }
    }

    /// The averaged step size, used once adaptation stops.
    pub fn step_size(&self) -> f64 {
        self.log_eps.exp()
    }

    /// The step size to propose with while adapting.
    pub fn adapting_step_size(&self) -> f64 {
        self.log_eps_iter.exp()
    }
}

/// Feed the acceptance probability of step `m` and return the new averaged
/// step size.
///
/// `log ε ← (1 − ω) log ε + ω ξ` with `ξ = −(√m/γ) Σ H / (m + m0)`,
/// `H = δ − α` and `ω = m^(−κ)`.
pub fn adapt_step_size(acc: &mut StepSizeAdapter, accept_prob: f64) -> f64 {
    acc.m += 1;
    let m = acc.m as f64;
    acc.sum_h += acc.delta - accept_prob;
    let xi = -(m.sqrt() / acc.gamma) * acc.sum_h / (m + acc.m0);
    let omega = m.powf(-acc.kappa);
    acc.log_eps_iter = xi;
    acc.log_eps = (1.0 - omega) * acc.log_eps + omega * xi;
    acc.step_size()
}
