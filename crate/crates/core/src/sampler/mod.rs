//! Data-augmented Metropolis-within-Gibbs sampler.
//!
//! One sweep updates, in order: sensitivity `β` (conjugate Gibbs), the onset
//! rate, the progression rate (reflected random walks), every onset age
//! (independence proposals), and the indolent fraction jointly with every
//! indolence indicator.

mod adapt;
mod checkpoint;
mod store;

pub use adapt::{adapt_step_size, StepSizeAdapter, BLOCK_TARGET, RATE_TARGET};
pub use checkpoint::{Checkpoint, CHECKPOINT_VERSION};
pub use store::{AcceptanceCounter, AcceptanceStats, ChainDraws, Draw, DrawStore, Parameter, StepSizes};

use rand::Rng;
use rand_distr::{Beta as BetaDist, Distribution, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::likelihood::{false_negatives, EntryAges, ScreenCounts};
use crate::model::{xlogy, BetaPrior, LatentState, ModelSpec, Params};
use crate::proposal::ZhpProposal;
use crate::record::{Group, IndividualRecord};
use crate::rng::{ChainKey, Stream, StreamRng};
use crate::weibull::WeibullRS;

/// How the parameters of each chain are initialised.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum InitStrategy {
    /// Uniform draws: onset rate in (2e-5, 2e-4), progression rate in
    /// (1e-2, 1e-1), `ψ` in (0, 1), `β` in (0.7, 0.95).
    Overdispersed,
    Fixed {
        onset_rate: f64,
        prog_rate: f64,
        psi: f64,
        beta: f64,
    },
}

/// Blocks held at their initial values.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct FrozenBlocks {
    pub beta: bool,
    pub onset_rate: bool,
    pub prog_rate: bool,
    /// With `ψ` frozen the indicators get plain Gibbs updates instead.
    pub psi: bool,
}

impl FrozenBlocks {
    pub fn all() -> Self {
        Self {
            beta: true,
            onset_rate: true,
            prog_rate: true,
            psi: true,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SamplerConfig {
    /// Total sweeps per chain, warm-up included.
    pub iterations: u64,
    pub warmup: u64,
    /// Keep every `thin`-th post-warm-up sweep; `None` keeps about 1000 draws.
    pub thin: Option<u64>,
    pub chains: usize,
    pub seed: u64,
    pub init: InitStrategy,
    pub initial_step: StepSizes,
    pub frozen: FrozenBlocks,
    pub store_latents: bool,
    /// Update onset ages on the rayon pool. Output does not depend on it.
    pub parallel_latents: bool,
}

impl Default for SamplerConfig {
    fn default() -> Self {
        Self {
            iterations: 15_000,
            warmup: 5_000,
            thin: None,
            chains: 4,
            seed: 1,
            init: InitStrategy::Overdispersed,
            initial_step: StepSizes::default(),
            frozen: FrozenBlocks::default(),
            store_latents: false,
            parallel_latents: false,
        }
    }
}

impl SamplerConfig {
    pub fn validate(&self) -> Result<()> {
        if self.warmup >= self.iterations {
            return Err(Error::Config(format!(
                "warm-up ({}) must be shorter than the run ({})",
                self.warmup, self.iterations
            )));
        }
        if self.chains == 0 {
            return Err(Error::Config("at least one chain is required".into()));
        }
        if self.thin == Some(0) {
            return Err(Error::Config("thin must be at least 1".into()));
        }
        let s = self.initial_step;
        for (name, v) in [("onset_rate", s.onset_rate), ("prog_rate", s.prog_rate), ("psi", s.psi)] {
            if !(v.is_finite() && v > 0.0) {
                return Err(Error::Config(format!("initial step size {name} must be positive")));
            }
        }
        if let InitStrategy::Fixed { onset_rate, prog_rate, psi, beta } = self.init {
            if !(onset_rate > 0.0 && prog_rate > 0.0 && (0.0..=1.0).contains(&psi) && (0.0..=1.0).contains(&beta)) {
                return Err(Error::Config("fixed initial values are out of range".into()));
            }
        }
        Ok(())
    }

    pub fn thin(&self) -> u64 {
        self.thin
            .unwrap_or_else(|| ((self.iterations - self.warmup) / 1000).max(1))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Adapters {
    pub onset_rate: StepSizeAdapter,
    pub prog_rate: StepSizeAdapter,
    pub psi: StepSizeAdapter,
}

/// Everything needed to continue a chain.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChainState {
    pub params: Params,
    pub latents: Vec<LatentState>,
    /// Completed sweeps.
    pub iteration: u64,
    pub adapters: Adapters,
    pub acceptance: AcceptanceStats,
}

/// Which Weibull rate an update targets.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RateParam {
    Onset,
    Prog,
}

/// Draw `β` from its conjugate full conditional `Be(a + m⁺, b + m⁻)`.
pub fn gibbs_beta<R: Rng + ?Sized>(rng: &mut R, counts: ScreenCounts, prior: &BetaPrior) -> f64 {
    let a = prior.a + counts.true_pos as f64;
    let b = prior.b + counts.false_neg as f64;
    BetaDist::new(a, b).expect("positive shape parameters").sample(rng)
}

/// Fold `x` into `[0, 1]` by reflection at both ends.
#[inline]
pub fn reflect_unit(x: f64) -> f64 {
    let y = x.abs() % 2.0;
    if y > 1.0 {
        2.0 - y
    } else {
        y
    }
}

/// Reflected Gaussian random walk on `[0, 1]` with increment variance `eps`.
pub fn propose_psi<R: Rng + ?Sized>(rng: &mut R, psi: f64, eps: f64) -> f64 {
    let z: f64 = rng.sample(StandardNormal);
    reflect_unit(psi + eps.sqrt() * z)
}

/// Reflected Gaussian random walk on the positive half-line.
pub fn propose_rate<R: Rng + ?Sized>(rng: &mut R, rate: f64, eps: f64) -> f64 {
    let z: f64 = rng.sample(StandardNormal);
    (rate + eps.sqrt() * z).abs()
}

/// Full conditional probability that the tumour is indolent.
pub fn indolence_conditional(rec: &IndividualRecord, onset: Option<f64>, psi: f64, prog: &WeibullRS) -> f64 {
    match (rec.group(), onset) {
        (Group::IntervalDetected, _) => 0.0,
        (_, None) => psi,
        (_, Some(x)) => {
            let s = prog.survival(rec.censor_age() - x);
            if psi == 0.0 {
                0.0
            } else {
                psi / (psi + (1.0 - psi) * s)
            }
        }
    }
}

/// The factor of the per-individual target that depends on the onset age
/// once the proposal has been divided out.
#[inline]
pub(crate) fn clinical_log_weight(
    rec: &IndividualRecord,
    onset: Option<f64>,
    indolent: bool,
    prog: &WeibullRS,
) -> f64 {
    match onset {
        None => 0.0,
        Some(x) => match rec.group() {
            Group::IntervalDetected => {
                let s = rec.t_pc() - x;
                if indolent || s <= 0.0 {
                    f64::NEG_INFINITY
                } else {
                    prog.ln_pdf(s)
                }
            }
            _ if indolent => 0.0,
            _ => -prog.cum_hazard(rec.censor_age() - x),
        },
    }
}

/// Per-individual quantities that depend only on the latent state.
#[derive(Debug, Clone, Copy, Default)]
struct LatentCache {
    /// `(z − t0)^α_H`, or `(c − t0)^α_H` without onset.
    onset_pow: f64,
    /// `(c − z)^α_prog`; zero without onset.
    sojourn_pow: f64,
    false_neg: u32,
    /// Uniform reserved for this sweep's indolence draw.
    u_indolence: f64,
    accepted: bool,
}

impl LatentCache {
    fn refresh(&mut self, rec: &IndividualRecord, z: &LatentState, onset_shape: f64, prog_shape: f64, t0: f64) {
        let c = rec.censor_age();
        match z.onset {
            None => {
                self.onset_pow = crate::weibull::pow_shape(c - t0, onset_shape);
                self.sojourn_pow = 0.0;
                self.false_neg = 0;
            }
            Some(x) => {
                self.onset_pow = crate::weibull::pow_shape(x - t0, onset_shape);
                self.sojourn_pow = crate::weibull::pow_shape(c - x, prog_shape);
                self.false_neg = false_negatives(rec, x);
            }
        }
    }
}

/// Cohort sufficient statistics of the complete-data likelihood.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct SufficientStats {
    pub screens: ScreenCounts,
    pub n_onset: u64,
    pub onset_exposure: f64,
    pub n_clinical: u64,
    pub prog_exposure: f64,
}

/// A running chain bound to its data.
pub struct Chain<'a> {
    records: &'a [IndividualRecord],
    model: &'a ModelSpec,
    config: SamplerConfig,
    key: ChainKey,
    entries: EntryAges,
    n_positive: Vec<u32>,
    pub state: ChainState,
    cache: Vec<LatentCache>,
    /// Progressive clinical-free probability per distinct entry age at the
    /// current rates.
    free: Vec<f64>,
    scratch: ZhpProposal,
}

impl<'a> Chain<'a> {
    /// Start a chain: initial parameters per `config.init`, latents from the
    /// proposals.
    pub fn new(
        records: &'a [IndividualRecord],
        model: &'a ModelSpec,
        config: SamplerConfig,
        chain: usize,
    ) -> Result<Self> {
        config.validate()?;
        let key = ChainKey::new(config.seed, chain as u64);
        let params = initial_params(model, &config, key)?;
        let latents = init_latents(key, records, &params, model.t0)?;
        let state = ChainState {
            params,
            latents,
            iteration: 0,
            adapters: Adapters {
                onset_rate: StepSizeAdapter::new(config.initial_step.onset_rate, RATE_TARGET),
                prog_rate: StepSizeAdapter::new(config.initial_step.prog_rate, RATE_TARGET),
                psi: StepSizeAdapter::new(config.initial_step.psi, BLOCK_TARGET),
            },
            acceptance: AcceptanceStats::default(),
        };
        Self::from_state(records, model, config, chain, state)
    }

    /// Rebind a saved state to its data.
    pub fn from_state(
        records: &'a [IndividualRecord],
        model: &'a ModelSpec,
        config: SamplerConfig,
        chain: usize,
        state: ChainState,
    ) -> Result<Self> {
        model.validate()?;
        model.check_records(records)?;
        if state.latents.len() != records.len() {
            return Err(Error::Config(format!(
                "state has {} latent entries for {} records",
                state.latents.len(),
                records.len()
            )));
        }
        for (rec, z) in records.iter().zip(&state.latents) {
            z.validate(rec, model.t0)?;
        }
        let entries = EntryAges::new(records);
        let free = if model.left_truncation {
            entries.progressive_free(&state.params, model.t0)?
        } else {
            Vec::new()
        };
        let mut cache = vec![LatentCache::default(); records.len()];
        for ((c, rec), z) in cache.iter_mut().zip(records).zip(&state.latents) {
            c.refresh(rec, z, model.onset_shape, model.prog_shape, model.t0);
        }
        Ok(Self {
            records,
            model,
            config,
            key: ChainKey::new(config.seed, chain as u64),
            entries,
            n_positive: records.iter().map(|r| r.n_positive()).collect(),
            state,
            cache,
            free,
            scratch: ZhpProposal::default(),
        })
    }

    pub fn records(&self) -> &[IndividualRecord] {
        self.records
    }

    pub fn config(&self) -> &SamplerConfig {
        &self.config
    }

    pub fn sufficient_stats(&self) -> SufficientStats {
        let mut s = SufficientStats::default();
        for (i, (rec, z)) in self.records.iter().zip(&self.state.latents).enumerate() {
            let c = &self.cache[i];
            s.onset_exposure += c.onset_pow;
            if z.onset.is_some() {
                s.n_onset += 1;
                s.screens.true_pos += self.n_positive[i];
                s.screens.false_neg += c.false_neg;
                if !z.indolent {
                    s.prog_exposure += c.sojourn_pow;
                }
            }
            if rec.group() == Group::IntervalDetected {
                s.n_clinical += 1;
            }
        }
        s
    }

    fn sum_log_normalizer(&self, free: &[f64], psi: f64) -> f64 {
        if self.model.left_truncation {
            self.entries.sum_log_normalizer(free, psi)
        } else {
            0.0
        }
    }

    /// Log full-conditional density of one rate, up to a constant.
    pub fn rate_log_target(&self, which: RateParam, rate: f64, stats: &SufficientStats) -> Result<f64> {
        if !(rate > 0.0) || !rate.is_finite() {
            return Ok(f64::NEG_INFINITY);
        }
        let params = self.with_rate(which, rate);
        let free = if self.model.left_truncation {
            self.entries.progressive_free(&params, self.model.t0)?
        } else {
            Vec::new()
        };
        Ok(self.rate_log_target_with(which, rate, stats, &free))
    }

    fn rate_log_target_with(&self, which: RateParam, rate: f64, stats: &SufficientStats, free: &[f64]) -> f64 {
        let prior = &self.model.prior;
        let (count, exposure, ln_prior) = match which {
            RateParam::Onset => (stats.n_onset, stats.onset_exposure, prior.onset_rate.ln_pdf(rate)),
            RateParam::Prog => (stats.n_clinical, stats.prog_exposure, prior.prog_rate.ln_pdf(rate)),
        };
        xlogy(count as f64, rate) - rate * exposure + ln_prior - self.sum_log_normalizer(free, self.state.params.psi)
    }

    fn with_rate(&self, which: RateParam, rate: f64) -> Params {
        let mut p = self.state.params;
        match which {
            RateParam::Onset => p.onset = p.onset.with_rate(rate),
            RateParam::Prog => p.prog = p.prog.with_rate(rate),
        }
        p
    }

    /// One reflected random-walk update of a rate. Returns whether it moved.
    pub fn mh_update_rate(&mut self, which: RateParam, stats: &SufficientStats, sweep: u64) -> Result<bool> {
        let adapting = sweep <= self.config.warmup;
        let (stream, adapter) = match which {
            RateParam::Onset => (Stream::OnsetRate, self.state.adapters.onset_rate),
            RateParam::Prog => (Stream::ProgRate, self.state.adapters.prog_rate),
        };
        let mut rng = self.key.stream(sweep, stream);
        let current = match which {
            RateParam::Onset => self.state.params.onset.rate(),
            RateParam::Prog => self.state.params.prog.rate(),
        };
        let eps = if adapting { adapter.adapting_step_size() } else { adapter.step_size() };
        let proposed = propose_rate(&mut rng, current, eps);
        let u: f64 = rng.random();

        let lt_current = self.rate_log_target_with(which, current, stats, &self.free);
        if !lt_current.is_finite() {
            return Err(self.non_finite(sweep, format!("{which:?} rate target at current value is {lt_current}")));
        }
        let (lt_proposed, free_proposed) = if proposed > 0.0 {
            let params = self.with_rate(which, proposed);
            let free = if self.model.left_truncation {
                self.entries.progressive_free(&params, self.model.t0)?
            } else {
                Vec::new()
            };
            (self.rate_log_target_with(which, proposed, stats, &free), free)
        } else {
            (f64::NEG_INFINITY, Vec::new())
        };
        let log_ratio = lt_proposed - lt_current;
        let alpha = if log_ratio >= 0.0 { 1.0 } else { log_ratio.exp() };
        let accepted = u < alpha;
        if accepted {
            self.state.params = self.with_rate(which, proposed);
            self.free = free_proposed;
        }
        let (adapter, counter) = match which {
            RateParam::Onset => (&mut self.state.adapters.onset_rate, &mut self.state.acceptance.onset_rate),
            RateParam::Prog => (&mut self.state.adapters.prog_rate, &mut self.state.acceptance.prog_rate),
        };
        if adapting {
            adapt_step_size(adapter, alpha);
        } else {
            counter.record(accepted);
        }
        Ok(accepted)
    }

    /// Log acceptance ratio of moving individual `i` to `onset` with its
    /// indicator held fixed.
    pub fn zhp_log_ratio(&self, i: usize, onset: Option<f64>) -> f64 {
        let rec = &self.records[i];
        let z = self.state.latents[i];
        let prog = &self.state.params.prog;
        clinical_log_weight(rec, onset, z.indolent, prog) - clinical_log_weight(rec, z.onset, z.indolent, prog)
    }

    /// Independence Metropolis-Hastings update of individual `i`'s onset
    /// age. Returns the proposed onset and whether it was accepted.
    pub fn mh_update_zhp(&mut self, i: usize, sweep: u64) -> Result<(Option<f64>, bool)> {
        let mut rng = self.key.stream(sweep, Stream::Individual(i));
        let (proposed, accepted) = update_individual(
            &self.records[i],
            &mut self.state.latents[i],
            &mut self.cache[i],
            &mut self.scratch,
            &self.state.params,
            self.model,
            &mut rng,
        )?;
        Ok((proposed, accepted))
    }

    fn update_latents(&mut self, sweep: u64) -> Result<()> {
        let params = self.state.params;
        let model = self.model;
        let key = self.key;
        let records = self.records;
        if self.config.parallel_latents {
            self.state
                .latents
                .par_iter_mut()
                .zip(self.cache.par_iter_mut())
                .enumerate()
                .try_for_each_init(ZhpProposal::default, |scratch, (i, (z, c))| {
                    let mut rng = key.stream(sweep, Stream::Individual(i));
                    update_individual(&records[i], z, c, scratch, &params, model, &mut rng).map(|_| ())
                })?;
        } else {
            for i in 0..records.len() {
                let mut rng = key.stream(sweep, Stream::Individual(i));
                update_individual(
                    &records[i],
                    &mut self.state.latents[i],
                    &mut self.cache[i],
                    &mut self.scratch,
                    &params,
                    model,
                    &mut rng,
                )?;
            }
        }
        if sweep > self.config.warmup {
            let n = self.cache.len() as u64;
            let acc = self.cache.iter().filter(|c| c.accepted).count() as u64;
            let counter = &mut self.state.acceptance.onset_age;
            counter.attempts += n;
            counter.accepts += acc;
        }
        Ok(())
    }

    /// Log acceptance ratio of the joint `(ψ, indicators)` move to `psi_new`;
    /// the indicators are drawn from their full conditionals and cancel.
    pub fn block_log_ratio(&self, psi_new: f64) -> f64 {
        let psi = self.state.params.psi;
        let prior = &self.model.prior.psi;
        let mut r = prior.ln_pdf(psi_new) - prior.ln_pdf(psi);
        if r.is_nan() || r == f64::NEG_INFINITY {
            return f64::NEG_INFINITY;
        }
        let lambda = self.state.params.prog.rate();
        let mut n_clinical = 0u64;
        for (i, (rec, z)) in self.records.iter().zip(&self.state.latents).enumerate() {
            if rec.group() == Group::IntervalDetected {
                n_clinical += 1;
            } else if z.onset.is_some() {
                let s = (-lambda * self.cache[i].sojourn_pow).exp();
                r += ((psi_new + (1.0 - psi_new) * s) / (psi + (1.0 - psi) * s)).ln();
            }
        }
        if n_clinical > 0 {
            r += n_clinical as f64 * ((-psi_new).ln_1p() - (-psi).ln_1p());
        }
        r -= self.sum_log_normalizer(&self.free, psi_new) - self.sum_log_normalizer(&self.free, psi);
        if r.is_nan() {
            f64::NEG_INFINITY
        } else {
            r
        }
    }

    /// Joint update of `ψ` and all indicators. A rejected move keeps both.
    pub fn block_update_psi_zi(&mut self, sweep: u64) -> bool {
        let adapting = sweep <= self.config.warmup;
        let mut rng = self.key.stream(sweep, Stream::PsiBlock);
        let adapter = &self.state.adapters.psi;
        let eps = if adapting { adapter.adapting_step_size() } else { adapter.step_size() };
        let psi_new = propose_psi(&mut rng, self.state.params.psi, eps);
        let u: f64 = rng.random();
        let log_ratio = self.block_log_ratio(psi_new);
        let alpha = if log_ratio >= 0.0 { 1.0 } else { log_ratio.exp() };
        let accepted = u < alpha;
        if accepted {
            self.state.params.psi = psi_new;
            self.redraw_indolence();
        }
        if adapting {
            adapt_step_size(&mut self.state.adapters.psi, alpha);
        } else {
            self.state.acceptance.psi_block.record(accepted);
        }
        accepted
    }

    /// Draw every indicator from its full conditional at the current `ψ`.
    fn redraw_indolence(&mut self) {
        let params = self.state.params;
        for ((rec, z), c) in self.records.iter().zip(self.state.latents.iter_mut()).zip(&self.cache) {
            let q = indolence_conditional(rec, z.onset, params.psi, &params.prog);
            z.indolent = c.u_indolence < q;
        }
    }

    /// One full sweep.
    pub fn sweep(&mut self) -> Result<()> {
        let m = self.state.iteration + 1;
        let frozen = self.config.frozen;
        let stats = self.sufficient_stats();
        if !frozen.beta {
            let mut rng = self.key.stream(m, Stream::Beta);
            self.state.params.beta = gibbs_beta(&mut rng, stats.screens, &self.model.prior.beta);
        }
        if !frozen.onset_rate {
            self.mh_update_rate(RateParam::Onset, &stats, m)?;
        }
        if !frozen.prog_rate {
            self.mh_update_rate(RateParam::Prog, &stats, m)?;
        }
        self.update_latents(m)?;
        if frozen.psi {
            self.redraw_indolence();
        } else {
            self.block_update_psi_zi(m);
        }
        self.state.iteration = m;
        Ok(())
    }

    fn non_finite(&self, sweep: u64, what: String) -> Error {
        let dump = serde_json::to_string(&self.state.params).unwrap_or_default();
        Error::NonFiniteTarget {
            iteration: sweep,
            detail: format!("{what}; parameters {dump}"),
        }
    }

    pub fn current_draw(&self) -> Draw {
        let p = &self.state.params;
        Draw {
            iteration: self.state.iteration,
            onset_rate: p.onset.rate(),
            prog_rate: p.prog.rate(),
            psi: p.psi,
            beta: p.beta,
        }
    }

    pub fn step_sizes(&self) -> StepSizes {
        let a = &self.state.adapters;
        StepSizes {
            onset_rate: a.onset_rate.step_size(),
            prog_rate: a.prog_rate.step_size(),
            psi: a.psi.step_size(),
        }
    }
}

fn update_individual(
    rec: &IndividualRecord,
    z: &mut LatentState,
    cache: &mut LatentCache,
    scratch: &mut ZhpProposal,
    params: &Params,
    model: &ModelSpec,
    rng: &mut StreamRng,
) -> Result<(Option<f64>, bool)> {
    scratch.rebuild(rec, params, model.t0)?;
    let proposed = scratch.sample(rng, &params.onset);
    let u: f64 = rng.random();
    cache.u_indolence = rng.random();
    let log_ratio = clinical_log_weight(rec, proposed, z.indolent, &params.prog)
        - clinical_log_weight(rec, z.onset, z.indolent, &params.prog);
    let accepted = log_ratio >= 0.0 || u.ln() < log_ratio;
    if accepted {
        z.onset = proposed;
        cache.refresh(rec, z, model.onset_shape, model.prog_shape, model.t0);
    }
    cache.accepted = accepted;
    Ok((proposed, accepted))
}

fn initial_params(model: &ModelSpec, config: &SamplerConfig, key: ChainKey) -> Result<Params> {
    match config.init {
        InitStrategy::Fixed { onset_rate, prog_rate, psi, beta } => model.params(onset_rate, prog_rate, psi, beta),
        InitStrategy::Overdispersed => {
            let mut rng = key.stream(0, Stream::Init);
            let onset_rate = rng.random_range(2e-5..2e-4);
            let prog_rate = rng.random_range(1e-2..1e-1);
            let psi = rng.random_range(f64::EPSILON..1.0);
            let beta = rng.random_range(0.7..0.95);
            model.params(onset_rate, prog_rate, psi, beta)
        }
    }
}

/// Initial latents: onset from the proposal, then the indicator from its
/// full conditional. Draws come from sweep 0 of each individual's stream.
pub fn init_latents(key: ChainKey, records: &[IndividualRecord], params: &Params, t0: f64) -> Result<Vec<LatentState>> {
    const MAX_TRIES: usize = 100;
    let mut scratch = ZhpProposal::default();
    let mut out = Vec::with_capacity(records.len());
    for (i, rec) in records.iter().enumerate() {
        let mut rng = key.stream(0, Stream::Individual(i));
        scratch.rebuild(rec, params, t0)?;
        let mut found = None;
        for _ in 0..MAX_TRIES {
            let onset = scratch.sample(&mut rng, &params.onset);
            let q = indolence_conditional(rec, onset, params.psi, &params.prog);
            let indolent = rng.random::<f64>() < q;
            if clinical_log_weight(rec, onset, indolent, &params.prog).is_finite() {
                found = Some(LatentState { onset, indolent });
                break;
            }
        }
        match found {
            Some(z) => out.push(z),
            None => {
                return Err(Error::Init(format!(
                    "no admissible latent state for {} after {MAX_TRIES} proposals",
                    rec.id()
                )))
            }
        }
    }
    Ok(out)
}

/// Drives one chain through warm-up and sampling, collecting thinned draws.
pub struct ChainRunner<'a> {
    pub chain: Chain<'a>,
    index: usize,
    draws: Vec<Draw>,
    latents: Option<Vec<Vec<LatentState>>>,
}

impl<'a> ChainRunner<'a> {
    pub fn new(records: &'a [IndividualRecord], model: &'a ModelSpec, config: SamplerConfig, index: usize) -> Result<Self> {
        let chain = Chain::new(records, model, config, index)?;
        Ok(Self {
            chain,
            index,
            draws: Vec::new(),
            latents: config.store_latents.then(Vec::new),
        })
    }

    pub fn from_checkpoint(records: &'a [IndividualRecord], model: &'a ModelSpec, cp: Checkpoint) -> Result<Self> {
        cp.check_version()?;
        let chain = Chain::from_state(records, model, cp.config, cp.chain, cp.state)?;
        Ok(Self {
            chain,
            index: cp.chain,
            draws: cp.draws,
            latents: cp.latents,
        })
    }

    pub fn iteration(&self) -> u64 {
        self.chain.state.iteration
    }

    /// Run sweeps until `iteration` have completed (capped at the run length).
    pub fn run_until(&mut self, iteration: u64) -> Result<()> {
        let config = *self.chain.config();
        let thin = config.thin();
        let end = iteration.min(config.iterations);
        while self.chain.state.iteration < end {
            self.chain.sweep()?;
            let m = self.chain.state.iteration;
            if m > config.warmup && (m - config.warmup) % thin == 0 {
                self.draws.push(self.chain.current_draw());
                if let Some(l) = &mut self.latents {
                    l.push(self.chain.state.latents.clone());
                }
            }
        }
        Ok(())
    }

    pub fn checkpoint(&self) -> Checkpoint {
        Checkpoint {
            version: CHECKPOINT_VERSION,
            chain: self.index,
            config: *self.chain.config(),
            state: self.chain.state.clone(),
            draws: self.draws.clone(),
            latents: self.latents.clone(),
        }
    }

    pub fn finish(mut self) -> Result<ChainDraws> {
        let total = self.chain.config().iterations;
        self.run_until(total)?;
        Ok(ChainDraws {
            chain: self.index,
            step_sizes: self.chain.step_sizes(),
            acceptance: self.chain.state.acceptance,
            draws: self.draws,
            latents: self.latents,
        })
    }
}

/// Run one chain to completion.
pub fn run_chain(
    records: &[IndividualRecord],
    model: &ModelSpec,
    config: &SamplerConfig,
    chain: usize,
) -> Result<ChainDraws> {
    ChainRunner::new(records, model, *config, chain)?.finish()
}

/// Run `config.chains` independent chains in parallel.
pub fn run(records: &[IndividualRecord], model: &ModelSpec, config: &SamplerConfig) -> Result<DrawStore> {
    config.validate()?;
    let chains = (0..config.chains)
        .into_par_iter()
        .map(|c| run_chain(records, model, config, c))
        .collect::<Result<Vec<_>>>()?;
    Ok(DrawStore { model: *model, chains })
}
