//! Log-density building blocks of the joint posterior.
//!
//! Per individual the augmented target factorises as
//!
//! ```text
//! latent(z | θ, ψ) · obs(y | z, θ, β) / N(θ, ψ, entry age)
//! ```
//!
//! where `N` is the probability of being free of clinical cancer at entry.
//! Point masses (no onset before censoring, no clinical event) contribute 0 in
//! log space; configurations the generative model cannot produce give `−∞`.

use crate::error::{Error, Result};
use crate::model::{xlogy, LatentState, ModelSpec, Params, PriorSpec};
use crate::quadrature::{integrate, Tolerance};
use crate::record::{Group, IndividualRecord};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct ScreenCounts {
    /// True-positive screens (0 or 1).
    pub true_pos: u32,
    /// Negative screens at ages on or after the onset.
    pub false_neg: u32,
}

impl std::ops::AddAssign for ScreenCounts {
    fn add_assign(&mut self, rhs: Self) {
        self.true_pos += rhs.true_pos;
        self.false_neg += rhs.false_neg;
    }
}

/// Number of negative screens at ages `>= onset`.
#[inline]
pub(crate) fn false_negatives(rec: &IndividualRecord, onset: f64) -> u32 {
    let ages = rec.screen_ages();
    let first = ages.partition_point(|&t| t < onset);
    rec.screen_outcomes()[first..].iter().filter(|&&o| !o).count() as u32
}

pub fn screen_counts(rec: &IndividualRecord, z: &LatentState) -> ScreenCounts {
    match z.onset {
        None => ScreenCounts::default(),
        Some(onset) => ScreenCounts {
            true_pos: rec.n_positive(),
            false_neg: false_negatives(rec, onset),
        },
    }
}

#[inline]
fn ln_bernoulli(indolent: bool, psi: f64) -> f64 {
    if indolent {
        psi.ln()
    } else {
        (-psi).ln_1p()
    }
}

/// Log-density of the latent variables, without the entry normaliser.
pub fn latent_logdensity(
    rec: &IndividualRecord,
    z: &LatentState,
    params: &Params,
    t0: f64,
) -> Result<f64> {
    let c = rec.censor_age();
    let ln_indolence = ln_bernoulli(z.indolent, params.psi);
    match z.onset {
        None => Ok(params.onset.ln_sf(c - t0) + ln_indolence),
        Some(x) if x > t0 && x <= c => Ok(params.onset.ln_pdf(x - t0) + ln_indolence),
        Some(x) => Err(Error::Domain(format!(
            "onset {x} for {} outside ({t0}, {c}]",
            rec.id()
        ))),
    }
}

/// Log-density of the observations given the latent variables. Returns `−∞`
/// for configurations the model cannot produce.
pub fn obs_logdensity(rec: &IndividualRecord, z: &LatentState, params: &Params) -> f64 {
    let c = rec.censor_age();
    let Some(onset) = z.onset else {
        // no onset: only a fully negative, censored history is possible
        return if rec.group() == Group::Censored { 0.0 } else { f64::NEG_INFINITY };
    };
    if onset > c {
        return f64::NEG_INFINITY;
    }
    let counts = screen_counts(rec, z);
    let ln_screens = xlogy(counts.true_pos as f64, params.beta)
        + xlogy(counts.false_neg as f64, 1.0 - params.beta);
    let ln_clinical = match rec.group() {
        Group::Censored | Group::ScreenDetected => {
            if z.indolent {
                0.0
            } else {
                params.prog.ln_sf(c - onset)
            }
        }
        Group::IntervalDetected => {
            if z.indolent || onset >= rec.t_pc() {
                return f64::NEG_INFINITY;
            }
            params.prog.ln_pdf(rec.t_pc() - onset)
        }
    };
    ln_clinical + ln_screens
}

/// Probability, conditional on progressing, of being free of clinical cancer
/// at age `entry`: `S_H(d) + ∫_0^d f_H(s) S_prog(d − s) ds` with `d = entry − t0`.
pub fn progressive_clinical_free(entry: f64, params: &Params, t0: f64) -> Result<f64> {
    let d = entry - t0;
    if !(d > 0.0) {
        return Err(Error::Domain(format!("entry age {entry} must exceed t0 = {t0}")));
    }
    let onset = &params.onset;
    let prog = &params.prog;
    let integral = if onset.shape() >= 1.0 {
        integrate(
            |s| (onset.ln_pdf(s) + prog.ln_sf(d - s)).exp(),
            0.0,
            d,
            Tolerance::default(),
        )?
    } else {
        // probability-integral transform w = F_H(s) removes the s^(α−1) pole
        let upper = onset.cdf(d);
        integrate(
            |w| {
                let s = onset.quantile_from_hazard(-(-w).ln_1p()).min(d);
                prog.survival(d - s)
            },
            0.0,
            upper,
            Tolerance::default(),
        )?
    };
    Ok((onset.survival(d) + integral.value).min(1.0))
}

/// `ln N`, the log-probability of being free of clinical cancer at entry.
pub fn truncation_log_normalizer(entry: f64, params: &Params, t0: f64) -> Result<f64> {
    let free = progressive_clinical_free(entry, params, t0)?;
    Ok(normalizer_from_free(free, params.psi))
}

#[inline]
pub(crate) fn normalizer_from_free(progressive_free: f64, psi: f64) -> f64 {
    (psi + (1.0 - psi) * progressive_free).ln()
}

/// Full per-individual log target: latent + observations − `ln N`.
pub fn individual_log_target(
    rec: &IndividualRecord,
    z: &LatentState,
    params: &Params,
    model: &ModelSpec,
) -> Result<f64> {
    let latent = latent_logdensity(rec, z, params, model.t0)?;
    let obs = obs_logdensity(rec, z, params);
    let ln_n = if model.left_truncation {
        truncation_log_normalizer(rec.entry_age(), params, model.t0)?
    } else {
        0.0
    };
    Ok(latent + obs - ln_n)
}

/// Sum of independent prior log-densities; `−∞` outside the support.
pub fn log_prior(params: &Params, prior: &PriorSpec) -> f64 {
    prior.onset_rate.ln_pdf(params.onset.rate())
        + prior.prog_rate.ln_pdf(params.prog.rate())
        + prior.psi.ln_pdf(params.psi)
        + prior.beta.ln_pdf(params.beta)
}

/// Distinct entry ages of a cohort, with the index of each record's age.
#[derive(Debug, Clone)]
pub struct EntryAges {
    ages: Vec<f64>,
    counts: Vec<u32>,
    index: Vec<usize>,
}

impl EntryAges {
    pub fn new(records: &[IndividualRecord]) -> Self {
        let mut ages: Vec<f64> = records.iter().map(|r| r.entry_age()).collect();
        ages.sort_by(f64::total_cmp);
        ages.dedup();
        let mut counts = vec![0u32; ages.len()];
        let index = records
            .iter()
            .map(|r| {
                let k = ages
                    .binary_search_by(|a| a.total_cmp(&r.entry_age()))
                    .expect("age present");
                counts[k] += 1;
                k
            })
            .collect();
        Self { ages, counts, index }
    }

    pub fn ages(&self) -> &[f64] {
        &self.ages
    }

    pub fn counts(&self) -> &[u32] {
        &self.counts
    }

    /// Position of record `i`'s entry age in `ages()`.
    pub fn index_of(&self, i: usize) -> usize {
        self.index[i]
    }

    /// Progressive clinical-free probabilities at every distinct entry age.
    pub fn progressive_free(&self, params: &Params, t0: f64) -> Result<Vec<f64>> {
        self.ages
            .iter()
            .map(|&e| progressive_clinical_free(e, params, t0))
            .collect()
    }

    /// `Σ_i ln N_i` given per-age clinical-free probabilities.
    pub fn sum_log_normalizer(&self, progressive_free: &[f64], psi: f64) -> f64 {
        self.counts
            .iter()
            .zip(progressive_free)
            .map(|(&n, &a)| n as f64 * normalizer_from_free(a, psi))
            .sum()
    }
}
