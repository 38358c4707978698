//! Approximate leave-one-out predictive fit, paired model comparison and the
//! posterior predictive sojourn distribution.

use std::io::Write;

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, StudentsT};

use crate::diagnostics::draw_params;
use crate::error::{Error, Result};
use crate::likelihood::{individual_log_target, normalizer_from_free, EntryAges};
use crate::model::{LatentState, ModelSpec, Params};
use crate::proposal::ZhpProposal;
use crate::record::IndividualRecord;
use crate::rng::{mix, seeded};
use crate::sampler::{indolence_conditional, DrawStore};

pub const DEFAULT_J: usize = 256;

/// `ln((1/n) Σ exp(x_k))`.
pub fn log_mean_exp(x: &[f64]) -> f64 {
    let m = x.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if m.is_infinite() {
        return m;
    }
    m + (x.iter().map(|v| (v - m).exp()).sum::<f64>() / x.len() as f64).ln()
}

/// Importance-sampling estimate of one individual's marginal likelihood.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct InnerEstimate {
    pub log_f: f64,
    /// Largest normalized importance weight; NaN when every weight vanished.
    pub max_weight: f64,
}

impl InnerEstimate {
    pub fn degenerate(&self) -> bool {
        self.log_f == f64::NEG_INFINITY
    }
}

/// Estimate `ln f(y_i | θ, ψ, β)` from `j` latent draws: onset from the
/// sampler's mixture proposal, indolence from its full conditional given the
/// onset. The estimate includes `1/N_i` when `model.left_truncation` is set.
pub fn marginal_obs_loglik<R: Rng + ?Sized>(
    rec: &IndividualRecord,
    params: &Params,
    model: &ModelSpec,
    j: usize,
    rng: &mut R,
) -> Result<InnerEstimate> {
    let mut q = ZhpProposal::default();
    q.rebuild(rec, params, model.t0)?;
    let mut free_model = *model;
    free_model.left_truncation = false;
    let ln_n = if model.left_truncation {
        crate::likelihood::truncation_log_normalizer(rec.entry_age(), params, model.t0)?
    } else {
        0.0
    };
    inner(rec, params, &free_model, &q, ln_n, j, rng)
}

fn inner<R: Rng + ?Sized>(
    rec: &IndividualRecord,
    params: &Params,
    free_model: &ModelSpec,
    q: &ZhpProposal,
    ln_n: f64,
    j: usize,
    rng: &mut R,
) -> Result<InnerEstimate> {
    if j == 0 {
        return Err(Error::Config("inner sample count must be at least 1".into()));
    }
    let mut logw = Vec::with_capacity(j);
    for _ in 0..j {
        let onset = q.sample(rng, &params.onset);
        let p_ind = indolence_conditional(rec, onset, params.psi, &params.prog);
        let indolent = rng.random::<f64>() < p_ind;
        let z = LatentState { onset, indolent };
        let ln_qi = if indolent { p_ind.ln() } else { (1.0 - p_ind).ln() };
        let target = individual_log_target(rec, &z, params, free_model)?;
        logw.push(target - q.logdensity(onset, &params.onset) - ln_qi);
    }
    let log_f = log_mean_exp(&logw);
    let max_weight = if log_f == f64::NEG_INFINITY {
        f64::NAN
    } else {
        logw.iter().map(|w| (w - log_f).exp()).fold(0.0, f64::max) / j as f64
    };
    Ok(InnerEstimate {
        log_f: log_f - ln_n,
        max_weight,
    })
}

/// Leave-one-out predictive fit estimated from a single posterior sample.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PredictiveFit {
    pub pf_hat: f64,
    /// `ln f̂(y_i | Y_−i)` per individual.
    pub contributions: Vec<f64>,
    pub j: usize,
    /// Per individual, the largest normalized weight of the inner estimates.
    pub max_inner_weight: Vec<f64>,
    /// Per individual, the largest normalized weight `1/f̂` across draws.
    pub max_outer_weight: Vec<f64>,
    /// Individuals with a vanishing inner estimate for some draw.
    pub unstable: Vec<usize>,
}

impl PredictiveFit {
    pub fn write_csv<W: Write>(&self, records: &[IndividualRecord], w: W) -> Result<()> {
        let mut out = csv::Writer::from_writer(w);
        out.write_record(["id", "contribution", "max_inner_weight", "max_outer_weight"])?;
        for (i, rec) in records.iter().enumerate() {
            out.write_record([
                rec.id().to_string(),
                self.contributions[i].to_string(),
                self.max_inner_weight[i].to_string(),
                self.max_outer_weight[i].to_string(),
            ])?;
        }
        out.flush()?;
        Ok(())
    }
}

/// Inner estimates `ln f̂(y_i | θ^m)` for every draw `m` (rows) and
/// individual `i` (columns).
pub fn pointwise_loglik(
    store: &DrawStore,
    records: &[IndividualRecord],
    j: usize,
    seed: u64,
) -> Result<Vec<Vec<InnerEstimate>>> {
    let draws = store.pooled();
    if draws.is_empty() {
        return Err(Error::Domain("empty draw store".into()));
    }
    let model = store.model;
    let mut free_model = model;
    free_model.left_truncation = false;
    let entries = EntryAges::new(records);
    draws
        .par_iter()
        .enumerate()
        .map(|(m, d)| {
            let params = draw_params(&model, d)?;
            let ln_n: Vec<f64> = if model.left_truncation {
                entries
                    .progressive_free(&params, model.t0)?
                    .iter()
                    .map(|&a| normalizer_from_free(a, params.psi))
                    .collect()
            } else {
                vec![0.0; entries.ages().len()]
            };
            let mut q = ZhpProposal::default();
            records
                .iter()
                .enumerate()
                .map(|(i, rec)| {
                    q.rebuild(rec, &params, model.t0)?;
                    let mut rng = seeded(seed, mix(&[i as u64, m as u64]));
                    inner(rec, &params, &free_model, &q, ln_n[entries.index_of(i)], j, &mut rng)
                })
                .collect()
        })
        .collect()
}

/// Harmonic-mean leave-one-out estimate over all pooled draws.
pub fn aloocv(store: &DrawStore, records: &[IndividualRecord], j: usize, seed: u64) -> Result<PredictiveFit> {
    let table = pointwise_loglik(store, records, j, seed)?;
    let n = records.len();
    let mut contributions = Vec::with_capacity(n);
    let mut max_inner_weight = Vec::with_capacity(n);
    let mut max_outer_weight = Vec::with_capacity(n);
    let mut unstable = Vec::new();
    for i in 0..n {
        let neg: Vec<f64> = table.iter().map(|row| -row[i].log_f).collect();
        let lme = log_mean_exp(&neg);
        contributions.push(-lme);
        if table.iter().any(|row| row[i].degenerate()) {
            unstable.push(i);
            max_outer_weight.push(f64::NAN);
        } else {
            let top = neg.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            max_outer_weight.push((top - lme).exp() / neg.len() as f64);
        }
        max_inner_weight.push(table.iter().map(|row| row[i].max_weight).fold(f64::NAN, f64::max));
    }
    Ok(PredictiveFit {
        pf_hat: contributions.iter().sum(),
        contributions,
        j,
        max_inner_weight,
        max_outer_weight,
        unstable,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PairedTTest {
    /// `Σ_i Δ_i` with `Δ_i` the contribution of A minus that of B.
    pub delta: f64,
    pub t: f64,
    pub dof: f64,
    pub p_value: f64,
    /// The differences have zero variance.
    pub degenerate: bool,
}

/// Paired t-test on per-individual contributions.
pub fn paired_t_test(a: &PredictiveFit, b: &PredictiveFit) -> Result<PairedTTest> {
    paired_t_test_values(&a.contributions, &b.contributions)
}

pub fn paired_t_test_values(a: &[f64], b: &[f64]) -> Result<PairedTTest> {
    if a.len() != b.len() {
        return Err(Error::Domain(format!("paired test on {} vs {} individuals", a.len(), b.len())));
    }
    let n = a.len();
    if n < 2 {
        return Err(Error::Domain("paired test needs at least two individuals".into()));
    }
    let d: Vec<f64> = a.iter().zip(b).map(|(x, y)| x - y).collect();
    let sum: f64 = d.iter().sum();
    let mean = sum / n as f64;
    let var = d.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (n as f64 - 1.0);
    let dof = n as f64 - 1.0;
    if var == 0.0 {
        let (t, p_value) = if sum == 0.0 { (0.0, 1.0) } else { (sum.signum() * f64::INFINITY, 0.0) };
        return Ok(PairedTTest {
            delta: sum,
            t,
            dof,
            p_value,
            degenerate: sum != 0.0,
        });
    }
    let t = sum / (n as f64 * var).sqrt();
    let dist = StudentsT::new(0.0, 1.0, dof).expect("positive dof");
    Ok(PairedTTest {
        delta: sum,
        t,
        dof,
        p_value: 2.0 * dist.sf(t.abs()),
        degenerate: false,
    })
}

/// One row of a model-grid comparison.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridRow {
    pub onset_shape: f64,
    pub prog_shape: f64,
    pub pf_hat: f64,
    /// Paired test against the best model; `None` for the best model itself.
    pub vs_best: Option<PairedTTest>,
}

/// Compare fits over a grid of fixed shapes against the best one.
pub fn compare_grid(fits: &[(f64, f64, PredictiveFit)]) -> Result<Vec<GridRow>> {
    let best = fits
        .iter()
        .enumerate()
        .max_by(|a, b| a.1 .2.pf_hat.total_cmp(&b.1 .2.pf_hat))
        .map(|(k, _)| k)
        .ok_or_else(|| Error::Domain("no fits to compare".into()))?;
    fits.iter()
        .enumerate()
        .map(|(k, (ah, ap, fit))| {
            let vs_best = if k == best {
                None
            } else {
                Some(paired_t_test(fit, &fits[best].2)?)
            };
            Ok(GridRow {
                onset_shape: *ah,
                prog_shape: *ap,
                pf_hat: fit.pf_hat,
                vs_best,
            })
        })
        .collect()
}

pub fn write_grid_csv<W: Write>(rows: &[GridRow], w: W) -> Result<()> {
    let mut out = csv::Writer::from_writer(w);
    out.write_record(["alpha_h", "alpha_prog", "pf_hat", "delta_vs_best", "t", "p_value"])?;
    for r in rows {
        let (d, t, p) = r.vs_best.map_or((String::new(), String::new(), String::new()), |x| {
            (x.delta.to_string(), x.t.to_string(), x.p_value.to_string())
        });
        out.write_record([r.onset_shape.to_string(), r.prog_shape.to_string(), r.pf_hat.to_string(), d, t, p])?;
    }
    out.flush()?;
    Ok(())
}

/// Posterior predictive sojourn density on a grid with two tail masses.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SojournPredictive {
    pub grid: Vec<f64>,
    pub density: Vec<f64>,
    pub lower: f64,
    pub upper: f64,
    /// `P(σ < lower)`.
    pub p_below: f64,
    /// `P(σ > upper)`.
    pub p_above: f64,
    pub mean: f64,
}

/// Rao-Blackwell average of the progressive sojourn law over the draws.
pub fn predictive_sojourn(store: &DrawStore, grid: &[f64], lower: f64, upper: f64) -> Result<SojournPredictive> {
    let draws = store.pooled();
    if draws.is_empty() {
        return Err(Error::Domain("empty draw store".into()));
    }
    let laws: Vec<_> = draws
        .iter()
        .map(|d| draw_params(&store.model, d).map(|p| p.prog))
        .collect::<Result<_>>()?;
    let m = laws.len() as f64;
    let density = grid
        .iter()
        .map(|&s| laws.iter().map(|w| w.log_pdf(s).map_or(0.0, f64::exp)).sum::<f64>() / m)
        .collect();
    Ok(SojournPredictive {
        grid: grid.to_vec(),
        density,
        lower,
        upper,
        p_below: laws.iter().map(|w| w.cdf(lower)).sum::<f64>() / m,
        p_above: laws.iter().map(|w| w.survival(upper)).sum::<f64>() / m,
        mean: laws.iter().map(|w| w.mean()).sum::<f64>() / m,
    })
}

impl SojournPredictive {
    pub fn write_csv<W: Write>(&self, w: W) -> Result<()> {
        let mut out = csv::Writer::from_writer(w);
        out.write_record(["sojourn", "density"])?;
        for (s, d) in self.grid.iter().zip(&self.density) {
            out.write_record([s.to_string(), d.to_string()])?;
        }
        out.flush()?;
        Ok(())
    }
}
