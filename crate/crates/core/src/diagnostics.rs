//! Convergence and efficiency diagnostics for multi-chain runs.

use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{ModelSpec, Params};
use crate::sampler::{AcceptanceStats, DrawStore, Parameter};

/// A diagnostic value with a flag for degenerate input (constant chains).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Estimate {
    pub value: f64,
    pub degenerate: bool,
}

fn mean(x: &[f64]) -> f64 {
    x.iter().sum::<f64>() / x.len() as f64
}

fn sample_var(x: &[f64]) -> f64 {
    let m = mean(x);
    x.iter().map(|v| (v - m) * (v - m)).sum::<f64>() / (x.len() as f64 - 1.0)
}

/// Gelman-Rubin potential scale reduction factor. With `split`, each chain is
/// halved first (the middle draw of an odd-length chain is dropped).
pub fn psrf(chains: &[Vec<f64>], split: bool) -> Result<Estimate> {
    if chains.len() < 2 && !split {
        return Err(Error::Domain("psrf needs at least two chains".into()));
    }
    let len = chains.first().map_or(0, Vec::len);
    if chains.iter().any(|c| c.len() != len) {
        return Err(Error::Domain("psrf needs chains of equal length".into()));
    }
    if len < 10 {
        return Err(Error::Domain(format!("psrf needs at least 10 draws per chain, got {len}")));
    }
    let halves: Vec<&[f64]>;
    let parts: Vec<&[f64]> = if split {
        let h = len / 2;
        halves = chains
            .iter()
            .flat_map(|c| [&c[..h], &c[len - h..]])
            .collect();
        halves
    } else {
        chains.iter().map(Vec::as_slice).collect()
    };
    let l = parts[0].len() as f64;
    let means: Vec<f64> = parts.iter().map(|c| mean(c)).collect();
    let w = mean(&parts.iter().map(|c| sample_var(c)).collect::<Vec<_>>());
    let b = l * sample_var(&means);
    if w == 0.0 {
        let value = if b == 0.0 { 1.0 } else { f64::INFINITY };
        return Ok(Estimate { value, degenerate: true });
    }
    let value = ((w * (1.0 - 1.0 / l) + b / l) / w).sqrt();
    Ok(Estimate { value, degenerate: false })
}

/// Effective sample size of one chain from Geyer's initial monotone sequence
/// estimator, capped at the chain length.
pub fn ess(draws: &[f64]) -> Result<Estimate> {
    let n = draws.len();
    if n < 10 {
        return Err(Error::Domain(format!("ess needs at least 10 draws, got {n}")));
    }
    let m = mean(draws);
    let centered: Vec<f64> = draws.iter().map(|v| v - m).collect();
    let acov = |k: usize| -> f64 {
        centered[..n - k]
            .iter()
            .zip(&centered[k..])
            .map(|(a, b)| a * b)
            .sum::<f64>()
            / n as f64
    };
    let c0 = acov(0);
    if c0 == 0.0 || !c0.is_finite() {
        return Ok(Estimate {
            value: f64::NAN,
            degenerate: true,
        });
    }
    let mut tau = -1.0;
    let mut prev_pair = f64::INFINITY;
    let mut k = 0;
    while k + 1 < n {
        let pair = (acov(k) + acov(k + 1)) / c0;
        if pair <= 0.0 {
            break;
        }
        let pair = pair.min(prev_pair);
        tau += 2.0 * pair;
        prev_pair = pair;
        k += 2;
    }
    let value = (n as f64 / tau).min(n as f64);
    Ok(Estimate { value, degenerate: false })
}

/// Effective sample size summed over chains.
pub fn ess_chains(chains: &[Vec<f64>]) -> Result<Estimate> {
    let mut total = 0.0;
    let mut degenerate = false;
    for c in chains {
        let e = ess(c)?;
        degenerate |= e.degenerate;
        if !e.degenerate {
            total += e.value;
        }
    }
    Ok(Estimate {
        value: if degenerate { f64::NAN } else { total },
        degenerate,
    })
}

/// Linear-interpolation quantile of sorted data.
pub fn quantile(sorted: &[f64], p: f64) -> f64 {
    let h = (sorted.len() - 1) as f64 * p;
    let lo = h.floor() as usize;
    let hi = h.ceil() as usize;
    sorted[lo] + (h - lo as f64) * (sorted[hi] - sorted[lo])
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParamSummary {
    pub name: String,
    pub mean: f64,
    pub median: f64,
    pub sd: f64,
    pub q025: f64,
    pub q975: f64,
    /// `None` for single-chain runs or chains too short.
    pub psrf: Option<Estimate>,
    pub ess: Option<Estimate>,
}

impl ParamSummary {
    pub fn covers(&self, x: f64) -> bool {
        self.q025 <= x && x <= self.q975
    }
}

/// Summary of one quantity from its per-chain traces.
pub fn summarize_traces(name: &str, traces: &[Vec<f64>]) -> Result<ParamSummary> {
    let mut pooled: Vec<f64> = traces.iter().flatten().copied().collect();
    if pooled.is_empty() {
        return Err(Error::Domain(format!("no draws to summarize for {name}")));
    }
    if pooled.iter().any(|v| !v.is_finite()) {
        return Err(Error::Domain(format!("non-finite draw of {name}")));
    }
    pooled.sort_by(f64::total_cmp);
    let sd = if pooled.len() > 1 { sample_var(&pooled).sqrt() } else { 0.0 };
    let equal = traces.iter().all(|c| c.len() == traces[0].len());
    let psrf = (traces.len() >= 2 && equal && traces[0].len() >= 10)
        .then(|| psrf(traces, false))
        .transpose()?;
    let ess = traces
        .iter()
        .all(|c| c.len() >= 10)
        .then(|| ess_chains(traces))
        .transpose()?;
    Ok(ParamSummary {
        name: name.to_string(),
        mean: mean(&pooled),
        median: quantile(&pooled, 0.5),
        sd,
        q025: quantile(&pooled, 0.025),
        q975: quantile(&pooled, 0.975),
        psrf,
        ess,
    })
}

/// A named posterior functional of the parameters.
pub struct Functional {
    pub name: String,
    pub eval: Box<dyn Fn(&Params) -> f64 + Send + Sync>,
}

impl Functional {
    pub fn new(name: impl Into<String>, eval: impl Fn(&Params) -> f64 + Send + Sync + 'static) -> Self {
        Self {
            name: name.into(),
            eval: Box::new(eval),
        }
    }

    /// Mean progressive sojourn time.
    pub fn mean_sojourn() -> Self {
        Self::new("mean_sojourn", |p| p.prog.mean())
    }

    /// Onset hazard at `age`.
    pub fn onset_hazard(age: f64, t0: f64) -> Self {
        Self::new(format!("onset_hazard_{age}"), move |p| p.onset.hazard(age - t0))
    }

    /// Probability of pre-clinical onset by `age`.
    pub fn onset_risk(age: f64, t0: f64) -> Self {
        Self::new(format!("onset_risk_{age}"), move |p| p.onset.cdf(age - t0))
    }
}

/// Per-chain traces of a functional.
pub fn functional_traces(store: &DrawStore, g: &Functional) -> Result<Vec<Vec<f64>>> {
    store
        .chains
        .iter()
        .map(|c| {
            c.draws
                .iter()
                .map(|d| {
                    let p = draw_params(&store.model, d)?;
                    Ok((g.eval)(&p))
                })
                .collect()
        })
        .collect()
}

pub(crate) fn draw_params(model: &ModelSpec, d: &crate::sampler::Draw) -> Result<Params> {
    model.params(d.onset_rate, d.prog_rate, d.psi, d.beta)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChainSummary {
    pub parameters: Vec<ParamSummary>,
    pub functionals: Vec<ParamSummary>,
    /// Post-warm-up acceptance counts, by chain.
    pub acceptance: Vec<AcceptanceStats>,
}

impl ChainSummary {
    pub fn get(&self, name: &str) -> Option<&ParamSummary> {
        self.parameters
            .iter()
            .chain(&self.functionals)
            .find(|s| s.name == name)
    }

    pub fn write_csv<W: Write>(&self, w: W) -> Result<()> {
        let mut out = csv::Writer::from_writer(w);
        out.write_record(["quantity", "mean", "median", "sd", "q025", "q975", "psrf", "ess"])?;
        let opt = |e: Option<Estimate>| e.map_or(String::new(), |e| e.value.to_string());
        for s in self.parameters.iter().chain(&self.functionals) {
            out.write_record([
                s.name.clone(),
                s.mean.to_string(),
                s.median.to_string(),
                s.sd.to_string(),
                s.q025.to_string(),
                s.q975.to_string(),
                opt(s.psrf),
                opt(s.ess),
            ])?;
        }
        out.flush()?;
        Ok(())
    }

    pub fn write_acceptance_csv<W: Write>(&self, w: W) -> Result<()> {
        let mut out = csv::Writer::from_writer(w);
        out.write_record(["chain", "update", "attempts", "accepts", "rate"])?;
        for (chain, a) in self.acceptance.iter().enumerate() {
            for (name, c) in [
                ("lambda_h", a.onset_rate),
                ("lambda_prog", a.prog_rate),
                ("psi_block", a.psi_block),
                ("onset_age", a.onset_age),
            ] {
                out.write_record([
                    chain.to_string(),
                    name.to_string(),
                    c.attempts.to_string(),
                    c.accepts.to_string(),
                    c.rate().to_string(),
                ])?;
            }
        }
        out.flush()?;
        Ok(())
    }
}

/// Summaries of the four parameters and of any functionals.
pub fn summarize(store: &DrawStore, functionals: &[Functional]) -> Result<ChainSummary> {
    if store.chains.iter().all(|c| c.draws.is_empty()) {
        return Err(Error::Domain("empty draw store".into()));
    }
    let parameters = Parameter::ALL
        .iter()
        .map(|&p| summarize_traces(p.name(), &store.traces(p)))
        .collect::<Result<_>>()?;
    let functionals = functionals
        .iter()
        .map(|g| summarize_traces(&g.name, &functional_traces(store, g)?))
        .collect::<Result<_>>()?;
    Ok(ChainSummary {
        parameters,
        functionals,
        acceptance: store.chains.iter().map(|c| c.acceptance).collect(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::reference_truth;
    use crate::rng::seeded;
    use crate::sampler::{ChainDraws, Draw, StepSizes};
    use rand::Rng;
    use rand_distr::StandardNormal;

    fn noise(seed: u64, n: usize) -> Vec<f64> {
        let mut rng = seeded(seed, 0);
        (0..n).map(|_| rng.sample(StandardNormal)).collect()
    }

    fn ar1(seed: u64, n: usize, phi: f64) -> Vec<f64> {
        let mut rng = seeded(seed, 1);
        let mut x = 0.0;
        (0..n)
            .map(|_| {
                x = phi * x + rng.sample::<f64, _>(StandardNormal);
                x
            })
            .collect()
    }

    #[test]
    fn psrf_near_one_for_iid_chains() {
        let chains: Vec<_> = (0..4).map(|s| noise(s, 5000)).collect();
        let r = psrf(&chains, false).unwrap();
        assert!((r.value - 1.0).abs() < 0.01, "{}", r.value);
        assert!((psrf(&chains, true).unwrap().value - 1.0).abs() < 0.01);
    }

    #[test]
    fn psrf_detects_disjoint_chains() {
        let a = noise(1, 1000);
        let b: Vec<f64> = noise(2, 1000).iter().map(|v| v + 10.0).collect();
        assert!(psrf(&[a, b], false).unwrap().value > 3.0);
    }

    #[test]
    fn psrf_reference_fixture() {
        // Hand computation: L = 10, chain means 4.5 and 5.5, within-chain
        // variances 55/6 each, B = 10 * 0.5 = 5.
        let a: Vec<f64> = (0..10).map(f64::from).collect();
        let b: Vec<f64> = (1..11).map(f64::from).collect();
        let w: f64 = 55.0 / 6.0;
        let expected = ((w * 0.9 + 0.5) / w).sqrt();
        assert!((psrf(&[a, b], false).unwrap().value - expected).abs() < 1e-12);
    }

    #[test]
    fn psrf_affine_invariant() {
        let chains: Vec<_> = (0..3).map(|s| ar1(s, 500, 0.5)).collect();
        let moved: Vec<Vec<f64>> = chains
            .iter()
            .map(|c| c.iter().map(|v| 3.0 * v - 7.0).collect())
            .collect();
        let a = psrf(&chains, false).unwrap().value;
        let b = psrf(&moved, false).unwrap().value;
        assert!((a - b).abs() < 1e-12);
    }

    #[test]
    fn psrf_flags_constant_chains() {
        let r = psrf(&[vec![1.0; 20], vec![1.0; 20]], false).unwrap();
        assert!(r.degenerate);
        assert!(psrf(&[vec![1.0; 20], vec![2.0; 20]], false).unwrap().value.is_infinite());
        assert!(psrf(&[vec![1.0; 5], vec![2.0; 5]], false).is_err());
        assert!(psrf(&[vec![1.0; 20], vec![2.0; 19]], false).is_err());
    }

    #[test]
    fn ess_of_iid_draws() {
        let x = noise(3, 20000);
        let e = ess(&x).unwrap().value;
        assert!((e / 20000.0 - 1.0).abs() < 0.1, "{e}");
    }

    #[test]
    fn ess_of_ar1_matches_analytic() {
        let phi = 0.9;
        let n = 100_000;
        let x = ar1(4, n, phi);
        let expected = n as f64 * (1.0 - phi) / (1.0 + phi);
        let e = ess(&x).unwrap().value;
        assert!((e / expected - 1.0).abs() < 0.15, "{e} vs {expected}");
    }

    #[test]
    fn ess_flags_constant_chain() {
        assert!(ess(&[2.0; 50]).unwrap().degenerate);
        assert!(ess(&[1.0; 5]).is_err());
    }

    #[test]
    fn ess_bounded_by_total_draws() {
        let alternating: Vec<f64> = (0..1000).map(|i| if i % 2 == 0 { 1.0 } else { -1.0 }).collect();
        assert!(ess(&alternating).unwrap().value <= 1000.0);
        let chains: Vec<_> = (0..3).map(|s| noise(10 + s, 400)).collect();
        assert!(ess_chains(&chains).unwrap().value <= 1200.0);
    }

    fn point_store(draws: usize) -> DrawStore {
        let t = reference_truth();
        let draw = |i| Draw {
            iteration: i,
            onset_rate: t.onset.rate(),
            prog_rate: t.prog.rate(),
            psi: t.psi,
            beta: t.beta,
        };
        DrawStore {
            model: ModelSpec::default(),
            chains: vec![ChainDraws {
                chain: 0,
                draws: (0..draws as u64).map(draw).collect(),
                latents: None,
                acceptance: AcceptanceStats::default(),
                step_sizes: StepSizes::default(),
            }],
        }
    }

    #[test]
    fn point_mass_store_summaries() {
        let s = summarize(
            &point_store(5),
            &[Functional::mean_sojourn(), Functional::onset_risk(80.0, 30.0)],
        )
        .unwrap();
        assert_eq!(s.get("beta").unwrap().mean, 0.85);
        assert_eq!(s.get("beta").unwrap().sd, 0.0);
        assert!((s.get("mean_sojourn").unwrap().mean - 5.0).abs() < 0.005);
        assert!((s.get("onset_risk_80").unwrap().mean - 0.15).abs() < 0.001);
    }

    #[test]
    fn functional_summary_composes() {
        let mut store = point_store(0);
        let mut rng = seeded(5, 0);
        store.chains[0].draws = (0..200)
            .map(|i| Draw {
                iteration: i,
                onset_rate: 6.5e-5,
                prog_rate: rng.random_range(0.02..0.05),
                psi: 0.1,
                beta: 0.85,
            })
            .collect();
        let g = Functional::mean_sojourn();
        let direct = summarize(&store, &[g]).unwrap().functionals[0].clone();
        let values: Vec<f64> = store.chains[0]
            .draws
            .iter()
            .map(|d| draw_params(&store.model, d).unwrap().prog.mean())
            .collect();
        let mut via = summarize_traces("mean_sojourn", &[values]).unwrap();
        via.name = direct.name.clone();
        assert_eq!(direct, via);
    }

    #[test]
    fn onset_hazard_formula() {
        let t = reference_truth();
        let g = Functional::onset_hazard(60.0, 30.0);
        assert!(((g.eval)(&t) - 6.5e-5 * 2.0 * 30.0).abs() < 1e-15);
    }

    #[test]
    fn quantiles_interpolate() {
        let x = [1.0, 2.0, 3.0, 4.0, 5.0];
        assert_eq!(quantile(&x, 0.5), 3.0);
        assert_eq!(quantile(&x, 0.125), 1.5);
    }

    #[test]
    fn csv_output_has_one_row_per_quantity() {
        let s = summarize(&point_store(20), &[Functional::mean_sojourn()]).unwrap();
        let mut buf = Vec::new();
        s.write_csv(&mut buf).unwrap();
        assert_eq!(String::from_utf8(buf).unwrap().lines().count(), 6);
    }
}
