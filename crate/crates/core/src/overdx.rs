//! Overdiagnosis under a screening program, as a posterior functional.
//!
//! A screen-detected cancer is overdiagnosed when the tumour is indolent or
//! when death from another cause comes strictly before clinical onset.

use std::io::Write;

use rand::Rng;
use rand_distr::Exp1;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::diagnostics::{draw_params, quantile};
use crate::error::{Error, Result};
use crate::model::Params;
use crate::rng::seeded;
use crate::sampler::DrawStore;
use crate::sim::History;

/// Other-cause mortality as a piecewise-constant hazard. Between tabulated
/// ages survival is log-linear; past the last age the last hazard continues.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LifeTable {
    ages: Vec<f64>,
    /// Cumulative hazard from the first age.
    cum_hazard: Vec<f64>,
    /// Hazard on `[ages[k], ages[k + 1])`; the last entry extends forever.
    hazard: Vec<f64>,
}

impl LifeTable {
    /// Survival probabilities at increasing ages; the first entry is the
    /// reference (at most 1).
    pub fn from_survival(ages: &[f64], survival: &[f64]) -> Result<Self> {
        check_ages(ages, survival.len())?;
        if survival.iter().any(|s| !(0.0..=1.0).contains(s)) {
            return Err(Error::Config("life-table survival must lie in [0, 1]".into()));
        }
        if survival.windows(2).any(|w| w[1] > w[0]) {
            return Err(Error::Config("life-table survival must be non-increasing".into()));
        }
        if survival[0] == 0.0 {
            return Err(Error::Config("life-table survival is zero at the first age".into()));
        }
        let cum_hazard: Vec<f64> = survival.iter().map(|s| (survival[0] / s).ln()).collect();
        let mut hazard: Vec<f64> = cum_hazard
            .windows(2)
            .zip(ages.windows(2))
            .map(|(h, a)| {
                let r = (h[1] - h[0]) / (a[1] - a[0]);
                if r.is_nan() {
                    f64::INFINITY
                } else {
                    r
                }
            })
            .collect();
        hazard.push(*hazard.last().unwrap_or(&0.0));
        Ok(Self {
            ages: ages.to_vec(),
            cum_hazard,
            hazard,
        })
    }

    /// Hazard `hazard[k]` applies on `[ages[k], ages[k + 1])`.
    pub fn from_hazard(ages: &[f64], hazard: &[f64]) -> Result<Self> {
        check_ages(ages, hazard.len())?;
        if hazard.iter().any(|h| !(h.is_finite() && *h >= 0.0)) {
            return Err(Error::Config("life-table hazards must be finite and non-negative".into()));
        }
        let mut cum_hazard = vec![0.0];
        for k in 1..ages.len() {
            cum_hazard.push(cum_hazard[k - 1] + hazard[k - 1] * (ages[k] - ages[k - 1]));
        }
        Ok(Self {
            ages: ages.to_vec(),
            cum_hazard,
            hazard: hazard.to_vec(),
        })
    }

    /// No other-cause mortality.
    pub fn immortal(from: f64) -> Self {
        Self {
            ages: vec![from],
            cum_hazard: vec![0.0],
            hazard: vec![0.0],
        }
    }

    pub fn first_age(&self) -> f64 {
        self.ages[0]
    }

    pub fn last_age(&self) -> f64 {
        *self.ages.last().expect("non-empty")
    }

    /// Cumulative hazard from the first age to `age`.
    pub fn cum_hazard(&self, age: f64) -> f64 {
        let k = self.ages.partition_point(|&a| a <= age).saturating_sub(1);
        let h = self.cum_hazard[k] + self.hazard[k] * (age - self.ages[k]);
        if h.is_nan() {
            f64::INFINITY
        } else {
            h
        }
    }

    pub fn survival(&self, age: f64) -> f64 {
        (-self.cum_hazard(age)).exp()
    }

    /// Age at death for someone alive at `age`, given a unit exponential.
    pub fn death_age(&self, age: f64, e: f64) -> f64 {
        let target = self.cum_hazard(age) + e;
        if e <= 0.0 {
            return age;
        }
        let mut k = self.ages.partition_point(|&a| a <= age).saturating_sub(1);
        while k + 1 < self.ages.len() && self.cum_hazard[k + 1] < target {
            k += 1;
        }
        let start = self.ages[k].max(age);
        start + (target - self.cum_hazard(start)) / self.hazard[k]
    }

    /// Error unless the table starts by `from` and reaches age 100.
    pub fn check_covers(&self, from: f64) -> Result<()> {
        if self.first_age() > from {
            return Err(Error::Config(format!(
                "life table starts at {} but the program starts at {from}",
                self.first_age()
            )));
        }
        if self.last_age() < 100.0 && self.hazard.len() > 1 {
            return Err(Error::Config(format!(
                "life table ends at {} before age 100",
                self.last_age()
            )));
        }
        Ok(())
    }
}

fn check_ages(ages: &[f64], n: usize) -> Result<()> {
    if ages.is_empty() || ages.len() != n {
        return Err(Error::Config("life table needs one value per age".into()));
    }
    if ages.iter().any(|a| !a.is_finite()) || ages.windows(2).any(|w| w[1] <= w[0]) {
        return Err(Error::Config("life-table ages must be finite and strictly increasing".into()));
    }
    Ok(())
}

/// Screening ages of a program; women enter alive and free of clinical
/// cancer at the first screen and attend every screen.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProgramSpec {
    pub screen_ages: Vec<f64>,
}

impl ProgramSpec {
    pub fn new(screen_ages: Vec<f64>) -> Result<Self> {
        if screen_ages.is_empty() {
            return Err(Error::Config("program needs at least one screen".into()));
        }
        if screen_ages.windows(2).any(|w| w[1] <= w[0]) || screen_ages.iter().any(|a| !a.is_finite()) {
            return Err(Error::Config("program screen ages must be strictly increasing".into()));
        }
        Ok(Self { screen_ages })
    }

    /// Every `step` years from `first` through `last`.
    pub fn regular(first: f64, last: f64, step: f64) -> Result<Self> {
        let n = ((last - first) / step + 1e-9).floor() as usize;
        Self::new((0..=n).map(|k| first + k as f64 * step).collect())
    }

    pub fn entry_age(&self) -> f64 {
        self.screen_ages[0]
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Outcome {
    /// Clinical cancer before entry.
    Ineligible,
    NotDetected,
    Detected,
    OverdiagnosedIndolent,
    /// Progressive, but other-cause death precedes clinical onset.
    OverdiagnosedMortality,
}

/// Outcome of one woman's program. `positive(k)` says whether the `k`th
/// screen would detect a pre-clinical tumour.
pub fn program_outcome(
    history: &History,
    death_age: f64,
    screens: &[f64],
    mut positive: impl FnMut(usize) -> bool,
) -> Outcome {
    if history.tau_pc < screens[0] {
        return Outcome::Ineligible;
    }
    for (k, &t) in screens.iter().enumerate() {
        if t >= history.tau_pc || t >= death_age {
            break;
        }
        if t >= history.tau_hp && positive(k) {
            return if history.indolent {
                Outcome::OverdiagnosedIndolent
            } else if death_age < history.tau_pc {
                Outcome::OverdiagnosedMortality
            } else {
                Outcome::Detected
            };
        }
    }
    Outcome::NotDetected
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct OverdiagnosisCounts {
    pub detected: u64,
    pub indolent: u64,
    pub mortality: u64,
}

impl OverdiagnosisCounts {
    pub fn add(&mut self, o: Outcome) {
        match o {
            Outcome::Detected => self.detected += 1,
            Outcome::OverdiagnosedIndolent => {
                self.detected += 1;
                self.indolent += 1;
            }
            Outcome::OverdiagnosedMortality => {
                self.detected += 1;
                self.mortality += 1;
            }
            Outcome::Ineligible | Outcome::NotDetected => {}
        }
    }

    pub fn indolent_share(&self) -> f64 {
        self.indolent as f64 / self.detected as f64
    }

    pub fn mortality_share(&self) -> f64 {
        self.mortality as f64 / self.detected as f64
    }

    /// Sum of the two shares; NaN without detections.
    pub fn total(&self) -> f64 {
        self.indolent_share() + self.mortality_share()
    }
}

/// Overdiagnosis for one posterior draw.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OverdiagnosisDraw {
    pub chain: usize,
    pub iteration: u64,
    pub counts: OverdiagnosisCounts,
    pub total: f64,
    pub indolent: f64,
    pub mortality: f64,
}

/// Simulate `sims` women through the program under `params`. Woman `k` uses
/// the same random numbers for every parameter value.
pub fn simulate_program(
    params: &Params,
    t0: f64,
    program: &ProgramSpec,
    life: &LifeTable,
    sims: usize,
    seed: u64,
) -> OverdiagnosisCounts {
    let entry = program.entry_age();
    let screens = &program.screen_ages;
    let mut counts = OverdiagnosisCounts::default();
    let mut u_screens = vec![0.0; screens.len()];
    for k in 0..sims {
        let mut rng = seeded(seed, k as u64);
        let e_onset: f64 = rng.sample(Exp1);
        let u_ind: f64 = rng.random();
        let e_sojourn: f64 = rng.sample(Exp1);
        let e_death: f64 = rng.sample(Exp1);
        for u in u_screens.iter_mut() {
            *u = rng.random();
        }
        let tau_hp = t0 + params.onset.quantile_from_hazard(e_onset);
        let indolent = u_ind < params.psi;
        let tau_pc = if indolent {
            f64::INFINITY
        } else {
            tau_hp + params.prog.quantile_from_hazard(e_sojourn)
        };
        let history = History { tau_hp, indolent, tau_pc };
        let death = life.death_age(entry, e_death);
        counts.add(program_outcome(&history, death, screens, |j| u_screens[j] < params.beta));
    }
    counts
}

/// Posterior sample of the overdiagnosis rate and its decomposition.
pub fn overdiagnosis_rate(
    store: &DrawStore,
    program: &ProgramSpec,
    life: &LifeTable,
    sims_per_draw: usize,
    seed: u64,
) -> Result<Vec<OverdiagnosisDraw>> {
    life.check_covers(program.entry_age())?;
    let draws: Vec<_> = store
        .chains
        .iter()
        .flat_map(|c| c.draws.iter().map(move |d| (c.chain, *d)))
        .collect();
    if draws.is_empty() {
        return Err(Error::Domain("empty draw store".into()));
    }
    draws
        .par_iter()
        .map(|(chain, d)| {
            let params = draw_params(&store.model, d)?;
            let counts = simulate_program(&params, store.model.t0, program, life, sims_per_draw, seed);
            Ok(OverdiagnosisDraw {
                chain: *chain,
                iteration: d.iteration,
                counts,
                total: counts.total(),
                indolent: counts.indolent_share(),
                mortality: counts.mortality_share(),
            })
        })
        .collect()
}

/// Posterior mean and central 95% interval.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Interval {
    pub mean: f64,
    pub q025: f64,
    pub q975: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OverdiagnosisSummary {
    pub total: Interval,
    pub indolent: Interval,
    pub mortality: Interval,
    /// Draws without any detected cancer, left out of the summary.
    pub undefined_draws: usize,
}

pub fn summarize_overdiagnosis(draws: &[OverdiagnosisDraw]) -> Result<OverdiagnosisSummary> {
    let ok: Vec<_> = draws.iter().filter(|d| d.counts.detected > 0).collect();
    if ok.is_empty() {
        return Err(Error::Domain("no draw produced a screen-detected cancer".into()));
    }
    let interval = |f: &dyn Fn(&OverdiagnosisDraw) -> f64| {
        let mut v: Vec<f64> = ok.iter().map(|d| f(d)).collect();
        v.sort_by(f64::total_cmp);
        Interval {
            mean: v.iter().sum::<f64>() / v.len() as f64,
            q025: quantile(&v, 0.025),
            q975: quantile(&v, 0.975),
        }
    };
    Ok(OverdiagnosisSummary {
        total: interval(&|d| d.total),
        indolent: interval(&|d| d.indolent),
        mortality: interval(&|d| d.mortality),
        undefined_draws: draws.len() - ok.len(),
    })
}

pub fn write_draws_csv<W: Write>(draws: &[OverdiagnosisDraw], w: W) -> Result<()> {
    let mut out = csv::Writer::from_writer(w);
    out.write_record(["chain", "iteration", "detected", "indolent_count", "mortality_count", "total", "indolent", "mortality"])?;
    for d in draws {
        out.write_record([
            d.chain.to_string(),
            d.iteration.to_string(),
            d.counts.detected.to_string(),
            d.counts.indolent.to_string(),
            d.counts.mortality.to_string(),
            d.total.to_string(),
            d.indolent.to_string(),
            d.mortality.to_string(),
        ])?;
    }
    out.flush()?;
    Ok(())
}

pub fn write_summary_csv<W: Write>(s: &OverdiagnosisSummary, w: W) -> Result<()> {
    let mut out = csv::Writer::from_writer(w);
    out.write_record(["component", "mean", "q025", "q975"])?;
    for (name, i) in [("total", s.total), ("indolent", s.indolent), ("mortality", s.mortality)] {
        out.write_record([name.to_string(), i.mean.to_string(), i.q025.to_string(), i.q975.to_string()])?;
    }
    out.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{reference_truth, ModelSpec};
    use crate::sampler::{AcceptanceStats, ChainDraws, Draw, StepSizes};

    fn history(tau_hp: f64, tau_pc: f64) -> History {
        History {
            tau_hp,
            indolent: tau_pc.is_infinite(),
            tau_pc,
        }
    }

    #[test]
    fn life_table_survival_and_hazard_agree() {
        let ages = [50.0, 60.0, 70.0, 80.0, 100.0];
        let hz = [0.01, 0.02, 0.05, 0.1, 0.1];
        let a = LifeTable::from_hazard(&ages, &hz).unwrap();
        let surv: Vec<f64> = ages.iter().map(|&x| a.survival(x)).collect();
        let b = LifeTable::from_survival(&ages, &surv).unwrap();
        for x in [50.0, 55.0, 63.0, 79.9, 90.0, 105.0] {
            assert!((a.cum_hazard(x) - b.cum_hazard(x)).abs() < 1e-12, "{x}");
        }
        assert!((a.cum_hazard(65.0) - (0.1 + 0.1)).abs() < 1e-12);
    }

    #[test]
    fn death_age_inverts_cumulative_hazard() {
        let t = LifeTable::from_hazard(&[50.0, 60.0, 100.0], &[0.0, 0.05, 0.2]).unwrap();
        for e in [0.01, 0.3, 0.5, 2.0, 9.0] {
            let d = t.death_age(55.0, e);
            assert!(d >= 60.0);
            assert!((t.cum_hazard(d) - t.cum_hazard(55.0) - e).abs() < 1e-10, "{e} {d}");
        }
        assert_eq!(LifeTable::immortal(40.0).death_age(50.0, 3.0), f64::INFINITY);
    }

    #[test]
    fn survival_table_validation() {
        assert!(LifeTable::from_survival(&[50.0, 60.0], &[1.0, 1.2]).is_err());
        assert!(LifeTable::from_survival(&[50.0, 60.0], &[0.9, 0.95]).is_err());
        assert!(LifeTable::from_survival(&[60.0, 50.0], &[1.0, 0.9]).is_err());
        let short = LifeTable::from_survival(&[50.0, 80.0], &[1.0, 0.5]).unwrap();
        assert!(short.check_covers(50.0).is_err());
        let late = LifeTable::from_survival(&[55.0, 100.0], &[1.0, 0.1]).unwrap();
        assert!(late.check_covers(50.0).is_err());
    }

    #[test]
    fn hand_enumerated_outcomes() {
        let screens = [50.0, 52.0, 54.0];
        let all = |_| true;
        assert_eq!(program_outcome(&history(45.0, 49.0), 90.0, &screens, all), Outcome::Ineligible);
        assert_eq!(program_outcome(&history(51.0, 60.0), 90.0, &screens, all), Outcome::Detected);
        assert_eq!(program_outcome(&history(51.0, 60.0), 55.0, &screens, all), Outcome::OverdiagnosedMortality);
        assert_eq!(program_outcome(&history(51.0, f64::INFINITY), 55.0, &screens, all), Outcome::OverdiagnosedIndolent);
        assert_eq!(program_outcome(&history(51.0, 51.5), 90.0, &screens, all), Outcome::NotDetected);
        assert_eq!(program_outcome(&history(51.0, 60.0), 51.5, &screens, all), Outcome::NotDetected);
        assert_eq!(program_outcome(&history(60.0, 70.0), 90.0, &screens, all), Outcome::NotDetected);
        // A tie between death and clinical onset is not overdiagnosis.
        assert_eq!(program_outcome(&history(51.0, 60.0), 60.0, &screens, all), Outcome::Detected);
        // A missed first chance.
        let second = |k| k == 2;
        assert_eq!(program_outcome(&history(51.0, 53.0), 90.0, &screens, second), Outcome::NotDetected);
    }

    fn store_with(psi: f64) -> DrawStore {
        DrawStore {
            model: ModelSpec::default(),
            chains: vec![ChainDraws {
                chain: 0,
                draws: vec![Draw {
                    iteration: 0,
                    onset_rate: 6.5e-5,
                    prog_rate: 3.14e-2,
                    psi,
                    beta: 0.85,
                }],
                latents: None,
                acceptance: AcceptanceStats::default(),
                step_sizes: StepSizes::default(),
            }],
        }
    }

    #[test]
    fn all_indolent_means_all_overdiagnosed() {
        let program = ProgramSpec::regular(50.0, 74.0, 2.0).unwrap();
        let life = LifeTable::from_hazard(&[40.0, 100.0], &[0.01, 0.05]).unwrap();
        let d = overdiagnosis_rate(&store_with(1.0), &program, &life, 20_000, 1).unwrap();
        assert_eq!(d[0].total, 1.0);
        assert_eq!(d[0].indolent, 1.0);
        assert_eq!(d[0].mortality, 0.0);
    }

    #[test]
    fn no_mortality_no_indolence_means_none() {
        let program = ProgramSpec::regular(50.0, 74.0, 2.0).unwrap();
        let d = overdiagnosis_rate(&store_with(0.0), &program, &LifeTable::immortal(0.0), 20_000, 1).unwrap();
        assert!(d[0].counts.detected > 0);
        assert_eq!(d[0].total, 0.0);
    }

    #[test]
    fn decomposition_is_exact() {
        let program = ProgramSpec::regular(50.0, 74.0, 2.0).unwrap();
        let life = LifeTable::from_hazard(&[40.0, 70.0, 100.0], &[0.005, 0.03, 0.15]).unwrap();
        for d in overdiagnosis_rate(&store_with(0.1), &program, &life, 5000, 2).unwrap() {
            assert_eq!(d.total, d.indolent + d.mortality);
        }
    }

    #[test]
    fn monotone_in_psi_and_mortality() {
        let program = ProgramSpec::regular(50.0, 74.0, 2.0).unwrap();
        let mut p = reference_truth();
        let low = LifeTable::from_hazard(&[40.0, 100.0], &[0.01, 0.05]).unwrap();
        let high = LifeTable::from_hazard(&[40.0, 100.0], &[0.02, 0.1]).unwrap();
        let mut last = -1.0;
        for psi in [0.0, 0.1, 0.3, 0.6] {
            p.psi = psi;
            let r = simulate_program(&p, 30.0, &program, &low, 5000, 3).total();
            assert!(r >= last);
            last = r;
        }
        p.psi = 0.1;
        let a = simulate_program(&p, 30.0, &program, &low, 5000, 3).total();
        let b = simulate_program(&p, 30.0, &program, &high, 5000, 3).total();
        assert!(b >= a);
    }

    #[test]
    fn summary_skips_draws_without_detections() {
        let mut d = overdiagnosis_rate(
            &store_with(0.5),
            &ProgramSpec::regular(50.0, 74.0, 2.0).unwrap(),
            &LifeTable::immortal(0.0),
            2000,
            4,
        )
        .unwrap();
        d.push(OverdiagnosisDraw {
            counts: OverdiagnosisCounts::default(),
            total: f64::NAN,
            indolent: f64::NAN,
            mortality: f64::NAN,
            ..d[0]
        });
        let s = summarize_overdiagnosis(&d).unwrap();
        assert_eq!(s.undefined_draws, 1);
        assert_eq!(s.total.mean, d[0].total);
    }
}
