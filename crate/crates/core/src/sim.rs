//! Forward simulation of natural histories, screening schedules and the
//! observation process, producing cohorts conditioned on entry.

use rand::Rng;
use rand_distr::{Distribution, Exp, Poisson};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::Params;
use crate::record::{classify, IndividualRecord, RawRecord};
use crate::rng::seeded;

/// True (unobserved) natural history of one individual.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct History {
    pub tau_hp: f64,
    pub indolent: bool,
    /// Infinite for indolent tumours.
    pub tau_pc: f64,
}

pub fn simulate_history<R: Rng + ?Sized>(rng: &mut R, truth: &Params, t0: f64) -> History {
    let tau_hp = t0 + truth.onset.sample(rng);
    let indolent = rng.random::<f64>() < truth.psi;
    let tau_pc = if indolent {
        f64::INFINITY
    } else {
        tau_hp + truth.prog.sample(rng)
    };
    History { tau_hp, indolent, tau_pc }
}

/// Screening schedule law: first-screen age on an integer grid with
/// geometric weights, integer gaps `base + Poisson`, exponential follow-up.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ScheduleSpec {
    pub first_age_min: u32,
    pub first_age_max: u32,
    /// Weights `∝ exp(−k / first_age_scale)`.
    pub first_age_scale: f64,
    pub gap_base: f64,
    pub gap_poisson_mean: f64,
    pub followup_mean: f64,
    pub max_age: f64,
}

impl Default for ScheduleSpec {
    fn default() -> Self {
        Self {
            first_age_min: 40,
            first_age_max: 80,
            first_age_scale: 5.0,
            gap_base: 1.0,
            gap_poisson_mean: 0.5,
            followup_mean: 5.0,
            max_age: 100.0,
        }
    }
}

impl ScheduleSpec {
    pub fn validate(&self) -> Result<()> {
        if self.first_age_min > self.first_age_max {
            return Err(Error::Config("first_age_min exceeds first_age_max".into()));
        }
        if !(self.first_age_scale > 0.0 && self.gap_base > 0.0 && self.gap_poisson_mean > 0.0 && self.followup_mean > 0.0) {
            return Err(Error::Config("schedule scales must be positive".into()));
        }
        if self.max_age <= self.first_age_max as f64 {
            return Err(Error::Config("max_age must exceed the last possible first-screen age".into()));
        }
        Ok(())
    }

    fn first_age_cdf(&self) -> Vec<f64> {
        let ws: Vec<f64> = (self.first_age_min..=self.first_age_max)
            .map(|k| (-((k - self.first_age_min) as f64) / self.first_age_scale).exp())
            .collect();
        let total: f64 = ws.iter().sum();
        let mut acc = 0.0;
        ws.iter()
            .map(|w| {
                acc += w / total;
                acc
            })
            .collect()
    }

    pub fn sample_first_age<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        let u: f64 = rng.random();
        let cdf = self.first_age_cdf();
        let k = cdf.partition_point(|&c| c <= u).min(cdf.len() - 1);
        (self.first_age_min + k as u32) as f64
    }

    pub fn sample_gap<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        let extra: f64 = Poisson::new(self.gap_poisson_mean).expect("positive mean").sample(rng);
        self.gap_base + extra
    }

    pub fn sample_followup<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        Exp::new(1.0 / self.followup_mean).expect("positive rate").sample(rng)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Schedule {
    pub screen_ages: Vec<f64>,
    pub censor_age: f64,
}

pub fn simulate_schedule<R: Rng + ?Sized>(rng: &mut R, spec: &ScheduleSpec) -> Schedule {
    let first = spec.sample_first_age(rng);
    let censor_age = spec.max_age.min(first + spec.sample_followup(rng));
    let mut screen_ages = vec![first];
    loop {
        let next = screen_ages.last().copied().expect("non-empty") + spec.sample_gap(rng);
        if next > censor_age {
            break;
        }
        screen_ages.push(next);
    }
    Schedule { screen_ages, censor_age }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Observation {
    Observed(RawRecord),
    /// Clinical cancer before the first screen.
    Excluded,
}

/// Apply the screening process to a history. Screens in the pre-clinical
/// state are positive with probability `beta`; the first positive screen,
/// a clinical diagnosis, or censoring ends follow-up.
pub fn simulate_observed<R: Rng + ?Sized>(
    rng: &mut R,
    id: &str,
    history: &History,
    schedule: &Schedule,
    beta: f64,
) -> Observation {
    let entry = schedule.screen_ages[0];
    if history.tau_pc < entry {
        return Observation::Excluded;
    }
    let mut screens = Vec::with_capacity(schedule.screen_ages.len());
    for &t in &schedule.screen_ages {
        if t >= history.tau_pc && !screens.is_empty() {
            break;
        }
        let positive = t >= history.tau_hp && rng.random::<f64>() < beta;
        screens.push((t, positive));
        if positive {
            return Observation::Observed(RawRecord {
                id: id.to_string(),
                screens,
                t_pc: t,
                censor_age: Some(t),
            });
        }
    }
    let (t_pc, censor_age) = if history.tau_pc < schedule.censor_age {
        (history.tau_pc, None)
    } else {
        (schedule.censor_age, Some(schedule.censor_age))
    };
    Observation::Observed(RawRecord {
        id: id.to_string(),
        screens,
        t_pc,
        censor_age,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SimConfig {
    pub truth: Params,
    pub t0: f64,
    pub n: usize,
    pub schedule: ScheduleSpec,
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TruthRow {
    pub id: String,
    pub history: History,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SimulatedCohort {
    pub records: Vec<IndividualRecord>,
    pub truth: Vec<TruthRow>,
    /// Simulated individuals discarded for clinical cancer before entry.
    pub excluded: u64,
}

/// Simulate until `n` individuals enter the study. Candidate `j` uses its
/// own random stream, so the output is a pure function of the config.
pub fn simulate_cohort(config: &SimConfig) -> Result<SimulatedCohort> {
    if config.n == 0 {
        return Err(Error::Config("cohort size must be at least 1".into()));
    }
    config.schedule.validate()?;
    if (config.schedule.first_age_min as f64) <= config.t0 {
        return Err(Error::Config("first screens must come after t0".into()));
    }
    let mut records = Vec::with_capacity(config.n);
    let mut truth = Vec::with_capacity(config.n);
    let mut excluded = 0u64;
    let mut candidate = 0u64;
    while records.len() < config.n {
        let mut rng = seeded(config.seed, candidate);
        candidate += 1;
        let history = simulate_history(&mut rng, &config.truth, config.t0);
        let schedule = simulate_schedule(&mut rng, &config.schedule);
        let id = (records.len() + 1).to_string();
        match simulate_observed(&mut rng, &id, &history, &schedule, config.truth.beta) {
            Observation::Excluded => excluded += 1,
            Observation::Observed(raw) => {
                records.push(classify(&raw)?);
                truth.push(TruthRow { id, history });
            }
        }
    }
    Ok(SimulatedCohort { records, truth, excluded })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::likelihood::progressive_clinical_free;
    use crate::model::reference_truth;
    use crate::record::Group;

    #[test]
    fn indolent_everyone_never_surfaces() {
        let mut p = reference_truth();
        p.psi = 1.0;
        let mut rng = seeded(1, 0);
        for _ in 0..1000 {
            assert!(simulate_history(&mut rng, &p, 30.0).tau_pc.is_infinite());
        }
    }

    #[test]
    fn first_screen_mode_is_forty() {
        let spec = ScheduleSpec::default();
        let mut rng = seeded(2, 0);
        let mut counts = [0u32; 41];
        for _ in 0..20_000 {
            counts[(spec.sample_first_age(&mut rng) - 40.0) as usize] += 1;
        }
        let mode = counts.iter().enumerate().max_by_key(|c| c.1).unwrap().0;
        assert_eq!(mode, 0);
        // weight ratio of consecutive ages is e^{-1/5}
        let ratio = counts[1] as f64 / counts[0] as f64;
        assert!((ratio - (-0.2f64).exp()).abs() < 0.04);
    }

    #[test]
    fn perfect_sensitivity_never_misses() {
        let mut p = reference_truth();
        p.beta = 1.0;
        p.onset = crate::WeibullRS::new(1e-3, 2.0).unwrap();
        let cohort = simulate_cohort(&SimConfig { truth: p, t0: 30.0, n: 3000, schedule: ScheduleSpec::default(), seed: 4 }).unwrap();
        for (r, t) in cohort.records.iter().zip(&cohort.truth) {
            for (&a, &o) in r.screen_ages().iter().zip(r.screen_outcomes()) {
                assert_eq!(o, a >= t.history.tau_hp, "{}", r.id());
            }
        }
    }

    #[test]
    fn zero_sensitivity_detects_nothing() {
        let mut p = reference_truth();
        p.beta = 0.0;
        let cohort = simulate_cohort(&SimConfig { truth: p, t0: 30.0, n: 3000, schedule: ScheduleSpec::default(), seed: 5 }).unwrap();
        assert!(cohort.records.iter().all(|r| r.group() != Group::ScreenDetected));
    }

    #[test]
    fn records_are_consistent_with_their_histories() {
        let p = reference_truth();
        let cohort = simulate_cohort(&SimConfig { truth: p, t0: 30.0, n: 5000, schedule: ScheduleSpec::default(), seed: 6 }).unwrap();
        assert_eq!(cohort.records.len(), 5000);
        for (r, t) in cohort.records.iter().zip(&cohort.truth) {
            assert_eq!(r.id(), t.id);
            assert_eq!(classify(&r.to_raw()).unwrap(), *r);
            let h = t.history;
            assert!(h.tau_pc >= r.entry_age());
            match r.group() {
                Group::IntervalDetected => assert_eq!(r.t_pc(), h.tau_pc),
                Group::ScreenDetected => assert!(h.tau_hp <= r.t_pc() && r.t_pc() < h.tau_pc),
                Group::Censored => assert!(h.tau_pc >= r.censor_age()),
            }
        }
    }

    /// Exclusion frequency against the entry normaliser averaged over the
    /// entry-age law.
    #[test]
    fn exclusion_rate_matches_entry_normalizer() {
        let p = reference_truth();
        let n = 20_000;
        let cohort = simulate_cohort(&SimConfig { truth: p, t0: 30.0, n, schedule: ScheduleSpec::default(), seed: 7 }).unwrap();
        let spec = ScheduleSpec::default();
        let cdf = spec.first_age_cdf();
        let mut prev = 0.0;
        let mut expected_excl = 0.0;
        for (k, &c) in cdf.iter().enumerate() {
            let e = 40.0 + k as f64;
            let free = progressive_clinical_free(e, &p, 30.0).unwrap();
            let ln = p.psi + (1.0 - p.psi) * free;
            expected_excl += (c - prev) * (1.0 - ln);
            prev = c;
        }
        let total = n as f64 + cohort.excluded as f64;
        let rate = cohort.excluded as f64 / total;
        let se = (expected_excl * (1.0 - expected_excl) / total).sqrt();
        assert!((rate - expected_excl).abs() < 3.0 * se, "{rate} vs {expected_excl} ± {se}");
    }

    #[test]
    fn observed_sensitivity_matches_beta() {
        let p = reference_truth();
        let cohort = simulate_cohort(&SimConfig { truth: p, t0: 30.0, n: 20_000, schedule: ScheduleSpec::default(), seed: 8 }).unwrap();
        let (mut pos, mut total) = (0u64, 0u64);
        for (r, t) in cohort.records.iter().zip(&cohort.truth) {
            for (&a, &o) in r.screen_ages().iter().zip(r.screen_outcomes()) {
                if a >= t.history.tau_hp {
                    total += 1;
                    pos += o as u64;
                }
            }
        }
        let rate = pos as f64 / total as f64;
        let se = (0.85 * 0.15 / total as f64).sqrt();
        assert!((rate - 0.85).abs() < 3.0 * se, "{rate} over {total}");
    }

    /// Straight-line second implementation of the generative process: walk
    /// the screen ages and compare group frequencies.
    #[test]
    fn group_frequencies_match_straight_line_simulator() {
        let p = reference_truth();
        let n = 40_000;
        let cohort = simulate_cohort(&SimConfig { truth: p, t0: 30.0, n, schedule: ScheduleSpec::default(), seed: 9 }).unwrap();
        let mut sim = [0f64; 3];
        for r in &cohort.records {
            sim[r.group() as usize] += 1.0;
        }

        let spec = ScheduleSpec::default();
        let mut rng = seeded(10, 0);
        let mut alt = [0f64; 3];
        let mut kept = 0;
        while kept < n {
            let onset = 30.0 + (-rng.random::<f64>().ln() / 6.5e-5).sqrt();
            let indolent = rng.random::<f64>() < 0.1;
            let clinical = if indolent { f64::INFINITY } else { onset + (-rng.random::<f64>().ln() / 3.14e-2).sqrt() };
            let sched = simulate_schedule(&mut rng, &spec);
            if clinical < sched.screen_ages[0] {
                continue;
            }
            kept += 1;
            let mut group = if clinical < sched.censor_age { 2 } else { 0 };
            for &t in &sched.screen_ages {
                if t >= clinical {
                    break;
                }
                if t >= onset && rng.random::<f64>() < 0.85 {
                    group = 1;
                    break;
                }
            }
            alt[group] += 1.0;
        }
        for g in 0..3 {
            let (a, b) = (sim[g] / n as f64, alt[g] / n as f64);
            let se = (a * (1.0 - a) / n as f64 + b * (1.0 - b) / n as f64).sqrt();
            assert!((a - b).abs() < 3.0 * se, "group {g}: {a} vs {b}");
        }
    }
}
