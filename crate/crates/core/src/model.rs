//! Parameters, latent state and priors of the three-state mixture model.

use serde::{Deserialize, Serialize};
use statrs::function::gamma::ln_gamma;

use crate::error::{Error, Result};
use crate::record::{Group, IndividualRecord};
use crate::weibull::WeibullRS;

/// Natural-history parameters: onset law, progressive sojourn law,
/// indolent fraction `psi` and screen sensitivity `beta`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Params {
    pub onset: WeibullRS,
    pub prog: WeibullRS,
    pub psi: f64,
    pub beta: f64,
}

impl Params {
    pub fn new(onset: WeibullRS, prog: WeibullRS, psi: f64, beta: f64) -> Result<Self> {
        check_probability("psi", psi)?;
        check_probability("beta", beta)?;
        Ok(Self {
            onset,
            prog,
            psi,
            beta,
        })
    }
}

fn check_probability(name: &str, p: f64) -> Result<()> {
    if (0.0..=1.0).contains(&p) {
        Ok(())
    } else {
        Err(Error::InvalidParameter(format!("{name} must lie in [0, 1], got {p}")))
    }
}

/// Per-individual latent variables: pre-clinical onset age (`None` when
/// onset falls after the censoring age) and the indolence indicator.
///
/// When `onset` is `None` the indicator is an auxiliary `Ber(psi)` draw that
/// integrates out of every likelihood.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct LatentState {
    pub onset: Option<f64>,
    pub indolent: bool,
}

impl LatentState {
    pub fn none() -> Self {
        Self::default()
    }

    pub fn at(onset: f64, indolent: bool) -> Self {
        Self {
            onset: Some(onset),
            indolent,
        }
    }

    /// Check the group constraints for `rec`.
    pub fn validate(&self, rec: &IndividualRecord, t0: f64) -> Result<()> {
        let fail = |reason: String| Error::Domain(format!("latent state for {}: {reason}", rec.id()));
        match self.onset {
            None if rec.group() != Group::Censored => {
                Err(fail("onset must be set for a diagnosed individual".into()))
            }
            Some(z) if !(z > t0 && z <= rec.censor_age()) => Err(fail(format!(
                "onset {z} outside ({t0}, {}]",
                rec.censor_age()
            ))),
            _ if self.indolent && rec.group() == Group::IntervalDetected => {
                Err(fail("an interval-detected cancer cannot be indolent".into()))
            }
            _ => Ok(()),
        }
    }
}

/// `Ga(shape, rate)` prior on a Weibull rate.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GammaPrior {
    pub shape: f64,
    pub rate: f64,
}

impl GammaPrior {
    pub fn ln_pdf(&self, x: f64) -> f64 {
        if x < 0.0 || !x.is_finite() {
            return f64::NEG_INFINITY;
        }
        self.shape * self.rate.ln() - ln_gamma(self.shape) + xlogy(self.shape - 1.0, x)
            - self.rate * x
    }
}

/// `Be(a, b)` prior on a probability.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BetaPrior {
    pub a: f64,
    pub b: f64,
}

impl BetaPrior {
    pub fn ln_pdf(&self, x: f64) -> f64 {
        if !(0.0..=1.0).contains(&x) {
            return f64::NEG_INFINITY;
        }
        let ln_beta = ln_gamma(self.a) + ln_gamma(self.b) - ln_gamma(self.a + self.b);
        xlogy(self.a - 1.0, x) + xlogy(self.b - 1.0, 1.0 - x) - ln_beta
    }
}

/// `k ln x` with the convention `0 ln 0 = 0`.
#[inline]
pub(crate) fn xlogy(k: f64, x: f64) -> f64 {
    if k == 0.0 {
        0.0
    } else {
        k * x.ln()
    }
}

/// Independent priors on the two rates, `psi` and `beta`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PriorSpec {
    pub onset_rate: GammaPrior,
    pub prog_rate: GammaPrior,
    pub psi: BetaPrior,
    pub beta: BetaPrior,
}

impl Default for PriorSpec {
    /// Weakly informative rates and `psi`, mammography-informed sensitivity.
    fn default() -> Self {
        Self {
            onset_rate: GammaPrior { shape: 1.0, rate: 0.01 },
            prog_rate: GammaPrior { shape: 1.0, rate: 0.01 },
            psi: BetaPrior { a: 1.0, b: 1.0 },
            beta: BetaPrior { a: 38.5, b: 5.8 },
        }
    }
}

impl PriorSpec {
    /// Default priors with a progression-rate prior that puts about 0.9 of the
    /// implied mean sojourn time in (1, 9) years, for the supported shapes.
    pub fn with_sojourn_prior(prog_shape: f64) -> Result<Self> {
        let prog_rate = match prog_shape {
            1.0 => GammaPrior { shape: 2.64, rate: 5.75 },
            1.5 => GammaPrior { shape: 1.36, rate: 4.28 },
            2.0 => GammaPrior { shape: 0.9, rate: 3.56 },
            s => {
                return Err(Error::Config(format!(
                    "no default sojourn prior for progression shape {s}; supply one explicitly"
                )))
            }
        };
        Ok(Self {
            prog_rate,
            ..Self::default()
        })
    }

    pub fn validate(&self) -> Result<()> {
        let all = [
            ("onset_rate.shape", self.onset_rate.shape),
            ("onset_rate.rate", self.onset_rate.rate),
            ("prog_rate.shape", self.prog_rate.shape),
            ("prog_rate.rate", self.prog_rate.rate),
            ("psi.a", self.psi.a),
            ("psi.b", self.psi.b),
            ("beta.a", self.beta.a),
            ("beta.b", self.beta.b),
        ];
        for (name, v) in all {
            if !(v.is_finite() && v > 0.0) {
                return Err(Error::Config(format!("prior hyperparameter {name} must be positive, got {v}")));
            }
        }
        Ok(())
    }
}

/// A fully specified model: susceptibility start age, the fixed Weibull
/// shapes, priors, and whether the likelihood conditions on entry.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ModelSpec {
    pub t0: f64,
    pub onset_shape: f64,
    pub prog_shape: f64,
    pub prior: PriorSpec,
    /// Divide each individual's likelihood by the probability of being free
    /// of clinical cancer at entry.
    pub left_truncation: bool,
}

impl Default for ModelSpec {
    fn default() -> Self {
        Self {
            t0: 30.0,
            onset_shape: 2.0,
            prog_shape: 2.0,
            prior: PriorSpec::default(),
            left_truncation: true,
        }
    }
}

impl ModelSpec {
    pub fn validate(&self) -> Result<()> {
        if !(self.t0.is_finite() && self.t0 >= 0.0) {
            return Err(Error::Config(format!("t0 must be finite and >= 0, got {}", self.t0)));
        }
        for (name, s) in [("onset_shape", self.onset_shape), ("prog_shape", self.prog_shape)] {
            if !(s.is_finite() && s > 0.0) {
                return Err(Error::Config(format!("{name} must be positive, got {s}")));
            }
        }
        self.prior.validate()
    }

    pub fn params(&self, onset_rate: f64, prog_rate: f64, psi: f64, beta: f64) -> Result<Params> {
        Params::new(
            WeibullRS::new(onset_rate, self.onset_shape)?,
            WeibullRS::new(prog_rate, self.prog_shape)?,
            psi,
            beta,
        )
    }

    /// Every record must enter strictly after `t0`.
    pub fn check_records(&self, records: &[IndividualRecord]) -> Result<()> {
        for rec in records {
            if rec.entry_age() <= self.t0 {
                return Err(Error::InvalidRecord {
                    id: rec.id().to_string(),
                    reason: format!("entry age {} is not after t0 = {}", rec.entry_age(), self.t0),
                });
            }
        }
        Ok(())
    }
}

/// Truth used throughout the synthetic recovery experiments: onset risk of
/// 15% by age 80 from `t0 = 30`, mean progressive sojourn of 5 years,
/// 10% indolent, 85% sensitivity.
pub fn reference_truth() -> Params {
    Params {
        onset: WeibullRS::new(6.5e-5, 2.0).expect("valid"),
        prog: WeibullRS::new(3.14e-2, 2.0).expect("valid"),
        psi: 0.1,
        beta: 0.85,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::record::{classify, RawRecord};
    use statrs::distribution::{Beta, ContinuousCDF};

    #[test]
    fn uniform_beta_and_gamma_boundary() {
        assert!(BetaPrior { a: 1.0, b: 1.0 }.ln_pdf(0.5).abs() < 1e-15);
        let g = GammaPrior { shape: 1.0, rate: 0.01 };
        assert!((g.ln_pdf(0.0) - 0.01f64.ln()).abs() < 1e-15);
        assert_eq!(g.ln_pdf(-1.0), f64::NEG_INFINITY);
        assert_eq!(BetaPrior { a: 2.0, b: 2.0 }.ln_pdf(1.5), f64::NEG_INFINITY);
    }

    #[test]
    fn sensitivity_prior_central_interval() {
        let prior = PriorSpec::default().beta;
        let d = Beta::new(prior.a, prior.b).unwrap();
        assert!((d.inverse_cdf(0.025) - 0.76).abs() < 0.005);
        assert!((d.inverse_cdf(0.975) - 0.95).abs() < 0.005);
    }

    #[test]
    fn beta_prior_matches_statrs() {
        use statrs::distribution::Continuous;
        let p = BetaPrior { a: 38.5, b: 5.8 };
        let d = Beta::new(38.5, 5.8).unwrap();
        for x in [0.3, 0.7, 0.85, 0.99] {
            assert!((p.ln_pdf(x) - d.ln_pdf(x)).abs() < 1e-10);
        }
    }

    #[test]
    fn sojourn_prior_table() {
        assert_eq!(PriorSpec::with_sojourn_prior(2.0).unwrap().prog_rate.shape, 0.9);
        assert_eq!(PriorSpec::with_sojourn_prior(1.5).unwrap().prog_rate.rate, 4.28);
        assert!(PriorSpec::with_sojourn_prior(3.0).is_err());
    }

    #[test]
    fn reference_truth_matches_stated_summaries() {
        let truth = reference_truth();
        assert!((truth.prog.mean() - 5.0).abs() < 0.01);
        assert!((truth.onset.cdf(50.0) - 0.15).abs() < 0.001);
    }

    #[test]
    fn latent_validation() {
        let rec = classify(&RawRecord {
            id: "3".into(),
            screens: vec![(40.0, false), (45.0, false)],
            t_pc: 46.0,
            censor_age: None,
        })
        .unwrap();
        assert!(LatentState::none().validate(&rec, 30.0).is_err());
        assert!(LatentState::at(44.0, true).validate(&rec, 30.0).is_err());
        assert!(LatentState::at(46.5, false).validate(&rec, 30.0).is_err());
        assert!(LatentState::at(44.0, false).validate(&rec, 30.0).is_ok());
    }
}
