//! Independence proposal for the pre-clinical onset age.
//!
//! The follow-up window `(t0, c]` is cut at the screen ages. Within a piece,
//! the number of false-negative screens is constant, so the onset law times
//! `(1 − β)^{false negatives}` is a mixture of truncated onset laws. For
//! censored records a point mass at "no onset before `c`" is added. This is
//! the exact conditional of the onset given an indolent tumour; progressive
//! tumours only add the clinical factor to the acceptance ratio.

use rand::Rng;

use crate::error::{Error, Result};
use crate::model::{xlogy, Params};
use crate::record::{Group, IndividualRecord};
use crate::weibull::WeibullRS;

#[derive(Debug, Clone, Default)]
pub struct ZhpProposal {
    t0: f64,
    /// Piece `k` covers `(bounds[k], bounds[k + 1]]`.
    bounds: Vec<f64>,
    /// False-negative count attached to each piece.
    exponents: Vec<u32>,
    /// Normalised probabilities of the pieces.
    probs: Vec<f64>,
    /// Probability of "no onset"; zero unless censored.
    none_prob: f64,
    miss: f64,
    ln_norm: f64,
}

/// Build the proposal for `rec` under `params`.
pub fn build_zhp_proposal(rec: &IndividualRecord, params: &Params, t0: f64) -> Result<ZhpProposal> {
    let mut prop = ZhpProposal::default();
    prop.rebuild(rec, params, t0)?;
    Ok(prop)
}

impl ZhpProposal {
    /// Rebuild in place, reusing allocations.
    pub fn rebuild(&mut self, rec: &IndividualRecord, params: &Params, t0: f64) -> Result<()> {
        let onset = &params.onset;
        let ages = rec.screen_ages();
        let n = ages.len();
        let c = rec.censor_age();
        self.t0 = t0;
        self.miss = 1.0 - params.beta;
        self.bounds.clear();
        self.exponents.clear();
        self.probs.clear();

        self.bounds.push(t0);
        let n_pieces = match rec.group() {
            Group::ScreenDetected => {
                self.bounds.extend_from_slice(ages);
                n
            }
            Group::Censored | Group::IntervalDetected => {
                self.bounds.extend_from_slice(ages);
                self.bounds.push(rec.t_pc());
                n + 1
            }
        };
        let misses_total = match rec.group() {
            Group::ScreenDetected => n - 1,
            _ => n,
        };

        // unnormalised log-weights, stored in `probs` for now
        let mut h_lower = 0.0;
        let mut max_lw = f64::NEG_INFINITY;
        for k in 0..n_pieces {
            let e = (misses_total - k) as u32;
            let h_upper = onset.cum_hazard(self.bounds[k + 1] - t0);
            let dh = h_upper - h_lower;
            let lw = if dh > 0.0 {
                -h_lower + (-(-dh).exp_m1()).ln() + xlogy(e as f64, 1.0 - params.beta)
            } else {
                f64::NEG_INFINITY
            };
            self.exponents.push(e);
            self.probs.push(lw);
            max_lw = max_lw.max(lw);
            h_lower = h_upper.max(h_lower);
        }
        let none_lw = if rec.group() == Group::Censored {
            -onset.cum_hazard(c - t0)
        } else {
            f64::NEG_INFINITY
        };
        max_lw = max_lw.max(none_lw);
        if max_lw == f64::NEG_INFINITY {
            return Err(Error::Underflow(format!(
                "every onset proposal weight vanished for {}",
                rec.id()
            )));
        }
        let mut total = (none_lw - max_lw).exp();
        for w in &mut self.probs {
            *w = (*w - max_lw).exp();
            total += *w;
        }
        self.ln_norm = max_lw + total.ln();
        for w in &mut self.probs {
            *w /= total;
        }
        self.none_prob = (none_lw - max_lw).exp() / total;
        Ok(())
    }

    pub fn n_components(&self) -> usize {
        self.probs.len()
    }

    /// Probability of "no onset before censoring".
    pub fn none_probability(&self) -> f64 {
        self.none_prob
    }

    /// Probabilities of the interval components.
    pub fn probabilities(&self) -> &[f64] {
        &self.probs
    }

    /// Interval `(l, u]` of component `k`.
    pub fn interval(&self, k: usize) -> (f64, f64) {
        (self.bounds[k], self.bounds[k + 1])
    }

    /// Component whose interval contains `x`, if any.
    pub fn component_of(&self, x: f64) -> Option<usize> {
        let last = self.probs.len();
        if !(x > self.bounds[0] && x <= self.bounds[last]) {
            return None;
        }
        // first bound >= x closes the piece
        let j = self.bounds.partition_point(|&b| b < x);
        Some(j - 1)
    }

    /// Two-step draw: component, then a truncated onset within it.
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R, onset: &WeibullRS) -> Option<f64> {
        let mut u: f64 = rng.random::<f64>();
        if u < self.none_prob {
            return None;
        }
        u -= self.none_prob;
        let mut k = self.probs.len() - 1;
        for (j, &p) in self.probs.iter().enumerate() {
            if u < p {
                k = j;
                break;
            }
            u -= p;
        }
        // rounding can leave `u` past the end; fall back to the heaviest positive piece
        if self.probs[k] == 0.0 {
            k = self
                .probs
                .iter()
                .enumerate()
                .max_by(|a, b| a.1.total_cmp(b.1))
                .map(|(j, _)| j)
                .expect("non-empty");
        }
        let (l, r) = self.interval(k);
        let s = onset.sample_truncated_unchecked(rng, l - self.t0, r - self.t0);
        let x = self.t0 + s;
        Some(if x <= l {
            l.next_up().min(r)
        } else if x > r {
            r
        } else {
            x
        })
    }

    /// Log-density with respect to Lebesgue measure plus a unit atom at `None`.
    /// `−∞` outside the support.
    pub fn logdensity(&self, z: Option<f64>, onset: &WeibullRS) -> f64 {
        match z {
            None => self.none_prob.ln(),
            Some(x) => match self.component_of(x) {
                Some(k) if self.probs[k] > 0.0 => {
                    xlogy(self.exponents[k] as f64, self.miss) + onset.ln_pdf(x - self.t0)
                        - self.ln_norm
                }
                _ => f64::NEG_INFINITY,
            },
        }
    }

    /// Log normalising constant of the unnormalised mixture.
    pub fn ln_normalizer(&self) -> f64 {
        self.ln_norm
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::reference_truth;
    use crate::quadrature::{integrate, Tolerance};
    use crate::record::{classify, RawRecord};
    use crate::rng::seeded;

    fn rec(screens: &[(f64, bool)], t_pc: f64, censor: Option<f64>) -> IndividualRecord {
        classify(&RawRecord {
            id: "p".into(),
            screens: screens.to_vec(),
            t_pc,
            censor_age: censor,
        })
        .unwrap()
    }

    fn five_screens() -> IndividualRecord {
        rec(
            &[(50.0, false), (51.0, false), (53.0, false), (54.5, false), (56.0, false)],
            58.0,
            Some(58.0),
        )
    }

    #[test]
    fn single_screen_censored_splits_prior_mass() {
        let p = reference_truth();
        let r = rec(&[(60.0, false)], 60.0, Some(60.0));
        let q = build_zhp_proposal(&r, &p, 30.0).unwrap();
        // piece (30, 60] carries one false negative, the (60, 60] piece is empty
        let s = p.onset.survival(30.0);
        let f = (1.0 - s) * 0.15;
        assert!((q.none_probability() - s / (s + f)).abs() < 1e-14);
        assert_eq!(q.probabilities()[1], 0.0);
    }

    #[test]
    fn no_false_negative_window_matches_prior_split() {
        // censored after the only screen: the (t1, c] piece has exponent 0
        let mut p = reference_truth();
        p.beta = 1.0;
        let r = rec(&[(40.0, false)], 60.0, Some(60.0));
        let q = build_zhp_proposal(&r, &p, 30.0).unwrap();
        assert_eq!(q.probabilities()[0], 0.0);
        let none = p.onset.survival(30.0);
        let last = p.onset.survival(10.0) - none;
        assert!((q.none_probability() - none / (none + last)).abs() < 1e-14);
        assert!((q.probabilities()[1] - last / (none + last)).abs() < 1e-14);
    }

    #[test]
    fn weights_match_quadrature_oracle() {
        let p = reference_truth();
        let r = five_screens();
        let q = build_zhp_proposal(&r, &p, 30.0).unwrap();
        let ages = [30.0, 50.0, 51.0, 53.0, 54.5, 56.0, 58.0];
        let mut raw = Vec::new();
        for k in 0..6 {
            let e = (5 - k) as i32;
            let v = integrate(
                |x| p.onset.ln_pdf(x - 30.0).exp() * 0.15f64.powi(e),
                ages[k],
                ages[k + 1],
                Tolerance { abs: 1e-16, rel: 1e-13, max_intervals: 500 },
            )
            .unwrap()
            .value;
            raw.push(v);
        }
        let none = p.onset.survival(28.0);
        let total: f64 = raw.iter().sum::<f64>() + none;
        for k in 0..6 {
            assert!((q.probabilities()[k] - raw[k] / total).abs() < 1e-10, "piece {k}");
        }
        assert!((q.none_probability() - none / total).abs() < 1e-10);
    }

    #[test]
    fn group_specific_component_counts() {
        let p = reference_truth();
        let screen = rec(&[(40.0, false), (45.0, true)], 45.0, Some(45.0));
        let q = build_zhp_proposal(&screen, &p, 30.0).unwrap();
        assert_eq!(q.n_components(), 2);
        assert_eq!(q.none_probability(), 0.0);
        assert_eq!(q.interval(1), (40.0, 45.0));

        let interval = rec(&[(40.0, false), (45.0, false)], 46.0, None);
        let q = build_zhp_proposal(&interval, &p, 30.0).unwrap();
        assert_eq!(q.n_components(), 3);
        assert_eq!(q.interval(2), (45.0, 46.0));
        let sum: f64 = q.probabilities().iter().sum();
        assert!((sum - 1.0).abs() < 1e-14);
    }

    #[test]
    fn density_integrates_to_one() {
        let p = reference_truth();
        let r = five_screens();
        let q = build_zhp_proposal(&r, &p, 30.0).unwrap();
        let mut total = q.logdensity(None, &p.onset).exp();
        for k in 0..q.n_components() {
            let (l, u) = q.interval(k);
            total += integrate(|x| q.logdensity(Some(x), &p.onset).exp(), l, u, Tolerance::default())
                .unwrap()
                .value;
        }
        assert!((total - 1.0).abs() < 1e-8);
    }

    #[test]
    fn density_jumps_by_miss_probability_at_screens() {
        let p = reference_truth();
        let r = five_screens();
        let q = build_zhp_proposal(&r, &p, 30.0).unwrap();
        for &t in &[51.0, 53.0, 54.5] {
            let below = q.logdensity(Some(t), &p.onset);
            let above = q.logdensity(Some(t.next_up()), &p.onset);
            assert!((below - above - 0.15f64.ln()).abs() < 1e-9);
        }
        assert_eq!(q.logdensity(Some(58.5), &p.onset), f64::NEG_INFINITY);
        assert_eq!(q.logdensity(Some(30.0), &p.onset), f64::NEG_INFINITY);
    }

    #[test]
    fn sure_none_component_always_returns_none() {
        let mut p = reference_truth();
        p.beta = 1.0;
        // every piece carries a false negative, so only "no onset" remains
        let r = rec(&[(40.0, false), (45.0, false)], 45.0, Some(45.0));
        let q = build_zhp_proposal(&r, &p, 30.0).unwrap();
        assert_eq!(q.none_probability(), 1.0);
        let mut rng = seeded(1, 0);
        for _ in 0..100 {
            assert_eq!(q.sample(&mut rng, &p.onset), None);
        }
    }

    #[test]
    fn single_component_is_truncated_onset() {
        let p = reference_truth();
        let r = rec(&[(50.0, true)], 50.0, Some(50.0));
        let q = build_zhp_proposal(&r, &p, 30.0).unwrap();
        assert_eq!(q.n_components(), 1);
        let mut rng = seeded(2, 0);
        let n = 40_000;
        // median of onset truncated to (30, 50]
        let f50 = p.onset.cdf(20.0);
        let median = 30.0 + p.onset.inv_cdf(0.5 * f50).unwrap();
        let below = (0..n)
            .filter(|_| q.sample(&mut rng, &p.onset).unwrap() <= median)
            .count() as f64;
        assert!((below / n as f64 - 0.5).abs() < 4.0 * (0.25 / n as f64).sqrt());
    }

    #[test]
    fn draws_match_mixed_density() {
        let p = reference_truth();
        let r = five_screens();
        let q = build_zhp_proposal(&r, &p, 30.0).unwrap();
        // bins: none, and each piece split in two halves
        let mut edges = Vec::new();
        for k in 0..q.n_components() {
            let (l, u) = q.interval(k);
            edges.push((l, 0.5 * (l + u)));
            edges.push((0.5 * (l + u), u));
        }
        let mut expected = vec![q.none_probability()];
        for &(l, u) in &edges {
            expected.push((p.onset.cdf(u - 30.0) - p.onset.cdf(l - 30.0)).max(0.0));
        }
        // rescale interval bins by their piece weight
        for k in 0..q.n_components() {
            let (l, u) = q.interval(k);
            let piece = p.onset.cdf(u - 30.0) - p.onset.cdf(l - 30.0);
            for h in 0..2 {
                expected[1 + 2 * k + h] *= q.probabilities()[k] / piece;
            }
        }
        let n = 100_000;
        let mut counts = vec![0u32; expected.len()];
        let mut rng = seeded(3, 0);
        for _ in 0..n {
            match q.sample(&mut rng, &p.onset) {
                None => counts[0] += 1,
                Some(x) => {
                    let b = edges.iter().position(|&(l, u)| x > l && x <= u).unwrap();
                    counts[1 + b] += 1;
                }
            }
        }
        let chi2: f64 = counts
            .iter()
            .zip(&expected)
            .map(|(&o, &e)| (o as f64 - n as f64 * e).powi(2) / (n as f64 * e))
            .sum();
        let dof = (expected.len() - 1) as f64;
        let p_value = statrs::distribution::ContinuousCDF::sf(
            &statrs::distribution::ChiSquared::new(dof).unwrap(),
            chi2,
        );
        assert!(p_value > 0.01, "chi2 {chi2} p {p_value}");
    }
}
