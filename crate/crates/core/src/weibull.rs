//! Weibull law in rate–shape form: density `λ α x^(α−1) exp(−λ x^α)`.
//!
//! Onset and progressive sojourn times both use this law. Everything is
//! evaluated through the cumulative hazard `H(x) = λ x^α`, which keeps far
//! tails and narrow intervals accurate without going through `1 − F`.

use rand::Rng;
use rand_distr::Open01;
use serde::{Deserialize, Serialize};
use statrs::function::gamma::gamma;

use crate::error::{Error, Result};

/// Interval masses below this are treated as vanished.
pub const MIN_INTERVAL_MASS: f64 = 1e-300;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WeibullRS {
    rate: f64,
    shape: f64,
}

impl WeibullRS {
    pub fn new(rate: f64, shape: f64) -> Result<Self> {
        if !(rate.is_finite() && rate > 0.0) {
            return Err(Error::InvalidParameter(format!(
                "Weibull rate must be positive and finite, got {rate}"
            )));
        }
        if !(shape.is_finite() && shape > 0.0) {
            return Err(Error::InvalidParameter(format!(
                "Weibull shape must be positive and finite, got {shape}"
            )));
        }
        Ok(Self { rate, shape })
    }

    pub fn rate(&self) -> f64 {
        self.rate
    }

    pub fn shape(&self) -> f64 {
        self.shape
    }

    /// Same shape, different rate.
    pub(crate) fn with_rate(&self, rate: f64) -> Self {
        debug_assert!(rate > 0.0);
        Self {
            rate,
            shape: self.shape,
        }
    }

    #[inline]
    pub(crate) fn pow_shape(&self, x: f64) -> f64 {
        pow_shape(x, self.shape)
    }

    /// Cumulative hazard `λ x^α` for `x ≥ 0` (infinite at `x = ∞`).
    #[inline]
    pub fn cum_hazard(&self, x: f64) -> f64 {
        self.rate * self.pow_shape(x)
    }

    #[inline]
    pub(crate) fn ln_pdf(&self, x: f64) -> f64 {
        self.rate.ln() + self.shape.ln() + (self.shape - 1.0) * x.ln() - self.cum_hazard(x)
    }

    #[inline]
    pub(crate) fn ln_sf(&self, x: f64) -> f64 {
        -self.cum_hazard(x)
    }

    pub fn log_pdf(&self, x: f64) -> Result<f64> {
        if !(x > 0.0) || x.is_infinite() {
            return Err(Error::Domain(format!(
                "Weibull log-density needs 0 < x < inf, got {x}"
            )));
        }
        Ok(self.ln_pdf(x))
    }

    pub fn log_survival(&self, x: f64) -> Result<f64> {
        if !(x >= 0.0) {
            return Err(Error::Domain(format!(
                "Weibull survival needs x >= 0, got {x}"
            )));
        }
        Ok(self.ln_sf(x))
    }

    pub fn cdf(&self, x: f64) -> f64 {
        if x <= 0.0 {
            0.0
        } else {
            -(-self.cum_hazard(x)).exp_m1()
        }
    }

    pub fn survival(&self, x: f64) -> f64 {
        if x <= 0.0 {
            1.0
        } else {
            (-self.cum_hazard(x)).exp()
        }
    }

    pub fn hazard(&self, x: f64) -> f64 {
        self.rate * self.shape * x.powf(self.shape - 1.0)
    }

    /// `F^{-1}(u) = (−ln(1−u)/λ)^(1/α)` for `u ∈ [0, 1)`.
    pub fn inv_cdf(&self, u: f64) -> Result<f64> {
        if !(0.0..1.0).contains(&u) {
            return Err(Error::Domain(format!(
                "Weibull quantile needs u in [0, 1), got {u}"
            )));
        }
        Ok(self.quantile_from_hazard(-(-u).ln_1p()))
    }

    #[inline]
    pub(crate) fn quantile_from_hazard(&self, cum_hazard: f64) -> f64 {
        let base = cum_hazard / self.rate;
        if self.shape == 1.0 {
            base
        } else if self.shape == 2.0 {
            base.sqrt()
        } else {
            base.powf(1.0 / self.shape)
        }
    }

    /// `Γ(1 + 1/α) λ^(−1/α)`.
    pub fn mean(&self) -> f64 {
        gamma(1.0 + 1.0 / self.shape) * self.rate.powf(-1.0 / self.shape)
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        let u: f64 = rng.sample(Open01);
        self.quantile_from_hazard(-u.ln())
    }

    /// `ln(F(u) − F(l))` for `0 ≤ l ≤ u ≤ ∞`, `−∞` for an empty interval.
    #[inline]
    pub fn log_interval_mass(&self, lower: f64, upper: f64) -> f64 {
        if upper <= lower {
            return f64::NEG_INFINITY;
        }
        let h_lower = self.cum_hazard(lower);
        let dh = self.cum_hazard(upper) - h_lower;
        if dh <= 0.0 {
            return f64::NEG_INFINITY;
        }
        -h_lower + (-(-dh).exp_m1()).ln()
    }

    /// Draw from the law truncated to `(lower, upper]` by inverting the
    /// cumulative hazard. `upper` may be infinite.
    pub fn sample_truncated<R: Rng + ?Sized>(
        &self,
        rng: &mut R,
        lower: f64,
        upper: f64,
    ) -> Result<f64> {
        if !(lower >= 0.0 && upper > lower) || lower.is_infinite() {
            return Err(Error::Domain(format!(
                "truncation interval must satisfy 0 <= l < u, got ({lower}, {upper}]"
            )));
        }
        let log_mass = self.log_interval_mass(lower, upper);
        if !(log_mass >= MIN_INTERVAL_MASS.ln()) {
            return Err(Error::Underflow(format!(
                "Weibull(rate={}, shape={}) mass on ({lower}, {upper}] is below {MIN_INTERVAL_MASS:e}",
                self.rate, self.shape
            )));
        }
        Ok(self.sample_truncated_unchecked(rng, lower, upper))
    }

    /// Truncated draw for an interval known to carry mass.
    #[inline]
    pub(crate) fn sample_truncated_unchecked<R: Rng + ?Sized>(
        &self,
        rng: &mut R,
        lower: f64,
        upper: f64,
    ) -> f64 {
        let h_lower = self.cum_hazard(lower);
        let dh = self.cum_hazard(upper) - h_lower;
        // conditional mass of the interval given survival to `lower`
        let cond_mass = -(-dh).exp_m1();
        let u: f64 = rng.sample(Open01);
        let h = h_lower - (-u * cond_mass).ln_1p();
        let x = self.quantile_from_hazard(h);
        if x <= lower {
            lower.next_up().min(upper)
        } else if x > upper {
            upper
        } else {
            x
        }
    }
}

#[inline]
pub(crate) fn pow_shape(x: f64, shape: f64) -> f64 {
    if shape == 2.0 {
        x * x
    } else if shape == 1.0 {
        x
    } else {
        x.powf(shape)
    }
}
