//! Observed screening histories and their three-way classification.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Group {
    /// No positive screen and no clinical diagnosis before censoring.
    Censored,
    /// Last screen positive; follow-up ends at that screen.
    ScreenDetected,
    /// Clinical diagnosis with no prior positive screen.
    IntervalDetected,
}

impl Group {
    pub fn as_str(&self) -> &'static str {
        match self {
            Group::Censored => "censored",
            Group::ScreenDetected => "screen_detected",
            Group::IntervalDetected => "interval_detected",
        }
    }
}

/// Unvalidated input for one individual, as read from the two input tables.
#[derive(Debug, Clone, PartialEq)]
pub struct RawRecord {
    pub id: String,
    /// `(age, positive)` pairs in file order.
    pub screens: Vec<(f64, bool)>,
    pub t_pc: f64,
    /// `None` marks `t_pc` as a clinical diagnosis age.
    pub censor_age: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IndividualRecord {
    id: String,
    screen_ages: Vec<f64>,
    screen_outcomes: Vec<bool>,
    t_pc: f64,
    censor_age: f64,
    group: Group,
}

impl IndividualRecord {
    pub fn id(&self) -> &str {
        &self.id
    }

    pub fn screen_ages(&self) -> &[f64] {
        &self.screen_ages
    }

    pub fn screen_outcomes(&self) -> &[bool] {
        &self.screen_outcomes
    }

    pub fn n_screens(&self) -> usize {
        self.screen_ages.len()
    }

    /// Age at study entry, the first screen.
    pub fn entry_age(&self) -> f64 {
        self.screen_ages[0]
    }

    /// Observed clinical-onset age, right-censored at the end of follow-up.
    pub fn t_pc(&self) -> f64 {
        self.t_pc
    }

    /// End of the observation window; equals `t_pc` for every group.
    pub fn censor_age(&self) -> f64 {
        self.censor_age
    }

    pub fn group(&self) -> Group {
        self.group
    }

    pub fn n_positive(&self) -> u32 {
        self.screen_outcomes.iter().filter(|&&o| o).count() as u32
    }

    /// Same record under another identifier.
    pub fn with_id(&self, id: impl Into<String>) -> Self {
        Self {
            id: id.into(),
            ..self.clone()
        }
    }

    /// Back to the raw two-table form; `classify` inverts this.
    pub fn to_raw(&self) -> RawRecord {
        RawRecord {
            id: self.id.clone(),
            screens: self
                .screen_ages
                .iter()
                .copied()
                .zip(self.screen_outcomes.iter().copied())
                .collect(),
            t_pc: self.t_pc,
            censor_age: match self.group {
                Group::IntervalDetected => None,
                _ => Some(self.censor_age),
            },
        }
    }
}

/// Validate a raw record and assign its group.
pub fn classify(raw: &RawRecord) -> Result<IndividualRecord> {
    let fail = |reason: String| Error::InvalidRecord {
        id: raw.id.clone(),
        reason,
    };

    if raw.screens.is_empty() {
        return Err(fail("no screens, so the entry age is undefined".into()));
    }
    for &(age, _) in &raw.screens {
        if !age.is_finite() || age < 0.0 {
            return Err(fail(format!("screen age {age} is not a finite non-negative number")));
        }
    }
    for w in raw.screens.windows(2) {
        if w[1].0 <= w[0].0 {
            return Err(fail(format!(
                "screen ages must be strictly increasing ({} then {})",
                w[0].0, w[1].0
            )));
        }
    }
    if !raw.t_pc.is_finite() {
        return Err(fail(format!("t_pc {} is not finite", raw.t_pc)));
    }

    let n = raw.screens.len();
    let positives: Vec<usize> = raw
        .screens
        .iter()
        .enumerate()
        .filter_map(|(j, &(_, pos))| pos.then_some(j))
        .collect();
    let last_age = raw.screens[n - 1].0;

    let (group, censor_age) = match positives.as_slice() {
        [] => {
            if raw.t_pc < last_age {
                return Err(fail(format!(
                    "t_pc {} precedes the last screen at {last_age} without a positive screen",
                    raw.t_pc
                )));
            }
            match raw.censor_age {
                None => (Group::IntervalDetected, raw.t_pc),
                Some(c) if raw.t_pc < c => (Group::IntervalDetected, raw.t_pc),
                Some(c) if raw.t_pc == c => (Group::Censored, c),
                Some(c) => {
                    return Err(fail(format!(
                        "t_pc {} is after the censoring age {c}",
                        raw.t_pc
                    )))
                }
            }
        }
        [j] if *j == n - 1 => {
            if raw.t_pc != last_age {
                return Err(fail(format!(
                    "screen-detected at {last_age} but t_pc is {}",
                    raw.t_pc
                )));
            }
            match raw.censor_age {
                Some(c) if c == last_age => (Group::ScreenDetected, c),
                Some(c) => {
                    return Err(fail(format!(
                        "screen-detected at {last_age} but censored at {c}"
                    )))
                }
                None => {
                    return Err(fail(
                        "a positive screen cannot be followed by a clinical diagnosis".into(),
                    ))
                }
            }
        }
        [_] => return Err(fail("the positive screen must be the last screen".into())),
        _ => {
            return Err(fail(format!(
                "{} positive screens; at most one is allowed",
                positives.len()
            )))
        }
    };

    Ok(IndividualRecord {
        id: raw.id.clone(),
        screen_ages: raw.screens.iter().map(|s| s.0).collect(),
        screen_outcomes: raw.screens.iter().map(|s| s.1).collect(),
        t_pc: raw.t_pc,
        censor_age,
        group,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn raw(screens: &[(f64, bool)], t_pc: f64, censor: Option<f64>) -> RawRecord {
        RawRecord {
            id: "x".into(),
            screens: screens.to_vec(),
            t_pc,
            censor_age: censor,
        }
    }

    #[test]
    fn three_illustrative_individuals() {
        let censored = classify(&raw(&[(40.0, false), (45.0, false)], 46.5, Some(46.5))).unwrap();
        assert_eq!(censored.group(), Group::Censored);
        assert_eq!(censored.censor_age(), 46.5);
        assert_eq!(censored.entry_age(), 40.0);

        let screen = classify(&raw(&[(40.0, false), (45.0, true)], 45.0, Some(45.0))).unwrap();
        assert_eq!(screen.group(), Group::ScreenDetected);
        assert_eq!(screen.n_positive(), 1);

        let interval = classify(&raw(&[(40.0, false), (45.0, false)], 46.0, None)).unwrap();
        assert_eq!(interval.group(), Group::IntervalDetected);
        assert_eq!(interval.censor_age(), 46.0);

        let interval2 = classify(&raw(&[(40.0, false), (45.0, false)], 46.0, Some(50.0))).unwrap();
        assert_eq!(interval2.group(), Group::IntervalDetected);
        assert_eq!(interval2.censor_age(), 46.0);
    }

    #[test]
    fn validation_errors_name_the_record() {
        let cases = [
            raw(&[(40.0, true), (45.0, false)], 45.0, Some(45.0)),
            raw(&[(45.0, false), (40.0, false)], 46.0, Some(46.0)),
            raw(&[(40.0, false), (40.0, false)], 46.0, Some(46.0)),
            raw(&[(40.0, false), (45.0, false)], 44.0, Some(44.0)),
            raw(&[(40.0, false), (45.0, true)], 47.0, Some(47.0)),
            raw(&[(40.0, true), (45.0, true)], 45.0, Some(45.0)),
            raw(&[(40.0, false), (45.0, true)], 45.0, None),
            raw(&[(40.0, false)], 50.0, Some(49.0)),
            raw(&[], 50.0, Some(50.0)),
        ];
        for case in cases {
            match classify(&case) {
                Err(Error::InvalidRecord { id, .. }) => assert_eq!(id, "x"),
                other => panic!("expected a validation error, got {other:?}"),
            }
        }
    }

    #[test]
    fn screen_after_censoring_is_rejected() {
        assert!(classify(&raw(&[(40.0, false), (47.0, false)], 46.5, Some(46.5))).is_err());
    }

    proptest! {
        #[test]
        fn groups_are_exclusive_and_exhaustive(
            gaps in proptest::collection::vec(0.1f64..3.0, 1..6),
            tail in 0.0f64..4.0,
            kind in 0u8..3,
        ) {
            let mut age = 40.0;
            let mut screens = Vec::new();
            for g in &gaps {
                screens.push((age, false));
                age += g;
            }
            let last = screens.last().unwrap().0;
            let rec = match kind {
                0 => raw(&screens, last + tail, Some(last + tail)),
                1 => {
                    screens.last_mut().unwrap().1 = true;
                    raw(&screens, last, Some(last))
                }
                _ => raw(&screens, last + tail, None),
            };
            let classified = classify(&rec).unwrap();
            let expected = [Group::Censored, Group::ScreenDetected, Group::IntervalDetected][kind as usize];
            prop_assert_eq!(classified.group(), expected);
            prop_assert_eq!(classify(&classified.to_raw()).unwrap(), classified);
        }
    }
}
