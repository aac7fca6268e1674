//! Proper scoring rules for point and quantile forecasts.
//!
//! Raw squared prediction error (SPE) and weighted interval score (WIS) are
//! both negatively oriented: smaller is better. Everything past this module
//! works with [`Score`], which stores the negated value so that larger is
//! better.

use std::fmt;
use std::str::FromStr;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// The 23 quantile levels used by the US COVID-19 Forecast Hub.
pub const CANONICAL_LEVELS: [f64; 23] = [
    0.01, 0.025, 0.05, 0.1, 0.15, 0.2, 0.25, 0.3, 0.35, 0.4, 0.45, 0.5, 0.55, 0.6, 0.65, 0.7, 0.75,
    0.8, 0.85, 0.9, 0.95, 0.975, 0.99,
];

/// Strictly increasing probabilities in the open interval (0, 1).
///
/// Cheap to clone; forecasts for the same task share one allocation.
#[derive(Clone, Debug)]
pub struct QuantileLevels(Arc<[f64]>);

impl QuantileLevels {
    pub fn new(levels: Vec<f64>) -> Result<Self> {
        if levels.is_empty() {
            return Err(Error::validation("quantile level set is empty"));
        }
        for &level in &levels {
            if !(level > 0.0 && level < 1.0) {
                return Err(Error::validation(format!(
                    "quantile level {level} is outside (0, 1)"
                )));
            }
        }
        if let Some(w) = levels.windows(2).find(|w| w[0] >= w[1]) {
            return Err(Error::validation(format!(
                "quantile levels must be strictly increasing ({} is followed by {})",
                w[0], w[1]
            )));
        }
        Ok(QuantileLevels(levels.into()))
    }

    pub fn canonical() -> Self {
        QuantileLevels(CANONICAL_LEVELS.to_vec().into())
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    /// Index of `level`, compared bit-for-bit.
    pub fn position(&self, level: f64) -> Option<usize> {
        self.0.iter().position(|&l| l == level)
    }
}

impl PartialEq for QuantileLevels {
    fn eq(&self, other: &Self) -> bool {
        Arc::ptr_eq(&self.0, &other.0) || self.0[..] == other.0[..]
    }
}

/// A predictive distribution summarised by quantiles at fixed levels.
#[derive(Clone, Debug, PartialEq)]
pub struct QuantileForecast {
    levels: QuantileLevels,
    values: Vec<f64>,
}

impl QuantileForecast {
    /// Rejects length mismatches, non-finite values and quantiles that
    /// decrease with level. Non-monotone input is never reordered.
    pub fn new(levels: QuantileLevels, values: Vec<f64>) -> Result<Self> {
        if values.len() != levels.len() {
            return Err(Error::validation(format!(
                "{} quantile values for {} levels",
                values.len(),
                levels.len()
            )));
        }
        if let Some(v) = values.iter().find(|v| !v.is_finite()) {
            return Err(Error::validation(format!("non-finite quantile value {v}")));
        }
        if let Some(k) = (1..values.len()).find(|&k| values[k] < values[k - 1]) {
            return Err(Error::validation(format!(
                "quantiles are not monotone: level {} has value {} below level {} value {}",
                levels.as_slice()[k],
                values[k],
                levels.as_slice()[k - 1],
                values[k - 1]
            )));
        }
        Ok(QuantileForecast { levels, values })
    }

    /// Caller guarantees the invariants (used by the ensemble fast paths,
    /// where monotonicity follows from the inputs).
    pub(crate) fn from_parts_unchecked(levels: QuantileLevels, values: Vec<f64>) -> Self {
        debug_assert_eq!(levels.len(), values.len());
        QuantileForecast { levels, values }
    }

    pub fn levels(&self) -> &QuantileLevels {
        &self.levels
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn value_at(&self, level: f64) -> Option<f64> {
        self.levels.position(level).map(|k| self.values[k])
    }

    /// The predictive median, if 0.5 is one of the levels.
    pub fn median(&self) -> Option<f64> {
        self.value_at(0.5)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, PartialOrd, Serialize, Deserialize)]
pub struct PointForecast(f64);

impl PointForecast {
    pub fn new(value: f64) -> Result<Self> {
        finite(value, "point forecast").map(PointForecast)
    }

    pub fn value(self) -> f64 {
        self.0
    }
}

#[derive(Clone, Copy, Debug, PartialEq, PartialOrd, Serialize, Deserialize)]
pub struct Observation(f64);

impl Observation {
    pub fn new(value: f64) -> Result<Self> {
        finite(value, "observation").map(Observation)
    }

    pub fn value(self) -> f64 {
        self.0
    }
}

/// A positively oriented score: larger is better.
#[derive(Clone, Copy, Debug, PartialEq, PartialOrd, Serialize, Deserialize)]
pub struct Score(f64);

impl Score {
    pub fn new(value: f64) -> Result<Self> {
        finite(value, "score").map(Score)
    }

    pub fn value(self) -> f64 {
        self.0
    }
}

fn finite(value: f64, what: &str) -> Result<f64> {
    if value.is_finite() {
        Ok(value)
    } else {
        Err(Error::validation(format!(
            "{what} must be finite, got {value}"
        )))
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Metric {
    /// Squared prediction error. On quantile data the 0.5 quantile is scored.
    Spe,
    Wis,
}

impl Metric {
    pub fn name(self) -> &'static str {
        match self {
            Metric::Spe => "spe",
            Metric::Wis => "wis",
        }
    }

    /// Column name of the positively oriented score, e.g. `neg_wis`.
    pub fn score_name(self) -> &'static str {
        match self {
            Metric::Spe => "neg_spe",
            Metric::Wis => "neg_wis",
        }
    }
}

impl fmt::Display for Metric {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Metric {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "spe" => Ok(Metric::Spe),
            "wis" => Ok(Metric::Wis),
            other => Err(Error::validation(format!("unknown metric '{other}'"))),
        }
    }
}

/// Squared prediction error `(y - ŷ)²`.
pub fn spe(forecast: PointForecast, obs: Observation) -> f64 {
    let err = obs.0 - forecast.0;
    err * err
}

/// Weighted interval score in its quantile form:
/// `(1/K) Σ_k 2 (1[y ≤ q_k] - τ_k)(q_k - y)`.
pub fn wis(forecast: &QuantileForecast, obs: Observation) -> f64 {
    wis_raw(forecast.levels.as_slice(), &forecast.values, obs.0)
}

/// The indicator is 1 at `y == q_k`.
#[inline]
pub(crate) fn wis_raw(levels: &[f64], values: &[f64], y: f64) -> f64 {
    let mut total = 0.0;
    for (&tau, &q) in levels.iter().zip(values) {
        let indicator = if y <= q { 1.0 } else { 0.0 };
        total += 2.0 * (indicator - tau) * (q - y);
    }
    total / levels.len() as f64
}

/// Borrowed view of either forecast kind, for metric dispatch.
#[derive(Clone, Copy, Debug)]
pub enum ForecastRef<'a> {
    Point(PointForecast),
    Quantile(&'a QuantileForecast),
}

/// `-SPE` or `-WIS`. SPE on a quantile forecast scores its median.
pub fn positive_score(
    metric: Metric,
    forecast: ForecastRef<'_>,
    obs: Observation,
) -> Result<Score> {
    let raw = match (metric, forecast) {
        (Metric::Spe, ForecastRef::Point(p)) => spe(p, obs),
        (Metric::Spe, ForecastRef::Quantile(q)) => {
            let median = q
                .median()
                .ok_or_else(|| Error::validation("SPE on quantile data needs a 0.5 level"))?;
            spe(PointForecast(median), obs)
        }
        (Metric::Wis, ForecastRef::Quantile(q)) => wis(q, obs),
        (Metric::Wis, ForecastRef::Point(_)) => {
            return Err(Error::validation("WIS needs a quantile forecast"))
        }
    };
    Score::new(-raw)
}

/// Arithmetic mean in the order given; callers pass scores sorted by task.
pub fn mean_score(scores: &[Score]) -> Result<Score> {
    if scores.is_empty() {
        return Err(Error::validation("cannot average an empty list of scores"));
    }
    let sum: f64 = scores.iter().map(|s| s.0).sum();
    Score::new(sum / scores.len() as f64)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn qf(levels: &[f64], values: &[f64]) -> QuantileForecast {
        QuantileForecast::new(
            QuantileLevels::new(levels.to_vec()).unwrap(),
            values.to_vec(),
        )
        .unwrap()
    }

    fn obs(y: f64) -> Observation {
        Observation::new(y).unwrap()
    }

    fn point(v: f64) -> PointForecast {
        PointForecast::new(v).unwrap()
    }

    #[test]
    fn canonical_levels_shape() {
        let levels = QuantileLevels::canonical();
        assert_eq!(levels.len(), 23);
        assert!(QuantileLevels::new(CANONICAL_LEVELS.to_vec()).is_ok());
        assert_eq!(levels.position(0.5), Some(11));
    }

    #[test]
    fn level_validation() {
        assert!(QuantileLevels::new(vec![]).is_err());
        assert!(QuantileLevels::new(vec![0.0, 0.5]).is_err());
        assert!(QuantileLevels::new(vec![0.5, 1.0]).is_err());
        assert!(QuantileLevels::new(vec![0.5, 0.5]).is_err());
        assert!(QuantileLevels::new(vec![0.6, 0.4]).is_err());
    }

    #[test]
    fn non_monotone_quantiles_rejected() {
        let levels = QuantileLevels::new(vec![0.25, 0.5, 0.75]).unwrap();
        let err = QuantileForecast::new(levels.clone(), vec![1.0, 3.0, 2.0]).unwrap_err();
        assert!(matches!(err, Error::Validation(_)));
        assert!(QuantileForecast::new(levels.clone(), vec![1.0, 2.0]).is_err());
        assert!(QuantileForecast::new(levels, vec![1.0, f64::NAN, 2.0]).is_err());
    }

    #[test]
    fn spe_examples() {
        assert_eq!(spe(point(3.0), obs(3.0)), 0.0);
        assert_eq!(spe(point(1.0), obs(3.0)), 4.0);
        assert_eq!(spe(point(-0.5), obs(0.0)), 0.25);
        assert!(PointForecast::new(f64::INFINITY).is_err());
        assert!(Observation::new(f64::NAN).is_err());
    }

    #[test]
    fn wis_examples() {
        assert_eq!(wis(&qf(&[0.5], &[3.0]), obs(3.0)), 0.0);
        assert_eq!(wis(&qf(&[0.5], &[1.0]), obs(0.0)), 1.0);
        let w = wis(&qf(&[0.25, 0.5, 0.75], &[1.0, 2.0, 3.0]), obs(2.0));
        assert!((w - 1.0 / 3.0).abs() < 1e-15);
    }

    #[test]
    fn wis_observation_on_a_quantile() {
        // level 0.1: y > q, 2(0 - 0.1)(0 - 1) = 0.2; level 0.9: y == q, zero term
        let f = qf(&[0.1, 0.9], &[0.0, 1.0]);
        assert!((wis(&f, obs(1.0)) - 0.1).abs() < 1e-15);
    }

    #[test]
    fn positive_score_examples() {
        let f = qf(&[0.5], &[1.0]);
        assert_eq!(
            positive_score(Metric::Wis, ForecastRef::Quantile(&f), obs(0.0)).unwrap(),
            Score(-1.0)
        );
        assert_eq!(
            positive_score(Metric::Spe, ForecastRef::Point(point(3.0)), obs(3.0))
                .unwrap()
                .value(),
            0.0
        );
        assert_eq!(
            positive_score(Metric::Spe, ForecastRef::Point(point(1.0)), obs(3.0)).unwrap(),
            Score(-4.0)
        );
        // median of the quantile forecast is the point estimate
        assert_eq!(
            positive_score(Metric::Spe, ForecastRef::Quantile(&f), obs(3.0)).unwrap(),
            Score(-4.0)
        );
        assert!(positive_score(Metric::Wis, ForecastRef::Point(point(1.0)), obs(0.0)).is_err());
        let no_median = qf(&[0.25, 0.75], &[0.0, 1.0]);
        assert!(positive_score(Metric::Spe, ForecastRef::Quantile(&no_median), obs(0.0)).is_err());
    }

    #[test]
    fn mean_score_examples() {
        let s = |v: &[f64]| v.iter().map(|&x| Score(x)).collect::<Vec<_>>();
        assert_eq!(mean_score(&s(&[-2.0, -4.0])).unwrap(), Score(-3.0));
        assert_eq!(mean_score(&s(&[0.0])).unwrap(), Score(0.0));
        assert_eq!(mean_score(&s(&[-1.0, -1.0, -4.0])).unwrap(), Score(-2.0));
        assert!(mean_score(&[]).is_err());
    }

    #[test]
    fn metric_parsing() {
        assert_eq!("WIS".parse::<Metric>().unwrap(), Metric::Wis);
        assert_eq!("spe".parse::<Metric>().unwrap(), Metric::Spe);
        assert!("crps".parse::<Metric>().is_err());
    }

    fn sorted_quantiles() -> impl Strategy<Value = Vec<f64>> {
        prop::collection::vec(-100.0..100.0f64, 23).prop_map(|mut v| {
            v.sort_by(f64::total_cmp);
            v
        })
    }

    proptest! {
        #[test]
        fn median_wis_is_absolute_error(q in -1e6..1e6f64, y in -1e6..1e6f64) {
            prop_assert_eq!(wis(&qf(&[0.5], &[q]), obs(y)), (y - q).abs());
        }

        #[test]
        fn wis_nonnegative_zero_iff_all_equal(values in sorted_quantiles(), y in -100.0..100.0f64) {
            let f = QuantileForecast::new(QuantileLevels::canonical(), values).unwrap();
            let w = wis(&f, obs(y));
            prop_assert!(w >= 0.0);
            let exact = QuantileForecast::new(QuantileLevels::canonical(), vec![y; 23]).unwrap();
            prop_assert_eq!(wis(&exact, obs(y)), 0.0);
        }

        #[test]
        fn spe_symmetric(a in -1e3..1e3f64, b in -1e3..1e3f64) {
            prop_assert_eq!(spe(point(a), obs(b)), spe(point(b), obs(a)));
            prop_assert!(spe(point(a), obs(b)) >= 0.0);
        }
    }
}
