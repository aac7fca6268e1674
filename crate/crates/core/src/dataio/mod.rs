//! Hub-format CSV ingestion, score panels with missing-value policies, and
//! result writers.

mod join;
mod output;
mod panel;
mod read;

use std::fmt;

use chrono::NaiveDate;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub use join::{build_task_pools, member_score_panel, ExcludedTask, ExclusionReason, JoinedTasks};
pub use output::{
    format_float, read_summary_csv, write_csv_rows, write_json, write_summary, write_table,
    OutputFormat, OutputTarget, SummaryRow, TableRow,
};
pub use panel::{NaPolicy, ScorePanel};
pub use read::{
    read_forecasts, read_forecasts_from, read_truth, read_truth_from, ForecastRecord, ForecastSet,
    InvalidRecord, TruthTable,
};

/// One forecasting task: where, when it was issued, how far ahead, and the
/// date the target week ends.
///
/// Ordered by forecast date, then location, horizon and target end date;
/// that order is the canonical reduction order everywhere.
#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct TaskKey {
    pub forecast_date: NaiveDate,
    pub location: String,
    pub horizon: u32,
    pub target_end_date: NaiveDate,
}

impl TaskKey {
    pub fn new(
        forecast_date: NaiveDate,
        location: impl Into<String>,
        horizon: u32,
        target_end_date: NaiveDate,
    ) -> Result<Self> {
        if horizon < 1 {
            return Err(Error::validation("horizon must be at least 1 week"));
        }
        if target_end_date < forecast_date {
            return Err(Error::validation(format!(
                "target end date {target_end_date} precedes forecast date {forecast_date}"
            )));
        }
        Ok(TaskKey {
            forecast_date,
            location: location.into(),
            horizon,
            target_end_date,
        })
    }

    /// Days between the file's target end date and `forecast_date + 7·horizon`.
    pub fn calendar_offset_days(&self) -> i64 {
        let nominal = self.forecast_date + chrono::Duration::weeks(self.horizon as i64);
        (self.target_end_date - nominal).num_days()
    }
}

impl fmt::Display for TaskKey {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "{} {} h{} -> {}",
            self.forecast_date, self.location, self.horizon, self.target_end_date
        )
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn date(s: &str) -> NaiveDate {
        s.parse().unwrap()
    }

    #[test]
    fn task_key_invariants() {
        assert!(TaskKey::new(date("2021-11-29"), "MA", 0, date("2021-12-04")).is_err());
        assert!(TaskKey::new(date("2021-11-29"), "MA", 1, date("2021-11-28")).is_err());
        let key = TaskKey::new(date("2021-11-29"), "MA", 1, date("2021-12-04")).unwrap();
        assert_eq!(key.calendar_offset_days(), -2);
    }

    #[test]
    fn task_keys_sort_by_date_then_location() {
        let a = TaskKey::new(date("2021-11-29"), "NY", 1, date("2021-12-04")).unwrap();
        let b = TaskKey::new(date("2021-12-06"), "MA", 1, date("2021-12-11")).unwrap();
        let c = TaskKey::new(date("2021-11-29"), "MA", 2, date("2021-12-11")).unwrap();
        let mut keys = vec![b.clone(), a.clone(), c.clone()];
        keys.sort();
        assert_eq!(keys, vec![c, a, b]);
    }
}
