use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use super::TaskKey;
use crate::error::{Error, Result};

/// What to do with a (model, task) cell the model never submitted.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum NaPolicy {
    /// Leave it out; averages use present cells only.
    Drop,
    /// Fill with the lowest present score for that task.
    Worst,
    /// Fill with the mean present score for that task.
    Mean,
}

impl NaPolicy {
    pub const ALL: [NaPolicy; 3] = [NaPolicy::Drop, NaPolicy::Worst, NaPolicy::Mean];

    pub fn name(self) -> &'static str {
        match self {
            NaPolicy::Drop => "drop",
            NaPolicy::Worst => "worst",
            NaPolicy::Mean => "mean",
        }
    }
}

impl fmt::Display for NaPolicy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for NaPolicy {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "drop" => Ok(NaPolicy::Drop),
            "worst" => Ok(NaPolicy::Worst),
            "mean" => Ok(NaPolicy::Mean),
            other => Err(Error::validation(format!(
                "unknown NA policy '{other}' (expected drop, worst or mean)"
            ))),
        }
    }
}

/// Model × task grid of positively oriented values, `None` where missing.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ScorePanel {
    models: Vec<String>,
    tasks: Vec<TaskKey>,
    cells: Vec<Vec<Option<f64>>>,
}

impl ScorePanel {
    pub fn new(
        models: Vec<String>,
        tasks: Vec<TaskKey>,
        cells: Vec<Vec<Option<f64>>>,
    ) -> Result<Self> {
        if cells.len() != models.len() {
            return Err(Error::validation(format!(
                "{} rows for {} models",
                cells.len(),
                models.len()
            )));
        }
        if let Some(row) = cells.iter().find(|row| row.len() != tasks.len()) {
            return Err(Error::validation(format!(
                "row of {} cells for {} tasks",
                row.len(),
                tasks.len()
            )));
        }
        if cells.iter().flatten().flatten().any(|v| !v.is_finite()) {
            return Err(Error::validation("panel values must be finite"));
        }
        Ok(ScorePanel {
            models,
            tasks,
            cells,
        })
    }

    pub fn models(&self) -> &[String] {
        &self.models
    }

    pub fn tasks(&self) -> &[TaskKey] {
        &self.tasks
    }

    pub fn cell(&self, model: usize, task: usize) -> Option<f64> {
        self.cells[model][task]
    }

    pub fn row(&self, model: usize) -> &[Option<f64>] {
        &self.cells[model]
    }

    /// Present values in task column `t`, in model order.
    fn column(&self, t: usize) -> Vec<f64> {
        self.cells.iter().filter_map(|row| row[t]).collect()
    }

    /// Fill or keep missing cells; task columns with nothing present are
    /// removed under every policy.
    pub fn apply_na_policy(&self, policy: NaPolicy) -> ScorePanel {
        let keep: Vec<usize> = (0..self.tasks.len())
            .filter(|&t| self.cells.iter().any(|row| row[t].is_some()))
            .collect();
        let fills: Vec<Option<f64>> = keep
            .iter()
            .map(|&t| {
                let present = self.column(t);
                match policy {
                    NaPolicy::Drop => None,
                    NaPolicy::Worst => present.iter().copied().reduce(f64::min),
                    NaPolicy::Mean => {
                        Some(present.iter().fold(0.0, |acc, v| acc + v) / present.len() as f64)
                    }
                }
            })
            .collect();
        let cells = self
            .cells
            .iter()
            .map(|row| {
                keep.iter()
                    .zip(&fills)
                    .map(|(&t, fill)| row[t].or(*fill))
                    .collect()
            })
            .collect();
        ScorePanel {
            models: self.models.clone(),
            tasks: keep.iter().map(|&t| self.tasks[t].clone()).collect(),
            cells,
        }
    }

    /// Per-model mean of present cells, summed in task order.
    pub fn model_means(&self) -> Vec<Option<f64>> {
        self.cells
            .iter()
            .map(|row| {
                let present: Vec<f64> = row.iter().flatten().copied().collect();
                if present.is_empty() {
                    None
                } else {
                    Some(present.iter().fold(0.0, |acc, v| acc + v) / present.len() as f64)
                }
            })
            .collect()
    }

    pub fn present_counts(&self) -> Vec<usize> {
        self.cells
            .iter()
            .map(|row| row.iter().flatten().count())
            .collect()
    }
}
