use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use super::{ForecastSet, ScorePanel, TaskKey, TruthTable};
use crate::ensemble::{ForecastPool, PoolKind};
use crate::error::{Error, Result};
use crate::importance::TaskPool;
use crate::scoring::{positive_score, ForecastRef, Metric, PointForecast, QuantileForecast};

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum ExclusionReason {
    MissingTruth,
    TooFewModels(usize),
}

impl fmt::Display for ExclusionReason {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ExclusionReason::MissingTruth => f.write_str("no truth value"),
            ExclusionReason::TooFewModels(n) => write!(f, "only {n} model(s) forecast this task"),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct ExcludedTask {
    pub task: TaskKey,
    pub reason: ExclusionReason,
}

#[derive(Clone, Debug)]
pub struct JoinedTasks {
    /// Sorted by task key.
    pub pools: Vec<TaskPool>,
    pub excluded: Vec<ExcludedTask>,
    /// Every model present in at least one kept pool, sorted.
    pub models: Vec<String>,
}

/// Pair forecasts with truth per task. Tasks without truth, or with fewer
/// than `min_models` valid forecasts, are listed in `excluded`.
pub fn build_task_pools(
    forecasts: &ForecastSet,
    truth: &TruthTable,
    min_models: usize,
) -> Result<JoinedTasks> {
    let mut by_task: BTreeMap<&TaskKey, Vec<(String, QuantileForecast)>> = BTreeMap::new();
    for record in &forecasts.records {
        by_task
            .entry(&record.task)
            .or_default()
            .push((record.model.clone(), record.forecast.clone()));
    }

    let mut pools = Vec::new();
    let mut excluded = Vec::new();
    let mut models = BTreeSet::new();
    for (task, members) in by_task {
        let key = (task.location.clone(), task.target_end_date);
        let Some(&obs) = truth.get(&key) else {
            excluded.push(ExcludedTask {
                task: task.clone(),
                reason: ExclusionReason::MissingTruth,
            });
            continue;
        };
        if members.len() < min_models {
            excluded.push(ExcludedTask {
                task: task.clone(),
                reason: ExclusionReason::TooFewModels(members.len()),
            });
            continue;
        }
        models.extend(members.iter().map(|m| m.0.clone()));
        pools.push(TaskPool {
            task: task.clone(),
            pool: ForecastPool::quantile(members)?,
            truth: obs,
        });
    }
    Ok(JoinedTasks {
        pools,
        excluded,
        models: models.into_iter().collect(),
    })
}

/// Each member's own positively oriented score on every kept task.
pub fn member_score_panel(joined: &JoinedTasks, metric: Metric) -> Result<ScorePanel> {
    let mut cells = vec![vec![None; joined.pools.len()]; joined.models.len()];
    for (t, task) in joined.pools.iter().enumerate() {
        for (i, id) in task.pool.model_ids().iter().enumerate() {
            let values = task.pool.member_values(i);
            let score = match task.pool.kind() {
                PoolKind::Quantile(levels) => {
                    let forecast =
                        QuantileForecast::from_parts_unchecked(levels.clone(), values.to_vec());
                    positive_score(metric, ForecastRef::Quantile(&forecast), task.truth)?
                }
                PoolKind::Point => positive_score(
                    metric,
                    ForecastRef::Point(PointForecast::new(values[0])?),
                    task.truth,
                )?,
            };
            let row = joined.models.binary_search(id).map_err(|_| {
                Error::validation(format!("model '{id}' missing from the model list"))
            })?;
            cells[row][t] = Some(score.value());
        }
    }
    ScorePanel::new(
        joined.models.clone(),
        joined.pools.iter().map(|p| p.task.clone()).collect(),
        cells,
    )
}
