//! Model importance: how much each component model changes the accuracy of
//! the equal-weight ensemble.
//!
//! * LOMO compares the full ensemble with the ensemble that leaves one model
//!   out.
//! * LASOMO averages a model's marginal contribution
//!   `μ(F^{S∪{i}}, y) − μ(F^S, y)` over every non-empty coalition `S` that
//!   excludes it. Permutation weights are the Shapley weights with the empty
//!   coalition removed: `s!(n−s−1)! / ((n−1)!(n−1))`.
//!
//! Coalitions are bitmasks over the pool's canonical (sorted id) order. A
//! task's `2ⁿ − 1` ensemble scores are computed once in [`SubsetScores`] and
//! shared by every model's sweep.

use std::fmt;
use std::str::FromStr;

use num_rational::Ratio;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dataio::TaskKey;
use crate::ensemble::{ascending_sum, mean_from_sum, ForecastPool, MeanCombiner, PoolKind};
use crate::error::{Error, Result};
use crate::scoring::{wis_raw, Metric, Observation};

/// Largest pool enumerated exactly (2²⁰ coalitions per task).
pub const MAX_EXACT_MODELS: usize = 20;

/// Pools below this size are enumerated on one thread; parallelism then
/// comes from running tasks concurrently.
const PARALLEL_SUBSET_THRESHOLD: usize = 14;

/// Low-bit block width for the prefix-sum table.
const LOW_BLOCK_BITS: usize = 10;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SubsetWeightScheme {
    /// Shapley permutation weights without the empty coalition.
    Permutation,
    /// The same weight for every admissible coalition.
    Equal,
}

impl fmt::Display for SubsetWeightScheme {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            SubsetWeightScheme::Permutation => "permutation",
            SubsetWeightScheme::Equal => "equal",
        })
    }
}

impl FromStr for SubsetWeightScheme {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "permutation" => Ok(SubsetWeightScheme::Permutation),
            "equal" => Ok(SubsetWeightScheme::Equal),
            other => Err(Error::validation(format!(
                "unknown weight scheme '{other}'"
            ))),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Algorithm {
    Lomo,
    Lasomo,
}

impl Algorithm {
    pub fn name(self) -> &'static str {
        match self {
            Algorithm::Lomo => "lomo",
            Algorithm::Lasomo => "lasomo",
        }
    }
}

impl fmt::Display for Algorithm {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Algorithm {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "lomo" => Ok(Algorithm::Lomo),
            "lasomo" => Ok(Algorithm::Lasomo),
            other => Err(Error::validation(format!("unknown algorithm '{other}'"))),
        }
    }
}

fn check_capacity(n: usize) -> Result<()> {
    if n > MAX_EXACT_MODELS {
        return Err(Error::Capacity {
            models: n,
            limit: MAX_EXACT_MODELS,
        });
    }
    Ok(())
}

fn binomial(n: u128, k: u128) -> u128 {
    let k = k.min(n - k);
    (0..k).fold(1u128, |acc, j| acc * (n - j) / (j + 1))
}

/// Exact permutation weight of a coalition of size `s` in a pool of `n`.
///
/// Equal to `s!(n−s−1)! / ((n−1)!(n−1))`, evaluated as
/// `1 / ((n−1)·C(n−1, s))` so nothing overflows for `n ≤ 20`.
pub fn shapley_weight(n: usize, s: usize) -> Result<Ratio<u128>> {
    check_capacity(n)?;
    if n < 2 {
        return Err(Error::domain("subset weights need at least two models"));
    }
    if s == 0 {
        return Err(Error::domain("the empty coalition carries no weight"));
    }
    if s > n - 1 {
        return Err(Error::domain(format!(
            "coalition size {s} exceeds n - 1 = {}",
            n - 1
        )));
    }
    let denominator = (n as u128 - 1) * binomial(n as u128 - 1, s as u128);
    Ok(Ratio::new(1, denominator))
}

/// Exact weight of a single coalition of size `s` under `scheme`.
pub fn subset_weight(scheme: SubsetWeightScheme, n: usize, s: usize) -> Result<Ratio<u128>> {
    match scheme {
        SubsetWeightScheme::Permutation => shapley_weight(n, s),
        SubsetWeightScheme::Equal => {
            // domain checks are shared
            shapley_weight(n, s)?;
            Ok(Ratio::new(1, (1u128 << (n - 1)) - 1))
        }
    }
}

/// Per-size weights converted to `f64` once.
#[derive(Clone, Debug, PartialEq)]
pub struct SubsetWeights {
    scheme: SubsetWeightScheme,
    /// Index `s` holds the weight of one coalition of size `s`; index 0 unused.
    by_size: Vec<f64>,
}

impl SubsetWeights {
    pub fn new(scheme: SubsetWeightScheme, n: usize) -> Result<Self> {
        let mut by_size = vec![0.0; n];
        for (s, slot) in by_size.iter_mut().enumerate().skip(1) {
            let w = subset_weight(scheme, n, s)?;
            *slot = *w.numer() as f64 / *w.denom() as f64;
        }
        if n < 2 {
            shapley_weight(n, 1)?;
        }
        Ok(SubsetWeights { scheme, by_size })
    }

    pub fn scheme(&self) -> SubsetWeightScheme {
        self.scheme
    }

    pub fn weight(&self, size: usize) -> f64 {
        self.by_size[size]
    }
}

/// Forecasts and the observed truth for one task.
#[derive(Clone, Debug)]
pub struct TaskPool {
    pub task: TaskKey,
    pub pool: ForecastPool,
    pub truth: Observation,
}

/// Scores ensemble value slices without rebuilding forecast objects.
///
/// For SPE only the median column is carried.
#[derive(Clone, Debug)]
pub(crate) struct SliceScorer {
    metric: Metric,
    levels: Vec<f64>,
    columns: Vec<usize>,
    truth: f64,
}

impl SliceScorer {
    pub(crate) fn new(pool: &ForecastPool, metric: Metric, truth: Observation) -> Result<Self> {
        let (levels, columns) = match (metric, pool.kind()) {
            (Metric::Wis, PoolKind::Quantile(levels)) => {
                (levels.as_slice().to_vec(), (0..levels.len()).collect())
            }
            (Metric::Wis, PoolKind::Point) => {
                return Err(Error::validation("WIS needs quantile forecasts"))
            }
            (Metric::Spe, _) => {
                let column = pool
                    .median_column()
                    .ok_or_else(|| Error::validation("SPE on quantile data needs a 0.5 level"))?;
                (Vec::new(), vec![column])
            }
        };
        Ok(SliceScorer {
            metric,
            levels,
            columns,
            truth: truth.value(),
        })
    }

    pub(crate) fn columns(&self) -> &[usize] {
        &self.columns
    }

    /// Positively oriented score of ensemble values over `columns()`.
    #[inline]
    pub(crate) fn score(&self, values: &[f64]) -> f64 {
        match self.metric {
            Metric::Wis => -wis_raw(&self.levels, values, self.truth),
            Metric::Spe => {
                let err = self.truth - values[0];
                -(err * err)
            }
        }
    }

    pub(crate) fn with_truth(&self, truth: f64) -> Self {
        SliceScorer {
            truth,
            ..self.clone()
        }
    }
}

/// Ensemble score of every non-empty coalition of one task's pool.
#[derive(Clone, Debug)]
pub struct SubsetScores {
    n: usize,
    /// Indexed by coalition bitmask; entry 0 (the empty coalition) is NaN.
    scores: Vec<f64>,
}

impl SubsetScores {
    pub fn compute(pool: &ForecastPool, metric: Metric, truth: Observation) -> Result<Self> {
        let n = pool.len();
        check_capacity(n)?;
        let scorer = SliceScorer::new(pool, metric, truth)?;
        let columns = scorer.columns();
        let width = columns.len();
        let reference: Vec<f64> = columns.iter().map(|&k| pool.reference()[k]).collect();
        let deviations: Vec<Vec<f64>> = (0..n)
            .map(|i| {
                let row = pool.member_deviations(i);
                columns.iter().map(|&k| row[k]).collect()
            })
            .collect();

        // Deviation sums over the low block, built so each entry equals a
        // left fold over its members in ascending order.
        let low_bits = n.min(LOW_BLOCK_BITS);
        let low_count = 1usize << low_bits;
        let mut low_sums = vec![0.0; low_count * width];
        for mask in 1..low_count {
            let top = usize::BITS as usize - 1 - mask.leading_zeros() as usize;
            let prev = mask ^ (1 << top);
            for k in 0..width {
                low_sums[mask * width + k] = low_sums[prev * width + k] + deviations[top][k];
            }
        }

        let mut scores = vec![0.0; 1usize << n];
        let fill_block = |high: usize, block: &mut [f64]| {
            let mut sum = vec![0.0; width];
            let mut ensemble = vec![0.0; width];
            let high_members: Vec<usize> = (0..n - low_bits)
                .filter(|b| high >> b & 1 == 1)
                .map(|b| b + low_bits)
                .collect();
            for (low, slot) in block.iter_mut().enumerate() {
                let mask = high << low_bits | low;
                if mask == 0 {
                    *slot = f64::NAN;
                    continue;
                }
                sum.copy_from_slice(&low_sums[low * width..(low + 1) * width]);
                for &m in &high_members {
                    for (s, d) in sum.iter_mut().zip(&deviations[m]) {
                        *s += d;
                    }
                }
                let count = mask.count_ones() as usize;
                for k in 0..width {
                    ensemble[k] = mean_from_sum(reference[k], sum[k], count);
                }
                *slot = scorer.score(&ensemble);
            }
        };
        if n >= PARALLEL_SUBSET_THRESHOLD {
            scores
                .par_chunks_mut(low_count)
                .enumerate()
                .for_each(|(high, block)| fill_block(high, block));
        } else {
            scores
                .chunks_mut(low_count)
                .enumerate()
                .for_each(|(high, block)| fill_block(high, block));
        }
        Ok(SubsetScores { n, scores })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn full_mask(&self) -> usize {
        (1 << self.n) - 1
    }

    /// Score of the ensemble of the coalition `mask`.
    pub fn score(&self, mask: usize) -> Result<f64> {
        if mask == 0 {
            return Err(Error::NoPrediction);
        }
        self.scores
            .get(mask)
            .copied()
            .ok_or_else(|| Error::validation(format!("coalition {mask:#b} out of range")))
    }

    fn check_member(&self, i: usize) -> Result<()> {
        if self.n < 2 {
            return Err(Error::domain("cannot leave out the only model"));
        }
        if i >= self.n {
            return Err(Error::validation(format!("member index {i} out of range")));
        }
        Ok(())
    }

    pub fn lomo(&self, i: usize) -> Result<f64> {
        self.check_member(i)?;
        let full = self.full_mask();
        Ok(self.scores[full] - self.scores[full ^ (1 << i)])
    }

    /// Coalitions excluding `i`, in ascending bitmask order.
    fn coalitions_without(&self, i: usize) -> impl Iterator<Item = usize> {
        let low = (1usize << i) - 1;
        (1usize..1 << (self.n - 1)).map(move |t| (t & !low) << 1 | (t & low))
    }

    /// Contributions are summed per coalition size (ascending bitmask order
    /// within a size) and each subtotal is weighted once.
    pub fn lasomo(&self, i: usize, weights: &SubsetWeights) -> Result<f64> {
        self.check_member(i)?;
        let bit = 1usize << i;
        let mut by_size = vec![0.0; self.n];
        for s in self.coalitions_without(i) {
            by_size[s.count_ones() as usize] += self.scores[s | bit] - self.scores[s];
        }
        Ok(weigh_sizes(&by_size, weights))
    }

    /// Marginal contributions of model `i` grouped by the size `r = |S|+1`
    /// of the coalition that includes it.
    pub fn by_subset_size(&self, i: usize) -> Result<Vec<SizeStats>> {
        self.check_member(i)?;
        let bit = 1usize << i;
        let mut sums = vec![0.0; self.n + 1];
        let mut counts = vec![0usize; self.n + 1];
        for s in self.coalitions_without(i) {
            let r = s.count_ones() as usize + 1;
            sums[r] += self.scores[s | bit] - self.scores[s];
            counts[r] += 1;
        }
        let means: Vec<f64> = (0..=self.n)
            .map(|r| {
                if counts[r] > 0 {
                    sums[r] / counts[r] as f64
                } else {
                    0.0
                }
            })
            .collect();
        let mut squares = vec![0.0; self.n + 1];
        for s in self.coalitions_without(i) {
            let r = s.count_ones() as usize + 1;
            let d = self.scores[s | bit] - self.scores[s] - means[r];
            squares[r] += d * d;
        }
        Ok((2..=self.n)
            .map(|r| SizeStats {
                size: r,
                mean: means[r],
                variance: squares[r] / counts[r] as f64,
                count: counts[r],
            })
            .collect())
    }
}

/// Mean and population variance of one model's marginal contributions over
/// the coalitions of one size.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SizeStats {
    /// Size of the coalition including the model, in `2..=n`.
    pub size: usize,
    pub mean: f64,
    pub variance: f64,
    pub count: usize,
}

/// Unweighted mean over sizes of the per-size means.
pub fn mean_over_sizes(stats: &[SizeStats]) -> f64 {
    stats.iter().map(|s| s.mean).sum::<f64>() / stats.len() as f64
}

/// Full and leave-one-out ensembles of a pool, reusable across truths.
#[derive(Clone, Debug)]
pub struct LomoEnsembles {
    scorer: SliceScorer,
    full: Vec<f64>,
    leave_out: Vec<Vec<f64>>,
}

impl LomoEnsembles {
    /// `truth` only seeds the scorer; [`Self::importance`] takes the truth
    /// to score against.
    pub fn new(pool: &ForecastPool, metric: Metric) -> Result<Self> {
        let n = pool.len();
        if n < 2 {
            return Err(Error::domain("cannot leave out the only model"));
        }
        let scorer = SliceScorer::new(pool, metric, Observation::new(0.0)?)?;
        let pick = |values: Vec<f64>| -> Vec<f64> {
            scorer.columns().iter().map(|&k| values[k]).collect()
        };
        let everyone: Vec<usize> = (0..n).collect();
        let full = pick(pool.combine_indices(&everyone, &MeanCombiner)?);
        let leave_out = (0..n)
            .map(|i| {
                let rest: Vec<usize> = (0..n).filter(|&j| j != i).collect();
                pool.combine_indices(&rest, &MeanCombiner).map(pick)
            })
            .collect::<Result<_>>()?;
        Ok(LomoEnsembles {
            scorer,
            full,
            leave_out,
        })
    }

    /// LOMO importance of every member against `truth`.
    pub fn importance(&self, truth: f64) -> Vec<f64> {
        let scorer = self.scorer.with_truth(truth);
        let full = scorer.score(&self.full);
        self.leave_out
            .iter()
            .map(|without| full - scorer.score(without))
            .collect()
    }

    /// Median (or point) value of the full ensemble.
    pub fn full_values(&self) -> &[f64] {
        &self.full
    }
}

fn member_index(task_pool: &TaskPool, model_id: &str) -> Result<usize> {
    task_pool.pool.index_of(model_id).ok_or_else(|| {
        Error::validation(format!(
            "model '{model_id}' did not forecast task {}",
            task_pool.task
        ))
    })
}

/// Change in the ensemble score when `model_id` leaves the full pool.
pub fn lomo_task(task_pool: &TaskPool, metric: Metric, model_id: &str) -> Result<f64> {
    let i = member_index(task_pool, model_id)?;
    let ensembles = LomoEnsembles::new(&task_pool.pool, metric)?;
    Ok(ensembles.importance(task_pool.truth.value())[i])
}

pub fn lasomo_task(
    task_pool: &TaskPool,
    metric: Metric,
    model_id: &str,
    scheme: SubsetWeightScheme,
) -> Result<f64> {
    let i = member_index(task_pool, model_id)?;
    let n = task_pool.pool.len();
    let weights = SubsetWeights::new(scheme, n)?;
    SubsetScores::compute(&task_pool.pool, metric, task_pool.truth)?.lasomo(i, &weights)
}

/// LASOMO without the shared cache: every coalition's ensemble is rebuilt
/// from the pool for this model alone.
pub fn lasomo_task_uncached(
    task_pool: &TaskPool,
    metric: Metric,
    model_id: &str,
    scheme: SubsetWeightScheme,
) -> Result<f64> {
    let i = member_index(task_pool, model_id)?;
    let pool = &task_pool.pool;
    let n = pool.len();
    let weights = SubsetWeights::new(scheme, n)?;
    let scorer = SliceScorer::new(pool, metric, task_pool.truth)?;
    let score_of = |mask: usize| -> Result<f64> {
        let members: Vec<usize> = (0..n).filter(|b| mask >> b & 1 == 1).collect();
        let values = pool.combine_indices(&members, &MeanCombiner)?;
        let picked: Vec<f64> = scorer.columns().iter().map(|&k| values[k]).collect();
        Ok(scorer.score(&picked))
    };
    let bit = 1usize << i;
    let mut by_size = vec![0.0; n];
    for s in 1..1usize << n {
        if s & bit != 0 {
            continue;
        }
        by_size[s.count_ones() as usize] += score_of(s | bit)? - score_of(s)?;
    }
    Ok(weigh_sizes(&by_size, &weights))
}

fn weigh_sizes(by_size: &[f64], weights: &SubsetWeights) -> f64 {
    (1..by_size.len()).fold(0.0, |total, s| total + weights.weight(s) * by_size[s])
}

pub fn importance_by_subset_size(
    task_pool: &TaskPool,
    metric: Metric,
    model_id: &str,
) -> Result<Vec<SizeStats>> {
    let i = member_index(task_pool, model_id)?;
    SubsetScores::compute(&task_pool.pool, metric, task_pool.truth)?.by_subset_size(i)
}

/// Mean per model over the tasks where it has a value, summed in task
/// order. Models with no values come back as `None`.
pub fn overall_importance(per_task: &[Vec<Option<f64>>]) -> Vec<Option<f64>> {
    per_task
        .iter()
        .map(|row| {
            let present: Vec<f64> = row.iter().flatten().copied().collect();
            if present.is_empty() {
                None
            } else {
                Some(ascending_sum(&present) / present.len() as f64)
            }
        })
        .collect()
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Ranked {
    pub model: String,
    pub value: f64,
    pub rank: usize,
}

/// Rank 1 is the largest value; ties go to the lexicographically smaller id.
pub fn rank_models(values: &[(String, f64)]) -> Vec<Ranked> {
    let mut sorted: Vec<&(String, f64)> = values.iter().collect();
    sorted.sort_by(|a, b| b.1.total_cmp(&a.1).then_with(|| a.0.cmp(&b.0)));
    sorted
        .into_iter()
        .enumerate()
        .map(|(k, (model, value))| Ranked {
            model: model.clone(),
            value: *value,
            rank: k + 1,
        })
        .collect()
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ImportanceConfig {
    pub metric: Metric,
    pub algorithm: Algorithm,
    pub scheme: SubsetWeightScheme,
    /// Collect per-size breakdowns (LASOMO only).
    pub subset_sizes: bool,
}

/// Importance values for a set of tasks.
#[derive(Clone, Debug, Serialize)]
pub struct ImportanceResult {
    pub models: Vec<String>,
    pub tasks: Vec<TaskKey>,
    /// `per_task[model][task]`; `None` where the model did not forecast.
    pub per_task: Vec<Vec<Option<f64>>>,
    /// Mean of each model's present per-task values.
    pub overall: Vec<Option<f64>>,
    /// `by_subset_size[model][task]`, when requested.
    pub by_subset_size: Option<Vec<Vec<Option<Vec<SizeStats>>>>>,
    pub algorithm: Algorithm,
    pub weight_scheme: SubsetWeightScheme,
}

struct TaskOutcome {
    values: Vec<f64>,
    sizes: Option<Vec<Vec<SizeStats>>>,
}

fn task_importance(task: &TaskPool, config: &ImportanceConfig) -> Result<TaskOutcome> {
    let n = task.pool.len();
    match config.algorithm {
        Algorithm::Lomo => {
            let values =
                LomoEnsembles::new(&task.pool, config.metric)?.importance(task.truth.value());
            Ok(TaskOutcome {
                values,
                sizes: None,
            })
        }
        Algorithm::Lasomo => {
            let weights = SubsetWeights::new(config.scheme, n)?;
            let cache = SubsetScores::compute(&task.pool, config.metric, task.truth)?;
            let values = (0..n)
                .map(|i| cache.lasomo(i, &weights))
                .collect::<Result<_>>()?;
            let sizes = if config.subset_sizes {
                Some(
                    (0..n)
                        .map(|i| cache.by_subset_size(i))
                        .collect::<Result<_>>()?,
                )
            } else {
                None
            };
            Ok(TaskOutcome { values, sizes })
        }
    }
}

/// Importance for every task, in parallel across tasks on the current rayon
/// pool. Output does not depend on the number of workers.
pub fn compute_importance(
    tasks: &[TaskPool],
    models: &[String],
    config: &ImportanceConfig,
) -> Result<ImportanceResult> {
    let outcomes = tasks
        .par_iter()
        .map(|task| {
            task_importance(task, config).map_err(|e| match e {
                Error::Capacity { .. } => e,
                other => Error::validation(format!("task {}: {other}", task.task)),
            })
        })
        .collect::<Result<Vec<_>>>()?;

    let mut per_task = vec![vec![None; tasks.len()]; models.len()];
    let want_sizes = config.subset_sizes && config.algorithm == Algorithm::Lasomo;
    let mut sizes = want_sizes.then(|| vec![vec![None; tasks.len()]; models.len()]);
    for (t, (task, outcome)) in tasks.iter().zip(outcomes).enumerate() {
        let mut outcome_sizes = outcome.sizes.map(|s| s.into_iter());
        for (member, id) in task.pool.model_ids().iter().enumerate() {
            let row = models.binary_search(id).map_err(|_| {
                Error::validation(format!("model '{id}' missing from the model list"))
            })?;
            per_task[row][t] = Some(outcome.values[member]);
            if let (Some(table), Some(iter)) = (sizes.as_mut(), outcome_sizes.as_mut()) {
                table[row][t] = iter.next();
            }
        }
    }
    let overall = overall_importance(&per_task);
    Ok(ImportanceResult {
        models: models.to_vec(),
        tasks: tasks.iter().map(|t| t.task.clone()).collect(),
        per_task,
        overall,
        by_subset_size: sizes,
        algorithm: config.algorithm,
        weight_scheme: config.scheme,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scoring::{PointForecast, QuantileForecast, QuantileLevels};
    use num_rational::Ratio;
    use proptest::prelude::*;

    fn key() -> TaskKey {
        TaskKey::new(
            "2021-11-29".parse().unwrap(),
            "MA",
            1,
            "2021-12-04".parse().unwrap(),
        )
        .unwrap()
    }

    fn point_task(values: &[f64], truth: f64) -> TaskPool {
        let members = values
            .iter()
            .enumerate()
            .map(|(i, &v)| (format!("m{}", i + 1), PointForecast::new(v).unwrap()))
            .collect();
        TaskPool {
            task: key(),
            pool: ForecastPool::point(members).unwrap(),
            truth: Observation::new(truth).unwrap(),
        }
    }

    fn quantile_task(rows: &[Vec<f64>], truth: f64) -> TaskPool {
        let levels = QuantileLevels::new(vec![0.1, 0.5, 0.9]).unwrap();
        let members = rows
            .iter()
            .enumerate()
            .map(|(i, v)| {
                (
                    format!("m{}", i + 1),
                    QuantileForecast::new(levels.clone(), v.clone()).unwrap(),
                )
            })
            .collect();
        TaskPool {
            task: key(),
            pool: ForecastPool::quantile(members).unwrap(),
            truth: Observation::new(truth).unwrap(),
        }
    }

    #[test]
    fn weight_examples() {
        assert_eq!(shapley_weight(3, 1).unwrap(), Ratio::new(1, 4));
        assert_eq!(shapley_weight(3, 2).unwrap(), Ratio::new(1, 2));
        assert_eq!(shapley_weight(2, 1).unwrap(), Ratio::new(1, 1));
    }

    #[test]
    fn weight_errors() {
        assert!(matches!(shapley_weight(21, 1), Err(Error::Capacity { .. })));
        assert!(matches!(shapley_weight(5, 0), Err(Error::Domain(_))));
        assert!(matches!(shapley_weight(5, 5), Err(Error::Domain(_))));
        assert!(matches!(shapley_weight(1, 1), Err(Error::Domain(_))));
        assert!(SubsetWeights::new(SubsetWeightScheme::Permutation, 1).is_err());
    }

    #[test]
    fn weights_match_factorial_form() {
        let fact = |k: u128| (1..=k).product::<u128>();
        for n in 2..=20u128 {
            for s in 1..n {
                let expected = Ratio::new(fact(s) * fact(n - s - 1), fact(n - 1) * (n - 1));
                assert_eq!(shapley_weight(n as usize, s as usize).unwrap(), expected);
            }
        }
    }

    #[test]
    fn weights_normalize_exactly() {
        for n in 2..=20usize {
            for scheme in [SubsetWeightScheme::Permutation, SubsetWeightScheme::Equal] {
                let mut total = Ratio::new(0u128, 1);
                for s in 1..n {
                    let count = binomial(n as u128 - 1, s as u128);
                    total += subset_weight(scheme, n, s).unwrap() * count;
                }
                assert_eq!(total, Ratio::new(1, 1), "n={n} {scheme}");
            }
        }
    }

    #[test]
    fn lomo_point_example() {
        let task = point_task(&[0.0, 2.0], 0.0);
        assert_eq!(lomo_task(&task, Metric::Spe, "m1").unwrap(), 3.0);
        assert_eq!(lomo_task(&task, Metric::Spe, "m2").unwrap(), -1.0);
    }

    #[test]
    fn lomo_identical_forecasts_is_zero() {
        let task = point_task(&[0.3, 0.3, 0.3, 0.3], 1.7);
        for id in ["m1", "m2", "m3", "m4"] {
            assert_eq!(lomo_task(&task, Metric::Spe, id).unwrap(), 0.0);
        }
        let q = quantile_task(&vec![vec![0.1, 0.7, 1.3]; 5], 0.4);
        for id in ["m1", "m3", "m5"] {
            assert_eq!(lomo_task(&q, Metric::Wis, id).unwrap(), 0.0);
            assert_eq!(
                lasomo_task(&q, Metric::Wis, id, SubsetWeightScheme::Permutation).unwrap(),
                0.0
            );
        }
    }

    #[test]
    fn lomo_zero_when_model_matches_rest() {
        let task = quantile_task(
            &[
                vec![1.0, 2.0, 3.0],
                vec![3.0, 4.0, 5.0],
                vec![2.0, 3.0, 4.0],
            ],
            3.3,
        );
        assert_eq!(lomo_task(&task, Metric::Wis, "m3").unwrap(), 0.0);
    }

    #[test]
    fn lomo_needs_two_models() {
        let task = point_task(&[1.0], 0.0);
        assert!(matches!(
            lomo_task(&task, Metric::Spe, "m1"),
            Err(Error::Domain(_))
        ));
        assert!(lasomo_task(&task, Metric::Spe, "m1", SubsetWeightScheme::Permutation).is_err());
        let task = point_task(&[1.0, 2.0], 0.0);
        assert!(lomo_task(&task, Metric::Spe, "nope").is_err());
    }

    #[test]
    fn lasomo_capacity() {
        let values: Vec<f64> = (0..21).map(|i| i as f64).collect();
        let task = point_task(&values, 0.0);
        assert!(matches!(
            lasomo_task(&task, Metric::Spe, "m1", SubsetWeightScheme::Permutation),
            Err(Error::Capacity { models: 21, .. })
        ));
        // LOMO has no cap
        assert!(lomo_task(&task, Metric::Spe, "m1").is_ok());
    }

    #[test]
    fn lasomo_equals_lomo_for_two_models() {
        let task = point_task(&[0.0, 2.0], 0.3);
        for id in ["m1", "m2"] {
            for scheme in [SubsetWeightScheme::Permutation, SubsetWeightScheme::Equal] {
                assert_eq!(
                    lasomo_task(&task, Metric::Spe, id, scheme).unwrap(),
                    lomo_task(&task, Metric::Spe, id).unwrap()
                );
            }
        }
    }

    #[test]
    fn lasomo_three_point_forecasts_by_hand() {
        // ŷ = (−1, −0.5, 1.5), y = 0; μ(S) = −(mean_S ŷ)²
        let mu = |xs: &[f64]| {
            let m = xs.iter().sum::<f64>() / xs.len() as f64;
            -(m * m)
        };
        let expected_m3 = 0.25 * (mu(&[-1.0, 1.5]) - mu(&[-1.0]))
            + 0.25 * (mu(&[-0.5, 1.5]) - mu(&[-0.5]))
            + 0.5 * (mu(&[-1.0, -0.5, 1.5]) - mu(&[-1.0, -0.5]));
        let task = point_task(&[-1.0, -0.5, 1.5], 0.0);
        let got = lasomo_task(&task, Metric::Spe, "m3", SubsetWeightScheme::Permutation).unwrap();
        assert!((got - expected_m3).abs() < 1e-12);
        let equal = (mu(&[-1.0, 1.5]) - mu(&[-1.0]) + mu(&[-0.5, 1.5]) - mu(&[-0.5])
            + mu(&[-1.0, -0.5, 1.5])
            - mu(&[-1.0, -0.5]))
            / 3.0;
        let got = lasomo_task(&task, Metric::Spe, "m3", SubsetWeightScheme::Equal).unwrap();
        assert!((got - equal).abs() < 1e-12);
    }

    #[test]
    fn subset_size_examples() {
        let task = point_task(&[0.0, 2.0], 1.0);
        let stats = importance_by_subset_size(&task, Metric::Spe, "m1").unwrap();
        assert_eq!(stats.len(), 1);
        assert_eq!(stats[0].size, 2);
        assert_eq!(stats[0].variance, 0.0);

        let same = point_task(&[0.5; 5], -1.0);
        for s in importance_by_subset_size(&same, Metric::Spe, "m2").unwrap() {
            assert_eq!((s.mean, s.variance), (0.0, 0.0));
        }
    }

    #[test]
    fn overall_examples() {
        let rows = vec![
            vec![Some(3.0), Some(-1.0)],
            vec![Some(0.0), Some(0.0)],
            vec![Some(2.0), Some(4.0), Some(6.0)],
            vec![None, None],
            vec![Some(5.0), None],
        ];
        assert_eq!(
            overall_importance(&rows),
            vec![Some(1.0), Some(0.0), Some(4.0), None, Some(5.0)]
        );
    }

    #[test]
    fn ranking_examples() {
        let r = rank_models(&[("A".into(), -40.2), ("B".into(), -41.2)]);
        assert_eq!((r[0].model.as_str(), r[0].rank), ("A", 1));
        let r = rank_models(&[("A".into(), 2.81), ("B".into(), 3.11)]);
        assert_eq!((r[0].model.as_str(), r[1].model.as_str()), ("B", "A"));
        let r = rank_models(&[("b".into(), 1.0), ("a".into(), 1.0), ("c".into(), 2.0)]);
        let order: Vec<_> = r.iter().map(|x| (x.model.as_str(), x.rank)).collect();
        assert_eq!(order, vec![("c", 1), ("a", 2), ("b", 3)]);
    }

    #[test]
    fn compute_importance_places_missing_cells() {
        let a = point_task(&[0.0, 2.0, 1.0], 0.5);
        let mut b = point_task(&[0.0, 2.0], 0.5);
        b.task.location = "NY".into();
        let models = vec!["m1".to_string(), "m2".to_string(), "m3".to_string()];
        let config = ImportanceConfig {
            metric: Metric::Spe,
            algorithm: Algorithm::Lasomo,
            scheme: SubsetWeightScheme::Permutation,
            subset_sizes: true,
        };
        let result = compute_importance(&[a.clone(), b.clone()], &models, &config).unwrap();
        assert_eq!(result.per_task[2][1], None);
        assert!(result.per_task[2][0].is_some());
        let sizes = result.by_subset_size.as_ref().unwrap();
        assert_eq!(sizes[0][0].as_ref().unwrap().len(), 2);
        assert_eq!(sizes[0][1].as_ref().unwrap().len(), 1);
        assert!(sizes[2][1].is_none());
        assert_eq!(
            result.per_task[0][0].unwrap(),
            lasomo_task(&a, Metric::Spe, "m1", SubsetWeightScheme::Permutation).unwrap()
        );
        assert_eq!(result.overall[2], result.per_task[2][0]);
    }

    fn random_point_pool() -> impl Strategy<Value = (Vec<f64>, f64)> {
        (prop::collection::vec(-5.0..5.0f64, 2..9), -5.0..5.0f64)
    }

    proptest! {
        #[test]
        fn cached_matches_uncached_bit_for_bit((values, y) in random_point_pool()) {
            let task = point_task(&values, y);
            for i in 1..=values.len() {
                let id = format!("m{i}");
                for scheme in [SubsetWeightScheme::Permutation, SubsetWeightScheme::Equal] {
                    let cached = lasomo_task(&task, Metric::Spe, &id, scheme).unwrap();
                    let direct = lasomo_task_uncached(&task, Metric::Spe, &id, scheme).unwrap();
                    prop_assert_eq!(cached.to_bits(), direct.to_bits());
                }
            }
        }

        #[test]
        fn size_means_average_to_lasomo((values, y) in random_point_pool()) {
            let task = point_task(&values, y);
            for i in 1..=values.len() {
                let id = format!("m{i}");
                let stats = importance_by_subset_size(&task, Metric::Spe, &id).unwrap();
                let lasomo = lasomo_task(&task, Metric::Spe, &id, SubsetWeightScheme::Permutation).unwrap();
                prop_assert!((mean_over_sizes(&stats) - lasomo).abs() < 1e-10);
            }
        }

        #[test]
        fn cache_matches_lomo_ensembles((values, y) in random_point_pool()) {
            let task = point_task(&values, y);
            let cache = SubsetScores::compute(&task.pool, Metric::Spe, task.truth).unwrap();
            let lomo = LomoEnsembles::new(&task.pool, Metric::Spe).unwrap().importance(y);
            for (i, v) in lomo.iter().enumerate() {
                prop_assert_eq!(cache.lomo(i).unwrap().to_bits(), v.to_bits());
            }
        }
    }
}
