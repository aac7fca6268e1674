//! Equal-weight ensembles of quantile and point forecasts.
//!
//! A pool stores its members' values as an `n × K` matrix (K = number of
//! quantile levels, or 1 for point forecasts) in canonical model-id order.
//! Ensembles are computed as `reference + combine(member - reference)`, where
//! the reference at each level is the value of the pool's first member. For
//! the mean this is algebraically the plain average, and it makes pooling
//! identical forecasts reproduce them exactly.

use std::collections::BTreeSet;

use crate::error::{Error, Result};
use crate::scoring::{PointForecast, QuantileForecast, QuantileLevels};

/// Pools above this size sum with compensation.
const COMPENSATED_SUM_THRESHOLD: usize = 32;

/// Combines the members' deviations from the pool reference at one level.
///
/// Any translation-equivariant combiner (mean, median, fixed weights) fits
/// this shape.
pub trait Combiner: Send + Sync {
    fn combine(&self, deviations: &[f64]) -> f64;
}

/// Equal weight at every level.
#[derive(Clone, Copy, Debug, Default)]
pub struct MeanCombiner;

impl Combiner for MeanCombiner {
    fn combine(&self, deviations: &[f64]) -> f64 {
        let sum = if deviations.len() > COMPENSATED_SUM_THRESHOLD {
            neumaier_sum(deviations)
        } else {
            ascending_sum(deviations)
        };
        sum * (1.0 / deviations.len() as f64)
    }
}

/// Left fold from `0.0`; the subset-score cache reproduces this order.
#[inline]
pub(crate) fn ascending_sum(values: &[f64]) -> f64 {
    values.iter().fold(0.0, |acc, &v| acc + v)
}

fn neumaier_sum(values: &[f64]) -> f64 {
    let mut sum = 0.0f64;
    let mut compensation = 0.0f64;
    for &v in values {
        let t = sum + v;
        if sum.abs() >= v.abs() {
            compensation += (sum - t) + v;
        } else {
            compensation += (v - t) + sum;
        }
        sum = t;
    }
    sum + compensation
}

/// Mean ensemble value from a deviation sum over `count` members.
#[inline]
pub(crate) fn mean_from_sum(reference: f64, deviation_sum: f64, count: usize) -> f64 {
    reference + deviation_sum * (1.0 / count as f64)
}

#[derive(Clone, Debug, PartialEq)]
pub enum PoolKind {
    Quantile(QuantileLevels),
    Point,
}

/// Forecasts from distinct models for a single task.
#[derive(Clone, Debug)]
pub struct ForecastPool {
    model_ids: Vec<String>,
    kind: PoolKind,
    width: usize,
    /// `values[i * width + k]`
    values: Vec<f64>,
    reference: Vec<f64>,
    deviations: Vec<f64>,
}

impl ForecastPool {
    /// Members are reordered by model id; ids must be distinct and all
    /// forecasts must share one level set.
    pub fn quantile(members: Vec<(String, QuantileForecast)>) -> Result<Self> {
        let mut members = members;
        members.sort_by(|a, b| a.0.cmp(&b.0));
        check_ids(members.iter().map(|m| m.0.as_str()))?;
        let levels = members[0].1.levels().clone();
        if let Some((id, _)) = members.iter().find(|(_, f)| *f.levels() != levels) {
            return Err(Error::validation(format!(
                "forecast from '{id}' uses a different quantile level set"
            )));
        }
        let width = levels.len();
        let mut model_ids = Vec::with_capacity(members.len());
        let mut values = Vec::with_capacity(members.len() * width);
        for (id, forecast) in members {
            model_ids.push(id);
            values.extend_from_slice(forecast.values());
        }
        Ok(Self::from_matrix(
            model_ids,
            PoolKind::Quantile(levels),
            width,
            values,
        ))
    }

    pub fn point(members: Vec<(String, PointForecast)>) -> Result<Self> {
        let mut members = members;
        members.sort_by(|a, b| a.0.cmp(&b.0));
        check_ids(members.iter().map(|m| m.0.as_str()))?;
        let (model_ids, values): (Vec<_>, Vec<_>) =
            members.into_iter().map(|(id, p)| (id, p.value())).unzip();
        Ok(Self::from_matrix(model_ids, PoolKind::Point, 1, values))
    }

    fn from_matrix(model_ids: Vec<String>, kind: PoolKind, width: usize, values: Vec<f64>) -> Self {
        let reference = values[..width].to_vec();
        let deviations = values
            .chunks_exact(width)
            .flat_map(|row| row.iter().zip(&reference).map(|(v, r)| v - r))
            .collect();
        ForecastPool {
            model_ids,
            kind,
            width,
            values,
            reference,
            deviations,
        }
    }

    pub fn len(&self) -> usize {
        self.model_ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.model_ids.is_empty()
    }

    pub fn model_ids(&self) -> &[String] {
        &self.model_ids
    }

    pub fn index_of(&self, model_id: &str) -> Option<usize> {
        self.model_ids
            .binary_search_by(|m| m.as_str().cmp(model_id))
            .ok()
    }

    pub fn kind(&self) -> &PoolKind {
        &self.kind
    }

    /// Values per member: the number of quantile levels, or 1.
    pub fn width(&self) -> usize {
        self.width
    }

    pub fn member_values(&self, index: usize) -> &[f64] {
        &self.values[index * self.width..(index + 1) * self.width]
    }

    pub(crate) fn reference(&self) -> &[f64] {
        &self.reference
    }

    pub(crate) fn member_deviations(&self, index: usize) -> &[f64] {
        &self.deviations[index * self.width..(index + 1) * self.width]
    }

    /// Position of the 0.5 level for quantile pools, 0 for point pools.
    pub fn median_column(&self) -> Option<usize> {
        match &self.kind {
            PoolKind::Quantile(levels) => levels.position(0.5),
            PoolKind::Point => Some(0),
        }
    }

    /// Map model ids to sorted member indices.
    pub fn resolve(&self, subset: &[&str]) -> Result<Vec<usize>> {
        if subset.is_empty() {
            return Err(Error::NoPrediction);
        }
        let mut indices = BTreeSet::new();
        for id in subset {
            let index = self
                .index_of(id)
                .ok_or_else(|| Error::validation(format!("model '{id}' is not in the pool")))?;
            indices.insert(index);
        }
        Ok(indices.into_iter().collect())
    }

    /// Ensemble values for sorted member indices.
    pub fn combine_indices(&self, members: &[usize], combiner: &dyn Combiner) -> Result<Vec<f64>> {
        if members.is_empty() {
            return Err(Error::NoPrediction);
        }
        if let Some(&bad) = members.iter().find(|&&i| i >= self.len()) {
            return Err(Error::validation(format!(
                "member index {bad} out of range"
            )));
        }
        let mut scratch = vec![0.0; members.len()];
        Ok((0..self.width)
            .map(|k| {
                for (slot, &i) in scratch.iter_mut().zip(members) {
                    *slot = self.deviations[i * self.width + k];
                }
                self.reference[k] + combiner.combine(&scratch)
            })
            .collect())
    }

    /// Equal-weight mean of the subset's quantiles, level by level.
    pub fn mean_quantile_ensemble(&self, subset: &[&str]) -> Result<QuantileForecast> {
        let PoolKind::Quantile(levels) = &self.kind else {
            return Err(Error::validation("pool holds point forecasts"));
        };
        let members = self.resolve(subset)?;
        let values = self.combine_indices(&members, &MeanCombiner)?;
        Ok(QuantileForecast::from_parts_unchecked(
            levels.clone(),
            values,
        ))
    }

    pub fn mean_point_ensemble(&self, subset: &[&str]) -> Result<PointForecast> {
        if self.kind != PoolKind::Point {
            return Err(Error::validation("pool holds quantile forecasts"));
        }
        let members = self.resolve(subset)?;
        let values = self.combine_indices(&members, &MeanCombiner)?;
        PointForecast::new(values[0])
    }
}

fn check_ids<'a>(sorted_ids: impl Iterator<Item = &'a str>) -> Result<()> {
    let ids: Vec<&str> = sorted_ids.collect();
    if ids.is_empty() {
        return Err(Error::validation(
            "a forecast pool needs at least one member",
        ));
    }
    if let Some(w) = ids.windows(2).find(|w| w[0] == w[1]) {
        return Err(Error::validation(format!("duplicate model id '{}'", w[0])));
    }
    Ok(())
}
