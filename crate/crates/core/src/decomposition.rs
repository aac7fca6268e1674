//! Closed forms for LOMO importance under squared error.
//!
//! With errors `e_j = y − ŷ_j`, the error of the equal-weight ensemble is
//! the mean error, so LOMO importance under −SPE can be written either
//! directly or expanded into squared and cross terms. Taking expectations of
//! the expanded form gives the expected importance under a Gaussian truth.

use rand_chacha::ChaCha8Rng;
use rand_core::{RngCore, SeedableRng};
use serde::Serialize;

use crate::error::{Error, Result};
use crate::normal::normal_quantile;
use crate::simulation::open_unit;

/// Tolerance on the sum of ensemble weights.
const WEIGHT_SUM_TOLERANCE: f64 = 1e-12;

/// Per-model prediction errors `y − ŷ_j`.
#[derive(Clone, Debug, PartialEq)]
pub struct ErrorVector(Vec<f64>);

impl ErrorVector {
    pub fn new(errors: Vec<f64>) -> Result<Self> {
        if errors.len() < 2 {
            return Err(Error::domain("an error vector needs at least two models"));
        }
        if errors.iter().any(|e| !e.is_finite()) {
            return Err(Error::validation("errors must be finite"));
        }
        Ok(ErrorVector(errors))
    }

    pub fn from_forecasts(forecasts: &[f64], truth: f64) -> Result<Self> {
        Self::new(forecasts.iter().map(|f| truth - f).collect())
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

    fn check_index(&self, i: usize) -> Result<()> {
        if i >= self.0.len() {
            return Err(Error::validation(format!(
                "model index {i} out of range for {} models",
                self.0.len()
            )));
        }
        Ok(())
    }
}

/// Deterministic point forecasts scored against a zero-mean normal truth.
#[derive(Clone, Debug, PartialEq)]
pub struct GaussianErrorModel {
    forecast_means: Vec<f64>,
    truth_variance: f64,
}

impl GaussianErrorModel {
    pub fn new(forecast_means: Vec<f64>, truth_variance: f64) -> Result<Self> {
        if forecast_means.len() < 2 {
            return Err(Error::domain("need at least two forecasts"));
        }
        if forecast_means.iter().any(|f| !f.is_finite()) {
            return Err(Error::validation("forecasts must be finite"));
        }
        if !(truth_variance > 0.0 && truth_variance.is_finite()) {
            return Err(Error::validation("truth variance must be positive"));
        }
        Ok(GaussianErrorModel {
            forecast_means,
            truth_variance,
        })
    }

    pub fn len(&self) -> usize {
        self.forecast_means.len()
    }

    pub fn is_empty(&self) -> bool {
        self.forecast_means.is_empty()
    }

    /// `E[e_j e_k] = σ² + ŷ_j ŷ_k`; on the diagonal this is the ESPE.
    pub fn moments(&self) -> Vec<Vec<f64>> {
        let f = &self.forecast_means;
        f.iter()
            .map(|a| f.iter().map(|b| self.truth_variance + a * b).collect())
            .collect()
    }
}

/// `−(ē)² + (ē₋ᵢ)²`, the LOMO importance under −SPE.
pub fn phi_direct(errors: &ErrorVector, i: usize) -> Result<f64> {
    errors.check_index(i)?;
    let e = errors.as_slice();
    let full = mean_about_first(e.iter().copied());
    let rest = mean_about_first(
        e.iter()
            .enumerate()
            .filter(|&(j, _)| j != i)
            .map(|(_, &v)| v),
    );
    Ok(-full * full + rest * rest)
}

/// Mean taken as `first + mean(x − first)`, exact when all values agree.
fn mean_about_first(values: impl Iterator<Item = f64> + Clone) -> f64 {
    let mut it = values.clone();
    let Some(first) = it.next() else {
        return f64::NAN;
    };
    let count = values.count() as f64;
    first + it.fold(0.0, |acc, v| acc + (v - first)) / count
}

/// The same quantity expanded into own, cross and leave-out terms.
pub fn phi_decomposed(errors: &ErrorVector, i: usize) -> Result<f64> {
    errors.check_index(i)?;
    let e = errors.as_slice();
    let n = e.len();
    let mut cross_with_i = 0.0;
    let mut rest_squares = 0.0;
    let mut rest_cross = 0.0;
    for j in (0..n).filter(|&j| j != i) {
        cross_with_i += e[i] * e[j];
        rest_squares += e[j] * e[j];
        for k in (j + 1..n).filter(|&k| k != i) {
            rest_cross += e[j] * e[k];
        }
    }
    Ok(combine_terms(
        n,
        e[i] * e[i],
        cross_with_i,
        rest_squares,
        rest_cross,
    ))
}

fn combine_terms(n: usize, own: f64, cross_with_i: f64, rest_squares: f64, rest_cross: f64) -> f64 {
    let nf = n as f64;
    let n2 = nf * nf;
    let leave_out = (2.0 * nf - 1.0) / (nf * (nf - 1.0)).powi(2);
    -own / n2 - 2.0 * cross_with_i / n2 + leave_out * (rest_squares + 2.0 * rest_cross)
}

/// Expected LOMO importance of model `i` from a matrix of error moments
/// `E[e_j e_k]`.
pub fn expected_phi_from_moments(moments: &[Vec<f64>], i: usize) -> Result<f64> {
    let n = moments.len();
    if n < 2 {
        return Err(Error::domain("need at least two models"));
    }
    if moments.iter().any(|row| row.len() != n) {
        return Err(Error::validation("moment matrix must be square"));
    }
    if i >= n {
        return Err(Error::validation(format!("model index {i} out of range")));
    }
    let mut cross_with_i = 0.0;
    let mut rest_squares = 0.0;
    let mut rest_cross = 0.0;
    for j in (0..n).filter(|&j| j != i) {
        cross_with_i += moments[i][j];
        rest_squares += moments[j][j];
        for k in (j + 1..n).filter(|&k| k != i) {
            rest_cross += moments[j][k];
        }
    }
    Ok(combine_terms(
        n,
        moments[i][i],
        cross_with_i,
        rest_squares,
        rest_cross,
    ))
}

pub fn expected_phi(model: &GaussianErrorModel, i: usize) -> Result<f64> {
    expected_phi_from_moments(&model.moments(), i)
}

/// Residual of the ambiguity-decomposition form of `φ_i` for a weighted
/// ensemble.
///
/// The leave-`i`-out ensemble renormalizes the remaining weights by
/// `1 − w_i`, which contributes `w_i/(1−w_i)·Σ_{j≠i} w_j e_j²` on top of the
/// own-error term `−w_i e_i²` and the difference of the ambiguity terms.
pub fn ambiguity_check(errors: &ErrorVector, weights: &[f64], i: usize) -> Result<f64> {
    errors.check_index(i)?;
    let e = errors.as_slice();
    let n = e.len();
    if weights.len() != n {
        return Err(Error::validation(format!(
            "{} weights for {n} models",
            weights.len()
        )));
    }
    if weights.iter().any(|w| !(w.is_finite() && *w >= 0.0)) {
        return Err(Error::validation("weights must be nonnegative and finite"));
    }
    let total: f64 = weights.iter().sum();
    if (total - 1.0).abs() > WEIGHT_SUM_TOLERANCE {
        return Err(Error::validation(format!("weights sum to {total}, not 1")));
    }
    let wi = weights[i];
    if wi >= 1.0 {
        return Err(Error::validation(
            "the left-out model carries all the weight; the remaining ensemble is empty",
        ));
    }

    let rest = 1.0 - wi;
    let ens: f64 = e.iter().zip(weights).map(|(e, w)| w * e).sum();
    let ens_without: f64 = (0..n)
        .filter(|&j| j != i)
        .map(|j| weights[j] * e[j])
        .sum::<f64>()
        / rest;
    let phi = -ens * ens + ens_without * ens_without;

    let ambiguity: f64 = e
        .iter()
        .zip(weights)
        .map(|(e, w)| w * (e - ens).powi(2))
        .sum();
    let ambiguity_without: f64 = (0..n)
        .filter(|&j| j != i)
        .map(|j| weights[j] / rest * (e[j] - ens_without).powi(2))
        .sum();
    let renormalization: f64 = wi / rest
        * (0..n)
            .filter(|&j| j != i)
            .map(|j| weights[j] * e[j] * e[j])
            .sum::<f64>();
    let decomposed = -wi * e[i] * e[i] + renormalization + ambiguity - ambiguity_without;
    Ok(phi - decomposed)
}

/// Worst residuals over a randomized run of both identities.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct IdentityReport {
    pub instances: usize,
    pub seed: u64,
    /// `|direct − decomposed| / max(1, |direct|)`.
    pub max_decomposition_residual: f64,
    pub max_ambiguity_residual: f64,
    pub failures: Vec<IdentityFailure>,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct IdentityFailure {
    pub instance: usize,
    pub check: &'static str,
    pub model: usize,
    pub residual: f64,
    pub errors: Vec<f64>,
}

impl IdentityReport {
    pub fn passed(&self) -> bool {
        self.failures.is_empty()
    }
}

/// Runs both identities on `instances` random error vectors with
/// n ∈ [2, 8], standard-normal errors and random normalized weights.
///
/// `inject_fault` perturbs one decomposed value so callers can check that
/// breaches are reported.
pub fn run_identity_suite(
    instances: usize,
    seed: u64,
    tolerance: f64,
    inject_fault: bool,
) -> Result<IdentityReport> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut report = IdentityReport {
        instances,
        seed,
        max_decomposition_residual: 0.0,
        max_ambiguity_residual: 0.0,
        failures: Vec::new(),
    };
    for instance in 0..instances {
        let n = 2 + (rng.next_u64() % 7) as usize;
        let raw = (0..n)
            .map(|_| normal_quantile(open_unit(rng.next_u64())))
            .collect::<Result<Vec<_>>>()?;
        let errors = ErrorVector::new(raw)?;
        let mut weights: Vec<f64> = (0..n).map(|_| open_unit(rng.next_u64())).collect();
        let total: f64 = weights.iter().sum();
        weights.iter_mut().for_each(|w| *w /= total);

        for i in 0..n {
            let direct = phi_direct(&errors, i)?;
            let mut decomposed = phi_decomposed(&errors, i)?;
            if inject_fault && instance == 0 && i == 0 {
                decomposed += 1e-6;
            }
            let residual = (direct - decomposed).abs() / direct.abs().max(1.0);
            report.max_decomposition_residual = report.max_decomposition_residual.max(residual);
            if residual.is_nan() || residual >= tolerance {
                report.failures.push(IdentityFailure {
                    instance,
                    check: "decomposition",
                    model: i,
                    residual,
                    errors: errors.as_slice().to_vec(),
                });
            }

            let ambiguity = ambiguity_check(&errors, &weights, i)?.abs();
            report.max_ambiguity_residual = report.max_ambiguity_residual.max(ambiguity);
            if ambiguity.is_nan() || ambiguity >= tolerance {
                report.failures.push(IdentityFailure {
                    instance,
                    check: "ambiguity",
                    model: i,
                    residual: ambiguity,
                    errors: errors.as_slice().to_vec(),
                });
            }
        }
    }
    Ok(report)
}
