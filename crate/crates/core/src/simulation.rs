//! Monte-Carlo sweeps of LOMO importance for three forecasters against a
//! normal truth.
//!
//! * `a-point`: point forecasts `(−1, −0.5, b)`, scored with −SPE.
//! * `a-prob`: `N(−1,1)`, `N(−0.5,1)`, `N(b,1)` as quantile forecasts, −WIS.
//! * `b`: `N(0,0.5²)`, `N(0,0.7²)`, `N(0,s²)`, −WIS.
//!
//! Truth draws come from a counter-based ChaCha stream: the uniform for a
//! replicate sits at a fixed position of the stream, so results do not
//! depend on evaluation order or thread count.

use std::fmt;
use std::io::Write;
use std::str::FromStr;

use rand_chacha::ChaCha8Rng;
use rand_core::{RngCore, SeedableRng};
use rayon::prelude::*;
use serde::Serialize;

use crate::dataio::format_float;
use crate::ensemble::ForecastPool;
use crate::error::{Error, Result};
use crate::importance::LomoEnsembles;
use crate::normal::normal_quantile;
use crate::scoring::{Metric, PointForecast, QuantileForecast, QuantileLevels};

pub const DEFAULT_SEED: u64 = 42;
pub const DEFAULT_REPLICATES: usize = 1000;

/// Maps 64 random bits to the open interval (0, 1) using the top 52 bits,
/// offset by half a step so neither end is reachable.
#[inline]
pub(crate) fn open_unit(bits: u64) -> f64 {
    ((bits >> 12) as f64 + 0.5) * (1.0 / (1u64 << 52) as f64)
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct NormalSpec {
    mean: f64,
    sd: f64,
}

impl NormalSpec {
    pub fn new(mean: f64, sd: f64) -> Result<Self> {
        if !mean.is_finite() {
            return Err(Error::validation("normal mean must be finite"));
        }
        if !(sd > 0.0 && sd.is_finite()) {
            return Err(Error::validation(format!(
                "normal sd must be positive, got {sd}"
            )));
        }
        Ok(NormalSpec { mean, sd })
    }

    pub fn standard() -> Self {
        NormalSpec { mean: 0.0, sd: 1.0 }
    }

    pub fn mean(&self) -> f64 {
        self.mean
    }

    pub fn sd(&self) -> f64 {
        self.sd
    }
}

/// `mean + sd·Φ⁻¹(τ)` at every level.
pub fn normal_quantile_forecast(
    spec: NormalSpec,
    levels: &QuantileLevels,
) -> Result<QuantileForecast> {
    let values = levels
        .as_slice()
        .iter()
        .map(|&tau| normal_quantile(tau).map(|z| spec.mean + spec.sd * z))
        .collect::<Result<Vec<_>>>()?;
    QuantileForecast::new(levels.clone(), values)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize)]
pub enum Scenario {
    #[serde(rename = "a_point")]
    APoint,
    #[serde(rename = "a_prob")]
    AProb,
    #[serde(rename = "b_dispersion")]
    BDispersion,
}

impl Scenario {
    pub fn name(self) -> &'static str {
        match self {
            Scenario::APoint => "a_point",
            Scenario::AProb => "a_prob",
            Scenario::BDispersion => "b_dispersion",
        }
    }

    pub fn metric(self) -> Metric {
        match self {
            Scenario::APoint => Metric::Spe,
            Scenario::AProb | Scenario::BDispersion => Metric::Wis,
        }
    }

    pub fn default_grid(self) -> Grid {
        match self {
            Scenario::APoint | Scenario::AProb => Grid {
                start: -1.0,
                end: 3.0,
                step: 0.05,
            },
            Scenario::BDispersion => Grid {
                start: 0.1,
                end: 3.0,
                step: 0.05,
            },
        }
    }

    /// Forecaster 3's distribution (or point) at grid value `x`; the first
    /// two are fixed.
    fn normals(self, x: f64) -> Result<[NormalSpec; 3]> {
        Ok(match self {
            Scenario::APoint | Scenario::AProb => [
                NormalSpec::new(-1.0, 1.0)?,
                NormalSpec::new(-0.5, 1.0)?,
                NormalSpec::new(x, 1.0)?,
            ],
            Scenario::BDispersion => [
                NormalSpec::new(0.0, 0.5)?,
                NormalSpec::new(0.0, 0.7)?,
                NormalSpec::new(0.0, x)?,
            ],
        })
    }

    /// The three forecasters at grid value `x` as a pool.
    pub fn pool(self, x: f64, levels: &QuantileLevels) -> Result<ForecastPool> {
        let normals = self.normals(x)?;
        match self {
            Scenario::APoint => ForecastPool::point(
                normals
                    .iter()
                    .enumerate()
                    .map(|(k, spec)| Ok((forecaster_id(k), PointForecast::new(spec.mean)?)))
                    .collect::<Result<_>>()?,
            ),
            Scenario::AProb | Scenario::BDispersion => ForecastPool::quantile(
                normals
                    .iter()
                    .enumerate()
                    .map(|(k, spec)| {
                        Ok((forecaster_id(k), normal_quantile_forecast(*spec, levels)?))
                    })
                    .collect::<Result<_>>()?,
            ),
        }
    }
}

fn forecaster_id(k: usize) -> String {
    format!("forecaster_{}", k + 1)
}

impl fmt::Display for Scenario {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Scenario {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "a-point" | "a_point" => Ok(Scenario::APoint),
            "a-prob" | "a_prob" => Ok(Scenario::AProb),
            "b" | "b-dispersion" | "b_dispersion" => Ok(Scenario::BDispersion),
            other => Err(Error::validation(format!(
                "unknown scenario '{other}' (expected a-point, a-prob or b)"
            ))),
        }
    }
}

/// Inclusive arithmetic grid.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct Grid {
    pub start: f64,
    pub end: f64,
    pub step: f64,
}

impl Grid {
    pub fn new(start: f64, end: f64, step: f64) -> Result<Self> {
        if !(start.is_finite() && end.is_finite() && step.is_finite()) {
            return Err(Error::validation("grid bounds must be finite"));
        }
        if step <= 0.0 {
            return Err(Error::validation(format!(
                "grid step must be positive, got {step}"
            )));
        }
        if end < start {
            return Err(Error::validation(format!(
                "grid end {end} is below start {start}"
            )));
        }
        Ok(Grid { start, end, step })
    }

    pub fn len(&self) -> usize {
        ((self.end - self.start) / self.step + 1e-9).floor() as usize + 1
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    /// `start + i·step`, rounded to 12 decimals so grid values print cleanly.
    pub fn values(&self) -> Vec<f64> {
        (0..self.len())
            .map(|i| ((self.start + i as f64 * self.step) * 1e12).round() / 1e12)
            .collect()
    }
}

/// Whether every grid point sees the same truth draws.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum TruthDraws {
    /// Common random numbers: replicate `r` uses the same truth everywhere.
    #[default]
    Shared,
    /// A separate stream per grid point.
    PerGridPoint,
}

#[derive(Clone, Debug)]
pub struct SimulationSpec {
    pub scenario: Scenario,
    pub grid: Grid,
    pub replicates: usize,
    pub truth: NormalSpec,
    pub levels: QuantileLevels,
    pub seed: u64,
    pub draws: TruthDraws,
}

impl SimulationSpec {
    pub fn new(scenario: Scenario) -> Self {
        SimulationSpec {
            scenario,
            grid: scenario.default_grid(),
            replicates: DEFAULT_REPLICATES,
            truth: NormalSpec::standard(),
            levels: QuantileLevels::canonical(),
            seed: DEFAULT_SEED,
            draws: TruthDraws::Shared,
        }
    }

    fn validate(&self) -> Result<()> {
        Grid::new(self.grid.start, self.grid.end, self.grid.step)?;
        if self.replicates == 0 {
            return Err(Error::validation("need at least one replicate"));
        }
        if self.scenario == Scenario::BDispersion && self.grid.start <= 0.0 {
            return Err(Error::validation("dispersion grid must stay above zero"));
        }
        Ok(())
    }

    /// Truth value for replicate `rep` at grid point `grid_index`.
    pub fn truth_draw(&self, grid_index: usize, rep: usize) -> Result<f64> {
        let stream = match self.draws {
            TruthDraws::Shared => 0,
            TruthDraws::PerGridPoint => grid_index as u64 + 1,
        };
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        rng.set_stream(stream);
        rng.set_word_pos(rep as u128 * 2);
        let z = normal_quantile(open_unit(rng.next_u64()))?;
        Ok(self.truth.mean + self.truth.sd * z)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct SweepResult {
    pub scenario: Scenario,
    pub grid_values: Vec<f64>,
    pub forecasters: Vec<String>,
    /// `means[forecaster][grid point]`.
    pub means: Vec<Vec<f64>>,
    /// Standard error of each mean.
    pub std_errors: Vec<Vec<f64>>,
    pub replicates: usize,
    pub seed: u64,
}

impl SweepResult {
    /// Index of the forecaster with the largest mean at grid point `g`.
    pub fn leader(&self, g: usize) -> usize {
        (0..self.forecasters.len())
            .max_by(|&a, &b| {
                self.means[a][g]
                    .total_cmp(&self.means[b][g])
                    .then(b.cmp(&a))
            })
            .unwrap_or(0)
    }

    /// Long-format CSV, grid-major.
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        let io = |e: csv::Error| Error::Csv {
            path: "<sweep>".into(),
            source: e,
        };
        w.write_record([
            "scenario",
            "grid_value",
            "forecaster",
            "mean_importance",
            "replicates",
            "seed",
        ])
        .map_err(io)?;
        for (g, x) in self.grid_values.iter().enumerate() {
            for (f, name) in self.forecasters.iter().enumerate() {
                w.write_record([
                    self.scenario.name().to_string(),
                    x.to_string(),
                    name.clone(),
                    format_float(Some(self.means[f][g])),
                    self.replicates.to_string(),
                    self.seed.to_string(),
                ])
                .map_err(io)?;
            }
        }
        w.flush().map_err(|e| Error::Io {
            path: "<sweep>".into(),
            source: e,
        })
    }
}

/// Mean LOMO importance of each forecaster at every grid point.
pub fn run_sweep(spec: &SimulationSpec) -> Result<SweepResult> {
    spec.validate()?;
    let grid_values = spec.grid.values();
    let metric = spec.scenario.metric();
    let per_point = grid_values
        .par_iter()
        .enumerate()
        .map(|(g, &x)| {
            let pool = spec.scenario.pool(x, &spec.levels)?;
            let ensembles = LomoEnsembles::new(&pool, metric)?;
            let mut samples = vec![Vec::with_capacity(spec.replicates); pool.len()];
            for rep in 0..spec.replicates {
                let y = spec.truth_draw(g, rep)?;
                for (column, phi) in samples.iter_mut().zip(ensembles.importance(y)) {
                    column.push(phi);
                }
            }
            Ok(samples.iter().map(|s| mean_and_se(s)).collect::<Vec<_>>())
        })
        .collect::<Result<Vec<_>>>()?;

    let forecasters: Vec<String> = (0..3).map(forecaster_id).collect();
    let means = (0..3)
        .map(|f| per_point.iter().map(|p| p[f].0).collect())
        .collect();
    let std_errors = (0..3)
        .map(|f| per_point.iter().map(|p| p[f].1).collect())
        .collect();
    Ok(SweepResult {
        scenario: spec.scenario,
        grid_values,
        forecasters,
        means,
        std_errors,
        replicates: spec.replicates,
        seed: spec.seed,
    })
}

fn mean_and_se(samples: &[f64]) -> (f64, f64) {
    let n = samples.len() as f64;
    let mean = samples.iter().sum::<f64>() / n;
    if samples.len() < 2 {
        return (mean, f64::NAN);
    }
    let var = samples.iter().map(|s| (s - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, (var / n).sqrt())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn open_unit_bounds() {
        assert!(open_unit(0) > 0.0);
        assert!(open_unit(u64::MAX) < 1.0);
        assert_eq!(open_unit(1u64 << 63), 0.5 + 0.5 / (1u64 << 52) as f64);
    }

    #[test]
    fn normal_forecast_examples() {
        let levels = QuantileLevels::canonical();
        let f = normal_quantile_forecast(NormalSpec::standard(), &levels).unwrap();
        assert_eq!(f.median(), Some(0.0));
        let f = normal_quantile_forecast(NormalSpec::new(1.3, 1.0).unwrap(), &levels).unwrap();
        assert_eq!(f.median(), Some(1.3));
        let f = normal_quantile_forecast(NormalSpec::new(0.0, 2.0).unwrap(), &levels).unwrap();
        assert!((f.value_at(0.975).unwrap() - 3.919_927_969_080_108).abs() < 1e-9);
        assert!(NormalSpec::new(0.0, 0.0).is_err());
    }

    #[test]
    fn grid_sizes() {
        assert_eq!(Scenario::APoint.default_grid().len(), 81);
        assert_eq!(Scenario::BDispersion.default_grid().len(), 59);
        let values = Scenario::APoint.default_grid().values();
        assert_eq!(values[0], -1.0);
        assert_eq!(values[50], 1.5);
        assert_eq!(values[80], 3.0);
        let b = Scenario::BDispersion.default_grid().values();
        assert_eq!(b[34], 1.8);
        assert_eq!(*b.last().unwrap(), 3.0);
        assert!(Grid::new(0.0, 1.0, 0.0).is_err());
        assert!(Grid::new(1.0, 0.0, 0.1).is_err());
    }

    #[test]
    fn unbiased_median_at_vertex() {
        let pool = Scenario::AProb
            .pool(1.5, &QuantileLevels::canonical())
            .unwrap();
        let column = pool.median_column().unwrap();
        let everyone = [0, 1, 2];
        let ens = pool
            .combine_indices(&everyone, &crate::ensemble::MeanCombiner)
            .unwrap();
        assert_eq!(ens[column], 0.0);
    }

    #[test]
    fn sweep_is_deterministic_and_thread_independent() {
        let mut spec = SimulationSpec::new(Scenario::AProb);
        spec.grid = Grid::new(0.0, 1.0, 0.25).unwrap();
        spec.replicates = 50;
        let a = run_sweep(&spec).unwrap();
        let single = rayon::ThreadPoolBuilder::new()
            .num_threads(1)
            .build()
            .unwrap();
        let b = single.install(|| run_sweep(&spec)).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.means[0].len(), 5);
    }

    #[test]
    fn shared_draws_match_across_grid_points() {
        let spec = SimulationSpec::new(Scenario::APoint);
        assert_eq!(
            spec.truth_draw(0, 7).unwrap(),
            spec.truth_draw(40, 7).unwrap()
        );
        let mut independent = spec.clone();
        independent.draws = TruthDraws::PerGridPoint;
        assert_ne!(
            independent.truth_draw(0, 7).unwrap(),
            independent.truth_draw(40, 7).unwrap()
        );
    }

    #[test]
    fn truth_draws_look_standard_normal() {
        let spec = SimulationSpec::new(Scenario::APoint);
        let draws: Vec<f64> = (0..20_000)
            .map(|r| spec.truth_draw(0, r).unwrap())
            .collect();
        let (mean, se) = mean_and_se(&draws);
        assert!(mean.abs() < 4.0 * se);
        let var = draws.iter().map(|d| d * d).sum::<f64>() / draws.len() as f64;
        assert!((var - 1.0).abs() < 0.05);
    }

    #[test]
    fn csv_shape() {
        let mut spec = SimulationSpec::new(Scenario::BDispersion);
        spec.replicates = 2;
        let result = run_sweep(&spec).unwrap();
        let mut buf = Vec::new();
        result.write_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert_eq!(text.lines().count(), 1 + 59 * 3);
        assert!(
            text.starts_with("scenario,grid_value,forecaster,mean_importance,replicates,seed\n")
        );
        assert!(text.contains("b_dispersion,1.8,forecaster_3,"));
    }
}
