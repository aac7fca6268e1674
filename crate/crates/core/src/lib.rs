//! Model importance for equal-weight forecast ensembles.
//!
//! Scores quantile and point forecasts (WIS, SPE), builds mean ensembles,
//! and measures how much each component model improves the ensemble, either
//! by leaving it out of the full pool (LOMO) or by averaging its marginal
//! contribution over every coalition of the other models (LASOMO).

pub mod cli;
pub mod dataio;
pub mod decomposition;
pub mod ensemble;
pub mod error;
pub mod importance;
pub mod normal;
pub mod scoring;
pub mod simulation;

pub use ensemble::{Combiner, ForecastPool, MeanCombiner, PoolKind};
pub use error::{Error, Result};
pub use importance::{
    compute_importance, lasomo_task, lomo_task, shapley_weight, Algorithm, ImportanceConfig,
    ImportanceResult, SubsetWeightScheme, TaskPool,
};
pub use normal::normal_quantile;
pub use scoring::{
    positive_score, spe, wis, Metric, Observation, PointForecast, QuantileForecast, QuantileLevels,
    Score,
};
