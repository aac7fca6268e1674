use std::collections::BTreeMap;
use std::fs::File;
use std::io::Read;
use std::path::{Path, PathBuf};

use chrono::NaiveDate;

use super::TaskKey;
use crate::error::{Error, Result};
use crate::scoring::{Observation, QuantileForecast, QuantileLevels};

const FORECAST_COLUMNS: [&str; 7] = [
    "model",
    "forecast_date",
    "location",
    "horizon",
    "target_end_date",
    "quantile_level",
    "value",
];
const TRUTH_COLUMNS: [&str; 3] = ["location", "target_end_date", "value"];

/// Hub convention puts the target end date on the Saturday of the target
/// week; anything further than this from `forecast_date + 7·horizon` is
/// reported.
const CALENDAR_TOLERANCE_DAYS: i64 = 6;

#[derive(Clone, Debug)]
pub struct ForecastRecord {
    pub model: String,
    pub task: TaskKey,
    pub forecast: QuantileForecast,
}

/// A (model, task) group whose levels do not match the declared level set.
#[derive(Clone, Debug, PartialEq)]
pub struct InvalidRecord {
    pub model: String,
    pub task: TaskKey,
    pub reason: String,
}

#[derive(Clone, Debug, Default)]
pub struct ForecastSet {
    /// Sorted by (model, task).
    pub records: Vec<ForecastRecord>,
    pub invalid: Vec<InvalidRecord>,
    pub warnings: Vec<String>,
}

pub type TruthTable = BTreeMap<(String, NaiveDate), Observation>;

pub fn read_forecasts(path: &Path, levels: &QuantileLevels) -> Result<ForecastSet> {
    let file = File::open(path).map_err(|source| Error::Io {
        path: path.to_path_buf(),
        source,
    })?;
    read_forecasts_from(file, path, levels)
}

type Group = Vec<(f64, f64, u64)>;

/// `source` names the input in error messages.
pub fn read_forecasts_from<R: Read>(
    reader: R,
    source: &Path,
    levels: &QuantileLevels,
) -> Result<ForecastSet> {
    let mut csv = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .from_reader(reader);
    let columns = header_positions(&mut csv, source, &FORECAST_COLUMNS)?;
    let mut groups: BTreeMap<(String, TaskKey), Group> = BTreeMap::new();
    let mut warnings = Vec::new();
    let mut warned_tasks = std::collections::BTreeSet::new();

    for record in csv.records() {
        let record = record.map_err(|source_err| csv_error(source, source_err))?;
        let row = record.position().map_or(0, |p| p.line());
        let field = |i: usize| record.get(columns[i]).unwrap_or("");
        let parse_err = |message: String| Error::Parse {
            path: source.to_path_buf(),
            row,
            message,
        };

        let model = field(0).to_string();
        if model.is_empty() {
            return Err(parse_err("empty model id".into()));
        }
        let forecast_date = parse_date(field(1)).map_err(&parse_err)?;
        let location = field(2).to_string();
        let horizon: u32 = field(3)
            .parse()
            .map_err(|_| parse_err(format!("invalid horizon '{}'", field(3))))?;
        let target_end_date = parse_date(field(4)).map_err(&parse_err)?;
        let level = parse_number(field(5), "quantile_level").map_err(&parse_err)?;
        if !(level > 0.0 && level < 1.0) {
            return Err(parse_err(format!(
                "quantile level {level} is outside (0, 1)"
            )));
        }
        let value = parse_number(field(6), "value").map_err(&parse_err)?;
        let task = TaskKey::new(forecast_date, location, horizon, target_end_date)
            .map_err(|e| parse_err(e.to_string()))?;

        let offset = task.calendar_offset_days();
        if offset.abs() > CALENDAR_TOLERANCE_DAYS && warned_tasks.insert(task.clone()) {
            warnings.push(format!(
                "task {task}: target end date is {offset} days from forecast date + {} weeks",
                task.horizon
            ));
        }
        groups
            .entry((model, task))
            .or_default()
            .push((level, value, row));
    }

    let mut set = ForecastSet {
        warnings,
        ..ForecastSet::default()
    };
    for ((model, task), mut rows) in groups {
        rows.sort_by(|a, b| a.0.total_cmp(&b.0));
        if let Some(w) = rows.windows(2).find(|w| w[0].0 == w[1].0) {
            return Err(Error::Parse {
                path: source.to_path_buf(),
                row: w[1].2,
                message: format!(
                    "duplicate quantile level {} for model '{model}', task {task}",
                    w[1].0
                ),
            });
        }
        let found: Vec<f64> = rows.iter().map(|r| r.0).collect();
        if found[..] != *levels.as_slice() {
            set.invalid.push(InvalidRecord {
                reason: format!(
                    "has {} quantile levels that do not match the declared {}-level set",
                    found.len(),
                    levels.len()
                ),
                model,
                task,
            });
            continue;
        }
        let values = rows.iter().map(|r| r.1).collect();
        let forecast = QuantileForecast::new(levels.clone(), values)
            .map_err(|e| Error::validation(format!("model '{model}', task {task}: {e}")))?;
        set.records.push(ForecastRecord {
            model,
            task,
            forecast,
        });
    }
    Ok(set)
}

pub fn read_truth(path: &Path) -> Result<TruthTable> {
    let file = File::open(path).map_err(|source| Error::Io {
        path: path.to_path_buf(),
        source,
    })?;
    read_truth_from(file, path)
}

pub fn read_truth_from<R: Read>(reader: R, source: &Path) -> Result<TruthTable> {
    let mut csv = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .from_reader(reader);
    let columns = header_positions(&mut csv, source, &TRUTH_COLUMNS)?;
    let mut table = TruthTable::new();
    for record in csv.records() {
        let record = record.map_err(|e| csv_error(source, e))?;
        let row = record.position().map_or(0, |p| p.line());
        let field = |i: usize| record.get(columns[i]).unwrap_or("");
        let parse_err = |message: String| Error::Parse {
            path: source.to_path_buf(),
            row,
            message,
        };
        let location = field(0).to_string();
        let date = parse_date(field(1)).map_err(&parse_err)?;
        let value = parse_number(field(2), "value").map_err(&parse_err)?;
        let obs = Observation::new(value).map_err(|e| parse_err(e.to_string()))?;
        if table.insert((location.clone(), date), obs).is_some() {
            return Err(parse_err(format!(
                "duplicate truth for location {location}, target end date {date}"
            )));
        }
    }
    Ok(table)
}

fn header_positions<R: Read>(
    csv: &mut csv::Reader<R>,
    source: &Path,
    expected: &[&str],
) -> Result<Vec<usize>> {
    let headers = csv.headers().map_err(|e| csv_error(source, e))?.clone();
    expected
        .iter()
        .map(|name| {
            headers
                .iter()
                .position(|h| h == *name)
                .ok_or_else(|| Error::Parse {
                    path: source.to_path_buf(),
                    row: 1,
                    message: format!("missing column '{name}' (expected {})", expected.join(",")),
                })
        })
        .collect()
}

fn csv_error(source: &Path, err: csv::Error) -> Error {
    Error::Csv {
        path: PathBuf::from(source),
        source: err,
    }
}

fn parse_date(s: &str) -> std::result::Result<NaiveDate, String> {
    NaiveDate::parse_from_str(s, "%Y-%m-%d").map_err(|_| format!("invalid ISO-8601 date '{s}'"))
}

fn parse_number(s: &str, column: &str) -> std::result::Result<f64, String> {
    match s.parse::<f64>() {
        Ok(v) if v.is_finite() => Ok(v),
        _ => Err(format!("invalid {column} '{s}'")),
    }
}
