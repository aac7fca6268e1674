use std::fmt;
use std::fs::File;
use std::io::{self, BufWriter, Read, Write};
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// 17 significant digits, enough to round-trip any `f64`; `NA` if missing.
pub fn format_float(value: Option<f64>) -> String {
    match value {
        Some(v) => format!("{v:.16e}"),
        None => "NA".to_string(),
    }
}

fn parse_float(s: &str) -> std::result::Result<Option<f64>, String> {
    if s == "NA" {
        return Ok(None);
    }
    s.parse()
        .map(Some)
        .map_err(|_| format!("invalid number '{s}'"))
}

/// A file path, or `-` for standard output.
#[derive(Clone, Debug, PartialEq, Eq)]
pub enum OutputTarget {
    Stdout,
    File(PathBuf),
}

impl OutputTarget {
    pub fn from_arg(arg: &Path) -> Self {
        if arg.as_os_str() == "-" {
            OutputTarget::Stdout
        } else {
            OutputTarget::File(arg.to_path_buf())
        }
    }

    /// Same target with `suffix` inserted before the extension; standard
    /// output stays standard output.
    pub fn with_suffix(&self, suffix: &str) -> Self {
        match self {
            OutputTarget::Stdout => OutputTarget::Stdout,
            OutputTarget::File(path) => {
                let stem = path
                    .file_stem()
                    .map(|s| s.to_string_lossy().into_owned())
                    .unwrap_or_default();
                let name = match path.extension() {
                    Some(ext) => format!("{stem}_{suffix}.{}", ext.to_string_lossy()),
                    None => format!("{stem}_{suffix}"),
                };
                OutputTarget::File(path.with_file_name(name))
            }
        }
    }

    fn label(&self) -> PathBuf {
        match self {
            OutputTarget::Stdout => PathBuf::from("<stdout>"),
            OutputTarget::File(p) => p.clone(),
        }
    }

    fn io_error(&self, source: io::Error) -> Error {
        Error::Io {
            path: self.label(),
            source,
        }
    }

    /// Runs `body` against the opened target and flushes it.
    fn write_with(&self, body: impl FnOnce(&mut dyn Write) -> io::Result<()>) -> Result<()> {
        match self {
            OutputTarget::Stdout => {
                let stdout = io::stdout();
                let mut lock = stdout.lock();
                body(&mut lock)
                    .and_then(|_| lock.flush())
                    .map_err(|e| self.io_error(e))
            }
            OutputTarget::File(path) => {
                let file = File::create(path).map_err(|e| self.io_error(e))?;
                let mut w = BufWriter::new(file);
                body(&mut w)
                    .and_then(|_| w.flush())
                    .map_err(|e| self.io_error(e))
            }
        }
    }
}

impl fmt::Display for OutputTarget {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.label().display())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum OutputFormat {
    Csv,
    Json,
}

impl FromStr for OutputFormat {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "csv" => Ok(OutputFormat::Csv),
            "json" => Ok(OutputFormat::Json),
            other => Err(Error::validation(format!("unknown format '{other}'"))),
        }
    }
}

/// Writes `# ` comment lines, a header and rows of preformatted fields.
pub fn write_csv_rows(
    target: &OutputTarget,
    comments: &[String],
    header: &[&str],
    rows: &[Vec<String>],
) -> Result<()> {
    target.write_with(|out| {
        for line in comments {
            writeln!(out, "# {line}")?;
        }
        let mut w = csv::Writer::from_writer(out);
        w.write_record(header)?;
        for row in rows {
            w.write_record(row)?;
        }
        w.flush()
    })
}

pub fn write_json<T: Serialize>(target: &OutputTarget, value: &T) -> Result<()> {
    let text = serde_json::to_string_pretty(value)?;
    target.write_with(|out| writeln!(out, "{text}"))
}

/// JSON counterpart of a commented CSV.
#[derive(Serialize)]
struct Document<'a, T> {
    notes: &'a [String],
    rows: &'a [T],
}

/// One long-format summary line: a model's value for one metric.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SummaryRow {
    pub model: String,
    pub metric: String,
    pub value: Option<f64>,
    pub n_predictions: usize,
    pub pct_submitted: f64,
}

const SUMMARY_HEADER: [&str; 5] = ["model", "metric", "value", "n_predictions", "pct_submitted"];

/// Rows sorted by (model, metric); no rows gives a header-only file.
pub fn write_summary(
    target: &OutputTarget,
    format: OutputFormat,
    comments: &[String],
    rows: &[SummaryRow],
) -> Result<()> {
    let mut sorted = rows.to_vec();
    sorted.sort_by(|a, b| a.model.cmp(&b.model).then_with(|| a.metric.cmp(&b.metric)));
    match format {
        OutputFormat::Json => write_json(
            target,
            &Document {
                notes: comments,
                rows: &sorted,
            },
        ),
        OutputFormat::Csv => {
            let fields: Vec<Vec<String>> = sorted
                .iter()
                .map(|r| {
                    vec![
                        r.model.clone(),
                        r.metric.clone(),
                        format_float(r.value),
                        r.n_predictions.to_string(),
                        format_float(Some(r.pct_submitted)),
                    ]
                })
                .collect();
            write_csv_rows(target, comments, &SUMMARY_HEADER, &fields)
        }
    }
}

/// Reads a summary CSV written by [`write_summary`], skipping `#` lines.
pub fn read_summary_csv<R: Read>(reader: R, source: &Path) -> Result<Vec<SummaryRow>> {
    let mut csv = csv::ReaderBuilder::new()
        .comment(Some(b'#'))
        .from_reader(reader);
    let mut rows = Vec::new();
    for record in csv.records() {
        let record = record.map_err(|e| Error::Csv {
            path: source.to_path_buf(),
            source: e,
        })?;
        let row = record.position().map_or(0, |p| p.line());
        let bad = |message: String| Error::Parse {
            path: source.to_path_buf(),
            row,
            message,
        };
        let field = |i: usize| record.get(i).unwrap_or("");
        rows.push(SummaryRow {
            model: field(0).to_string(),
            metric: field(1).to_string(),
            value: parse_float(field(2)).map_err(bad)?,
            n_predictions: field(3)
                .parse()
                .map_err(|_| bad(format!("invalid count '{}'", field(3))))?,
            pct_submitted: parse_float(field(4))
                .map_err(bad)?
                .ok_or_else(|| bad("missing pct_submitted".into()))?,
        });
    }
    Ok(rows)
}

/// Leaderboard line: mean score, both importance measures and their ranks.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct TableRow {
    pub model: String,
    /// Mean positively oriented score.
    pub score: Option<f64>,
    pub phi_lasomo: Option<f64>,
    pub phi_lomo: Option<f64>,
    pub n_predictions: usize,
    pub pct_submitted: f64,
    pub rank_score: Option<usize>,
    pub rank_lasomo: Option<usize>,
    pub rank_lomo: Option<usize>,
}

/// Rows sorted by mean score, best first; missing scores last. The score
/// columns are named after `score_name` (e.g. `neg_wis`).
pub fn write_table(
    target: &OutputTarget,
    format: OutputFormat,
    comments: &[String],
    score_name: &str,
    rows: &[TableRow],
) -> Result<()> {
    let mut sorted = rows.to_vec();
    sorted.sort_by(|a, b| match (a.score, b.score) {
        (Some(x), Some(y)) => y.total_cmp(&x).then_with(|| a.model.cmp(&b.model)),
        (Some(_), None) => std::cmp::Ordering::Less,
        (None, Some(_)) => std::cmp::Ordering::Greater,
        (None, None) => a.model.cmp(&b.model),
    });
    match format {
        OutputFormat::Json => write_json(
            target,
            &Document {
                notes: comments,
                rows: &sorted,
            },
        ),
        OutputFormat::Csv => {
            let rank_column = format!("rank_{score_name}");
            let header = [
                "model",
                score_name,
                "phi_lasomo",
                "phi_lomo",
                "n_predictions",
                "pct_submitted",
                rank_column.as_str(),
                "rank_lasomo",
                "rank_lomo",
            ];
            let rank = |r: Option<usize>| r.map_or("NA".to_string(), |r| r.to_string());
            let fields: Vec<Vec<String>> = sorted
                .iter()
                .map(|r| {
                    vec![
                        r.model.clone(),
                        format_float(r.score),
                        format_float(r.phi_lasomo),
                        format_float(r.phi_lomo),
                        r.n_predictions.to_string(),
                        format_float(Some(r.pct_submitted)),
                        rank(r.rank_score),
                        rank(r.rank_lasomo),
                        rank(r.rank_lomo),
                    ]
                })
                .collect();
            write_csv_rows(target, comments, &header, &fields)
        }
    }
}
