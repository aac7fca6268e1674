//! `ensimp` command-line front end.

use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use crate::dataio::{
    build_task_pools, format_float, member_score_panel, read_forecasts, read_truth, write_csv_rows,
    write_json, write_summary, write_table, JoinedTasks, NaPolicy, OutputFormat, OutputTarget,
    ScorePanel, SummaryRow, TableRow,
};
use crate::decomposition::run_identity_suite;
use crate::error::{Error, Result};
use crate::importance::{
    compute_importance, mean_over_sizes, rank_models, Algorithm, ImportanceConfig,
    ImportanceResult, SubsetWeightScheme,
};
use crate::scoring::{Metric, QuantileLevels};
use crate::simulation::{run_sweep, Grid, Scenario, SimulationSpec, TruthDraws};

const MEDIAN_NOTE: &str =
    "metric spe on quantile forecasts scores the 0.5 quantile as the point forecast";

#[derive(Debug, Parser)]
#[command(
    name = "ensimp",
    version,
    about = "Score forecasts and measure each model's importance to an equal-weight ensemble"
)]
pub struct Cli {
    /// Worker threads (default: available parallelism). Outputs do not depend on it.
    #[arg(long, global = true, env = "ENSIMP_WORKERS")]
    pub workers: Option<usize>,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Score each model on each task and summarize per model.
    Score(ScoreArgs),
    /// Per-task and overall model importance, with rankings.
    Importance(ImportanceArgs),
    /// Monte-Carlo importance sweeps for the three-forecaster scenarios.
    Simulate(SimulateArgs),
    /// Randomized check of the squared-error importance identities.
    DecomposeCheck(DecomposeArgs),
    /// Per-model marginal contributions grouped by coalition size.
    SubsetVariance(SubsetVarianceArgs),
}

#[derive(Debug, Args)]
pub struct InputArgs {
    /// Forecast CSV: model,forecast_date,location,horizon,target_end_date,quantile_level,value
    #[arg(long)]
    pub forecasts: PathBuf,
    /// Truth CSV: location,target_end_date,value
    #[arg(long)]
    pub truth: PathBuf,
    /// Declared quantile levels (default: the 23 hub levels).
    #[arg(long, value_delimiter = ',')]
    pub levels: Option<Vec<f64>>,
    #[arg(long, default_value = "wis")]
    pub metric: Metric,
}

#[derive(Debug, Args)]
pub struct OutputArgs {
    /// Output path, or `-` for standard output.
    #[arg(long, short, default_value = "-")]
    pub output: PathBuf,
    #[arg(long, default_value = "csv")]
    pub format: OutputFormat,
}

#[derive(Debug, Args)]
pub struct ScoreArgs {
    #[command(flatten)]
    pub input: InputArgs,
    #[arg(long, default_value = "worst")]
    pub na: NaPolicy,
    #[command(flatten)]
    pub output: OutputArgs,
}

#[derive(Debug, Args)]
pub struct ImportanceArgs {
    #[command(flatten)]
    pub input: InputArgs,
    #[arg(long, default_value = "lasomo")]
    pub algorithm: Algorithm,
    #[arg(long, default_value = "permutation")]
    pub weights: SubsetWeightScheme,
    #[arg(long, default_value = "worst")]
    pub na: NaPolicy,
    #[command(flatten)]
    pub output: OutputArgs,
    /// Also write per-task importance values here.
    #[arg(long)]
    pub per_task: Option<PathBuf>,
    /// Also write a leaderboard with both importance measures here.
    #[arg(long)]
    pub table: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct SimulateArgs {
    /// a-point, a-prob or b.
    #[arg(long)]
    pub scenario: Scenario,
    #[arg(long, allow_hyphen_values = true)]
    pub grid_start: Option<f64>,
    #[arg(long, allow_hyphen_values = true)]
    pub grid_end: Option<f64>,
    #[arg(long)]
    pub grid_step: Option<f64>,
    #[arg(long, default_value_t = crate::simulation::DEFAULT_REPLICATES)]
    pub replicates: usize,
    #[arg(long, default_value_t = crate::simulation::DEFAULT_SEED)]
    pub seed: u64,
    /// Draw truths separately at every grid point instead of sharing them.
    #[arg(long)]
    pub independent_grid_draws: bool,
    #[arg(long, short, default_value = "-")]
    pub output: PathBuf,
}

#[derive(Debug, Args)]
pub struct DecomposeArgs {
    #[arg(long, default_value_t = 1000)]
    pub instances: usize,
    #[arg(long, default_value_t = crate::simulation::DEFAULT_SEED)]
    pub seed: u64,
    #[arg(long, default_value_t = 1e-9)]
    pub tolerance: f64,
    #[arg(long, hide = true)]
    pub inject_fault: bool,
    #[arg(long, short, default_value = "-")]
    pub output: PathBuf,
}

#[derive(Debug, Args)]
pub struct SubsetVarianceArgs {
    #[command(flatten)]
    pub input: InputArgs,
    #[command(flatten)]
    pub output: OutputArgs,
}

/// Parses `std::env::args` and runs; errors go to standard error.
pub fn main() -> ExitCode {
    let cli = Cli::parse();
    match execute(cli) {
        Ok(code) => code,
        Err(err) => {
            eprintln!("error: {err}");
            ExitCode::FAILURE
        }
    }
}

pub fn execute(cli: Cli) -> Result<ExitCode> {
    let mut builder = rayon::ThreadPoolBuilder::new();
    if let Some(n) = cli.workers {
        if n == 0 {
            return Err(Error::validation("--workers must be at least 1"));
        }
        builder = builder.num_threads(n);
    }
    let pool = builder
        .build()
        .map_err(|e| Error::validation(format!("cannot start worker pool: {e}")))?;
    pool.install(|| match cli.command {
        Command::Score(args) => cmd_score(&args),
        Command::Importance(args) => cmd_importance(&args),
        Command::Simulate(args) => cmd_simulate(&args),
        Command::DecomposeCheck(args) => cmd_decompose_check(&args),
        Command::SubsetVariance(args) => cmd_subset_variance(&args),
    })
}

fn levels(input: &InputArgs) -> Result<QuantileLevels> {
    match &input.levels {
        Some(levels) => QuantileLevels::new(levels.clone()),
        None => Ok(QuantileLevels::canonical()),
    }
}

/// Reads and joins the inputs, reporting anything set aside on stderr.
pub fn load_tasks(
    forecasts: &Path,
    truth: &Path,
    levels: &QuantileLevels,
    min_models: usize,
) -> Result<JoinedTasks> {
    let set = read_forecasts(forecasts, levels)?;
    let truth = read_truth(truth)?;
    let joined = build_task_pools(&set, &truth, min_models)?;
    let mut err = std::io::stderr().lock();
    for w in &set.warnings {
        let _ = writeln!(err, "warning: {w}");
    }
    for bad in &set.invalid {
        let _ = writeln!(
            err,
            "invalid: model '{}', task {}: {}",
            bad.model, bad.task, bad.reason
        );
    }
    for ex in &joined.excluded {
        let _ = writeln!(err, "excluded: task {}: {}", ex.task, ex.reason);
    }
    Ok(joined)
}

fn notes(metric: Metric) -> Vec<String> {
    match metric {
        Metric::Spe => vec![MEDIAN_NOTE.to_string()],
        Metric::Wis => Vec::new(),
    }
}

fn pct(count: usize, total: usize) -> f64 {
    if total == 0 {
        0.0
    } else {
        count as f64 / total as f64 * 100.0
    }
}

fn task_fields(task: &crate::dataio::TaskKey) -> [String; 4] {
    [
        task.forecast_date.to_string(),
        task.location.clone(),
        task.horizon.to_string(),
        task.target_end_date.to_string(),
    ]
}

fn cmd_score(args: &ScoreArgs) -> Result<ExitCode> {
    let input = &args.input;
    let joined = load_tasks(&input.forecasts, &input.truth, &levels(input)?, 1)?;
    let raw = member_score_panel(&joined, input.metric)?;
    let filled = raw.apply_na_policy(args.na);
    let means = filled.model_means();
    let counts = raw.present_counts();
    let total = raw.tasks().len();
    let metric_name = input.metric.score_name();
    let target = OutputTarget::from_arg(&args.output.output);

    let mut rows = Vec::new();
    for (m, model) in raw.models().iter().enumerate() {
        for (t, task) in raw.tasks().iter().enumerate() {
            if let Some(v) = raw.cell(m, t) {
                let mut row = vec!["task".to_string(), model.clone()];
                row.extend(task_fields(task));
                row.extend([
                    metric_name.to_string(),
                    format_float(Some(v)),
                    String::new(),
                    String::new(),
                ]);
                rows.push(row);
            }
        }
    }
    for (m, model) in raw.models().iter().enumerate() {
        let mut row = vec!["summary".to_string(), model.clone()];
        row.extend(std::iter::repeat_n(String::new(), 4));
        row.extend([
            metric_name.to_string(),
            format_float(means[m]),
            counts[m].to_string(),
            format_float(Some(pct(counts[m], total))),
        ]);
        rows.push(row);
    }
    let mut comments = notes(input.metric);
    comments.push(format!("na policy {}", args.na));

    match args.output.format {
        OutputFormat::Csv => write_csv_rows(
            &target,
            &comments,
            &[
                "row_type",
                "model",
                "forecast_date",
                "location",
                "horizon",
                "target_end_date",
                "metric",
                "value",
                "n_predictions",
                "pct_submitted",
            ],
            &rows,
        )?,
        OutputFormat::Json => {
            let summary: Vec<SummaryRow> = raw
                .models()
                .iter()
                .enumerate()
                .map(|(m, model)| SummaryRow {
                    model: model.clone(),
                    metric: metric_name.to_string(),
                    value: means[m],
                    n_predictions: counts[m],
                    pct_submitted: pct(counts[m], total),
                })
                .collect();
            write_json(
                &target,
                &serde_json::json!({ "notes": comments, "panel": raw, "summary": summary }),
            )?
        }
    }
    Ok(ExitCode::SUCCESS)
}

fn importance_panel(result: &ImportanceResult) -> Result<ScorePanel> {
    ScorePanel::new(
        result.models.clone(),
        result.tasks.clone(),
        result.per_task.clone(),
    )
}

/// Ranks models with a value; models without one get `None`.
fn ranks(models: &[String], values: &[Option<f64>]) -> Vec<Option<usize>> {
    let present: Vec<(String, f64)> = models
        .iter()
        .zip(values)
        .filter_map(|(m, v)| v.map(|v| (m.clone(), v)))
        .collect();
    let ranked = rank_models(&present);
    models
        .iter()
        .map(|m| ranked.iter().find(|r| &r.model == m).map(|r| r.rank))
        .collect()
}

/// Leaderboard rows: mean score, LASOMO and LOMO importance and ranks,
/// with missing cells handled by `na`.
pub fn leaderboard(
    joined: &JoinedTasks,
    metric: Metric,
    scheme: SubsetWeightScheme,
    na: NaPolicy,
) -> Result<Vec<TableRow>> {
    let scores = member_score_panel(joined, metric)?;
    let config = |algorithm| ImportanceConfig {
        metric,
        algorithm,
        scheme,
        subset_sizes: false,
    };
    let lasomo = compute_importance(&joined.pools, &joined.models, &config(Algorithm::Lasomo))?;
    let lomo = compute_importance(&joined.pools, &joined.models, &config(Algorithm::Lomo))?;
    let score_means = scores.apply_na_policy(na).model_means();
    let lasomo_means = importance_panel(&lasomo)?.apply_na_policy(na).model_means();
    let lomo_means = importance_panel(&lomo)?.apply_na_policy(na).model_means();
    let counts = scores.present_counts();
    let total = scores.tasks().len();
    let models = &joined.models;
    let (rank_score, rank_lasomo, rank_lomo) = (
        ranks(models, &score_means),
        ranks(models, &lasomo_means),
        ranks(models, &lomo_means),
    );
    Ok((0..models.len())
        .map(|m| TableRow {
            model: models[m].clone(),
            score: score_means[m],
            phi_lasomo: lasomo_means[m],
            phi_lomo: lomo_means[m],
            n_predictions: counts[m],
            pct_submitted: pct(counts[m], total),
            rank_score: rank_score[m],
            rank_lasomo: rank_lasomo[m],
            rank_lomo: rank_lomo[m],
        })
        .collect())
}

fn cmd_importance(args: &ImportanceArgs) -> Result<ExitCode> {
    let input = &args.input;
    let metric = input.metric;
    let joined = load_tasks(&input.forecasts, &input.truth, &levels(input)?, 2)?;
    let config = ImportanceConfig {
        metric,
        algorithm: args.algorithm,
        scheme: args.weights,
        subset_sizes: false,
    };
    let result = compute_importance(&joined.pools, &joined.models, &config)?;
    let scores = member_score_panel(&joined, metric)?;
    let importance = importance_panel(&result)?;
    let score_means = scores.apply_na_policy(args.na).model_means();
    let phi_means = importance.apply_na_policy(args.na).model_means();
    let counts = scores.present_counts();
    let total = scores.tasks().len();
    let models = &joined.models;
    let score_ranks = ranks(models, &score_means);
    let phi_ranks = ranks(models, &phi_means);

    let score_name = metric.score_name();
    let phi_name = format!("phi_{}", args.algorithm);
    let mut summary = Vec::new();
    for m in 0..models.len() {
        let row = |metric: String, value: Option<f64>| SummaryRow {
            model: models[m].clone(),
            metric,
            value,
            n_predictions: counts[m],
            pct_submitted: pct(counts[m], total),
        };
        summary.push(row(score_name.to_string(), score_means[m]));
        summary.push(row(phi_name.clone(), phi_means[m]));
        summary.push(row(
            format!("rank_{score_name}"),
            score_ranks[m].map(|r| r as f64),
        ));
        summary.push(row(
            format!("rank_{phi_name}"),
            phi_ranks[m].map(|r| r as f64),
        ));
    }
    let mut comments = notes(metric);
    comments.push(format!(
        "algorithm {}, weights {}, na policy {}",
        args.algorithm, args.weights, args.na
    ));
    let format = args.output.format;
    write_summary(
        &OutputTarget::from_arg(&args.output.output),
        format,
        &comments,
        &summary,
    )?;

    if let Some(path) = &args.per_task {
        let target = OutputTarget::from_arg(path);
        match format {
            OutputFormat::Json => write_json(&target, &result)?,
            OutputFormat::Csv => {
                let mut rows = Vec::new();
                for (m, model) in models.iter().enumerate() {
                    for (t, task) in result.tasks.iter().enumerate() {
                        let mut row = vec![model.clone()];
                        row.extend(task_fields(task));
                        row.push(format_float(result.per_task[m][t]));
                        rows.push(row);
                    }
                }
                write_csv_rows(
                    &target,
                    &comments,
                    &[
                        "model",
                        "forecast_date",
                        "location",
                        "horizon",
                        "target_end_date",
                        phi_name.as_str(),
                    ],
                    &rows,
                )?;
            }
        }
    }
    if let Some(path) = &args.table {
        let rows = leaderboard(&joined, metric, args.weights, args.na)?;
        let mut table_comments = notes(metric);
        table_comments.push(format!("weights {}, na policy {}", args.weights, args.na));
        write_table(
            &OutputTarget::from_arg(path),
            format,
            &table_comments,
            score_name,
            &rows,
        )?;
    }
    Ok(ExitCode::SUCCESS)
}

fn cmd_simulate(args: &SimulateArgs) -> Result<ExitCode> {
    let mut spec = SimulationSpec::new(args.scenario);
    let default = spec.grid;
    spec.grid = Grid::new(
        args.grid_start.unwrap_or(default.start),
        args.grid_end.unwrap_or(default.end),
        args.grid_step.unwrap_or(default.step),
    )?;
    spec.replicates = args.replicates;
    spec.seed = args.seed;
    if args.independent_grid_draws {
        spec.draws = TruthDraws::PerGridPoint;
    }
    let result = run_sweep(&spec)?;
    let mut buf = Vec::new();
    result.write_csv(&mut buf)?;
    let target = OutputTarget::from_arg(&args.output);
    write_bytes(&target, &buf)?;
    Ok(ExitCode::SUCCESS)
}

fn write_bytes(target: &OutputTarget, bytes: &[u8]) -> Result<()> {
    match target {
        OutputTarget::Stdout => {
            let mut out = std::io::stdout().lock();
            out.write_all(bytes)
                .and_then(|_| out.flush())
                .map_err(|source| Error::Io {
                    path: "<stdout>".into(),
                    source,
                })
        }
        OutputTarget::File(path) => std::fs::write(path, bytes).map_err(|source| Error::Io {
            path: path.clone(),
            source,
        }),
    }
}

fn cmd_decompose_check(args: &DecomposeArgs) -> Result<ExitCode> {
    let report = run_identity_suite(args.instances, args.seed, args.tolerance, args.inject_fault)?;
    let text = format!(
        "instances {}\nseed {}\ntolerance {}\nmax_decomposition_residual {}\nmax_ambiguity_residual {}\nfailures {}\n",
        report.instances,
        report.seed,
        format_float(Some(args.tolerance)),
        format_float(Some(report.max_decomposition_residual)),
        format_float(Some(report.max_ambiguity_residual)),
        report.failures.len(),
    );
    write_bytes(&OutputTarget::from_arg(&args.output), text.as_bytes())?;
    if report.passed() {
        return Ok(ExitCode::SUCCESS);
    }
    let mut err = std::io::stderr().lock();
    for f in &report.failures {
        let _ = writeln!(
            err,
            "failed: instance {} check {} model {} residual {} errors {:?}",
            f.instance,
            f.check,
            f.model,
            format_float(Some(f.residual)),
            f.errors
        );
    }
    Ok(ExitCode::FAILURE)
}

fn cmd_subset_variance(args: &SubsetVarianceArgs) -> Result<ExitCode> {
    let input = &args.input;
    let joined = load_tasks(&input.forecasts, &input.truth, &levels(input)?, 2)?;
    let config = ImportanceConfig {
        metric: input.metric,
        algorithm: Algorithm::Lasomo,
        scheme: SubsetWeightScheme::Permutation,
        subset_sizes: true,
    };
    let result = compute_importance(&joined.pools, &joined.models, &config)?;
    let sizes = result
        .by_subset_size
        .as_ref()
        .ok_or_else(|| Error::validation("subset sizes were not collected"))?;
    let target = OutputTarget::from_arg(&args.output.output);
    let comments = notes(input.metric);
    match args.output.format {
        OutputFormat::Json => write_json(
            &target,
            &serde_json::json!({ "notes": comments, "result": result }),
        )?,
        OutputFormat::Csv => {
            let mut rows = Vec::new();
            for (m, model) in result.models.iter().enumerate() {
                for (t, task) in result.tasks.iter().enumerate() {
                    let Some(stats) = &sizes[m][t] else { continue };
                    let over_sizes = mean_over_sizes(stats);
                    for s in stats {
                        let mut row = vec![model.clone()];
                        row.extend(task_fields(task));
                        row.extend([
                            s.size.to_string(),
                            format_float(Some(s.mean)),
                            format_float(Some(s.variance)),
                            s.count.to_string(),
                            format_float(Some(over_sizes)),
                            format_float(result.per_task[m][t]),
                        ]);
                        rows.push(row);
                    }
                }
            }
            write_csv_rows(
                &target,
                &comments,
                &[
                    "model",
                    "forecast_date",
                    "location",
                    "horizon",
                    "target_end_date",
                    "subset_size",
                    "mean",
                    "variance",
                    "count",
                    "mean_over_sizes",
                    "phi_lasomo",
                ],
                &rows,
            )?
        }
    }
    Ok(ExitCode::SUCCESS)
}
