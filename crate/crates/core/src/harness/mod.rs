//! Method × realization experiment grids and their result files.

pub mod config;
pub mod output;

use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::channel::sample_channels;
use crate::error::{Error, Result};
use crate::fedsim::{train, FederatedData, LogisticRegression, Method, Model};

pub use config::ExperimentConfig;
pub use output::{emit_results, format_float, parse_results_csv, results_csv, ResultRow, TraceLine, CSV_HEADER};

/// Reported in the summary for the comparison scheme this crate does not implement.
pub const EXTERNAL_METHOD: &str = "dc";
pub const EXTERNAL_STATUS: &str = "external — not implemented";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Status {
    Ok,
    Partial,
    Failed,
}

/// Mean, sample standard deviation and median.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Stats {
    pub mean: f64,
    pub std: f64,
    pub median: f64,
}

impl Stats {
    pub fn of(values: &[f64]) -> Option<Stats> {
        if values.is_empty() {
            return None;
        }
        let n = values.len() as f64;
        let mean = values.iter().sum::<f64>() / n;
        let var = if values.len() > 1 {
            values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0)
        } else {
            0.0
        };
        Some(Stats { mean, std: var.sqrt(), median: median(values) })
    }
}

/// Median with the midpoint rule for even counts; NaNs sort last.
pub fn median(values: &[f64]) -> f64 {
    let mut v = values.to_vec();
    v.sort_by(|a, b| a.total_cmp(b));
    let n = v.len();
    match n {
        0 => f64::NAN,
        _ if n % 2 == 1 => v[n / 2],
        _ => 0.5 * (v[n / 2 - 1] + v[n / 2]),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CellError {
    pub realization: usize,
    pub message: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MethodSummary {
    pub method: String,
    pub status: Status,
    pub cells_ok: usize,
    pub cells_failed: usize,
    pub final_accuracy: Option<Stats>,
    pub selected_count: Option<Stats>,
    pub errors: Vec<CellError>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExternalMethod {
    pub method: String,
    pub status: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub master_seed: u64,
    pub users: usize,
    pub realizations: usize,
    pub rounds: usize,
    pub methods: Vec<MethodSummary>,
    pub external: Vec<ExternalMethod>,
}

impl Summary {
    pub fn method(&self, m: Method) -> Option<&MethodSummary> {
        self.methods.iter().find(|s| s.method == m.name())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentResult {
    pub rows: Vec<ResultRow>,
    pub summary: Summary,
    pub traces: Vec<TraceLine>,
}

struct Cell {
    method: Method,
    realization: usize,
    outcome: Result<(Vec<ResultRow>, Vec<TraceLine>)>,
}

fn run_cell<M: Model>(cfg: &ExperimentConfig, model: &M, data: &FederatedData, method: Method, realization: usize) -> Cell {
    let seed = cfg.channel_seed(realization);
    let outcome = sample_channels(seed, cfg.users, &cfg.channel).and_then(|channels| {
        let out = train(model, data, &channels, method, &cfg.train, &cfg.pdd, &cfg.baselines, seed)?;
        let rows = out
            .state
            .trace
            .iter()
            .map(|t| ResultRow {
                method: method.name().to_string(),
                realization,
                round: t.round,
                train_loss: t.train_loss,
                test_loss: t.test_loss,
                test_accuracy: t.test_accuracy,
                selected_count: t.selected_count,
                r_value: t.r_value,
                max_gain: t.max_gain,
            })
            .collect();
        let traces = out
            .plans
            .iter()
            .enumerate()
            .flat_map(|(k, p)| {
                p.trace.iter().map(move |record| TraceLine {
                    method: method.name().to_string(),
                    realization,
                    plan: k,
                    record: *record,
                })
            })
            .collect();
        Ok((rows, traces))
    });
    Cell { method, realization, outcome }
}

/// Runs every method × realization cell on up to `workers` threads
/// (`None`: all cores). A failing cell is recorded in the summary and the
/// remaining cells still run. Output order does not depend on scheduling.
pub fn run_experiment(cfg: &ExperimentConfig, workers: Option<usize>) -> Result<ExperimentResult> {
    cfg.validate()?;
    let data = cfg.dataset.load(cfg.users, cfg.dataset_seed())?;
    let model = LogisticRegression::new(data.classes, data.features, cfg.train.l2);
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(workers.unwrap_or(0))
        .build()
        .map_err(|e| Error::Config(format!("cannot start worker pool: {e}")))?;
    let grid: Vec<(Method, usize)> = cfg
        .methods
        .iter()
        .flat_map(|&m| (0..cfg.realizations).map(move |r| (m, r)))
        .collect();
    let cells: Vec<Cell> = pool.install(|| {
        grid.par_iter()
            .map(|&(m, r)| run_cell(cfg, &model, &data, m, r))
            .collect()
    });
    Ok(assemble(cfg, cells))
}

fn assemble(cfg: &ExperimentConfig, cells: Vec<Cell>) -> ExperimentResult {
    let mut rows = Vec::new();
    let mut traces = Vec::new();
    let mut methods = Vec::new();
    for &m in &cfg.methods {
        let mut acc = Vec::new();
        let mut sel = Vec::new();
        let mut errors = Vec::new();
        for cell in cells.iter().filter(|c| c.method == m) {
            match &cell.outcome {
                Ok((r, t)) => {
                    if let Some(last) = r.last() {
                        acc.push(last.test_accuracy);
                        sel.push(last.selected_count as f64);
                    }
                    rows.extend(r.iter().cloned());
                    traces.extend(t.iter().cloned());
                }
                Err(e) => errors.push(CellError { realization: cell.realization, message: e.to_string() }),
            }
        }
        let status = match (errors.len(), acc.len()) {
            (0, _) => Status::Ok,
            (_, 0) => Status::Failed,
            _ => Status::Partial,
        };
        errors.sort_by_key(|e| e.realization);
        methods.push(MethodSummary {
            method: m.name().to_string(),
            status,
            cells_ok: cfg.realizations - errors.len(),
            cells_failed: errors.len(),
            final_accuracy: Stats::of(&acc),
            selected_count: Stats::of(&sel),
            errors,
        });
    }
    rows.sort_by(|a, b| (&a.method, a.realization, a.round).cmp(&(&b.method, b.realization, b.round)));
    traces.sort_by(|a, b| {
        (&a.method, a.realization, a.plan, a.record.outer_iter, a.record.inner_iter)
            .cmp(&(&b.method, b.realization, b.plan, b.record.outer_iter, b.record.inner_iter))
    });
    ExperimentResult {
        rows,
        summary: Summary {
            master_seed: cfg.master_seed,
            users: cfg.users,
            realizations: cfg.realizations,
            rounds: cfg.train.rounds,
            methods,
            external: vec![ExternalMethod { method: EXTERNAL_METHOD.into(), status: EXTERNAL_STATUS.into() }],
        },
        traces,
    }
}

/// Runs the experiment and writes its files into `dir`.
pub fn run_to_dir(cfg: &ExperimentConfig, dir: &Path, workers: Option<usize>) -> Result<ExperimentResult> {
    let result = run_experiment(cfg, workers)?;
    emit_results(dir, &result.rows, &result.summary, &result.traces)?;
    Ok(result)
}
