//! Runs every (method, seed) cell of a plan and collects the results.
//!
//! Each finished cell is written to `cells/<method>__seed<seed>.json` under
//! the output directory as soon as it completes, so an interrupted run can be
//! resumed without redoing finished work.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::mpsc;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::synth::Dataset;
use crate::ugel::{run_ugel, RunOutcome, UgelConfig};

use super::plan::ExperimentPlan;
use super::stats::mean_std;

pub const PLAN_ECHO: &str = "plan.json";
pub const CELL_DIR: &str = "cells";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CellStatus {
    Done(RunOutcome),
    Failed(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CellResult {
    pub method: String,
    pub seed: u64,
    pub config: UgelConfig,
    pub status: CellStatus,
}

impl CellResult {
    pub fn outcome(&self) -> Option<&RunOutcome> {
        match &self.status {
            CellStatus::Done(o) => Some(o),
            CellStatus::Failed(_) => None,
        }
    }

    /// Test RMSE after `round` rounds. Runs that exhausted the pool early
    /// carry their last value forward; the flag reports whether that happened.
    pub fn rmse_at(&self, round: usize) -> Option<(f64, bool)> {
        let o = self.outcome()?;
        if let Some(r) = o.records.get(round) {
            return Some((r.test_rmse, false));
        }
        if o.exhausted {
            o.records.last().map(|r| (r.test_rmse, true))
        } else {
            None
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResultsMatrix {
    pub plan: ExperimentPlan,
    cells: BTreeMap<String, BTreeMap<u64, CellResult>>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub mean: f64,
    pub std: f64,
    pub n: usize,
    /// Seeds whose value was carried forward from an exhausted run.
    pub forward_filled: usize,
}

impl ResultsMatrix {
    pub fn new(plan: ExperimentPlan) -> Self {
        Self {
            plan,
            cells: BTreeMap::new(),
        }
    }

    pub fn insert(&mut self, cell: CellResult) {
        self.cells.entry(cell.method.clone()).or_default().insert(cell.seed, cell);
    }

    pub fn cell(&self, method: &str, seed: u64) -> Option<&CellResult> {
        self.cells.get(method)?.get(&seed)
    }

    /// Cells in plan order: methods as listed, seeds as listed.
    pub fn cells(&self) -> impl Iterator<Item = &CellResult> {
        self.plan.methods.iter().flat_map(move |m| {
            self.plan.seeds.iter().filter_map(move |&s| self.cell(&m.name, s))
        })
    }

    pub fn failures(&self) -> Vec<&CellResult> {
        self.cells().filter(|c| c.outcome().is_none()).collect()
    }

    pub fn is_complete(&self) -> bool {
        self.cells().count() == self.plan.methods.len() * self.plan.seeds.len()
    }

    /// Per-seed RMSE at `round`, in seed order, skipping seeds without a value.
    pub fn values_at(&self, method: &str, round: usize) -> Vec<(u64, f64, bool)> {
        self.plan
            .seeds
            .iter()
            .filter_map(|&s| {
                let (v, filled) = self.cell(method, s)?.rmse_at(round)?;
                Some((s, v, filled))
            })
            .collect()
    }

    pub fn summarize(&self, method: &str, round: usize) -> Option<Summary> {
        let vals = self.values_at(method, round);
        let xs: Vec<f64> = vals.iter().map(|v| v.1).collect();
        let (mean, std) = mean_std(&xs).ok()?;
        Some(Summary {
            mean,
            std,
            n: xs.len(),
            forward_filled: vals.iter().filter(|v| v.2).count(),
        })
    }

    /// Every round index that any method reached.
    pub fn max_round(&self) -> usize {
        self.cells()
            .filter_map(|c| c.outcome())
            .map(|o| o.records.len().saturating_sub(1))
            .max()
            .unwrap_or(0)
    }

    /// Reads a finished (or partial) run directory.
    pub fn load(dir: impl AsRef<Path>) -> Result<Self> {
        let dir = dir.as_ref();
        let plan: ExperimentPlan = read_json(&dir.join(PLAN_ECHO))?;
        let mut matrix = Self::new(plan);
        for m in matrix.plan.methods.clone() {
            for &seed in &matrix.plan.seeds.clone() {
                let path = cell_path(dir, &m.name, seed);
                if path.exists() {
                    matrix.insert(read_json(&path)?);
                }
            }
        }
        Ok(matrix)
    }
}

pub fn cell_path(dir: &Path, method: &str, seed: u64) -> PathBuf {
    dir.join(CELL_DIR).join(format!("{method}__seed{seed}.json"))
}

fn read_json<T: serde::de::DeserializeOwned>(path: &Path) -> Result<T> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    serde_json::from_str(&text).map_err(|e| Error::Format {
        path: path.to_path_buf(),
        detail: e.to_string(),
    })
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let text = serde_json::to_string_pretty(value).expect("results serialise");
    // write then rename so a crash never leaves a half-written cell behind
    let tmp = path.with_extension("json.tmp");
    std::fs::write(&tmp, text).map_err(|e| Error::io(&tmp, e))?;
    std::fs::rename(&tmp, path).map_err(|e| Error::io(path, e))
}

#[derive(Debug, Clone)]
pub struct RunOptions {
    pub workers: usize,
    pub resume: bool,
    /// Print one line per finished cell to stderr.
    pub verbose: bool,
}

impl Default for RunOptions {
    fn default() -> Self {
        Self {
            workers: 1,
            resume: false,
            verbose: false,
        }
    }
}

/// Runs one cell. Splits depend only on the seed, so every method sees the
/// same starting labelled set for a given seed.
pub fn run_cell(dataset: &Dataset, config: &UgelConfig, method: &str, seed: u64) -> CellResult {
    let mut cfg = config.clone();
    cfg.base_seed = seed;
    let status = match dataset.split(cfg.m, seed).and_then(|s| run_ugel(&cfg, s)) {
        Ok(o) => CellStatus::Done(o),
        Err(e) => CellStatus::Failed(e.to_string()),
    };
    CellResult {
        method: method.to_string(),
        seed,
        config: cfg,
        status,
    }
}

/// Runs the plan into `out`. Failed cells are recorded and do not stop the
/// remaining ones; inspect [`ResultsMatrix::failures`] afterwards.
pub fn run_plan(plan: &ExperimentPlan, dataset: &Dataset, out: &Path, opts: &RunOptions) -> Result<ResultsMatrix> {
    plan.validate()?;
    let cells_dir = out.join(CELL_DIR);
    std::fs::create_dir_all(&cells_dir).map_err(|e| Error::io(&cells_dir, e))?;
    let echo = out.join(PLAN_ECHO);
    if opts.resume && echo.exists() {
        let previous: ExperimentPlan = read_json(&echo)?;
        if previous != *plan {
            return Err(Error::Config(format!(
                "{} holds a different plan; refusing to resume",
                echo.display()
            )));
        }
    }
    write_json(&echo, plan)?;

    let mut matrix = ResultsMatrix::new(plan.clone());
    let mut todo = Vec::new();
    for m in &plan.methods {
        for &seed in &plan.seeds {
            let path = cell_path(out, &m.name, seed);
            if opts.resume && path.exists() {
                let cell: CellResult = read_json(&path)?;
                let mut expect = m.config.clone();
                expect.base_seed = seed;
                if cell.outcome().is_some() && cell.config == expect {
                    matrix.insert(cell);
                    continue;
                }
            }
            todo.push((m, seed));
        }
    }

    let next = AtomicUsize::new(0);
    let workers = opts.workers.clamp(1, todo.len().max(1));
    let (tx, rx) = mpsc::channel::<CellResult>();
    let written = std::thread::scope(|scope| -> Result<()> {
        for _ in 0..workers {
            let tx = tx.clone();
            let (todo, next) = (&todo, &next);
            scope.spawn(move || loop {
                let i = next.fetch_add(1, Ordering::Relaxed);
                let Some((m, seed)) = todo.get(i) else { break };
                if tx.send(run_cell(dataset, &m.config, &m.name, *seed)).is_err() {
                    break;
                }
            });
        }
        drop(tx);
        for cell in rx {
            write_json(&cell_path(out, &cell.method, cell.seed), &cell)?;
            if opts.verbose {
                match &cell.status {
                    CellStatus::Done(o) => eprintln!(
                        "{} seed {}: {} rounds, final rmse {:.4}",
                        cell.method,
                        cell.seed,
                        o.records.len() - 1,
                        o.records.last().map_or(f64::NAN, |r| r.test_rmse)
                    ),
                    CellStatus::Failed(e) => eprintln!("{} seed {}: FAILED: {e}", cell.method, cell.seed),
                }
            }
            matrix.insert(cell);
        }
        Ok(())
    });
    written?;
    Ok(matrix)
}
