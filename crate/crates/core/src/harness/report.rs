//! Delimited-text tables derived from a results matrix.
//!
//! Everything except `runtime` is a pure function of the cell results, so
//! re-emitting a report from the same run directory gives identical bytes.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

use super::runner::ResultsMatrix;
use super::stats::wilcoxon_signed_rank;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TableFormat {
    #[default]
    Csv,
    Tsv,
}

impl TableFormat {
    pub fn delimiter(self) -> u8 {
        match self {
            TableFormat::Csv => b',',
            TableFormat::Tsv => b'\t',
        }
    }

    pub fn extension(self) -> &'static str {
        match self {
            TableFormat::Csv => "csv",
            TableFormat::Tsv => "tsv",
        }
    }
}

impl std::str::FromStr for TableFormat {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "csv" => Ok(Self::Csv),
            "tsv" => Ok(Self::Tsv),
            _ => Err(Error::Config(format!("unknown table format `{s}`"))),
        }
    }
}

/// A header plus rows of already formatted fields.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Table {
    pub name: &'static str,
    pub header: Vec<&'static str>,
    pub rows: Vec<Vec<String>>,
}

impl Table {
    fn new(name: &'static str, header: &[&'static str]) -> Self {
        Self {
            name,
            header: header.to_vec(),
            rows: Vec::new(),
        }
    }

    pub fn render(&self, format: TableFormat) -> Result<Vec<u8>> {
        let mut w = csv::WriterBuilder::new()
            .delimiter(format.delimiter())
            .from_writer(Vec::new());
        let err = |e: csv::Error| Error::Format {
            path: PathBuf::from(self.name),
            detail: e.to_string(),
        };
        w.write_record(&self.header).map_err(err)?;
        for row in &self.rows {
            w.write_record(row).map_err(err)?;
        }
        w.into_inner().map_err(|e| Error::Format {
            path: PathBuf::from(self.name),
            detail: e.to_string(),
        })
    }

    /// Column index by name.
    pub fn column(&self, name: &str) -> Option<usize> {
        self.header.iter().position(|h| *h == name)
    }
}

fn num(x: f64) -> String {
    // normalise negative zero
    format!("{}", if x == 0.0 { 0.0 } else { x })
}

/// One row per recorded round of every successful cell.
pub fn curves(m: &ResultsMatrix) -> Table {
    let mut t = Table::new(
        "curves",
        &["method", "seed", "round", "test_rmse", "labelled", "unlabelled", "oracle_accesses"],
    );
    for c in m.cells() {
        for r in c.outcome().map_or(&[][..], |o| &o.records) {
            t.rows.push(vec![
                c.method.clone(),
                c.seed.to_string(),
                r.round_index.to_string(),
                num(r.test_rmse),
                r.labelled_size.to_string(),
                r.unlabelled_size.to_string(),
                r.oracle_accesses.to_string(),
            ]);
        }
    }
    t
}

/// Mean and population standard deviation across seeds, per method and round.
pub fn summary(m: &ResultsMatrix) -> Table {
    let mut t = Table::new("summary", &["method", "round", "n", "mean_rmse", "std_rmse", "forward_filled"]);
    for method in &m.plan.methods {
        for round in 0..=m.max_round() {
            if let Some(s) = m.summarize(&method.name, round) {
                t.rows.push(vec![
                    method.name.clone(),
                    round.to_string(),
                    s.n.to_string(),
                    num(s.mean),
                    num(s.std),
                    s.forward_filled.to_string(),
                ]);
            }
        }
    }
    t
}

/// Paired signed-rank tests between every pair of methods at each checkpoint.
///
/// Pairs are matched by seed and only seeds that genuinely reached the round
/// in both methods take part. With fewer than five pairs the test is not
/// run and the p-value is left empty.
pub fn pvalues(m: &ResultsMatrix, checkpoints: &[usize]) -> Table {
    let mut t = Table::new(
        "pvalues",
        &["round", "method_a", "method_b", "n", "mean_a", "mean_b", "w_plus", "p_value", "test", "degenerate"],
    );
    let methods = &m.plan.methods;
    for &round in checkpoints {
        for (i, a) in methods.iter().enumerate() {
            for b in &methods[i + 1..] {
                let va = m.values_at(&a.name, round);
                let vb = m.values_at(&b.name, round);
                let (xs, ys): (Vec<f64>, Vec<f64>) = va
                    .iter()
                    .filter(|x| !x.2)
                    .filter_map(|x| vb.iter().find(|y| y.0 == x.0 && !y.2).map(|y| (x.1, y.1)))
                    .unzip();
                let mean = |v: &[f64]| {
                    if v.is_empty() {
                        String::new()
                    } else {
                        num(v.iter().sum::<f64>() / v.len() as f64)
                    }
                };
                let mut row = vec![
                    round.to_string(),
                    a.name.clone(),
                    b.name.clone(),
                    xs.len().to_string(),
                    mean(&xs),
                    mean(&ys),
                ];
                match wilcoxon_signed_rank(&xs, &ys) {
                    Ok(r) => row.extend([
                        num(r.w_plus),
                        num(r.p_value),
                        format!("{:?}", r.method).to_lowercase(),
                        r.degenerate.to_string(),
                    ]),
                    Err(_) => row.extend([String::new(), String::new(), "insufficient".into(), String::new()]),
                }
                t.rows.push(row);
            }
        }
    }
    t
}

/// Forward-pass counts by phase for every recorded round.
pub fn passes(m: &ResultsMatrix) -> Table {
    let mut t = Table::new(
        "passes",
        &["method", "seed", "round", "scoring", "pseudo", "training", "evaluation"],
    );
    for c in m.cells() {
        for r in c.outcome().map_or(&[][..], |o| &o.records) {
            let p = r.passes;
            t.rows.push(vec![
                c.method.clone(),
                c.seed.to_string(),
                r.round_index.to_string(),
                p.scoring.to_string(),
                p.pseudo.to_string(),
                p.training.to_string(),
                p.evaluation.to_string(),
            ]);
        }
    }
    t
}

/// Min and max wall time per phase across seeds. Not reproducible.
pub fn runtime(m: &ResultsMatrix) -> Table {
    let mut t = Table::new(
        "runtime",
        &["method", "round", "n", "scoring_min_s", "scoring_max_s", "training_min_s", "training_max_s"],
    );
    for method in &m.plan.methods {
        for round in 0..=m.max_round() {
            let times: Vec<_> = m
                .plan
                .seeds
                .iter()
                .filter_map(|&s| m.cell(&method.name, s)?.outcome()?.records.get(round).map(|r| r.times))
                .collect();
            if times.is_empty() {
                continue;
            }
            let range = |f: fn(&crate::ugel::PhaseTimes) -> f64| {
                let lo = times.iter().map(f).fold(f64::INFINITY, f64::min);
                let hi = times.iter().map(f).fold(f64::NEG_INFINITY, f64::max);
                (num(lo), num(hi))
            };
            let (smin, smax) = range(|t| t.scoring);
            let (tmin, tmax) = range(|t| t.training);
            t.rows.push(vec![
                method.name.clone(),
                round.to_string(),
                times.len().to_string(),
                smin,
                smax,
                tmin,
                tmax,
            ]);
        }
    }
    t
}

/// Cells that ended in an error.
pub fn failures(m: &ResultsMatrix) -> Table {
    let mut t = Table::new("failures", &["method", "seed", "error"]);
    for c in m.failures() {
        if let crate::harness::runner::CellStatus::Failed(e) = &c.status {
            t.rows.push(vec![c.method.clone(), c.seed.to_string(), e.clone()]);
        }
    }
    t
}

/// The deterministic tables, in the order they are written.
pub fn tables(m: &ResultsMatrix, checkpoints: &[usize]) -> Vec<Table> {
    vec![curves(m), summary(m), pvalues(m, checkpoints), passes(m), failures(m)]
}

/// Writes every table (plus `runtime`) into `dir` and returns the paths.
pub fn write_report(m: &ResultsMatrix, dir: &Path, checkpoints: &[usize], format: TableFormat) -> Result<Vec<PathBuf>> {
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let mut paths = Vec::new();
    for t in tables(m, checkpoints).into_iter().chain([runtime(m)]) {
        let path = dir.join(format!("{}.{}", t.name, format.extension()));
        std::fs::write(&path, t.render(format)?).map_err(|e| Error::io(&path, e))?;
        paths.push(path);
    }
    Ok(paths)
}
