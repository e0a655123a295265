use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// One decoded (instance, algorithm, budget) cell.
#[derive(Clone, PartialEq, Debug, Serialize, Deserialize)]
pub struct ReportEntry {
    pub instance: String,
    pub algorithm: String,
    pub budget: usize,
    /// Output tokens with EOS stripped.
    pub output: Vec<u32>,
    pub score: f64,
    pub log_likelihood: f64,
    pub evaluations: u64,
    pub tokens_decoded: u64,
    pub evaluations_per_token: f64,
}

#[derive(Clone, PartialEq, Debug, Serialize, Deserialize)]
pub struct Aggregate {
    pub algorithm: String,
    pub budget: usize,
    pub instances: usize,
    pub mean_score: f64,
    pub mean_evaluations_per_token: f64,
}

#[derive(Clone, PartialEq, Debug, Default, Serialize, Deserialize)]
pub struct Report {
    pub algorithms: Vec<String>,
    pub budgets: Vec<usize>,
    pub entries: Vec<ReportEntry>,
    pub aggregates: Vec<Aggregate>,
}

impl Report {
    pub fn aggregate(&self, algorithm: &str, budget: usize) -> Option<&Aggregate> {
        self.aggregates
            .iter()
            .find(|a| a.algorithm == algorithm && a.budget == budget)
    }
}

#[derive(Clone, Copy, PartialEq, Eq, Debug)]
pub enum ReportFormat {
    Json,
    Table,
}

/// Mean scores, one row per budget and one column per algorithm.
pub fn render_table(report: &Report) -> String {
    let mut out = String::new();
    let _ = write!(out, "{:>8}", "budget");
    for alg in &report.algorithms {
        let _ = write!(out, " {alg:>10}");
    }
    out.push('\n');
    for &budget in &report.budgets {
        let _ = write!(out, "{budget:>8}");
        for alg in &report.algorithms {
            match report.aggregate(alg, budget) {
                Some(a) => {
                    let _ = write!(out, " {:>10.4}", a.mean_score);
                }
                None => {
                    let _ = write!(out, " {:>10}", "-");
                }
            }
        }
        out.push('\n');
    }
    out
}

pub fn emit_report(report: &Report, path: &Path, format: ReportFormat) -> Result<()> {
    let text = match format {
        ReportFormat::Json => serde_json::to_string_pretty(report)?,
        ReportFormat::Table => render_table(report),
    };
    fs::write(path, text).map_err(|e| Error::io(path, e))
}

pub fn read_report(path: &Path) -> Result<Report> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    Ok(serde_json::from_str(&text)?)
}
