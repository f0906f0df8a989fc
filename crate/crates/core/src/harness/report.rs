//! Report export as aligned text tables, CSV files or JSON.

use std::collections::BTreeMap;
use std::fmt::{self, Write as _};
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::metrics::summarize;
use super::MetricsReport;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ReportFormat {
    TableText,
    Delimited,
    Structured,
}

impl ReportFormat {
    pub const ALL: [ReportFormat; 3] = [ReportFormat::TableText, ReportFormat::Delimited, ReportFormat::Structured];

    pub fn name(self) -> &'static str {
        match self {
            ReportFormat::TableText => "table-text",
            ReportFormat::Delimited => "delimited",
            ReportFormat::Structured => "structured",
        }
    }
}

impl fmt::Display for ReportFormat {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for ReportFormat {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Self::ALL.into_iter().find(|x| x.name() == s).ok_or_else(|| format!("unknown report format {s:?}"))
    }
}

#[derive(Debug, Error)]
pub enum ReportError {
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Csv(#[from] csv::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

/// A named table of pre-formatted cells.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Table {
    pub name: &'static str,
    pub header: Vec<&'static str>,
    pub rows: Vec<Vec<String>>,
}

fn num(x: f64) -> String {
    format!("{x:.6}")
}

/// The report laid out as tables. Similarity statistics are aggregated over
/// scripted testers, not human players.
pub fn report_tables(report: &MetricsReport) -> Vec<Table> {
    let cells = Table {
        name: "cells",
        header: vec!["game", "group", "agent", "repeats", "mean_rate", "union_rate", "found", "seeded", "runs", "mean_length"],
        rows: report
            .cells
            .iter()
            .map(|c| {
                let mean_len =
                    if c.lengths.is_empty() { 0.0 } else { c.lengths.iter().sum::<usize>() as f64 / c.lengths.len() as f64 };
                vec![
                    c.game.clone(),
                    c.group.to_string(),
                    c.agent.name().to_string(),
                    c.repeats.len().to_string(),
                    num(c.mean_rate),
                    num(c.union.rate()),
                    c.union.found.len().to_string(),
                    c.union.seeded.to_string(),
                    c.runs.to_string(),
                    num(mean_len),
                ]
            })
            .collect(),
    };
    let similarity = Table {
        name: "similarity",
        header: vec!["game", "tester", "kappa", "agent", "level", "source_level", "cross_entropy", "kl", "goals"],
        rows: report
            .similarity
            .iter()
            .map(|s| {
                vec![
                    s.game.clone(),
                    s.tester.clone(),
                    s.kappa.to_string(),
                    s.agent.name().to_string(),
                    s.level.to_string(),
                    s.source_level.to_string(),
                    num(s.cross_entropy),
                    num(s.kl),
                    s.goals.to_string(),
                ]
            })
            .collect(),
    };
    let mut groups: BTreeMap<(String, String, &'static str, String), Vec<f64>> = BTreeMap::new();
    for s in &report.similarity {
        groups
            .entry((s.game.clone(), s.tester.clone(), s.agent.name(), s.kappa.to_string()))
            .or_default()
            .push(s.cross_entropy);
    }
    let summary = Table {
        name: "similarity_summary",
        header: vec!["game", "tester", "agent", "kappa", "n", "min", "q1", "median", "q3", "max", "mean"],
        rows: groups
            .into_iter()
            .filter_map(|((game, tester, agent, kappa), xs)| {
                let s = summarize(&xs)?;
                Some(vec![
                    game,
                    tester,
                    agent.to_string(),
                    kappa,
                    s.n.to_string(),
                    num(s.min),
                    num(s.q1),
                    num(s.median),
                    num(s.q3),
                    num(s.max),
                    num(s.mean),
                ])
            })
            .collect(),
    };
    let splits = Table {
        name: "splits",
        header: vec!["game", "tester", "level", "kappa", "goals", "splits"],
        rows: report
            .splits
            .iter()
            .map(|s| {
                vec![
                    s.game.clone(),
                    s.tester.clone(),
                    s.level.to_string(),
                    s.kappa.to_string(),
                    s.goals.to_string(),
                    s.goals.saturating_sub(1).to_string(),
                ]
            })
            .collect(),
    };
    let bugs = Table {
        name: "bugs",
        header: vec!["fault", "constraint", "tick", "detail", "trajectory"],
        rows: report
            .bugs
            .iter()
            .map(|b| vec![b.fault.clone(), b.constraint.clone(), b.tick.to_string(), b.detail.clone(), b.trajectory.clone()])
            .collect(),
    };
    vec![cells, similarity, summary, splits, bugs]
}

fn render_text(tables: &[Table]) -> String {
    let mut out = String::new();
    for (i, t) in tables.iter().enumerate() {
        if i > 0 {
            out.push('\n');
        }
        let _ = writeln!(out, "== {} ==", t.name);
        let mut width: Vec<usize> = t.header.iter().map(|h| h.len()).collect();
        for row in &t.rows {
            for (w, c) in width.iter_mut().zip(row) {
                *w = (*w).max(c.chars().count());
            }
        }
        let line = |cells: Vec<&str>| {
            let mut s = String::new();
            for (j, (c, w)) in cells.iter().zip(&width).enumerate() {
                if j > 0 {
                    s.push_str("  ");
                }
                let _ = write!(s, "{c:<w$}");
            }
            s.trim_end().to_string() + "\n"
        };
        out.push_str(&line(t.header.clone()));
        for row in &t.rows {
            out.push_str(&line(row.iter().map(String::as_str).collect()));
        }
    }
    out
}

fn render_csv(t: &Table) -> Result<String, ReportError> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(&t.header)?;
    for row in &t.rows {
        w.write_record(row)?;
    }
    let bytes = w.into_inner().map_err(|e| e.into_error())?;
    Ok(String::from_utf8(bytes).expect("csv output is utf-8"))
}

/// File names and contents for `format`.
pub fn render_report(report: &MetricsReport, format: ReportFormat) -> Result<Vec<(String, String)>, ReportError> {
    match format {
        ReportFormat::TableText => Ok(vec![("report.txt".into(), render_text(&report_tables(report)))]),
        ReportFormat::Delimited => {
            report_tables(report).iter().map(|t| Ok((format!("{}.csv", t.name), render_csv(t)?))).collect()
        }
        ReportFormat::Structured => Ok(vec![("report.json".into(), serde_json::to_string_pretty(report)? + "\n")]),
    }
}

/// Writes the rendered report into `dir` and returns the paths written.
pub fn export_report(report: &MetricsReport, format: ReportFormat, dir: &Path) -> Result<Vec<PathBuf>, ReportError> {
    std::fs::create_dir_all(dir)?;
    let mut paths = Vec::new();
    for (name, text) in render_report(report, format)? {
        let path = dir.join(name);
        std::fs::write(&path, text)?;
        paths.push(path);
    }
    Ok(paths)
}
