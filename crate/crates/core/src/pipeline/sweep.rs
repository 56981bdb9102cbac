use std::fmt;
use std::str::FromStr;

use serde::Serialize;

use super::{Pipeline, PipelineError, RunConfig};
use crate::gnn::ExperimentReport;
use crate::graph::EdgeCap;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum SweepAxis {
    K,
    Oef,
}

impl FromStr for SweepAxis {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "k" => Ok(Self::K),
            "oef" => Ok(Self::Oef),
            _ => Err(format!("unknown sweep axis {s:?}; expected k or oef")),
        }
    }
}

impl fmt::Display for SweepAxis {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Self::K => "k",
            Self::Oef => "oef",
        })
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct SweepRow {
    pub value: String,
    pub run_dir: std::path::PathBuf,
    pub messages: usize,
    pub report: ExperimentReport,
}

#[derive(Debug, Clone, Serialize)]
pub struct SweepResult {
    pub axis: SweepAxis,
    pub rows: Vec<SweepRow>,
    /// Backend dispatches across all cells.
    pub dispatches: u64,
}

impl SweepResult {
    pub fn render(&self) -> String {
        let head = self.axis.to_string();
        let w = self.rows.iter().map(|r| r.value.len()).chain([head.len()]).max().unwrap_or(1);
        let mut out = format!("{head:<w$}  {:>8}  Accuracy (%)\n", "messages");
        out.push_str(&format!("{}  {}  {}\n", "-".repeat(w), "-".repeat(8), "-".repeat(14)));
        for r in &self.rows {
            out.push_str(&format!("{:<w$}  {:>8}  {}\n", r.value, r.messages, r.report.cell()));
        }
        out
    }
}

fn apply(config: &RunConfig, axis: SweepAxis, value: &str) -> Result<RunConfig, PipelineError> {
    let mut c = config.clone();
    match axis {
        SweepAxis::K => {
            c.k = value
                .parse::<EdgeCap>()
                .map_err(|e| PipelineError::config("k", &e.to_string()))?
        }
        SweepAxis::Oef => {
            c.oef = match value {
                "on" | "true" => true,
                "off" | "false" => false,
                _ => return Err(PipelineError::config("oef", &format!("expected on/off, got {value:?}"))),
            }
        }
    }
    c.validate()?;
    Ok(c)
}

/// One full run per value. Cells share the configured response caches, so
/// requests common to several cells are dispatched once.
pub fn sweep(config: &RunConfig, axis: SweepAxis, values: &[String]) -> Result<SweepResult, PipelineError> {
    if values.is_empty() {
        return Err(PipelineError::config("values", "sweep needs at least one value"));
    }
    let configs = values.iter().map(|v| apply(config, axis, v)).collect::<Result<Vec<_>, _>>()?;
    let mut rows = Vec::new();
    let mut dispatches = 0;
    for (value, cfg) in values.iter().zip(configs) {
        let mut p = Pipeline::open(cfg, None)?;
        p.run_all()?;
        dispatches += p.dispatch_count();
        rows.push(SweepRow {
            value: value.clone(),
            run_dir: p.run_dir().to_owned(),
            messages: p.messages()?.len(),
            report: p.report()?,
        });
    }
    Ok(SweepResult { axis, rows, dispatches })
}
