//! Stage runner.
//!
//! A run directory, keyed by the configuration fingerprint, holds one
//! subdirectory per stage with the stage's artifacts and a `manifest.json`
//! recording the digests of its inputs and outputs. A stage whose recorded
//! inputs match the current upstream outputs (and whose outputs are intact
//! and complete) is skipped on rerun.

mod config;
mod runner;
mod sweep;

use std::fmt;
use std::path::PathBuf;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use config::{
    Ablations, DatasetConfig, EmbedderConfig, EmbedderKind, FilterScope, RunConfig, SyntheticSpec,
};
pub use runner::{Manifest, Pipeline, StageReport, StageStatus};
pub use sweep::{sweep, SweepAxis, SweepResult, SweepRow};

use crate::dual::DualError;
use crate::edge_filter::FilterError;
use crate::embed::EmbedError;
use crate::gateway::GatewayError;
use crate::gnn::GnnError;
use crate::graph::GraphError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Stage {
    Ingest,
    Split,
    Sample,
    Filter,
    Kb,
    Corpus,
    Extract,
    Embed,
    Train,
    Eval,
}

impl Stage {
    pub const ALL: [Stage; 10] = [
        Stage::Ingest,
        Stage::Split,
        Stage::Sample,
        Stage::Filter,
        Stage::Kb,
        Stage::Corpus,
        Stage::Extract,
        Stage::Embed,
        Stage::Train,
        Stage::Eval,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Stage::Ingest => "ingest",
            Stage::Split => "split",
            Stage::Sample => "sample",
            Stage::Filter => "filter",
            Stage::Kb => "kb",
            Stage::Corpus => "corpus",
            Stage::Extract => "extract",
            Stage::Embed => "embed",
            Stage::Train => "train",
            Stage::Eval => "eval",
        }
    }
}

impl fmt::Display for Stage {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Stage {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Stage::ALL
            .into_iter()
            .find(|st| st.as_str() == s)
            .ok_or_else(|| format!("unknown stage {s:?}"))
    }
}

#[derive(Debug, Error)]
pub enum PipelineError {
    #[error("invalid config field `{field}`: {reason}")]
    ConfigInvalid { field: String, reason: String },
    #[error("upstream stage `{0}` has not been run")]
    MissingUpstream(Stage),
    #[error("backend exhausted: {0}")]
    BackendExhausted(String),
    #[error("run directory {0} is locked by another process")]
    Locked(PathBuf),
    #[error("corrupt artifact {path}: {reason}")]
    Corrupt { path: PathBuf, reason: String },
    #[error(transparent)]
    Graph(#[from] GraphError),
    #[error(transparent)]
    Filter(FilterError),
    #[error(transparent)]
    Dual(DualError),
    #[error(transparent)]
    Embed(EmbedError),
    #[error(transparent)]
    Gnn(#[from] GnnError),
    #[error(transparent)]
    Gateway(GatewayError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl PipelineError {
    pub fn config(field: &str, reason: &str) -> Self {
        Self::ConfigInvalid {
            field: field.to_owned(),
            reason: reason.to_owned(),
        }
    }

    /// Process exit code: 2 config, 3 missing upstream, 4 backend
    /// exhausted, 1 anything else.
    pub fn exit_code(&self) -> i32 {
        match self {
            Self::ConfigInvalid { .. } => 2,
            Self::MissingUpstream(_) => 3,
            Self::BackendExhausted(_) => 4,
            _ => 1,
        }
    }
}

impl From<GatewayError> for PipelineError {
    fn from(e: GatewayError) -> Self {
        match e {
            e if e.is_exhausted() => Self::BackendExhausted(e.to_string()),
            GatewayError::InvalidConfig(reason) => Self::ConfigInvalid {
                field: "backend".into(),
                reason,
            },
            e => Self::Gateway(e),
        }
    }
}

impl From<FilterError> for PipelineError {
    fn from(e: FilterError) -> Self {
        match e {
            FilterError::Backend { source, .. } if source.is_exhausted() => Self::BackendExhausted(source.to_string()),
            FilterError::NoPairsRequested => Self::config("n_ep_pairs", "must be >= 1"),
            e => Self::Filter(e),
        }
    }
}

impl From<DualError> for PipelineError {
    fn from(e: DualError) -> Self {
        match e {
            DualError::CountExceedsTrain { count, available } => {
                Self::config("kb_nodes", &format!("{count} requested but only {available} candidates"))
            }
            DualError::Gateway(g) => g.into(),
            e => Self::Dual(e),
        }
    }
}

impl From<EmbedError> for PipelineError {
    fn from(e: EmbedError) -> Self {
        match e {
            EmbedError::Gateway(g) => g.into(),
            e => Self::Embed(e),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn stage_names_round_trip() {
        for s in Stage::ALL {
            assert_eq!(s.as_str().parse::<Stage>().unwrap(), s);
        }
        assert!("all".parse::<Stage>().is_err());
    }

    #[test]
    fn exit_codes() {
        assert_eq!(PipelineError::config("k", "x").exit_code(), 2);
        assert_eq!(PipelineError::MissingUpstream(Stage::Sample).exit_code(), 3);
        let exhausted: PipelineError = GatewayError::NetworkExhausted {
            attempts: 5,
            last: "timeout".into(),
        }
        .into();
        assert_eq!(exhausted.exit_code(), 4);
        assert_eq!(PipelineError::from(std::io::Error::other("x")).exit_code(), 1);
    }
}
