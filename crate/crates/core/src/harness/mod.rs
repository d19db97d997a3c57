//! Batch pipeline: ingest prompts and constraints, generate, label, report.
//!
//! Every stage reads and writes JSON Lines; the record types here are the
//! file schemas (see `docs/formats.md`).

mod ingest;
mod io;
mod label;
mod records;
mod report;
mod run;

use thiserror::Error;

pub use ingest::{ingest, ingest_records};
pub use io::{parse_jsonl, read_jsonl, read_jsonl_numbered, write_jsonl};
pub use label::{label_join, label_stub, JoinResult, LabeledSample, NEGATIVES_STUB, POSITIVES_STUB};
pub use records::{BenchmarkEntry, GenerationRecord, LabelRecord, LanguageTag, PromptRecord, RunFailure, SampleKey};
pub use report::{metric_names, report, report_json, report_tsv, ModeReport, PromptSeedRow, Report, ReportMode};
pub use run::{attempt_seed, decoding_constraints, run, DecoderKind, RunConfig, RunOutput};

use crate::constraint::ConstraintError;
use crate::decode::DecodeError;
use crate::ebm::EbmError;
use crate::metrics::MetricError;
use crate::model::{ModelFileError, TokenizeError};

#[derive(Debug, Error)]
pub enum HarnessError {
    #[error("{path}: {source}")]
    Io { path: String, source: std::io::Error },
    #[error("{file}:{line}: {message}")]
    Parse { file: String, line: usize, message: String },
    #[error("constraint record for unknown prompt {0:?}")]
    DanglingConstraint(String),
    #[error("generation for unknown prompt {0:?}")]
    UnknownPrompt(String),
    #[error("label {0} matches no generation")]
    UnknownLabel(SampleKey),
    #[error("duplicate record key {0}")]
    DuplicateKey(SampleKey),
    #[error("no labeled samples to report")]
    EmptyReport,
    #[error("the energy decoder needs a model with tied embeddings")]
    NotDifferentiable,
    #[error("invalid run configuration: {0}")]
    InvalidConfig(String),
    #[error(transparent)]
    Constraint(#[from] ConstraintError),
    #[error(transparent)]
    Tokenize(#[from] TokenizeError),
    #[error(transparent)]
    ModelFile(#[from] ModelFileError),
    #[error(transparent)]
    Decode(#[from] DecodeError),
    #[error(transparent)]
    Ebm(#[from] EbmError),
    #[error(transparent)]
    Metric(#[from] MetricError),
}

/// Writes `report.json` and `report.tsv` into `dir`.
pub fn write_report(dir: impl AsRef<std::path::Path>, report: &Report) -> Result<(), HarnessError> {
    let dir = dir.as_ref();
    std::fs::create_dir_all(dir).map_err(|source| HarnessError::Io { path: dir.display().to_string(), source })?;
    io::write_string(dir.join("report.json"), &report_json(report))?;
    io::write_string(dir.join("report.tsv"), &report_tsv(report))
}
