#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::too_many_arguments)]

//! Command-line driver: single-stage commands, the report, and the pipeline.

pub mod artifact;
pub mod commands;
pub mod pipeline;
pub mod report;

/// Process exit codes.
pub mod exit {
    pub const PASS: u8 = 0;
    pub const TOLERANCE: u8 = 1;
    pub const USAGE: u8 = 2;
    pub const INVARIANT: u8 = 3;
}

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("usage: {0}")]
    Usage(String),
    #[error("{} tolerance check(s) failed:\n  {}", .0.len(), .0.join("\n  "))]
    Tolerance(Vec<String>),
    #[error("invariant violated: {0}")]
    Invariant(String),
    #[error("stage {stage} failed: {source}")]
    Stage { stage: String, source: Box<CliError> },
    #[error(transparent)]
    Core(#[from] ffm_core::Error),
    #[error("{path}: {source}")]
    File { path: String, source: std::io::Error },
    #[error("{path}: {source}")]
    Parse { path: String, source: serde_json::Error },
    #[error("csv: {0}")]
    Csv(#[from] csv::Error),
}

pub type CliResult<T> = Result<T, CliError>;

impl CliError {
    pub fn exit_code(&self) -> u8 {
        use ffm_core::Error as E;
        match self {
            CliError::Tolerance(_) => exit::TOLERANCE,
            CliError::Invariant(_) => exit::INVARIANT,
            CliError::Stage { source, .. } => source.exit_code(),
            CliError::Core(e) if e.is_invariant_violation() => exit::INVARIANT,
            CliError::Core(
                E::NonConservative { .. }
                | E::StepRejected { .. }
                | E::GridTooCoarse(_)
                | E::CurveFamilyTooSparse { .. },
            ) => exit::TOLERANCE,
            _ => exit::USAGE,
        }
    }

    pub fn in_stage(self, stage: &str) -> CliError {
        CliError::Stage { stage: stage.to_string(), source: Box::new(self) }
    }
}
