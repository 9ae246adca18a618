use micropost_core::analysis::AnalysisError;
use micropost_core::cavity::CavityError;
use micropost_core::fdtd::FdtdError;
use micropost_core::hbt::HbtError;
use micropost_core::purcell::PurcellError;
use micropost_core::source::SourceError;

use crate::config::ConfigError;

/// Failure of a simulation or analysis step.
#[derive(Debug, thiserror::Error)]
pub enum SimError {
    #[error(transparent)]
    Cavity(#[from] CavityError),
    #[error(transparent)]
    Fdtd(#[from] FdtdError),
    #[error(transparent)]
    Purcell(#[from] PurcellError),
    #[error(transparent)]
    Source(#[from] SourceError),
    #[error(transparent)]
    Hbt(#[from] HbtError),
    #[error(transparent)]
    Analysis(#[from] AnalysisError),
    #[error("target g2 = {target} is not bracketed: g2(p2 = {lo}) = {g_lo}, g2(p2 = {hi}) = {g_hi}")]
    NonBracketing { target: f64, lo: f64, hi: f64, g_lo: f64, g_hi: f64 },
    #[error("calibration did not reach tolerance after {iterations} steps (last p2 = {p2}, g2 = {g2})")]
    NotConverged { iterations: usize, p2: f64, g2: f64 },
}

/// Top-level error; each variant maps to one process exit code.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error("{0}")]
    Validation(String),
    #[error("{stage}: {source}")]
    Simulation {
        stage: &'static str,
        #[source]
        source: SimError,
    },
    #[error("{0}")]
    Io(#[from] std::io::Error),
    #[error("acceptance checks failed: {0}")]
    Acceptance(String),
}

impl Error {
    pub fn stage(stage: &'static str) -> impl FnOnce(SimError) -> Self {
        move |source| Error::Simulation { stage, source }
    }

    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Config(_) | Error::Validation(_) => 2,
            Error::Simulation { .. } | Error::Io(_) => 3,
            Error::Acceptance(_) => 4,
        }
    }
}
