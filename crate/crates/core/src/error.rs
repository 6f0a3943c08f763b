use alloc::string::String;

/// Errors raised by the core library.
#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum Error {
    #[error("invalid parameters: {0}")]
    InvalidParams(String),
    #[error("integration failed: energy drift {drift:.3e} exceeds tolerance {tol:.3e}")]
    IntegrationFailed { drift: f64, tol: f64 },
    #[error("horizon exceeded after t = {0}")]
    HorizonExceeded(f64),
    #[error("precondition violated: {0}")]
    Precondition(String),
    #[error("escape function construction failed: {0}")]
    ConstructionFailed(String),
    #[error("partition infeasible: {0}")]
    PartitionInfeasible(String),
    #[error("grid too coarse: {0}")]
    GridTooCoarse(String),
    #[error("absorber overlaps the feature region: {0}")]
    AbsorberOverlap(String),
    #[error("unsupported symbol: {0}")]
    UnsupportedSymbol(String),
    #[error("matrix singular to tolerance at pivot {index} (|pivot| = {pivot:.3e})")]
    SingularToTolerance { index: usize, pivot: f64 },
    #[error("degenerate fit design: {0}")]
    DegenerateDesign(String),
    #[error("unknown preset `{0}`")]
    UnknownPreset(String),
    #[error("hypothesis audit failed: {0}")]
    HypothesisFailed(String),
}

pub type Result<T> = core::result::Result<T, Error>;
