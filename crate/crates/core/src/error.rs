use thiserror::Error;

/// Everything that can go wrong while building or checking a pricing solution.
#[derive(Debug, Clone, Error, PartialEq)]
pub enum Error {
    #[error("invalid distribution: {0}")]
    InvalidDistribution(String),
    #[error("invalid slice: {0}")]
    InvalidSlice(String),
    #[error("degenerate slice: the two group distributions coincide (tv = {tv:e})")]
    DegenerateSlice { tv: f64 },
    #[error("argument out of range: {0}")]
    OutOfRange(String),
    #[error("wrong region: expected {expected}, found {found}")]
    WrongRegion { expected: String, found: String },
    #[error("no convergence in {what} on bracket [{lo}, {hi}]")]
    NoConvergence { what: String, lo: f64, hi: f64 },
    #[error("unsupported configuration: {0}")]
    UnsupportedConfiguration(String),
    #[error("segment [{lo}, {hi}) of a pricing rule is not monotone")]
    NonMonotoneSegment { lo: f64, hi: f64 },
    #[error("dual certificate infeasible at ({v_l}, {v_h}): slack {slack:e}")]
    InfeasibleCertificate { v_l: f64, v_h: f64, slack: f64 },
    #[error("complementary slackness violated at ({v_l}, {v_h}): gap {gap:e}")]
    SlacknessViolation { v_l: f64, v_h: f64, gap: f64 },
    #[error("group l has no gains from trade")]
    ZeroGains,
}

pub type Result<T> = std::result::Result<T, Error>;
