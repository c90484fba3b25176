use thiserror::Error;

/// Failures raised while parsing expression text.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum ParseError {
    #[error("syntax error at byte {pos}: {msg}")]
    Syntax { pos: usize, msg: String },
    #[error("function `{name}` takes {expected} argument(s), got {found}")]
    Arity {
        name: String,
        expected: usize,
        found: usize,
    },
    #[error("unknown variable `{0}`")]
    UnknownVariable(String),
    #[error("unknown function `{0}`")]
    UnknownFunction(String),
}

/// Domain violations hit during numeric evaluation.
#[derive(Debug, Clone, Copy, PartialEq, Error)]
pub enum EvalError {
    #[error("division by zero")]
    DivisionByZero,
    #[error("log of non-positive value {0}")]
    LogDomain(f64),
    #[error("sqrt of negative value {0}")]
    SqrtDomain(f64),
    #[error("negative base {0} raised to non-integer power {1}")]
    PowDomain(f64, f64),
    #[error("non-finite result")]
    NonFinite,
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error(transparent)]
    Parse(#[from] ParseError),
    #[error("component {component}: {source}")]
    Eval { component: usize, source: EvalError },
    #[error("dimension mismatch: expected {expected}, got {found}")]
    Dimension { expected: usize, found: usize },
    #[error("degenerate determinant D = {d:e} (threshold {threshold:e})")]
    DegenerateD { d: f64, threshold: f64 },
    #[error("singular control saturates: |u_s| = {0}")]
    SaturationReached(f64),
    #[error("chattering: more than {0} switches")]
    Chattering(usize),
    #[error("transverse Hamiltonian part vanishes (H1^2+H2^2 = {0:e})")]
    VanishingTransversePart(f64),
    #[error("jet fit failed: {0}")]
    FitFailure(String),
    #[error("invalid input: {0}")]
    InvalidInput(String),
    #[error("normalization violated: {0}")]
    Normalization(String),
    #[error("degenerate: {0}")]
    Degenerate(String),
    #[error("integration failed: {0}")]
    Integration(String),
    #[error("not found: {0}")]
    NotFound(String),
}

pub type Result<T> = std::result::Result<T, Error>;
