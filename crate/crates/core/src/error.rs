use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum Error {
    #[error("invalid operand: {0}")]
    InvalidOperand(String),

    #[error("matrix is singular")]
    SingularMatrix,

    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error("invalid parameters: {0}")]
    InvalidParams(String),

    /// `U0 * V0 <= T`: no scheme can be both correct and secure.
    #[error(
        "infeasible parameters: U0*V0 = {survivors} <= T = {collusion}; the optimal rate region is \
         empty when U0*V0 <= T (too few guaranteed survivors to outnumber the colluders)"
    )]
    Infeasible { survivors: usize, collusion: usize },

    #[error("field size q = {q} is too small, need q > {need}")]
    InsufficientField { q: u64, need: usize },

    #[error("no T-private MDS matrix found below prime ceiling {ceiling}")]
    SearchExhausted { ceiling: u64 },

    #[error("certification needs {subsets} subset checks, above the cap of {cap}")]
    CertificationTooLarge { subsets: u128, cap: u128 },

    #[error("{count} admissible dropout patterns exceed the enumeration cap of {cap}; use sampling")]
    EnumerationTooLarge { count: u128, cap: u128 },

    #[error("length mismatch: expected {expected}, got {got}")]
    LengthMismatch { expected: usize, got: usize },

    #[error("missing message from user {0}")]
    MissingMessage(String),

    #[error("user {0} is not a first-round survivor")]
    NotSurviving(String),

    #[error("relay {relay} has {have} round-2 survivors, needs {need}")]
    TooFewSurvivors { relay: usize, have: usize, need: usize },

    #[error("server holds {have} coded symbols, needs {need}")]
    InsufficientSymbols { have: usize, need: usize },

    #[error("decode system is singular; the coding matrix is not MDS")]
    SingularDecode,

    #[error("surplus coded symbols are inconsistent with the decoded key sum")]
    InconsistentSymbols,

    #[error("invalid dropout pattern: {0}")]
    InvalidPattern(String),

    #[error("certification failed: {0}")]
    CertificationFailed(String),

    #[error("parse error: {0}")]
    Parse(String),

    #[error("config error in field `{field}`: {msg}")]
    Config { field: String, msg: String },
}
