use thiserror::Error;

pub type Result<T> = std::result::Result<T, OklError>;

#[derive(Debug, Error)]
pub enum OklError {
    #[error("dimension mismatch: {left} vs {right}")]
    DimensionMismatch { left: usize, right: usize },

    #[error("instance index {index} out of range for a {n}x{n} precomputed kernel")]
    IndexOutOfRange { index: usize, n: usize },

    #[error("instance kind does not match kernel kind ({0})")]
    InstanceKind(&'static str),

    #[error("matrix is not symmetric (max asymmetry {0:e})")]
    NotSymmetric(f64),

    #[error("matrix is too large for the dense eigensolver ({0} > 5000)")]
    TooLarge(usize),

    #[error("empty input: {0}")]
    Empty(&'static str),

    #[error("invalid kernel parameters: {0}")]
    InvalidKernel(String),

    #[error("budget is in {0} mode")]
    WrongBudgetMode(&'static str),

    #[error("budget is full (capacity {0})")]
    BudgetFull(usize),

    #[error("degenerate insertion: projection error {0:e} is below 1e-12")]
    DegenerateInsertion(f64),

    #[error("arrival index {got} does not follow {last}")]
    ArrivalOrder { last: usize, got: usize },

    #[error("length mismatch: expected {expected}, got {got}")]
    LengthMismatch { expected: usize, got: usize },

    #[error("the updated instance must be the most recently inserted budget member")]
    NotLastMember,

    #[error("singular kernel matrix")]
    Singular,

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("horizon exhausted: all {0} rounds already played")]
    HorizonExhausted(usize),

    #[error("line {line}: {msg}")]
    Parse { line: usize, msg: String },

    #[error("unsupported label set {0:?}")]
    Labels(Vec<String>),

    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
}
