use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("bit width {width} is outside the supported range 1..={max}")]
    WidthTooLarge { width: usize, max: usize },
    #[error("bit widths differ: {left} vs {right}")]
    WidthMismatch { left: usize, right: usize },
    #[error("value {value:#x} does not fit in {width} bits")]
    ValueOutOfRange { value: u64, width: usize },
    #[error("the zero bit string has no permutation")]
    ZeroKey,
    #[error("invalid bit permutation: {0}")]
    InvalidPermutation(String),

    #[error("state vector norm {norm} deviates from 1")]
    NotNormalized { norm: f64 },
    #[error("length {len} is not a power of two")]
    NotPowerOfTwo { len: usize },
    #[error("matrix is not symmetric (max deviation {deviation:e})")]
    NotSymmetric { deviation: f64 },
    #[error("matrix trace {trace} is not 1")]
    NotUnitTrace { trace: f64 },
    #[error("dimension mismatch: {left} vs {right}")]
    DimensionMismatch { left: usize, right: usize },
    #[error("dimension {dim} exceeds configured cap {cap}")]
    DimensionCap { dim: usize, cap: usize },
    #[error("Jacobi eigensolver did not converge after {sweeps} sweeps")]
    NoConvergence { sweeps: usize },
    #[error("matrix is not diagonal in the Walsh-Hadamard basis (residual {residual:e})")]
    NotWalshDiagonal { residual: f64 },

    #[error("invalid key: {0}")]
    InvalidKey(String),
    #[error("scheme mismatch: {0}")]
    SchemeMismatch(String),
    #[error("plaintext has {got} bits, scheme expects {expected}")]
    PlaintextWidth { expected: usize, got: usize },
    #[error("decryption integrity failure: {0}")]
    DecryptionIntegrity(String),
    #[error("key usage budget exhausted: {used} of {t_max} copies already published")]
    BudgetExceeded { used: usize, t_max: usize },

    #[error("public register is empty")]
    RegisterEmpty,
    #[error("public key {0} was already fetched")]
    AlreadyFetched(u64),
    #[error("unknown public key {0}")]
    UnknownKey(u64),
    #[error("unknown eavesdropper strategy {0:?}")]
    UnknownStrategy(String),

    #[error("infeasible parameters: {0}")]
    Infeasible(String),
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
}
