use thiserror::Error;

/// Errors reported by the library. Numeric payloads are widened to `f64`
/// so the type does not depend on the scalar parameter.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("point {t} is not in the time scale")]
    NotInScale { t: f64 },
    #[error("point {t} lies before the start of the time scale")]
    BeforeScaleStart { t: f64 },
    #[error("integration endpoint {t} is not in the time scale")]
    EndpointNotInScale { t: f64 },
    #[error("invalid fraction p/q = {p}/{q}: need 0 < p < q")]
    BadFraction { p: u32, q: u32 },
    #[error("invalid time scale: {0}")]
    InvalidScale(String),
    #[error("parse error at line {line}, column {column}: {message}")]
    Parse { line: usize, column: usize, message: String },
    #[error("1 + z·h vanishes (z = {re}+{im}i, h = {h})")]
    NonRegressiveValue { re: f64, im: f64, h: f64 },
    #[error("coefficient is not positively regressive at t = {t}")]
    NotPositivelyRegressive { t: f64 },
    #[error("gain is negative at t = {t}")]
    NegativeGain { t: f64 },
    #[error("jump factor E + μA is singular at t = {t}")]
    NonRegressiveJump { t: f64 },
    #[error("matrix is not diagonalizable within tolerance (condition {cond:e})")]
    NotDiagonalizable { cond: f64 },
    #[error("eigendecomposition failed: {0}")]
    EigendecompositionFailed(String),
    #[error("matrix is singular")]
    Singular,
    #[error("matrix is not Hermitian (defect {defect:e})")]
    NotHermitian { defect: f64 },
    #[error("quadratic form carries no sign split")]
    NoSignSplit,
    #[error("certificate mode condition fails: {0}")]
    ModeConditionFails(String),
    #[error("regressivity lost at t = {t}")]
    RegressivityLost { t: f64 },
    #[error("perturbation norm {norm} exceeds bound {bound} at t = {t}")]
    PerturbationTooLarge { t: f64, norm: f64, bound: f64 },
    #[error("perturbation does not vanish at t = {t}, distance {distance} from the scale")]
    SupportViolation { t: f64, distance: f64 },
    #[error("horizon too short: {blocks} blocks, need {needed}")]
    HorizonTooShort { blocks: usize, needed: usize },
    #[error("degenerate alignment at t = {t}")]
    DegenerateAlignment { t: f64 },
    #[error("ramp {ramp} too wide, limit {limit}")]
    RampTooWide { ramp: f64, limit: f64 },
    #[error("time scale is not syndetic")]
    NotSyndetic,
    #[error("central exponent estimate {chi} is negative, nothing to destabilize")]
    CentralExponentNegative { chi: f64 },
    #[error("measured perturbation norm {measured} exceeds budget {budget}")]
    BudgetExceeded { measured: f64, budget: f64 },
    #[error("tube separation violated at t = {t}")]
    TubeOverlap { t: f64 },
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error("unknown preset `{0}`")]
    UnknownPreset(String),
}

pub type Result<T> = std::result::Result<T, Error>;
