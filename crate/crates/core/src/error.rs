use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("polynomial parse error at column {column}: {message}")]
    Parse { column: usize, message: String },

    #[error("generator {index} is not homogeneous")]
    NonHomogeneous { index: usize },

    #[error("variable count mismatch: expected {expected}, found {found}")]
    VariableCount { expected: usize, found: usize },

    #[error("no boundary sampler available for this model")]
    NoSamplerAvailable,

    #[error("point is not on the model boundary (norm defect {norm_defect:.3e}, generator residual {generator_residual:.3e})")]
    OffVariety {
        norm_defect: f64,
        generator_residual: f64,
    },

    #[error("symbols belong to different models")]
    ModelMismatch,

    #[error("incompatible matrix sizes: {0}")]
    Shape(String),

    #[error("no spectral gap: best gap ratio {ratio:.3} is below {required}")]
    NoSpectralGap { ratio: f64, required: f64 },

    #[error("metric symbol is not pointwise idempotent (residual {residual:.3e})")]
    NotIdempotent { residual: f64 },

    #[error("quotient does not contain level {0}")]
    MissingLevel(usize),

    #[error("quotient has no metric or generator data to define fibers")]
    NoFiberData,

    #[error("operator A is near singular (min eigenvalue {min_eigenvalue:.3e})")]
    NearSingularA { min_eigenvalue: f64 },

    #[error("range of the quotient F is not contained in E at level {m} (residual {residual:.3e})")]
    Containment { m: usize, residual: f64 },

    #[error("quotient has rank zero")]
    RankZero,

    #[error("sequence is not polynomial of degree <= {degree} on the window")]
    NonPolynomial { degree: usize },

    #[error("Abel truncation M={m_trunc} leaves tail {tail:.3e} for r={r}")]
    InsufficientTruncation { r: f64, m_trunc: usize, tail: f64 },

    #[error("interior point required: {0}")]
    InvalidPoint(String),

    #[error("orbit certificate failed at level {m} (residual {residual:.3e}); pass an explicit override to proceed")]
    NotAnOrbit { m: usize, residual: f64 },

    #[error("invalid argument: {0}")]
    Invalid(String),
}

pub type Result<T> = std::result::Result<T, Error>;
