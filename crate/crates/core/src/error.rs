use thiserror::Error;

/// Failures raised by constructions and verifications across the crate.
///
/// Residual-carrying variants report the measured quantity that exceeded
/// its tolerance so callers can print a witness.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("matrix is not Hermitian (residual {residual:.3e})")]
    NotHermitian { residual: f64 },

    #[error("all input vectors are numerically zero")]
    EmptySpan,

    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),

    #[error("dimension mismatch: {0}")]
    DimMismatch(String),

    #[error("map is not completely positive (minimal Choi eigenvalue {min_eigenvalue:.3e})")]
    NotCp { min_eigenvalue: f64 },

    #[error("module vectors belong to different modules")]
    ParentMismatch,

    #[error("grading mismatch: {0}")]
    GradingMismatch(String),

    #[error("spanning set is not a right submodule (residual {residual:.3e})")]
    NotSubmodule { residual: f64 },

    #[error("map does not respect the block decomposition (leakage {leakage:.3e})")]
    NotBlock { leakage: f64 },

    #[error("map is not a contraction (norm {norm:.12})")]
    NotContraction { norm: f64 },

    #[error("map is not bilinear (residual {residual:.3e})")]
    NotBilinear { residual: f64 },

    #[error("linear system is inconsistent (residual {residual:.3e})")]
    Inconsistent { residual: f64 },

    #[error("intertwiner norm {norm:.12} exceeds one")]
    NormExceeded { norm: f64 },

    #[error("family is not a morphism (residual {residual:.3e})")]
    NotMorphism { residual: f64 },

    #[error("horizon exceeded: need {needed}, have {available}")]
    HorizonExceeded { needed: usize, available: usize },

    #[error("ambient dimension {dim} exceeds the size guard {limit}")]
    SizeExceeded { dim: usize, limit: usize },

    #[error("partition {finer} does not refine {coarser}")]
    NotRefinement { finer: String, coarser: String },

    #[error("semigroup is not unital (residual {residual:.3e})")]
    NotUnital { residual: f64 },

    #[error("invalid input: {0}")]
    Invalid(String),
}

pub type Result<T> = std::result::Result<T, Error>;
