//! Crate-wide error type.

use std::fmt;

pub type Result<T> = std::result::Result<T, Error>;

/// All failure modes of the pipeline stages.
#[derive(Debug, Clone, PartialEq)]
pub enum Error {
    /// A generation/solver/training configuration violates its invariants.
    InvalidSpec(String),
    /// RSA placement hit `max_attempts` consecutive rejections before the
    /// target volume fraction was reached (jamming).
    FailedToConverge {
        achieved_vf: f64,
        target_vf: f64,
        attempts: u64,
    },
    /// Snapshot matrix with zero Frobenius norm handed to a POD builder.
    DegenerateInput,
    /// Projection error is undefined for the zero snapshot.
    ZeroSnapshot,
    /// A retained spectral value fell below the conditioning floor, so the
    /// inverse square-root scaling would blow up.
    IllConditioned { value: f64, floor: f64 },
    /// The iterative solver exhausted its iteration budget.
    NoConvergence { iterations: usize, residual: f64 },
    /// NaN or infinity showed up in a numerical field.
    NonFiniteField(String),
    /// Requested more reduced coefficients than the basis holds.
    HTooLarge { h: usize, n_modes: usize },
    /// A feature column is constant, so it cannot be scaled to unit variance.
    ConstantFeature(usize),
    /// Training loss became non-finite.
    Diverged { epoch: usize },
    /// Dataset is empty or smaller than the requested split.
    EmptyDataset(String),
    /// Image resolution does not match the basis dimension.
    ResolutionMismatch { expected: usize, got: usize },
    /// Malformed or truncated artifact file.
    InvalidFormat(String),
    /// Underlying I/O failure (message form keeps the type `Clone`).
    Io(String),
}

impl fmt::Display for Error {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Error::InvalidSpec(msg) => write!(f, "invalid spec: {msg}"),
            Error::FailedToConverge {
                achieved_vf,
                target_vf,
                attempts,
            } => write!(
                f,
                "placement failed to converge: reached vf {achieved_vf:.4} of target \
                 {target_vf:.4} after {attempts} consecutive rejections"
            ),
            Error::DegenerateInput => write!(f, "snapshot matrix has zero Frobenius norm"),
            Error::ZeroSnapshot => write!(f, "projection error undefined for zero snapshot"),
            Error::IllConditioned { value, floor } => write!(
                f,
                "retained spectral value {value:.3e} below conditioning floor {floor:.3e}"
            ),
            Error::NoConvergence {
                iterations,
                residual,
            } => write!(
                f,
                "solver did not converge within {iterations} iterations (residual {residual:.3e})"
            ),
            Error::NonFiniteField(what) => write!(f, "non-finite values in {what}"),
            Error::HTooLarge { h, n_modes } => {
                write!(f, "requested {h} reduced coefficients but basis has {n_modes}")
            }
            Error::ConstantFeature(idx) => {
                write!(f, "feature column {idx} is constant and cannot be standardized")
            }
            Error::Diverged { epoch } => write!(f, "training loss non-finite at epoch {epoch}"),
            Error::EmptyDataset(msg) => write!(f, "empty dataset: {msg}"),
            Error::ResolutionMismatch { expected, got } => {
                write!(f, "resolution mismatch: basis dimension {expected}, image has {got}")
            }
            Error::InvalidFormat(msg) => write!(f, "invalid file format: {msg}"),
            Error::Io(msg) => write!(f, "i/o error: {msg}"),
        }
    }
}

impl std::error::Error for Error {}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}

impl Error {
    /// Short machine-readable kind tag (used by the CLI error JSON).
    pub fn kind(&self) -> &'static str {
        match self {
            Error::InvalidSpec(_) => "invalid_spec",
            Error::FailedToConverge { .. } => "failed_to_converge",
            Error::DegenerateInput => "degenerate_input",
            Error::ZeroSnapshot => "zero_snapshot",
            Error::IllConditioned { .. } => "ill_conditioned",
            Error::NoConvergence { .. } => "no_convergence",
            Error::NonFiniteField(_) => "non_finite_field",
            Error::HTooLarge { .. } => "h_too_large",
            Error::ConstantFeature(_) => "constant_feature",
            Error::Diverged { .. } => "diverged",
            Error::EmptyDataset(_) => "empty_dataset",
            Error::ResolutionMismatch { .. } => "resolution_mismatch",
            Error::InvalidFormat(_) => "invalid_format",
            Error::Io(_) => "io",
        }
    }

    /// True for errors caused by bad configuration rather than numerics.
    pub fn is_config(&self) -> bool {
        matches!(
            self,
            Error::InvalidSpec(_)
                | Error::EmptyDataset(_)
                | Error::HTooLarge { .. }
                | Error::ResolutionMismatch { .. }
                | Error::InvalidFormat(_)
                | Error::Io(_)
        )
    }
}
