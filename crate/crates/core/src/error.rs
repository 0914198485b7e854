use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("unbound input: {0}")]
    UnboundInput(String),
    #[error("foreign node: node does not belong to this graph")]
    ForeignNode,
    #[error("shape error: expected length {expected}, got {got}")]
    Shape { expected: usize, got: usize },
    #[error("numerical overflow in {0}")]
    NumericalOverflow(&'static str),
    #[error("latent dimension too large for dense Hessian: {dim} > {max}")]
    DenseHessianTooLarge { dim: usize, max: usize },
    #[error("latent dimension too large for full regularization mode: {dim} > {max}")]
    FullModeTooLarge { dim: usize, max: usize },
    #[error("degenerate start: power iteration could not draw a non-zero start vector")]
    DegenerateStart,
    #[error("empty Ω: no latents to regularize")]
    EmptyOmega,
    #[error("invalid latent vector: {0}")]
    InvalidLatent(String),
    #[error("flow divergence at step {step}")]
    FlowDivergence { step: usize },
    #[error("trajectory too short: need at least 3 points, got {0}")]
    TrajectoryTooShort(usize),
    #[error("unknown token id {id} (vocabulary size {vocab})")]
    UnknownToken { id: u32, vocab: usize },
    #[error("non-finite loss at epoch {epoch}, batch {batch}")]
    NonFiniteLoss { epoch: usize, batch: usize },
    #[error("model parse error in `{field}`: {message}")]
    ModelParse { field: String, message: String },
    #[error("shape mismatch for weight `{0}`")]
    ShapeMismatch(String),
    #[error("I/O error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("empty dataset")]
    EmptyDataset,
    #[error("need ≥2 passes for latent stability, got {0}")]
    NeedTwoPasses(usize),
    #[error("prompt group {0} has fewer than 2 variants")]
    SmallGroup(usize),
    #[error("no structure to score")]
    NoStructure,
    #[error("baseline must be > 0, got {0}")]
    BadBaseline(f64),
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
