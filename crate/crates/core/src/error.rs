use thiserror::Error;

pub type Result<T> = core::result::Result<T, Error>;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("invalid window: lower corner must be strictly below upper corner")]
    InvalidWindow,
    #[error("erosion by {radius} leaves an empty or degenerate window")]
    EmptyErosion { radius: f64 },
    #[error("point ({x}, {y}) lies outside the window")]
    PointOutsideWindow { x: f64, y: f64 },
    #[error("duplicate point ({x}, {y})")]
    DuplicatePoint { x: f64, y: f64 },
    #[error("point ({x}, {y}) is not part of the configuration")]
    NotInConfiguration { x: f64, y: f64 },
    #[error("pair potential evaluated at zero separation")]
    Singularity,
    #[error("invalid model: {0}")]
    InvalidModel(&'static str),
    #[error("parameter vector has length {got}, model expects {expected}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("invalid parameter: {0}")]
    InvalidParameter(&'static str),
    #[error("sampler needs at least one step")]
    NonErgodicConfig,
    #[error("target window is not contained in the source window")]
    WindowMismatch,
    #[error("conditional intensity vanishes at a data point; contrast is -inf")]
    NonFiniteEnergy,
    #[error("Hessian is singular")]
    SingularHessian,
    #[error("fit did not converge after {iterations} iterations")]
    NotConverged { iterations: usize },
    #[error("matrix U is singular or ill-conditioned (condition number {condition:e})")]
    SingularU { condition: f64 },
    #[error("block partition has {blocks} blocks, at least 9 are needed")]
    TooFewBlocks { blocks: usize },
    #[error("need at least {needed} values, got {got}")]
    TooFewValues { needed: usize, got: usize },
    #[error("standard deviation is zero")]
    DegenerateSd,
}
