use thiserror::Error;

use crate::songeom::Rotation;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid rotation dimension {0} (need n >= 2)")]
    InvalidDimension(usize),

    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error("matrix is not a rotation: {0}")]
    NotARotation(String),

    #[error("matrix is not skew-symmetric (asymmetry {0:.3e})")]
    NotSkew(f64),

    #[error("argument is at the cut locus (rotation angle {angle} is within 1e-8 of pi)")]
    CutLocus { angle: f64 },

    #[error("anchored estimate differs from reference at anchor {node} by {deviation:.3e}")]
    AnchorMismatch { node: usize, deviation: f64 },

    #[error("Karcher alignment did not converge after {iterations} iterations (residual {residual:.3e})")]
    Convergence {
        iterations: usize,
        residual: f64,
        best: Box<Rotation>,
    },

    #[error("operation not supported for n = {0}")]
    UnsupportedDimension(usize),

    #[error("quadrature failed: {0}")]
    Quadrature(String),

    #[error("rejection sampler exceeded {0} proposals")]
    SamplerStuck(u64),

    #[error("invalid noise model: {0}")]
    InvalidModel(String),

    #[error("invalid graph: {0}")]
    InvalidGraph(String),

    #[error("ill-posed problem: {0}")]
    IllPosed(String),

    #[error("node index {0} out of range")]
    InvalidNode(usize),

    #[error("wrong kernel source: {0}")]
    InvalidSource(&'static str),

    #[error("graph with {0} nodes exceeds the dense eigensolver limit of {1}")]
    TooLarge(usize, usize),

    #[error("requested embedding dimension {requested} exceeds rank {rank}")]
    EmbeddingDimension { requested: usize, rank: usize },

    #[error("invalid argument: {0}")]
    InvalidArgument(String),
}
