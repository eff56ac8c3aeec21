use std::path::PathBuf;

/// Errors produced anywhere in the solver pipeline.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("invalid topology: {0}")]
    InvalidTopology(String),

    #[error("parameter vector has length {got}, topology expects {expected}")]
    ParamLength { expected: usize, got: usize },

    #[error("non-finite value in layer {layer}")]
    NonFinite { layer: usize },

    #[error("unphysical material: lambda = {lambda}, mu = {mu}")]
    UnphysicalMaterial { lambda: f64, mu: f64 },

    #[error("invalid engineering constants: E = {e}, nu = {nu}")]
    InvalidEngineeringConstants { e: f64, nu: f64 },

    #[error("point ({0}, {1}) lies outside the domain")]
    OutsideDomain(f64, f64),

    #[error("empty point set: {0}")]
    EmptySet(&'static str),

    #[error("cannot select {requested} points from {available} candidates")]
    SelectionTooLarge { requested: usize, available: usize },

    #[error("voxel grid is not binary (value {value} at index {index})")]
    NonBinaryGrid { index: usize, value: f64 },

    #[error("malformed PGM at byte {offset}: {message}")]
    Pgm { offset: usize, message: String },

    #[error("parameter snapshot: {0}")]
    Snapshot(String),

    #[error("config: {0}")]
    Config(String),

    #[error("optimizer failed in adaptive cycle {cycle}: {source}")]
    Cycle {
        cycle: usize,
        #[source]
        source: Box<Error>,
    },

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl Error {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
