use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum WireError {
    #[error("invalid wire parameters: {0}")]
    InvalidParams(String),
    #[error("index {index} is an end point of a {n_points}-point wire")]
    EndpointIndex { index: usize, n_points: usize },
    #[error("invalid integration step: dt={dt}, substeps={substeps}")]
    InvalidStep { dt: f64, substeps: usize },
    #[error("wire simulation diverged at t={time} s (substep {substep})")]
    Diverged { time: f64, substep: usize },
    #[error("singular equilibrium system")]
    SingularSystem,
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum RadioError {
    #[error("invalid antenna configuration: {0}")]
    InvalidConfig(String),
    #[error("distance must be positive, got {0}")]
    NonPositiveDistance(f64),
    #[error("transmitter and receiver positions coincide")]
    CoincidentPoints,
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum EnvError {
    #[error("invalid environment configuration: {0}")]
    InvalidConfig(String),
    #[error("episode finished after {0} steps")]
    EpisodeFinished(usize),
    #[error(transparent)]
    Wire(#[from] WireError),
    #[error(transparent)]
    Radio(#[from] RadioError),
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum DeepqError {
    #[error("non-finite activation in layer {layer}")]
    NonFiniteActivation { layer: usize },
    #[error("non-finite loss or gradient")]
    NonFiniteGradient,
    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),
    #[error("cannot sample {requested} items from a memory holding {available}")]
    InsufficientSamples { requested: usize, available: usize },
    #[error("empty batch")]
    EmptyBatch,
}

#[derive(Debug, Error)]
pub enum CheckpointError {
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
    #[error("not a checkpoint file (bad magic)")]
    BadMagic,
    #[error("unsupported checkpoint version {0}")]
    UnsupportedVersion(u32),
    #[error("corrupt checkpoint: {0}")]
    Corrupt(String),
    #[error("checkpoint shape mismatch: {0}")]
    ShapeMismatch(String),
}

#[derive(Debug, Error)]
pub enum TrainError {
    #[error("variant rarl needs a proxy protagonist")]
    MissingProxy,
    #[error("invalid training configuration: {0}")]
    InvalidConfig(String),
    #[error("episode {episode}, step {step}: {source}")]
    EnvDiverged {
        episode: usize,
        step: usize,
        #[source]
        source: EnvError,
    },
    #[error("episode {episode}, step {step}: {source}")]
    NetDiverged {
        episode: usize,
        step: usize,
        #[source]
        source: DeepqError,
    },
    #[error(transparent)]
    Env(#[from] EnvError),
    #[error(transparent)]
    Deepq(#[from] DeepqError),
    #[error(transparent)]
    Checkpoint(#[from] CheckpointError),
}
