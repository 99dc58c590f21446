//! Crate-wide error type.

use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("io error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("{path}:{line}: manifest parse error: {message}")]
    ManifestParse {
        path: PathBuf,
        line: usize,
        message: String,
    },

    #[error("record `{id}`: {message}")]
    RecordValidation { id: String, message: String },

    #[error("duplicate record id `{id}` ({path}:{line})")]
    DuplicateId {
        id: String,
        path: PathBuf,
        line: usize,
    },

    #[error("dimension `{requested}` not present in manifest; available: {}", available.join(", "))]
    UnknownDimension {
        requested: String,
        available: Vec<String>,
    },

    #[error("validation size {requested} must be smaller than the train pool of {pool} records")]
    ValidationSizeTooLarge { requested: usize, pool: usize },

    #[error("cannot sample {requested} records from a source of {available}")]
    SampleTooLarge { requested: usize, available: usize },

    #[error("cannot sample from an empty source")]
    EmptySource,

    #[error("records mix scales: {first} vs {second} (record `{id}`)")]
    MixedScales {
        first: String,
        second: String,
        id: String,
    },

    #[error("invalid score scale: {0}")]
    InvalidScale(String),

    #[error("score {score} outside source scale [{min}, {max}]")]
    ScoreOutOfRange { score: f64, min: f64, max: f64 },

    #[error("unknown encoder `{requested}`; known encoders: {}", known.join(", "))]
    UnknownEncoder {
        requested: String,
        known: Vec<String>,
    },

    #[error(
        "encoder `{encoder_id}` is external and no feature source is attached; \
         supply precomputed frame features (it is never silently replaced by the toy encoder)"
    )]
    ExternalEncoderUnavailable { encoder_id: String },

    #[error("waveform error: {0}")]
    InvalidWaveform(String),

    #[error("sample rate {got} Hz does not match the {expected} Hz the encoder expects")]
    SampleRateMismatch { expected: u32, got: u32 },

    #[error("frame features error: {0}")]
    InvalidFrames(String),

    #[error("no valid frames to pool")]
    NoValidFrames,

    #[error("feature file {path}: {message}")]
    FeatureFile { path: PathBuf, message: String },

    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("invalid head config: {0}")]
    InvalidHeadConfig(String),

    #[error("empty batch")]
    EmptyBatch,

    #[error("invalid train config: {0}")]
    InvalidTrainConfig(String),

    #[error("invalid paradigm spec: {0}")]
    InvalidParadigm(String),

    #[error("empty split: {0}")]
    EmptySplit(String),

    #[error("checkpoint {path}: {message}")]
    Checkpoint { path: PathBuf, message: String },

    #[error(
        "encoder mismatch: checkpoint was trained with `{checkpoint}` but features come from `{features}`"
    )]
    EncoderMismatch { checkpoint: String, features: String },

    #[error("ground-truth scale {got} does not match the scale the checkpoint declares ({expected})")]
    TargetScaleMismatch { expected: String, got: String },

    #[error("stage-1 lineage digest mismatch: expected {expected}, checkpoint hashes to {got}")]
    LineageMismatch { expected: String, got: String },

    #[error("metric input lengths differ: {left} vs {right}")]
    MetricLengthMismatch { left: usize, right: usize },

    #[error("metric input is empty")]
    EmptyMetricInput,

    #[error("conflicting reports for cell {cell}: runs {}", run_ids.join(", "))]
    ConflictingReports { cell: String, run_ids: Vec<String> },

    #[error("run directory {path} already exists; concurrent runs must target distinct directories")]
    RunDirExists { path: PathBuf },

    #[error("wav file {path}: {message}")]
    Wav { path: PathBuf, message: String },

    #[error("histogram requires integer-valued scores; record `{id}` has score {score}")]
    NonIntegerScore { id: String, score: f64 },

    #[error("fixture error: {0}")]
    Fixture(String),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
