use std::path::PathBuf;

use crate::lexicon::Distributivity;
use crate::model::ActivationCoord;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("I/O error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("failed to parse lexicon: {0}")]
    LexiconParse(String),

    #[error("lexicon entry {entry:?} violates rule: {rule}")]
    LexiconRule { entry: String, rule: String },

    #[error("missing predicate type: lexicon has no {0} predicates")]
    MissingPredicateType(Distributivity),

    #[error("lexicon too small to form any matched set: {0}")]
    LexiconTooSmall(String),

    #[error("no {wanted} predicate available to swap into pair {pair_id}")]
    NoOppositePredicate {
        pair_id: String,
        wanted: Distributivity,
    },

    #[error("dataset line {line}: {message}")]
    Schema { line: usize, message: String },

    #[error("invalid pair {pair_id}: {message}")]
    InvalidPair { pair_id: String, message: String },

    #[error("invalid matched set {match_id}: {message}")]
    InvalidMatchedSet { match_id: String, message: String },

    #[error("invalid label distribution: {0}")]
    InvalidDistribution(String),

    #[error("invalid model metadata: {0}")]
    InvalidMeta(String),

    #[error("invalid mediator: {0}")]
    InvalidMediator(String),

    #[error("coordinate {coord} out of bounds for model with {n_layers} layers and hidden size {hidden_size}")]
    CoordOutOfBounds {
        coord: ActivationCoord,
        n_layers: usize,
        hidden_size: usize,
    },

    #[error("input of {len} tokens exceeds the model's maximum sequence length {max}")]
    SequenceTooLong { len: usize, max: usize },

    #[error("empty input: {0}")]
    EmptyInput(String),

    #[error("strict alignment requires equal lengths, snapshot has {snapshot} positions but input has {input}")]
    AlignmentMismatch { snapshot: usize, input: usize },

    #[error("decomposition identity violated for {match_id}: te={te}, nie={nie}, nde={nde}")]
    Decomposition {
        match_id: String,
        te: f64,
        nie: f64,
        nde: f64,
    },

    #[error("cannot summarize effects: {0}")]
    Summary(String),

    #[error("statistics: {0}")]
    Stats(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("layer {layer} selection contains coordinate {coord} from another layer")]
    StraddlingLayers {
        layer: usize,
        coord: ActivationCoord,
    },

    #[error("checkpoint {0} already exists; rerun with --resume to continue it or delete it to start over")]
    CheckpointExists(PathBuf),

    #[error("checkpoint {path} does not match this run: {message}")]
    CheckpointMismatch { path: PathBuf, message: String },

    #[error(
        "sweep stopped after {completed} of {total} coordinates; state saved to {checkpoint}, rerun with --resume to finish"
    )]
    SweepInterrupted {
        completed: usize,
        total: usize,
        checkpoint: PathBuf,
    },

    #[error("model checkpoint {path}: {message}")]
    Checkpoint { path: PathBuf, message: String },

    #[error("json: {0}")]
    Json(#[from] serde_json::Error),

    #[error("csv: {0}")]
    Csv(#[from] csv::Error),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
