//! Crate-wide error type.

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    /// Tensor or layer shapes do not conform; both sides are named.
    #[error("shape mismatch: expected {expected}, got {actual}{}", context_suffix(.context))]
    ShapeMismatch {
        expected: String,
        actual: String,
        context: String,
    },

    /// A model spec failed structural validation.
    #[error("invalid model spec: {0}")]
    InvalidSpec(String),

    /// A dataset violated one of its invariants.
    #[error("invalid dataset: {0}")]
    InvalidDataset(String),

    /// Training produced a non-finite loss.
    #[error("training diverged at epoch {epoch}, batch {batch}: loss is not finite")]
    Diverged { epoch: usize, batch: usize },

    /// A mutation operator found no layer/neuron it may legally act on.
    #[error("no eligible target for operator {op}: {reason}")]
    NoEligibleTarget { op: String, reason: String },

    /// An operator was configured inconsistently.
    #[error("invalid operator configuration: {0}")]
    InvalidOperator(String),

    /// Mutation-testing metrics are undefined on the given inputs.
    #[error("analysis is undefined: {0}")]
    EmptyAnalysis(String),

    /// Model file carries an unsupported format version.
    #[error("model file version mismatch: found {found}, supported {supported}")]
    VersionMismatch { found: u32, supported: u32 },

    /// Model file payload does not match its stored checksum.
    #[error("model file checksum failure: stored {stored:#010x}, computed {computed:#010x}")]
    ChecksumMismatch { stored: u32, computed: u32 },

    /// Model file manifest cannot be interpreted.
    #[error("malformed model manifest: {0}")]
    MalformedManifest(String),

    /// IDX file has an unexpected magic number.
    #[error("bad IDX magic in {path}: expected {expected:#010x}, found {found:#010x}")]
    BadMagic {
        path: String,
        expected: u32,
        found: u32,
    },

    /// IDX payload is shorter than its header promises.
    #[error("truncated IDX payload in {path}: need {needed} bytes, have {have}")]
    TruncatedIdx {
        path: String,
        needed: usize,
        have: usize,
    },

    #[error("configuration error: {0}")]
    Config(String),

    #[error("I/O error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

fn context_suffix(context: &str) -> String {
    if context.is_empty() {
        String::new()
    } else {
        format!(" ({context})")
    }
}

impl Error {
    pub fn shape_mismatch(
        expected: impl Into<String>,
        actual: impl Into<String>,
        context: impl Into<String>,
    ) -> Self {
        Error::ShapeMismatch {
            expected: expected.into(),
            actual: actual.into(),
            context: context.into(),
        }
    }

    pub fn io(path: impl Into<String>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
