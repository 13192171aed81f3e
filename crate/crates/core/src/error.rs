use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

/// Problems found while decoding a weight file or a network manifest.
///
/// Every variant that can be attributed to a layer carries that layer's name.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum FormatError {
    #[error("bad magic: expected {expected:?}, found {found:?}")]
    BadMagic { expected: [u8; 4], found: [u8; 4] },
    #[error("unsupported format version {found} (expected {expected})")]
    UnsupportedVersion { expected: u32, found: u32 },
    #[error("truncated payload while reading {what}")]
    Truncated { what: String },
    #[error("layer `{layer}`: shape mismatch, expected {expected} values, found {found}")]
    ShapeMismatch {
        layer: String,
        expected: usize,
        found: usize,
    },
    #[error("manifest line {line}: unknown layer kind `{kind}`")]
    UnknownLayerKind { line: usize, kind: String },
    #[error("manifest line {line}: tag `{tag}` does not follow a layer")]
    DanglingTag { line: usize, tag: String },
    #[error("layer `{layer}`: missing tensor `{tensor}`")]
    MissingTensor { layer: String, tensor: String },
    #[error("tensor `{name}` does not belong to any conv layer")]
    UnusedTensor { name: String },
    #[error("layer `{layer}`: expects {expected} input channels but receives {found}")]
    ChannelChain {
        layer: String,
        expected: usize,
        found: usize,
    },
    #[error("manifest line {line}: {message}")]
    Syntax { line: usize, message: String },
    #[error("network declares {found} pyramid tags, at least {required} are needed")]
    TooFewTags { required: usize, found: usize },
    #[error("invalid utf-8 in {what}")]
    Utf8 { what: String },
}

#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch: {0}")]
    Dimension(String),
    #[error(transparent)]
    Format(#[from] FormatError),
    #[error("non-finite {what} at iteration {iteration}")]
    NonFinite { what: &'static str, iteration: usize },
    #[error("target grid {height}x{width} exceeds the exhaustive search limit of {limit}x{limit}")]
    GridTooLarge {
        height: usize,
        width: usize,
        limit: usize,
    },
    #[error("linear solver stopped at relative residual {residual:e} after {iterations} iterations")]
    SolverDiverged { residual: f64, iterations: usize },
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("layer {level}: {source}")]
    AtLevel {
        level: usize,
        #[source]
        source: Box<Error>,
    },
}

impl Error {
    pub(crate) fn dims(msg: impl Into<String>) -> Self {
        Error::Dimension(msg.into())
    }

    pub(crate) fn at_level(self, level: usize) -> Self {
        Error::AtLevel {
            level,
            source: Box::new(self),
        }
    }
}
