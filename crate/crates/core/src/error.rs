use alloc::string::String;
use core::fmt;

pub type Result<T, E = Error> = core::result::Result<T, E>;

#[derive(Debug, Clone, PartialEq)]
pub enum Error {
    /// Operand shapes violate an operation's shape rule.
    ShapeMismatch { op: &'static str, detail: String },
    /// A graph leaf has no value in the supplied bindings.
    Unbound(String),
    /// An operation produced NaN or an infinity.
    NonFinite { node: usize, op: &'static str },
    /// The loss passed to a backward pass is not a single value.
    NonScalarLoss { shape: alloc::vec::Vec<usize> },
    /// Parameter and gradient maps disagree on names or shapes.
    KeyMismatch(String),
    /// A precondition on an argument does not hold.
    InvalidArgument(String),
    /// The corpus cannot satisfy a balancing or splitting request.
    InsufficientData(String),
    EmptySequence,
}

impl fmt::Display for Error {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Error::ShapeMismatch { op, detail } => write!(f, "shape mismatch in {op}: {detail}"),
            Error::Unbound(name) => write!(f, "no binding for graph leaf `{name}`"),
            Error::NonFinite { node, op } => write!(f, "non-finite value produced by node {node} ({op})"),
            Error::NonScalarLoss { shape } => write!(f, "loss must be scalar, got shape {shape:?}"),
            Error::KeyMismatch(msg) => write!(f, "parameter/gradient mismatch: {msg}"),
            Error::InvalidArgument(msg) => write!(f, "invalid argument: {msg}"),
            Error::InsufficientData(msg) => write!(f, "insufficient data: {msg}"),
            Error::EmptySequence => f.write_str("empty token sequence"),
        }
    }
}

#[cfg(feature = "std")]
impl std::error::Error for Error {}
