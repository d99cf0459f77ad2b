use thiserror::Error;

/// Errors produced by tensor construction, graph evaluation, and optimizer steps.
#[derive(Debug, Error)]
pub enum NumError {
    #[error("{op}: shape mismatch {lhs:?} vs {rhs:?}")]
    ShapeMismatch {
        op: &'static str,
        lhs: Vec<usize>,
        rhs: Vec<usize>,
    },
    #[error("{op}: expected {expected}, got shape {got:?}")]
    BadRank {
        op: &'static str,
        expected: &'static str,
        got: Vec<usize>,
    },
    #[error("{op}: index {index} out of bounds for length {len}")]
    IndexOutOfBounds {
        op: &'static str,
        index: usize,
        len: usize,
    },
    #[error("{op}: produced a non-finite value")]
    NonFinite { op: &'static str },
    #[error("invalid tensor: {0}")]
    InvalidTensor(String),
    #[error("backward called before forward: graph values are stale")]
    BackwardBeforeForward,
    #[error("node {0} is not a leaf")]
    NotALeaf(usize),
    #[error("gradient for `{0}` is non-finite; step aborted")]
    NonFiniteGrad(String),
    #[error("adam: parameter `{name}` has shape {param:?} but moment/gradient shape {other:?}")]
    AdamShape {
        name: String,
        param: Vec<usize>,
        other: Vec<usize>,
    },
}

pub type Result<T> = std::result::Result<T, NumError>;
