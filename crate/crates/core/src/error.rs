//! Error type shared by all modules.

use alloc::string::String;
use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum CoreError {
    #[error("letter {letter} out of range for alphabet of size {alphabet}")]
    LetterOutOfRange { letter: u8, alphabet: usize },
    #[error("shift by {shift} exceeds word length {len}")]
    ShiftOutOfRange { shift: usize, len: usize },
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("matrix entries must be finite")]
    NonFiniteEntries,
    #[error("matrix {index} is singular within tolerance (|det| = {det:e})")]
    SingularMatrix { index: usize, det: f64 },
    #[error("map tuple is not contracting: max operator norm {delta}")]
    NotContracting { delta: f64 },
    #[error("map tuple must contain at least one matrix")]
    EmptyTuple,
    #[error("{0}")]
    InvalidArgument(String),
    #[error("node budget exhausted after {nodes} nodes")]
    BudgetExhausted { nodes: u64 },
    #[error(
        "no block length up to {max_block} reaches lambda > 1 (best {best_lambda} at N = {best_n})"
    )]
    NoExpandingBlock {
        max_block: usize,
        best_lambda: f64,
        best_n: usize,
    },
    #[error("no certified block class up to N = {max_n} (best score {best_score})")]
    NoCertifiedClass { max_n: usize, best_score: f64 },
    #[error("maps {i} and {j} do not commute: commutator norm {norm:e} exceeds tolerance {tol:e}")]
    NotCommuting {
        i: usize,
        j: usize,
        norm: f64,
        tol: f64,
    },
    #[error("word is not a member of the block class")]
    WordNotInClass,
    #[error("empty point cloud")]
    EmptyCloud,
    #[error("bisection cannot make progress: pressure is flat on [{lo}, {hi}]")]
    FlatPressure { lo: f64, hi: f64 },
    #[error("cylinder bound violated at word {word}: ratio {ratio}")]
    CylinderBoundViolated { word: String, ratio: f64 },
}

pub type Result<T> = core::result::Result<T, CoreError>;
