use thiserror::Error;

use crate::hermat::LinalgError;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error(transparent)]
    Linalg(#[from] LinalgError),

    #[error("not a density matrix: not Hermitian (residual {0:e})")]
    NotHermitian(f64),

    #[error("not a density matrix: trace is {0} instead of 1")]
    TraceNotOne(f64),

    #[error("not a density matrix: negative eigenvalue {0:e}")]
    NegativeEigenvalue(f64),

    #[error("invalid system model: {0}")]
    InvalidModel(String),

    #[error("control index {index} out of range (M = {count})")]
    ControlIndex { index: usize, count: usize },

    #[error("operation requires a two-level system, got n = {0}")]
    NotTwoLevel(usize),

    #[error("Bloch vector norm {0} exceeds 1")]
    BlochNorm(f64),

    #[error("virtual observable is not positive semidefinite (min eigenvalue {0:e})")]
    NotPositive(f64),

    #[error("trace in the feedback law has imaginary residue {0:e}")]
    ImaginaryResidue(f64),

    #[error("negative gain {0}")]
    NegativeGain(f64),

    #[error("expected {expected} entries, got {got}")]
    LengthMismatch { expected: usize, got: usize },

    #[error("precondition violated: {0}")]
    Precondition(String),

    #[error("weight g_{index} = {weight} does not exceed its bound {bound}")]
    WeightBelowBound { index: usize, weight: f64, bound: f64 },

    #[error("weight bound for level {index} is undefined: initial overlap {overlap:e}")]
    UndefinedBound { index: usize, overlap: f64 },

    #[error("weights g_{first} and g_{second} are not distinct")]
    WeightsNotDistinct { first: usize, second: usize },

    #[error("eigenvalues of P collide (gap {0:e})")]
    EigenvalueCollision(f64),

    #[error("target spectrum is degenerate (gap {0:e})")]
    DegenerateTarget(f64),

    #[error("initial state and target are not unitarily equivalent (spectral mismatch {0:e})")]
    NotEquivalent(f64),

    #[error("no valid P after {iterations} iterations; failing permutation {witness:?}")]
    NoValidP { iterations: usize, witness: Vec<usize> },

    #[error("dimension {n} exceeds the enumeration limit {max}")]
    TooLarge { n: usize, max: usize },

    #[error("designed P violates the convergence order: {0}")]
    ChainViolated(String),

    #[error("invalid simulation config: {0}")]
    Config(String),

    #[error("integration aborted at t = {t}: {reason}")]
    IntegratorAbort { t: f64, reason: String },

    #[error("field record gap: {0}")]
    FieldRecord(String),
}

pub type Result<T> = std::result::Result<T, Error>;
