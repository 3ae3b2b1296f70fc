use thiserror::Error;

/// Errors raised by the numerical routines of this crate.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("unknown potential kind `{0}`")]
    UnknownKind(String),
    #[error("parameter `{name}` = {value} outside admissible range ({range})")]
    Parameter {
        name: &'static str,
        value: f64,
        range: &'static str,
    },
    #[error("invalid potential: {0}")]
    InvalidPotential(String),
    #[error("root not bracketed on [{lo}, {hi}]: {context}")]
    NotBracketed { lo: f64, hi: f64, context: String },
    #[error("quadrature did not converge on [{a}, {b}] (estimated error {err:e})")]
    Quadrature { a: f64, b: f64, err: f64 },
    #[error("shooting failed: {0}")]
    Shooting(String),
    #[error("no such profile: {0}")]
    NoSuchProfile(String),
    #[error("integrator step size underflow at t = {0}")]
    StepUnderflow(f64),
    #[error("field left the admissible range at step {step}: value {value} at node ({i}, {j})")]
    RangeViolation {
        step: usize,
        i: usize,
        j: usize,
        value: f64,
    },
    #[error("time step {dt} exceeds the stability bound {bound}")]
    Unstable { dt: f64, bound: f64 },
    #[error("level {0} not attained by the field")]
    LevelNotAttained(f64),
    #[error("no zero crossing found: {0}")]
    NoCrossing(String),
    #[error("branch not single-valued on any window")]
    NoBranch,
    #[error("degenerate fit: {0}")]
    DegenerateFit(String),
    #[error("initial guess `{kind}` incompatible with potential: {reason}")]
    KindMismatch { kind: &'static str, reason: String },
    #[error("empty overlap between compared windows")]
    EmptyOverlap,
    #[error("insufficient samples: {0}")]
    Insufficient(String),
    #[error("malformed input: {0}")]
    Format(String),
}

pub type Result<T> = std::result::Result<T, Error>;
