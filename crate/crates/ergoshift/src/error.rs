use thiserror::Error;

#[derive(Debug, Error)]
pub enum ErgoError {
    #[error("domain error: {0}")]
    Domain(String),
    #[error("observable evaluation failed at step {step}: {msg}")]
    Eval { step: u64, msg: String },
    #[error("grid size 2^{requested} exceeds cap 2^{cap}")]
    GridCap { requested: u32, cap: u32 },
    #[error("coefficient domination violated at orbit step {n}, frequency {m:?}")]
    Domination { n: usize, m: Vec<i64> },
    #[error("quadrature did not converge: {0}")]
    Quadrature(String),
    #[error("monte carlo budget exhausted after {done} of {requested} entries")]
    Budget { done: usize, requested: usize },
}

pub type Result<T> = std::result::Result<T, ErgoError>;
