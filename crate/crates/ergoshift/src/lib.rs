//! Ergodic-shift Monte Carlo toolkit.
//!
//! Expectations over product spaces are estimated by Birkhoff sums along a
//! measure-preserving shift instead of independent resampling. The crate
//! provides the shift systems (coordinate sequences, the binary-digit map on
//! the torus, the Brownian scaling shift, the Schauder coefficient shift),
//! the ergodic engine with its rate and iterated-logarithm statistics, and a
//! family of calculators that decide when an observable admits the
//! martingale-plus-coboundary decomposition governing those asymptotics.
//!
//! The series calculators are generic over the scalar type through
//! [`scalar::Real`]; simulation code is concrete `f64`. Monte Carlo
//! estimates carry standard errors and enter every verdict conservatively,
//! and no infinite-sum claim is made from finite evidence unless the
//! observed decay certifies it or a closed-form tail is supplied.

pub mod chaos;
pub mod ergodic;
pub mod error;
pub mod gordin;
pub mod product;
pub mod quad;
pub mod report;
pub mod scalar;
pub mod sde;
pub mod stream;
pub mod torus;
pub mod wiener;

pub use error::{ErgoError, Result};
pub use report::{GordinReport, Verdict};
pub use scalar::{F32, F64};

/// Concrete aliases for the generic calculators.
pub type NormSequence64 = gordin::NormSequence<f64>;
pub type NormSequence32 = gordin::NormSequence<f32>;
pub type CriterionVerdict64 = gordin::CriterionVerdict<f64>;
pub type FourierObservable64 = torus::FourierObservable<f64>;
pub type FourierObservable32 = torus::FourierObservable<f32>;
