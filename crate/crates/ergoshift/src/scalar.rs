//! Scalar abstraction: the series and spectral calculus is generic over the
//! float width, concrete simulation code runs on [`F64`].

use std::fmt::Debug;
use std::iter::Sum;

use num_traits::{Float, FromPrimitive, ToPrimitive};

/// Floating point scalar usable by the generic calculators.
pub trait Real:
    Float + FromPrimitive + ToPrimitive + Sum + Debug + Send + Sync + 'static
{
    fn from_f(x: f64) -> Self {
        Self::from_f64(x).expect("f64 conversion")
    }
    fn to_f(self) -> f64 {
        self.to_f64().expect("f64 conversion")
    }
}

impl Real for f32 {}
impl Real for f64 {}

/// Default scalar for simulation-driven code.
pub type F64 = f64;
pub type F32 = f32;
