use std::fmt::{Debug, Display};

use num_traits::{Float, NumAssign};

/// Floating point element type of tensors. Implemented for `f32` (training)
/// and `f64` (gradient checks and metric oracles).
pub trait Real:
    Float + NumAssign + Debug + Display + Default + Send + Sync + 'static
{
    const NAME: &'static str;

    fn lit(x: f64) -> Self;

    fn as_f64(self) -> f64;
}

impl Real for f32 {
    const NAME: &'static str = "f32";

    #[inline]
    fn lit(x: f64) -> Self {
        x as f32
    }

    #[inline]
    fn as_f64(self) -> f64 {
        self as f64
    }
}

impl Real for f64 {
    const NAME: &'static str = "f64";

    #[inline]
    fn lit(x: f64) -> Self {
        x
    }

    #[inline]
    fn as_f64(self) -> f64 {
        self
    }
}
