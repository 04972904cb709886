//! Floating-point abstraction so the whole network stack runs in `f32`
//! (training default) or `f64` (gradient checks and relevance math).

use core::fmt::Debug;
use core::iter::Sum;

use num_traits::Float;

pub trait Scalar: Float + Debug + Sum + Send + Sync + 'static {
    fn of_f64(x: f64) -> Self;
    fn as_f64(self) -> f64;
    fn of_f32(x: f32) -> Self;
    fn as_f32(self) -> f32;
}

impl Scalar for f32 {
    #[inline]
    fn of_f64(x: f64) -> Self {
        x as f32
    }
    #[inline]
    fn as_f64(self) -> f64 {
        self as f64
    }
    #[inline]
    fn of_f32(x: f32) -> Self {
        x
    }
    #[inline]
    fn as_f32(self) -> f32 {
        self
    }
}

impl Scalar for f64 {
    #[inline]
    fn of_f64(x: f64) -> Self {
        x
    }
    #[inline]
    fn as_f64(self) -> f64 {
        self
    }
    #[inline]
    fn of_f32(x: f32) -> Self {
        x as f64
    }
    #[inline]
    fn as_f32(self) -> f32 {
        self as f32
    }
}
