//! Scalar abstraction shared by the numeric parts of the toolkit.
//!
//! Attention maps, embeddings, language-model scores and evaluation metrics
//! are generic over [`Real`], so the same code runs in `f32` for bulk
//! embedding work and in `f64` where comparisons need full precision.

use std::fmt::{Debug, Display};
use std::iter::Sum;

use num_traits::{Float, FromPrimitive, ToPrimitive};

pub trait Real: Float + FromPrimitive + ToPrimitive + Sum + Default + Debug + Display + Send + Sync + 'static {
    /// Lossy conversion from `f64`; used for configuration constants.
    fn of(x: f64) -> Self {
        Self::from_f64(x).expect("f64 is representable in every Real type")
    }

    fn of_count(n: usize) -> Self {
        Self::from_usize(n).expect("count is representable in every Real type")
    }

    fn to_f64_lossy(self) -> f64 {
        self.to_f64().unwrap_or(f64::NAN)
    }
}

impl Real for f32 {}
impl Real for f64 {}

/// `ceil(rate * n)` that ignores floating-point noise around integers, so
/// `0.7 * 10` yields 7 rather than 8.
pub fn ceil_fraction(rate: f64, n: usize) -> usize {
    let x = rate * n as f64;
    let nearest = x.round();
    if (x - nearest).abs() < 1e-9 {
        nearest as usize
    } else {
        x.ceil() as usize
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn ceil_fraction_absorbs_rounding_noise() {
        assert_eq!(ceil_fraction(0.7, 10), 7);
        assert_eq!(ceil_fraction(0.35, 20), 7);
        assert_eq!(ceil_fraction(0.3, 10), 3);
        assert_eq!(ceil_fraction(0.5, 3), 2);
        assert_eq!(ceil_fraction(1.0, 0), 0);
        assert_eq!(ceil_fraction(0.01, 1), 1);
    }

    #[test]
    fn conversions_round_trip_small_values() {
        assert_eq!(<f32 as Real>::of(0.25), 0.25f32);
        assert_eq!(<f64 as Real>::of_count(7), 7.0);
    }
}
