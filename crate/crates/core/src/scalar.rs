use std::fmt::Debug;

use num_traits::{FromPrimitive, Num, ToPrimitive};

/// Numeric type used for similarities and scores.
///
/// Implemented for every type with the required arithmetic, which covers
/// `f32`, `f64` and `num_rational::Ratio<i64>`.
pub trait Scalar: Num + Copy + PartialOrd + FromPrimitive + ToPrimitive + Debug {
    /// `num / den`, or zero when `den == 0`.
    fn ratio(num: usize, den: usize) -> Self {
        if den == 0 {
            return Self::zero();
        }
        Self::from_count(num) / Self::from_count(den)
    }

    fn from_count(n: usize) -> Self {
        Self::from_usize(n).expect("count representable in scalar type")
    }

    fn to_f64_lossy(self) -> f64 {
        self.to_f64().unwrap_or(f64::NAN)
    }
}

impl<T> Scalar for T where T: Num + Copy + PartialOrd + FromPrimitive + ToPrimitive + Debug {}
