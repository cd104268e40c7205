use std::fmt::{Debug, Display};

use num_traits::{Float, FromPrimitive, NumCast, ToPrimitive};

/// Real scalar used for losses, thresholds, importances and bounds.
///
/// Counts (misclassifications, pair totals) are kept as integers and only
/// converted at the boundary, so `f32` and `f64` agree on set membership
/// whenever the threshold is not within rounding distance of an objective.
pub trait Scalar:
    Float + FromPrimitive + NumCast + ToPrimitive + Debug + Display + Default + Send + Sync + 'static
{
    fn from_count(c: u64) -> Self {
        <Self as NumCast>::from(c).expect("count fits in scalar")
    }

    fn from_f64_lossy(v: f64) -> Self {
        <Self as NumCast>::from(v).expect("finite value")
    }

    fn as_f64(self) -> f64 {
        self.to_f64().unwrap_or(f64::NAN)
    }
}

impl Scalar for f32 {}
impl Scalar for f64 {}

/// `num / den` evaluated as a ratio of two integer counts.
#[inline]
pub fn ratio<T: Scalar>(num: u64, den: u64) -> T {
    T::from_count(num) / T::from_count(den)
}
