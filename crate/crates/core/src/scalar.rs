use nalgebra::RealField;
use num_traits::ToPrimitive;

/// Floating-point scalar used throughout the crate.
///
/// `RealField` supplies the elementary functions and the num-traits numeric
/// tower (`Num`, `Signed`, `FromPrimitive`); `ToPrimitive` is added for
/// reporting and for interfacing with `f64`-based random number generation.
pub trait Real: RealField + Copy + ToPrimitive {
    /// Lossy conversion from `f64`.
    #[inline]
    fn lit(x: f64) -> Self {
        nalgebra::convert(x)
    }

    #[inline]
    fn from_count(n: usize) -> Self {
        nalgebra::convert(n as f64)
    }

    #[inline]
    fn as_f64(self) -> f64 {
        self.to_f64().unwrap_or(f64::NAN)
    }

    #[inline]
    fn finite(self) -> bool {
        self.as_f64().is_finite()
    }

    /// Machine epsilon of the concrete type.
    fn eps() -> Self;

    /// Smallest positive normal value.
    fn min_positive_value() -> Self;
}

impl Real for f64 {
    #[inline]
    fn eps() -> Self {
        f64::EPSILON
    }

    #[inline]
    fn min_positive_value() -> Self {
        f64::MIN_POSITIVE
    }
}

impl Real for f32 {
    #[inline]
    fn eps() -> Self {
        f32::EPSILON
    }

    #[inline]
    fn min_positive_value() -> Self {
        f32::MIN_POSITIVE
    }
}

/// Numerically stable `log(sum(exp(v)))`. Returns `-inf` for an empty slice or
/// when every entry is `-inf`.
pub fn log_sum_exp<T: Real>(values: &[T]) -> T {
    let mut max = T::lit(f64::NEG_INFINITY);
    for &v in values {
        if v > max {
            max = v;
        }
    }
    if !max.finite() {
        return max;
    }
    let mut acc = T::zero();
    for &v in values {
        acc += (v - max).exp();
    }
    max + acc.ln()
}
