//! Scalar abstraction shared by the exact-analysis modules.

use std::fmt;

use num_traits::{Float, FromPrimitive, NumAssign, ToPrimitive};

/// Floating-point type used for weights, probabilities and linear programs.
///
/// Implemented for `f32` and `f64`. The simulation side always runs in
/// `f64`; the analytic side (weights, equilibria, capacity LP, drift) is
/// generic so the same code can be checked in single precision.
pub trait Scalar:
    Float + FromPrimitive + ToPrimitive + NumAssign + Default + fmt::Debug + fmt::Display + Send + Sync + 'static
{
    /// Lossy conversion from `f64`.
    fn of(v: f64) -> Self {
        Self::from_f64(v).expect("finite f64 is representable")
    }

    fn of_usize(v: usize) -> Self {
        Self::from_usize(v).expect("usize is representable")
    }

    fn as_f64(self) -> f64 {
        self.to_f64().expect("scalar converts to f64")
    }

    /// `ln(n!)` via the log-gamma function.
    fn ln_factorial(n: u64) -> Self {
        Self::of(libm::lgamma(n as f64 + 1.0))
    }

    /// `ln(n! / (n - m)!)` summed term by term; `m` is small (at most the
    /// number of channels).
    fn ln_falling(n: u64, m: u64) -> Self {
        debug_assert!(m <= n);
        let mut acc = Self::zero();
        for i in 0..m {
            acc += Self::of((n - i) as f64).ln();
        }
        acc
    }
}

impl Scalar for f32 {}
impl Scalar for f64 {}

/// Numerically stable `ln(sum(exp(v)))`. Returns `-inf` for an empty slice.
pub fn log_sum_exp<T: Scalar>(values: &[T]) -> T {
    let max = values
        .iter()
        .copied()
        .fold(T::neg_infinity(), |a, b| if b > a { b } else { a });
    if max == T::neg_infinity() {
        return max;
    }
    let sum = values
        .iter()
        .fold(T::zero(), |acc, &v| acc + (v - max).exp());
    max + sum.ln()
}
