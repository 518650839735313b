//! Scalar abstraction shared by every numeric routine in the crate.
//!
//! All simulation, control and loss code is written once against [`Scalar`]
//! and instantiated with plain floats for evaluation or with
//! [`Dual`](crate::grad::Dual) for exact parameter gradients.

use std::fmt::Debug;

use num_traits::{Float, FloatConst, FromPrimitive, NumAssignOps};

/// A real-like number the simulator can run on.
pub trait Scalar:
    Float + FloatConst + FromPrimitive + NumAssignOps + Debug + Send + Sync + 'static
{
    /// Primal value as `f64`, discarding any derivative information.
    fn re(&self) -> f64;

    /// Lift an `f64` constant (zero derivative).
    #[inline]
    fn cst(x: f64) -> Self {
        Self::from_f64(x).expect("f64 constant must be representable")
    }

    /// `true` when the primal value and all carried derivatives are finite.
    fn all_finite(&self) -> bool {
        self.is_finite()
    }
}

impl Scalar for f64 {
    #[inline]
    fn re(&self) -> f64 {
        *self
    }
}

impl Scalar for f32 {
    #[inline]
    fn re(&self) -> f64 {
        f64::from(*self)
    }
}

/// Saturate `x` to `[lo, hi]`.
///
/// Inside the interval (boundary included) the value passes through with its
/// derivative; outside it is replaced by the constant bound.
#[inline]
pub fn clip<T: Scalar>(x: T, lo: f64, hi: f64) -> T {
    let v = x.re();
    if v > hi {
        T::cst(hi)
    } else if v < lo {
        T::cst(lo)
    } else {
        x
    }
}

/// Wrap an angle to `(-pi, pi]`.
///
/// The shift is a piecewise constant multiple of `2 pi`, so derivatives pass
/// through unchanged.
pub fn wrap_angle<T: Scalar>(a: T) -> T {
    use std::f64::consts::PI;
    let v = a.re();
    let wrapped = v - 2.0 * PI * ((v + PI) / (2.0 * PI)).floor();
    // `wrapped` is in [-pi, pi); map -pi onto +pi.
    let wrapped = if wrapped <= -PI { wrapped + 2.0 * PI } else { wrapped };
    a + T::cst(wrapped - v)
}
