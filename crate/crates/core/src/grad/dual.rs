//! Multi-tangent dual numbers.
//!
//! A [`Dual`] carries a primal value together with up to [`MAX_PARAMS`]
//! partial derivatives. A dual with zero active tangents is a constant and
//! broadcasts against any other length; two non-constant duals must agree on
//! their tangent length.

use std::cmp::Ordering;
use std::fmt;
use std::num::FpCategory;
use std::ops::{
    Add, AddAssign, Div, DivAssign, Mul, MulAssign, Neg, Rem, RemAssign, Sub, SubAssign,
};

use num_traits::{
    Float, FloatConst, FromPrimitive, Num, NumCast, One, ToPrimitive, Zero,
};

use crate::scalar::Scalar;

/// Upper bound on the number of simultaneously differentiated parameters.
pub const MAX_PARAMS: usize = 8;

/// Value plus a fixed-length tangent vector.
///
/// Equality and ordering compare the primal value only, so control flow
/// (clipping, argmin, pivoting) behaves exactly as it would on plain floats.
#[derive(Clone, Copy)]
pub struct Dual<F> {
    value: F,
    tangents: [F; MAX_PARAMS],
    len: u8,
}

#[inline]
fn join_len(a: u8, b: u8) -> u8 {
    if a == b || b == 0 {
        a
    } else if a == 0 {
        b
    } else {
        panic!("tangent length mismatch: {a} vs {b}")
    }
}

impl<F: Float> Dual<F> {
    /// A constant: zero active tangents.
    #[inline]
    pub fn constant(value: F) -> Self {
        Self {
            value,
            tangents: [F::zero(); MAX_PARAMS],
            len: 0,
        }
    }

    /// Independent variable `index` out of `count` active parameters.
    pub fn variable(value: F, index: usize, count: usize) -> Self {
        assert!(count <= MAX_PARAMS, "at most {MAX_PARAMS} parameters");
        assert!(index < count, "parameter index out of range");
        let mut tangents = [F::zero(); MAX_PARAMS];
        tangents[index] = F::one();
        Self {
            value,
            tangents,
            len: count as u8,
        }
    }

    /// Build from an explicit tangent slice.
    pub fn with_tangents(value: F, tangents: &[F]) -> Self {
        assert!(tangents.len() <= MAX_PARAMS, "at most {MAX_PARAMS} parameters");
        let mut t = [F::zero(); MAX_PARAMS];
        t[..tangents.len()].copy_from_slice(tangents);
        Self {
            value,
            tangents: t,
            len: tangents.len() as u8,
        }
    }

    #[inline]
    pub fn value(&self) -> F {
        self.value
    }

    /// Active tangents (empty for constants).
    #[inline]
    pub fn tangents(&self) -> &[F] {
        &self.tangents[..self.len as usize]
    }

    /// Number of active tangents.
    #[inline]
    pub fn tangent_len(&self) -> usize {
        self.len as usize
    }

    /// Gradient padded to `count` entries; constants yield zeros.
    pub fn gradient(&self, count: usize) -> Vec<F> {
        assert!(count <= MAX_PARAMS);
        self.tangents[..count].to_vec()
    }

    /// Apply the chain rule for a unary function with value `v` and local
    /// derivative `d`.
    #[inline]
    fn chain(&self, v: F, d: F) -> Self {
        let mut tangents = [F::zero(); MAX_PARAMS];
        for i in 0..self.len as usize {
            tangents[i] = self.tangents[i] * d;
        }
        Self {
            value: v,
            tangents,
            len: self.len,
        }
    }

    /// Combine with another dual: result tangent `da * ta + db * tb`.
    #[inline]
    fn combine(&self, other: &Self, v: F, da: F, db: F) -> Self {
        let len = join_len(self.len, other.len);
        let mut tangents = [F::zero(); MAX_PARAMS];
        for i in 0..len as usize {
            tangents[i] = self.tangents[i] * da + other.tangents[i] * db;
        }
        Self {
            value: v,
            tangents,
            len,
        }
    }

    fn tangents_finite(&self) -> bool {
        self.tangents().iter().all(|t| t.is_finite())
    }
}

impl<F: Float + fmt::Debug> fmt::Debug for Dual<F> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Dual({:?}, {:?})", self.value, self.tangents())
    }
}

impl<F: Float + fmt::Display> fmt::Display for Dual<F> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        fmt::Display::fmt(&self.value, f)
    }
}

impl<F: Float> PartialEq for Dual<F> {
    fn eq(&self, other: &Self) -> bool {
        self.value == other.value
    }
}

impl<F: Float> PartialOrd for Dual<F> {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        self.value.partial_cmp(&other.value)
    }
}

impl<F: Float> From<F> for Dual<F> {
    fn from(value: F) -> Self {
        Self::constant(value)
    }
}

// ---------------------------------------------------------------------------
// Arithmetic
// ---------------------------------------------------------------------------

impl<F: Float> Neg for Dual<F> {
    type Output = Self;
    #[inline]
    fn neg(self) -> Self {
        self.chain(-self.value, -F::one())
    }
}

impl<F: Float> Add for Dual<F> {
    type Output = Self;
    #[inline]
    fn add(self, rhs: Self) -> Self {
        self.combine(&rhs, self.value + rhs.value, F::one(), F::one())
    }
}

impl<F: Float> Sub for Dual<F> {
    type Output = Self;
    #[inline]
    fn sub(self, rhs: Self) -> Self {
        self.combine(&rhs, self.value - rhs.value, F::one(), -F::one())
    }
}

impl<F: Float> Mul for Dual<F> {
    type Output = Self;
    #[inline]
    fn mul(self, rhs: Self) -> Self {
        self.combine(&rhs, self.value * rhs.value, rhs.value, self.value)
    }
}

impl<F: Float> Div for Dual<F> {
    type Output = Self;
    #[inline]
    fn div(self, rhs: Self) -> Self {
        let inv = rhs.value.recip();
        let q = self.value * inv;
        self.combine(&rhs, q, inv, -q * inv)
    }
}

impl<F: Float> Rem for Dual<F> {
    type Output = Self;
    fn rem(self, rhs: Self) -> Self {
        // a % b = a - trunc(a / b) * b
        let n = (self.value / rhs.value).trunc();
        self.combine(&rhs, self.value % rhs.value, F::one(), -n)
    }
}

macro_rules! assign_op {
    ($tr:ident, $m:ident, $op:tt) => {
        impl<F: Float> $tr for Dual<F> {
            #[inline]
            fn $m(&mut self, rhs: Self) {
                *self = *self $op rhs;
            }
        }
    };
}
assign_op!(AddAssign, add_assign, +);
assign_op!(SubAssign, sub_assign, -);
assign_op!(MulAssign, mul_assign, *);
assign_op!(DivAssign, div_assign, /);
assign_op!(RemAssign, rem_assign, %);

impl<F: Float> Zero for Dual<F> {
    fn zero() -> Self {
        Self::constant(F::zero())
    }
    fn is_zero(&self) -> bool {
        self.value.is_zero()
    }
}

impl<F: Float> One for Dual<F> {
    fn one() -> Self {
        Self::constant(F::one())
    }
}

impl<F: Float> Num for Dual<F> {
    type FromStrRadixErr = F::FromStrRadixErr;
    fn from_str_radix(s: &str, radix: u32) -> Result<Self, Self::FromStrRadixErr> {
        F::from_str_radix(s, radix).map(Self::constant)
    }
}

impl<F: Float> ToPrimitive for Dual<F> {
    fn to_i64(&self) -> Option<i64> {
        self.value.to_i64()
    }
    fn to_u64(&self) -> Option<u64> {
        self.value.to_u64()
    }
    fn to_f64(&self) -> Option<f64> {
        self.value.to_f64()
    }
}

impl<F: Float> NumCast for Dual<F> {
    fn from<T: ToPrimitive>(n: T) -> Option<Self> {
        <F as NumCast>::from(n).map(Self::constant)
    }
}

impl<F: Float> FromPrimitive for Dual<F> {
    fn from_i64(n: i64) -> Option<Self> {
        <F as NumCast>::from(n).map(Self::constant)
    }
    fn from_u64(n: u64) -> Option<Self> {
        <F as NumCast>::from(n).map(Self::constant)
    }
    fn from_f64(n: f64) -> Option<Self> {
        <F as NumCast>::from(n).map(Self::constant)
    }
}

macro_rules! const_fn {
    ($($name:ident),*) => {
        $(
            fn $name() -> Self {
                Self::constant(F::$name())
            }
        )*
    };
}

impl<F: Float + FloatConst> FloatConst for Dual<F> {
    const_fn!(
        E, FRAC_1_PI, FRAC_1_SQRT_2, FRAC_2_PI, FRAC_2_SQRT_PI, FRAC_PI_2, FRAC_PI_3,
        FRAC_PI_4, FRAC_PI_6, FRAC_PI_8, LN_10, LN_2, LOG10_E, LOG2_E, PI, SQRT_2
    );
}

// ---------------------------------------------------------------------------
// Elementary functions
// ---------------------------------------------------------------------------

impl<F: Float> Float for Dual<F> {
    fn nan() -> Self {
        Self::constant(F::nan())
    }
    fn infinity() -> Self {
        Self::constant(F::infinity())
    }
    fn neg_infinity() -> Self {
        Self::constant(F::neg_infinity())
    }
    fn neg_zero() -> Self {
        Self::constant(F::neg_zero())
    }
    fn min_value() -> Self {
        Self::constant(F::min_value())
    }
    fn min_positive_value() -> Self {
        Self::constant(F::min_positive_value())
    }
    fn max_value() -> Self {
        Self::constant(F::max_value())
    }
    fn is_nan(self) -> bool {
        self.value.is_nan()
    }
    fn is_infinite(self) -> bool {
        self.value.is_infinite()
    }
    fn is_finite(self) -> bool {
        self.value.is_finite()
    }
    fn is_normal(self) -> bool {
        self.value.is_normal()
    }
    fn classify(self) -> FpCategory {
        self.value.classify()
    }
    fn floor(self) -> Self {
        Self::constant(self.value.floor()).with_len(self.len)
    }
    fn ceil(self) -> Self {
        Self::constant(self.value.ceil()).with_len(self.len)
    }
    fn round(self) -> Self {
        Self::constant(self.value.round()).with_len(self.len)
    }
    fn trunc(self) -> Self {
        Self::constant(self.value.trunc()).with_len(self.len)
    }
    fn fract(self) -> Self {
        self.chain(self.value.fract(), F::one())
    }
    /// Subgradient 0 at the origin.
    fn abs(self) -> Self {
        let d = if self.value > F::zero() {
            F::one()
        } else if self.value < F::zero() {
            -F::one()
        } else {
            F::zero()
        };
        self.chain(self.value.abs(), d)
    }
    fn signum(self) -> Self {
        Self::constant(self.value.signum()).with_len(self.len)
    }
    fn is_sign_positive(self) -> bool {
        self.value.is_sign_positive()
    }
    fn is_sign_negative(self) -> bool {
        self.value.is_sign_negative()
    }
    fn mul_add(self, a: Self, b: Self) -> Self {
        self * a + b
    }
    fn recip(self) -> Self {
        let r = self.value.recip();
        self.chain(r, -r * r)
    }
    fn powi(self, n: i32) -> Self {
        if n == 0 {
            return Self::one().with_len(self.len);
        }
        let d = F::from(n).unwrap() * self.value.powi(n - 1);
        self.chain(self.value.powi(n), d)
    }
    fn powf(self, n: Self) -> Self {
        let v = self.value.powf(n.value);
        let da = if n.value.is_zero() {
            F::zero()
        } else {
            n.value * self.value.powf(n.value - F::one())
        };
        let db = if n.len == 0 { F::zero() } else { v * self.value.ln() };
        self.combine(&n, v, da, db)
    }
    fn sqrt(self) -> Self {
        let s = self.value.sqrt();
        self.chain(s, (s + s).recip())
    }
    fn exp(self) -> Self {
        let e = self.value.exp();
        self.chain(e, e)
    }
    fn exp2(self) -> Self {
        let e = self.value.exp2();
        self.chain(e, e * F::from(std::f64::consts::LN_2).unwrap())
    }
    fn ln(self) -> Self {
        self.chain(self.value.ln(), self.value.recip())
    }
    fn log(self, base: Self) -> Self {
        self.ln() / base.ln()
    }
    fn log2(self) -> Self {
        let d = (self.value * F::from(std::f64::consts::LN_2).unwrap()).recip();
        self.chain(self.value.log2(), d)
    }
    fn log10(self) -> Self {
        let d = (self.value * F::from(std::f64::consts::LN_10).unwrap()).recip();
        self.chain(self.value.log10(), d)
    }
    fn max(self, other: Self) -> Self {
        if other.value > self.value {
            other
        } else {
            self
        }
    }
    fn min(self, other: Self) -> Self {
        if other.value < self.value {
            other
        } else {
            self
        }
    }
    fn abs_sub(self, other: Self) -> Self {
        if self.value <= other.value {
            Self::zero()
        } else {
            self - other
        }
    }
    fn cbrt(self) -> Self {
        let c = self.value.cbrt();
        let three = F::from(3.0).unwrap();
        self.chain(c, (three * c * c).recip())
    }
    fn hypot(self, other: Self) -> Self {
        let h = self.value.hypot(other.value);
        self.combine(&other, h, self.value / h, other.value / h)
    }
    fn sin(self) -> Self {
        let (s, c) = self.value.sin_cos();
        self.chain(s, c)
    }
    fn cos(self) -> Self {
        let (s, c) = self.value.sin_cos();
        self.chain(c, -s)
    }
    fn tan(self) -> Self {
        let t = self.value.tan();
        self.chain(t, F::one() + t * t)
    }
    fn asin(self) -> Self {
        let d = (F::one() - self.value * self.value).sqrt().recip();
        self.chain(self.value.asin(), d)
    }
    fn acos(self) -> Self {
        let d = -(F::one() - self.value * self.value).sqrt().recip();
        self.chain(self.value.acos(), d)
    }
    fn atan(self) -> Self {
        let d = (F::one() + self.value * self.value).recip();
        self.chain(self.value.atan(), d)
    }
    fn atan2(self, other: Self) -> Self {
        // d atan2(y, x) = (x dy - y dx) / (x^2 + y^2)
        let (y, x) = (self.value, other.value);
        let r2 = x * x + y * y;
        self.combine(&other, y.atan2(x), x / r2, -y / r2)
    }
    fn sin_cos(self) -> (Self, Self) {
        let (s, c) = self.value.sin_cos();
        (self.chain(s, c), self.chain(c, -s))
    }
    fn exp_m1(self) -> Self {
        self.chain(self.value.exp_m1(), self.value.exp())
    }
    fn ln_1p(self) -> Self {
        self.chain(self.value.ln_1p(), (F::one() + self.value).recip())
    }
    fn sinh(self) -> Self {
        self.chain(self.value.sinh(), self.value.cosh())
    }
    fn cosh(self) -> Self {
        self.chain(self.value.cosh(), self.value.sinh())
    }
    fn tanh(self) -> Self {
        let t = self.value.tanh();
        self.chain(t, F::one() - t * t)
    }
    fn asinh(self) -> Self {
        let d = (self.value * self.value + F::one()).sqrt().recip();
        self.chain(self.value.asinh(), d)
    }
    fn acosh(self) -> Self {
        let d = (self.value * self.value - F::one()).sqrt().recip();
        self.chain(self.value.acosh(), d)
    }
    fn atanh(self) -> Self {
        let d = (F::one() - self.value * self.value).recip();
        self.chain(self.value.atanh(), d)
    }
    fn integer_decode(self) -> (u64, i16, i8) {
        self.value.integer_decode()
    }
}

impl<F: Float> Dual<F> {
    /// Keep the tangent length but zero the tangents.
    #[inline]
    fn with_len(mut self, len: u8) -> Self {
        self.len = len;
        self
    }
}

impl<F> Scalar for Dual<F>
where
    F: Float + FloatConst + fmt::Debug + Send + Sync + 'static,
{
    fn re(&self) -> f64 {
        self.value.to_f64().unwrap_or(f64::NAN)
    }

    fn all_finite(&self) -> bool {
        self.value.is_finite() && self.tangents_finite()
    }
}
