//! Scalar abstraction shared by every numerical routine in the crate.

use std::fmt::{Debug, Display};

use num_complex::Complex;
use num_traits::{Float, FloatConst, FromPrimitive, NumAssign, ToPrimitive};

/// Real floating-point scalar used throughout the crate (`f32` or `f64`).
pub trait Real:
    Float
    + FloatConst
    + FromPrimitive
    + ToPrimitive
    + NumAssign
    + Debug
    + Display
    + Default
    + Send
    + Sync
    + 'static
{
    /// Convert an `f64` literal. Every `Real` can represent (or round) any f64.
    #[inline]
    fn lit(x: f64) -> Self {
        Self::from_f64(x).expect("f64 literal must convert")
    }

    #[inline]
    fn as_f64(self) -> f64 {
        self.to_f64().unwrap_or(f64::NAN)
    }
}

impl Real for f32 {}
impl Real for f64 {}

/// Shorthand for `R::lit`.
#[inline]
pub fn lit<R: Real>(x: f64) -> R {
    R::lit(x)
}

pub type C<R> = Complex<R>;

#[inline]
pub(crate) fn cplx<R: Real>(re: R, im: R) -> Complex<R> {
    Complex::new(re, im)
}

#[inline]
pub(crate) fn real<R: Real>(re: R) -> Complex<R> {
    Complex::new(re, R::zero())
}

/// Sign as `+1`/`-1` (zero maps to `+1`).
#[inline]
pub(crate) fn sign_of<R: Real>(x: R) -> i8 {
    if x < R::zero() {
        -1
    } else {
        1
    }
}

#[inline]
pub(crate) fn from_sign<R: Real>(s: i8) -> R {
    if s < 0 {
        -R::one()
    } else {
        R::one()
    }
}

/// Quantities that can be integrated or rescaled: reals and complex numbers.
pub trait Amplitude<R: Real>:
    Copy
    + Debug
    + std::ops::Add<Output = Self>
    + std::ops::Sub<Output = Self>
    + std::ops::Mul<R, Output = Self>
    + std::ops::Div<R, Output = Self>
    + num_traits::Zero
{
    fn magnitude(&self) -> R;
}

impl<R: Real> Amplitude<R> for R {
    #[inline]
    fn magnitude(&self) -> R {
        self.abs()
    }
}

impl<R: Real> Amplitude<R> for Complex<R> {
    #[inline]
    fn magnitude(&self) -> R {
        self.norm()
    }
}
