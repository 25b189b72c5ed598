//! Scalar abstraction shared by every numerical module.
//!
//! All of the math is written against [`Real`], which is satisfied by `f32`
//! and `f64`. The concrete `f64` instantiations are re-exported at the crate
//! root; `f32` is usable for quick exploratory scans but the pinned
//! tolerances in [`crate::tolerances`] assume double precision.

use nalgebra::{ComplexField, RealField};
use num_complex::Complex;
use num_traits::{FromPrimitive, ToPrimitive};

/// Real floating point type usable by the engine.
pub trait Real:
    RealField + Copy + FromPrimitive + ToPrimitive + Send + Sync + std::fmt::Debug + 'static
{
}

impl<T> Real for T where
    T: RealField + Copy + FromPrimitive + ToPrimitive + Send + Sync + std::fmt::Debug + 'static
{
}

/// Complex scalar over `T`.
pub type Cplx<T> = Complex<T>;

/// Converts an `f64` literal into `T`.
#[inline]
pub fn lit<T: Real>(x: f64) -> T {
    T::from_f64(x).expect("f64 literal representable in scalar type")
}

#[inline]
pub fn to_f64<T: Real>(x: T) -> f64 {
    x.to_f64().expect("scalar convertible to f64")
}

/// Shortest round-trip text for a number in CSV tables; scientific notation
/// outside `[1e-4, 1e15)`.
pub fn format_number(x: f64) -> String {
    let a = x.abs();
    if a == 0.0 || (1e-4..1e15).contains(&a) || !x.is_finite() {
        x.to_string()
    } else {
        format!("{x:e}")
    }
}

#[inline]
pub fn czero<T: Real>() -> Cplx<T> {
    Complex::new(T::zero(), T::zero())
}

#[inline]
pub fn cre<T: Real>(x: T) -> Cplx<T> {
    Complex::new(x, T::zero())
}

/// `i`
#[inline]
pub fn ci<T: Real>() -> Cplx<T> {
    Complex::new(T::zero(), T::one())
}

/// `e^{i theta}`
#[inline]
pub fn cis<T: Real>(theta: T) -> Cplx<T> {
    Complex::new(theta.cos(), theta.sin())
}

#[inline]
pub fn cexp<T: Real>(z: Cplx<T>) -> Cplx<T> {
    cis(z.im) * z.re.exp()
}

#[inline]
pub fn cabs<T: Real>(z: Cplx<T>) -> T {
    ComplexField::modulus(z)
}

#[inline]
pub fn cabs2<T: Real>(z: Cplx<T>) -> T {
    z.re * z.re + z.im * z.im
}

#[inline]
pub fn cdiv<T: Real>(a: Cplx<T>, b: Cplx<T>) -> Cplx<T> {
    let d = cabs2(b);
    Complex::new(
        (a.re * b.re + a.im * b.im) / d,
        (a.im * b.re - a.re * b.im) / d,
    )
}

#[inline]
pub fn cscale<T: Real>(a: Cplx<T>, s: T) -> Cplx<T> {
    Complex::new(a.re * s, a.im * s)
}
