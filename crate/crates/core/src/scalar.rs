//! Scalar abstraction shared by every numerical module.
//!
//! All operators, states and integrators are generic over a real field `T`
//! (in practice `f32` or `f64`); amplitudes are `Complex<T>`.

use nalgebra::RealField;
use num_complex::Complex;
use num_traits::{FromPrimitive, ToPrimitive};

/// Real scalar type the simulation is generic over.
pub trait Real: RealField + Copy + Default + FromPrimitive + ToPrimitive + Send + Sync {}

impl<T> Real for T where T: RealField + Copy + Default + FromPrimitive + ToPrimitive + Send + Sync {}

/// Complex amplitude over the real field `T`.
pub type Cx<T> = Complex<T>;

/// Converts an `f64` literal into `T`.
#[inline]
pub fn lit<T: Real>(x: f64) -> T {
    T::from_f64(x).expect("f64 literal representable in scalar type")
}

/// Lossy conversion to `f64` for reporting and tolerance checks.
#[inline]
pub fn to_f64<T: Real>(x: T) -> f64 {
    x.to_f64().expect("scalar convertible to f64")
}

#[inline]
pub fn cx<T: Real>(re: f64, im: f64) -> Cx<T> {
    Complex::new(lit(re), lit(im))
}

#[inline]
pub fn czero<T: Real>() -> Cx<T> {
    Complex::new(T::zero(), T::zero())
}

#[inline]
pub fn cone<T: Real>() -> Cx<T> {
    Complex::new(T::one(), T::zero())
}

#[inline]
pub fn ci<T: Real>() -> Cx<T> {
    Complex::new(T::zero(), T::one())
}

#[inline]
pub fn creal<T: Real>(re: T) -> Cx<T> {
    Complex::new(re, T::zero())
}

/// Modulus `|z|`.
#[inline]
pub fn cabs<T: Real>(z: Cx<T>) -> T {
    z.re.hypot(z.im)
}

/// Absolute value of a real scalar.
#[inline]
pub fn rabs<T: Real>(x: T) -> T {
    if x < T::zero() {
        -x
    } else {
        x
    }
}

/// Principal complex logarithm.
pub fn cln<T: Real>(z: Cx<T>) -> Cx<T> {
    Complex::new(cabs(z).ln(), z.im.atan2(z.re))
}

/// Complex exponential.
pub fn cexp<T: Real>(z: Cx<T>) -> Cx<T> {
    let r = z.re.exp();
    Complex::new(r * z.im.cos(), r * z.im.sin())
}

/// `e^{iθ}`.
pub fn cis<T: Real>(theta: T) -> Cx<T> {
    Complex::new(theta.cos(), theta.sin())
}

/// Drop tolerance applied after every sparse operator arithmetic operation.
pub const DROP_TOL: f64 = 1e-14;
