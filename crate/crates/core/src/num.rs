//! Scalar abstraction shared by every module.
//!
//! All numerics are written against [`Real`], which is implemented for `f32`
//! and `f64`. Complex arithmetic uses `num_complex::Complex<R>`, which nalgebra
//! treats as a `ComplexField` for any real field `R`.

use nalgebra::{DMatrix, DVector, RealField};
use num_traits::{FromPrimitive, ToPrimitive};

/// Real scalar type the library is generic over.
pub trait Real: RealField + Copy + FromPrimitive + ToPrimitive {}

impl Real for f32 {}
impl Real for f64 {}

pub type Cplx<R> = num_complex::Complex<R>;
pub type CMat<R> = DMatrix<Cplx<R>>;
pub type CVec<R> = DVector<Cplx<R>>;

/// Converts an `f64` literal into `R`.
#[inline]
pub fn lit<R: Real>(x: f64) -> R {
    R::from_f64(x).expect("literal representable in the scalar type")
}

#[inline]
pub fn to_f64<R: Real>(x: R) -> f64 {
    x.to_f64().unwrap_or(f64::NAN)
}

#[inline]
pub fn cx<R: Real>(re: R) -> Cplx<R> {
    Cplx::new(re, R::zero())
}

#[inline]
pub fn czero<R: Real>() -> Cplx<R> {
    Cplx::new(R::zero(), R::zero())
}

#[inline]
pub fn cone<R: Real>() -> Cplx<R> {
    Cplx::new(R::one(), R::zero())
}

/// Modulus of a complex number.
#[inline]
pub fn cabs<R: Real>(z: Cplx<R>) -> R {
    z.re.hypot(z.im)
}

/// Principal logarithm with the imaginary part in (−π, π].
///
/// A negative real argument carrying a `-0.0` imaginary part would otherwise
/// land on −π.
pub fn principal_ln<R: Real>(z: Cplx<R>) -> Cplx<R> {
    let z = if z.im == R::zero() { Cplx::new(z.re, R::zero()) } else { z };
    Cplx::new(cabs(z).ln(), z.im.atan2(z.re))
}

#[inline]
pub fn cexp<R: Real>(z: Cplx<R>) -> Cplx<R> {
    let m = z.re.exp();
    Cplx::new(m * z.im.cos(), m * z.im.sin())
}

/// Reduces an angle to (−π, π].
pub fn wrap_angle<R: Real>(theta: R) -> R {
    let two_pi = R::two_pi();
    let mut r = theta - two_pi * (theta / two_pi).round();
    if r <= -R::pi() {
        r += two_pi;
    }
    if r > R::pi() {
        r -= two_pi;
    }
    r
}

/// Real `n×n` matrix lifted to complex entries, row-major input.
pub fn cmat_from_real<R: Real>(n: usize, m: usize, rows: &[R]) -> CMat<R> {
    DMatrix::from_fn(n, m, |i, j| cx(rows[i * m + j]))
}

pub fn cdiag_real<R: Real>(d: &[R]) -> CMat<R> {
    let n = d.len();
    DMatrix::from_fn(n, n, |i, j| if i == j { cx(d[i]) } else { czero() })
}

pub fn cvec_from_real<R: Real>(v: &[R]) -> CVec<R> {
    DVector::from_fn(v.len(), |i, _| cx(v[i]))
}

/// Euclidean norm of a complex vector.
pub fn vnorm<R: Real>(v: &CVec<R>) -> R {
    let mut s = R::zero();
    for z in v.iter() {
        s += z.re * z.re + z.im * z.im;
    }
    s.sqrt()
}

/// Largest entry modulus, used as a cheap scale for renormalization.
pub fn max_abs<R: Real>(m: &CMat<R>) -> R {
    m.iter().fold(R::zero(), |acc, z| acc.max(cabs(*z)))
}

/// Largest imaginary-part modulus of a matrix.
pub fn max_imag<R: Real>(m: &CMat<R>) -> R {
    m.iter().fold(R::zero(), |acc, z| acc.max(z.im.abs()))
}
