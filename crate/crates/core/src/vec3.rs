//! Small fixed-size vector helpers for points in R^3.

use crate::scalar::Real;

pub type Vector3<R> = [R; 3];

#[inline]
pub fn add<R: Real>(a: Vector3<R>, b: Vector3<R>) -> Vector3<R> {
    [a[0] + b[0], a[1] + b[1], a[2] + b[2]]
}

#[inline]
pub fn sub<R: Real>(a: Vector3<R>, b: Vector3<R>) -> Vector3<R> {
    [a[0] - b[0], a[1] - b[1], a[2] - b[2]]
}

#[inline]
pub fn scale<R: Real>(a: Vector3<R>, c: R) -> Vector3<R> {
    [a[0] * c, a[1] * c, a[2] * c]
}

#[inline]
pub fn dot<R: Real>(a: Vector3<R>, b: Vector3<R>) -> R {
    a[0] * b[0] + a[1] * b[1] + a[2] * b[2]
}

#[inline]
pub fn norm_sq<R: Real>(a: Vector3<R>) -> R {
    dot(a, a)
}

#[inline]
pub fn norm<R: Real>(a: Vector3<R>) -> R {
    norm_sq(a).sqrt()
}

#[inline]
pub fn zero<R: Real>() -> Vector3<R> {
    [R::zero(); 3]
}

/// Largest absolute component.
#[inline]
pub fn max_abs<R: Real>(a: Vector3<R>) -> R {
    a[0].abs().max(a[1].abs()).max(a[2].abs())
}

#[inline]
pub fn is_finite<R: Real>(a: Vector3<R>) -> bool {
    a.iter().all(|c| c.is_finite())
}
