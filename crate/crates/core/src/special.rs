//! Special functions needed by the analytic densities and oracles.

use crate::scalar::{r, Real};

/// Error function, accurate to a few ulp.
///
/// Uses the scaled Maclaurin series `erf(x) = 2/sqrt(pi) * exp(-x^2) *
/// sum_k 2^k x^(2k+1) / (2k+1)!!`, whose terms are all positive, so there is
/// no cancellation. For |x| > 6 the result is 1 to double precision.
pub fn erf<R: Real>(x: R) -> R {
    if x < R::zero() {
        return -erf(-x);
    }
    if x > r(6.0) {
        return R::one();
    }
    if x == R::zero() {
        return R::zero();
    }
    let x2 = x * x;
    let mut term = x;
    let mut sum = x;
    let mut k = 0u32;
    loop {
        k += 1;
        // term_{k} = term_{k-1} * 2 x^2 / (2k+1)
        term = term * (x2 + x2) / r(2.0 * f64::from(k) + 1.0);
        let new = sum + term;
        if new == sum || k > 500 {
            break;
        }
        sum = new;
    }
    let two_over_sqrt_pi = r::<R>(2.0) / R::PI().sqrt();
    two_over_sqrt_pi * (-x2).exp() * sum
}

pub fn erfc<R: Real>(x: R) -> R {
    R::one() - erf(x)
}

/// Standard normal cumulative distribution function.
pub fn normal_cdf<R: Real>(x: R) -> R {
    (R::one() + erf(x / r::<R>(2.0).sqrt())) / r(2.0)
}
