//! Mollified Coulomb kernels.
//!
//! The interaction is the Coulomb field `k(x) = a x/|x|^3`, smoothed at
//! length scale `N^(-delta)` by convolution with a scaled blob `psi`. For a
//! radial blob the convolution has a closed form via Newton's shell theorem:
//! the smoothed field at radius `r` is the bare field times the blob mass
//! enclosed within `r`,
//!
//! ```text
//! k_N(x) = a x/|x|^3 * m(|x| N^delta),    m(r) = int_{B(0,r)} psi .
//! ```
//!
//! Everything here follows from that identity: the cut-off majorant `ell`,
//! the singular/regular splitting with a wider cut-off `N^(-lambda2)`, the
//! L2 norm, and the Jacobian. The closed form is validated against direct
//! convolution quadrature in the tests; production code never integrates.

use crate::error::{invalid, Error, Result};
use crate::quadrature::{self, Quad};
use crate::scalar::{r, rn, Real};
use crate::vec3::{self, Vector3};

/// Radial C^2 mollifier with unit mass and support in the unit ball.
pub trait BlobProfile<R: Real>: Sync {
    /// Profile value `psi(r)`; zero for `r >= 1`.
    fn density(&self, radius: R) -> R;

    /// Enclosed mass `m(r)`, nondecreasing, `m(0) = 0`, `m(r) = 1` for `r >= 1`.
    fn enclosed_mass(&self, radius: R) -> R;

    /// `m(r)/r^3` as a function of `r^2`, continuous at zero.
    ///
    /// This is the field factor of the shell theorem; the default is safe
    /// but profiles with polynomial mass should override to avoid the sqrt.
    fn field_factor_sq(&self, r_sq: R) -> R {
        if r_sq == R::zero() {
            return r::<R>(4.0 / 3.0) * R::PI() * self.density(R::zero());
        }
        let radius = r_sq.sqrt();
        if radius >= R::one() {
            R::one() / (r_sq * radius)
        } else {
            self.enclosed_mass(radius) / (r_sq * radius)
        }
    }

    /// `(m'(r) r - 3 m(r))/r^5` as a function of `r^2`; the radial part of
    /// the field Jacobian. Tends to a finite limit at zero.
    fn gradient_factor_sq(&self, r_sq: R) -> R {
        if r_sq == R::zero() {
            return R::zero();
        }
        let radius = r_sq.sqrt();
        if radius >= R::one() {
            return r::<R>(-3.0) / (r_sq * r_sq * radius);
        }
        let mass_slope = r::<R>(4.0) * R::PI() * r_sq * self.density(radius);
        (mass_slope * radius - r::<R>(3.0) * self.enclosed_mass(radius)) / (r_sq * r_sq * radius)
    }
}

/// Default blob: `psi(r) = c (1 - r^2)^3` on the unit ball, `c = 315/(64 pi)`.
///
/// C^2 at the support boundary, and both the enclosed mass and the field
/// factors are polynomials in `r^2`, so the kernel evaluation is exact and
/// needs no square root inside the cut-off.
#[derive(Debug, Clone, Copy, Default)]
pub struct PolynomialBump;

/// Normalization making the bump integrate to one: `315/(64 pi)`.
pub fn bump_peak<R: Real>() -> R {
    r::<R>(315.0 / 64.0) / R::PI()
}

impl<R: Real> BlobProfile<R> for PolynomialBump {
    fn density(&self, radius: R) -> R {
        if radius >= R::one() {
            return R::zero();
        }
        let t = R::one() - radius * radius;
        bump_peak::<R>() * t * t * t
    }

    fn enclosed_mass(&self, radius: R) -> R {
        if radius >= R::one() {
            return R::one();
        }
        let s2 = radius * radius;
        let s3 = s2 * radius;
        // (315/16) (s^3/3 - 3 s^5/5 + 3 s^7/7 - s^9/9)
        let poly = r::<R>(1.0 / 3.0)
            + s2 * (r::<R>(-3.0 / 5.0) + s2 * (r::<R>(3.0 / 7.0) + s2 * r::<R>(-1.0 / 9.0)));
        r::<R>(315.0 / 16.0) * s3 * poly
    }

    // Both factor branches are evaluated unconditionally and selected, so
    // the pairwise inner loop stays branch-free and vectorizes. The far
    // branch overflows to +inf at r_sq = 0 but is selected away there.
    #[inline(always)]
    fn field_factor_sq(&self, r_sq: R) -> R {
        let t = r_sq.min(R::one());
        let poly = r::<R>(315.0 / 16.0)
            * (r::<R>(1.0 / 3.0)
                + t * (r::<R>(-3.0 / 5.0) + t * (r::<R>(3.0 / 7.0) + t * r::<R>(-1.0 / 9.0))));
        let far = R::one() / (r_sq * r_sq.sqrt());
        if r_sq >= R::one() {
            far
        } else {
            poly
        }
    }

    #[inline(always)]
    fn gradient_factor_sq(&self, r_sq: R) -> R {
        let t = r_sq.min(R::one());
        let poly = r::<R>(315.0 / 16.0)
            * (r::<R>(-6.0 / 5.0) + t * (r::<R>(12.0 / 7.0) + t * r::<R>(-2.0 / 3.0)));
        let far = r::<R>(-3.0) / (r_sq * r_sq * r_sq.sqrt());
        if r_sq >= R::one() {
            far
        } else {
            poly
        }
    }
}

/// Blob density evaluated at a point of R^3.
pub fn blob_density<R: Real, P: BlobProfile<R>>(profile: &P, x: Vector3<R>) -> R {
    profile.density(vec3::norm(x))
}

/// `psi_e^n(x) = n^(3e) psi(n^e x)`: the blob rescaled to width `n^(-e)`.
/// Mass preserved for every `n`.
pub fn scaled_blob<R: Real, P: BlobProfile<R>>(
    profile: &P,
    exponent: R,
    n: usize,
    x: Vector3<R>,
) -> R {
    let scale = rn::<R>(n).powf(exponent);
    scale * scale * scale * profile.density(scale * vec3::norm(x))
}

/// Kernel parameters: strength `a` (sign selects repulsion/attraction),
/// particle count `N`, cut-off exponent `delta`, and the wider splitting
/// cut-off exponent `lambda2`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct KernelConfig<R> {
    pub strength: R,
    pub n_particles: usize,
    pub cutoff_exponent: R,
    pub wide_cutoff_exponent: R,
}

impl<R: Real> KernelConfig<R> {
    pub fn new(
        strength: R,
        n_particles: usize,
        cutoff_exponent: R,
        wide_cutoff_exponent: R,
    ) -> Result<Self> {
        if n_particles < 2 {
            return Err(invalid("n_particles", "need at least 2 particles"));
        }
        if !(cutoff_exponent > R::zero() && cutoff_exponent < R::one()) {
            return Err(invalid("cutoff_exponent", "must lie in (0, 1)"));
        }
        if !(wide_cutoff_exponent > R::zero() && wide_cutoff_exponent < cutoff_exponent) {
            return Err(invalid(
                "wide_cutoff_exponent",
                "must satisfy 0 < lambda2 < delta",
            ));
        }
        if !strength.is_finite() {
            return Err(invalid("strength", "must be finite"));
        }
        Ok(Self {
            strength,
            n_particles,
            cutoff_exponent,
            wide_cutoff_exponent,
        })
    }

    /// Theorem parameter-window violations (advisory: the estimates are
    /// proved for delta in [1/3, 1) and lambda2 in (0, 1/3)).
    pub fn theorem_range_issues(&self) -> Vec<String> {
        let mut out = Vec::new();
        let third = r::<R>(1.0 / 3.0);
        if self.cutoff_exponent < third {
            out.push(format!(
                "cutoff_exponent must lie in [1/3, 1): got {}",
                self.cutoff_exponent
            ));
        }
        if self.wide_cutoff_exponent >= third {
            out.push(format!(
                "wide_cutoff_exponent must lie in (0, 1/3): got {}",
                self.wide_cutoff_exponent
            ));
        }
        out
    }

    /// `N^e`.
    pub fn n_pow(&self, exponent: R) -> R {
        rn::<R>(self.n_particles).powf(exponent)
    }

    /// Cut-off length `N^(-delta)`.
    pub fn cutoff_len(&self) -> R {
        self.n_pow(-self.cutoff_exponent)
    }

    /// Wide cut-off length `N^(-lambda2)`.
    pub fn wide_cutoff_len(&self) -> R {
        self.n_pow(-self.wide_cutoff_exponent)
    }

    /// Precomputed scales for the narrow (delta) kernel.
    pub fn scales(&self) -> KernelScales<R> {
        KernelScales::new(self.strength, self.n_particles, self.cutoff_exponent)
    }

    /// Precomputed scales for the wide (lambda2) kernel.
    pub fn wide_scales(&self) -> KernelScales<R> {
        KernelScales::new(self.strength, self.n_particles, self.wide_cutoff_exponent)
    }
}

/// Hot-loop constants of a mollified kernel at one cut-off exponent.
#[derive(Debug, Clone, Copy)]
pub struct KernelScales<R> {
    pub strength: R,
    /// `N^(2 e)`: maps `|x|^2` to `s^2` on the blob scale.
    pub inv_len_sq: R,
    /// `a N^(3 e)`: field amplitude.
    pub amp: R,
    /// `N^(5 e) a`: gradient amplitude.
    pub grad_amp: R,
    /// Cut-off length `N^(-e)`.
    pub len: R,
    /// `N^(3 e)`, the `ell` plateau.
    pub plateau: R,
}

impl<R: Real> KernelScales<R> {
    pub fn new(strength: R, n: usize, exponent: R) -> Self {
        let n_e = rn::<R>(n).powf(exponent);
        let n3 = n_e * n_e * n_e;
        Self {
            strength,
            inv_len_sq: n_e * n_e,
            amp: strength * n3,
            grad_amp: strength * n3 * n_e * n_e,
            len: R::one() / n_e,
            plateau: n3,
        }
    }

    /// Mollified field `k_N(x)`; defined everywhere, zero at the origin.
    #[inline]
    pub fn field<P: BlobProfile<R>>(&self, profile: &P, x: Vector3<R>) -> Vector3<R> {
        let r2 = vec3::norm_sq(x);
        if r2 == R::zero() {
            return vec3::zero();
        }
        let factor = self.amp * profile.field_factor_sq(r2 * self.inv_len_sq);
        vec3::scale(x, factor)
    }

    /// Jacobian of the mollified field.
    pub fn jacobian<P: BlobProfile<R>>(&self, profile: &P, x: Vector3<R>) -> [[R; 3]; 3] {
        let r2 = vec3::norm_sq(x);
        let s2 = r2 * self.inv_len_sq;
        let diag = self.amp * profile.field_factor_sq(s2);
        let outer = self.grad_amp * profile.gradient_factor_sq(s2);
        let mut j = [[R::zero(); 3]; 3];
        for (i, row) in j.iter_mut().enumerate() {
            for (k, cell) in row.iter_mut().enumerate() {
                *cell = outer * x[i] * x[k];
            }
            row[i] = row[i] + diag;
        }
        j
    }

    /// The majorant `ell` at this cut-off: `6^3/|x|^3` beyond `6 N^(-e)`,
    /// the plateau `N^(3e)` inside.
    #[inline]
    pub fn ell_of_sq(&self, r2: R) -> R {
        let breakpoint_sq = r::<R>(36.0) * self.len * self.len;
        if r2 >= breakpoint_sq {
            r::<R>(216.0) / (r2 * r2.sqrt())
        } else {
            self.plateau
        }
    }
}

/// Bare Coulomb field `a x/|x|^3`; singular at the origin.
pub fn coulomb<R: Real>(config: &KernelConfig<R>, x: Vector3<R>) -> Result<Vector3<R>> {
    let r2 = vec3::norm_sq(x);
    if r2 == R::zero() {
        return Err(Error::SingularOrigin);
    }
    Ok(vec3::scale(x, config.strength / (r2 * r2.sqrt())))
}

/// Mollified kernel `k_N = k * psi_delta^N`, evaluated in closed form.
pub fn regularized_kernel<R: Real, P: BlobProfile<R>>(
    config: &KernelConfig<R>,
    profile: &P,
    x: Vector3<R>,
) -> Vector3<R> {
    config.scales().field(profile, x)
}

/// Jacobian of `k_N` at `x`.
pub fn kernel_gradient<R: Real, P: BlobProfile<R>>(
    config: &KernelConfig<R>,
    profile: &P,
    x: Vector3<R>,
) -> [[R; 3]; 3] {
    config.scales().jacobian(profile, x)
}

/// Cut-off majorant `ell_N`.
pub fn ell<R: Real>(config: &KernelConfig<R>, x: Vector3<R>) -> R {
    config.scales().ell_of_sq(vec3::norm_sq(x))
}

/// Splitting `k_N = k1_N + k2_N`: `k2_N` is the kernel with the wider
/// cut-off `N^(-lambda2)`, `k1_N` the short-range remainder, supported in
/// the ball of radius `N^(-lambda2)`.
pub fn split_kernel<R: Real, P: BlobProfile<R>>(
    config: &KernelConfig<R>,
    profile: &P,
    x: Vector3<R>,
) -> (Vector3<R>, Vector3<R>) {
    let wide_scales = config.wide_scales();
    let wide = wide_scales.field(profile, x);
    // Outside the wide cut-off both kernels are the bare Coulomb field, so
    // k1 vanishes identically; subtracting the two roundings would leave
    // ulp noise instead of the exact zero.
    if vec3::norm_sq(x) >= wide_scales.len * wide_scales.len {
        return (vec3::zero(), wide);
    }
    let full = config.scales().field(profile, x);
    (vec3::sub(full, wide), wide)
}

/// L2 norm of `k_N` by radial quadrature of the closed form.
///
/// `|k_N|^2 = a^2 m(r N^delta)^2 / r^4`; substituting `u = r N^delta`
/// factors the N dependence out exactly,
/// `||k_N||_2^2 = 4 pi a^2 N^delta (int_0^1 m(u)^2/u^2 du + 1)`,
/// with the tail over `u >= 1` (where m = 1) integrating to 1. The O(1)
/// integral is done adaptively to absolute tolerance 1e-10.
pub fn kernel_l2_norm<R: Real, P: BlobProfile<R>>(
    config: &KernelConfig<R>,
    profile: &P,
) -> Result<Quad<R>> {
    let four_pi = r::<R>(4.0) * R::PI();
    let a2 = config.strength * config.strength;
    let integrand = move |u: R| {
        let m = profile.enclosed_mass(u);
        m * m / (u * u)
    };
    let inner = quadrature::integrate(integrand, R::zero(), R::one(), r(1e-10))?;
    let scale = four_pi * a2 * config.n_pow(config.cutoff_exponent);
    Ok(Quad {
        value: (scale * (inner.value + R::one())).sqrt(),
        abs_error: scale * inner.abs_error,
    })
}

/// L2 norm of the bare Coulomb field: divergent, reported through the
/// quadrature non-convergence error.
pub fn coulomb_l2_norm<R: Real>(config: &KernelConfig<R>) -> Result<Quad<R>> {
    let four_pi = r::<R>(4.0) * R::PI();
    let a2 = config.strength * config.strength;
    let integrand = move |radius: R| four_pi * a2 / (radius * radius);
    let inner = quadrature::integrate(integrand, r(1e-300), R::one(), r(1e-10))?;
    Ok(Quad {
        value: (inner.value + four_pi * a2).sqrt(),
        abs_error: inner.abs_error,
    })
}

/// L1 norm of the short-range part `k1_N`, by radial quadrature. The
/// integrand `4 pi a (m(r N^delta) - m(r N^lambda2))` is supported in
/// `[0, N^(-lambda2)]`.
pub fn k1_l1_norm<R: Real, P: BlobProfile<R>>(
    config: &KernelConfig<R>,
    profile: &P,
) -> Result<Quad<R>> {
    let narrow = config.cutoff_len();
    let wide = config.wide_cutoff_len();
    let four_pi_a = r::<R>(4.0) * R::PI() * config.strength.abs();
    let integrand = move |radius: R| {
        let m_narrow = profile.enclosed_mass(radius / narrow);
        let m_wide = profile.enclosed_mass(radius / wide);
        four_pi_a * (m_narrow - m_wide)
    };
    quadrature::integrate_split(integrand, &[R::zero(), narrow, wide], r(1e-12))
}

/// Sup of the Jacobian (Frobenius norm) over a dense radial grid spanning
/// the blob scale; scales exactly like `N^(3 delta)` by self-similarity.
pub fn sup_gradient_norm<R: Real, P: BlobProfile<R>>(
    config: &KernelConfig<R>,
    profile: &P,
) -> R {
    let scales = config.scales();
    let len = scales.len;
    let mut best = R::zero();
    let steps = 4000usize;
    for i in 0..=steps {
        // radius from 0 to 8 cut-off lengths
        let radius = len * r::<R>(8.0) * rn::<R>(i) / rn::<R>(steps);
        let j = scales.jacobian(profile, [radius, R::zero(), R::zero()]);
        let mut frob = R::zero();
        for row in &j {
            for &c in row {
                frob = frob + c * c;
            }
        }
        best = best.max(frob.sqrt());
    }
    best
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::quadrature::integrate;

    fn cfg(n: usize, delta: f64, lambda2: f64) -> KernelConfig<f64> {
        KernelConfig::new(1.0, n, delta, lambda2).unwrap()
    }

    #[test]
    fn bump_outside_support_is_zero() {
        let p = PolynomialBump;
        assert_eq!(blob_density(&p, [1.5, 0.0, 0.0]), 0.0);
        assert_eq!(blob_density(&p, [0.0, 1.0, 0.0]), 0.0);
    }

    #[test]
    fn bump_mass_is_one_by_quadrature() {
        let p = PolynomialBump;
        let q = integrate(
            |radius: f64| {
                4.0 * std::f64::consts::PI * radius * radius * p.density(radius)
            },
            0.0,
            1.0,
            1e-12,
        )
        .unwrap();
        assert!((q.value - 1.0).abs() < 1e-8, "mass {}", q.value);
    }

    #[test]
    fn bump_peak_matches_quadrature_normalization() {
        // c such that 4 pi c int_0^1 r^2 (1-r^2)^3 dr = 1; the raw integral
        // is computed by quadrature and inverted.
        let raw = integrate(
            |radius: f64| {
                let t = 1.0 - radius * radius;
                4.0 * std::f64::consts::PI * radius * radius * t * t * t
            },
            0.0,
            1.0,
            1e-13,
        )
        .unwrap();
        let c_from_quadrature = 1.0 / raw.value;
        let p = PolynomialBump;
        assert!((blob_density(&p, [0.0; 3]) - c_from_quadrature).abs() < 1e-10);
        assert!((bump_peak::<f64>() - c_from_quadrature).abs() < 1e-10);
    }

    #[test]
    fn bump_enclosed_mass_matches_quadrature() {
        let p = PolynomialBump;
        for radius in [0.1, 0.3, 0.55, 0.8, 0.97] {
            let q = integrate(
                |s: f64| 4.0 * std::f64::consts::PI * s * s * p.density(s),
                0.0,
                radius,
                1e-13,
            )
            .unwrap();
            assert!((p.enclosed_mass(radius) - q.value).abs() < 1e-11);
        }
        assert_eq!(p.enclosed_mass(0.0), 0.0);
        assert_eq!(p.enclosed_mass(1.0), 1.0);
        assert_eq!(p.enclosed_mass(7.0), 1.0);
    }

    #[test]
    fn scaled_blob_support_and_mass() {
        let p = PolynomialBump;
        let n = 1024;
        let e = 1.0 / 3.0;
        let w = (n as f64).powf(-e);
        assert_eq!(scaled_blob(&p, e, n, [w * 1.001, 0.0, 0.0]), 0.0);
        let q = integrate(
            |radius: f64| {
                4.0 * std::f64::consts::PI
                    * radius
                    * radius
                    * scaled_blob(&p, e, n, [radius, 0.0, 0.0])
            },
            0.0,
            w,
            1e-12,
        )
        .unwrap();
        assert!((q.value - 1.0).abs() < 1e-8);
        // peak value N^{3e} psi(0)
        let peak = scaled_blob(&p, e, n, [0.0; 3]);
        let expect = (n as f64).powf(3.0 * e) * bump_peak::<f64>();
        assert!((peak - expect).abs() / expect < 1e-14);
    }

    #[test]
    fn coulomb_reference_points() {
        let c = cfg(64, 0.5, 0.3);
        assert_eq!(coulomb(&c, [1.0, 0.0, 0.0]).unwrap(), [1.0, 0.0, 0.0]);
        let v = coulomb(&c, [0.0, 2.0, 0.0]).unwrap();
        assert!((v[1] - 0.25).abs() < 1e-15 && v[0] == 0.0 && v[2] == 0.0);
        let attract = KernelConfig::new(-1.0, 64, 0.5, 0.3).unwrap();
        assert_eq!(coulomb(&attract, [1.0, 0.0, 0.0]).unwrap(), [-1.0, 0.0, 0.0]);
        assert!(matches!(
            coulomb(&c, [0.0; 3]),
            Err(Error::SingularOrigin)
        ));
    }

    #[test]
    fn kernel_equals_coulomb_outside_cutoff() {
        let c = cfg(4096, 1.0 / 3.0, 0.3);
        let p = PolynomialBump;
        let w = c.cutoff_len();
        let mut stream = crate::rng::CounterStream::new(11, 0);
        for _ in 0..1000 {
            let dir = stream.unit_vector::<f64>();
            let radius = w + stream.uniform::<f64>() * 3.0;
            let x = vec3::scale(dir, radius);
            let kn = regularized_kernel(&c, &p, x);
            let k = coulomb(&c, x).unwrap();
            let rel = vec3::norm(vec3::sub(kn, k)) / vec3::norm(k);
            assert!(rel <= 1e-12, "rel {rel}");
        }
    }

    #[test]
    fn kernel_zero_at_origin_and_dominated() {
        let c = cfg(256, 1.0 / 3.0, 0.3);
        let p = PolynomialBump;
        assert_eq!(regularized_kernel(&c, &p, [0.0; 3]), [0.0; 3]);
        let mut stream = crate::rng::CounterStream::new(5, 1);
        for _ in 0..500 {
            let dir = stream.unit_vector::<f64>();
            let radius = stream.uniform::<f64>() * 2.0 * c.cutoff_len();
            if radius == 0.0 {
                continue;
            }
            let x = vec3::scale(dir, radius);
            let kn = vec3::norm(regularized_kernel(&c, &p, x));
            let k = vec3::norm(coulomb(&c, x).unwrap());
            assert!(kn <= k * (1.0 + 1e-14), "domination failed at {radius}");
        }
    }

    #[test]
    fn kernel_is_odd() {
        let c = cfg(512, 0.4, 0.25);
        let p = PolynomialBump;
        let mut stream = crate::rng::CounterStream::new(3, 9);
        for _ in 0..200 {
            let x = [
                stream.normal::<f64>() * 0.1,
                stream.normal::<f64>() * 0.1,
                stream.normal::<f64>() * 0.1,
            ];
            let plus = regularized_kernel(&c, &p, x);
            let minus = regularized_kernel(&c, &p, vec3::scale(x, -1.0));
            for i in 0..3 {
                assert_eq!(plus[i], -minus[i]);
            }
            let (k1p, k2p) = split_kernel(&c, &p, x);
            let (k1m, k2m) = split_kernel(&c, &p, vec3::scale(x, -1.0));
            for i in 0..3 {
                assert_eq!(k1p[i], -k1m[i]);
                assert_eq!(k2p[i], -k2m[i]);
            }
        }
    }

    /// Direct convolution oracle: `(k * psi_w)(x)` by spherical quadrature
    /// centered at `x`, where the `1/r^2` singularity cancels exactly
    /// against the volume element. No radial symmetry of the result is
    /// assumed: full (r, mu, phi) tensor grid.
    fn convolution_oracle(c: &KernelConfig<f64>, x: [f64; 3]) -> [f64; 3] {
        let p = PolynomialBump;
        let w = c.cutoff_len();
        let nw = 1.0 / w;
        let scale3 = nw * nw * nw;
        let xr = vec3::norm(x);
        // orthonormal frame with e3 along x (x != 0 in these tests)
        let e3 = vec3::scale(x, 1.0 / xr);
        let pick = if e3[0].abs() < 0.9 {
            [1.0, 0.0, 0.0]
        } else {
            [0.0, 1.0, 0.0]
        };
        let mut e1 = [
            pick[1] * e3[2] - pick[2] * e3[1],
            pick[2] * e3[0] - pick[0] * e3[2],
            pick[0] * e3[1] - pick[1] * e3[0],
        ];
        let n1 = vec3::norm(e1);
        e1 = vec3::scale(e1, 1.0 / n1);
        let e2 = [
            e3[1] * e1[2] - e3[2] * e1[1],
            e3[2] * e1[0] - e3[0] * e1[2],
            e3[0] * e1[1] - e3[1] * e1[0],
        ];

        // integral over y = x + rho*omega of -a*omega/rho^2 * psi_w(y) * rho^2
        let n_phi = 32usize;
        let n_mu = 96usize;
        let mu_table = crate::quadrature::gauss_legendre(n_mu);
        let mut acc = [0.0f64; 3];
        for ip in 0..n_phi {
            let phi = 2.0 * std::f64::consts::PI * (ip as f64) / (n_phi as f64);
            let (sp, cp) = phi.sin_cos();
            for (mu_node, mu_w) in mu_table.0.iter().zip(mu_table.1.iter()) {
                let mu = *mu_node;
                let st = (1.0 - mu * mu).sqrt();
                let omega = [
                    st * cp * e1[0] + st * sp * e2[0] + mu * e3[0],
                    st * cp * e1[1] + st * sp * e2[1] + mu * e3[1],
                    st * cp * e1[2] + st * sp * e2[2] + mu * e3[2],
                ];
                // support endpoint in rho: |x + rho omega| = w
                let b = vec3::dot(x, omega);
                let disc = b * b - (xr * xr - w * w);
                if disc <= 0.0 {
                    continue;
                }
                let rho_max = -b + disc.sqrt();
                if rho_max <= 0.0 {
                    continue;
                }
                // psi is degree 6 in rho: 8-point GL integrates exactly
                let inner = |k: usize| -> f64 {
                    let t = crate::quadrature::gauss_legendre(8);
                    let mut s = 0.0;
                    for (n8, w8) in t.0.iter().zip(t.1.iter()) {
                        let rho = rho_max * 0.5 * (n8 + 1.0);
                        let y = vec3::add(x, vec3::scale(omega, rho));
                        let psi = scale3 * p.density(nw * vec3::norm(y));
                        s += w8 * psi;
                    }
                    s * rho_max * 0.5 * omega[k]
                };
                let weight = mu_w * (2.0 * std::f64::consts::PI / n_phi as f64);
                for k in 0..3 {
                    acc[k] -= weight * c.strength * inner(k);
                }
            }
        }
        acc
    }

    #[test]
    fn shell_theorem_matches_convolution_quadrature() {
        let c = cfg(256, 1.0 / 3.0, 0.3);
        let p = PolynomialBump;
        let w = c.cutoff_len();
        // the named spec point |x| = 0.5 w
        let x0 = [0.5 * w, 0.0, 0.0];
        let closed = regularized_kernel(&c, &p, x0);
        let oracle = convolution_oracle(&c, x0);
        let rel = vec3::norm(vec3::sub(closed, oracle)) / vec3::norm(oracle);
        assert!(rel < 1e-6, "rel {rel}");

        let mut stream = crate::rng::CounterStream::new(77, 0);
        for _ in 0..5 {
            let dir = stream.unit_vector::<f64>();
            let radius = (0.05 + 0.9 * stream.uniform::<f64>()) * w;
            let x = vec3::scale(dir, radius);
            let closed = regularized_kernel(&c, &p, x);
            let oracle = convolution_oracle(&c, x);
            let rel = vec3::norm(vec3::sub(closed, oracle)) / vec3::norm(oracle);
            assert!(rel < 1e-6, "rel {rel} at radius {radius}");
        }
    }

    #[test]
    fn gradient_matches_finite_differences() {
        let c = cfg(512, 1.0 / 3.0, 0.3);
        let p = PolynomialBump;
        let w = c.cutoff_len();
        let mut stream = crate::rng::CounterStream::new(21, 0);
        let h = w * 1e-5;
        for _ in 0..100 {
            let dir = stream.unit_vector::<f64>();
            let radius = (0.02 + 0.96 * stream.uniform::<f64>()) * w;
            let x = vec3::scale(dir, radius);
            let j = kernel_gradient(&c, &p, x);
            for col in 0..3 {
                let mut xp = x;
                let mut xm = x;
                xp[col] += h;
                xm[col] -= h;
                let fp = regularized_kernel(&c, &p, xp);
                let fm = regularized_kernel(&c, &p, xm);
                for row in 0..3 {
                    let fd = (fp[row] - fm[row]) / (2.0 * h);
                    let scale = j.iter().flatten().fold(0.0f64, |m, v| m.max(v.abs()));
                    assert!(
                        (j[row][col] - fd).abs() <= 1e-5 * scale,
                        "J[{row}][{col}] = {} vs fd {fd}",
                        j[row][col]
                    );
                }
            }
        }
    }

    #[test]
    fn gradient_outside_cutoff_is_coulomb_jacobian() {
        let c = cfg(128, 0.4, 0.2);
        let p = PolynomialBump;
        let x = [0.3, -0.2, 0.5];
        assert!(vec3::norm(x) > c.cutoff_len());
        let j = kernel_gradient(&c, &p, x);
        let rn = vec3::norm(x);
        let r3 = rn * rn * rn;
        let r5 = r3 * rn * rn;
        for row in 0..3 {
            for col in 0..3 {
                let coulomb_j = if row == col { 1.0 / r3 } else { 0.0 }
                    - 3.0 * x[row] * x[col] / r5;
                assert!((j[row][col] - coulomb_j).abs() < 1e-13);
            }
        }
    }

    #[test]
    fn gradient_sup_scales_like_n_3delta() {
        let delta = 1.0 / 3.0;
        let mut xs = Vec::new();
        let mut ys = Vec::new();
        for e in [8u32, 10, 12, 14, 16] {
            let n = 1usize << e;
            let c = cfg(n, delta, 0.2);
            xs.push(n as f64);
            ys.push(sup_gradient_norm(&c, &PolynomialBump));
        }
        let fit = crate::experiments::fit_power_law(&xs, &ys).unwrap();
        assert!(
            (fit.slope - 3.0 * delta).abs() < 0.05,
            "slope {} want {}",
            fit.slope,
            3.0 * delta
        );
    }

    #[test]
    fn ell_branches() {
        let c = cfg(4096, 1.0 / 3.0, 0.3);
        let w = c.cutoff_len();
        let plateau = c.scales().plateau;
        assert!((plateau - c.n_pow(1.0)).abs() < 1e-12 * plateau);
        assert_eq!(ell(&c, [0.0; 3]), plateau);
        let at_break = ell(&c, [6.0 * w, 0.0, 0.0]);
        assert!((at_break - plateau).abs() / plateau < 1e-12);
        let beyond = ell(&c, [0.0, 12.0 * w, 0.0]);
        assert!((beyond - plateau / 8.0).abs() / plateau < 1e-12);
    }

    #[test]
    fn split_kernel_structure() {
        let c = cfg(2048, 0.45, 0.3);
        let p = PolynomialBump;
        let wide = c.wide_cutoff_len();
        let mut stream = crate::rng::CounterStream::new(8, 0);
        for _ in 0..200 {
            let dir = stream.unit_vector::<f64>();
            let radius = stream.uniform::<f64>() * 3.0 * wide;
            let x = vec3::scale(dir, radius.max(1e-12));
            let (k1, k2) = split_kernel(&c, &p, x);
            let total = regularized_kernel(&c, &p, x);
            let sum = vec3::add(k1, k2);
            for i in 0..3 {
                assert!((sum[i] - total[i]).abs() <= 1e-12 * total[i].abs().max(1.0));
            }
            if radius >= wide {
                assert!(vec3::norm(k1) == 0.0, "k1 should vanish outside");
                let k = coulomb(&c, x).unwrap();
                let rel = vec3::norm(vec3::sub(k2, k)) / vec3::norm(k);
                assert!(rel < 1e-12);
            }
        }
        let (k1, k2) = split_kernel(&c, &p, [0.0; 3]);
        assert_eq!(k1, [0.0; 3]);
        assert_eq!(k2, [0.0; 3]);
    }

    #[test]
    fn l2_norm_scaling_and_divergence() {
        let p = PolynomialBump;
        for delta in [1.0 / 3.0, 0.9] {
            let mut xs = Vec::new();
            let mut ys = Vec::new();
            for e in [10u32, 12, 14, 16, 18, 20] {
                let n = 1usize << e;
                let c = cfg(n, delta, delta / 2.0);
                xs.push(n as f64);
                ys.push(kernel_l2_norm(&c, &p).unwrap().value);
            }
            let fit = crate::experiments::fit_power_law(&xs, &ys).unwrap();
            assert!(
                (fit.slope - delta / 2.0).abs() < 0.03,
                "delta {delta}: slope {}",
                fit.slope
            );
        }
        let c = cfg(4096, 1.0 / 3.0, 0.3);
        assert!(matches!(
            coulomb_l2_norm(&c),
            Err(Error::QuadratureNoConvergence { .. })
        ));
    }

    #[test]
    fn l2_norm_against_monte_carlo() {
        // Importance-sampled 3-D Monte Carlo of int |k_N|^2: radius from a
        // mixture of uniform on [0, w] and 1/r^2-law on [w, R].
        let c = cfg(4096, 1.0 / 3.0, 0.3);
        let p = PolynomialBump;
        let w = c.cutoff_len();
        let big = 1e4f64; // outer truncation; tail beyond is 4 pi a^2 / big
        let mut stream = crate::rng::CounterStream::new(2024, 0);
        let trials = 400_000usize;
        let mut sum = 0.0;
        let mut sum2 = 0.0;
        for _ in 0..trials {
            let u: f64 = stream.uniform();
            let (radius, pdf_r) = if stream.uniform::<f64>() < 0.5 {
                (u * w, 0.5 / w)
            } else {
                // density proportional to r^-2 on [w, big]
                let norm = 1.0 / w - 1.0 / big;
                let radius = 1.0 / (1.0 / w - u * norm);
                (radius, 0.5 / (norm * radius * radius))
            };
            let x = vec3::scale(stream.unit_vector(), radius);
            let k = vec3::norm_sq(regularized_kernel(&c, &p, x));
            // 3-D pdf = pdf_r / (4 pi r^2)
            let weight = 4.0 * std::f64::consts::PI * radius * radius / pdf_r;
            let val = k * weight;
            sum += val;
            sum2 += val * val;
        }
        let mean = sum / trials as f64;
        let var = (sum2 / trials as f64 - mean * mean) / trials as f64;
        let mc = mean + 4.0 * std::f64::consts::PI / big; // add analytic tail
        let quad = kernel_l2_norm(&c, &p).unwrap().value;
        let quad_sq = quad * quad;
        assert!(
            (quad_sq - mc).abs() <= 3.0 * var.sqrt(),
            "quad^2 {quad_sq} vs mc {mc} +- {}",
            var.sqrt()
        );
    }

    #[test]
    fn k1_l1_norm_matches_closed_form() {
        // ||k1||_1 = 4 pi |a| I (N^{-l2} - N^{-d}), I = int_0^1 (1 - m(u)) du.
        let p = PolynomialBump;
        let i_const = integrate(
            |u: f64| 1.0 - p.enclosed_mass(u),
            0.0,
            1.0,
            1e-13,
        )
        .unwrap()
        .value;
        for (n, delta, l2) in [(4096usize, 0.9, 0.3), (65536, 0.5, 0.15)] {
            let c = cfg(n, delta, l2);
            let got = k1_l1_norm(&c, &p).unwrap().value;
            let want = 4.0
                * std::f64::consts::PI
                * i_const
                * ((n as f64).powf(-l2) - (n as f64).powf(-delta));
            assert!(
                (got - want).abs() / want < 1e-9,
                "got {got} want {want}"
            );
        }
    }

    #[test]
    fn local_lipschitz_ratio_bounded() {
        // |k_N(x+xi) - k_N(x)| <= C ell_N(x) |xi| with one C across N.
        let p = PolynomialBump;
        for e in [8u32, 12, 16] {
            let n = 1usize << e;
            let c = cfg(n, 1.0 / 3.0, 0.3);
            let w = c.cutoff_len();
            let mut stream = crate::rng::CounterStream::new(e as u64, 0);
            let mut worst = 0.0f64;
            for _ in 0..10_000 {
                let u: f64 = stream.uniform();
                let radius = w * 0.01 * (4.0 / (w * 0.01)).powf(u); // log-uniform in [0.01 w, 4]
                let x = vec3::scale(stream.unit_vector(), radius);
                let xi = vec3::scale(
                    stream.unit_vector(),
                    stream.uniform::<f64>() * 4.0 * w,
                );
                let diff = vec3::norm(vec3::sub(
                    regularized_kernel(&c, &p, vec3::add(x, xi)),
                    regularized_kernel(&c, &p, x),
                ));
                let denom = ell(&c, x) * vec3::norm(xi);
                if denom > 0.0 {
                    worst = worst.max(diff / denom);
                }
            }
            assert!(worst <= 10.0, "N = {n}: ratio {worst}");
        }
    }

    #[test]
    fn gradient_over_ell_ratio_bounded() {
        // |grad k_N(x)| / ell_N(y) <= C N^{3(delta-lambda2)} for |x-y| <= N^{-lambda2}.
        let p = PolynomialBump;
        for e in [8u32, 12, 16] {
            let n = 1usize << e;
            let delta = 0.4;
            let lambda2 = 0.3;
            let c = cfg(n, delta, lambda2);
            let wide = c.wide_cutoff_len();
            let rate = (n as f64).powf(3.0 * (delta - lambda2));
            let mut stream = crate::rng::CounterStream::new(100 + e as u64, 0);
            let mut worst = 0.0f64;
            for _ in 0..5_000 {
                let u: f64 = stream.uniform();
                let radius = wide * 0.01 * (4.0 / (wide * 0.01)).powf(u);
                let y = vec3::scale(stream.unit_vector(), radius);
                let x = vec3::add(
                    y,
                    vec3::scale(stream.unit_vector(), stream.uniform::<f64>() * wide),
                );
                let j = kernel_gradient(&c, &p, x);
                let mut frob = 0.0;
                for row in &j {
                    for v in row {
                        frob += v * v;
                    }
                }
                worst = worst.max(frob.sqrt() / (ell(&c, y) * rate));
            }
            assert!(worst <= 10.0, "N = {n}: normalized ratio {worst}");
        }
    }
}
