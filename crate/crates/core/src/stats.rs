//! Analytic and Monte Carlo oracles: the explicit kinetic Fokker-Planck
//! kernel, free-motion moments, concentration checks, Brownian running-max
//! tails, and the short-range collision-candidate counts.

use rayon::prelude::*;

use crate::dynamics::PhaseState;
use crate::error::{invalid, Result};
use crate::fields::{density_lp_norm, DensityModel};
use crate::quadrature;
use crate::rng::{tag, CounterStream};
use crate::scalar::{r, rn, Real};
use crate::special::normal_cdf;
use crate::vec3::{self, Vector3};

/// The fundamental solution of `d_t G + v . grad_x G = lap_v G`:
///
/// ```text
/// G(x, v, t) = C t^-6 exp( -|v|^2/(4t) - 3 |x - t v/2|^2 / t^3 )
/// ```
///
/// with `C = (3/(4 pi^2))^(3/2)` fixing unit mass (independent of t).
#[derive(Debug, Clone, Copy)]
pub struct GreenEval<R> {
    pub time: R,
    pub normalization: R,
}

impl<R: Real> GreenEval<R> {
    pub fn new(time: R) -> Result<Self> {
        if time <= R::zero() {
            return Err(invalid("time", "must be positive"));
        }
        let four_pi_sq = r::<R>(4.0) * R::PI() * R::PI();
        Ok(Self {
            time,
            normalization: (r::<R>(3.0) / four_pi_sq).powf(r(1.5)),
        })
    }

    pub fn evaluate(&self, x: Vector3<R>, v: Vector3<R>) -> R {
        let t = self.time;
        let t3 = t * t * t;
        let drifted = vec3::sub(x, vec3::scale(v, t / r(2.0)));
        let exponent = -vec3::norm_sq(v) / (r::<R>(4.0) * t)
            - r::<R>(3.0) * vec3::norm_sq(drifted) / t3;
        self.normalization / (t3 * t3) * exponent.exp()
    }

    /// The same kernel in the per-coordinate product form
    /// `C t^-6 prod_k exp(-3 x_k^2/(4 t^3) - (v_k - 3 x_k/(2t))^2 / t)`.
    /// Used by the tensor-quadrature checks.
    pub fn coordinate_pair_factor(&self, x: R, v: R) -> R {
        let t = self.time;
        let t3 = t * t * t;
        let shift = v - r::<R>(1.5) * x / t;
        (-(r::<R>(0.75) * x * x / t3) - shift * shift / t).exp()
    }

    /// Total mass by 2-D tensor quadrature per coordinate pair.
    pub fn mass_by_quadrature(&self) -> R {
        let pair = self.pair_moment(|_, _| R::one());
        let t = self.time;
        let t6 = (t * t * t) * (t * t * t);
        self.normalization / t6 * pair * pair * pair
    }

    /// Second moments by quadrature: per-component (Var v, Cov xv, Var x).
    pub fn moments_by_quadrature(&self) -> (R, R, R) {
        let t = self.time;
        let t6 = (t * t * t) * (t * t * t);
        let norm = self.normalization / t6;
        let mass_pair = self.pair_moment(|_, _| R::one());
        let pair_sq = mass_pair * mass_pair;
        let var_v = norm * self.pair_moment(|_, v| v * v) * pair_sq;
        let cov = norm * self.pair_moment(|x, v| x * v) * pair_sq;
        let var_x = norm * self.pair_moment(|x, _| x * x) * pair_sq;
        (var_v, cov, var_x)
    }

    fn pair_moment<F: Fn(R, R) -> R>(&self, weight: F) -> R {
        let t = self.time;
        let x_half = r::<R>(10.0) * (t * t * t).sqrt();
        let v_half = r::<R>(10.0) * t.sqrt() + r::<R>(1.5) * x_half / t;
        let n = 128;
        quadrature::integrate_gl(
            |x: R| {
                quadrature::integrate_gl(
                    |v: R| weight(x, v) * self.coordinate_pair_factor(x, v),
                    -v_half,
                    v_half,
                    n,
                )
            },
            -x_half,
            x_half,
            n,
        )
    }
}

/// Exact second moments per component of the free kinetic motion
/// `dx = v dt`, `dv = sqrt(2 sigma) dB` started at the origin:
/// `(2 sigma t, sigma t^2, 2 sigma t^3 / 3)`.
pub fn free_kinetic_moments<R: Real>(sigma: R, t: R) -> (R, R, R) {
    (
        r::<R>(2.0) * sigma * t,
        sigma * t * t,
        r::<R>(2.0 / 3.0) * sigma * t * t * t,
    )
}

/// Mixed (inf,1) norm of the kernel at time `t`: sup over a position grid
/// of the v-integral. The v-integrand at fixed x is radial about its
/// drift center, so the inner integral is one-dimensional and adaptive;
/// the outer sup runs over a grid truncated at ten standard deviations.
pub fn green_sup_l1_norm(t: f64) -> Result<f64> {
    let green = GreenEval::<f64>::new(t)?;
    let x_max = 10.0 * (2.0 * t * t * t / 3.0).sqrt();
    let w_max = 12.0 * t.sqrt();
    let steps = 200usize;
    let mut best = 0.0f64;
    for i in 0..=steps {
        let xr = x_max * i as f64 / steps as f64;
        let x = [xr, 0.0, 0.0];
        let center = vec3::scale(x, 1.5 / t);
        let inner = quadrature::integrate_rel(
            |w: f64| {
                let v = vec3::add(center, [w, 0.0, 0.0]);
                4.0 * std::f64::consts::PI * w * w * green.evaluate(x, v)
            },
            0.0,
            w_max,
            1e-10,
        )?;
        best = best.max(inner.value);
    }
    Ok(best)
}

/// Mixed (inf,1) norm of `G_t(. - h e1) - G_t(. + h e1)` (shift in the
/// position slot), divided by `2h`. Scales like `t^-6` for small t.
pub fn green_shifted_diff_norm(t: f64, h: f64) -> Result<f64> {
    let green = GreenEval::<f64>::new(t)?;
    // the transverse velocity factors are common to both terms
    let perp = quadrature::integrate_rel(
        |v: f64| (-v * v / t).exp(),
        -12.0 * t.sqrt(),
        12.0 * t.sqrt(),
        1e-12,
    )?
    .value;
    let x_scale = (2.0 * t * t * t / 3.0).sqrt();
    let x_max = 10.0 * x_scale + 2.0 * h;
    let steps = 400usize;
    let mut best = 0.0f64;
    for i in 0..=steps {
        let x1 = x_max * i as f64 / steps as f64;
        let c_lo = 1.5 * (x1 - h) / t;
        let c_hi = 1.5 * (x1 + h) / t;
        // the integrand |G(x-h) - G(x+h)| changes sign exactly once, at
        // v = 2 x1 / t (from equating the two Gaussian exponents)
        let root = 2.0 * x1 / t;
        let lo = c_lo.min(c_hi) - 12.0 * t.sqrt();
        let hi = c_lo.max(c_hi) + 12.0 * t.sqrt();
        let f = |v1: f64| {
            let a = green.evaluate([x1 - h, 0.0, 0.0], [v1, 0.0, 0.0]);
            let b = green.evaluate([x1 + h, 0.0, 0.0], [v1, 0.0, 0.0]);
            (a - b).abs()
        };
        let mut axial = 0.0;
        if root > lo && root < hi {
            axial += quadrature::integrate_rel(f, lo, root, 1e-9)?.value;
            axial += quadrature::integrate_rel(f, root, hi, 1e-9)?.value;
        } else {
            axial = quadrature::integrate_rel(f, lo, hi, 1e-9)?.value;
        }
        best = best.max(axial * perp * perp);
    }
    Ok(best / (2.0 * h))
}

/// Empirical exceedance frequency of the concentration-inequality event
/// `|mean(Z)| >= c_alpha sqrt(g(n)) log(n) / sqrt(n)` over Monte Carlo
/// trials; ties at the threshold count as exceedance.
pub fn concentration_check<F>(
    sample: F,
    g_of_n: f64,
    n: usize,
    c_alpha: f64,
    trials: usize,
    seed: u64,
) -> f64
where
    F: Fn(&mut CounterStream) -> f64 + Sync,
{
    let threshold = c_alpha * g_of_n.sqrt() * (n as f64).ln() / (n as f64).sqrt();
    let exceed: usize = (0..trials)
        .into_par_iter()
        .map(|trial| {
            let mut stream = CounterStream::new(seed, tag::MONTE_CARLO | trial as u64);
            let mut sum = 0.0;
            for _ in 0..n {
                sum += sample(&mut stream);
            }
            usize::from((sum / n as f64).abs() >= threshold)
        })
        .sum();
    exceed as f64 / trials as f64
}

/// Brownian running-max tail: empirical exceedance of
/// `max_{s <= dt} B(s) >= b` against the reflection value
/// `2 (1 - Phi(b / sqrt(dt)))`.
#[derive(Debug, Clone, Copy)]
pub struct BrownianTail {
    /// Frequency using the max over grid nodes only (biased low).
    pub empirical_grid: f64,
    /// Frequency using exact Brownian-bridge maxima between nodes.
    pub empirical_bridge: f64,
    /// Reflection-principle value for the continuum maximum.
    pub analytic: f64,
    /// Monte Carlo standard error of the bridge frequency.
    pub stderr: f64,
}

pub fn brownian_max_tail(
    delta_t: f64,
    b: f64,
    trials: usize,
    grid_points: usize,
    seed: u64,
) -> Result<BrownianTail> {
    if b < 0.0 || delta_t <= 0.0 || grid_points == 0 || trials == 0 {
        return Err(invalid("brownian_max_tail", "need b >= 0, dt > 0, grid/trials > 0"));
    }
    let h = delta_t / grid_points as f64;
    let counts: (usize, usize) = (0..trials)
        .into_par_iter()
        .map(|trial| {
            let mut stream = CounterStream::new(seed, tag::MONTE_CARLO | trial as u64);
            let mut pos = 0.0f64;
            let mut grid_max = 0.0f64;
            let mut bridge_max = 0.0f64;
            for _ in 0..grid_points {
                let next = pos + h.sqrt() * stream.normal::<f64>();
                // max of the bridge between pos and next:
                // (a + b + sqrt((b-a)^2 - 2 h ln U)) / 2
                let u: f64 = stream.uniform();
                let d = next - pos;
                let m = 0.5 * (pos + next + (d * d - 2.0 * h * u.ln()).sqrt());
                bridge_max = bridge_max.max(m);
                pos = next;
                grid_max = grid_max.max(pos);
            }
            (
                usize::from(grid_max >= b),
                usize::from(bridge_max >= b),
            )
        })
        .reduce(|| (0, 0), |a, c| (a.0 + c.0, a.1 + c.1));
    let p_bridge = counts.1 as f64 / trials as f64;
    Ok(BrownianTail {
        empirical_grid: counts.0 as f64 / trials as f64,
        empirical_bridge: p_bridge,
        analytic: 2.0 * (1.0 - normal_cdf(b / delta_t.sqrt())),
        stderr: (p_bridge * (1.0 - p_bridge) / trials as f64).sqrt(),
    })
}

/// Per particle i, the number of j whose free-streamed relative position
/// `x_i - x_j + tau (v_i - v_j)` lies within
/// `N^(-lambda2) + log(N) dt_block^(3/2)`.
pub fn collision_candidate_counts<R: Real>(
    state: &PhaseState<R>,
    lambda2: R,
    dt_block: R,
    t_offset: R,
) -> Vec<usize> {
    let n = state.len();
    let radius = rn::<R>(n).powf(-lambda2)
        + rn::<R>(n).ln() * dt_block.powf(r(1.5));
    let radius_sq = radius * radius;
    (0..n)
        .into_par_iter()
        .map(|i| {
            let xi = state.positions[i];
            let vi = state.velocities[i];
            let mut count = 0usize;
            for j in 0..n {
                if j == i {
                    continue;
                }
                let rel = vec3::add(
                    vec3::sub(xi, state.positions[j]),
                    vec3::scale(vec3::sub(vi, state.velocities[j]), t_offset),
                );
                if vec3::norm_sq(rel) <= radius_sq {
                    count += 1;
                }
            }
            count
        })
        .collect()
}

/// `C* = ||rho||_3 (4 pi / 3)^(2/3)`, the binomial-probability constant of
/// the collision bound, from the L^3 norm of the sampling density.
pub fn c_star(density: &DensityModel<f64>) -> Result<f64> {
    let l3 = density_lp_norm(density, 3.0)?;
    Ok(l3 * (4.0 * std::f64::consts::PI / 3.0).powf(2.0 / 3.0))
}

/// The cardinality bound `2 C* N (3 N^(-lambda2) + log(N) dt^(3/2))^2`.
pub fn collision_bound(c_star: f64, n: usize, lambda2: f64, dt_block: f64) -> f64 {
    let nf = n as f64;
    let shell = 3.0 * nf.powf(-lambda2) + nf.ln() * dt_block.powf(1.5);
    2.0 * c_star * nf * shell * shell
}

/// Kolmogorov-Smirnov statistic of samples against an analytic CDF.
pub fn ks_statistic<F: Fn(f64) -> f64>(samples: &mut [f64], cdf: F) -> f64 {
    samples.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let n = samples.len() as f64;
    let mut worst = 0.0f64;
    for (i, &x) in samples.iter().enumerate() {
        let f = cdf(x);
        worst = worst.max((f - i as f64 / n).abs());
        worst = worst.max((f - (i as f64 + 1.0) / n).abs());
    }
    worst
}

/// One-percent critical value of the two-sided KS test.
pub fn ks_critical_1pct(n: usize) -> f64 {
    1.627624 / (n as f64).sqrt()
}
