//! Empirical measures and Wasserstein-p distances between them.
//!
//! Equal-weight, equal-count point clouds couple via permutations, so the
//! exact distance is a linear assignment problem on the matrix of p-th
//! power costs; it is solved by shortest augmenting paths with potentials
//! (the Jonker-Volgenant scheme). Large clouds fall back to the sliced
//! estimator: a Monte Carlo average of 1-D distances over random
//! projection directions, reported with its standard error.

use rayon::prelude::*;

use crate::dynamics::PhaseState;
use crate::error::{invalid, Error, Result};
use crate::rng::CounterStream;
use crate::scalar::Real;

/// Equal-weight point cloud in R^d, stored flattened row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct EmpiricalMeasure<R> {
    pub dim: usize,
    points: Vec<R>,
}

impl<R: Real> EmpiricalMeasure<R> {
    pub fn new(dim: usize, points: Vec<R>) -> Result<Self> {
        if dim == 0 || points.is_empty() || points.len() % dim != 0 {
            return Err(invalid("points", "count must be a positive multiple of dim"));
        }
        if points.iter().any(|c| !c.is_finite()) {
            return Err(invalid("points", "coordinates must be finite"));
        }
        Ok(Self { dim, points })
    }

    pub fn len(&self) -> usize {
        self.points.len() / self.dim
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn point(&self, i: usize) -> &[R] {
        &self.points[i * self.dim..(i + 1) * self.dim]
    }

    pub fn coords(&self) -> &[R] {
        &self.points
    }

    fn cost_sq_dist(&self, i: usize, other: &Self, j: usize) -> R {
        let a = self.point(i);
        let b = other.point(j);
        let mut acc = R::zero();
        for (x, y) in a.iter().zip(b) {
            let d = *x - *y;
            acc = acc + d * d;
        }
        acc
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Projection {
    Position,
    Phase,
}

/// Empirical measure of a phase state: the position cloud in R^3 or the
/// full phase-space cloud in R^6.
pub fn from_phase<R: Real>(state: &PhaseState<R>, projection: Projection) -> EmpiricalMeasure<R> {
    match projection {
        Projection::Position => {
            let mut pts = Vec::with_capacity(3 * state.len());
            for p in &state.positions {
                pts.extend_from_slice(p);
            }
            EmpiricalMeasure { dim: 3, points: pts }
        }
        Projection::Phase => {
            let mut pts = Vec::with_capacity(6 * state.len());
            for (p, v) in state.positions.iter().zip(&state.velocities) {
                pts.extend_from_slice(p);
                pts.extend_from_slice(v);
            }
            EmpiricalMeasure { dim: 6, points: pts }
        }
    }
}

/// Exact minimum-cost assignment by shortest augmenting paths with dual
/// potentials. Returns the row-to-column matching.
pub fn solve_assignment(n: usize, cost: &dyn Fn(usize, usize) -> f64) -> Vec<usize> {
    // Column 0 is a virtual root; p[j] is the row matched to column j.
    const UNMATCHED: usize = usize::MAX;
    let mut u = vec![0.0f64; n + 1];
    let mut v = vec![0.0f64; n + 1];
    let mut p = vec![UNMATCHED; n + 1];
    let mut way = vec![0usize; n + 1];
    for i in 1..=n {
        p[0] = i;
        let mut j0 = 0usize;
        let mut minv = vec![f64::INFINITY; n + 1];
        let mut used = vec![false; n + 1];
        loop {
            used[j0] = true;
            let i0 = p[j0];
            let mut delta = f64::INFINITY;
            let mut j1 = 0usize;
            for j in 1..=n {
                if used[j] {
                    continue;
                }
                let cur = cost(i0 - 1, j - 1) - u[i0] - v[j];
                if cur < minv[j] {
                    minv[j] = cur;
                    way[j] = j0;
                }
                if minv[j] < delta {
                    delta = minv[j];
                    j1 = j;
                }
            }
            for j in 0..=n {
                if used[j] {
                    u[p[j]] += delta;
                    v[j] -= delta;
                } else {
                    minv[j] -= delta;
                }
            }
            j0 = j1;
            if p[j0] == UNMATCHED {
                break;
            }
        }
        loop {
            let j1 = way[j0];
            p[j0] = p[j1];
            j0 = j1;
            if j0 == 0 {
                break;
            }
        }
    }
    let mut assignment = vec![0usize; n];
    for j in 1..=n {
        if p[j] != UNMATCHED && p[j] >= 1 {
            assignment[p[j] - 1] = j - 1;
        }
    }
    assignment
}

fn check_counts<R: Real>(mu: &EmpiricalMeasure<R>, nu: &EmpiricalMeasure<R>) -> Result<usize> {
    if mu.dim != nu.dim {
        return Err(Error::DimensionMismatch(format!(
            "dim {} vs {}",
            mu.dim, nu.dim
        )));
    }
    if mu.len() != nu.len() {
        return Err(Error::UnequalCounts {
            left: mu.len(),
            right: nu.len(),
        });
    }
    Ok(mu.len())
}

/// Exact W_p between equal-count clouds:
/// `(min_sigma 1/N sum |x_i - y_sigma(i)|^p)^(1/p)`.
pub fn wasserstein_exact<R: Real>(
    mu: &EmpiricalMeasure<R>,
    nu: &EmpiricalMeasure<R>,
    p: f64,
) -> Result<f64> {
    if p < 1.0 {
        return Err(invalid("p", "cost power must be >= 1"));
    }
    let n = check_counts(mu, nu)?;
    // Cost matrix of p-th power distances, rows parallel.
    let cost: Vec<f64> = (0..n)
        .into_par_iter()
        .flat_map_iter(|i| {
            (0..n).map(move |j| {
                let d2 = mu.cost_sq_dist(i, nu, j).to_f64_lossy();
                if p == 2.0 {
                    d2
                } else if p == 1.0 {
                    d2.sqrt()
                } else {
                    d2.sqrt().powf(p)
                }
            })
        })
        .collect();
    let assignment = solve_assignment(n, &|i, j| cost[i * n + j]);
    let total: f64 = assignment
        .iter()
        .enumerate()
        .map(|(i, &j)| cost[i * n + j])
        .sum();
    Ok((total / n as f64).powf(1.0 / p))
}

/// 1-D W_p: sort both samples and match in order.
pub fn wasserstein_1d<R: Real>(xs: &[R], ys: &[R], p: f64) -> Result<f64> {
    if xs.len() != ys.len() {
        return Err(Error::UnequalCounts {
            left: xs.len(),
            right: ys.len(),
        });
    }
    if xs.is_empty() {
        return Err(Error::EmptyEnsemble);
    }
    let mut a: Vec<f64> = xs.iter().map(|x| x.to_f64_lossy()).collect();
    let mut b: Vec<f64> = ys.iter().map(|y| y.to_f64_lossy()).collect();
    a.sort_by(|x, y| x.partial_cmp(y).unwrap());
    b.sort_by(|x, y| x.partial_cmp(y).unwrap());
    let total: f64 = a
        .iter()
        .zip(&b)
        .map(|(x, y)| (x - y).abs().powf(p))
        .sum();
    Ok((total / a.len() as f64).powf(1.0 / p))
}

/// Sliced W_p estimate: Monte Carlo average over random unit directions of
/// the 1-D distance of the projected clouds. A lower-bound-flavored
/// surrogate; never substituted where exact values are asserted.
pub fn wasserstein_sliced<R: Real>(
    mu: &EmpiricalMeasure<R>,
    nu: &EmpiricalMeasure<R>,
    p: f64,
    n_projections: usize,
    stream: &mut CounterStream,
) -> Result<(f64, f64)> {
    if n_projections < 2 {
        return Err(invalid("n_projections", "need at least 2 projections"));
    }
    let n = check_counts(mu, nu)?;
    let d = mu.dim;
    let mut sum = 0.0;
    let mut sum2 = 0.0;
    for _ in 0..n_projections {
        // uniform direction in R^d
        let mut dir = vec![0.0f64; d];
        let mut norm = 0.0;
        while norm < 1e-12 {
            for c in dir.iter_mut() {
                *c = stream.normal::<f64>();
            }
            norm = dir.iter().map(|c| c * c).sum::<f64>().sqrt();
        }
        for c in dir.iter_mut() {
            *c /= norm;
        }
        let project = |m: &EmpiricalMeasure<R>| -> Vec<f64> {
            (0..n)
                .map(|i| {
                    m.point(i)
                        .iter()
                        .zip(&dir)
                        .map(|(x, w)| x.to_f64_lossy() * w)
                        .sum()
                })
                .collect()
        };
        let w = wasserstein_1d(&project(mu), &project(nu), p)?;
        sum += w;
        sum2 += w * w;
    }
    let mean = sum / n_projections as f64;
    let var = (sum2 / n_projections as f64 - mean * mean).max(0.0);
    Ok((mean, (var / n_projections as f64).sqrt()))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DistanceMethod {
    Exact,
    Sliced,
}

impl DistanceMethod {
    pub fn name(self) -> &'static str {
        match self {
            DistanceMethod::Exact => "exact",
            DistanceMethod::Sliced => "sliced",
        }
    }
}

#[derive(Debug, Clone, Copy)]
pub struct WassersteinEstimate {
    pub value: f64,
    pub stderr: Option<f64>,
    pub method: DistanceMethod,
}

/// Cloud size above which the assignment solve is replaced by the sliced
/// estimator with [`SLICED_PROJECTIONS`] directions.
pub const EXACT_CUTOVER: usize = 2048;
pub const SLICED_PROJECTIONS: usize = 256;

/// Distance between a cloud and an equal-size draw from a reference
/// sampler: exact up to [`EXACT_CUTOVER`] points, sliced beyond.
pub fn wasserstein_to_reference<R: Real, F>(
    mu: &EmpiricalMeasure<R>,
    sampler: F,
    p: f64,
    stream: &mut CounterStream,
) -> Result<WassersteinEstimate>
where
    F: FnOnce(usize) -> Result<EmpiricalMeasure<R>>,
{
    let nu = sampler(mu.len())?;
    if mu.len() <= EXACT_CUTOVER {
        Ok(WassersteinEstimate {
            value: wasserstein_exact(mu, &nu, p)?,
            stderr: None,
            method: DistanceMethod::Exact,
        })
    } else {
        let (value, stderr) = wasserstein_sliced(mu, &nu, p, SLICED_PROJECTIONS, stream)?;
        Ok(WassersteinEstimate {
            value,
            stderr: Some(stderr),
            method: DistanceMethod::Sliced,
        })
    }
}

/// One distance measurement inside a sweep CSV.
#[derive(Debug, Clone)]
pub struct DistanceRow {
    pub n: usize,
    pub seed: u64,
    pub t: f64,
    pub p: f64,
    pub method: DistanceMethod,
    pub value: f64,
    pub stderr: f64,
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::CounterStream;

    fn random_measure(stream: &mut CounterStream, n: usize, dim: usize) -> EmpiricalMeasure<f64> {
        let pts: Vec<f64> = (0..n * dim).map(|_| stream.normal()).collect();
        EmpiricalMeasure::new(dim, pts).unwrap()
    }

    /// Brute force over all permutations (Heap's algorithm), n <= 8.
    fn brute_force(mu: &EmpiricalMeasure<f64>, nu: &EmpiricalMeasure<f64>, p: f64) -> f64 {
        let n = mu.len();
        let mut perm: Vec<usize> = (0..n).collect();
        let mut best = f64::INFINITY;
        let mut c = vec![0usize; n];
        let eval = |perm: &[usize]| -> f64 {
            perm.iter()
                .enumerate()
                .map(|(i, &j)| mu.cost_sq_dist(i, nu, j).sqrt().powf(p))
                .sum()
        };
        best = best.min(eval(&perm));
        let mut i = 0;
        while i < n {
            if c[i] < i {
                if i % 2 == 0 {
                    perm.swap(0, i);
                } else {
                    perm.swap(c[i], i);
                }
                best = best.min(eval(&perm));
                c[i] += 1;
                i = 0;
            } else {
                c[i] = 0;
                i += 1;
            }
        }
        (best / n as f64).powf(1.0 / p)
    }

    #[test]
    fn from_phase_projections() {
        let state = PhaseState::new(
            vec![[1.0, 2.0, 3.0], [4.0, 5.0, 6.0]],
            vec![[0.1, 0.2, 0.3], [0.4, 0.5, 0.6]],
        )
        .unwrap();
        let pos = from_phase(&state, Projection::Position);
        assert_eq!(pos.dim, 3);
        assert_eq!(pos.point(1), &[4.0, 5.0, 6.0]);
        let phase = from_phase(&state, Projection::Phase);
        assert_eq!(phase.dim, 6);
        assert_eq!(phase.point(0), &[1.0, 2.0, 3.0, 0.1, 0.2, 0.3]);
        let single = PhaseState::new(vec![[0.0; 3]], vec![[0.0; 3]]).unwrap();
        assert_eq!(from_phase(&single, Projection::Phase).len(), 1);
    }

    #[test]
    fn exact_matches_brute_force_on_200_instances() {
        let mut stream = CounterStream::new(2718, 0);
        for trial in 0..200 {
            let n = 2 + (stream.next_u64() % 5) as usize; // 2..=6
            let dim = if trial % 2 == 0 { 3 } else { 6 };
            let mu = random_measure(&mut stream, n, dim);
            let nu = random_measure(&mut stream, n, dim);
            for p in [1.0, 2.0] {
                let exact = wasserstein_exact(&mu, &nu, p).unwrap();
                let brute = brute_force(&mu, &nu, p);
                assert!(
                    (exact - brute).abs() <= 1e-12 * brute.max(1.0),
                    "trial {trial} p {p}: {exact} vs {brute}"
                );
            }
        }
    }

    #[test]
    fn identical_clouds_have_zero_distance() {
        let mut stream = CounterStream::new(1, 0);
        let mu = random_measure(&mut stream, 20, 3);
        for p in [1.0, 1.5, 2.0] {
            assert_eq!(wasserstein_exact(&mu, &mu, p).unwrap(), 0.0);
        }
    }

    #[test]
    fn translation_distance_is_shift_length() {
        let mut stream = CounterStream::new(7, 0);
        let mu = random_measure(&mut stream, 30, 3);
        let shift = [0.3, -0.4, 1.2];
        let norm = (0.3f64 * 0.3 + 0.4 * 0.4 + 1.2 * 1.2).sqrt();
        let shifted: Vec<f64> = mu
            .coords()
            .iter()
            .enumerate()
            .map(|(k, &c)| c + shift[k % 3])
            .collect();
        let nu = EmpiricalMeasure::new(3, shifted).unwrap();
        for p in [1.0, 2.0, 3.0] {
            let w = wasserstein_exact(&mu, &nu, p).unwrap();
            assert!(
                (w - norm).abs() <= 1e-12 * norm,
                "p {p}: {w} vs {norm}"
            );
        }
    }

    #[test]
    fn unequal_counts_rejected() {
        let mut stream = CounterStream::new(3, 0);
        let mu = random_measure(&mut stream, 4, 3);
        let nu = random_measure(&mut stream, 5, 3);
        assert!(matches!(
            wasserstein_exact(&mu, &nu, 2.0),
            Err(Error::UnequalCounts { .. })
        ));
        assert!(matches!(
            wasserstein_1d(&[1.0, 2.0], &[1.0], 1.0),
            Err(Error::UnequalCounts { .. })
        ));
    }

    #[test]
    fn one_dimensional_cases() {
        assert_eq!(wasserstein_1d(&[0.0, 1.0], &[0.0, 1.0], 2.0).unwrap(), 0.0);
        assert_eq!(wasserstein_1d(&[0.0], &[3.0], 2.0).unwrap(), 3.0);
        // random scalar clouds agree with the exact solver in dim 1
        let mut stream = CounterStream::new(9, 0);
        let xs: Vec<f64> = (0..50).map(|_| stream.normal()).collect();
        let ys: Vec<f64> = (0..50).map(|_| stream.normal::<f64>() + 0.5).collect();
        let mu = EmpiricalMeasure::new(1, xs.clone()).unwrap();
        let nu = EmpiricalMeasure::new(1, ys.clone()).unwrap();
        for p in [1.0, 2.0] {
            let a = wasserstein_1d(&xs, &ys, p).unwrap();
            let b = wasserstein_exact(&mu, &nu, p).unwrap();
            assert!((a - b).abs() < 1e-12 * b.max(1.0));
        }
    }

    #[test]
    fn sliced_estimator_bounds() {
        let mut stream = CounterStream::new(100, 0);
        let mu = random_measure(&mut stream, 64, 3);
        // identical clouds project to zero everywhere
        let (zero, _) = wasserstein_sliced(&mu, &mu, 2.0, 64, &mut stream).unwrap();
        assert_eq!(zero, 0.0);
        // translated clouds: each projection sees at most |t|
        let shift = [0.5, 0.5, 0.0];
        let norm = 0.5f64 * std::f64::consts::SQRT_2;
        let shifted: Vec<f64> = mu
            .coords()
            .iter()
            .enumerate()
            .map(|(k, &c)| c + shift[k % 3])
            .collect();
        let nu = EmpiricalMeasure::new(3, shifted).unwrap();
        let (v, se) = wasserstein_sliced(&mu, &nu, 2.0, 128, &mut stream).unwrap();
        assert!(v <= norm + 3.0 * se, "sliced {v} > |t| {norm} + 3 se");
        // sliced never exceeds exact (projections are 1-Lipschitz)
        let mu6 = random_measure(&mut stream, 32, 6);
        let nu6 = random_measure(&mut stream, 32, 6);
        let exact = wasserstein_exact(&mu6, &nu6, 2.0).unwrap();
        let (sl, se) = wasserstein_sliced(&mu6, &nu6, 2.0, 128, &mut stream).unwrap();
        assert!(sl <= exact + 3.0 * se, "sliced {sl} vs exact {exact}");
        assert!(matches!(
            wasserstein_sliced(&mu6, &nu6, 2.0, 1, &mut stream),
            Err(Error::InvalidParameter { .. })
        ));
    }

    #[test]
    fn metric_axioms_hold() {
        let mut stream = CounterStream::new(55, 0);
        for _ in 0..100 {
            let n = 3 + (stream.next_u64() % 6) as usize;
            let a = random_measure(&mut stream, n, 3);
            let b = random_measure(&mut stream, n, 3);
            let c = random_measure(&mut stream, n, 3);
            for p in [1.0, 2.0] {
                let ab = wasserstein_exact(&a, &b, p).unwrap();
                let ba = wasserstein_exact(&b, &a, p).unwrap();
                assert!((ab - ba).abs() <= 1e-12 * ab.max(1.0), "symmetry");
                let ac = wasserstein_exact(&a, &c, p).unwrap();
                let cb = wasserstein_exact(&c, &b, p).unwrap();
                assert!(ab <= ac + cb + 1e-10, "triangle: {ab} > {ac} + {cb}");
            }
        }
    }

    #[test]
    fn scaling_homogeneity_and_p_monotonicity() {
        let mut stream = CounterStream::new(77, 0);
        let mu = random_measure(&mut stream, 24, 3);
        let nu = random_measure(&mut stream, 24, 3);
        let scale = |m: &EmpiricalMeasure<f64>, c: f64| {
            EmpiricalMeasure::new(3, m.coords().iter().map(|&x| c * x).collect()).unwrap()
        };
        let w = wasserstein_exact(&mu, &nu, 2.0).unwrap();
        let w3 = wasserstein_exact(&scale(&mu, -3.0), &scale(&nu, -3.0), 2.0).unwrap();
        assert!((w3 - 3.0 * w).abs() <= 1e-12 * w3);
        // W_p <= W_q for p <= q on equal-weight clouds (Jensen)
        let w1 = wasserstein_exact(&mu, &nu, 1.0).unwrap();
        let w2 = wasserstein_exact(&mu, &nu, 2.0).unwrap();
        let w4 = wasserstein_exact(&mu, &nu, 4.0).unwrap();
        assert!(w1 <= w2 + 1e-12 && w2 <= w4 + 1e-12);
    }

    #[test]
    fn to_reference_same_seed_is_zero() {
        let mut stream = CounterStream::new(5, 0);
        let mu = random_measure(&mut stream, 16, 6);
        let clone = mu.clone();
        let est = wasserstein_to_reference(
            &mu,
            move |_n| Ok(clone),
            2.0,
            &mut CounterStream::new(0, 0),
        )
        .unwrap();
        assert_eq!(est.value, 0.0);
        assert_eq!(est.method, DistanceMethod::Exact);
    }
}
