//! Time integration of the interacting system, the mean-field system, and
//! their shared-noise coupling.
//!
//! * `pairwise_force` is the `1/(N-1)`-weighted sum of the mollified kernel
//!   over all pairs; O(N^2) with the outer index parallel and the inner sum
//!   sequential, so results are bit-stable across thread counts.
//! * `run_coupled` evolves three ensembles: the interacting particles Phi,
//!   a mean-field copy Psi driven by a large reference ensemble on the same
//!   Brownian increments, and the self-interacting reference ensemble on
//!   disjoint increments.

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::fields::{self, DensityModel, VelocityModel};
use crate::kernels::{BlobProfile, KernelConfig, KernelScales};
use crate::rng::NoiseSource;
use crate::scalar::{r, rn, Real};
use crate::vec3::{self, Vector3};

/// Positions and velocities of an ensemble; both N x 3.
#[derive(Debug, Clone, PartialEq)]
pub struct PhaseState<R> {
    pub positions: Vec<Vector3<R>>,
    pub velocities: Vec<Vector3<R>>,
}

impl<R: Real> PhaseState<R> {
    pub fn new(positions: Vec<Vector3<R>>, velocities: Vec<Vector3<R>>) -> Result<Self> {
        if positions.len() != velocities.len() {
            return Err(Error::DimensionMismatch(format!(
                "{} positions vs {} velocities",
                positions.len(),
                velocities.len()
            )));
        }
        let finite = positions
            .iter()
            .chain(velocities.iter())
            .all(|v| vec3::is_finite(*v));
        if !finite {
            return Err(Error::DimensionMismatch(
                "non-finite entries in phase state".into(),
            ));
        }
        Ok(Self {
            positions,
            velocities,
        })
    }

    pub fn len(&self) -> usize {
        self.positions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.positions.is_empty()
    }

    pub fn total_momentum(&self) -> Vector3<R> {
        let mut total = vec3::zero();
        for v in &self.velocities {
            total = vec3::add(total, *v);
        }
        total
    }
}

/// Execution mode for the O(N^2) sums. `Deterministic` keeps the inner
/// reduction sequential per row; `Fast` allows chunked inner reductions
/// whose order may vary, changing results only by rounding.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum ExecMode {
    #[default]
    Deterministic,
    Fast,
}

/// Integration parameters for the Euler-Maruyama stepper.
#[derive(Debug, Clone, Copy)]
pub struct SimParams<R> {
    pub sigma: R,
    pub horizon: R,
    pub dt: R,
    pub seed: u64,
    /// Kick-then-drift variant: the position update uses the updated
    /// velocity. Default is drift-with-incoming-velocity.
    pub semi_implicit: bool,
}

impl<R: Real> SimParams<R> {
    pub fn new(sigma: R, horizon: R, dt: R, seed: u64) -> Result<Self> {
        if sigma < R::zero() {
            return Err(crate::error::invalid("sigma", "must be nonnegative"));
        }
        if dt <= R::zero() || (horizon > R::zero() && dt > horizon) {
            return Err(crate::error::invalid("dt", "need 0 < dt <= horizon"));
        }
        Ok(Self {
            sigma,
            horizon,
            dt,
            seed,
            semi_implicit: false,
        })
    }

    pub fn steps(&self) -> u64 {
        (self.horizon / self.dt).ceil().to_f64_lossy() as u64
    }
}

/// Structure-of-arrays copy of the positions; the inner force loop runs on
/// flat coordinate slices so it vectorizes.
struct SoaPositions<R> {
    xs: Vec<R>,
    ys: Vec<R>,
    zs: Vec<R>,
}

impl<R: Real> SoaPositions<R> {
    fn new(positions: &[Vector3<R>]) -> Self {
        Self {
            xs: positions.iter().map(|p| p[0]).collect(),
            ys: positions.iter().map(|p| p[1]).collect(),
            zs: positions.iter().map(|p| p[2]).collect(),
        }
    }
}

/// Force the point `(xi, yi, zi)` feels from every source in `soa`,
/// unweighted and without the `a N^(3 delta)` amplitude. Sources exactly at
/// the target (including the self term) contribute zero through the
/// factor-times-zero displacement, matching `k_N(0) = 0`; no index has to
/// be skipped. Two passes per chunk keep the hot loop branch-free enough
/// for SIMD.
#[inline]
fn row_force_soa<R: Real, P: BlobProfile<R>>(
    profile: &P,
    soa: &SoaPositions<R>,
    inv_len_sq: R,
    xi: R,
    yi: R,
    zi: R,
) -> Vector3<R> {
    const CHUNK: usize = 128;
    let n = soa.xs.len();
    let mut factors = [R::zero(); CHUNK];
    let mut ax = R::zero();
    let mut ay = R::zero();
    let mut az = R::zero();
    let mut base = 0usize;
    while base < n {
        let m = CHUNK.min(n - base);
        for k in 0..m {
            let j = base + k;
            let dx = xi - soa.xs[j];
            let dy = yi - soa.ys[j];
            let dz = zi - soa.zs[j];
            let r2 = dx * dx + dy * dy + dz * dz;
            factors[k] = profile.field_factor_sq(r2 * inv_len_sq);
        }
        for k in 0..m {
            let j = base + k;
            ax = ax + factors[k] * (xi - soa.xs[j]);
            ay = ay + factors[k] * (yi - soa.ys[j]);
            az = az + factors[k] * (zi - soa.zs[j]);
        }
        base += m;
    }
    [ax, ay, az]
}

/// Pairwise interaction force: row i is `1/(N-1) sum_{j != i} k_N(x_i - x_j)`.
pub fn pairwise_force<R: Real, P: BlobProfile<R>>(
    config: &KernelConfig<R>,
    profile: &P,
    state: &PhaseState<R>,
    mode: ExecMode,
) -> Vec<Vector3<R>> {
    let scales = config.scales();
    let n = state.len();
    let weight = scales.amp / rn::<R>(n - 1);
    let soa = SoaPositions::new(&state.positions);
    match mode {
        ExecMode::Deterministic => (0..n)
            .into_par_iter()
            .map(|i| {
                let raw = row_force_soa(
                    profile,
                    &soa,
                    scales.inv_len_sq,
                    soa.xs[i],
                    soa.ys[i],
                    soa.zs[i],
                );
                vec3::scale(raw, weight)
            })
            .collect(),
        ExecMode::Fast => {
            let positions = &state.positions;
            (0..n)
                .into_par_iter()
                .map(|i| {
                    let xi = positions[i];
                    let acc = positions
                        .par_chunks(512)
                        .enumerate()
                        .map(|(ci, chunk)| {
                            let base = ci * 512;
                            let mut local = vec3::zero();
                            for (off, xj) in chunk.iter().enumerate() {
                                if base + off == i {
                                    continue;
                                }
                                local =
                                    vec3::add(local, scales.field(profile, vec3::sub(xi, *xj)));
                            }
                            local
                        })
                        .reduce(vec3::zero, vec3::add);
                    vec3::scale(acc, R::one() / rn::<R>(n - 1))
                })
                .collect()
        }
    }
}

/// Majorant sums: row i is `1/(N-1) sum_{j != i} ell_N(x_i - x_j)`.
pub fn pairwise_ell<R: Real, P: BlobProfile<R>>(
    config: &KernelConfig<R>,
    _profile: &P,
    state: &PhaseState<R>,
) -> Vec<R> {
    let scales = config.scales();
    let n = state.len();
    let weight = R::one() / rn::<R>(n - 1);
    let positions = &state.positions;
    (0..n)
        .into_par_iter()
        .map(|i| {
            let xi = positions[i];
            let mut acc = R::zero();
            for (j, xj) in positions.iter().enumerate() {
                if j == i {
                    continue;
                }
                acc = acc + scales.ell_of_sq(vec3::norm_sq(vec3::sub(xi, *xj)));
            }
            acc * weight
        })
        .collect()
}

/// Monte Carlo mean field: `1/M sum_j k_N(x - y_j)` over the reference
/// ensemble positions.
pub fn reference_ensemble_force<R: Real, P: BlobProfile<R>>(
    config: &KernelConfig<R>,
    profile: &P,
    ensemble: &PhaseState<R>,
    x: Vector3<R>,
) -> Vector3<R> {
    let scales = config.scales();
    let mut acc = vec3::zero();
    for y in &ensemble.positions {
        acc = vec3::add(acc, scales.field(profile, vec3::sub(x, *y)));
    }
    vec3::scale(acc, R::one() / rn::<R>(ensemble.len()))
}

fn batch_reference_force<R: Real, P: BlobProfile<R>>(
    scales: &KernelScales<R>,
    profile: &P,
    ensemble: &[Vector3<R>],
    targets: &[Vector3<R>],
) -> Vec<Vector3<R>> {
    let weight = scales.amp / rn::<R>(ensemble.len());
    let soa = SoaPositions::new(ensemble);
    targets
        .par_iter()
        .map(|&x| {
            let raw = row_force_soa(profile, &soa, scales.inv_len_sq, x[0], x[1], x[2]);
            vec3::scale(raw, weight)
        })
        .collect()
}

/// One Euler-Maruyama step. Forces are evaluated at the incoming state;
/// velocities get `F dt + sqrt(2 sigma) dB`, positions drift with the
/// incoming velocity (or the updated one in the semi-implicit variant).
pub fn step<R: Real>(
    state: &PhaseState<R>,
    forces: &[Vector3<R>],
    params: &SimParams<R>,
    noise: &NoiseSource,
    step_index: u64,
    ensemble_name: &'static str,
) -> Result<PhaseState<R>> {
    let n = state.len();
    let dt = params.dt;
    let noise_amp = (r::<R>(2.0) * params.sigma).sqrt();
    let mut positions = Vec::with_capacity(n);
    let mut velocities = Vec::with_capacity(n);
    for i in 0..n {
        let db: Vector3<R> = if params.sigma > R::zero() {
            noise.increment(i, step_index)
        } else {
            vec3::zero()
        };
        let v_new = vec3::add(
            state.velocities[i],
            vec3::add(vec3::scale(forces[i], dt), vec3::scale(db, noise_amp)),
        );
        let drift_v = if params.semi_implicit {
            v_new
        } else {
            state.velocities[i]
        };
        let x_new = vec3::add(state.positions[i], vec3::scale(drift_v, dt));
        if !(vec3::is_finite(x_new) && vec3::is_finite(v_new)) {
            return Err(Error::IntegrationBlowUp {
                particle: i,
                step: step_index,
                ensemble: ensemble_name,
            });
        }
        positions.push(x_new);
        velocities.push(v_new);
    }
    Ok(PhaseState {
        positions,
        velocities,
    })
}

/// Weighted sup distance `sqrt(log N) ||X - Xbar||_inf + ||V - Vbar||_inf`,
/// with the infinity norm over all particle coordinates.
pub fn distance_norm<R: Real>(phi: &PhaseState<R>, psi: &PhaseState<R>) -> Result<R> {
    let n = phi.len();
    if n != psi.len() || n < 2 {
        return Err(Error::DimensionMismatch(format!(
            "{} vs {} particles (need equal, >= 2)",
            n,
            psi.len()
        )));
    }
    let mut dx = R::zero();
    let mut dv = R::zero();
    for i in 0..n {
        dx = dx.max(vec3::max_abs(vec3::sub(phi.positions[i], psi.positions[i])));
        dv = dv.max(vec3::max_abs(vec3::sub(phi.velocities[i], psi.velocities[i])));
    }
    Ok(rn::<R>(n).ln().sqrt() * dx + dv)
}

/// Time series of the coupling distance, plus optional state snapshots.
#[derive(Debug, Clone)]
pub struct TrajectoryRecord<R> {
    pub times: Vec<R>,
    pub distance_series: Vec<R>,
    pub snapshots: Vec<(R, PhaseState<R>, PhaseState<R>)>,
}

impl<R: Real> TrajectoryRecord<R> {
    pub fn max_distance(&self) -> f64 {
        self.distance_series
            .iter()
            .map(|d| d.to_f64_lossy())
            .fold(0.0, f64::max)
    }
}

/// Evolve the interacting ensemble Phi, its mean-field copy Psi, and the
/// independent reference ensemble, sharing Brownian increments between Phi
/// and Psi particle-by-particle.
///
/// Phi and Psi start from the identical `initial` state (streams `0..N`);
/// the reference ensemble of size `reference_size` is sampled i.i.d. from
/// the same initial law and uses streams `N..N+M`. The distance series is
/// recorded every `record_every` steps (and at t = 0).
#[allow(clippy::too_many_arguments)]
pub fn run_coupled<R: Real, P: BlobProfile<R>>(
    config: &KernelConfig<R>,
    profile: &P,
    density: &DensityModel<R>,
    velocity: &VelocityModel<R>,
    initial: PhaseState<R>,
    reference_size: usize,
    params: &SimParams<R>,
    record_every: u64,
    snapshot_every: Option<u64>,
) -> Result<TrajectoryRecord<R>> {
    let n = initial.len();
    if n < 2 {
        return Err(Error::EmptyEnsemble);
    }
    if reference_size < 2 {
        return Err(Error::EmptyEnsemble);
    }
    let scales = config.scales();
    let dt64 = params.dt.to_f64_lossy();
    let shared_noise = NoiseSource::new(params.seed, 0, dt64);
    let reference_noise = NoiseSource::new(params.seed, n as u64, dt64);

    let mut phi = initial.clone();
    let mut psi = initial;
    let mut reference = fields::sample_initial_phase(
        density,
        velocity,
        reference_size,
        params.seed,
        crate::rng::REFERENCE_SUBSTREAM,
    )?;
    let ref_weight_cfg = config; // same kernel (same N-based cut-off)

    let steps = params.steps();
    let mut record = TrajectoryRecord {
        times: vec![R::zero()],
        distance_series: vec![distance_norm(&phi, &psi)?],
        snapshots: Vec::new(),
    };
    if snapshot_every.is_some() {
        record
            .snapshots
            .push((R::zero(), phi.clone(), psi.clone()));
    }

    for step_index in 0..steps {
        let phi_forces = pairwise_force(config, profile, &phi, ExecMode::Deterministic);
        let psi_forces =
            batch_reference_force(&scales, profile, &reference.positions, &psi.positions);
        let ref_forces =
            pairwise_force(ref_weight_cfg, profile, &reference, ExecMode::Deterministic);

        phi = step(&phi, &phi_forces, params, &shared_noise, step_index, "phi")?;
        psi = step(&psi, &psi_forces, params, &shared_noise, step_index, "psi")?;
        reference = step(
            &reference,
            &ref_forces,
            params,
            &reference_noise,
            step_index,
            "reference",
        )?;

        let done = step_index + 1;
        if done % record_every == 0 || done == steps {
            let t = params.dt * rn::<R>(done as usize);
            record.times.push(t);
            record.distance_series.push(distance_norm(&phi, &psi)?);
            if let Some(every) = snapshot_every {
                if done % every == 0 || done == steps {
                    record.snapshots.push((t, phi.clone(), psi.clone()));
                }
            }
        }
    }
    Ok(record)
}

/// Snapshot of the reference ensemble after evolving it alone (used by the
/// Wasserstein sweep at t > 0).
pub fn evolve_reference<R: Real, P: BlobProfile<R>>(
    config: &KernelConfig<R>,
    profile: &P,
    density: &DensityModel<R>,
    velocity: &VelocityModel<R>,
    size: usize,
    params: &SimParams<R>,
) -> Result<PhaseState<R>> {
    let mut reference =
        fields::sample_initial_phase(density, velocity, size, params.seed, crate::rng::REFERENCE_SUBSTREAM)?;
    let noise = NoiseSource::new(params.seed, 0, params.dt.to_f64_lossy());
    for step_index in 0..params.steps() {
        let forces = pairwise_force(config, profile, &reference, ExecMode::Deterministic);
        reference = step(&reference, &forces, params, &noise, step_index, "reference")?;
    }
    Ok(reference)
}

/// Max over sampled particles of the residual between a per-particle
/// statistic and its exact mean-field value.
pub fn residual_between<R: Real>(per_particle: &[R], exact: &[R]) -> R {
    per_particle
        .iter()
        .zip(exact)
        .map(|(a, b)| (*a - *b).abs())
        .fold(R::zero(), R::max)
}

/// t = 0 realization of the law-of-large-numbers consistency error:
/// `|| K_N(X) - (k_N * rho)(X) ||_inf` over N i.i.d. samples from `density`.
pub fn consistency_residual<R: Real, P: BlobProfile<R>>(
    config: &KernelConfig<R>,
    profile: &P,
    density: &DensityModel<R>,
    velocity: &VelocityModel<R>,
    n: usize,
    seed: u64,
    substream: u64,
) -> Result<f64> {
    let state = fields::sample_initial_phase(density, velocity, n, seed, substream)?;
    let forces = pairwise_force(config, profile, &state, ExecMode::Deterministic);
    let residual = state
        .positions
        .par_iter()
        .zip(forces.par_iter())
        .map(|(x, f)| {
            let exact = fields::meanfield_force_exact(config, profile, density, *x)?;
            Ok(vec3::norm(vec3::sub(*f, exact.value)).to_f64_lossy())
        })
        .try_reduce(|| 0.0, |a, b| Ok(a.max(b)))?;
    Ok(residual)
}

/// Same for the majorant sums `L_N` against `ell_N * rho`. Exactly
/// coincident sample pairs (a measure-zero event) are rejected and the
/// draw repeated on the next substream.
pub fn ell_consistency_residual<R: Real, P: BlobProfile<R>>(
    config: &KernelConfig<R>,
    profile: &P,
    density: &DensityModel<R>,
    velocity: &VelocityModel<R>,
    n: usize,
    seed: u64,
    substream: u64,
) -> Result<f64> {
    let mut attempt = substream;
    let state = loop {
        let state = fields::sample_initial_phase(density, velocity, n, seed, attempt)?;
        if !has_coincident_pair(&state.positions) {
            break state;
        }
        attempt = attempt.wrapping_add(1 << 48);
    };
    let sums = pairwise_ell(config, profile, &state);
    let residual = state
        .positions
        .par_iter()
        .zip(sums.par_iter())
        .map(|(x, l)| {
            let exact = fields::ell_convolution(config, density, *x, false)?;
            Ok((*l - exact.value).abs().to_f64_lossy())
        })
        .try_reduce(|| 0.0, |a, b| Ok(a.max(b)))?;
    Ok(residual)
}

fn has_coincident_pair<R: Real>(points: &[Vector3<R>]) -> bool {
    let mut sorted: Vec<&Vector3<R>> = points.iter().collect();
    sorted.sort_by(|a, b| a.partial_cmp(b).unwrap());
    sorted.windows(2).any(|w| w[0] == w[1])
}
