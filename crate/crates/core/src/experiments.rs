//! Sweep orchestration and power-law fitting: turns the scaling statements
//! into measured exponents with uncertainties.

use rayon::prelude::*;

use crate::dynamics::{self, SimParams};
use crate::error::{invalid, Error, Result};
use crate::fields::{DensityModel, VelocityModel};
use crate::kernels::{KernelConfig, PolynomialBump};
use crate::measures::{self, Projection};
use crate::rng::{tag, CounterStream};

use crate::stats;

/// Fitted power-law exponent with uncertainty; the verdict object for every
/// scaling law.
#[derive(Debug, Clone)]
pub struct RateFitResult {
    pub slope: f64,
    pub intercept: f64,
    pub slope_stderr: f64,
    pub r_squared: f64,
    /// Per-abscissa aggregates: (N, median value, spread).
    pub per_point: Vec<(f64, f64, f64)>,
}

/// Ordinary least squares on `(log x, log y)`.
pub fn fit_power_law(xs: &[f64], ys: &[f64]) -> Result<RateFitResult> {
    if xs.len() != ys.len() {
        return Err(Error::DimensionMismatch(format!(
            "{} xs vs {} ys",
            xs.len(),
            ys.len()
        )));
    }
    if xs.len() < 3 {
        return Err(invalid("xs", "need at least 3 points for a slope"));
    }
    if ys.iter().all(|&y| y == 0.0) {
        return Err(Error::DegenerateData(
            "all values are zero; no power law to fit".into(),
        ));
    }
    if xs.iter().any(|&x| x <= 0.0) || ys.iter().any(|&y| y <= 0.0) {
        return Err(invalid("xs/ys", "log-log fit needs positive data"));
    }
    let lx: Vec<f64> = xs.iter().map(|x| x.ln()).collect();
    let ly: Vec<f64> = ys.iter().map(|y| y.ln()).collect();
    let n = lx.len() as f64;
    let mx = lx.iter().sum::<f64>() / n;
    let my = ly.iter().sum::<f64>() / n;
    let sxx: f64 = lx.iter().map(|x| (x - mx) * (x - mx)).sum();
    let sxy: f64 = lx.iter().zip(&ly).map(|(x, y)| (x - mx) * (y - my)).sum();
    let syy: f64 = ly.iter().map(|y| (y - my) * (y - my)).sum();
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let ss_res: f64 = lx
        .iter()
        .zip(&ly)
        .map(|(x, y)| {
            let e = y - (intercept + slope * x);
            e * e
        })
        .sum();
    let r_squared = if syy == 0.0 { 1.0 } else { 1.0 - ss_res / syy };
    let dof = (lx.len() as f64 - 2.0).max(1.0);
    let slope_stderr = (ss_res / dof / sxx).sqrt();
    Ok(RateFitResult {
        slope,
        intercept,
        slope_stderr,
        r_squared,
        per_point: xs.iter().zip(ys).map(|(&x, &y)| (x, y, 0.0)).collect(),
    })
}

/// Plain linear fit `y = a + b x`, for the log-N growth checks.
pub fn fit_linear(xs: &[f64], ys: &[f64]) -> Result<RateFitResult> {
    if xs.len() < 3 {
        return Err(invalid("xs", "need at least 3 points"));
    }
    let n = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let sxx: f64 = xs.iter().map(|x| (x - mx) * (x - mx)).sum();
    let sxy: f64 = xs.iter().zip(ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let syy: f64 = ys.iter().map(|y| (y - my) * (y - my)).sum();
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let ss_res: f64 = xs
        .iter()
        .zip(ys)
        .map(|(x, y)| {
            let e = y - (intercept + slope * x);
            e * e
        })
        .sum();
    let r_squared = if syy == 0.0 { 1.0 } else { 1.0 - ss_res / syy };
    let dof = (xs.len() as f64 - 2.0).max(1.0);
    Ok(RateFitResult {
        slope,
        intercept,
        slope_stderr: (ss_res / dof / sxx).sqrt(),
        r_squared,
        per_point: xs.iter().zip(ys).map(|(&x, &y)| (x, y, 0.0)).collect(),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SweepKind {
    Consistency,
    EllConsistency,
    Coupling,
    KernelNorms,
    K1L1,
    CollisionCount,
    Wasserstein,
}

impl SweepKind {
    pub fn name(self) -> &'static str {
        match self {
            SweepKind::Consistency => "consistency",
            SweepKind::EllConsistency => "ell_consistency",
            SweepKind::Coupling => "coupling",
            SweepKind::KernelNorms => "kernel_norms",
            SweepKind::K1L1 => "k1_l1",
            SweepKind::CollisionCount => "collision_count",
            SweepKind::Wasserstein => "wasserstein",
        }
    }
}

/// Everything a sweep needs: the particle counts, replication count, seed,
/// and the parameter blocks shared with single runs.
#[derive(Debug, Clone)]
pub struct SweepConfig {
    pub kind: SweepKind,
    pub n_values: Vec<usize>,
    pub replications: usize,
    pub base_seed: u64,
    pub strength: f64,
    pub cutoff_exponent: f64,
    pub wide_cutoff_exponent: f64,
    pub density: DensityModel<f64>,
    pub velocity: VelocityModel<f64>,
    pub sim: SimParams<f64>,
    /// Reference ensemble size as a multiple of N (coupling sweeps).
    pub reference_factor: usize,
    /// Wasserstein cost power.
    pub cost_power: f64,
}

impl SweepConfig {
    pub fn validate(&self) -> Result<()> {
        if self.n_values.len() < 3 {
            return Err(invalid("n_values", "need at least 3 points for a slope"));
        }
        if !self.n_values.windows(2).all(|w| w[0] < w[1]) {
            return Err(invalid("n_values", "must be strictly increasing"));
        }
        if self.replications == 0 {
            return Err(invalid("replications", "must be positive"));
        }
        Ok(())
    }

    fn kernel_for(&self, n: usize) -> Result<KernelConfig<f64>> {
        KernelConfig::new(
            self.strength,
            n,
            self.cutoff_exponent,
            self.wide_cutoff_exponent,
        )
    }
}

/// One measured value inside a sweep, ready for CSV serialization.
#[derive(Debug, Clone)]
pub struct SweepRow {
    pub kind: &'static str,
    pub n: usize,
    pub seed: u64,
    pub value: f64,
    pub stderr: f64,
}

/// Result of a sweep: raw rows, the fit, and context flags.
#[derive(Debug, Clone)]
pub struct SweepOutcome {
    pub fit: RateFitResult,
    pub rows: Vec<SweepRow>,
    /// True when values were divided by log(N) before fitting.
    pub divided_by_log: bool,
    /// Monotone-nonincreasing verdict on the per-N medians.
    pub monotone_decreasing: bool,
}

fn median(values: &mut [f64]) -> f64 {
    values.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let n = values.len();
    if n % 2 == 1 {
        values[n / 2]
    } else {
        0.5 * (values[n / 2 - 1] + values[n / 2])
    }
}

fn spread(values: &mut [f64]) -> f64 {
    values.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let n = values.len();
    if n < 4 {
        return values[n - 1] - values[0];
    }
    values[(3 * n) / 4] - values[n / 4]
}

/// Shared replication driver: runs `per_rep` for every (N, replication) on
/// its own stream, aggregates medians deterministically.
fn replicated_sweep<F>(cfg: &SweepConfig, per_rep: F) -> Result<Vec<(usize, Vec<f64>)>>
where
    F: Fn(usize, usize, u64) -> Result<f64> + Sync,
{
    cfg.validate()?;
    let mut jobs = Vec::new();
    for (ni, &n) in cfg.n_values.iter().enumerate() {
        for rep in 0..cfg.replications {
            jobs.push((ni, n, rep));
        }
    }
    let results: Result<Vec<((usize, usize), f64)>> = jobs
        .par_iter()
        .map(|&(ni, n, rep)| {
            let substream = ((ni as u64) << 32) | rep as u64;
            let v = per_rep(n, rep, substream)?;
            Ok(((ni, rep), v))
        })
        .collect();
    let mut results = results?;
    results.sort_by_key(|&((ni, rep), _)| (ni, rep));
    let mut grouped: Vec<(usize, Vec<f64>)> =
        cfg.n_values.iter().map(|&n| (n, Vec::new())).collect();
    for ((ni, _), v) in results {
        grouped[ni].1.push(v);
    }
    Ok(grouped)
}

fn outcome_from_groups(
    cfg: &SweepConfig,
    grouped: Vec<(usize, Vec<f64>)>,
    divide_by_log: bool,
) -> Result<SweepOutcome> {
    let mut rows = Vec::new();
    let mut xs = Vec::new();
    let mut ys = Vec::new();
    let mut per_point = Vec::new();
    for (n, mut vals) in grouped {
        for (rep, &v) in vals.iter().enumerate() {
            rows.push(SweepRow {
                kind: cfg.kind.name(),
                n,
                seed: cfg.base_seed.wrapping_add(rep as u64),
                value: v,
                stderr: 0.0,
            });
        }
        let med = median(&mut vals);
        let sp = spread(&mut vals);
        let denom = if divide_by_log { (n as f64).ln() } else { 1.0 };
        xs.push(n as f64);
        ys.push(med / denom);
        per_point.push((n as f64, med / denom, sp / denom));
    }
    if ys.iter().all(|&y| y == 0.0) {
        return Err(Error::DegenerateData(format!(
            "{} sweep produced all-zero medians",
            cfg.kind.name()
        )));
    }
    let monotone = ys.windows(2).all(|w| w[1] <= w[0]);
    let mut fit = fit_power_law(&xs, &ys)?;
    fit.per_point = per_point;
    Ok(SweepOutcome {
        fit,
        rows,
        divided_by_log: divide_by_log,
        monotone_decreasing: monotone,
    })
}

/// Law-of-large-numbers consistency: median over replications of the
/// pairwise-force-vs-exact-field residual, divided by log N, fitted against
/// N. Expected exponent `2 delta - 1`.
pub fn run_consistency_sweep(cfg: &SweepConfig) -> Result<SweepOutcome> {
    let profile = PolynomialBump;
    let grouped = replicated_sweep(cfg, |n, _rep, substream| {
        let kernel = cfg.kernel_for(n)?;
        dynamics::consistency_residual(
            &kernel,
            &profile,
            &cfg.density,
            &cfg.velocity,
            n,
            cfg.base_seed,
            substream,
        )
    })?;
    outcome_from_groups(cfg, grouped, true)
}

/// Same for the majorant sums `L^N` against `ell_N * rho`; expected
/// exponent `3 delta - 1`.
pub fn run_ell_consistency_sweep(cfg: &SweepConfig) -> Result<SweepOutcome> {
    let profile = PolynomialBump;
    let grouped = replicated_sweep(cfg, |n, _rep, substream| {
        let kernel = cfg.kernel_for(n)?;
        dynamics::ell_consistency_residual(
            &kernel,
            &profile,
            &cfg.density,
            &cfg.velocity,
            n,
            cfg.base_seed,
            substream,
        )
    })?;
    outcome_from_groups(cfg, grouped, true)
}

/// Coupled-trajectory sweep: median over seeds of the maximal weighted
/// distance between the interacting and mean-field ensembles.
pub fn run_coupling_sweep(cfg: &SweepConfig) -> Result<SweepOutcome> {
    let profile = PolynomialBump;
    let grouped = replicated_sweep(cfg, |n, _rep, substream| {
        let kernel = cfg.kernel_for(n)?;
        let mut params = cfg.sim;
        params.seed = cfg.base_seed ^ (substream.wrapping_mul(0x9e37_79b9_7f4a_7c15) | 1);
        let initial = crate::fields::sample_initial_phase(
            &cfg.density,
            &cfg.velocity,
            n,
            params.seed,
            0,
        )?;
        let record = dynamics::run_coupled(
            &kernel,
            &profile,
            &cfg.density,
            &cfg.velocity,
            initial,
            cfg.reference_factor * n,
            &params,
            10,
            None,
        )?;
        Ok(record.max_distance())
    })?;
    outcome_from_groups(cfg, grouped, false)
}

/// Kernel norm scalings: fits of `||k_N||_2` (expected `delta/2`) and
/// `sup |grad k_N|` (expected `3 delta`) against N.
pub fn run_kernel_norm_sweep(cfg: &SweepConfig) -> Result<(RateFitResult, RateFitResult)> {
    cfg.validate()?;
    let profile = PolynomialBump;
    let xs: Vec<f64> = cfg.n_values.iter().map(|&n| n as f64).collect();
    let l2: Result<Vec<f64>> = cfg
        .n_values
        .par_iter()
        .map(|&n| Ok(crate::kernels::kernel_l2_norm(&cfg.kernel_for(n)?, &profile)?.value))
        .collect();
    let grads: Result<Vec<f64>> = cfg
        .n_values
        .par_iter()
        .map(|&n| Ok(crate::kernels::sup_gradient_norm(&cfg.kernel_for(n)?, &profile)))
        .collect();
    Ok((fit_power_law(&xs, &l2?)?, fit_power_law(&xs, &grads?)?))
}

/// L1 norm of the short-range splitting part; expected exponent `-lambda2`.
pub fn run_k1_sweep(cfg: &SweepConfig) -> Result<RateFitResult> {
    cfg.validate()?;
    if cfg.cutoff_exponent == cfg.wide_cutoff_exponent {
        return Err(Error::DegenerateData(
            "delta = lambda2 makes k1 vanish identically".into(),
        ));
    }
    let profile = PolynomialBump;
    let xs: Vec<f64> = cfg.n_values.iter().map(|&n| n as f64).collect();
    let ys: Result<Vec<f64>> = cfg
        .n_values
        .par_iter()
        .map(|&n| Ok(crate::kernels::k1_l1_norm(&cfg.kernel_for(n)?, &profile)?.value))
        .collect();
    fit_power_law(&xs, &ys?)
}

/// Wasserstein decay of empirical measures: per N, the distance between the
/// phase-space cloud and an equal-size reference draw, in median over seeds.
#[derive(Debug, Clone)]
pub struct WassersteinOutcome {
    pub rows: Vec<measures::DistanceRow>,
    pub medians: Vec<(usize, f64)>,
    pub monotone_decreasing: bool,
}

pub fn run_wasserstein_sweep(cfg: &SweepConfig) -> Result<WassersteinOutcome> {
    cfg.validate()?;
    let mut jobs = Vec::new();
    for (ni, &n) in cfg.n_values.iter().enumerate() {
        for rep in 0..cfg.replications {
            jobs.push((ni, n, rep));
        }
    }
    let results: Result<Vec<((usize, usize), measures::DistanceRow)>> = jobs
        .par_iter()
        .map(|&(ni, n, rep)| {
            let substream = ((ni as u64) << 32) | rep as u64;
            let state = crate::fields::sample_initial_phase(
                &cfg.density,
                &cfg.velocity,
                n,
                cfg.base_seed,
                substream,
            )?;
            let mu = measures::from_phase(&state, Projection::Phase);
            let sampler = |count: usize| -> Result<measures::EmpiricalMeasure<f64>> {
                let reference = crate::fields::sample_initial_phase(
                    &cfg.density,
                    &cfg.velocity,
                    count,
                    cfg.base_seed ^ 0x5151_5151,
                    substream,
                )?;
                Ok(measures::from_phase(&reference, Projection::Phase))
            };
            let mut proj_stream =
                CounterStream::new(cfg.base_seed, tag::PROJECTION | substream);
            let est =
                measures::wasserstein_to_reference(&mu, sampler, cfg.cost_power, &mut proj_stream)?;
            if est.value == 0.0 {
                return Err(Error::DegenerateData(
                    "reference draw coincides with the state".into(),
                ));
            }
            Ok((
                (ni, rep),
                measures::DistanceRow {
                    n,
                    seed: cfg.base_seed.wrapping_add(rep as u64),
                    t: cfg.sim.horizon,
                    p: cfg.cost_power,
                    method: est.method,
                    value: est.value,
                    stderr: est.stderr.unwrap_or(0.0),
                },
            ))
        })
        .collect();
    let mut results = results?;
    results.sort_by_key(|&((ni, rep), _)| (ni, rep));
    let mut medians = Vec::new();
    for (ni, &n) in cfg.n_values.iter().enumerate() {
        let mut vals: Vec<f64> = results
            .iter()
            .filter(|((i, _), _)| *i == ni)
            .map(|(_, row)| row.value)
            .collect();
        medians.push((n, median(&mut vals)));
    }
    let monotone = medians.windows(2).all(|w| w[1].1 <= w[0].1);
    Ok(WassersteinOutcome {
        rows: results.into_iter().map(|(_, row)| row).collect(),
        medians,
        monotone_decreasing: monotone,
    })
}

/// Collision-candidate counts against the binomial-tail bound
/// `2 C* N (3 N^{-lambda2} + log N dt^{3/2})^2`.
#[derive(Debug, Clone)]
pub struct CollisionOutcome {
    pub c_star: f64,
    pub per_n: Vec<(usize, f64, f64)>, // (N, bound, exceedance frequency)
}

pub fn run_collision_count_sweep(cfg: &SweepConfig, lambda1: f64) -> Result<CollisionOutcome> {
    cfg.validate()?;
    let c_star = stats::c_star(&cfg.density)?;
    let per_n: Result<Vec<(usize, f64, f64)>> = cfg
        .n_values
        .par_iter()
        .map(|&n| {
            let dt_block = (n as f64).powf(-lambda1);
            let bound = stats::collision_bound(c_star, n, cfg.wide_cutoff_exponent, dt_block);
            let mut exceed = 0usize;
            for draw in 0..cfg.replications {
                let state = crate::fields::sample_initial_phase(
                    &cfg.density,
                    &cfg.velocity,
                    n,
                    cfg.base_seed,
                    (n as u64) << 20 | draw as u64,
                )?;
                let counts = stats::collision_candidate_counts(
                    &state,
                    cfg.wide_cutoff_exponent,
                    dt_block,
                    0.5 * dt_block,
                );
                if counts.iter().any(|&c| (c as f64) >= bound) {
                    exceed += 1;
                }
            }
            Ok((n, bound, exceed as f64 / cfg.replications as f64))
        })
        .collect();
    Ok(CollisionOutcome {
        c_star,
        per_n: per_n?,
    })
}
