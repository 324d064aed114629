//! Run configuration: TOML schema with documented defaults, validation
//! with key paths, and the flags > environment > file precedence.

use std::path::PathBuf;

use anyhow::{bail, Context};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use vpfp_core::dynamics::SimParams;
use vpfp_core::experiments::{SweepConfig, SweepKind};
use vpfp_core::fields::{DensityModel, VelocityModel};
use vpfp_core::kernels::KernelConfig;

pub const SEED_ENV: &str = "VPFP_SEED";
pub const THREADS_ENV: &str = "VPFP_THREADS";

fn default_strength() -> f64 {
    1.0
}
fn default_n() -> usize {
    1024
}
fn default_delta() -> f64 {
    1.0 / 3.0
}
fn default_lambda2() -> f64 {
    0.30
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct KernelSection {
    pub strength: f64,
    pub n_particles: usize,
    /// Cut-off exponent delta; theorem window [1/3, 1).
    pub delta: f64,
    /// Wide cut-off exponent lambda2; theorem window (0, 1/3).
    pub lambda2: f64,
}

impl Default for KernelSection {
    fn default() -> Self {
        Self {
            strength: default_strength(),
            n_particles: default_n(),
            delta: default_delta(),
            lambda2: default_lambda2(),
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DensitySection {
    /// "isotropic-gaussian" or "uniform-ball".
    pub kind: String,
    pub std: f64,
    pub radius: f64,
}

impl Default for DensitySection {
    fn default() -> Self {
        Self {
            kind: "isotropic-gaussian".into(),
            std: 1.0,
            radius: 1.0,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct VelocitySection {
    /// "truncated-gaussian" or "uniform-ball".
    pub kind: String,
    pub std: f64,
    /// Velocity support cut-off Q_v; zero means 4 standard deviations.
    pub cutoff: f64,
}

impl Default for VelocitySection {
    fn default() -> Self {
        Self {
            kind: "truncated-gaussian".into(),
            std: 1.0,
            cutoff: 0.0,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SimSection {
    pub sigma: f64,
    pub horizon: f64,
    /// Zero means the default 1e-3 * horizon.
    pub dt: f64,
    pub seed: u64,
    /// Reference ensemble size as a multiple of N.
    pub reference_factor: usize,
    pub record_every: u64,
    pub semi_implicit: bool,
}

impl Default for SimSection {
    fn default() -> Self {
        Self {
            sigma: 0.5,
            horizon: 0.5,
            dt: 0.0,
            seed: 42,
            reference_factor: 10,
            record_every: 10,
            semi_implicit: false,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SweepSection {
    /// consistency | ell-consistency | coupling | kernel-norms | k1-l1 |
    /// collision-count | wasserstein
    pub kind: String,
    pub n_values: Vec<usize>,
    pub replications: usize,
    /// Zero means sim.seed.
    pub base_seed: u64,
    /// Time-block exponent for the collision sweep (dt_block = N^-lambda1).
    pub lambda1: f64,
    /// Wasserstein cost power.
    pub p: f64,
}

impl Default for SweepSection {
    fn default() -> Self {
        Self {
            kind: "consistency".into(),
            n_values: vec![1000, 2000, 4000, 8000, 16000],
            replications: 20,
            base_seed: 0,
            lambda1: 0.09,
            p: 2.0,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct OutputSection {
    pub dir: PathBuf,
    /// Zero means all available cores.
    pub threads: usize,
    pub deterministic: bool,
}

impl Default for OutputSection {
    fn default() -> Self {
        Self {
            dir: PathBuf::from("out"),
            threads: 0,
            deterministic: true,
        }
    }
}

/// The full configuration document; every section and key is optional and
/// falls back to the documented default.
#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunConfig {
    pub kernel: KernelSection,
    pub density: DensitySection,
    pub velocity: VelocitySection,
    pub sim: SimSection,
    pub sweep: SweepSection,
    pub output: OutputSection,
}

impl RunConfig {
    /// Parse a TOML document; syntax errors carry line/column from the
    /// parser, unknown keys are rejected.
    pub fn parse(text: &str) -> anyhow::Result<Self> {
        let cfg: RunConfig = toml::from_str(text).context("config parse error")?;
        Ok(cfg)
    }

    /// Apply defaults that depend on other keys, then environment
    /// variables, then command-line overrides (flags win).
    pub fn resolve(
        mut self,
        seed_flag: Option<u64>,
        threads_flag: Option<usize>,
        output_flag: Option<PathBuf>,
    ) -> anyhow::Result<Self> {
        if self.sim.dt == 0.0 {
            self.sim.dt = 1e-3 * self.sim.horizon;
        }
        if self.velocity.cutoff == 0.0 {
            self.velocity.cutoff = 4.0 * self.velocity.std;
        }
        if self.sweep.base_seed == 0 {
            self.sweep.base_seed = self.sim.seed;
        }
        if let Ok(v) = std::env::var(SEED_ENV) {
            let seed: u64 = v
                .parse()
                .with_context(|| format!("{SEED_ENV} must be an integer, got {v:?}"))?;
            self.sim.seed = seed;
            self.sweep.base_seed = seed;
        }
        if let Ok(v) = std::env::var(THREADS_ENV) {
            self.output.threads = v
                .parse()
                .with_context(|| format!("{THREADS_ENV} must be an integer, got {v:?}"))?;
        }
        if let Some(seed) = seed_flag {
            self.sim.seed = seed;
            self.sweep.base_seed = seed;
        }
        if let Some(threads) = threads_flag {
            self.output.threads = threads;
        }
        if let Some(dir) = output_flag {
            self.output.dir = dir;
        }
        Ok(self)
    }

    /// Structural validation plus the theorem parameter window. Window
    /// violations are errors unless `allow_out_of_range` downgrades them to
    /// warnings (returned for printing).
    pub fn validate(&self, allow_out_of_range: bool) -> anyhow::Result<Vec<String>> {
        let k = &self.kernel;
        if k.n_particles < 2 {
            bail!("kernel.n_particles: need at least 2 particles, got {}", k.n_particles);
        }
        if !(k.delta > 0.0 && k.delta < 1.0) {
            bail!("kernel.delta: must lie in (0, 1), got {}", k.delta);
        }
        if !(k.lambda2 > 0.0 && k.lambda2 < k.delta) {
            bail!(
                "kernel.lambda2: must satisfy 0 < lambda2 < delta, got {} (delta = {})",
                k.lambda2,
                k.delta
            );
        }
        let mut warnings = Vec::new();
        let third = 1.0 / 3.0;
        if k.delta < third {
            let msg = format!(
                "kernel.delta: cutoff_exponent must lie in [1/3, 1) for the convergence theorem, got {}",
                k.delta
            );
            if allow_out_of_range {
                warnings.push(msg);
            } else {
                bail!("{msg} (pass --allow-out-of-theorem-range to run anyway)");
            }
        }
        if k.lambda2 >= third {
            let msg = format!(
                "kernel.lambda2: must lie in (0, 1/3) for the convergence theorem, got {}",
                k.lambda2
            );
            if allow_out_of_range {
                warnings.push(msg);
            } else {
                bail!("{msg} (pass --allow-out-of-theorem-range to run anyway)");
            }
        }
        match self.density.kind.as_str() {
            "isotropic-gaussian" => {
                if self.density.std <= 0.0 {
                    bail!("density.std: must be positive, got {}", self.density.std);
                }
            }
            "uniform-ball" => {
                if self.density.radius <= 0.0 {
                    bail!("density.radius: must be positive, got {}", self.density.radius);
                }
            }
            other => bail!(
                "density.kind: unknown kind {other:?} (expected isotropic-gaussian or uniform-ball)"
            ),
        }
        match self.velocity.kind.as_str() {
            "truncated-gaussian" | "uniform-ball" => {}
            other => bail!(
                "velocity.kind: unknown kind {other:?} (expected truncated-gaussian or uniform-ball)"
            ),
        }
        if self.sim.sigma < 0.0 {
            bail!("sim.sigma: must be nonnegative, got {}", self.sim.sigma);
        }
        if self.sim.dt <= 0.0 || self.sim.dt > self.sim.horizon {
            bail!(
                "sim.dt: need 0 < dt <= horizon, got dt = {} horizon = {}",
                self.sim.dt,
                self.sim.horizon
            );
        }
        if self.sim.reference_factor == 0 {
            bail!("sim.reference_factor: must be positive");
        }
        if self.sweep.replications == 0 {
            bail!("sweep.replications: must be positive");
        }
        if self.sweep.n_values.len() < 3 {
            bail!(
                "sweep.n_values: need at least 3 points for a slope, got {}",
                self.sweep.n_values.len()
            );
        }
        if !self.sweep.n_values.windows(2).all(|w| w[0] < w[1]) {
            bail!("sweep.n_values: must be strictly increasing");
        }
        if self.sweep.p < 1.0 {
            bail!("sweep.p: cost power must be >= 1, got {}", self.sweep.p);
        }
        self.sweep_kind()?;
        Ok(warnings)
    }

    pub fn sweep_kind(&self) -> anyhow::Result<SweepKind> {
        Ok(match self.sweep.kind.as_str() {
            "consistency" => SweepKind::Consistency,
            "ell-consistency" => SweepKind::EllConsistency,
            "coupling" => SweepKind::Coupling,
            "kernel-norms" => SweepKind::KernelNorms,
            "k1-l1" => SweepKind::K1L1,
            "collision-count" => SweepKind::CollisionCount,
            "wasserstein" => SweepKind::Wasserstein,
            other => bail!("sweep.kind: unknown kind {other:?}"),
        })
    }

    pub fn density_model(&self) -> DensityModel<f64> {
        match self.density.kind.as_str() {
            "uniform-ball" => DensityModel::UniformBall {
                radius: self.density.radius,
            },
            _ => DensityModel::IsotropicGaussian {
                std: self.density.std,
            },
        }
    }

    pub fn velocity_model(&self) -> VelocityModel<f64> {
        match self.velocity.kind.as_str() {
            "uniform-ball" => VelocityModel::UniformBall {
                radius: self.velocity.cutoff,
            },
            _ => VelocityModel::TruncatedGaussian {
                std: self.velocity.std,
                cutoff: self.velocity.cutoff,
            },
        }
    }

    pub fn kernel_config(&self) -> anyhow::Result<KernelConfig<f64>> {
        Ok(KernelConfig::new(
            self.kernel.strength,
            self.kernel.n_particles,
            self.kernel.delta,
            self.kernel.lambda2,
        )?)
    }

    pub fn sim_params(&self) -> anyhow::Result<SimParams<f64>> {
        let mut p = SimParams::new(self.sim.sigma, self.sim.horizon, self.sim.dt, self.sim.seed)?;
        p.semi_implicit = self.sim.semi_implicit;
        Ok(p)
    }

    pub fn sweep_config(&self) -> anyhow::Result<SweepConfig> {
        Ok(SweepConfig {
            kind: self.sweep_kind()?,
            n_values: self.sweep.n_values.clone(),
            replications: self.sweep.replications,
            base_seed: self.sweep.base_seed,
            strength: self.kernel.strength,
            cutoff_exponent: self.kernel.delta,
            wide_cutoff_exponent: self.kernel.lambda2,
            density: self.density_model(),
            velocity: self.velocity_model(),
            sim: self.sim_params()?,
            reference_factor: self.sim.reference_factor,
            cost_power: self.sweep.p,
        })
    }

    /// SHA-256 of the canonical serialized resolved config; embedded in
    /// every output header so files identify their provenance.
    pub fn hash(&self) -> String {
        let canon = serde_json::to_string(self).expect("config serializes");
        let mut hasher = Sha256::new();
        hasher.update(canon.as_bytes());
        let digest = hasher.finalize();
        let mut hex = String::with_capacity(64);
        for byte in digest {
            hex.push_str(&format!("{byte:02x}"));
        }
        hex
    }
}
