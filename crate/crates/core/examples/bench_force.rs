use std::time::Instant;
use vpfp_core::dynamics::{pairwise_force, ExecMode, PhaseState};
use vpfp_core::fields::{sample_initial_phase, DensityModel, VelocityModel};
use vpfp_core::kernels::{KernelConfig, PolynomialBump};

fn main() {
    let d = DensityModel::IsotropicGaussian { std: 1.0 };
    let v = VelocityModel::TruncatedGaussian { std: 1.0, cutoff: 4.0 };
    for n in [2560usize, 5120, 20480] {
        let c = KernelConfig::new(1.0, n, 0.34, 0.30).unwrap();
        let state: PhaseState<f64> = sample_initial_phase(&d, &v, n, 7, 0).unwrap();
        let start = Instant::now();
        let reps = if n > 10000 { 5 } else { 40 };
        for _ in 0..reps {
            let f = pairwise_force(&c, &PolynomialBump, &state, ExecMode::Deterministic);
            std::hint::black_box(&f);
        }
        let dt = start.elapsed().as_secs_f64() / reps as f64;
        let per_pair = dt / (n as f64 * n as f64);
        println!("N = {n}: {dt:.3} s/eval, {:.2} ns/pair", per_pair * 1e9);
    }
}
