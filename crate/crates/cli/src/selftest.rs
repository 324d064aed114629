//! The `selftest` subcommand: a compact battery over the analytic oracles
//! and kernel invariants, one PASS/FAIL line each.

use vpfp_core::dynamics::{self, ExecMode, PhaseState};
use vpfp_core::fields::{self, DensityModel, VelocityModel};
use vpfp_core::kernels::{self, BlobProfile, KernelConfig, PolynomialBump};
use vpfp_core::measures::{self, EmpiricalMeasure};
use vpfp_core::quadrature;
use vpfp_core::rng::{CounterStream, NoiseSource};
use vpfp_core::stats::{self, GreenEval};
use vpfp_core::vec3;

struct Battery {
    failures: usize,
}

impl Battery {
    fn check(&mut self, name: &str, ok: bool, detail: String) {
        if ok {
            println!("PASS {name} ({detail})");
        } else {
            println!("FAIL {name} ({detail})");
            self.failures += 1;
        }
    }
}

pub fn run() -> anyhow::Result<i32> {
    let mut b = Battery { failures: 0 };
    let profile = PolynomialBump;
    let config = KernelConfig::new(1.0, 1024, 1.0 / 3.0, 0.3)?;
    let gaussian = DensityModel::IsotropicGaussian { std: 1.0 };
    let velocity = VelocityModel::TruncatedGaussian {
        std: 1.0,
        cutoff: 4.0,
    };

    // blob normalization
    let mass = quadrature::integrate(
        |radius: f64| 4.0 * std::f64::consts::PI * radius * radius * profile.density(radius),
        0.0,
        1.0,
        1e-12,
    )?
    .value;
    b.check("blob-unit-mass", (mass - 1.0).abs() < 1e-8, format!("mass {mass:.12}"));

    let scaled_mass = quadrature::integrate(
        |radius: f64| {
            4.0 * std::f64::consts::PI
                * radius
                * radius
                * kernels::scaled_blob(&profile, 1.0 / 3.0, 1024, [radius, 0.0, 0.0])
        },
        0.0,
        (1024f64).powf(-1.0 / 3.0),
        1e-12,
    )?
    .value;
    b.check(
        "scaled-blob-unit-mass",
        (scaled_mass - 1.0).abs() < 1e-8,
        format!("mass {scaled_mass:.12}"),
    );

    // kernel invariants: exactness outside, domination, antisymmetry
    let w = config.cutoff_len();
    let mut stream = CounterStream::new(7, 0);
    let mut worst_outside = 0.0f64;
    let mut dominated = true;
    let mut odd = true;
    for _ in 0..200 {
        let dir = stream.unit_vector::<f64>();
        let inside = vec3::scale(dir, stream.uniform::<f64>() * w);
        let outside = vec3::scale(dir, w * (1.0 + 2.0 * stream.uniform::<f64>()));
        let kn_out = kernels::regularized_kernel(&config, &profile, outside);
        let k_out = kernels::coulomb(&config, outside)?;
        worst_outside = worst_outside
            .max(vec3::norm(vec3::sub(kn_out, k_out)) / vec3::norm(k_out));
        if vec3::norm(inside) > 0.0 {
            let kn = vec3::norm(kernels::regularized_kernel(&config, &profile, inside));
            let k = vec3::norm(kernels::coulomb(&config, inside)?);
            dominated &= kn <= k * (1.0 + 1e-14);
        }
        let plus = kernels::regularized_kernel(&config, &profile, inside);
        let minus = kernels::regularized_kernel(&config, &profile, vec3::scale(inside, -1.0));
        odd &= (0..3).all(|i| plus[i] == -minus[i]);
    }
    b.check(
        "kernel-exact-outside-cutoff",
        worst_outside <= 1e-12,
        format!("max rel dev {worst_outside:.2e}"),
    );
    b.check("kernel-dominated-by-coulomb", dominated, "200 interior samples".into());
    b.check("kernel-odd-symmetry", odd, "200 samples".into());
    b.check(
        "kernel-zero-at-origin",
        kernels::regularized_kernel(&config, &profile, [0.0; 3]) == [0.0; 3],
        "k_N(0)".into(),
    );

    // ell branch continuity
    let at_break = kernels::ell(&config, [6.0 * w, 0.0, 0.0]);
    let plateau = config.scales().plateau;
    b.check(
        "ell-branch-continuity",
        (at_break - plateau).abs() / plateau < 1e-12,
        format!("6^3/(6w)^3 = {at_break:.6e} vs N^(3 delta) = {plateau:.6e}"),
    );

    // exterior mean field of the uniform ball is exactly Coulomb
    let ball = DensityModel::UniformBall { radius: 1.0 };
    let x = [0.0, 1.0 + w + 0.05, 0.0];
    let field = fields::meanfield_force_exact(&config, &profile, &ball, x)?;
    let expect = x[1].powi(-2);
    b.check(
        "meanfield-exterior-shell",
        (field.value[1] - expect).abs() < 1e-12,
        format!("{:.12} vs {expect:.12}", field.value[1]),
    );

    // Green kernel mass and moments
    for t in [0.1, 1.0] {
        let g = GreenEval::<f64>::new(t)?;
        let mass = g.mass_by_quadrature();
        b.check(
            &format!("green-unit-mass-t{t}"),
            (mass - 1.0).abs() < 1e-6,
            format!("mass {mass:.9}"),
        );
    }
    let g = GreenEval::<f64>::new(0.5)?;
    let (qv, qc, qx) = g.moments_by_quadrature();
    let (vv, cxv, vx) = stats::free_kinetic_moments(1.0, 0.5);
    b.check(
        "green-moments-match-sde-moments",
        (qv - vv).abs() < 1e-5 && (qc - cxv).abs() < 1e-5 && (qx - vx).abs() < 1e-5,
        format!("({qv:.6}, {qc:.6}, {qx:.6}) vs ({vv}, {cxv}, {vx:.6})"),
    );

    // Brownian running-max oracle
    let edge_zero = stats::brownian_max_tail(1.0, 0.0, 5_000, 50, 3)?;
    let edge_far = stats::brownian_max_tail(1.0, 50.0, 5_000, 50, 4)?;
    b.check(
        "brownian-max-edge-cases",
        edge_zero.empirical_bridge == 1.0 && edge_far.empirical_bridge == 0.0,
        format!("b=0: {}, b>>1: {}", edge_zero.empirical_bridge, edge_far.empirical_bridge),
    );
    let tail = stats::brownian_max_tail(1.0, 1.0, 40_000, 200, 5)?;
    b.check(
        "brownian-max-reflection",
        (tail.empirical_bridge - tail.analytic).abs() <= 3.0 * tail.stderr,
        format!("{:.4} vs {:.4} (se {:.4})", tail.empirical_bridge, tail.analytic, tail.stderr),
    );

    // concentration inequality
    let freq = stats::concentration_check(
        |s| if s.uniform::<f64>() < 0.5 { -1.0 } else { 1.0 },
        1.0,
        10_000,
        5.0,
        2_000,
        11,
    );
    b.check("concentration-rademacher", freq == 0.0, format!("exceedance {freq}"));

    // Wasserstein exactness spot check against brute force
    let mut ws_ok = true;
    let mut stream = CounterStream::new(23, 0);
    for _ in 0..20 {
        let n = 2 + (stream.next_u64() % 4) as usize;
        let mu = EmpiricalMeasure::new(3, (0..3 * n).map(|_| stream.normal()).collect())?;
        let nu = EmpiricalMeasure::new(3, (0..3 * n).map(|_| stream.normal()).collect())?;
        let exact = measures::wasserstein_exact(&mu, &nu, 2.0)?;
        let brute = brute_force(&mu, &nu, 2.0);
        ws_ok &= (exact - brute).abs() <= 1e-12 * brute.max(1.0);
    }
    b.check("wasserstein-brute-force", ws_ok, "20 instances".into());

    // noise determinism
    let n1 = NoiseSource::new(9, 0, 0.01);
    let a: vec3::Vector3<f64> = n1.increment(5, 100);
    let same: vec3::Vector3<f64> = NoiseSource::new(9, 0, 0.01).increment(5, 100);
    b.check("noise-keyed-determinism", a == same, format!("{a:?}"));

    // pairwise force antisymmetry on a random cloud
    let positions: Vec<[f64; 3]> = (0..64).map(|_| stream.normal3()).collect();
    let state = PhaseState::new(positions, vec![[0.0; 3]; 64])?;
    let forces = dynamics::pairwise_force(&config, &profile, &state, ExecMode::Deterministic);
    let mut total = [0.0f64; 3];
    for f in &forces {
        for d in 0..3 {
            total[d] += f[d];
        }
    }
    let scale: f64 = forces.iter().map(|f| vec3::norm(*f)).fold(0.0, f64::max);
    b.check(
        "pairwise-force-antisymmetry",
        vec3::norm(total) <= 1e-12 * scale.max(1.0) * 64.0,
        format!("net force {:.2e}", vec3::norm(total)),
    );

    // velocity truncation
    let mut vstream = CounterStream::new(31, 0);
    let samples = velocity.sample(&mut vstream, 20_000);
    b.check(
        "velocity-compact-support",
        samples.iter().all(|v| vec3::norm(*v) <= 4.0),
        "20000 samples".into(),
    );

    // collision counts on degenerate configurations
    let coincident = PhaseState::new(vec![[0.0; 3]; 8], vec![[0.0; 3]; 8])?;
    let counts = stats::collision_candidate_counts(&coincident, 0.3, 1e-3, 5e-4);
    b.check(
        "collision-count-coincident",
        counts.iter().all(|&c| c == 7),
        format!("{counts:?}"),
    );

    let _ = gaussian;
    if b.failures == 0 {
        println!("SELFTEST ok: all checks passed");
        Ok(0)
    } else {
        println!("SELFTEST FAILED: {} check(s)", b.failures);
        Ok(1)
    }
}

fn brute_force(mu: &EmpiricalMeasure<f64>, nu: &EmpiricalMeasure<f64>, p: f64) -> f64 {
    fn permute(idx: &mut Vec<usize>, k: usize, visit: &mut impl FnMut(&[usize])) {
        if k == idx.len() {
            visit(idx);
            return;
        }
        for i in k..idx.len() {
            idx.swap(k, i);
            permute(idx, k + 1, visit);
            idx.swap(k, i);
        }
    }
    let n = mu.len();
    let mut idx: Vec<usize> = (0..n).collect();
    let mut best = f64::INFINITY;
    permute(&mut idx, 0, &mut |perm| {
        let cost: f64 = perm
            .iter()
            .enumerate()
            .map(|(i, &j)| {
                let d: f64 = mu
                    .point(i)
                    .iter()
                    .zip(nu.point(j))
                    .map(|(a, b)| (a - b) * (a - b))
                    .sum();
                d.sqrt().powf(p)
            })
            .sum();
        best = best.min(cost);
    });
    (best / n as f64).powf(1.0 / p)
}
