//! Sampling-rate trends of the empirical-measure distances: medians of
//! W_2 between independent equal-size draws decrease with the cloud size,
//! and W_1 never exceeds W_2 on the same pair of clouds.

use vpfp_core::fields::{sample_initial_phase, DensityModel, VelocityModel};
use vpfp_core::measures::{self, Projection};
use vpfp_core::rng::CounterStream;

fn median(mut v: Vec<f64>) -> f64 {
    v.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    }
}

#[test]
fn to_reference_distance_decreases_with_cloud_size() {
    let density = DensityModel::IsotropicGaussian { std: 1.0 };
    let velocity = VelocityModel::TruncatedGaussian {
        std: 1.0,
        cutoff: 4.0,
    };
    let mut medians = Vec::new();
    let mut w1_le_w2_everywhere = true;
    for (ni, &n) in [128usize, 512, 2048].iter().enumerate() {
        let mut values = Vec::new();
        for seed in 0..10u64 {
            let substream = ((ni as u64) << 32) | seed;
            let state = sample_initial_phase(&density, &velocity, n, 40 + seed, substream).unwrap();
            let mu = measures::from_phase(&state, Projection::Phase);
            let sampler = |count: usize| {
                let reference =
                    sample_initial_phase(&density, &velocity, count, 4000 + seed, substream)
                        .unwrap();
                Ok(measures::from_phase(&reference, Projection::Phase))
            };
            let mut stream = CounterStream::new(seed, 0);
            let est = measures::wasserstein_to_reference(&mu, sampler, 2.0, &mut stream).unwrap();
            assert!(est.value > 0.0, "independent draws cannot coincide");
            values.push(est.value);
            if n <= 512 {
                // W_1 <= W_2 pointwise on the same pair of clouds
                let reference =
                    sample_initial_phase(&density, &velocity, n, 4000 + seed, substream).unwrap();
                let nu = measures::from_phase(&reference, Projection::Phase);
                let w1 = measures::wasserstein_exact(&mu, &nu, 1.0).unwrap();
                w1_le_w2_everywhere &= w1 <= est.value + 1e-12;
            }
        }
        medians.push(median(values));
    }
    assert!(
        medians.windows(2).all(|w| w[1] < w[0]),
        "medians should decrease: {medians:?}"
    );
    assert!(w1_le_w2_everywhere);
}
