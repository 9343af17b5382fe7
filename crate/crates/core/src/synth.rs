//! Seeded synthetic data for benchmarks and demos.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

/// `n` unit vectors (row-major) scattered around `clusters` random unit
/// centres: each coordinate of the centre gets N(0, spread²) noise, then the
/// point is renormalised.
pub fn clustered_vectors(n: usize, dim: usize, clusters: usize, spread: f64, seed: u64) -> Vec<f32> {
    assert!(clusters > 0 && dim > 0, "need at least one cluster and dimension");
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let centres: Vec<Vec<f64>> = (0..clusters)
        .map(|_| unit((0..dim).map(|_| StandardNormal.sample(&mut rng)).collect()))
        .collect();
    let mut out = Vec::with_capacity(n * dim);
    for _ in 0..n {
        let c = &centres[rng.gen_range(0..clusters)];
        let noisy = c
            .iter()
            .map(|&x| {
                let z: f64 = StandardNormal.sample(&mut rng);
                x + spread * z
            })
            .collect();
        out.extend(unit(noisy).into_iter().map(|x| x as f32));
    }
    out
}

fn unit(v: Vec<f64>) -> Vec<f64> {
    let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
    if norm == 0.0 {
        return v;
    }
    v.into_iter().map(|x| x / norm).collect()
}
