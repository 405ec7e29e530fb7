// Rough throughput probe for the particle-step hot path.
use pullback_sim::rng::{normal_from_u64, NoiseStreamKey, StreamRole};
use std::time::Instant;

fn main() {
    let n_particles: usize = 100_000;
    let n_steps: i64 = 2_000; // multiple of 4
    let dt: f64 = 1e-3;
    let sq = dt.sqrt();
    let mut positions = vec![0.5f64; n_particles];
    let common = vec![[1e-3f64; 4]; (n_steps / 4) as usize];
    let t0 = Instant::now();
    // step-group outer, particle inner: one Philox block serves 4 steps
    for (g, db) in common.iter().enumerate() {
        for (i, x) in positions.iter_mut().enumerate() {
            let w = NoiseStreamKey::new(99, StreamRole::Intrinsic, i as u64, g as i64).words();
            let mut xi = *x;
            for lane in 0..4 {
                let z = normal_from_u64(w[lane]);
                let drift = xi * xi * xi - xi;
                xi += -drift * dt + sq * z + 0.5 * db[lane];
            }
            *x = xi;
        }
    }
    let el = t0.elapsed().as_secs_f64();
    let total = n_particles as f64 * n_steps as f64;
    println!(
        "sum={:.6e}  {:.1} ns/particle-step single-thread",
        positions.iter().sum::<f64>(),
        el / total * 1e9
    );
}
