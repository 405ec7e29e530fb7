// Scaling probe for the composed-vs-direct solver gap.
use pullback_sim::density::{GridDensity, GridSpec};
use pullback_sim::fokker_planck::{cocycle_check, FpGrid, FpScheme};
use pullback_sim::noise::BrownianPath;
use pullback_sim::potentials::Potential;
use pullback_sim::sde::SdeSpec;
use std::time::Instant;

fn main() {
    let spec = SdeSpec::scalar(Potential::quadratic(1.0).unwrap(), 1.0, 0.5).unwrap();
    for seed in [77u64, 101, 202] {
        let beta = BrownianPath::sample(seed, 1, 0.0, 1.0, 1e-4).unwrap();
        for (cells, dt) in [(4096usize, 2e-4), (8192, 1e-4)] {
            let space = GridSpec::new(-5.0, 5.0, cells).unwrap();
            let grid = FpGrid { space, dt, scheme: FpScheme::ChangCooper };
            let q0 = GridDensity::gaussian(space, 0.0, 0.2).unwrap();
            let t0 = Instant::now();
            let gap = cocycle_check(&spec, &beta, &q0, 0.5, 1.0, &grid).unwrap();
            println!("seed={seed} cells={cells:6} dt={dt:.1e}  gap={gap:.3e}  ({:.1}s)", t0.elapsed().as_secs_f64());
        }
    }
}
