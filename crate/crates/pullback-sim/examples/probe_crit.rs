// Margin probes for the delicate acceptance thresholds.
use pullback_sim::density::{GridSpec, InitialCondition};
use pullback_sim::fokker_planck::{solve_nonautonomous, FpGrid, FpScheme};
use pullback_sim::noise::BrownianPath;
use pullback_sim::ou;
use pullback_sim::potentials::Potential;
use pullback_sim::sde::{pullback_evolve, SdeSpec};
use std::time::Instant;

fn main() {
    // criterion 7: same realisation, delta at -2 vs +2, tau = 20
    let s2 = std::f64::consts::FRAC_1_SQRT_2;
    let spec = SdeSpec::scalar(Potential::double_well(1.0).unwrap(), s2, s2).unwrap();
    let grid = GridSpec::symmetric(4.0, 1024).unwrap();
    for beta_seed in [1u64, 2, 3, 4, 5] {
        let t0 = Instant::now();
        let beta = BrownianPath::sample(beta_seed, 1, -20.0, 0.0, 1e-3).unwrap();
        let a = pullback_evolve(&InitialCondition::Delta(-2.0), &spec, &beta, 20.0, 1e-3, 100_000, grid, 900).unwrap();
        let b = pullback_evolve(&InitialCondition::Delta(2.0), &spec, &beta, 20.0, 1e-3, 100_000, grid, 900).unwrap();
        println!("c7 seed={beta_seed}: L1 = {:.4}  ({:.0}s)", a.l1_distance(&b).unwrap(), t0.elapsed().as_secs_f64());
    }

    // criterion 2: solver vs transition law, full vs refined
    let params = ou::OuParams::new(1.0, 1.0, 0.5).unwrap();
    let ou_spec = SdeSpec::scalar(Potential::quadratic(1.0).unwrap(), 1.0, 0.5).unwrap();
    for seed in [31u64, 32, 33] {
        let beta = BrownianPath::sample(seed, 1, 0.0, 1.0, 1e-4).unwrap();
        let mut errs = Vec::new();
        for (cells, dt) in [(1000usize, 1e-4), (2000, 5e-5)] {
            let space = GridSpec::new(-5.0, 5.0, cells).unwrap();
            let fpg = FpGrid { space, dt, scheme: FpScheme::ChangCooper };
            let q0 = ou::transition_density(&params, &beta, 0.1, 0.0, 0.3, space).unwrap();
            let sol = solve_nonautonomous(&q0, &ou_spec, &beta, 0.1, 1.0, &fpg, &[1.0]).unwrap();
            let law = ou::transition_density(&params, &beta, 1.0, 0.0, 0.3, space).unwrap();
            errs.push(sol.final_density().l1_distance(&law).unwrap());
        }
        println!("c2 seed={seed}: err={:.3e} refined={:.3e} ratio={:.3}", errs[0], errs[1], errs[1] / errs[0]);
    }
}
