//! Experiment runner behind the command-line interface.
//!
//! A run is described by a JSON [`RunConfig`] with strict parsing (unknown
//! keys are rejected). Every default is materialised before execution and the
//! resolved config is written to `manifest.json`, so feeding a manifest back
//! as the config reproduces the run exactly. Output files carry no
//! timestamps or machine information: re-running with the same seed yields
//! byte-identical artifacts whatever the thread count.

use crate::contraction::{build_profile, verify_contraction};
use crate::density::{GridDensity, GridSpec, InitialCondition};
use crate::ergodic::{
    ergodic_consistency, time_average, Backend, EnsembleSettings, Observable,
    TimeAverageSettings,
};
use crate::error::{Error, Result};
use crate::fokker_planck::{
    check_wic, cocycle_check, domain_half_width, solve_nonautonomous, FpGrid, FpScheme,
};
use crate::noise::BrownianPath;
use crate::ou;
use crate::potentials::Potential;
use crate::rng::child_seed;
use crate::sde::{pullback_converged, pullback_evolve, SdeSpec};
use serde::{Deserialize, Serialize};
use serde_json::json;
use std::fs;
use std::path::{Path, PathBuf};

/// Available experiments.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Experiment {
    #[serde(rename = "pullback")]
    Pullback,
    #[serde(rename = "fp-solve")]
    FpSolve,
    #[serde(rename = "contraction")]
    Contraction,
    #[serde(rename = "figure1")]
    Figure1,
    #[serde(rename = "ou-validate")]
    OuValidate,
    #[serde(rename = "ergodic")]
    Ergodic,
}

impl Experiment {
    pub fn name(&self) -> &'static str {
        match self {
            Experiment::Pullback => "pullback",
            Experiment::FpSolve => "fp-solve",
            Experiment::Contraction => "contraction",
            Experiment::Figure1 => "figure1",
            Experiment::OuValidate => "ou-validate",
            Experiment::Ergodic => "ergodic",
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridConfig {
    pub x_min: f64,
    pub x_max: f64,
    pub n_cells: usize,
}

impl GridConfig {
    fn to_spec(self) -> Result<GridSpec> {
        GridSpec::new(self.x_min, self.x_max, self.n_cells)
    }

    fn from_spec(g: GridSpec) -> Self {
        GridConfig { x_min: g.x_min, x_max: g.x_max, n_cells: g.n_cells }
    }
}

/// Numerical knobs; anything omitted takes an experiment-specific default
/// that ends up in the manifest.
#[derive(Clone, Debug, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NumericsConfig {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub dt: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub n_particles: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub tau: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub t_final: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub burn_in: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub dt_obs: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub tol: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub n_paths: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub path_dt: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub checkpoints: Option<Vec<f64>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub x0: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub grid: Option<GridConfig>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub beta_seed: Option<u64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub observable: Option<Observable>,
}

/// Solver-specific settings under the `fokker_planck` key.
#[derive(Clone, Debug, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FokkerPlanckConfig {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub dt: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub scheme: Option<FpScheme>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub n_cells: Option<usize>,
}

/// Complete description of a run.
#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub experiment: Option<Experiment>,
    pub potential: Potential,
    pub sigma: f64,
    pub eta: f64,
    #[serde(default)]
    pub numerics: NumericsConfig,
    #[serde(default)]
    pub fokker_planck: FokkerPlanckConfig,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub master_seed: Option<u64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub output_dir: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub schema_version: Option<u32>,
}

impl RunConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        let cfg: RunConfig =
            serde_json::from_str(text).map_err(|e| Error::Config(format!("{e}")))?;
        cfg.validate()?;
        Ok(cfg)
    }

    /// A minimal default config for an experiment (used when no config file
    /// is given).
    pub fn default_for(experiment: Experiment) -> Self {
        let (potential, sigma, eta) = match experiment {
            Experiment::Figure1 => (Potential::DoubleWell { a: 1.0 }, 0.141, 0.99),
            Experiment::Contraction => (Potential::DoubleWell { a: 1.0 }, 1.0, 0.5),
            Experiment::Ergodic => (Potential::Quadratic { a: 1.0 }, 0.5, 0.8),
            _ => (Potential::Quadratic { a: 1.0 }, 0.5, 0.8),
        };
        RunConfig {
            experiment: Some(experiment),
            potential,
            sigma,
            eta,
            numerics: NumericsConfig::default(),
            fokker_planck: FokkerPlanckConfig::default(),
            master_seed: None,
            output_dir: None,
            schema_version: None,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let named = |name: &str, ok: bool| {
            if ok {
                Ok(())
            } else {
                Err(Error::Config(format!("field '{name}' is invalid")))
            }
        };
        named("sigma", self.sigma.is_finite() && self.sigma >= 0.0)?;
        named("eta", self.eta.is_finite() && self.eta >= 0.0)?;
        let n = &self.numerics;
        named("numerics.dt", n.dt.map_or(true, |v| v > 0.0 && v.is_finite()))?;
        named("numerics.n_particles", n.n_particles.map_or(true, |v| v > 0))?;
        named("numerics.tau", n.tau.map_or(true, |v| v >= 0.0))?;
        named("numerics.t_final", n.t_final.map_or(true, |v| v > 0.0))?;
        named("numerics.burn_in", n.burn_in.map_or(true, |v| v >= 0.0))?;
        named("numerics.dt_obs", n.dt_obs.map_or(true, |v| v > 0.0))?;
        named("numerics.tol", n.tol.map_or(true, |v| v > 0.0))?;
        named("numerics.n_paths", n.n_paths.map_or(true, |v| v >= 2))?;
        named("numerics.path_dt", n.path_dt.map_or(true, |v| v > 0.0))?;
        named("fokker_planck.dt", self.fokker_planck.dt.map_or(true, |v| v > 0.0))?;
        named("fokker_planck.n_cells", self.fokker_planck.n_cells.map_or(true, |v| v >= 2))?;
        Ok(())
    }

    fn spec(&self) -> Result<SdeSpec> {
        SdeSpec::scalar(self.potential.clone(), self.sigma, self.eta)
    }
}

/// One pass/fail entry in the summary.
#[derive(Clone, Debug, Serialize)]
pub struct Check {
    pub name: String,
    pub passed: bool,
    pub value: f64,
    pub threshold: f64,
}

impl Check {
    fn below(name: &str, value: f64, threshold: f64) -> Self {
        Check { name: name.into(), passed: value < threshold, value, threshold }
    }
}

/// Everything a finished run leaves behind.
#[derive(Debug)]
pub struct RunOutput {
    pub out_dir: PathBuf,
    pub summary: serde_json::Value,
    pub checks: Vec<Check>,
}

impl RunOutput {
    pub fn all_passed(&self) -> bool {
        self.checks.iter().all(|c| c.passed)
    }
}

/// Execute one experiment end to end: resolve defaults, write the manifest,
/// run, write artifacts and the summary.
pub fn run(config: &RunConfig, out_dir: &Path) -> Result<RunOutput> {
    config.validate()?;
    let experiment = config
        .experiment
        .ok_or_else(|| Error::Config("field 'experiment' missing".into()))?;
    fs::create_dir_all(out_dir)?;
    let mut resolved = config.clone();
    resolved.master_seed = Some(config.master_seed.unwrap_or(1));
    resolved.schema_version = Some(1);
    resolved.output_dir = Some(out_dir.display().to_string());
    let seed = resolved.master_seed.unwrap();

    let (summary, checks) = match experiment {
        Experiment::Pullback => run_pullback(&mut resolved, seed, out_dir)?,
        Experiment::FpSolve => run_fp_solve(&mut resolved, seed, out_dir)?,
        Experiment::Contraction => run_contraction(&mut resolved, seed, out_dir)?,
        Experiment::Figure1 => run_figure1(&mut resolved, seed, out_dir)?,
        Experiment::OuValidate => run_ou_validate(&mut resolved, seed, out_dir)?,
        Experiment::Ergodic => run_ergodic(&mut resolved, seed, out_dir)?,
    };

    // manifest reflects every default the run actually used
    write_text(out_dir.join("manifest.json"), &pretty(&serde_json::to_value(&resolved)?))?;
    let full_summary = json!({
        "schema_version": 1,
        "experiment": experiment.name(),
        "master_seed": seed,
        "results": summary,
        "checks": checks.iter().map(|c| json!({
            "name": c.name, "passed": c.passed, "value": c.value, "threshold": c.threshold,
        })).collect::<Vec<_>>(),
        "all_passed": checks.iter().all(|c| c.passed),
    });
    write_text(out_dir.join("summary.json"), &pretty(&full_summary))?;
    Ok(RunOutput { out_dir: out_dir.to_path_buf(), summary: full_summary, checks })
}

fn run_pullback(
    cfg: &mut RunConfig,
    seed: u64,
    out: &Path,
) -> Result<(serde_json::Value, Vec<Check>)> {
    let spec = cfg.spec()?;
    let n = &mut cfg.numerics;
    let dt = *n.dt.get_or_insert(1e-3);
    let n_particles = *n.n_particles.get_or_insert(100_000);
    let tau = *n.tau.get_or_insert(10.0);
    let path_dt = *n.path_dt.get_or_insert(dt);
    let beta_seed = *n.beta_seed.get_or_insert(child_seed(seed, 0xB));
    let x0 = *n.x0.get_or_insert(0.0);
    let grid = match n.grid {
        Some(g) => g.to_spec()?,
        None => spec.default_grid()?,
    };
    n.grid = Some(GridConfig::from_spec(grid));
    let init = InitialCondition::Delta(x0);
    let beta = BrownianPath::sample(beta_seed, 1, -tau.max(1.0), 0.0, path_dt)?;

    let (density, tau_star, history) = match n.tol {
        Some(tol) => {
            let conv = pullback_converged(&spec, &beta, &init, dt, n_particles, tol, grid, seed, 1024.0)?;
            (conv.density, Some(conv.tau_star), conv.history)
        }
        None => {
            let beta = beta.ensure_covers(-tau)?;
            (pullback_evolve(&init, &spec, &beta, tau, dt, n_particles, grid, seed)?, None, vec![])
        }
    };
    let mut csv = Vec::new();
    density.to_csv(&mut csv)?;
    write_bytes(out.join("density.csv"), &csv)?;
    let summary = json!({
        "mean": density.mean(),
        "variance": density.variance(),
        "tau": tau_star.unwrap_or(tau),
        "converged_history": history,
    });
    Ok((summary, vec![]))
}

fn run_fp_solve(
    cfg: &mut RunConfig,
    seed: u64,
    out: &Path,
) -> Result<(serde_json::Value, Vec<Check>)> {
    let spec = cfg.spec()?;
    let t_final = *cfg.numerics.t_final.get_or_insert(1.0);
    let beta_seed = *cfg.numerics.beta_seed.get_or_insert(child_seed(seed, 0xB));
    let x0 = *cfg.numerics.x0.get_or_insert(0.0);
    let fp_dt = *cfg.fokker_planck.dt.get_or_insert(1e-4);
    let scheme = *cfg.fokker_planck.scheme.get_or_insert(FpScheme::ChangCooper);
    let n_cells = *cfg.fokker_planck.n_cells.get_or_insert(1024);
    let path_dt = *cfg.numerics.path_dt.get_or_insert(fp_dt.max(1e-4));
    let beta = BrownianPath::sample(beta_seed, 1, 0.0, t_final, path_dt)?;
    let space = match cfg.numerics.grid {
        Some(g) => g.to_spec()?,
        None => {
            let half = domain_half_width(&spec, &beta, 0.0, t_final, 6.0)?;
            GridSpec::symmetric(half, n_cells)?
        }
    };
    cfg.numerics.grid = Some(GridConfig::from_spec(space));
    let grid = FpGrid { space, dt: fp_dt, scheme };
    let sigma2 = spec.sigma1() * spec.sigma1();
    let var0 = (0.05 * sigma2).max(1e-3);
    let q0 = GridDensity::gaussian(space, x0, var0)?;
    let n_out = 10usize;
    let outputs: Vec<f64> =
        (0..=n_out).map(|k| t_final * k as f64 / n_out as f64).collect();
    let sol = solve_nonautonomous(&q0, &spec, &beta, 0.0, t_final, &grid, &outputs)?;
    for (i, snap) in sol.snapshots.iter().enumerate() {
        let mut csv = Vec::new();
        snap.to_csv(&mut csv)?;
        write_bytes(out.join(format!("density_{i:03}.csv")), &csv)?;
    }
    let wic = check_wic(&sol, &spec.potential);
    let checks = vec![
        Check::below("mass_drift", sol.max_mass_drift, 1e-8),
        Check::below("weighted_integrability", wic, 1e-6),
    ];
    let summary = json!({
        "times": sol.times,
        "final_mean": sol.final_density().mean(),
        "final_variance": sol.final_density().variance(),
        "max_mass_drift": sol.max_mass_drift,
        "wic": wic,
        "clamped_mass": sol.clamped_mass,
    });
    Ok((summary, checks))
}

fn run_contraction(
    cfg: &mut RunConfig,
    seed: u64,
    out: &Path,
) -> Result<(serde_json::Value, Vec<Check>)> {
    let profile = build_profile(&cfg.potential, cfg.sigma)?;
    let mut csv = Vec::new();
    profile.to_csv(&mut csv)?;
    write_bytes(out.join("profile.csv"), &csv)?;
    write_text(out.join("constants.json"), &pretty(&serde_json::to_value(profile.constants())?))?;

    let mut summary = json!({
        "constants": profile.constants(),
        "phi_r0": profile.phi_r0(),
        "bridge_constant": profile.bridge_constant(),
    });
    let mut checks = Vec::new();
    if let Some(checkpoints) = cfg.numerics.checkpoints.clone() {
        let spec = cfg.spec()?;
        let dt = *cfg.numerics.dt.get_or_insert(1e-3);
        let n_particles = *cfg.numerics.n_particles.get_or_insert(20_000);
        let beta_seed = *cfg.numerics.beta_seed.get_or_insert(child_seed(seed, 0xB));
        let x0 = *cfg.numerics.x0.get_or_insert(1.0);
        let horizon = checkpoints.last().copied().unwrap_or(1.0);
        let beta = BrownianPath::sample(beta_seed, 1, 0.0, horizon, dt)?;
        let report = verify_contraction(
            &spec,
            &beta,
            &InitialCondition::Delta(-x0),
            &InitialCondition::Delta(x0),
            &profile,
            &checkpoints,
            dt,
            n_particles,
            child_seed(seed, 1),
            child_seed(seed, 2),
        )?;
        for p in &report.points {
            checks.push(Check::below(&format!("envelope_t{}", p.t), p.w1_sigma, p.bound));
        }
        summary["envelope"] = serde_json::to_value(&report.points)?;
    }
    Ok((summary, checks))
}

/// The three synchronisation regimes: eta in {0.99, sqrt(2)/2, 0.15} with
/// sigma^2 + eta^2 = 1, and their published time-averaged variances.
pub const FIGURE1_CASES: [(f64, f64); 3] =
    [(0.99, 0.04), (std::f64::consts::FRAC_1_SQRT_2, 0.53), (0.15, 0.90)];

fn run_figure1(
    cfg: &mut RunConfig,
    seed: u64,
    out: &Path,
) -> Result<(serde_json::Value, Vec<Check>)> {
    let a = match cfg.potential {
        Potential::DoubleWell { a } => a,
        _ => {
            return Err(Error::Config(
                "figure1 uses the double-well potential; set potential.kind = double_well".into(),
            ))
        }
    };
    let n = &mut cfg.numerics;
    let t_final = *n.t_final.get_or_insert(500.0);
    let burn_in = *n.burn_in.get_or_insert(50.0);
    let dt = *n.dt.get_or_insert(2e-3);
    let dt_obs = *n.dt_obs.get_or_insert(0.25);
    let n_particles = *n.n_particles.get_or_insert(100_000);
    let tau_overlay = *n.tau.get_or_insert(20.0);
    let grid = match n.grid {
        Some(g) => g.to_spec()?,
        None => GridSpec::symmetric(4.0, 1024)?,
    };
    n.grid = Some(GridConfig::from_spec(grid));

    let mut rows = Vec::new();
    let mut checks = Vec::new();
    let mut table = String::from("schema_version,case,eta,sigma,time_avg_variance,reference\n");
    for (case, (eta, reference)) in FIGURE1_CASES.iter().enumerate() {
        let sigma = (1.0 - eta * eta).sqrt();
        let spec = SdeSpec::scalar(Potential::double_well(a)?, sigma, *eta)?;
        let beta_seed = child_seed(seed, 100 + case as u64);
        let beta = BrownianPath::sample(beta_seed, 1, 0.0, t_final, dt)?;
        let settings = TimeAverageSettings {
            t_final,
            burn_in,
            dt,
            dt_obs,
            grid,
            backend: Backend::Particles { n: n_particles },
            seed: child_seed(seed, 200 + case as u64),
        };
        let series = time_average(
            &spec,
            &beta,
            &InitialCondition::Delta(0.0),
            Observable::Variance,
            &settings,
        )?;
        let value = series.final_average();
        let mut csv = Vec::new();
        series.to_csv(&mut csv)?;
        write_bytes(out.join(format!("case_{case}_series.csv")), &csv)?;

        // pullback density overlays, one per realisation, plus the
        // stationary density in the background
        let stat = ou::dw_stationary_density(a, 1.0, grid)?;
        let mut overlays: Vec<(String, GridDensity)> = vec![("stationary".into(), stat)];
        for r in 0..6u64 {
            let pb_beta = BrownianPath::sample(
                child_seed(seed, 300 + 10 * case as u64 + r),
                1,
                -tau_overlay,
                0.0,
                dt,
            )?;
            let d = pullback_evolve(
                &InitialCondition::Delta(0.0),
                &spec,
                &pb_beta,
                tau_overlay,
                dt,
                20_000,
                grid,
                child_seed(seed, 400 + 10 * case as u64 + r),
            )?;
            overlays.push((format!("pullback_{r}"), d));
        }
        let named: Vec<(&str, &GridDensity)> =
            overlays.iter().map(|(s, d)| (s.as_str(), d)).collect();
        let mut csv = Vec::new();
        GridDensity::overlay_csv(&named, &mut csv)?;
        write_bytes(out.join(format!("case_{case}_densities.csv")), &csv)?;

        table.push_str(&format!("1,{case},{eta:.6},{sigma:.6},{value:.6},{reference:.2}\n"));
        checks.push(Check::below(
            &format!("figure1_case_{case}"),
            (value - reference).abs(),
            0.05,
        ));
        rows.push(json!({
            "eta": eta, "sigma": sigma, "time_avg_variance": value, "reference": reference,
        }));
    }
    write_text(out.join("figure1_table.csv"), &table)?;
    Ok((json!({ "cases": rows }), checks))
}

fn run_ou_validate(
    cfg: &mut RunConfig,
    seed: u64,
    out: &Path,
) -> Result<(serde_json::Value, Vec<Check>)> {
    let a = match cfg.potential {
        Potential::Quadratic { a } => a,
        _ => {
            return Err(Error::Config(
                "ou-validate needs potential.kind = quadratic".into(),
            ))
        }
    };
    let params = ou::OuParams::new(a, cfg.sigma, cfg.eta)?;
    let spec = cfg.spec()?;
    let n = &mut cfg.numerics;
    let dt = *n.dt.get_or_insert(1e-3);
    let tau = *n.tau.get_or_insert(10.0);
    let n_particles = *n.n_particles.get_or_insert(200_000);
    let n_paths = *n.n_paths.get_or_insert(500);
    let beta_seed = *n.beta_seed.get_or_insert(child_seed(seed, 0xB));
    let grid = match n.grid {
        Some(g) => g.to_spec()?,
        None => spec.default_grid()?,
    };
    n.grid = Some(GridConfig::from_spec(grid));
    let mut checks = Vec::new();

    // 1. engine pullback vs the exact pullback attractor, same realisation
    let beta = BrownianPath::sample(beta_seed, 1, -tau, 0.0, dt)?;
    let engine = pullback_evolve(
        &InitialCondition::Delta(0.0),
        &spec,
        &beta,
        tau,
        dt,
        n_particles,
        grid,
        seed,
    )?;
    let oracle = ou::pullback_density(&params, &beta, tau, grid)?;
    let l1 = engine.l1_distance(&oracle.density)?;
    checks.push(Check::below("pullback_l1_vs_oracle", l1, 0.05));
    let var_err = (engine.variance() - params.pullback_variance()).abs()
        / params.pullback_variance();
    checks.push(Check::below("pullback_variance_rel_err", var_err, 0.03));
    let mut csv = Vec::new();
    GridDensity::overlay_csv(
        &[("engine", &engine), ("oracle", &oracle.density)],
        &mut csv,
    )?;
    write_bytes(out.join("pullback_vs_oracle.csv"), &csv)?;

    // 2. PDE solver vs the exact transition law under a sampled realisation
    let fp_dt = *cfg.fokker_planck.dt.get_or_insert(1e-4);
    let scheme = *cfg.fokker_planck.scheme.get_or_insert(FpScheme::ChangCooper);
    let fwd = BrownianPath::sample(child_seed(seed, 7), 1, 0.0, 1.0, fp_dt)?;
    let half = domain_half_width(&spec, &fwd, 0.0, 1.0, 8.0)?;
    let n_cells = (2.0 * half / 0.01).ceil() as usize;
    let space = GridSpec::symmetric(half, n_cells)?;
    let fp_grid = FpGrid { space, dt: fp_dt, scheme };
    let x0 = 0.3;
    let t_start = 0.1;
    let q0 = ou::transition_density(&params, &fwd, t_start, 0.0, x0, space)?;
    let sol = solve_nonautonomous(&q0, &spec, &fwd, t_start, 1.0, &fp_grid, &[1.0])?;
    let law = ou::transition_density(&params, &fwd, 1.0, 0.0, x0, space)?;
    checks.push(Check::below(
        "fp_l1_vs_transition_law",
        sol.final_density().l1_distance(&law)?,
        5e-3,
    ));
    checks.push(Check::below("fp_mass_drift", sol.max_mass_drift, 1e-8));

    // 3. disintegration: averaging exact pullback densities over independent
    // realisations recovers the stationary density
    let mut avg = vec![0.0; grid.n_cells];
    for p in 0..n_paths {
        let b = BrownianPath::sample(child_seed(seed, 1000 + p as u64), 1, -tau, 0.0, 1e-3)?;
        let d = ou::pullback_density(&params, &b, tau, grid)?;
        for (acc, v) in avg.iter_mut().zip(d.density.values()) {
            *acc += v / n_paths as f64;
        }
    }
    let mixture = GridDensity::from_values(grid, avg)?;
    let stationary = ou::stationary_density(&params, grid)?;
    checks.push(Check::below(
        "disintegration_l1",
        mixture.l1_distance(&stationary)?,
        0.05,
    ));
    let mut csv = Vec::new();
    GridDensity::overlay_csv(&[("mixture", &mixture), ("stationary", &stationary)], &mut csv)?;
    write_bytes(out.join("disintegration.csv"), &csv)?;

    // 4. solver cocycle property through an intermediate time
    let fine_space = GridSpec::symmetric(half, 8192)?;
    let gap = cocycle_check(
        &spec,
        &fwd,
        &GridDensity::gaussian(fine_space, 0.0, 0.2)?,
        0.5,
        1.0,
        &FpGrid { space: fine_space, ..fp_grid },
    )?;
    checks.push(Check::below("fp_cocycle_gap", gap, 1e-6));

    let summary = json!({
        "pullback_mean_engine": engine.mean(),
        "pullback_mean_oracle": oracle.mean,
        "pullback_variance": engine.variance(),
        "pullback_variance_exact": params.pullback_variance(),
        "stationary_variance_exact": params.stationary_variance(),
    });
    Ok((summary, checks))
}

fn run_ergodic(
    cfg: &mut RunConfig,
    seed: u64,
    out: &Path,
) -> Result<(serde_json::Value, Vec<Check>)> {
    let spec = cfg.spec()?;
    let n = &mut cfg.numerics;
    let observable = *n.observable.get_or_insert(Observable::Variance);
    let t_final = *n.t_final.get_or_insert(200.0);
    let burn_in = *n.burn_in.get_or_insert(20.0);
    let dt = *n.dt.get_or_insert(2e-3);
    let dt_obs = *n.dt_obs.get_or_insert(0.25);
    let n_particles = *n.n_particles.get_or_insert(20_000);
    let tau = *n.tau.get_or_insert(15.0);
    let n_paths = *n.n_paths.get_or_insert(32);
    let beta_seed = *n.beta_seed.get_or_insert(child_seed(seed, 0xB));
    let grid = match n.grid {
        Some(g) => g.to_spec()?,
        None => spec.default_grid()?,
    };
    n.grid = Some(GridConfig::from_spec(grid));
    let init = InitialCondition::Delta(*n.x0.get_or_insert(0.0));
    let beta = BrownianPath::sample(beta_seed, 1, 0.0, t_final, dt)?;
    let ts = TimeAverageSettings {
        t_final,
        burn_in,
        dt,
        dt_obs,
        grid,
        backend: Backend::Particles { n: n_particles },
        seed: child_seed(seed, 1),
    };
    let es = EnsembleSettings {
        n_paths,
        tau,
        dt,
        path_dt: dt,
        n_particles,
        grid,
        seed: child_seed(seed, 2),
    };
    let series = time_average(&spec, &beta, &init, observable, &ts)?;
    let mut csv = Vec::new();
    series.to_csv(&mut csv)?;
    write_bytes(out.join("series.csv"), &csv)?;
    let report = ergodic_consistency(&spec, observable, &init, &beta, &ts, &es)?;
    let checks = vec![Check::below(
        "ergodic_consistency",
        report.discrepancy,
        report.tolerance,
    )];
    Ok((serde_json::to_value(&report)?, checks))
}

fn pretty(v: &serde_json::Value) -> String {
    let mut s = serde_json::to_string_pretty(v).expect("json serialisation");
    s.push('\n');
    s
}

fn write_text(path: PathBuf, text: &str) -> Result<()> {
    fs::write(path, text)?;
    Ok(())
}

fn write_bytes(path: PathBuf, bytes: &[u8]) -> Result<()> {
    fs::write(path, bytes)?;
    Ok(())
}
