//! Time-averaged observables along the density flow and their
//! common-noise-ensemble counterparts.
//!
//! Ergodicity of the common-noise shift identifies the long-time average of
//! a density observable `g` along one realisation with the average of
//! `g(p_beta)` over independent realisations of the pullback attractor. Both
//! estimators are implemented here; comparing them (within combined standard
//! errors) is the consistency diagnostic. The variance observable measures
//! synchronisation: the more the common noise dominates, the more the
//! pullback densities localise.

use crate::density::{EstimatorMethod, GridDensity, GridSpec, InitialCondition};
use crate::error::{Error, Result};
use crate::fokker_planck::{solve_nonautonomous, FpGrid};
use crate::noise::BrownianPath;
use crate::rng::child_seed;
use crate::sde::{evolve_in_place, pullback_evolve, ParticleEnsemble, SdeSpec};
use serde::{Deserialize, Serialize};
use std::io::Write;

/// Density observables available to the averaging drivers.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Observable {
    Mean,
    Variance,
    /// Raw moment `int x^k p(x) dx`.
    RawMoment(u32),
}

impl Observable {
    pub fn eval(&self, d: &GridDensity) -> f64 {
        match self {
            Observable::Mean => d.mean(),
            Observable::Variance => d.variance(),
            Observable::RawMoment(k) => {
                let dx = d.dx();
                d.values()
                    .iter()
                    .enumerate()
                    .map(|(j, v)| d.grid().center(j).powi(*k as i32) * v * dx)
                    .sum()
            }
        }
    }

    pub fn name(&self) -> String {
        match self {
            Observable::Mean => "mean".into(),
            Observable::Variance => "variance".into(),
            Observable::RawMoment(k) => format!("moment{k}"),
        }
    }
}

/// Which machine evolves the density forward in time.
#[derive(Clone, Debug)]
pub enum Backend {
    /// Particle ensemble of the given size (fast, Monte Carlo noise).
    Particles { n: usize },
    /// Fokker-Planck solve (slow, noise free); cross-check mode.
    FokkerPlanck { grid: FpGrid },
}

/// Sampled observable along one trajectory of the density flow.
#[derive(Clone, Debug)]
pub struct ObservableSeries {
    pub times: Vec<f64>,
    pub values: Vec<f64>,
    /// Mean of all values with `burn_in < t <= times[j]`; NaN during burn-in.
    pub running_average: Vec<f64>,
    pub observable: String,
    pub burn_in: f64,
}

impl ObservableSeries {
    pub fn final_average(&self) -> f64 {
        *self.running_average.last().expect("non-empty series")
    }

    /// Standard error of the post-burn-in average by batch means.
    pub fn std_error(&self) -> f64 {
        let vals: Vec<f64> = self
            .times
            .iter()
            .zip(&self.values)
            .filter(|(t, _)| **t > self.burn_in)
            .map(|(_, v)| *v)
            .collect();
        batch_std_error(&vals, 16)
    }

    /// Cauchy-style stabilisation diagnostic: |avg(T) - avg(T/2)|.
    pub fn stabilisation_gap(&self) -> f64 {
        let n = self.running_average.len();
        let half = self
            .times
            .iter()
            .position(|t| *t >= 0.5 * (self.times[n - 1] + self.burn_in))
            .unwrap_or(n / 2);
        let a_half = self.running_average[half];
        if a_half.is_nan() {
            return f64::NAN;
        }
        (self.final_average() - a_half).abs()
    }

    pub fn to_csv<W: Write>(&self, mut w: W) -> Result<()> {
        writeln!(w, "schema_version,t,value,running_average")?;
        for i in 0..self.times.len() {
            writeln!(
                w,
                "1,{:.17e},{:.17e},{:.17e}",
                self.times[i], self.values[i], self.running_average[i]
            )?;
        }
        Ok(())
    }
}

/// Standard error from `n_batches` batch means (guards against the serial
/// correlation of a trajectory average).
pub fn batch_std_error(values: &[f64], n_batches: usize) -> f64 {
    if values.len() < 2 * n_batches {
        // fall back to the naive iid estimate
        let n = values.len() as f64;
        if n < 2.0 {
            return f64::INFINITY;
        }
        let mean = values.iter().sum::<f64>() / n;
        let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (n - 1.0);
        return (var / n).sqrt();
    }
    let per = values.len() / n_batches;
    let means: Vec<f64> = (0..n_batches)
        .map(|b| values[b * per..(b + 1) * per].iter().sum::<f64>() / per as f64)
        .collect();
    let grand = means.iter().sum::<f64>() / n_batches as f64;
    let var = means.iter().map(|m| (m - grand) * (m - grand)).sum::<f64>()
        / (n_batches as f64 - 1.0);
    (var / n_batches as f64).sqrt()
}

/// Settings for [`time_average`].
#[derive(Clone, Debug)]
pub struct TimeAverageSettings {
    pub t_final: f64,
    pub burn_in: f64,
    pub dt: f64,
    /// Observation spacing (multiple of dt).
    pub dt_obs: f64,
    pub grid: GridSpec,
    pub backend: Backend,
    pub seed: u64,
}

/// Evolve the density forward along `beta` and average the observable over
/// `(burn_in, t_final]`.
pub fn time_average(
    spec: &SdeSpec,
    beta: &BrownianPath,
    init: &InitialCondition,
    observable: Observable,
    settings: &TimeAverageSettings,
) -> Result<ObservableSeries> {
    let s = settings;
    if !(s.t_final > s.burn_in) || s.burn_in < 0.0 {
        return Err(Error::InvalidParameter(
            "need t_final > burn_in >= 0 for a time average".into(),
        ));
    }
    let n_obs = (s.t_final / s.dt_obs).round() as usize;
    if n_obs == 0 || (n_obs as f64 * s.dt_obs - s.t_final).abs() > 1e-9 * s.t_final {
        return Err(Error::GridAlignment { t: s.t_final, dt: s.dt_obs });
    }
    let mut times = Vec::with_capacity(n_obs + 1);
    let mut values = Vec::with_capacity(n_obs + 1);
    match &s.backend {
        Backend::Particles { n } => {
            let mut ens = ParticleEnsemble::sample(init, *n, spec.dim, s.seed, 0.0)?;
            times.push(0.0);
            values.push(observable.eval(&ens.density(s.grid, EstimatorMethod::Histogram)?));
            for k in 0..n_obs {
                let t0 = k as f64 * s.dt_obs;
                let t1 = (k + 1) as f64 * s.dt_obs;
                evolve_in_place(&mut ens, spec, beta, t0, t1, s.dt)?;
                times.push(t1);
                values.push(observable.eval(&ens.density(s.grid, EstimatorMethod::Histogram)?));
            }
        }
        Backend::FokkerPlanck { grid } => {
            let q0 = initial_grid_density(init, &grid.space)?;
            let outputs: Vec<f64> = (0..=n_obs).map(|k| k as f64 * s.dt_obs).collect();
            let sol = solve_nonautonomous(&q0, spec, beta, 0.0, s.t_final, grid, &outputs)?;
            for (t, snap) in sol.times.iter().zip(&sol.snapshots) {
                times.push(*t);
                values.push(observable.eval(snap));
            }
        }
    }
    let mut running_average = vec![f64::NAN; times.len()];
    let mut acc = 0.0;
    let mut count = 0usize;
    for i in 0..times.len() {
        if times[i] > s.burn_in {
            acc += values[i];
            count += 1;
            running_average[i] = acc / count as f64;
        }
    }
    if count == 0 {
        return Err(Error::InvalidParameter("no observations after burn-in".into()));
    }
    Ok(ObservableSeries {
        times,
        values,
        running_average,
        observable: observable.name(),
        burn_in: s.burn_in,
    })
}

/// Rasterise an initial condition onto a density grid.
pub fn initial_grid_density(init: &InitialCondition, grid: &GridSpec) -> Result<GridDensity> {
    match init {
        InitialCondition::Delta(x) => GridDensity::delta(*grid, *x),
        InitialCondition::Gaussian { mean, variance } => GridDensity::gaussian(*grid, *mean, *variance),
        InitialCondition::Uniform { a, b } => GridDensity::from_fn(*grid, |x| {
            if x >= *a && x <= *b {
                1.0
            } else {
                0.0
            }
        }),
        InitialCondition::Grid(d) => {
            if d.grid() == grid {
                Ok(d.clone())
            } else {
                Err(Error::GridMismatch("initial density not on the requested grid".into()))
            }
        }
    }
}

/// Mean and standard error of `g(p_beta)` over independent realisations.
#[derive(Clone, Debug, Serialize)]
pub struct EnsembleAverage {
    pub estimate: f64,
    pub std_error: f64,
    pub per_path: Vec<f64>,
}

/// Settings for [`beta_ensemble_average`].
#[derive(Clone, Debug)]
pub struct EnsembleSettings {
    pub n_paths: usize,
    pub tau: f64,
    pub dt: f64,
    pub path_dt: f64,
    pub n_particles: usize,
    pub grid: GridSpec,
    pub seed: u64,
}

/// Average `g(p_beta)` over `n_paths` independent common-noise realisations,
/// each approximated by a pullback run truncated at `tau`.
pub fn beta_ensemble_average(
    spec: &SdeSpec,
    observable: Observable,
    init: &InitialCondition,
    settings: &EnsembleSettings,
) -> Result<EnsembleAverage> {
    let s = settings;
    if s.n_paths < 2 {
        return Err(Error::InvalidParameter("need at least 2 paths".into()));
    }
    let mut per_path = Vec::with_capacity(s.n_paths);
    for p in 0..s.n_paths {
        let beta = BrownianPath::sample(
            child_seed(s.seed, 2 * p as u64),
            1,
            -s.tau,
            0.0,
            s.path_dt,
        )?;
        let density = pullback_evolve(
            init,
            spec,
            &beta,
            s.tau,
            s.dt,
            s.n_particles,
            s.grid,
            child_seed(s.seed, 2 * p as u64 + 1),
        )?;
        per_path.push(observable.eval(&density));
    }
    let n = per_path.len() as f64;
    let estimate = per_path.iter().sum::<f64>() / n;
    let var = per_path.iter().map(|v| (v - estimate) * (v - estimate)).sum::<f64>() / (n - 1.0);
    Ok(EnsembleAverage { estimate, std_error: (var / n).sqrt(), per_path })
}

/// Outcome of the two-estimator comparison.
#[derive(Clone, Debug, Serialize)]
pub struct ErgodicReport {
    pub observable: String,
    pub time_average: f64,
    pub time_std_error: f64,
    pub ensemble_average: f64,
    pub ensemble_std_error: f64,
    pub discrepancy: f64,
    pub tolerance: f64,
    pub agree: bool,
    pub stabilisation_gap: f64,
}

/// Compare the single-trajectory time average against the beta-ensemble
/// average; they must agree within three combined standard errors.
pub fn ergodic_consistency(
    spec: &SdeSpec,
    observable: Observable,
    init: &InitialCondition,
    beta: &BrownianPath,
    time_settings: &TimeAverageSettings,
    ensemble_settings: &EnsembleSettings,
) -> Result<ErgodicReport> {
    let series = time_average(spec, beta, init, observable, time_settings)?;
    let ensemble = beta_ensemble_average(spec, observable, init, ensemble_settings)?;
    let t_avg = series.final_average();
    let t_se = series.std_error();
    let discrepancy = (t_avg - ensemble.estimate).abs();
    let tolerance = 3.0 * (t_se * t_se + ensemble.std_error * ensemble.std_error).sqrt();
    Ok(ErgodicReport {
        observable: observable.name(),
        time_average: t_avg,
        time_std_error: t_se,
        ensemble_average: ensemble.estimate,
        ensemble_std_error: ensemble.std_error,
        discrepancy,
        tolerance,
        agree: discrepancy <= tolerance,
        stabilisation_gap: series.stabilisation_gap(),
    })
}
