//! Euler-Maruyama particle engine for gradient SDEs with intrinsic and
//! common additive noise.
//!
//! Every particle advances as `x' = x - grad V(x) dt + sigma dW_i + eta dB`
//! where all particles read the identical common increment `dB` from a stored
//! [`BrownianPath`] and each particle draws its own intrinsic increment from
//! a counter stream addressed by `(seed, particle, absolute step index)`.
//! Absolute indexing means a segment split at any step boundary consumes
//! exactly the same draws as one combined call, so the cocycle identity holds
//! particle-exactly, and parallel execution is bit-identical for any thread
//! count because no draw depends on scheduling.

use crate::density::{EstimatorMethod, GridDensity, GridSpec, InitialCondition};
use crate::error::{Error, Result};
use crate::noise::BrownianPath;
use crate::potentials::Potential;
use crate::rng::{normal_from_u64, NoiseStreamKey, StreamRole};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::io::Write;

/// Positions beyond this magnitude abort the run; confining potentials make
/// such excursions numerically meaningless.
pub const BLOW_UP_GUARD: f64 = 1e6;

/// Symmetric positive semi-definite noise amplitude.
///
/// Zero is allowed so that runs without intrinsic or without common noise can
/// be expressed; modules that need an invertible amplitude (the weighted norm
/// of the contraction machinery, the diffusion of the PDE solver) check
/// positivity themselves.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SpdMatrix {
    dim: usize,
    data: Vec<f64>, // row-major
}

impl SpdMatrix {
    pub fn scalar(s: f64) -> Result<Self> {
        SpdMatrix::from_rows(1, vec![s])
    }

    pub fn isotropic(dim: usize, s: f64) -> Result<Self> {
        let mut data = vec![0.0; dim * dim];
        for i in 0..dim {
            data[i * dim + i] = s;
        }
        SpdMatrix::from_rows(dim, data)
    }

    pub fn from_rows(dim: usize, data: Vec<f64>) -> Result<Self> {
        if dim == 0 || data.len() != dim * dim {
            return Err(Error::InvalidParameter("bad amplitude matrix shape".into()));
        }
        if data.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidParameter("non-finite amplitude entry".into()));
        }
        let scale = data.iter().fold(0.0f64, |m, v| m.max(v.abs())).max(1.0);
        for i in 0..dim {
            for j in (i + 1)..dim {
                if (data[i * dim + j] - data[j * dim + i]).abs() > 1e-12 * scale {
                    return Err(Error::InvalidParameter("amplitude matrix not symmetric".into()));
                }
            }
        }
        // Semi-definite Cholesky: a vanishing pivot forces its column to vanish.
        let mut a = data.clone();
        for k in 0..dim {
            let mut pivot = a[k * dim + k];
            if pivot < -1e-10 * scale {
                return Err(Error::InvalidParameter(
                    "amplitude matrix not positive semi-definite".into(),
                ));
            }
            pivot = pivot.max(0.0);
            let root = pivot.sqrt();
            a[k * dim + k] = root;
            for i in (k + 1)..dim {
                if root > 1e-10 * scale.sqrt() {
                    a[i * dim + k] /= root;
                } else if a[i * dim + k].abs() > 1e-10 * scale {
                    return Err(Error::InvalidParameter(
                        "amplitude matrix not positive semi-definite".into(),
                    ));
                } else {
                    a[i * dim + k] = 0.0;
                }
            }
            for j in (k + 1)..dim {
                for i in j..dim {
                    a[i * dim + j] -= a[i * dim + k] * a[j * dim + k];
                }
            }
        }
        Ok(SpdMatrix { dim, data })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    /// The scalar amplitude of a 1x1 matrix.
    pub fn scalar_value(&self) -> f64 {
        debug_assert_eq!(self.dim, 1);
        self.data[0]
    }

    pub fn is_zero(&self) -> bool {
        self.data.iter().all(|v| *v == 0.0)
    }

    pub fn mul_vec(&self, x: &[f64], out: &mut [f64]) {
        for i in 0..self.dim {
            let row = &self.data[i * self.dim..(i + 1) * self.dim];
            out[i] = row.iter().zip(x).map(|(a, b)| a * b).sum();
        }
    }
}

/// The SDE being simulated: drift potential plus the two noise amplitudes.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct SdeSpec {
    pub potential: Potential,
    pub sigma: SpdMatrix,
    pub eta: SpdMatrix,
    pub dim: usize,
}

impl SdeSpec {
    pub fn new(potential: Potential, sigma: SpdMatrix, eta: SpdMatrix, dim: usize) -> Result<Self> {
        if sigma.dim() != dim || eta.dim() != dim {
            return Err(Error::InvalidParameter("amplitude dimension mismatch".into()));
        }
        if !potential.supports_dim(dim) {
            return Err(Error::InvalidParameter(
                "potential not defined for this dimension".into(),
            ));
        }
        Ok(SdeSpec { potential, sigma, eta, dim })
    }

    /// One-dimensional spec from scalar amplitudes.
    pub fn scalar(potential: Potential, sigma: f64, eta: f64) -> Result<Self> {
        SdeSpec::new(potential, SpdMatrix::scalar(sigma)?, SpdMatrix::scalar(eta)?, 1)
    }

    pub fn sigma1(&self) -> f64 {
        self.sigma.scalar_value()
    }

    pub fn eta1(&self) -> f64 {
        self.eta.scalar_value()
    }

    /// Density read-out grid sized from the stationary spread.
    pub fn default_grid(&self) -> Result<GridSpec> {
        let s2 = if self.dim == 1 {
            self.sigma1() * self.sigma1() + self.eta1() * self.eta1()
        } else {
            1.0
        };
        let std = self.potential.stationary_std_estimate(s2.max(1e-12));
        GridSpec::symmetric(6.0 * std, 1024)
    }
}

/// N particles sharing one common-noise path.
#[derive(Clone, Debug)]
pub struct ParticleEnsemble {
    positions: Vec<f64>, // n * dim
    dim: usize,
    time: f64,
    master_seed: u64,
}

impl ParticleEnsemble {
    /// Draw `n` particles from `init` at time `time` (inverse-CDF sampling on
    /// the ensemble's Init stream; per-component for dim > 1).
    pub fn sample(init: &InitialCondition, n: usize, dim: usize, master_seed: u64, time: f64) -> Result<Self> {
        if n == 0 || dim == 0 {
            return Err(Error::InvalidParameter("ensemble needs n >= 1, dim >= 1".into()));
        }
        let mut positions = vec![0.0; n * dim];
        for c in 0..dim {
            let column = init.sample_positions(n, master_seed, c as u64);
            for (i, x) in column.into_iter().enumerate() {
                positions[i * dim + c] = x;
            }
        }
        Ok(ParticleEnsemble { positions, dim, time, master_seed })
    }

    pub fn from_positions(positions: Vec<f64>, dim: usize, time: f64, master_seed: u64) -> Result<Self> {
        if dim == 0 || positions.is_empty() || positions.len() % dim != 0 {
            return Err(Error::InvalidParameter("positions length must be n * dim".into()));
        }
        Ok(ParticleEnsemble { positions, dim, time, master_seed })
    }

    pub fn n(&self) -> usize {
        self.positions.len() / self.dim
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn time(&self) -> f64 {
        self.time
    }

    pub fn master_seed(&self) -> u64 {
        self.master_seed
    }

    pub fn positions(&self) -> &[f64] {
        &self.positions
    }

    /// Component `c` of every particle (copy).
    pub fn component(&self, c: usize) -> Vec<f64> {
        self.positions.iter().skip(c).step_by(self.dim).copied().collect()
    }

    /// Ensemble mean of component 0, reduced in fixed index order.
    pub fn mean1(&self) -> f64 {
        let n = self.n() as f64;
        self.positions.iter().step_by(self.dim).sum::<f64>() / n
    }

    /// Ensemble variance of component 0, reduced in fixed index order.
    pub fn variance1(&self) -> f64 {
        let m = self.mean1();
        let n = self.n() as f64;
        self.positions.iter().step_by(self.dim).map(|x| (x - m) * (x - m)).sum::<f64>() / n
    }

    /// Histogram (or KDE) density of component 0.
    pub fn density(&self, grid: GridSpec, method: EstimatorMethod) -> Result<GridDensity> {
        GridDensity::from_particles(&self.component(0), grid, method)
    }

    pub fn to_csv<W: Write>(&self, mut w: W) -> Result<()> {
        write!(w, "schema_version,particle_id")?;
        for c in 0..self.dim {
            write!(w, ",x{c}")?;
        }
        writeln!(w)?;
        for i in 0..self.n() {
            write!(w, "1,{i}")?;
            for c in 0..self.dim {
                write!(w, ",{:.17e}", self.positions[i * self.dim + c])?;
            }
            writeln!(w)?;
        }
        Ok(())
    }
}

/// One explicit Euler-Maruyama step: `x - grad V(x) dt + sigma dw + eta db`.
///
/// `dw` and `db` are raw Brownian increments (variance dt per component).
pub fn em_step(x: &[f64], spec: &SdeSpec, dw: &[f64], db: &[f64], dt: f64, out: &mut [f64]) -> Result<()> {
    if !(dt > 0.0) {
        return Err(Error::InvalidParameter(format!("dt must be positive, got {dt}")));
    }
    let d = spec.dim;
    let mut grad = vec![0.0; d];
    spec.potential.grad(x, &mut grad);
    let mut sw = vec![0.0; d];
    let mut eb = vec![0.0; d];
    spec.sigma.mul_vec(dw, &mut sw);
    spec.eta.mul_vec(db, &mut eb);
    for i in 0..d {
        out[i] = x[i] - grad[i] * dt + sw[i] + eb[i];
        if !(out[i].abs() <= BLOW_UP_GUARD) {
            return Err(Error::BlowUp { particle: 0, t: f64::NAN });
        }
    }
    Ok(())
}

/// Scalar convenience wrapper around [`em_step`].
pub fn em_step1(x: f64, spec: &SdeSpec, dw: f64, db: f64, dt: f64) -> Result<f64> {
    let mut out = [0.0];
    em_step(&[x], spec, &[dw], &[db], dt, &mut out)?;
    Ok(out[0])
}

/// Number of steps of width `dt` from `t_from` to `t_to`, requiring both
/// endpoints to sit on the absolute step grid `n * dt`.
fn step_range(t_from: f64, t_to: f64, dt: f64) -> Result<(i64, usize)> {
    if !(dt > 0.0) || !dt.is_finite() {
        return Err(Error::InvalidParameter(format!("dt must be positive, got {dt}")));
    }
    if t_to < t_from - 1e-12 {
        return Err(Error::InvalidParameter(format!("t_to {t_to} before t_from {t_from}")));
    }
    let align = |t: f64| -> Result<i64> {
        let steps = t / dt;
        let n = steps.round();
        if (steps - n).abs() > 1e-9 * (1.0 + steps.abs()) {
            return Err(Error::GridAlignment { t, dt });
        }
        Ok(n as i64)
    };
    let n_from = align(t_from)?;
    let n_to = align(t_to)?;
    Ok((n_from, (n_to - n_from).max(0) as usize))
}

/// Advance every particle from `t_from` to `t_to`.
///
/// Intrinsic increments come from the per-particle streams at absolute step
/// indices; common increments are read from `common_path` (identical for all
/// particles, bit for bit). The result does not depend on the rayon thread
/// count.
pub fn evolve_ensemble(
    ens: &ParticleEnsemble,
    spec: &SdeSpec,
    common_path: &BrownianPath,
    t_from: f64,
    t_to: f64,
    dt: f64,
) -> Result<ParticleEnsemble> {
    let mut out = ens.clone();
    evolve_in_place(&mut out, spec, common_path, t_from, t_to, dt)?;
    Ok(out)
}

/// In-place variant of [`evolve_ensemble`] for long observation loops.
pub fn evolve_in_place(
    ens: &mut ParticleEnsemble,
    spec: &SdeSpec,
    common_path: &BrownianPath,
    t_from: f64,
    t_to: f64,
    dt: f64,
) -> Result<()> {
    if (ens.time - t_from).abs() > 1e-9 * (1.0 + t_from.abs()) {
        return Err(Error::InvalidParameter(format!(
            "ensemble is at t = {}, evolution starts at {t_from}",
            ens.time
        )));
    }
    if ens.dim != spec.dim || common_path.dim() != spec.dim {
        return Err(Error::InvalidParameter("dimension mismatch".into()));
    }
    let (n_from, n_steps) = step_range(t_from, t_to, dt)?;
    if n_steps == 0 {
        ens.time = t_to;
        return Ok(());
    }
    if !common_path.covers(t_from) || !common_path.covers(t_to) {
        return Err(Error::PathWindow {
            t_start: common_path.t_start(),
            t_end: common_path.t_end(),
            t: if common_path.covers(t_from) { t_to } else { t_from },
        });
    }

    // Common increments, scaled by eta once, shared by every particle.
    let raw = common_path.increments_over(t_from, n_steps, dt)?;
    let mut common = vec![0.0; n_steps * spec.dim];
    for s in 0..n_steps {
        spec.eta.mul_vec(&raw[s * spec.dim..(s + 1) * spec.dim], &mut common[s * spec.dim..(s + 1) * spec.dim]);
    }

    let seed = ens.master_seed;
    let dim = ens.dim;
    let chunk = 4096 * dim;
    let failure = if dim == 1 {
        let sigma = spec.sigma1();
        let mut run = |drift: &(dyn Fn(f64) -> f64 + Sync)| {
            ens.positions
                .par_chunks_mut(chunk)
                .enumerate()
                .filter_map(|(ci, xs)| {
                    evolve_chunk_1d(xs, (ci * 4096) as u64, seed, n_from, dt, sigma, drift, &common)
                })
                .min()
        };
        // Monomorphise the drift per potential kind out of the hot loop.
        match &spec.potential {
            Potential::Quadratic { a } => {
                let a = *a;
                run(&move |x: f64| a * x)
            }
            Potential::DoubleWell { a } => {
                let a = *a;
                run(&move |x: f64| x * x * x - a * x)
            }
            p => {
                let p = p.clone();
                run(&move |x: f64| p.grad1(x))
            }
        }
    } else {
        let pot = spec.potential.clone();
        let sigma = spec.sigma.clone();
        ens.positions
            .par_chunks_mut(chunk)
            .enumerate()
            .filter_map(|(ci, xs)| {
                evolve_chunk_nd(xs, dim, (ci * 4096) as u64, seed, n_from, n_steps, dt, &sigma, &pot, &common)
            })
            .min()
    };
    if let Some(particle) = failure {
        return Err(Error::BlowUp { particle, t: t_to });
    }
    ens.time = t_to;
    Ok(())
}

/// Scalar kernel. One Philox block holds the intrinsic draws for four
/// consecutive steps of one particle, so the block index is `step >> 2`.
#[allow(clippy::too_many_arguments)]
fn evolve_chunk_1d(
    xs: &mut [f64],
    first_particle: u64,
    seed: u64,
    n_from: i64,
    dt: f64,
    sigma: f64,
    drift: &(dyn Fn(f64) -> f64 + Sync),
    common: &[f64],
) -> Option<usize> {
    let sig_sqdt = sigma * dt.sqrt();
    let mut failed: Option<usize> = None;
    for (p, slot) in xs.iter_mut().enumerate() {
        let pid = first_particle + p as u64;
        let mut x = *slot;
        let mut words = [0u64; 4];
        let mut cached = i64::MIN;
        let mut ok = true;
        for (s, db) in common.iter().enumerate() {
            let n = n_from + s as i64;
            let block = n >> 2;
            if block != cached {
                words = NoiseStreamKey::new(seed, StreamRole::Intrinsic, pid, block).words();
                cached = block;
            }
            let z = normal_from_u64(words[(n & 3) as usize]);
            x = x - drift(x) * dt + sig_sqdt * z + db;
            if !(x.abs() <= BLOW_UP_GUARD) {
                ok = false;
                break;
            }
        }
        if ok {
            *slot = x;
        } else if failed.is_none() {
            failed = Some(pid as usize);
        }
    }
    failed
}

/// General-dimension kernel: `ceil(dim/4)` blocks per step, block index
/// `step * groups + g`.
#[allow(clippy::too_many_arguments)]
fn evolve_chunk_nd(
    xs: &mut [f64],
    dim: usize,
    first_particle: u64,
    seed: u64,
    n_from: i64,
    n_steps: usize,
    dt: f64,
    sigma: &SpdMatrix,
    potential: &Potential,
    common: &[f64],
) -> Option<usize> {
    let sqdt = dt.sqrt();
    let groups = dim.div_ceil(4) as i64;
    let mut grad = vec![0.0; dim];
    let mut z = vec![0.0; dim];
    let mut sz = vec![0.0; dim];
    let mut failed: Option<usize> = None;
    'particles: for (p, slot) in xs.chunks_exact_mut(dim).enumerate() {
        let pid = first_particle + p as u64;
        for s in 0..n_steps {
            let n = n_from + s as i64;
            for g in 0..groups {
                let words =
                    NoiseStreamKey::new(seed, StreamRole::Intrinsic, pid, n * groups + g).words();
                for lane in 0..4usize {
                    let c = g as usize * 4 + lane;
                    if c < dim {
                        z[c] = sqdt * normal_from_u64(words[lane]);
                    }
                }
            }
            potential.grad(slot, &mut grad);
            sigma.mul_vec(&z, &mut sz);
            let db = &common[s * dim..(s + 1) * dim];
            for c in 0..dim {
                slot[c] = slot[c] - grad[c] * dt + sz[c] + db[c];
                if !(slot[c].abs() <= BLOW_UP_GUARD) {
                    if failed.is_none() {
                        failed = Some(pid as usize);
                    }
                    continue 'particles;
                }
            }
        }
    }
    failed
}

/// Pullback step: sample `n` particles from `init`, evolve them from `-tau`
/// to 0 along the fixed realisation `beta`, and return the density estimate
/// at time 0.
#[allow(clippy::too_many_arguments)]
pub fn pullback_evolve(
    init: &InitialCondition,
    spec: &SdeSpec,
    beta: &BrownianPath,
    tau: f64,
    dt: f64,
    n_particles: usize,
    grid: GridSpec,
    master_seed: u64,
) -> Result<GridDensity> {
    if spec.dim != 1 {
        return Err(Error::InvalidParameter("density read-out is one-dimensional".into()));
    }
    if tau < 0.0 {
        return Err(Error::InvalidParameter(format!("tau must be >= 0, got {tau}")));
    }
    let (_, n_steps) = step_range(-tau, 0.0, dt)?;
    let t_from = -(n_steps as f64) * dt;
    let mut ens = ParticleEnsemble::sample(init, n_particles, 1, master_seed, t_from)?;
    if n_steps > 0 {
        let path = beta.ensure_covers(t_from)?;
        evolve_in_place(&mut ens, spec, &path, t_from, 0.0, dt)?;
    }
    ens.density(grid, EstimatorMethod::Histogram)
}

/// Result of the doubling stopping rule for the pullback limit.
#[derive(Clone, Debug)]
pub struct PullbackConvergence {
    pub tau_star: f64,
    pub density: GridDensity,
    /// `(tau, l1 change from the previous tau)` for each doubling.
    pub history: Vec<(f64, f64)>,
}

/// Double tau from 1 until the pullback density stops moving in L1.
///
/// The doubling rule is a heuristic: no convergence rate is available in
/// general, so the full history is returned for reporting.
#[allow(clippy::too_many_arguments)]
pub fn pullback_converged(
    spec: &SdeSpec,
    beta: &BrownianPath,
    init: &InitialCondition,
    dt: f64,
    n_particles: usize,
    tol: f64,
    grid: GridSpec,
    master_seed: u64,
    tau_cap: f64,
) -> Result<PullbackConvergence> {
    if !(tol > 0.0) {
        return Err(Error::InvalidParameter(format!("tol must be positive, got {tol}")));
    }
    let mut path = beta.ensure_covers(-1.0)?;
    let mut prev = pullback_evolve(init, spec, &path, 1.0, dt, n_particles, grid, master_seed)?;
    let mut tau = 2.0;
    let mut history = Vec::new();
    let mut last_change = f64::INFINITY;
    while tau <= tau_cap {
        path = path.ensure_covers(-tau)?;
        let next = pullback_evolve(init, spec, &path, tau, dt, n_particles, grid, master_seed)?;
        last_change = next.l1_distance(&prev)?;
        history.push((tau, last_change));
        if last_change < tol {
            return Ok(PullbackConvergence { tau_star: tau, density: next, history });
        }
        prev = next;
        tau *= 2.0;
    }
    Err(Error::NoConvergence { tau_cap, last_change })
}
