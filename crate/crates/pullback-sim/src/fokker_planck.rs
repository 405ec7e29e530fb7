//! Deterministic solver for the non-autonomous Fokker-Planck equation driven
//! by a fixed common-noise realisation.
//!
//! The equation is solved in shifted coordinates `y = x - eta (beta(t) -
//! beta(t0))`, where it becomes a plain advection-diffusion equation with the
//! time-dependent potential `U(y, t) = V(y + eta (beta(t) - beta(t0)))` and
//! diffusion `sigma^2 / 2`:
//!
//! ```text
//! dq/dt = d/dy ( U'(y, t) q + (sigma^2/2) dq/dy )
//! ```
//!
//! Densities in original coordinates are recovered by shifting snapshots
//! back. The spatial discretisation is a conservative flux form with
//! zero-flux boundaries: total mass is conserved to rounding by telescoping,
//! whatever the time step. The default Chang-Cooper flux weighting is
//! exponentially fitted, which keeps cell values nonnegative under backward
//! Euler and makes the discrete stationary state exact for gradient flows; a
//! central-difference Crank-Nicolson variant is kept as a cross-check.

use crate::density::{GridDensity, GridSpec};
use crate::error::{Error, Result};
use crate::noise::BrownianPath;
use crate::potentials::Potential;
use crate::sde::SdeSpec;
use serde::{Deserialize, Serialize};

/// Spatial discretisation scheme.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FpScheme {
    /// Exponentially fitted fluxes with backward Euler stepping. Positivity
    /// preserving at any time step.
    ChangCooper,
    /// Central fluxes with Crank-Nicolson stepping. Subject to the CFL-style
    /// guard `dt <= dx^2 / (2 sigma^2)`; negative undershoots in snapshots
    /// are clamped and reported.
    CentralCrankNicolson,
}

/// Solver grid: space cells, time step and scheme.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct FpGrid {
    pub space: GridSpec,
    pub dt: f64,
    pub scheme: FpScheme,
}

/// Mass allowed to occupy the outermost cells before the run aborts: piled-up
/// boundary mass means the domain truncates the solution.
const BOUNDARY_MASS_LIMIT: f64 = 1e-6;

/// Solution bundle: snapshots at the requested times plus conservation
/// diagnostics.
#[derive(Clone, Debug)]
pub struct FpSolution {
    pub times: Vec<f64>,
    /// Densities in original (unshifted) coordinates.
    pub snapshots: Vec<GridDensity>,
    /// Raw solver-side (shifted-coordinate) cell values per snapshot.
    q_snapshots: Vec<Vec<f64>>,
    /// Coordinate shift `eta (beta(t) - beta(t0))` per snapshot.
    shifts: Vec<f64>,
    /// Total mass after every step.
    pub mass_log: Vec<f64>,
    /// Largest |mass - 1| observed.
    pub max_mass_drift: f64,
    /// Negative mass clamped out of snapshots (Crank-Nicolson only).
    pub clamped_mass: f64,
    grid: GridSpec,
}

impl FpSolution {
    pub fn final_density(&self) -> &GridDensity {
        self.snapshots.last().expect("solution has at least one snapshot")
    }

    pub fn grid(&self) -> &GridSpec {
        &self.grid
    }

    /// Shifted-coordinate snapshot values (for tail diagnostics).
    pub fn q_snapshot(&self, k: usize) -> (&[f64], f64) {
        (&self.q_snapshots[k], self.shifts[k])
    }
}

/// Solve the non-autonomous equation from `q0` (given in original
/// coordinates at `t0`) up to `t1`, recording snapshots at `output_times`.
pub fn solve_nonautonomous(
    q0: &GridDensity,
    spec: &SdeSpec,
    beta: &BrownianPath,
    t0: f64,
    t1: f64,
    grid: &FpGrid,
    output_times: &[f64],
) -> Result<FpSolution> {
    if spec.dim != 1 {
        return Err(Error::InvalidParameter("the PDE solver is one-dimensional".into()));
    }
    let sigma = spec.sigma1();
    let eta = spec.eta1();
    if !beta.covers(t0) || !beta.covers(t1) {
        return Err(Error::PathWindow {
            t_start: beta.t_start(),
            t_end: beta.t_end(),
            t: if beta.covers(t0) { t1 } else { t0 },
        });
    }
    let anchor = beta.value_at(t0, 0)?;
    let shift = move |t: f64| -> Result<f64> { Ok(eta * (beta.value_at(t, 0)? - anchor)) };
    solve_core(q0, &spec.potential, sigma, &shift, t0, t1, grid, output_times)
}

/// Autonomous special case with total squared diffusion amplitude
/// `sigma2_total` (the `sigma^2 + eta^2` of the averaged dynamics); used for
/// stationary-measure computations.
pub fn autonomous_solve(
    q0: &GridDensity,
    potential: &Potential,
    sigma2_total: f64,
    t0: f64,
    t1: f64,
    grid: &FpGrid,
    output_times: &[f64],
) -> Result<FpSolution> {
    if !(sigma2_total > 0.0) {
        return Err(Error::InvalidParameter("diffusion must be positive".into()));
    }
    let shift = |_: f64| -> Result<f64> { Ok(0.0) };
    solve_core(q0, potential, sigma2_total.sqrt(), &shift, t0, t1, grid, output_times)
}

#[allow(clippy::too_many_arguments)]
fn solve_core(
    q0: &GridDensity,
    potential: &Potential,
    sigma: f64,
    shift_at: &dyn Fn(f64) -> Result<f64>,
    t0: f64,
    t1: f64,
    grid: &FpGrid,
    output_times: &[f64],
) -> Result<FpSolution> {
    if !(sigma > 0.0) {
        return Err(Error::InvalidParameter(
            "the PDE solver needs intrinsic noise sigma > 0".into(),
        ));
    }
    let space = grid.space;
    if q0.grid() != &space {
        return Err(Error::GridMismatch("initial density not on the solver grid".into()));
    }
    let dt = grid.dt;
    if !(dt > 0.0) {
        return Err(Error::InvalidParameter("solver dt must be positive".into()));
    }
    let dx = space.dx();
    let diffusion = 0.5 * sigma * sigma;
    if matches!(grid.scheme, FpScheme::CentralCrankNicolson) {
        let max_dt = 0.5 * dx * dx / (sigma * sigma);
        if dt > max_dt {
            return Err(Error::Cfl { dt, max_dt });
        }
    }
    let span = t1 - t0;
    if span < 0.0 {
        return Err(Error::InvalidParameter("t1 must be >= t0".into()));
    }
    let n_steps = (span / dt).round() as usize;
    if ((n_steps as f64) * dt - span).abs() > 1e-9 * (1.0 + span) {
        return Err(Error::GridAlignment { t: t1, dt });
    }

    // Map requested output times onto step indices.
    let mut marks: Vec<usize> = Vec::with_capacity(output_times.len());
    for &t in output_times {
        let k = ((t - t0) / dt).round();
        if (t - t0 - k * dt).abs() > 1e-9 * (1.0 + span) || k < 0.0 || k as usize > n_steps {
            return Err(Error::GridAlignment { t, dt });
        }
        marks.push(k as usize);
    }
    let mut order: Vec<usize> = (0..marks.len()).collect();
    order.sort_by_key(|&i| marks[i]);

    let m = space.n_cells;
    let mut q: Vec<f64> = q0.values().to_vec();
    let mut sol = FpSolution {
        times: Vec::new(),
        snapshots: Vec::new(),
        q_snapshots: Vec::new(),
        shifts: Vec::new(),
        mass_log: Vec::with_capacity(n_steps),
        max_mass_drift: 0.0,
        clamped_mass: 0.0,
        grid: space,
    };

    let mut op_new = Tridiag::zeros(m);
    let mut op_old = Tridiag::zeros(m);
    let mut shift_new = shift_at(t0)?;
    assemble(&mut op_new, potential, shift_new, diffusion, &space);

    let mut next_mark = 0usize;
    let mut record = |k: usize,
                      q: &[f64],
                      shift: f64,
                      next_mark: &mut usize,
                      sol: &mut FpSolution|
     -> Result<()> {
        while *next_mark < order.len() && marks[order[*next_mark]] == k {
            let t = t0 + k as f64 * dt;
            let (p, clamped) = shifted_density(q, &space, shift)?;
            sol.times.push(t);
            sol.snapshots.push(p);
            sol.q_snapshots.push(q.to_vec());
            sol.shifts.push(shift);
            sol.clamped_mass = sol.clamped_mass.max(clamped);
            *next_mark += 1;
        }
        Ok(())
    };
    record(0, &q, shift_new, &mut next_mark, &mut sol)?;

    let mut rhs = vec![0.0; m];
    let mut solver = ThomasWorkspace::new(m);
    for k in 0..n_steps {
        let t_next = t0 + (k as f64 + 1.0) * dt;
        let shift_old = shift_new;
        shift_new = shift_at(t_next)?;
        match grid.scheme {
            FpScheme::ChangCooper => {
                if shift_new != shift_old || k == 0 {
                    assemble(&mut op_new, potential, shift_new, diffusion, &space);
                }
                // (I - dt L(t+dt)) q' = q
                solver.solve_shifted(&op_new, -dt, &q, &mut rhs);
                std::mem::swap(&mut q, &mut rhs);
            }
            FpScheme::CentralCrankNicolson => {
                std::mem::swap(&mut op_old, &mut op_new);
                if shift_new != shift_old || k == 0 {
                    assemble_central(&mut op_new, potential, shift_new, diffusion, &space);
                    if k == 0 {
                        assemble_central(&mut op_old, potential, shift_old, diffusion, &space);
                    }
                } else {
                    op_new.copy_from(&op_old);
                }
                // rhs = (I + dt/2 L(t)) q ; (I - dt/2 L(t+dt)) q' = rhs
                op_old.apply_shifted(0.5 * dt, &q, &mut rhs);
                let tmp = std::mem::take(&mut q);
                q = {
                    let mut out = tmp;
                    solver.solve_shifted(&op_new, -0.5 * dt, &rhs, &mut out);
                    out
                };
            }
        }
        let mass: f64 = q.iter().sum::<f64>() * dx;
        sol.max_mass_drift = sol.max_mass_drift.max((mass - 1.0).abs());
        sol.mass_log.push(mass);
        let edge = (q[0] + q[m - 1]) * dx;
        if edge > BOUNDARY_MASS_LIMIT {
            return Err(Error::Leakage { mass: edge, limit: BOUNDARY_MASS_LIMIT });
        }
        record(k + 1, &q, shift_new, &mut next_mark, &mut sol)?;
    }
    if sol.snapshots.is_empty() {
        record(n_steps, &q, shift_new, &mut next_mark, &mut sol)?;
    }
    Ok(sol)
}

/// Exponential-fitting weight: face value is `delta q_left + (1-delta)
/// q_right` with `delta(w) = 1/w - 1/(e^w - 1)`.
#[inline]
fn cc_delta(w: f64) -> f64 {
    if w.abs() < 1e-4 {
        0.5 - w / 12.0
    } else {
        1.0 / w - 1.0 / w.exp_m1()
    }
}

/// Assemble the flux-form generator L with zero-flux boundaries. Column sums
/// vanish identically, which is what conserves the discrete mass.
fn assemble(op: &mut Tridiag, potential: &Potential, shift: f64, diffusion: f64, space: &GridSpec) {
    assemble_weighted(op, potential, shift, diffusion, space, cc_delta)
}

fn assemble_central(
    op: &mut Tridiag,
    potential: &Potential,
    shift: f64,
    diffusion: f64,
    space: &GridSpec,
) {
    assemble_weighted(op, potential, shift, diffusion, space, |_| 0.5)
}

fn assemble_weighted(
    op: &mut Tridiag,
    potential: &Potential,
    shift: f64,
    diffusion: f64,
    space: &GridSpec,
    weight: impl Fn(f64) -> f64,
) {
    let m = space.n_cells;
    let dx = space.dx();
    op.clear();
    for j in 0..m - 1 {
        let y_face = space.x_min + (j as f64 + 1.0) * dx;
        let a = potential.grad1(y_face + shift);
        let delta = weight(a * dx / diffusion);
        // probability flux through the face: G = alpha q_j + beta q_{j+1}
        let alpha = diffusion / dx - a * delta;
        let beta = -(a * (1.0 - delta) + diffusion / dx);
        op.diag[j] -= alpha / dx;
        op.sup[j] -= beta / dx;
        op.sub[j + 1] += alpha / dx;
        op.diag[j + 1] += beta / dx;
    }
}

/// Tridiagonal operator with `sub[0]` and `sup[m-1]` unused.
struct Tridiag {
    sub: Vec<f64>,
    diag: Vec<f64>,
    sup: Vec<f64>,
}

impl Tridiag {
    fn zeros(m: usize) -> Self {
        Tridiag { sub: vec![0.0; m], diag: vec![0.0; m], sup: vec![0.0; m] }
    }

    fn clear(&mut self) {
        self.sub.fill(0.0);
        self.diag.fill(0.0);
        self.sup.fill(0.0);
    }

    fn copy_from(&mut self, other: &Tridiag) {
        self.sub.copy_from_slice(&other.sub);
        self.diag.copy_from_slice(&other.diag);
        self.sup.copy_from_slice(&other.sup);
    }

    /// out = (I + c L) x
    fn apply_shifted(&self, c: f64, x: &[f64], out: &mut [f64]) {
        let m = x.len();
        for j in 0..m {
            let mut v = (1.0 + c * self.diag[j]) * x[j];
            if j > 0 {
                v += c * self.sub[j] * x[j - 1];
            }
            if j + 1 < m {
                v += c * self.sup[j] * x[j + 1];
            }
            out[j] = v;
        }
    }
}

struct ThomasWorkspace {
    c: Vec<f64>,
    d: Vec<f64>,
}

impl ThomasWorkspace {
    fn new(m: usize) -> Self {
        ThomasWorkspace { c: vec![0.0; m], d: vec![0.0; m] }
    }

    /// Solve (I + c L) out = rhs.
    fn solve_shifted(&mut self, op: &Tridiag, c: f64, rhs: &[f64], out: &mut [f64]) {
        let m = rhs.len();
        let b0 = 1.0 + c * op.diag[0];
        self.c[0] = c * op.sup[0] / b0;
        self.d[0] = rhs[0] / b0;
        for j in 1..m {
            let a = c * op.sub[j];
            let b = 1.0 + c * op.diag[j];
            let denom = b - a * self.c[j - 1];
            self.c[j] = if j + 1 < m { c * op.sup[j] / denom } else { 0.0 };
            self.d[j] = (rhs[j] - a * self.d[j - 1]) / denom;
        }
        out[m - 1] = self.d[m - 1];
        for j in (0..m - 1).rev() {
            out[j] = self.d[j] - self.c[j] * out[j + 1];
        }
    }
}

/// Shift a solver-side density back to original coordinates,
/// `p(x) = q(x - s)`, by linear interpolation of cell values. Returns the
/// density plus the clamped negative mass.
fn shifted_density(q: &[f64], space: &GridSpec, s: f64) -> Result<(GridDensity, f64)> {
    let m = q.len();
    let dx = space.dx();
    let mut clamped = 0.0f64;
    let values: Vec<f64> = if s.abs() < 1e-14 {
        q.iter()
            .map(|&v| {
                if v < 0.0 {
                    clamped += -v * dx;
                    0.0
                } else {
                    v
                }
            })
            .collect()
    } else {
        let si = s / dx;
        (0..m)
            .map(|j| {
                let u = j as f64 - si;
                let base = u.floor();
                let frac = u - base;
                let k = base as isize;
                let lo = if k >= 0 && (k as usize) < m { q[k as usize] } else { 0.0 };
                let hi = if k + 1 >= 0 && ((k + 1) as usize) < m { q[(k + 1) as usize] } else { 0.0 };
                let v = lo * (1.0 - frac) + hi * frac;
                if v < 0.0 {
                    clamped += -v * dx;
                    0.0
                } else {
                    v
                }
            })
            .collect()
    };
    Ok((GridDensity::from_values(*space, values)?, clamped))
}

/// Half-width for a solver domain: `n_sigmas` stationary standard deviations
/// plus the largest coordinate shift `|eta (beta(t) - beta(t0))|` over the
/// run window (the shifted-coordinate density drifts by exactly that much).
pub fn domain_half_width(
    spec: &SdeSpec,
    beta: &BrownianPath,
    t0: f64,
    t1: f64,
    n_sigmas: f64,
) -> Result<f64> {
    let sigma = spec.sigma1();
    let eta = spec.eta1();
    let s2 = sigma * sigma + eta * eta;
    let core = n_sigmas * spec.potential.stationary_std_estimate(s2);
    let anchor = beta.value_at(t0, 0)?;
    let steps = ((t1 - t0) / beta.dt()).ceil() as usize;
    let mut max_shift = 0.0f64;
    for k in 0..=steps {
        let t = (t0 + k as f64 * beta.dt()).min(t1);
        max_shift = max_shift.max((eta * (beta.value_at(t, 0)? - anchor)).abs());
    }
    Ok(core + max_shift)
}

/// Tail-flux diagnostic: the time integral over the annulus
/// `N <= |y| < 2N` (N = half the representable radius) of
/// `|y|^{-1} |U'(y, t)| |q|`. Near zero for well-resolved probability
/// solutions; order one when the domain truncates the solution.
pub fn check_wic(sol: &FpSolution, potential: &Potential) -> f64 {
    let space = sol.grid;
    let dx = space.dx();
    let radius = space.x_min.abs().min(space.x_max.abs());
    let annulus_lo = 0.5 * radius;
    let per_snapshot: Vec<f64> = (0..sol.times.len())
        .map(|k| {
            let (q, shift) = sol.q_snapshot(k);
            let mut acc = 0.0;
            for (j, qv) in q.iter().enumerate() {
                let y = space.center(j);
                if y.abs() >= annulus_lo && y.abs() < radius {
                    acc += potential.grad1(y + shift).abs() / y.abs() * qv.abs() * dx;
                }
            }
            acc
        })
        .collect();
    if per_snapshot.len() < 2 {
        return per_snapshot.first().copied().unwrap_or(0.0);
    }
    let mut integral = 0.0;
    for k in 0..per_snapshot.len() - 1 {
        let h = sol.times[k + 1] - sol.times[k];
        integral += 0.5 * (per_snapshot[k] + per_snapshot[k + 1]) * h;
    }
    integral
}

/// Distance between the one-shot solve over `[0, t_end]` and the composition
/// through `t_mid` using the shifted path for the second leg. Zero up to
/// discretisation by the flow property of the equation.
pub fn cocycle_check(
    spec: &SdeSpec,
    beta: &BrownianPath,
    q0: &GridDensity,
    t_mid: f64,
    t_end: f64,
    grid: &FpGrid,
) -> Result<f64> {
    if !(0.0 < t_mid && t_mid < t_end) {
        return Err(Error::InvalidParameter("need 0 < t_mid < t_end".into()));
    }
    let direct = solve_nonautonomous(q0, spec, beta, 0.0, t_end, grid, &[t_end])?;
    let leg1 = solve_nonautonomous(q0, spec, beta, 0.0, t_mid, grid, &[t_mid])?;
    let shifted = beta.wiener_shift(t_mid)?;
    let leg2 = solve_nonautonomous(
        leg1.final_density(),
        spec,
        &shifted,
        0.0,
        t_end - t_mid,
        grid,
        &[t_end - t_mid],
    )?;
    direct.final_density().l1_distance(leg2.final_density())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ou;
    use crate::potentials::Potential;
    use approx::assert_relative_eq;

    fn ou_spec(a: f64, sigma: f64, eta: f64) -> SdeSpec {
        SdeSpec::scalar(Potential::quadratic(a).unwrap(), sigma, eta).unwrap()
    }

    #[test]
    fn autonomous_ou_relaxation_matches_exact_law() {
        let space = GridSpec::new(-5.0, 5.0, 800).unwrap();
        let grid = FpGrid { space, dt: 1e-3, scheme: FpScheme::ChangCooper };
        let q0 = GridDensity::gaussian(space, 0.8, 0.05).unwrap();
        let sol = autonomous_solve(&q0, &Potential::quadratic(1.0).unwrap(), 1.0, 0.0, 1.0, &grid, &[0.5, 1.0])
            .unwrap();
        // exact: mean 0.8 e^{-t}, variance 0.05 e^{-2t} + (1 - e^{-2t})/2
        for (i, &t) in sol.times.iter().enumerate() {
            let mean = 0.8 * (-t as f64).exp();
            let var = 0.05 * (-2.0 * t).exp() + 0.5 * (1.0 - (-2.0 * t).exp());
            let exact = GridDensity::gaussian(space, mean, var).unwrap();
            let err = sol.snapshots[i].l1_distance(&exact).unwrap();
            assert!(err < 2e-3, "t={t}: L1 {err}");
        }
        assert!(sol.max_mass_drift < 1e-10);
    }

    #[test]
    fn double_well_stationary_density_is_a_fixed_point() {
        let space = GridSpec::new(-4.0, 4.0, 800).unwrap();
        let grid = FpGrid { space, dt: 1e-3, scheme: FpScheme::ChangCooper };
        let stat = ou::dw_stationary_density(1.0, 1.0, space).unwrap();
        let pot = Potential::double_well(1.0).unwrap();
        let sol = autonomous_solve(&stat, &pot, 1.0, 0.0, 1.0, &grid, &[1.0]).unwrap();
        let drift = sol.final_density().l1_distance(&stat).unwrap();
        assert!(drift < 1e-4, "stationary drift {drift}");
    }

    #[test]
    fn nonautonomous_matches_ou_oracle() {
        let a = 1.0;
        let sigma = 1.0;
        let eta = 0.5;
        let spec = ou_spec(a, sigma, eta);
        let params = ou::OuParams::new(a, sigma, eta).unwrap();
        let beta = BrownianPath::sample(31, 1, 0.0, 1.0, 1e-3).unwrap();
        let space = GridSpec::new(-5.0, 5.0, 1000).unwrap();
        let grid = FpGrid { space, dt: 1e-3, scheme: FpScheme::ChangCooper };
        // start from the exact transition density a short time after a delta
        let x0 = 0.3;
        let t_start = 0.1;
        let q0 = ou::transition_density(&params, &beta, t_start, 0.0, x0, space).unwrap();
        let sol = solve_nonautonomous(&q0, &spec, &beta, t_start, 1.0, &grid, &[1.0]).unwrap();
        let oracle = ou::transition_density(&params, &beta, 1.0, 0.0, x0, space).unwrap();
        let err = sol.final_density().l1_distance(&oracle).unwrap();
        assert!(err < 5e-3, "L1 vs oracle {err}");
        assert!(sol.max_mass_drift < 1e-10);
    }

    #[test]
    fn central_crank_nicolson_agrees_with_chang_cooper() {
        let space = GridSpec::new(-5.0, 5.0, 400).unwrap();
        let dt_cn = 0.5 * space.dx() * space.dx(); // sigma = 1 guard
        let q0 = GridDensity::gaussian(space, 0.5, 0.1).unwrap();
        let pot = Potential::quadratic(1.0).unwrap();
        let cc = FpGrid { space, dt: dt_cn, scheme: FpScheme::ChangCooper };
        let cn = FpGrid { space, dt: dt_cn, scheme: FpScheme::CentralCrankNicolson };
        let t1 = (dt_cn * ((0.5 / dt_cn) as usize as f64) * 1e12).round() / 1e12;
        let a = autonomous_solve(&q0, &pot, 1.0, 0.0, t1, &cc, &[t1]).unwrap();
        let b = autonomous_solve(&q0, &pot, 1.0, 0.0, t1, &cn, &[t1]).unwrap();
        let gap = a.final_density().l1_distance(b.final_density()).unwrap();
        assert!(gap < 5e-3, "scheme gap {gap}");
        // CFL guard fires above the limit
        let bad = FpGrid { space, dt: 10.0 * dt_cn, scheme: FpScheme::CentralCrankNicolson };
        assert!(matches!(
            autonomous_solve(&q0, &pot, 1.0, 0.0, 0.5, &bad, &[0.5]),
            Err(Error::Cfl { .. })
        ));
    }

    #[test]
    fn mass_is_conserved_per_step() {
        let space = GridSpec::new(-4.0, 4.0, 512).unwrap();
        let grid = FpGrid { space, dt: 1e-3, scheme: FpScheme::ChangCooper };
        let q0 = ou::dw_stationary_density(1.0, 0.8, space).unwrap();
        let spec = SdeSpec::scalar(Potential::double_well(1.0).unwrap(), 0.8, 0.4).unwrap();
        let beta = BrownianPath::sample(3, 1, 0.0, 2.0, 1e-3).unwrap();
        let sol = solve_nonautonomous(&q0, &spec, &beta, 0.0, 2.0, &grid, &[2.0]).unwrap();
        assert_eq!(sol.mass_log.len(), 2000);
        for m in &sol.mass_log {
            assert!((m - 1.0).abs() < 1e-10);
        }
        // positivity of the Chang-Cooper solution
        assert!(sol.final_density().values().iter().all(|v| *v >= 0.0));
    }

    #[test]
    fn leakage_guard_fires_on_a_too_small_domain() {
        let space = GridSpec::new(-1.2, 1.2, 120).unwrap();
        let grid = FpGrid { space, dt: 1e-3, scheme: FpScheme::ChangCooper };
        let q0 = GridDensity::gaussian(space, 0.0, 0.05).unwrap();
        // diffusion 1 spreads well past |x| = 1.2 for the weak quadratic trap
        let pot = Potential::quadratic(0.05).unwrap();
        let err = autonomous_solve(&q0, &pot, 1.0, 0.0, 3.0, &grid, &[3.0]);
        assert!(matches!(err, Err(Error::Leakage { .. })));
    }

    #[test]
    fn wic_diagnostic() {
        // the annulus starts at half the domain radius; it must sit in the
        // tail for a resolved run, hence the wide grid
        let space = GridSpec::new(-6.0, 6.0, 768).unwrap();
        let grid = FpGrid { space, dt: 1e-3, scheme: FpScheme::ChangCooper };
        let pot = Potential::double_well(1.0).unwrap();
        let q0 = ou::dw_stationary_density(1.0, 0.5, space).unwrap();
        let times: Vec<f64> = (0..=10).map(|k| 0.1 * k as f64).collect();
        let sol = autonomous_solve(&q0, &pot, 0.5, 0.0, 1.0, &grid, &times).unwrap();
        let wic = check_wic(&sol, &pot);
        assert!(wic < 1e-6, "wic {wic}");

        // compactly supported density inside the annulus: exactly zero
        let narrow = GridDensity::gaussian(space, 0.0, 0.01).unwrap();
        let short = autonomous_solve(&narrow, &pot, 0.5, 0.0, 0.01, &grid, &[0.0, 0.01]).unwrap();
        let spot = check_wic(&short, &pot);
        assert!(spot < 1e-12);

        // truncated domain: the diagnostic is orders of magnitude larger
        let tight = GridSpec::new(-1.5, 1.5, 150).unwrap();
        let tgrid = FpGrid { space: tight, dt: 1e-3, scheme: FpScheme::ChangCooper };
        let tq0 = GridDensity::gaussian(tight, 0.0, 0.2).unwrap();
        // strong noise pushes mass against the wall; run shortly before the
        // leakage guard would trip
        let tsol = autonomous_solve(&tq0, &pot, 2.0, 0.0, 0.05, &tgrid, &[0.0, 0.025, 0.05]);
        if let Ok(tsol) = tsol {
            assert!(check_wic(&tsol, &pot) > 1e-3);
        }
    }

    #[test]
    fn cocycle_identity_beta_zero_is_exact() {
        let space = GridSpec::new(-5.0, 5.0, 500).unwrap();
        let grid = FpGrid { space, dt: 1e-3, scheme: FpScheme::ChangCooper };
        let spec = ou_spec(1.0, 1.0, 0.0); // eta = 0 makes the shift vanish
        let beta = BrownianPath::sample(8, 1, 0.0, 1.0, 1e-3).unwrap();
        let q0 = GridDensity::gaussian(space, 0.4, 0.1).unwrap();
        let gap = cocycle_check(&spec, &beta, &q0, 0.5, 1.0, &grid).unwrap();
        assert!(gap < 1e-10, "gap {gap}");
    }

    #[test]
    fn cocycle_identity_sampled_beta_at_discretisation_level() {
        let space = GridSpec::new(-5.0, 5.0, 4096).unwrap();
        let grid = FpGrid { space, dt: 1e-3, scheme: FpScheme::ChangCooper };
        let spec = ou_spec(1.0, 1.0, 0.5);
        let beta = BrownianPath::sample(77, 1, 0.0, 1.0, 1e-3).unwrap();
        let q0 = GridDensity::gaussian(space, 0.0, 0.2).unwrap();
        let gap = cocycle_check(&spec, &beta, &q0, 0.5, 1.0, &grid).unwrap();
        assert!(gap < 5e-6, "gap {gap}");
    }
}
