//! Constructive contraction rates for the reflection-coupling comparison
//! method, and empirical verification of the resulting decay envelope.
//!
//! Distances between states are always measured in the sigma-weighted norm
//! `|x - y| / sigma`. The curvature profile
//!
//! ```text
//! k(r) = inf { 2 (V'(x) - V'(y)) / (x - y) : |x - y| = sigma r }
//! ```
//!
//! feeds the comparison-function construction: `phi(r) = exp(-1/4 int_0^r s
//! k^-(s) ds)`, its antiderivative `Phi`, a decreasing weight `g` with
//! `g(0) = 1`, `g >= 1/2`, and the concave distance profile `f' = phi g`.
//! Two radii enter: `R0`, beyond which `k >= 0`, and `R1 >= R0`, beyond which
//! `k(r) R (R - R0) >= 8`. The decay rate is `c = 1 / (alpha int_0^R1
//! Phi/phi)` with `alpha = 1` in one dimension. Evolved from any two initial
//! laws under one common-noise realisation, the exact Wasserstein-1 distance
//! then obeys `W1(t) <= K e^{-c t} W1(0)` with the bridge constant
//! `K = 2 / phi(R0)`, which is what [`verify_contraction`] checks.

use crate::density::GridDensity;
use crate::error::{Error, Result};
use crate::noise::BrownianPath;
use crate::potentials::Potential;
use crate::sde::{evolve_ensemble, ParticleEnsemble, SdeSpec};
use crate::density::InitialCondition;
use serde::Serialize;
use std::io::Write;

/// Tabulated comparison-function data plus the derived constants.
#[derive(Clone, Debug)]
pub struct ContractionProfile {
    pub r_grid: Vec<f64>,
    pub k: Vec<f64>,
    pub phi: Vec<f64>,
    pub big_phi: Vec<f64>,
    pub g: Vec<f64>,
    pub f: Vec<f64>,
    pub f_prime: Vec<f64>,
    pub r0: f64,
    pub r1: f64,
    pub alpha: f64,
    pub c: f64,
    /// Intrinsic amplitude defining the weighted norm.
    pub sigma: f64,
}

/// Constants block for JSON export.
#[derive(Clone, Copy, Debug, Serialize)]
pub struct ContractionConstants {
    pub r0: f64,
    pub r1: f64,
    pub alpha: f64,
    pub c: f64,
}

impl ContractionProfile {
    pub fn constants(&self) -> ContractionConstants {
        ContractionConstants { r0: self.r0, r1: self.r1, alpha: self.alpha, c: self.c }
    }

    /// phi(R0) = the constant tail value of phi.
    pub fn phi_r0(&self) -> f64 {
        *self.phi.last().expect("non-empty profile")
    }

    /// Bridge constant `K = 2 / phi(R0)` between the f-cost and W1.
    pub fn bridge_constant(&self) -> f64 {
        2.0 / self.phi_r0()
    }

    /// f evaluated at any radius: linear interpolation on the grid and a
    /// linear tail with the limiting slope `phi(R0)/2`.
    pub fn f_at(&self, r: f64) -> f64 {
        if r <= 0.0 {
            return 0.0;
        }
        let n = self.r_grid.len();
        let last = self.r_grid[n - 1];
        if r >= last {
            return self.f[n - 1] + (r - last) * self.f_prime[n - 1];
        }
        let idx = match self.r_grid.binary_search_by(|v| v.total_cmp(&r)) {
            Ok(i) => return self.f[i],
            Err(i) => i,
        };
        let (rl, rh) = (self.r_grid[idx - 1], self.r_grid[idx]);
        let w = (r - rl) / (rh - rl);
        self.f[idx - 1] * (1.0 - w) + self.f[idx] * w
    }

    /// Quantile-coupling upper bound for the f-cost transport distance
    /// between two grid densities.
    pub fn wf_upper(&self, d1: &GridDensity, d2: &GridDensity) -> Result<f64> {
        d1.coupling_cost_upper(d2, |r| self.f_at(r), self.sigma)
    }

    /// `r, k, phi, Phi, g, f` rows.
    pub fn to_csv<W: Write>(&self, mut w: W) -> Result<()> {
        writeln!(w, "schema_version,r,k,phi,Phi,g,f")?;
        for i in 0..self.r_grid.len() {
            writeln!(
                w,
                "1,{:.17e},{:.17e},{:.17e},{:.17e},{:.17e},{:.17e}",
                self.r_grid[i], self.k[i], self.phi[i], self.big_phi[i], self.g[i], self.f[i]
            )?;
        }
        Ok(())
    }

    fn validate(&self) -> Result<()> {
        let tol = 1e-9;
        if (self.f_prime[0] - 1.0).abs() > tol || self.f[0] != 0.0 {
            return Err(Error::Contraction("f must satisfy f(0) = 0, f'(0) = 1".into()));
        }
        let floor = 0.5 * self.phi_r0();
        for i in 0..self.r_grid.len() {
            if self.f_prime[i] > 1.0 + tol || self.f_prime[i] < floor - tol {
                return Err(Error::Contraction(format!(
                    "f' out of [phi(R0)/2, 1] at r = {}",
                    self.r_grid[i]
                )));
            }
            if i > 0 && self.f_prime[i] > self.f_prime[i - 1] + tol {
                return Err(Error::Contraction("f not concave".into()));
            }
            if self.f[i] > self.big_phi[i] + tol || self.f[i] < 0.5 * self.big_phi[i] - tol {
                return Err(Error::Contraction("f outside [Phi/2, Phi]".into()));
            }
            if self.r_grid[i] >= self.r0 && (self.phi[i] - self.phi_r0()).abs() > 1e-6 * self.phi_r0()
            {
                return Err(Error::Contraction("phi not constant beyond R0".into()));
            }
        }
        if !(self.c > 0.0) || !self.c.is_finite() {
            return Err(Error::Contraction(format!("invalid rate c = {}", self.c)));
        }
        Ok(())
    }
}

/// Infimum of `2 (V'(x) - V'(y)) / (x - y)` over pairs with `|x - y| =
/// sigma r`, by a midpoint grid search refined with golden sections. The
/// search window doubles if the infimum is attained at its edge.
pub fn curvature_at(potential: &Potential, sigma: f64, r: f64) -> Result<f64> {
    if r == 0.0 {
        return Ok(2.0 * potential.min_second_derivative());
    }
    let h = 0.5 * sigma * r;
    let slope = |m: f64| 2.0 * (potential.grad1(m + h) - potential.grad1(m - h)) / (sigma * r);
    let mut window = 3.0 * (potential.convexity_radius() + 1.0);
    for _ in 0..4 {
        let n = 20_000;
        let step = 2.0 * window / n as f64;
        let mut best = f64::INFINITY;
        let mut best_i = 0usize;
        for i in 0..=n {
            let v = slope(-window + step * i as f64);
            if v < best {
                best = v;
                best_i = i;
            }
        }
        // Widen only when the infimum genuinely escapes: a descending edge.
        // A flat profile (quadratic drift) ties everywhere and stays put.
        let scale = 1.0 + best.abs();
        if (best_i == 0 && slope(-window + step) > best + 1e-12 * scale)
            || (best_i == n && slope(window - step) > best + 1e-12 * scale)
        {
            window *= 2.0;
            continue;
        }
        let best_i = best_i.clamp(1, n - 1);
        // golden-section polish inside the bracketing cells
        let mut lo = -window + step * (best_i - 1) as f64;
        let mut hi = -window + step * (best_i + 1) as f64;
        let inv_gold = 0.618_033_988_749_894_9;
        let mut m1 = hi - inv_gold * (hi - lo);
        let mut m2 = lo + inv_gold * (hi - lo);
        let mut f1 = slope(m1);
        let mut f2 = slope(m2);
        for _ in 0..80 {
            if f1 <= f2 {
                hi = m2;
                m2 = m1;
                f2 = f1;
                m1 = hi - inv_gold * (hi - lo);
                f1 = slope(m1);
            } else {
                lo = m1;
                m1 = m2;
                f1 = f2;
                m2 = lo + inv_gold * (hi - lo);
                f2 = slope(m2);
            }
        }
        return Ok(best.min(f1).min(f2));
    }
    Err(Error::Contraction(format!(
        "curvature infimum attained at the search boundary for r = {r}"
    )))
}

/// k(r) tabulated on a radius grid.
pub fn compute_k(potential: &Potential, sigma: f64, r_grid: &[f64]) -> Result<Vec<f64>> {
    if !(sigma > 0.0) {
        return Err(Error::Contraction("weighted norm needs sigma > 0".into()));
    }
    r_grid.iter().map(|&r| curvature_at(potential, sigma, r)).collect()
}

/// Build the full comparison-function profile for a 1-d potential.
pub fn build_profile(potential: &Potential, sigma: f64) -> Result<ContractionProfile> {
    if !(sigma > 0.0) {
        return Err(Error::Contraction("weighted norm needs sigma > 0".into()));
    }
    // Provisional scan to locate R0 and R1; widen until the tail is safely
    // positive (convexity at infinity).
    let mut r_hi = 8.0 * (potential.convexity_radius() / sigma + 1.0);
    let mut scan: Vec<(f64, f64)> = Vec::new();
    let mut r0 = 0.0;
    let mut r1 = None;
    for _ in 0..8 {
        let n = 2048;
        scan = (0..=n)
            .map(|i| {
                let r = r_hi * i as f64 / n as f64;
                Ok((r, curvature_at(potential, sigma, r)?))
            })
            .collect::<Result<_>>()?;
        let tail_ok = scan[(7 * n / 8)..].iter().all(|(_, k)| *k > 0.0);
        if !tail_ok {
            r_hi *= 2.0;
            continue;
        }
        // R0: last downward crossing of zero.
        r0 = match scan.iter().rposition(|(_, k)| *k < 0.0) {
            None => 0.0,
            Some(i) if i + 1 >= scan.len() => {
                r_hi *= 2.0;
                continue;
            }
            Some(i) => {
                let (mut lo, mut hi) = (scan[i].0, scan[i + 1].0);
                for _ in 0..100 {
                    let mid = 0.5 * (lo + hi);
                    if curvature_at(potential, sigma, mid)? < 0.0 {
                        lo = mid;
                    } else {
                        hi = mid;
                    }
                }
                0.5 * (lo + hi)
            }
        };
        // R1: smallest R >= R0 with inf_{r >= R} k(r) * R (R - R0) >= 8.
        let mut suffix = vec![f64::INFINITY; scan.len()];
        let mut acc = f64::INFINITY;
        for (i, (_, k)) in scan.iter().enumerate().rev() {
            acc = acc.min(*k);
            suffix[i] = acc;
        }
        let cond = |r: f64| -> Result<f64> {
            let tail = match scan.iter().position(|(s, _)| *s >= r) {
                Some(i) => suffix[i],
                None => f64::INFINITY,
            };
            Ok(curvature_at(potential, sigma, r)?.min(tail) * r * (r - r0) - 8.0)
        };
        if cond(r_hi)? < 0.0 {
            r_hi *= 2.0;
            continue;
        }
        let (mut lo, mut hi) = (r0.max(1e-12), r_hi);
        if cond(lo)? >= 0.0 {
            r1 = Some(lo);
            break;
        }
        for _ in 0..100 {
            let mid = 0.5 * (lo + hi);
            if cond(mid)? >= 0.0 {
                hi = mid;
            } else {
                lo = mid;
            }
        }
        r1 = Some(hi);
        break;
    }
    let r1 = r1.ok_or_else(|| {
        Error::Contraction("k(r) has no positive tail: potential not convex at infinity".into())
    })?;

    // Final tabulation grid: 0 plus a logarithmic range up to 4 R1.
    let n = 4000;
    let lo = 1e-3;
    let hi = 4.0 * r1;
    let mut r_grid = Vec::with_capacity(n + 1);
    r_grid.push(0.0);
    let ratio = (hi / lo).powf(1.0 / (n as f64 - 1.0));
    let mut r = lo;
    for _ in 0..n {
        r_grid.push(r);
        r *= ratio;
    }
    // ensure R1 and R0 are grid nodes so the rate integral is exact there
    for special in [r0, r1] {
        if special > 0.0 {
            let pos = r_grid.partition_point(|v| *v < special);
            if pos == r_grid.len() || (r_grid[pos] - special).abs() > 1e-14 {
                r_grid.insert(pos, special);
            }
        }
    }
    let k = compute_k(potential, sigma, &r_grid)?;

    // phi = exp(-1/4 cumint s k^-(s) ds); Phi = cumint phi.
    let m = r_grid.len();
    let mut phi = vec![1.0; m];
    let mut cum = 0.0;
    for i in 1..m {
        let h = r_grid[i] - r_grid[i - 1];
        let a = r_grid[i - 1] * (-k[i - 1]).max(0.0);
        let b = r_grid[i] * (-k[i]).max(0.0);
        cum += 0.5 * (a + b) * h;
        phi[i] = (-0.25 * cum).exp();
    }
    let mut big_phi = vec![0.0; m];
    for i in 1..m {
        let h = r_grid[i] - r_grid[i - 1];
        big_phi[i] = big_phi[i - 1] + 0.5 * (phi[i - 1] + phi[i]) * h;
    }

    // rate integral int_0^R1 Phi/phi and the running version for g
    let ratio_fn: Vec<f64> = big_phi.iter().zip(&phi).map(|(bp, p)| bp / p).collect();
    let i1 = r_grid.partition_point(|v| *v < r1 - 1e-15);
    let mut rate_integral = 0.0;
    let mut running = vec![0.0; m];
    for i in 1..m {
        let h = r_grid[i] - r_grid[i - 1];
        running[i] = running[i - 1] + 0.5 * (ratio_fn[i - 1] + ratio_fn[i]) * h;
    }
    rate_integral += running[i1.min(m - 1)];
    let alpha = 1.0;
    let c = 1.0 / (alpha * rate_integral);

    // g decreases from 1 to 1/2 over [0, R1], constant after.
    let g: Vec<f64> = (0..m)
        .map(|i| {
            let cumulative = running[i.min(i1)];
            (1.0 - 0.5 * cumulative / rate_integral).clamp(0.5, 1.0)
        })
        .collect();

    let f_prime: Vec<f64> = phi.iter().zip(&g).map(|(p, gv)| p * gv).collect();
    let mut f = vec![0.0; m];
    for i in 1..m {
        let h = r_grid[i] - r_grid[i - 1];
        f[i] = f[i - 1] + 0.5 * (f_prime[i - 1] + f_prime[i]) * h;
    }

    let profile = ContractionProfile {
        r_grid,
        k,
        phi,
        big_phi,
        g,
        f,
        f_prime,
        r0,
        r1,
        alpha,
        c,
        sigma,
    };
    profile.validate()?;
    Ok(profile)
}

/// One checkpoint of the decay-envelope verification.
#[derive(Clone, Copy, Debug, Serialize)]
pub struct EnvelopePoint {
    pub t: f64,
    pub w1_sigma: f64,
    pub bound: f64,
    pub ok: bool,
}

/// Result of [`verify_contraction`].
#[derive(Clone, Debug, Serialize)]
pub struct ContractionReport {
    pub w0_sigma: f64,
    pub rate: f64,
    pub bridge_constant: f64,
    pub slack: f64,
    pub points: Vec<EnvelopePoint>,
    pub all_ok: bool,
}

/// Exact empirical W1 between two equally sized samples (sorted matching).
pub fn w1_samples(a: &[f64], b: &[f64]) -> Result<f64> {
    if a.len() != b.len() || a.is_empty() {
        return Err(Error::InvalidParameter("samples must be equally sized and non-empty".into()));
    }
    let mut xs = a.to_vec();
    let mut ys = b.to_vec();
    xs.sort_by(|u, v| u.total_cmp(v));
    ys.sort_by(|u, v| u.total_cmp(v));
    Ok(xs.iter().zip(&ys).map(|(u, v)| (u - v).abs()).sum::<f64>() / a.len() as f64)
}

/// Evolve two initial laws under the same common-noise path (independent
/// intrinsic streams) and check the decay envelope
/// `W1_sigma(t) <= slack * K * e^{-c t} * W1_sigma(0)` at the checkpoints.
#[allow(clippy::too_many_arguments)]
pub fn verify_contraction(
    spec: &SdeSpec,
    beta: &BrownianPath,
    mu0: &InitialCondition,
    nu0: &InitialCondition,
    profile: &ContractionProfile,
    checkpoints: &[f64],
    dt: f64,
    n_particles: usize,
    seed_mu: u64,
    seed_nu: u64,
) -> Result<ContractionReport> {
    if checkpoints.is_empty() || checkpoints.windows(2).any(|w| w[1] <= w[0]) {
        return Err(Error::InvalidParameter("checkpoints must be increasing".into()));
    }
    if checkpoints[0] <= 0.0 {
        return Err(Error::InvalidParameter("checkpoints must be positive".into()));
    }
    let slack = 1.1;
    let mut mu = ParticleEnsemble::sample(mu0, n_particles, 1, seed_mu, 0.0)?;
    let mut nu = ParticleEnsemble::sample(nu0, n_particles, 1, seed_nu, 0.0)?;
    let w0 = w1_samples(mu.positions(), nu.positions())? / profile.sigma;
    let k_bridge = profile.bridge_constant();
    let mut points = Vec::with_capacity(checkpoints.len());
    let mut t_prev = 0.0;
    for &t in checkpoints {
        mu = evolve_ensemble(&mu, spec, beta, t_prev, t, dt)?;
        nu = evolve_ensemble(&nu, spec, beta, t_prev, t, dt)?;
        let w = w1_samples(mu.positions(), nu.positions())? / profile.sigma;
        let bound = slack * k_bridge * (-profile.c * t).exp() * w0;
        points.push(EnvelopePoint { t, w1_sigma: w, bound, ok: w <= bound });
        t_prev = t;
    }
    let all_ok = points.iter().all(|p| p.ok);
    Ok(ContractionReport {
        w0_sigma: w0,
        rate: profile.c,
        bridge_constant: k_bridge,
        slack,
        points,
        all_ok,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::density::GridSpec;
    use approx::assert_relative_eq;

    #[test]
    fn quadratic_curvature_is_constant() {
        let pot = Potential::quadratic(1.5).unwrap();
        for sigma in [0.5, 1.0, 2.0] {
            let r_grid: Vec<f64> = (0..50).map(|i| 0.01 + 0.2 * i as f64).collect();
            let k = compute_k(&pot, sigma, &r_grid).unwrap();
            for v in k {
                assert!((v - 3.0).abs() < 1e-12, "k {v}");
            }
        }
    }

    #[test]
    fn double_well_curvature_matches_closed_form() {
        // k(r) = sigma^2 r^2 / 2 - 2a (worst midpoint at the origin)
        let pot = Potential::double_well(1.0).unwrap();
        let sigma = 1.0;
        for r in [0.0, 0.05, 0.5, 1.0, 2.0, 3.0, 5.0] {
            let k = curvature_at(&pot, sigma, r).unwrap();
            let exact = 0.5 * sigma * sigma * r * r - 2.0;
            assert_relative_eq!(k, exact, epsilon = 1e-9);
        }
        // small r recovers twice the curvature minimum; large r is positive
        assert_relative_eq!(curvature_at(&pot, 1.0, 1e-6).unwrap(), -2.0, epsilon = 1e-6);
        assert!(curvature_at(&pot, 1.0, 4.0).unwrap() > 0.0);
    }

    #[test]
    fn quadratic_profile_closed_form() {
        // a = 1, sigma = 1: k = 2, R0 = 0, phi = 1, Phi(r) = r, R1 = 2,
        // int_0^2 s ds = 2, c = 1/2
        let profile = build_profile(&Potential::quadratic(1.0).unwrap(), 1.0).unwrap();
        assert!(profile.r0.abs() < 1e-9);
        assert_relative_eq!(profile.r1, 2.0, epsilon = 1e-9);
        assert_relative_eq!(profile.c, 0.5, epsilon = 1e-9);
        assert_relative_eq!(profile.alpha, 1.0);
        assert!(profile.phi.iter().all(|p| (p - 1.0).abs() < 1e-12));
        for (r, bp) in profile.r_grid.iter().zip(&profile.big_phi) {
            assert!((bp - r).abs() < 1e-12);
        }
        // general a: c = a/2 and R1 = 2/sqrt(a)
        for a in [0.25, 2.0] {
            let p = build_profile(&Potential::quadratic(a).unwrap(), 1.0).unwrap();
            assert_relative_eq!(p.c, 0.5 * a, max_relative = 1e-9);
            assert_relative_eq!(p.r1, 2.0 / a.sqrt(), max_relative = 1e-9);
        }
    }

    #[test]
    fn double_well_profile_invariants() {
        let profile = build_profile(&Potential::double_well(1.0).unwrap(), 1.0).unwrap();
        // R0 = 2 sqrt(a) / sigma for the closed-form curvature
        assert_relative_eq!(profile.r0, 2.0, epsilon = 1e-6);
        assert!(profile.r1 > profile.r0);
        assert!(profile.c > 0.0 && profile.c < 1.0);
        // phi(R0) = exp(-1/4 int_0^2 s (2 - s^2/2) ds) = exp(-1/2)
        assert_relative_eq!(profile.phi_r0(), (-0.5f64).exp(), max_relative = 1e-4);
        // invariants are checked at construction; spot check the sandwich
        for i in 0..profile.r_grid.len() {
            assert!(profile.f[i] <= profile.big_phi[i] + 1e-12);
            assert!(profile.f[i] >= 0.5 * profile.big_phi[i] - 1e-12);
        }
    }

    /// Independent oracle for the double-well rate at a = sigma = 1, built
    /// from the closed-form curvature k(r) = r^2/2 - 2 on a dense uniform
    /// grid (no shared code with `build_profile`).
    fn dw_rate_oracle() -> (f64, f64) {
        // R1 solves (R^2/2 - 2) R (R - 2) = 8 beyond R0 = 2.
        let cond = |r: f64| (0.5 * r * r - 2.0) * r * (r - 2.0) - 8.0;
        let (mut lo, mut hi) = (2.0f64, 8.0f64);
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            if cond(mid) >= 0.0 {
                hi = mid;
            } else {
                lo = mid;
            }
        }
        let r1 = 0.5 * (lo + hi);
        let phi = |r: f64| {
            let rc = r.min(2.0);
            (-0.25 * (rc * rc - rc.powi(4) / 8.0)).exp()
        };
        let n = 400_000;
        let h = r1 / n as f64;
        let mut big_phi = 0.0;
        let mut rate_integral = 0.0;
        let mut prev_phi = phi(0.0);
        let mut prev_ratio = 0.0;
        for i in 1..=n {
            let r = h * i as f64;
            let p = phi(r);
            big_phi += 0.5 * (prev_phi + p) * h;
            let ratio = big_phi / p;
            rate_integral += 0.5 * (prev_ratio + ratio) * h;
            prev_phi = p;
            prev_ratio = ratio;
        }
        (r1, 1.0 / rate_integral)
    }

    #[test]
    fn double_well_rate_matches_independent_oracle() {
        let (r1_exact, c_exact) = dw_rate_oracle();
        let p = build_profile(&Potential::double_well(1.0).unwrap(), 1.0).unwrap();
        assert_relative_eq!(p.r1, r1_exact, max_relative = 1e-6);
        assert_relative_eq!(p.c, c_exact, max_relative = 0.01);
        // monotonicity in the well depth: wider non-convex region, smaller c
        let c_shallow = build_profile(&Potential::double_well(0.5).unwrap(), 1.0).unwrap().c;
        let c_deep = build_profile(&Potential::double_well(2.0).unwrap(), 1.0).unwrap().c;
        assert!(c_shallow >= c_deep, "c(0.5) = {c_shallow}, c(2) = {c_deep}");
    }

    #[test]
    fn wf_upper_sandwich() {
        let g = GridSpec::symmetric(8.0, 1024).unwrap();
        let profile = build_profile(&Potential::double_well(1.0).unwrap(), 1.0).unwrap();
        let d1 = GridDensity::gaussian(g, -1.0, 0.4).unwrap();
        let d2 = GridDensity::gaussian(g, 1.3, 0.7).unwrap();
        let wf = profile.wf_upper(&d1, &d2).unwrap();
        let w1s = d1.wasserstein1(&d2).unwrap() / profile.sigma;
        assert!(wf <= w1s + 1e-12);
        assert!(wf >= 0.5 * profile.phi_r0() * w1s - 1e-12);
        assert_relative_eq!(profile.wf_upper(&d1, &d1).unwrap(), 0.0);
    }

    #[test]
    fn linear_flow_contracts_pairs_deterministically() {
        // quadratic potential: the difference process decays exactly like
        // e^{-at}; the envelope holds with large margin
        let a = 1.0;
        let spec = SdeSpec::scalar(Potential::quadratic(a).unwrap(), 1.0, 0.5).unwrap();
        let profile = build_profile(&Potential::quadratic(a).unwrap(), 1.0).unwrap();
        let beta = BrownianPath::sample(5, 1, 0.0, 4.0, 1e-3).unwrap();
        let report = verify_contraction(
            &spec,
            &beta,
            &InitialCondition::Delta(-1.0),
            &InitialCondition::Delta(1.0),
            &profile,
            &[1.0, 2.0, 4.0],
            1e-3,
            4000,
            11,
            12,
        )
        .unwrap();
        assert!(report.all_ok);
        assert_relative_eq!(report.w0_sigma, 2.0, epsilon = 1e-12);
        // the synchronous mean distance decays at the sharp rate e^{-at}:
        // EM pairs with independent intrinsic noise fluctuate around it
        let w1 = report.points[0].w1_sigma;
        assert!(w1 < 2.0 * (-a * 1.0f64).exp() + 0.1, "w1(1) = {w1}");
    }

    #[test]
    fn identical_initial_laws_stay_at_the_noise_floor() {
        let spec = SdeSpec::scalar(Potential::double_well(1.0).unwrap(), 1.0, 0.5).unwrap();
        let profile = build_profile(&Potential::double_well(1.0).unwrap(), 1.0).unwrap();
        let beta = BrownianPath::sample(9, 1, 0.0, 1.0, 1e-3).unwrap();
        let init = InitialCondition::Gaussian { mean: 0.0, variance: 0.3 };
        let report = verify_contraction(
            &spec, &beta, &init, &init, &profile, &[0.5, 1.0], 1e-3, 20_000, 21, 22,
        )
        .unwrap();
        for p in &report.points {
            assert!(p.w1_sigma < 0.05, "noise floor {}", p.w1_sigma);
        }
    }
}
