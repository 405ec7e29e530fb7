//! Closed-form Ornstein-Uhlenbeck solutions with intrinsic and common noise.
//!
//! For `dx = -a x dt + sigma dW + eta dB` everything is Gaussian and exactly
//! solvable, which makes this module the ground truth against which the
//! particle engine and the PDE solver are validated. Stochastic integrals
//! against a stored path are evaluated as left-point Riemann-Stieltjes sums
//! over the path increments; for this additive linear equation the Ito and
//! Stratonovich readings coincide, and the path resolution is the accuracy
//! control.

use crate::density::{GridDensity, GridSpec};
use crate::error::{Error, Result};
use crate::noise::BrownianPath;

/// Parameters of the linear SDE `dx = -a x dt + sigma dW + eta dB`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct OuParams {
    pub a: f64,
    pub sigma: f64,
    pub eta: f64,
}

impl OuParams {
    pub fn new(a: f64, sigma: f64, eta: f64) -> Result<Self> {
        if !(a > 0.0) || !(sigma > 0.0) || eta < 0.0 {
            return Err(Error::InvalidParameter(format!(
                "OU needs a > 0, sigma > 0, eta >= 0; got a={a}, sigma={sigma}, eta={eta}"
            )));
        }
        Ok(OuParams { a, sigma, eta })
    }

    /// Variance of the conditional (single-path) law after time `t - s`.
    pub fn transition_variance(&self, elapsed: f64) -> f64 {
        self.sigma * self.sigma * (1.0 - (-2.0 * self.a * elapsed).exp()) / (2.0 * self.a)
    }

    /// Variance of the pullback density: `sigma^2 / 2a`, independent of the
    /// common-noise strength and realisation.
    pub fn pullback_variance(&self) -> f64 {
        self.sigma * self.sigma / (2.0 * self.a)
    }

    /// Variance of the stationary density: `(sigma^2 + eta^2) / 2a`.
    pub fn stationary_variance(&self) -> f64 {
        (self.sigma * self.sigma + self.eta * self.eta) / (2.0 * self.a)
    }
}

/// Conditional mean `m(t, s) = x_s e^{-a(t-s)} + eta int_s^t e^{-a(t-u)} dbeta(u)`,
/// with the integral summed over the path's own grid.
pub fn mbeta(p: &OuParams, beta: &BrownianPath, t: f64, s: f64, x_s: f64) -> Result<f64> {
    mbeta_resampled(p, beta, t, s, x_s, beta.dt())
}

/// Same as [`mbeta`] but with the integral summed over sub-intervals of width
/// `dt_sum` (path values linearly interpolated). Refining `dt_sum` converges
/// to the exact integral against the piecewise-linear path.
pub fn mbeta_resampled(
    p: &OuParams,
    beta: &BrownianPath,
    t: f64,
    s: f64,
    x_s: f64,
    dt_sum: f64,
) -> Result<f64> {
    if t < s {
        return Err(Error::InvalidParameter(format!("need t >= s, got t={t}, s={s}")));
    }
    if !(dt_sum > 0.0) {
        return Err(Error::InvalidParameter("dt_sum must be positive".into()));
    }
    let n = (((t - s) / dt_sum).round() as usize).max(1);
    let h = (t - s) / n as f64;
    let mut integral = 0.0;
    let mut prev = beta.value_at(s, 0)?;
    for j in 0..n {
        let u = s + j as f64 * h;
        let next = beta.value_at(s + (j as f64 + 1.0) * h, 0)?;
        integral += (-p.a * (t - u)).exp() * (next - prev);
        prev = next;
    }
    Ok(x_s * (-p.a * (t - s)).exp() + p.eta * integral)
}

/// Exact conditional (fixed-path) transition density started from a point
/// mass at `x_s` at time `s`, rasterised onto `grid`.
pub fn transition_density(
    p: &OuParams,
    beta: &BrownianPath,
    t: f64,
    s: f64,
    x_s: f64,
    grid: GridSpec,
) -> Result<GridDensity> {
    if t <= s {
        return Err(Error::InvalidParameter(format!("need t > s, got t={t}, s={s}")));
    }
    let mean = mbeta(p, beta, t, s, x_s)?;
    GridDensity::gaussian(grid, mean, p.transition_variance(t - s))
}

/// Pullback attractor density for one common-noise realisation, truncated at
/// `-tau`.
#[derive(Clone, Debug)]
pub struct OuPullback {
    pub density: GridDensity,
    pub mean: f64,
    /// Relative size `e^{-a tau}` of the neglected history.
    pub truncation_error: f64,
}

/// Mean of the pullback density `eta int_{-tau}^0 e^{a u} dbeta(u)`.
pub fn pullback_mean(p: &OuParams, beta: &BrownianPath, tau: f64) -> Result<f64> {
    mbeta(p, beta, 0.0, -tau, 0.0)
}

/// The common-noise pullback attractor: a normal density with variance
/// `sigma^2 / 2a` centred at the exponentially weighted past of `beta`.
pub fn pullback_density(
    p: &OuParams,
    beta: &BrownianPath,
    truncation_tau: f64,
    grid: GridSpec,
) -> Result<OuPullback> {
    if !(truncation_tau > 0.0) {
        return Err(Error::InvalidParameter("truncation tau must be positive".into()));
    }
    let mean = pullback_mean(p, beta, truncation_tau)?;
    let density = GridDensity::gaussian(grid, mean, p.pullback_variance())?;
    Ok(OuPullback { density, mean, truncation_error: (-p.a * truncation_tau).exp() })
}

/// Default truncation horizon `20 / a` (tail weight `e^{-20}`).
pub fn default_truncation_tau(p: &OuParams) -> f64 {
    20.0 / p.a
}

/// Stationary density of the OU system: `N(0, (sigma^2 + eta^2) / 2a)`.
pub fn stationary_density(p: &OuParams, grid: GridSpec) -> Result<GridDensity> {
    GridDensity::gaussian(grid, 0.0, p.stationary_variance())
}

/// Stationary density of the double-well system with total squared noise
/// amplitude `sigma2_plus_eta2`: proportional to
/// `exp(-2 (x^4/4 - a x^2/2) / (sigma^2 + eta^2))`, normalised on the grid.
pub fn dw_stationary_density(a: f64, sigma2_plus_eta2: f64, grid: GridSpec) -> Result<GridDensity> {
    if !(a > 0.0) || !(sigma2_plus_eta2 > 0.0) {
        return Err(Error::InvalidParameter(
            "double-well stationary density needs a > 0 and positive noise".into(),
        ));
    }
    let scale = 2.0 / sigma2_plus_eta2;
    GridDensity::from_fn(grid, |x| {
        let x2 = x * x;
        (-scale * (0.25 * x2 * x2 - 0.5 * a * x2)).exp()
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn grid() -> GridSpec {
        GridSpec::symmetric(6.0, 1024).unwrap()
    }

    /// A path with beta(u) = u on its grid, for integrating against a known
    /// smooth integrand.
    fn linear_path(dt: f64) -> BrownianPath {
        let p = BrownianPath::sample(1, 1, -2.0, 2.0, dt).unwrap();
        let mut buf = Vec::new();
        p.to_csv(&mut buf).unwrap();
        // rewrite the value column to t itself
        let text = String::from_utf8(buf).unwrap();
        let rewritten: String = text
            .lines()
            .map(|line| {
                if line.starts_with('#') || line.starts_with('t') {
                    format!("{line}\n")
                } else {
                    let t: f64 = line.split(',').next().unwrap().parse().unwrap();
                    format!("{t:.17e},{t:.17e}\n")
                }
            })
            .collect();
        BrownianPath::from_csv(rewritten.as_bytes()).unwrap()
    }

    #[test]
    fn mbeta_zero_path_is_pure_relaxation() {
        let p = OuParams::new(1.3, 1.0, 0.7).unwrap();
        let path = linear_path(1e-3);
        // eta = 0 isolates the x_s relaxation regardless of the path
        let p0 = OuParams::new(1.3, 1.0, 0.0).unwrap();
        let m = mbeta(&p0, &path, 1.0, 0.0, 2.0).unwrap();
        assert_relative_eq!(m, 2.0 * (-1.3f64).exp(), epsilon = 1e-12);
        let _ = p;
    }

    #[test]
    fn mbeta_linear_path_matches_exact_integral() {
        // beta(u) = u on [0, 1], a = 1: int_0^1 e^{-(1-u)} du = 1 - e^{-1}
        let p = OuParams::new(1.0, 1.0, 1.0).unwrap();
        let path = linear_path(1e-4);
        let m = mbeta(&p, &path, 1.0, 0.0, 0.0).unwrap();
        let exact = 1.0 - (-1.0f64).exp();
        assert_relative_eq!(m, exact, max_relative = 1e-3);
        // refinement against a coarsely stored path converges the same way
        let coarse = linear_path(1e-2);
        let m_refined = mbeta_resampled(&p, &coarse, 1.0, 0.0, 0.0, 1e-4).unwrap();
        assert_relative_eq!(m_refined, exact, max_relative = 1e-3);
    }

    #[test]
    fn transition_density_limits() {
        let p = OuParams::new(1.0, 1.0, 0.5).unwrap();
        let path = BrownianPath::sample(5, 1, -30.0, 2.0, 1e-2).unwrap();
        // long elapsed time forgets x_s: variance sigma^2 / 2a
        let d = transition_density(&p, &path, 0.0, -25.0, 3.0, grid()).unwrap();
        assert_relative_eq!(d.variance(), 0.5, max_relative = 1e-3);
        // short times concentrate towards a point mass
        assert_relative_eq!(p.transition_variance(1e-6), 1e-6, max_relative = 1e-5);
        // a = 1, sigma = 1, elapsed = ln 2: variance (1 - 1/4) / 2 = 0.375
        assert_relative_eq!(p.transition_variance(2.0f64.ln()), 0.375, epsilon = 1e-15);
        assert!(transition_density(&p, &path, 0.0, 0.0, 0.0, grid()).is_err());
    }

    #[test]
    fn pullback_density_properties() {
        let p = OuParams::new(1.0, 0.5, 0.8).unwrap();
        let beta = BrownianPath::sample(42, 1, -20.0, 0.0, 1e-3).unwrap();
        let pb = pullback_density(&p, &beta, 20.0, grid()).unwrap();
        // variance independent of eta and of the realisation
        assert_relative_eq!(pb.density.variance(), 0.125, max_relative = 1e-4);
        assert_relative_eq!(pb.truncation_error, (-20.0f64).exp());
        // mean scales linearly in eta
        let p2 = OuParams::new(1.0, 0.5, 1.6).unwrap();
        let pb2 = pullback_density(&p2, &beta, 20.0, grid()).unwrap();
        assert_relative_eq!(pb2.mean, 2.0 * pb.mean, max_relative = 1e-12);
        // localisation: pullback variance < stationary variance when eta > 0
        assert!(p.pullback_variance() < p.stationary_variance());
    }

    #[test]
    fn stationary_densities() {
        let p = OuParams::new(1.0, (0.5f64).sqrt(), (0.5f64).sqrt()).unwrap();
        let d = stationary_density(&p, grid()).unwrap();
        assert_relative_eq!(d.variance(), 0.5, max_relative = 1e-4);

        let dw = dw_stationary_density(1.0, 1.0, grid()).unwrap();
        assert_relative_eq!(dw.mass(), 1.0, epsilon = 1e-10);
        assert!(dw.mean().abs() < 1e-10);
        // bimodal: density at the wells exceeds the density at the origin
        assert!(dw.value_at(1.0) > dw.value_at(0.0));
        assert!(dw.value_at(-1.0) > dw.value_at(0.0));
    }
}
