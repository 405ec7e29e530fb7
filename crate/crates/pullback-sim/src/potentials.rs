//! Confining potentials and their structural checks.
//!
//! All potentials are closed analytic forms, so gradients and Laplacians are
//! exact evaluations, never finite differences. The structural checks
//! (dissipation constant, convexity radius) reduce to polynomial analysis in
//! one dimension.

use crate::error::{Error, Result};
use serde::{Deserialize, Serialize};

/// Analytic confining potential.
///
/// `Quadratic { a }` is `V(x) = a|x|^2/2`, `DoubleWell { a }` is
/// `V(x) = |x|^4/4 - a|x|^2/2` (drift `x(a - |x|^2)`), and `Polynomial`
/// holds 1-d coefficients `V(x) = sum_k c_k x^k` with even degree and a
/// positive leading coefficient. The first two are radially defined and
/// valid in any dimension; polynomial potentials are one-dimensional.
#[derive(Clone, Debug, PartialEq)]
pub enum Potential {
    Quadratic { a: f64 },
    DoubleWell { a: f64 },
    Polynomial { coeffs: Vec<f64> },
}

/// Outcome of the dissipation check `V'(x) x |x|^2 >= |x|^6 / 2 - C`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct DissipationReport {
    pub satisfied: bool,
    /// Smallest certified constant when the condition holds.
    pub constant: Option<f64>,
}

impl Potential {
    pub fn quadratic(a: f64) -> Result<Self> {
        if !(a > 0.0) || !a.is_finite() {
            return Err(Error::InvalidParameter(format!(
                "quadratic potential needs a > 0, got {a}"
            )));
        }
        Ok(Potential::Quadratic { a })
    }

    pub fn double_well(a: f64) -> Result<Self> {
        if !(a > 0.0) || !a.is_finite() {
            return Err(Error::InvalidParameter(format!(
                "double-well potential needs a > 0, got {a}"
            )));
        }
        Ok(Potential::DoubleWell { a })
    }

    /// `coeffs[k]` multiplies `x^k`. Requires even degree >= 2 and a positive
    /// leading coefficient so the potential confines.
    pub fn polynomial(coeffs: Vec<f64>) -> Result<Self> {
        let degree = coeffs
            .iter()
            .rposition(|c| *c != 0.0)
            .ok_or_else(|| Error::InvalidParameter("zero polynomial".into()))?;
        if coeffs.iter().any(|c| !c.is_finite()) {
            return Err(Error::InvalidParameter("non-finite coefficient".into()));
        }
        if degree < 2 || degree % 2 != 0 {
            return Err(Error::InvalidParameter(format!(
                "polynomial degree must be even and >= 2, got {degree}"
            )));
        }
        if coeffs[degree] <= 0.0 {
            return Err(Error::InvalidParameter(
                "leading polynomial coefficient must be positive".into(),
            ));
        }
        let mut coeffs = coeffs;
        coeffs.truncate(degree + 1);
        Ok(Potential::Polynomial { coeffs })
    }

    /// Whether this potential is defined for state dimension `dim`.
    pub fn supports_dim(&self, dim: usize) -> bool {
        match self {
            Potential::Polynomial { .. } => dim == 1,
            _ => dim >= 1,
        }
    }

    /// V(x) for a 1-d state.
    pub fn eval1(&self, x: f64) -> f64 {
        match self {
            Potential::Quadratic { a } => 0.5 * a * x * x,
            Potential::DoubleWell { a } => {
                let x2 = x * x;
                0.25 * x2 * x2 - 0.5 * a * x2
            }
            Potential::Polynomial { coeffs } => horner(coeffs, x),
        }
    }

    /// V'(x) for a 1-d state.
    #[inline(always)]
    pub fn grad1(&self, x: f64) -> f64 {
        match self {
            Potential::Quadratic { a } => a * x,
            Potential::DoubleWell { a } => x * x * x - a * x,
            Potential::Polynomial { coeffs } => horner_derivative(coeffs, x),
        }
    }

    /// V''(x) for a 1-d state (equals the Laplacian in 1-d).
    pub fn laplacian1(&self, x: f64) -> f64 {
        match self {
            Potential::Quadratic { a } => *a,
            Potential::DoubleWell { a } => 3.0 * x * x - a,
            Potential::Polynomial { coeffs } => {
                let d2 = differentiate(&differentiate(coeffs));
                horner(&d2, x)
            }
        }
    }

    /// V(x) for a d-dimensional state.
    pub fn eval(&self, x: &[f64]) -> f64 {
        match self {
            Potential::Quadratic { a } => 0.5 * a * norm_sq(x),
            Potential::DoubleWell { a } => {
                let r2 = norm_sq(x);
                0.25 * r2 * r2 - 0.5 * a * r2
            }
            Potential::Polynomial { .. } => {
                debug_assert_eq!(x.len(), 1);
                self.eval1(x[0])
            }
        }
    }

    /// grad V(x) written into `out`.
    pub fn grad(&self, x: &[f64], out: &mut [f64]) {
        match self {
            Potential::Quadratic { a } => {
                for (o, xi) in out.iter_mut().zip(x) {
                    *o = a * xi;
                }
            }
            Potential::DoubleWell { a } => {
                let r2 = norm_sq(x);
                for (o, xi) in out.iter_mut().zip(x) {
                    *o = (r2 - a) * xi;
                }
            }
            Potential::Polynomial { .. } => {
                debug_assert_eq!(x.len(), 1);
                out[0] = self.grad1(x[0]);
            }
        }
    }

    /// Laplacian of V at a d-dimensional state.
    pub fn laplacian(&self, x: &[f64]) -> f64 {
        let d = x.len() as f64;
        match self {
            Potential::Quadratic { a } => a * d,
            Potential::DoubleWell { a } => (d + 2.0) * norm_sq(x) - a * d,
            Potential::Polynomial { .. } => {
                debug_assert_eq!(x.len(), 1);
                self.laplacian1(x[0])
            }
        }
    }

    /// 1-d coefficient representation of V.
    pub fn coeffs(&self) -> Vec<f64> {
        match self {
            Potential::Quadratic { a } => vec![0.0, 0.0, 0.5 * a],
            Potential::DoubleWell { a } => vec![0.0, 0.0, -0.5 * a, 0.0, 0.25],
            Potential::Polynomial { coeffs } => coeffs.clone(),
        }
    }

    /// Decide `V'(x) x^3 >= x^6/2 - C` for some finite C, returning the
    /// smallest certified constant. The decision is exact in the leading
    /// order (polynomial arithmetic); the constant comes from a wide grid
    /// search refined by Newton steps on the residual polynomial.
    pub fn check_dissipation(&self) -> DissipationReport {
        // P(x) = V'(x) x^3 - x^6/2; condition <=> P bounded below, C = -inf P.
        let vprime = differentiate(&self.coeffs());
        let mut p = vec![0.0; vprime.len() + 3];
        for (k, c) in vprime.iter().enumerate() {
            p[k + 3] = *c;
        }
        if p.len() < 7 {
            p.resize(7, 0.0);
        }
        p[6] -= 0.5;
        let degree = p.iter().rposition(|c| *c != 0.0);
        let Some(degree) = degree else {
            // P identically zero: condition holds with C = 0.
            return DissipationReport { satisfied: true, constant: Some(0.0) };
        };
        p.truncate(degree + 1);
        if degree % 2 != 0 || p[degree] < 0.0 {
            return DissipationReport { satisfied: false, constant: None };
        }
        if degree == 0 {
            let c = (-p[0]).max(0.0);
            return DissipationReport { satisfied: true, constant: Some(c) };
        }
        // Bounded below: locate the global minimum on |x| <= 20 and polish.
        let n = 100_000;
        let mut best_x = 0.0;
        let mut best = f64::INFINITY;
        for i in 0..=n {
            let x = -20.0 + 40.0 * i as f64 / n as f64;
            let v = horner(&p, x);
            if v < best {
                best = v;
                best_x = x;
            }
        }
        let dp = differentiate(&p);
        let ddp = differentiate(&dp);
        let mut x = best_x;
        for _ in 0..8 {
            let d1 = horner(&dp, x);
            let d2 = horner(&ddp, x);
            if d2 <= 0.0 {
                break;
            }
            let step = d1 / d2;
            x -= step;
            if !x.is_finite() || x.abs() > 25.0 {
                x = best_x;
                break;
            }
        }
        let min = horner(&p, x).min(best);
        DissipationReport { satisfied: true, constant: Some((-min).max(0.0)) }
    }

    /// Radius R with V''(x) > 0 for |x| > R; zero for globally convex
    /// potentials. Closed forms for the named kinds, root isolation for
    /// general polynomials.
    pub fn convexity_radius(&self) -> f64 {
        match self {
            Potential::Quadratic { .. } => 0.0,
            Potential::DoubleWell { a } => (a / 3.0).sqrt(),
            Potential::Polynomial { coeffs } => {
                let d2 = differentiate(&differentiate(coeffs));
                largest_nonconvex_radius(&d2)
            }
        }
    }

    /// inf_x V''(x); the r -> 0 limit of the contraction curvature is twice
    /// this value.
    pub fn min_second_derivative(&self) -> f64 {
        match self {
            Potential::Quadratic { a } => *a,
            Potential::DoubleWell { a } => -a,
            Potential::Polynomial { coeffs } => {
                let d2 = differentiate(&differentiate(coeffs));
                let bound = root_bound(&d2).max(1.0);
                let n = 40_000;
                let mut best = f64::INFINITY;
                for i in 0..=n {
                    let x = -bound + 2.0 * bound * i as f64 / n as f64;
                    best = best.min(horner(&d2, x));
                }
                best
            }
        }
    }

    /// Location of the deepest minimum of V (1-d).
    pub fn deepest_minimum(&self) -> f64 {
        match self {
            Potential::Quadratic { .. } => 0.0,
            Potential::DoubleWell { a } => a.sqrt(),
            Potential::Polynomial { coeffs } => {
                let bound = root_bound(&differentiate(coeffs)).max(1.0);
                let n = 40_000;
                let mut best_x = 0.0;
                let mut best = f64::INFINITY;
                for i in 0..=n {
                    let x = -bound + 2.0 * bound * i as f64 / n as f64;
                    let v = horner(coeffs, x);
                    if v < best {
                        best = v;
                        best_x = x;
                    }
                }
                best_x
            }
        }
    }

    /// Crude stationary standard deviation estimate from the curvature at
    /// the deepest minimum, used to size density read-out grids.
    pub fn stationary_std_estimate(&self, total_diffusion_sq: f64) -> f64 {
        let x_min = self.deepest_minimum();
        let curv = self.laplacian1(x_min).max(1e-6);
        let core = (total_diffusion_sq / (2.0 * curv)).sqrt();
        // Wells off the origin widen the support.
        core + x_min.abs()
    }
}

fn norm_sq(x: &[f64]) -> f64 {
    x.iter().map(|v| v * v).sum()
}

fn horner(coeffs: &[f64], x: f64) -> f64 {
    coeffs.iter().rev().fold(0.0, |acc, c| acc * x + c)
}

fn horner_derivative(coeffs: &[f64], x: f64) -> f64 {
    let mut acc = 0.0;
    for k in (1..coeffs.len()).rev() {
        acc = acc * x + k as f64 * coeffs[k];
    }
    acc
}

fn differentiate(coeffs: &[f64]) -> Vec<f64> {
    if coeffs.len() <= 1 {
        return vec![0.0];
    }
    (1..coeffs.len()).map(|k| k as f64 * coeffs[k]).collect()
}

/// Cauchy bound on the modulus of real roots.
fn root_bound(coeffs: &[f64]) -> f64 {
    let Some(degree) = coeffs.iter().rposition(|c| *c != 0.0) else {
        return 0.0;
    };
    if degree == 0 {
        return 0.0;
    }
    let lead = coeffs[degree].abs();
    1.0 + coeffs[..degree].iter().map(|c| c.abs() / lead).fold(0.0, f64::max)
}

/// Largest |x| with p(x) <= 0, refined by bisection; 0 when p > 0 everywhere.
fn largest_nonconvex_radius(p: &[f64]) -> f64 {
    let bound = root_bound(p).max(1.0);
    let n = 200_000;
    let h = 2.0 * bound / n as f64;
    let mut outer: Option<f64> = None;
    for i in 0..=n {
        let x = -bound + h * i as f64;
        if horner(p, x) <= 0.0 {
            let r = x.abs();
            if outer.map_or(true, |o| r > o) {
                outer = Some(r);
            }
        }
    }
    let Some(r) = outer else { return 0.0 };
    // Bisect the sign change just outside r, on the side where it occurred.
    let refine = |mut lo: f64, mut hi: f64| {
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            if horner(p, mid) <= 0.0 {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        0.5 * (lo + hi)
    };
    let pos = refine(r, r + h);
    let neg = refine(-r, -(r + h)).abs();
    pos.max(neg)
}

impl Serialize for Potential {
    fn serialize<S: serde::Serializer>(&self, serializer: S) -> std::result::Result<S::Ok, S::Error> {
        let (kind, params) = match self {
            Potential::Quadratic { a } => ("quadratic", vec![*a]),
            Potential::DoubleWell { a } => ("double_well", vec![*a]),
            Potential::Polynomial { coeffs } => ("polynomial", coeffs.clone()),
        };
        PotentialRepr { kind: kind.to_string(), params }.serialize(serializer)
    }
}

impl<'de> Deserialize<'de> for Potential {
    fn deserialize<D: serde::Deserializer<'de>>(deserializer: D) -> std::result::Result<Self, D::Error> {
        let repr = PotentialRepr::deserialize(deserializer)?;
        let build = || -> Result<Potential> {
            match repr.kind.as_str() {
                "quadratic" => {
                    expect_params(&repr.params, 1)?;
                    Potential::quadratic(repr.params[0])
                }
                "double_well" => {
                    expect_params(&repr.params, 1)?;
                    Potential::double_well(repr.params[0])
                }
                "polynomial" => Potential::polynomial(repr.params.clone()),
                other => Err(Error::InvalidParameter(format!("unknown potential kind '{other}'"))),
            }
        };
        build().map_err(serde::de::Error::custom)
    }
}

fn expect_params(params: &[f64], n: usize) -> Result<()> {
    if params.len() != n {
        return Err(Error::InvalidParameter(format!(
            "expected {n} parameter(s), got {}",
            params.len()
        )));
    }
    Ok(())
}

#[derive(Serialize, Deserialize)]
struct PotentialRepr {
    kind: String,
    params: Vec<f64>,
}
