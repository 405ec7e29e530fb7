//! Grid densities, estimation from particles, moments and distances.
//!
//! Densities live on a uniform 1-d grid of cell-averaged values and are
//! normalised at construction. Distances treat each cell as a point mass at
//! its centre, which makes the 1-d Wasserstein computation exact for the grid
//! representation (cumulative-sum formula) and gives the quantile-coupling
//! evaluation used as an upper bound for concave-cost transport distances.

use crate::error::{Error, Result};
use crate::rng::{u64_to_unit, NoiseStreamKey, StreamRole};
use serde::{Deserialize, Serialize};
use statrs::function::erf::erf;
use std::io::Write;

/// Uniform spatial grid.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct GridSpec {
    pub x_min: f64,
    pub x_max: f64,
    pub n_cells: usize,
}

impl GridSpec {
    pub fn new(x_min: f64, x_max: f64, n_cells: usize) -> Result<Self> {
        if !(x_max > x_min) || n_cells < 2 {
            return Err(Error::InvalidParameter(format!(
                "grid needs x_max > x_min and at least 2 cells, got [{x_min}, {x_max}] / {n_cells}"
            )));
        }
        Ok(GridSpec { x_min, x_max, n_cells })
    }

    /// Symmetric grid sized for a density with the given spread.
    pub fn symmetric(half_width: f64, n_cells: usize) -> Result<Self> {
        GridSpec::new(-half_width, half_width, n_cells)
    }

    pub fn dx(&self) -> f64 {
        (self.x_max - self.x_min) / self.n_cells as f64
    }

    pub fn center(&self, j: usize) -> f64 {
        self.x_min + (j as f64 + 0.5) * self.dx()
    }

    /// Cell containing `x`, or None when outside the grid.
    pub fn cell_of(&self, x: f64) -> Option<usize> {
        if !x.is_finite() || x < self.x_min || x >= self.x_max {
            return None;
        }
        let j = ((x - self.x_min) / self.dx()) as usize;
        Some(j.min(self.n_cells - 1))
    }

    fn matches(&self, other: &GridSpec) -> bool {
        self.n_cells == other.n_cells
            && (self.x_min - other.x_min).abs() < 1e-12 * self.dx()
            && (self.x_max - other.x_max).abs() < 1e-12 * self.dx()
    }
}

/// Density estimation method for particle ensembles.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EstimatorMethod {
    /// Cell-count histogram; deterministic and unbiased per cell. Default.
    Histogram,
    /// Gaussian kernel estimate; `None` bandwidth uses Silverman's rule.
    GaussianKde { bandwidth: Option<f64> },
}

/// Probability density on a uniform grid (cell averages, total mass 1).
#[derive(Clone, Debug, PartialEq)]
pub struct GridDensity {
    grid: GridSpec,
    values: Vec<f64>,
}

/// Fraction of particle mass allowed to fall outside the grid before
/// estimation fails rather than folding it into the boundary cells.
const OUT_OF_RANGE_LIMIT: f64 = 1e-3;

impl GridDensity {
    /// Normalise raw non-negative cell values into a density.
    pub fn from_values(grid: GridSpec, mut values: Vec<f64>) -> Result<Self> {
        if values.len() != grid.n_cells {
            return Err(Error::GridMismatch(format!(
                "expected {} cell values, got {}",
                grid.n_cells,
                values.len()
            )));
        }
        let mut mass = 0.0;
        for v in &mut values {
            if !v.is_finite() || *v < -1e-12 {
                return Err(Error::InvalidParameter(format!("invalid cell value {v}")));
            }
            *v = v.max(0.0);
            mass += *v;
        }
        mass *= grid.dx();
        if mass <= 0.0 {
            return Err(Error::InvalidParameter("density has zero total mass".into()));
        }
        for v in &mut values {
            *v /= mass;
        }
        Ok(GridDensity { grid, values })
    }

    /// Rasterise a pointwise density function (midpoint rule per cell).
    pub fn from_fn(grid: GridSpec, f: impl Fn(f64) -> f64) -> Result<Self> {
        let values = (0..grid.n_cells).map(|j| f(grid.center(j))).collect();
        GridDensity::from_values(grid, values)
    }

    /// Exact cell averages of a normal density via CDF differences.
    pub fn gaussian(grid: GridSpec, mean: f64, variance: f64) -> Result<Self> {
        if !(variance > 0.0) {
            return Err(Error::InvalidParameter(format!(
                "gaussian needs positive variance, got {variance}"
            )));
        }
        let sd = variance.sqrt();
        let cdf = |x: f64| 0.5 * (1.0 + erf((x - mean) / (sd * std::f64::consts::SQRT_2)));
        let dx = grid.dx();
        let mut values = Vec::with_capacity(grid.n_cells);
        let mut prev = cdf(grid.x_min);
        for j in 0..grid.n_cells {
            let next = cdf(grid.x_min + (j as f64 + 1.0) * dx);
            values.push(((next - prev) / dx).max(0.0));
            prev = next;
        }
        GridDensity::from_values(grid, values)
    }

    /// All mass in the cell containing `x`.
    pub fn delta(grid: GridSpec, x: f64) -> Result<Self> {
        let j = grid
            .cell_of(x)
            .ok_or_else(|| Error::InvalidParameter(format!("delta location {x} outside grid")))?;
        let mut values = vec![0.0; grid.n_cells];
        values[j] = 1.0;
        GridDensity::from_values(grid, values)
    }

    /// Estimate a density from particle positions.
    pub fn from_particles(
        positions: &[f64],
        grid: GridSpec,
        method: EstimatorMethod,
    ) -> Result<Self> {
        if positions.is_empty() {
            return Err(Error::InvalidParameter("no particles".into()));
        }
        let n = positions.len();
        let mut outside = 0usize;
        match method {
            EstimatorMethod::Histogram => {
                let mut counts = vec![0.0f64; grid.n_cells];
                for &x in positions {
                    match grid.cell_of(x) {
                        Some(j) => counts[j] += 1.0,
                        None => {
                            outside += 1;
                            if x.is_finite() {
                                let j = if x < grid.x_min { 0 } else { grid.n_cells - 1 };
                                counts[j] += 1.0;
                            }
                        }
                    }
                }
                check_out_of_range(outside, n)?;
                GridDensity::from_values(grid, counts)
            }
            EstimatorMethod::GaussianKde { bandwidth } => {
                let h = match bandwidth {
                    Some(h) if h > 0.0 => h,
                    Some(h) => {
                        return Err(Error::InvalidParameter(format!("bandwidth must be > 0, got {h}")))
                    }
                    None => silverman_bandwidth(positions),
                };
                let dx = grid.dx();
                let mut values = vec![0.0f64; grid.n_cells];
                // Deposit each kernel's exact cell masses (CDF differences),
                // so the bandwidth -> 0 limit reproduces the histogram.
                let cut = ((8.0 * h / dx).ceil() as isize).max(1);
                let inv = 1.0 / (h * std::f64::consts::SQRT_2);
                for &x in positions {
                    if grid.cell_of(x).is_none() {
                        outside += 1;
                    }
                    if !x.is_finite() {
                        continue;
                    }
                    let jc = ((x - grid.x_min) / dx).floor() as isize;
                    let lo = (jc - cut).max(0) as usize;
                    let hi = ((jc + cut).max(0) as usize).min(grid.n_cells - 1);
                    if lo > hi {
                        continue;
                    }
                    let mut prev = 0.5 * (1.0 + erf((grid.x_min + lo as f64 * dx - x) * inv));
                    for (j, value) in values.iter_mut().enumerate().take(hi + 1).skip(lo) {
                        let next = 0.5 * (1.0 + erf((grid.x_min + (j as f64 + 1.0) * dx - x) * inv));
                        *value += (next - prev) / dx;
                        prev = next;
                    }
                }
                check_out_of_range(outside, n)?;
                GridDensity::from_values(grid, values)
            }
        }
    }

    pub fn grid(&self) -> &GridSpec {
        &self.grid
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn dx(&self) -> f64 {
        self.grid.dx()
    }

    /// Total mass; 1 up to rounding by construction.
    pub fn mass(&self) -> f64 {
        self.values.iter().sum::<f64>() * self.dx()
    }

    /// Pointwise value by cell lookup (0 outside the grid).
    pub fn value_at(&self, x: f64) -> f64 {
        self.grid.cell_of(x).map_or(0.0, |j| self.values[j])
    }

    pub fn mean(&self) -> f64 {
        let dx = self.dx();
        self.values
            .iter()
            .enumerate()
            .map(|(j, v)| self.grid.center(j) * v * dx)
            .sum()
    }

    pub fn variance(&self) -> f64 {
        let m = self.mean();
        let dx = self.dx();
        self.values
            .iter()
            .enumerate()
            .map(|(j, v)| {
                let d = self.grid.center(j) - m;
                d * d * v * dx
            })
            .sum()
    }

    /// L1 distance; lies in [0, 2] for probability densities.
    pub fn l1_distance(&self, other: &GridDensity) -> Result<f64> {
        self.check_same_grid(other)?;
        let dx = self.dx();
        Ok(self
            .values
            .iter()
            .zip(&other.values)
            .map(|(a, b)| (a - b).abs() * dx)
            .sum())
    }

    /// Exact 1-d Wasserstein-1 distance between the grid point-mass
    /// representations: the integral of |F1 - F2| via cumulative sums.
    pub fn wasserstein1(&self, other: &GridDensity) -> Result<f64> {
        self.check_same_grid(other)?;
        let dx = self.dx();
        let mut cum = 0.0;
        let mut total = 0.0;
        for (a, b) in self.values.iter().zip(&other.values) {
            cum += (a - b) * dx;
            total += cum.abs() * dx;
        }
        Ok(total)
    }

    /// Quantile-coupling evaluation of a concave transport cost
    /// `int f(|x - y| / sigma) d gamma` — an upper bound for the
    /// corresponding Kantorovich-Rubinstein distance, since the true
    /// distance is an infimum over couplings.
    pub fn coupling_cost_upper(
        &self,
        other: &GridDensity,
        cost: impl Fn(f64) -> f64,
        sigma: f64,
    ) -> Result<f64> {
        self.check_same_grid(other)?;
        if !(sigma > 0.0) {
            return Err(Error::InvalidParameter("weighted norm needs sigma > 0".into()));
        }
        let dx = self.dx();
        let mut i = 0usize;
        let mut j = 0usize;
        let mut mi = self.values[0] * dx;
        let mut mj = other.values[0] * dx;
        let mut cost_total = 0.0;
        let n = self.grid.n_cells;
        loop {
            if mi <= 1e-300 {
                i += 1;
                if i >= n {
                    break;
                }
                mi = self.values[i] * dx;
                continue;
            }
            if mj <= 1e-300 {
                j += 1;
                if j >= n {
                    break;
                }
                mj = other.values[j] * dx;
                continue;
            }
            let chunk = mi.min(mj);
            let r = (self.grid.center(i) - self.grid.center(j)).abs() / sigma;
            cost_total += chunk * cost(r);
            mi -= chunk;
            mj -= chunk;
        }
        Ok(cost_total)
    }

    fn check_same_grid(&self, other: &GridDensity) -> Result<()> {
        if !self.grid.matches(&other.grid) {
            return Err(Error::GridMismatch(format!(
                "{:?} vs {:?}",
                self.grid, other.grid
            )));
        }
        Ok(())
    }

    /// Write `x, p` rows with the schema version column.
    pub fn to_csv<W: Write>(&self, mut w: W) -> Result<()> {
        writeln!(w, "schema_version,x,p")?;
        for (j, v) in self.values.iter().enumerate() {
            writeln!(w, "1,{:.17e},{:.17e}", self.grid.center(j), v)?;
        }
        Ok(())
    }

    /// Write several densities on one grid as `x, p_0, ..., p_k` overlay rows.
    pub fn overlay_csv<W: Write>(densities: &[(&str, &GridDensity)], mut w: W) -> Result<()> {
        if densities.is_empty() {
            return Err(Error::InvalidParameter("no densities to export".into()));
        }
        let grid = densities[0].1.grid;
        for (_, d) in densities {
            if !d.grid.matches(&grid) {
                return Err(Error::GridMismatch("overlay densities on different grids".into()));
            }
        }
        write!(w, "schema_version,x")?;
        for (name, _) in densities {
            write!(w, ",{name}")?;
        }
        writeln!(w)?;
        for j in 0..grid.n_cells {
            write!(w, "1,{:.17e}", grid.center(j))?;
            for (_, d) in densities {
                write!(w, ",{:.17e}", d.values[j])?;
            }
            writeln!(w)?;
        }
        Ok(())
    }
}

fn check_out_of_range(outside: usize, n: usize) -> Result<()> {
    let share = outside as f64 / n as f64;
    if share > OUT_OF_RANGE_LIMIT {
        return Err(Error::OutOfRange { share_percent: 100.0 * share });
    }
    Ok(())
}

fn silverman_bandwidth(positions: &[f64]) -> f64 {
    let n = positions.len() as f64;
    let mean = positions.iter().sum::<f64>() / n;
    let var = positions.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / n;
    let std = var.sqrt();
    let mut sorted: Vec<f64> = positions.to_vec();
    sorted.sort_by(|a, b| a.total_cmp(b));
    let q = |p: f64| sorted[((p * (n - 1.0)).round() as usize).min(sorted.len() - 1)];
    let iqr = (q(0.75) - q(0.25)) / 1.34;
    let scale = if iqr > 0.0 { std.min(iqr) } else { std };
    (0.9 * scale * n.powf(-0.2)).max(1e-12)
}

/// Bundle of the three distances used in reports.
#[derive(Clone, Debug, Serialize)]
pub struct DistanceReport {
    pub l1: f64,
    pub w1: f64,
    pub wf_upper: f64,
    pub f_profile_id: String,
}

/// Initial distribution for ensembles and pullback runs, sampled by inverse
/// CDF so a fixed seed yields fixed initial positions.
#[derive(Clone, Debug)]
pub enum InitialCondition {
    Delta(f64),
    Gaussian { mean: f64, variance: f64 },
    Uniform { a: f64, b: f64 },
    Grid(GridDensity),
}

impl InitialCondition {
    /// Quantile transform of a uniform in (0, 1).
    pub fn quantile(&self, u: f64) -> f64 {
        match self {
            InitialCondition::Delta(x) => *x,
            InitialCondition::Gaussian { mean, variance } => {
                mean + variance.sqrt() * crate::rng::inverse_normal_cdf(u)
            }
            InitialCondition::Uniform { a, b } => a + (b - a) * u,
            InitialCondition::Grid(d) => {
                let dx = d.dx();
                let mut cum = 0.0;
                for (j, v) in d.values.iter().enumerate() {
                    let cell = v * dx;
                    if cum + cell >= u {
                        let frac = if cell > 0.0 { (u - cum) / cell } else { 0.5 };
                        return d.grid.x_min + (j as f64 + frac) * dx;
                    }
                    cum += cell;
                }
                d.grid.x_max
            }
        }
    }

    /// Deterministic positions for particles `0..n` of component `c` under
    /// the Init stream of `seed`.
    pub fn sample_positions(&self, n: usize, seed: u64, component: u64) -> Vec<f64> {
        (0..n)
            .map(|i| {
                let key =
                    NoiseStreamKey::new(seed, StreamRole::Init, component, (i >> 2) as i64);
                let u = u64_to_unit(key.words()[i & 3]);
                self.quantile(u)
            })
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use proptest::prelude::*;

    fn grid() -> GridSpec {
        GridSpec::new(-8.0, 8.0, 2048).unwrap()
    }

    #[test]
    fn single_point_particles_make_a_spike() {
        let d = GridDensity::from_particles(&[1.0; 500], grid(), EstimatorMethod::Histogram).unwrap();
        assert_relative_eq!(d.mass(), 1.0, epsilon = 1e-10);
        let j = grid().cell_of(1.0).unwrap();
        assert_relative_eq!(d.values()[j] * d.dx(), 1.0, epsilon = 1e-12);
    }

    #[test]
    fn histogram_converges_to_normal() {
        // Expected L1 noise floor sqrt(2/(pi N dx)) int sqrt(p) ~ 0.007 here.
        let g = GridSpec::new(-8.0, 8.0, 256).unwrap();
        let init = InitialCondition::Gaussian { mean: 0.0, variance: 1.0 };
        let xs = init.sample_positions(1_000_000, 7, 0);
        let d = GridDensity::from_particles(&xs, g, EstimatorMethod::Histogram).unwrap();
        let exact = GridDensity::gaussian(g, 0.0, 1.0).unwrap();
        assert!(d.l1_distance(&exact).unwrap() < 0.01);
    }

    #[test]
    fn kde_with_small_bandwidth_approaches_histogram() {
        let init = InitialCondition::Gaussian { mean: 0.0, variance: 1.0 };
        // snap to cell centres: a particle near a cell edge would split its
        // kernel mass between two cells at any bandwidth
        let g = grid();
        let xs: Vec<f64> = init
            .sample_positions(20_000, 9, 0)
            .into_iter()
            .map(|x| g.center(g.cell_of(x).unwrap()))
            .collect();
        let hist = GridDensity::from_particles(&xs, grid(), EstimatorMethod::Histogram).unwrap();
        let kde = GridDensity::from_particles(
            &xs,
            grid(),
            EstimatorMethod::GaussianKde { bandwidth: Some(1e-5) },
        )
        .unwrap();
        assert!(hist.l1_distance(&kde).unwrap() < 1e-6);
        // Silverman default smooths towards the underlying normal
        let smooth =
            GridDensity::from_particles(&xs, grid(), EstimatorMethod::GaussianKde { bandwidth: None })
                .unwrap();
        let exact = GridDensity::gaussian(grid(), 0.0, 1.0).unwrap();
        assert!(smooth.l1_distance(&exact).unwrap() < hist.l1_distance(&exact).unwrap());
    }

    #[test]
    fn out_of_range_mass_is_policed() {
        let mut xs = vec![0.0; 10_000];
        for x in xs.iter_mut().take(5) {
            *x = 100.0;
        }
        // 0.05% folds into the boundary cell
        assert!(GridDensity::from_particles(&xs, grid(), EstimatorMethod::Histogram).is_ok());
        for x in xs.iter_mut().take(20) {
            *x = 100.0;
        }
        // 0.2% is an error
        assert!(matches!(
            GridDensity::from_particles(&xs, grid(), EstimatorMethod::Histogram),
            Err(Error::OutOfRange { .. })
        ));
    }

    #[test]
    fn moments() {
        let sym = GridDensity::gaussian(grid(), 0.0, 0.5).unwrap();
        assert!(sym.mean().abs() < 1e-12);
        // cell averaging adds dx^2/12 to the variance
        let dx2 = grid().dx() * grid().dx();
        assert_relative_eq!(sym.variance(), 0.5 + dx2 / 12.0, max_relative = 1e-8);

        let uniform = GridDensity::from_fn(GridSpec::new(0.0, 1.0, 4096).unwrap(), |_| 1.0).unwrap();
        assert_relative_eq!(uniform.variance(), 1.0 / 12.0, max_relative = 1e-6);
    }

    #[test]
    fn l1_distance_cases() {
        let d = GridDensity::gaussian(grid(), 0.3, 1.0).unwrap();
        assert_eq!(d.l1_distance(&d).unwrap(), 0.0);

        let a = GridDensity::delta(grid(), -2.0).unwrap();
        let b = GridDensity::delta(grid(), 2.0).unwrap();
        assert_relative_eq!(a.l1_distance(&b).unwrap(), 2.0, epsilon = 1e-12);

        // Overlap of two unit normals with mean shift c: L1 = 2(2 Phi(c/2) - 1).
        let n0 = GridDensity::gaussian(grid(), 0.0, 1.0).unwrap();
        let n5 = GridDensity::gaussian(grid(), 0.5, 1.0).unwrap();
        let expected = 2.0 * (erf(0.25 / std::f64::consts::SQRT_2));
        assert_relative_eq!(n0.l1_distance(&n5).unwrap(), expected, epsilon = 1e-4);
    }

    #[test]
    fn wasserstein_cases() {
        let g = grid();
        let a = GridDensity::delta(g, 0.0).unwrap();
        let b = GridDensity::delta(g, 1.0).unwrap();
        assert_relative_eq!(a.wasserstein1(&b).unwrap(), 1.0, epsilon = 1e-2);

        let n0 = GridDensity::gaussian(g, 0.0, 1.0).unwrap();
        let n1 = GridDensity::gaussian(g, 1.0, 1.0).unwrap();
        assert_relative_eq!(n0.wasserstein1(&n1).unwrap(), 1.0, epsilon = 1e-3);

        let mismatch = GridDensity::gaussian(GridSpec::new(-8.0, 8.0, 1024).unwrap(), 0.0, 1.0).unwrap();
        assert!(n0.wasserstein1(&mismatch).is_err());
    }

    #[test]
    fn quantile_coupling_upper_bound_brackets_w1() {
        // cost f(r) = r reproduces W1 in the weighted norm exactly
        let g = grid();
        let sigma = 2.0;
        let a = GridDensity::gaussian(g, -0.7, 0.8).unwrap();
        let b = GridDensity::gaussian(g, 0.9, 1.3).unwrap();
        let w1s = a.wasserstein1(&b).unwrap() / sigma;
        let linear = a.coupling_cost_upper(&b, |r| r, sigma).unwrap();
        assert_relative_eq!(linear, w1s, max_relative = 1e-10);
        // a genuinely concave cost sits below the linear one
        let concave = a.coupling_cost_upper(&b, |r| 1.0 - (-r).exp(), sigma).unwrap();
        assert!(concave <= w1s + 1e-12);
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(32))]

        #[test]
        fn wasserstein_triangle_inequality(m1 in -2.0..2.0f64, m2 in -2.0..2.0, m3 in -2.0..2.0,
                                           v in 0.3..2.0f64) {
            let g = GridSpec::new(-10.0, 10.0, 512).unwrap();
            let a = GridDensity::gaussian(g, m1, v).unwrap();
            let b = GridDensity::gaussian(g, m2, 1.1 * v).unwrap();
            let c = GridDensity::gaussian(g, m3, 0.7 * v).unwrap();
            let ab = a.wasserstein1(&b).unwrap();
            let bc = b.wasserstein1(&c).unwrap();
            let ac = a.wasserstein1(&c).unwrap();
            prop_assert!(ac <= ab + bc + 1e-10 * (1.0 + ac.abs()));
        }

        #[test]
        fn translation_moves_w1_by_the_shift(shift in 0.05..2.0f64) {
            let g = GridSpec::new(-12.0, 12.0, 4096).unwrap();
            let a = GridDensity::gaussian(g, 0.0, 0.9).unwrap();
            let b = GridDensity::gaussian(g, shift, 0.9).unwrap();
            let w = a.wasserstein1(&b).unwrap();
            prop_assert!((w - shift).abs() < 2.0 * g.dx());
        }

        #[test]
        fn constructors_normalise(mean in -1.0..1.0f64, var in 0.2..2.0f64) {
            let g = GridSpec::new(-9.0, 9.0, 777).unwrap();
            let d = GridDensity::gaussian(g, mean, var).unwrap();
            prop_assert!((d.mass() - 1.0).abs() < 1e-8);
        }
    }
}
