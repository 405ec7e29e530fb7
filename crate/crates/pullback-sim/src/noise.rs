//! Two-sided Brownian sample paths for the common noise.
//!
//! A path is stored on a uniform grid anchored so that the value at time 0 is
//! exactly zero, and is piecewise linear between grid points. Increments come
//! from block-indexed counter streams (see [`crate::rng`]), with one block per
//! grid interval, so a path over a wider window restricted to a narrower one
//! is bit-identical to the path sampled on the narrow window directly. That
//! refinement property is what makes pullback limits well defined realisation
//! by realisation: pulling the start time further back never changes noise
//! that has already been seen.

use crate::error::{Error, Result};
use crate::rng::{normal_from_u64, NoiseStreamKey, StreamRole};
use std::io::{BufRead, Write};

/// Relative tolerance used to snap times onto the path grid.
const ALIGN_TOL: f64 = 1e-9;

/// Discretised two-sided Brownian path.
#[derive(Clone, Debug)]
pub struct BrownianPath {
    dt: f64,
    dim: usize,
    /// `values[j * dim + c]`; grid index j corresponds to time (j - anchor) dt.
    values: Vec<f64>,
    anchor: usize,
    seed: u64,
    /// Shifted paths keep consuming the original sub-streams: local block j
    /// maps to generator block `j + block_offset`.
    block_offset: i64,
    /// Imported paths lost their generator and cannot be extended.
    extendable: bool,
}

impl BrownianPath {
    /// Sample a path covering `[t_start, t_end]` with `t_start <= 0 <= t_end`.
    pub fn sample(seed: u64, dim: usize, t_start: f64, t_end: f64, dt: f64) -> Result<Self> {
        if !(dt > 0.0) || !dt.is_finite() {
            return Err(Error::InvalidParameter(format!("path dt must be positive, got {dt}")));
        }
        if dim == 0 {
            return Err(Error::InvalidParameter("path dimension must be >= 1".into()));
        }
        if t_start > 0.0 || t_end < 0.0 || t_end - t_start < dt * (1.0 - ALIGN_TOL) {
            return Err(Error::InvalidParameter(format!(
                "path window must satisfy t_start <= 0 <= t_end and span at least dt, got [{t_start}, {t_end}]"
            )));
        }
        let n_neg = blocks_covering(-t_start, dt);
        let n_pos = blocks_covering(t_end, dt);
        let n = n_neg + n_pos + 1;
        let mut path = BrownianPath {
            dt,
            dim,
            values: vec![0.0; n * dim],
            anchor: n_neg,
            seed,
            block_offset: 0,
            extendable: true,
        };
        path.fill_forward(n_neg, n_neg + n_pos);
        path.fill_backward(n_neg, 0);
        Ok(path)
    }

    /// Increment of component `c` over local grid interval `j` (from grid
    /// point j to j+1, in index units relative to the anchor).
    fn increment(&self, local_block: i64, c: usize) -> f64 {
        let block = local_block + self.block_offset;
        let key = NoiseStreamKey::new(self.seed, StreamRole::Common, c as u64, block);
        self.dt.sqrt() * normal_from_u64(key.words()[0])
    }

    /// Cumulative sums upward over grid indices `lo..hi`, seeded by the value
    /// already stored at `lo`. Increment block indices are anchor-relative.
    fn fill_forward(&mut self, lo: usize, hi: usize) {
        for j in lo..hi {
            let local = j as i64 - self.anchor as i64;
            for c in 0..self.dim {
                self.values[(j + 1) * self.dim + c] =
                    self.values[j * self.dim + c] + self.increment(local, c);
            }
        }
    }

    /// Cumulative sums downward over grid indices `lo..hi`, seeded by the
    /// value already stored at `hi`.
    fn fill_backward(&mut self, hi: usize, lo: usize) {
        for j in (lo..hi).rev() {
            let local = j as i64 - self.anchor as i64;
            for c in 0..self.dim {
                self.values[j * self.dim + c] =
                    self.values[(j + 1) * self.dim + c] - self.increment(local, c);
            }
        }
    }

    pub fn dt(&self) -> f64 {
        self.dt
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn t_start(&self) -> f64 {
        -(self.anchor as f64) * self.dt
    }

    pub fn t_end(&self) -> f64 {
        (self.n_points() - 1 - self.anchor) as f64 * self.dt
    }

    pub fn n_points(&self) -> usize {
        self.values.len() / self.dim
    }

    pub fn covers(&self, t: f64) -> bool {
        let slack = ALIGN_TOL * self.dt;
        t >= self.t_start() - slack && t <= self.t_end() + slack
    }

    fn window_error(&self, t: f64) -> Error {
        Error::PathWindow { t_start: self.t_start(), t_end: self.t_end(), t }
    }

    /// Value of component `c` at time `t`. Grid-aligned times return the
    /// stored value exactly; off-grid times are linearly interpolated.
    pub fn value_at(&self, t: f64, c: usize) -> Result<f64> {
        if !self.covers(t) {
            return Err(self.window_error(t));
        }
        let pos = t / self.dt + self.anchor as f64;
        let nearest = pos.round();
        if (pos - nearest).abs() < ALIGN_TOL {
            let j = (nearest as isize).clamp(0, self.n_points() as isize - 1) as usize;
            return Ok(self.values[j * self.dim + c]);
        }
        let j = pos.floor() as usize;
        let frac = pos - j as f64;
        let lo = self.values[j * self.dim + c];
        let hi = self.values[(j + 1) * self.dim + c];
        Ok(lo + frac * (hi - lo))
    }

    /// Value at a grid index measured relative to the anchor.
    pub fn value_at_index(&self, local: i64, c: usize) -> Result<f64> {
        let j = local + self.anchor as i64;
        if j < 0 || j >= self.n_points() as i64 {
            return Err(self.window_error(local as f64 * self.dt));
        }
        Ok(self.values[j as usize * self.dim + c])
    }

    /// Increments `beta(t_{n+1}) - beta(t_n)` over `n_steps` uniform steps of
    /// width `step_dt` starting at `t_from`, for all components
    /// (step-major layout).
    pub fn increments_over(&self, t_from: f64, n_steps: usize, step_dt: f64) -> Result<Vec<f64>> {
        let mut out = vec![0.0; n_steps * self.dim];
        for c in 0..self.dim {
            let mut prev = self.value_at(t_from, c)?;
            for (n, chunk) in out.chunks_exact_mut(self.dim).enumerate() {
                let t_next = t_from + (n as f64 + 1.0) * step_dt;
                let next = self.value_at(t_next, c)?;
                chunk[c] = next - prev;
                prev = next;
            }
        }
        Ok(out)
    }

    /// The Wiener shift: `(theta_t beta)(s) = beta(s + t) - beta(t)`,
    /// re-anchored so the shifted path is zero at its own time 0. The shift
    /// must be grid aligned.
    pub fn wiener_shift(&self, t: f64) -> Result<Self> {
        let steps = t / self.dt;
        let nearest = steps.round();
        if (steps - nearest).abs() > ALIGN_TOL {
            return Err(Error::GridAlignment { t, dt: self.dt });
        }
        let shift = nearest as i64;
        let new_anchor = self.anchor as i64 + shift;
        if new_anchor < 0 || new_anchor >= self.n_points() as i64 {
            return Err(self.window_error(t));
        }
        let new_anchor = new_anchor as usize;
        let mut values = self.values.clone();
        for c in 0..self.dim {
            let pivot = self.values[new_anchor * self.dim + c];
            for j in 0..self.n_points() {
                values[j * self.dim + c] -= pivot;
            }
        }
        Ok(BrownianPath {
            dt: self.dt,
            dim: self.dim,
            values,
            anchor: new_anchor,
            seed: self.seed,
            block_offset: self.block_offset + shift,
            extendable: self.extendable,
        })
    }

    /// Extend the window backwards by at least `extra_duration`, reusing the
    /// original negative-block sub-streams so every existing value is
    /// preserved bit for bit.
    pub fn extend_backwards(&self, extra_duration: f64) -> Result<Self> {
        if !(extra_duration > 0.0) {
            return Err(Error::InvalidParameter(
                "backward extension must have positive duration".into(),
            ));
        }
        if !self.extendable {
            return Err(Error::InvalidParameter(
                "imported path carries no generator seed and cannot be extended".into(),
            ));
        }
        let extra = blocks_covering(extra_duration, self.dt);
        let mut values = vec![0.0; (self.n_points() + extra) * self.dim];
        values[extra * self.dim..].copy_from_slice(&self.values);
        let mut path = BrownianPath {
            dt: self.dt,
            dim: self.dim,
            values,
            anchor: self.anchor + extra,
            seed: self.seed,
            block_offset: self.block_offset,
            extendable: true,
        };
        path.fill_backward(extra, 0);
        Ok(path)
    }

    /// Extend backwards only as far as needed to cover time `t` (<= 0).
    pub fn ensure_covers(&self, t: f64) -> Result<Self> {
        if self.covers(t) {
            Ok(self.clone())
        } else {
            self.extend_backwards(self.t_start() - t)
        }
    }

    /// Write `t, b0[, b1, ...]` rows; the header comment keeps the generator
    /// metadata so a re-imported path stays extendable.
    pub fn to_csv<W: Write>(&self, mut w: W) -> Result<()> {
        writeln!(w, "# seed={} dt={:.17e} block_offset={}", self.seed, self.dt, self.block_offset)?;
        write!(w, "t")?;
        for c in 0..self.dim {
            write!(w, ",b{c}")?;
        }
        writeln!(w)?;
        for j in 0..self.n_points() {
            let t = (j as i64 - self.anchor as i64) as f64 * self.dt;
            write!(w, "{t:.17e}")?;
            for c in 0..self.dim {
                write!(w, ",{:.17e}", self.values[j * self.dim + c])?;
            }
            writeln!(w)?;
        }
        Ok(())
    }

    /// Parse a path written by [`BrownianPath::to_csv`] (or by another
    /// implementation using the same `t, value...` layout).
    pub fn from_csv<R: BufRead>(reader: R) -> Result<Self> {
        let mut seed = None;
        let mut block_offset = 0i64;
        let mut times: Vec<f64> = Vec::new();
        let mut values: Vec<f64> = Vec::new();
        let mut dim = 0usize;
        for line in reader.lines() {
            let line = line?;
            let line = line.trim();
            if line.is_empty() {
                continue;
            }
            if let Some(meta) = line.strip_prefix('#') {
                for tok in meta.split_whitespace() {
                    if let Some(v) = tok.strip_prefix("seed=") {
                        seed = v.parse::<u64>().ok();
                    } else if let Some(v) = tok.strip_prefix("block_offset=") {
                        block_offset = v.parse::<i64>().unwrap_or(0);
                    }
                }
                continue;
            }
            if line.starts_with('t') {
                continue; // header row
            }
            let fields: Vec<&str> = line.split(',').collect();
            if fields.len() < 2 {
                return Err(Error::Config(format!("malformed path row: '{line}'")));
            }
            if dim == 0 {
                dim = fields.len() - 1;
            } else if fields.len() - 1 != dim {
                return Err(Error::Config("inconsistent column count in path CSV".into()));
            }
            let parse = |s: &str| {
                s.trim()
                    .parse::<f64>()
                    .map_err(|e| Error::Config(format!("bad number '{s}' in path CSV: {e}")))
            };
            times.push(parse(fields[0])?);
            for f in &fields[1..] {
                values.push(parse(f)?);
            }
        }
        if times.len() < 2 {
            return Err(Error::Config("path CSV needs at least two rows".into()));
        }
        let dt = times[1] - times[0];
        if !(dt > 0.0) {
            return Err(Error::Config("path CSV times must be increasing".into()));
        }
        for w in times.windows(2) {
            if ((w[1] - w[0]) - dt).abs() > ALIGN_TOL * dt.max(1.0) {
                return Err(Error::Config("path CSV grid is not uniform".into()));
            }
        }
        let anchor = times
            .iter()
            .position(|t| t.abs() < 0.5 * dt)
            .ok_or_else(|| Error::Config("path CSV window does not contain time 0".into()))?;
        for c in 0..dim {
            if values[anchor * dim + c].abs() > 1e-12 {
                return Err(Error::Config("path value at time 0 must be 0".into()));
            }
        }
        Ok(BrownianPath {
            dt,
            dim,
            values,
            anchor,
            seed: seed.unwrap_or(0),
            block_offset,
            extendable: seed.is_some(),
        })
    }
}

/// Number of whole grid blocks needed to cover `span` (with snapping).
fn blocks_covering(span: f64, dt: f64) -> usize {
    let raw = span / dt;
    let snapped = raw.round();
    if (raw - snapped).abs() < ALIGN_TOL * (1.0 + raw.abs()) {
        snapped as usize
    } else {
        raw.ceil() as usize
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn anchored_at_zero_and_deterministic() {
        let p = BrownianPath::sample(7, 1, -2.0, 3.0, 0.01).unwrap();
        assert_eq!(p.value_at(0.0, 0).unwrap(), 0.0);
        let q = BrownianPath::sample(7, 1, -2.0, 3.0, 0.01).unwrap();
        assert_eq!(p.values, q.values);
        let r = BrownianPath::sample(8, 1, -2.0, 3.0, 0.01).unwrap();
        assert_ne!(p.values, r.values);
    }

    #[test]
    fn increment_variance_matches_gaussian_law() {
        let dt = 0.01;
        let n_keys = 10_000;
        let mut sum = 0.0;
        let mut sum2 = 0.0;
        for seed in 0..n_keys {
            let p = BrownianPath::sample(seed, 1, 0.0, dt, dt).unwrap();
            let inc = p.value_at(dt, 0).unwrap();
            sum += inc;
            sum2 += inc * inc;
        }
        let var = sum2 / n_keys as f64 - (sum / n_keys as f64).powi(2);
        assert!((var - dt).abs() < 0.05 * dt, "variance {var} vs {dt}");
    }

    #[test]
    fn refinement_consistency() {
        // Window restriction is bit-exact: the pullback limit sees one fixed
        // realisation regardless of how far back it reaches.
        let wide = BrownianPath::sample(3, 1, -8.0, 2.0, 0.05).unwrap();
        let narrow = BrownianPath::sample(3, 1, -2.0, 2.0, 0.05).unwrap();
        for j in -40..=40i64 {
            assert_eq!(
                wide.value_at_index(j, 0).unwrap(),
                narrow.value_at_index(j, 0).unwrap()
            );
        }
    }

    #[test]
    fn extension_preserves_existing_values() {
        let p = BrownianPath::sample(11, 1, -1.0, 1.0, 0.01).unwrap();
        let e = p.extend_backwards(3.0).unwrap();
        assert!(e.t_start() <= -4.0 + 1e-12);
        for j in -100..=100i64 {
            assert_eq!(p.value_at_index(j, 0).unwrap(), e.value_at_index(j, 0).unwrap());
        }
        // Two successive extensions equal one combined extension.
        let two = p.extend_backwards(1.5).unwrap().extend_backwards(1.5).unwrap();
        let one = p.extend_backwards(3.0).unwrap();
        assert_eq!(two.values, one.values);

        // Extended segment increments still have the right variance.
        let far = p.extend_backwards(200.0).unwrap();
        let mut sum2 = 0.0;
        let n = 20_000;
        for j in 0..n {
            let a = far.value_at_index(-(j as i64) - 1, 0).unwrap();
            let b = far.value_at_index(-(j as i64), 0).unwrap();
            sum2 += (b - a) * (b - a);
        }
        let var = sum2 / n as f64;
        assert!((var - 0.01).abs() < 0.05 * 0.01, "variance {var}");
    }

    #[test]
    fn wiener_shift_identities() {
        let p = BrownianPath::sample(5, 1, -4.0, 4.0, 0.02).unwrap();
        let id = p.wiener_shift(0.0).unwrap();
        assert_eq!(p.values, id.values);

        let s = p.wiener_shift(1.0).unwrap();
        assert_eq!(s.value_at(0.0, 0).unwrap(), 0.0);
        // (theta_t beta)(s) = beta(s + t) - beta(t) on the grid
        for j in -50..=50i64 {
            let lhs = s.value_at_index(j, 0).unwrap();
            let rhs = p.value_at_index(j + 50, 0).unwrap() - p.value_at_index(50, 0).unwrap();
            assert!((lhs - rhs).abs() < 1e-12);
        }
        // Flow property theta_t . theta_s = theta_{t+s}
        let a = p.wiener_shift(0.5).unwrap().wiener_shift(1.0).unwrap();
        let b = p.wiener_shift(1.5).unwrap();
        for j in -20..=20i64 {
            assert!((a.value_at_index(j, 0).unwrap() - b.value_at_index(j, 0).unwrap()).abs() < 1e-12);
        }
        // Shifted paths extend consistently with the unshifted realisation.
        let se = s.extend_backwards(2.0).unwrap();
        for j in -150..=-101i64 {
            let lhs = se.value_at_index(j, 0).unwrap();
            let rhs = p.value_at_index(j + 50, 0).unwrap() - p.value_at_index(50, 0).unwrap();
            assert!((lhs - rhs).abs() < 1e-12);
        }
    }

    #[test]
    fn off_grid_evaluation_is_linear() {
        let p = BrownianPath::sample(9, 1, -1.0, 1.0, 0.1).unwrap();
        let a = p.value_at(0.2, 0).unwrap();
        let b = p.value_at(0.3, 0).unwrap();
        let mid = p.value_at(0.25, 0).unwrap();
        assert!((mid - 0.5 * (a + b)).abs() < 1e-14);
        assert!(p.value_at(1.2, 0).is_err());
    }

    #[test]
    fn csv_round_trip() {
        let p = BrownianPath::sample(21, 2, -0.5, 0.5, 0.05).unwrap();
        let mut buf = Vec::new();
        p.to_csv(&mut buf).unwrap();
        let q = BrownianPath::from_csv(buf.as_slice()).unwrap();
        assert_eq!(p.values, q.values);
        assert_eq!(p.anchor, q.anchor);
        assert_eq!(p.seed, q.seed);
        assert!(q.extend_backwards(1.0).is_ok());
    }

    proptest! {
        #[test]
        fn restriction_always_consistent(seed in 0u64..1000, tau1 in 1u32..8, extra in 1u32..8) {
            let dt = 0.125;
            let tau1 = tau1 as f64;
            let tau2 = tau1 + extra as f64;
            let narrow = BrownianPath::sample(seed, 1, -tau1, 1.0, dt).unwrap();
            let wide = BrownianPath::sample(seed, 1, -tau2, 1.0, dt).unwrap();
            let lo = (-tau1 / dt).round() as i64;
            for j in lo..=8 {
                prop_assert_eq!(
                    narrow.value_at_index(j, 0).unwrap(),
                    wide.value_at_index(j, 0).unwrap()
                );
            }
        }
    }
}
